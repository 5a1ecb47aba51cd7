//! The built-in coefficient catalog, addressable by name from configs.
//!
//! Drifts:
//! - `constant_drift{m}`:      mu(x) = m
//! - `linear_drift{lambda}`:   mu(x) = -lambda * x(t)
//! - `running_avg_drift{lambda}`: mu(x) = -lambda * (1/t) int_0^t x(s) ds,
//!   with the t = 0 value defined as -lambda * x(0)
//!
//! Diffusions:
//! - `iso_sigma{c}`:           sigma = c * I (d = n)
//! - `rot_tangent_sigma{c}`:   sigma = c * rot90(x(t))  (2-D, d = 1)
//! - `path_scaled_rot_sigma{c}`: sigma = c * (1 + min(1, sup|x|)) * rot90(x(t))
//!   (2-D, d = 1; path-dependent and still tangent to circles around the origin)
//!
//! `rot90` rotates by a quarter turn: `(x, y) -> (-y, x)`, which is orthogonal
//! to `(x, y)` exactly, including in floating point.
//!
//! `path_scaled_rot_sigma` is Lipschitz on bounded path sets only; the
//! declared constant is the bound valid for paths staying in the unit ball,
//! which is the regime every shipped experiment runs it in.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};
use crate::sde::{Coefficients, PathHistory};

#[derive(Debug, Clone)]
pub enum DriftKind {
    Constant { m: DVector<f64> },
    Linear { lambda: f64 },
    RunningAvg { lambda: f64 },
}

impl DriftKind {
    fn eval(&self, past: &PathHistory<'_>) -> DVector<f64> {
        match self {
            DriftKind::Constant { m } => m.clone(),
            DriftKind::Linear { lambda } => {
                -*lambda * DVector::from_column_slice(past.endpoint())
            }
            DriftKind::RunningAvg { lambda } => -*lambda * past.time_average(),
        }
    }

    fn lipschitz(&self) -> f64 {
        match self {
            DriftKind::Constant { .. } => 0.0,
            DriftKind::Linear { lambda } | DriftKind::RunningAvg { lambda } => lambda.abs(),
        }
    }

    fn growth(&self) -> f64 {
        match self {
            DriftKind::Constant { m } => m.norm(),
            DriftKind::Linear { lambda } | DriftKind::RunningAvg { lambda } => lambda.abs(),
        }
    }

    fn describe(&self) -> String {
        match self {
            DriftKind::Constant { m } => format!("constant_drift{{m={:?}}}", m.as_slice()),
            DriftKind::Linear { lambda } => format!("linear_drift{{lambda={lambda}}}"),
            DriftKind::RunningAvg { lambda } => format!("running_avg_drift{{lambda={lambda}}}"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum SigmaKind {
    Iso { c: f64 },
    RotTangent { c: f64 },
    PathScaledRot { c: f64 },
}

fn rot90(x: &[f64]) -> [f64; 2] {
    [-x[1], x[0]]
}

impl SigmaKind {
    fn eval(&self, past: &PathHistory<'_>, n: usize) -> DMatrix<f64> {
        match self {
            SigmaKind::Iso { c } => DMatrix::identity(n, n) * *c,
            SigmaKind::RotTangent { c } => {
                let r = rot90(past.endpoint());
                DMatrix::from_column_slice(2, 1, &[c * r[0], c * r[1]])
            }
            SigmaKind::PathScaledRot { c } => {
                let scale = c * (1.0 + past.sup_norm().min(1.0));
                let r = rot90(past.endpoint());
                DMatrix::from_column_slice(2, 1, &[scale * r[0], scale * r[1]])
            }
        }
    }

    fn brownian_dim(&self, n: usize) -> usize {
        match self {
            SigmaKind::Iso { .. } => n,
            SigmaKind::RotTangent { .. } | SigmaKind::PathScaledRot { .. } => 1,
        }
    }

    fn lipschitz(&self) -> f64 {
        match self {
            SigmaKind::Iso { .. } => 0.0,
            SigmaKind::RotTangent { c } => c.abs(),
            // On paths with sup|x| <= 1: |d(scale)| <= c |d sup| and scale <= 2c.
            SigmaKind::PathScaledRot { c } => 3.0 * c.abs(),
        }
    }

    fn growth(&self, n: usize) -> f64 {
        match self {
            SigmaKind::Iso { c } => c.abs() * (n as f64).sqrt(),
            SigmaKind::RotTangent { c } => c.abs(),
            SigmaKind::PathScaledRot { c } => 2.0 * c.abs(),
        }
    }

    fn describe(&self) -> String {
        match self {
            SigmaKind::Iso { c } => format!("iso_sigma{{c={c}}}"),
            SigmaKind::RotTangent { c } => format!("rot_tangent_sigma{{c={c}}}"),
            SigmaKind::PathScaledRot { c } => format!("path_scaled_rot_sigma{{c={c}}}"),
        }
    }
}

/// A drift/diffusion pair from the catalog.
#[derive(Debug, Clone)]
pub struct CatalogCoefficients {
    drift: DriftKind,
    sigma: SigmaKind,
    dim: usize,
}

impl CatalogCoefficients {
    pub fn new(drift: DriftKind, sigma: SigmaKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(CoreError::InvalidConfig("state dimension must be >= 1".into()));
        }
        if matches!(
            sigma,
            SigmaKind::RotTangent { .. } | SigmaKind::PathScaledRot { .. }
        ) && dim != 2
        {
            return Err(CoreError::InvalidConfig(format!(
                "{} requires a 2-D state, got {dim}-D",
                sigma.describe()
            )));
        }
        if let DriftKind::Constant { m } = &drift {
            if m.len() != dim {
                return Err(CoreError::DimensionMismatch {
                    expected: dim,
                    got: m.len(),
                });
            }
        }
        Ok(CatalogCoefficients { drift, sigma, dim })
    }
}

impl Coefficients for CatalogCoefficients {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn brownian_dim(&self) -> usize {
        self.sigma.brownian_dim(self.dim)
    }

    fn drift(&self, past: &PathHistory<'_>) -> DVector<f64> {
        self.drift.eval(past)
    }

    fn diffusion(&self, past: &PathHistory<'_>) -> DMatrix<f64> {
        self.sigma.eval(past, self.dim)
    }

    fn declared_lipschitz(&self) -> f64 {
        self.drift.lipschitz() + self.sigma.lipschitz()
    }

    fn declared_growth(&self) -> f64 {
        self.drift.growth() + self.sigma.growth(self.dim)
    }

    fn describe(&self) -> String {
        format!("mu={}, sigma={}", self.drift.describe(), self.sigma.describe())
    }
}

pub const DRIFT_NAMES: &[&str] = &["constant_drift", "linear_drift", "running_avg_drift"];
pub const SIGMA_NAMES: &[&str] = &["iso_sigma", "rot_tangent_sigma", "path_scaled_rot_sigma"];

pub fn drift_from_name(name: &str, lambda: Option<f64>, m: Option<Vec<f64>>, dim: usize) -> Result<DriftKind> {
    let need_lambda = |kind: &str| {
        lambda.ok_or_else(|| {
            CoreError::InvalidConfig(format!("drift `{kind}` requires parameter `lambda`"))
        })
    };
    match name {
        "constant_drift" => {
            let m = m.unwrap_or_else(|| vec![0.0; dim]);
            if m.len() != dim {
                return Err(CoreError::DimensionMismatch {
                    expected: dim,
                    got: m.len(),
                });
            }
            Ok(DriftKind::Constant {
                m: DVector::from_vec(m),
            })
        }
        "linear_drift" => Ok(DriftKind::Linear {
            lambda: need_lambda("linear_drift")?,
        }),
        "running_avg_drift" => Ok(DriftKind::RunningAvg {
            lambda: need_lambda("running_avg_drift")?,
        }),
        other => Err(CoreError::InvalidConfig(format!(
            "unknown drift `{other}` (catalog: {DRIFT_NAMES:?})"
        ))),
    }
}

pub fn sigma_from_name(name: &str, c: Option<f64>) -> Result<SigmaKind> {
    let c = c.ok_or_else(|| {
        CoreError::InvalidConfig(format!("diffusion `{name}` requires parameter `c`"))
    })?;
    match name {
        "iso_sigma" => Ok(SigmaKind::Iso { c }),
        "rot_tangent_sigma" => Ok(SigmaKind::RotTangent { c }),
        "path_scaled_rot_sigma" => Ok(SigmaKind::PathScaledRot { c }),
        other => Err(CoreError::InvalidConfig(format!(
            "unknown diffusion `{other}` (catalog: {SIGMA_NAMES:?})"
        ))),
    }
}
