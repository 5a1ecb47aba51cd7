//! Experiment configuration: a single TOML document selecting a domain, a
//! coefficient pair from the catalog, simulation parameters and one check.
//! There is no expression language; coefficients come from the fixed catalog
//! with parameters, which keeps the checker's trusted surface small.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use viab_core::domains::{BallDomain, EllipsoidDomain, SmoothDomain};
use viab_core::sde::catalog::{drift_from_name, sigma_from_name, CatalogCoefficients};
use viab_core::sde::SimConfig;
use viab_core::viability::{BoundarySamplerConfig, ConditionCheckConfig, ConditionTolerances};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("{0}")]
    Core(#[from] viab_core::CoreError),
}

fn invalid(field: &str, message: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub kind: String,
    pub center: Vec<f64>,
    pub radius: Option<f64>,
    pub semi_axes: Option<Vec<f64>>,
    pub tube_width: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub drift: String,
    pub lambda: Option<f64>,
    pub m: Option<Vec<f64>>,
    pub sigma: String,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub dt: f64,
    pub horizons: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub store_increments: bool,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub kind: String,
    /// condition_ii: boundary-path history lengths.
    pub times: Option<Vec<f64>>,
    pub n_per_time: Option<usize>,
    pub cross_check_samples: Option<usize>,
    /// exit / supermartingale / roundtrip: the start point.
    pub start: Option<Vec<f64>>,
    pub exit_epsilon: Option<f64>,
    pub closure_pullbacks: Option<Vec<f64>>,
    /// lyapunov.
    pub lyapunov_t: Option<f64>,
    pub samples_per_level: Option<usize>,
    /// supermartingale.
    pub inner_index: Option<u32>,
    pub checkpoints: Option<Vec<f64>>,
    pub m_hat: Option<f64>,
    /// ito_verify.
    pub functional: Option<String>,
    pub dt_ladder: Option<Vec<f64>>,
    pub n_seeds: Option<usize>,
    pub ito_horizon: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    pub tangency_base: Option<f64>,
    pub generator: Option<f64>,
    pub borderline_factor: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<String>,
    #[serde(default)]
    pub dump_trajectories: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub coefficients: CoefficientSpec,
    pub sim: SimSpec,
    pub check: CheckSpec,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

pub const CHECK_KINDS: &[&str] = &[
    "condition_ii",
    "exit",
    "lyapunov",
    "supermartingale",
    "roundtrip",
    "ito_verify",
];

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<(ExperimentConfig, String), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        cfg.validate()?;
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let hash = hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<String>();
        Ok((cfg, hash))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let dim = self.domain.center.len();
        if dim == 0 {
            return Err(invalid("domain.center", "must be nonempty"));
        }
        match self.domain.kind.as_str() {
            "ball" => {
                if self.domain.radius.is_none() {
                    return Err(invalid("domain.radius", "required for kind = \"ball\""));
                }
            }
            "ellipsoid" => {
                let axes = self
                    .domain
                    .semi_axes
                    .as_ref()
                    .ok_or_else(|| invalid("domain.semi_axes", "required for kind = \"ellipsoid\""))?;
                if axes.len() != dim {
                    return Err(invalid(
                        "domain.semi_axes",
                        format!("expected {dim} entries, got {}", axes.len()),
                    ));
                }
            }
            other => {
                return Err(invalid(
                    "domain.kind",
                    format!("unknown kind `{other}` (ball | ellipsoid)"),
                ))
            }
        }
        if !(self.sim.dt > 0.0) {
            return Err(invalid("sim.dt", "must be positive"));
        }
        if self.sim.horizons.is_empty() {
            return Err(invalid("sim.horizons", "must list at least one horizon"));
        }
        if self.sim.horizons.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("sim.horizons", "must be nondecreasing"));
        }
        if self.sim.n_paths == 0 {
            return Err(invalid("sim.n_paths", "must be >= 1"));
        }
        if !CHECK_KINDS.contains(&self.check.kind.as_str()) {
            return Err(invalid(
                "check.kind",
                format!("unknown check `{}` ({CHECK_KINDS:?})", self.check.kind),
            ));
        }
        if self.check.kind == "ito_verify" {
            let ladder = self
                .check
                .dt_ladder
                .as_ref()
                .ok_or_else(|| invalid("check.dt_ladder", "required for ito_verify"))?;
            if ladder.len() < 3 {
                return Err(invalid(
                    "check.dt_ladder",
                    format!("needs at least 3 rungs, got {}", ladder.len()),
                ));
            }
            if ladder.windows(2).any(|w| w[1] >= w[0]) {
                return Err(invalid("check.dt_ladder", "must be strictly decreasing"));
            }
        }
        if let Some(start) = &self.check.start {
            if start.len() != dim {
                return Err(invalid(
                    "check.start",
                    format!("expected {dim} coordinates, got {}", start.len()),
                ));
            }
        }
        Ok(())
    }

    pub fn build_domain(&self) -> Result<Arc<dyn SmoothDomain>, ConfigError> {
        let d: Arc<dyn SmoothDomain> = match self.domain.kind.as_str() {
            "ball" => Arc::new(BallDomain::new(
                self.domain.center.clone(),
                self.domain.radius.unwrap(),
                self.domain.tube_width,
            )?),
            "ellipsoid" => Arc::new(EllipsoidDomain::new(
                self.domain.center.clone(),
                self.domain.semi_axes.clone().unwrap(),
                self.domain.tube_width,
            )?),
            _ => unreachable!("validated"),
        };
        Ok(d)
    }

    pub fn build_coefficients(&self) -> Result<CatalogCoefficients, ConfigError> {
        let dim = self.domain.center.len();
        let drift = drift_from_name(
            &self.coefficients.drift,
            self.coefficients.lambda,
            self.coefficients.m.clone(),
            dim,
        )?;
        let sigma = sigma_from_name(&self.coefficients.sigma, self.coefficients.c)?;
        Ok(CatalogCoefficients::new(drift, sigma, dim)?)
    }

    /// Simulation config at the largest horizon; `seed_override` is the
    /// `--seed` flag.
    pub fn sim_config(&self, seed_override: Option<u64>) -> SimConfig {
        SimConfig {
            dt: self.sim.dt,
            horizon: *self.sim.horizons.last().unwrap(),
            seed: seed_override.unwrap_or(self.sim.seed),
            n_paths: self.sim.n_paths,
            store_increments: self.sim.store_increments,
        }
    }

    pub fn tolerances(&self) -> ConditionTolerances {
        let d = ConditionTolerances::default();
        ConditionTolerances {
            tangency_base: self.tolerances.tangency_base.unwrap_or(d.tangency_base),
            generator: self.tolerances.generator.unwrap_or(d.generator),
            borderline_factor: self
                .tolerances
                .borderline_factor
                .unwrap_or(d.borderline_factor),
        }
    }

    pub fn condition_config(&self, seed: u64) -> ConditionCheckConfig {
        let d = ConditionCheckConfig::default();
        ConditionCheckConfig {
            times: self.check.times.clone().unwrap_or(d.times),
            n_per_time: self.check.n_per_time.unwrap_or(d.n_per_time),
            tolerances: self.tolerances(),
            seed,
            cross_check_samples: self.check.cross_check_samples.unwrap_or(0),
            sampler: BoundarySamplerConfig::default(),
        }
    }

    /// The start point for simulation-backed checks; defaults to the
    /// interior witness.
    pub fn start_point(&self, domain: &Arc<dyn SmoothDomain>) -> Vec<f64> {
        self.check
            .start
            .clone()
            .unwrap_or_else(|| domain.interior_point().as_slice().to_vec())
    }
}
