//! The log-barrier built on the oriented distance.
//!
//! `g` is a `C^2` monotone clamp of `b_K`: it equals `b_K` below the level
//! `l (1 - delta)`, plateaus at the constant `l` above `l (1 + delta)`, and
//! the two regimes are joined by a monotone quintic blend. The clamp level
//! `l = min(eps0 / (1 + delta), 1)` keeps the whole blend zone inside the
//! regular tube (so `grad b` / `hess b` are available wherever they are
//! needed) and keeps `g <= 1` without any rescaling that would break the
//! exact identity `g = b_K` near the boundary. Then
//!
//! ```text
//! Psi(x_t) = -log g(x_t(t)),
//! ```
//!
//! which is finite on the open interior, blows up as the state approaches
//! the boundary, and has `grad Psi = -grad b / b`,
//! `hess Psi = -hess b / b + grad b grad b^T / b^2` on the identity zone.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};
use crate::domains::SmoothDomain;

/// Blend polynomial `q(u) = u - u^3 + u^4/2` on `[0, 1]`:
/// `q(0) = 0, q'(0) = 1, q''(0) = 0, q(1) = 1/2, q'(1) = 0, q''(1) = 0`,
/// and `q'(u) = (1-u)^2 (1+2u) >= 0`, so the clamp is monotone and C^2.
fn blend(u: f64) -> (f64, f64, f64) {
    let q = u - u.powi(3) + 0.5 * u.powi(4);
    let dq = 1.0 - 3.0 * u * u + 2.0 * u.powi(3);
    let ddq = -6.0 * u + 6.0 * u * u;
    (q, dq, ddq)
}

/// The barrier pair `(g, Psi = -log g)` over a smooth domain.
pub struct Barrier {
    domain: Arc<dyn SmoothDomain>,
    clamp_level: f64,
    blend_delta: f64,
}

/// Barrier data at one point: both the clamp `g` and `Psi = -log g` with
/// their first two derivatives.
#[derive(Debug, Clone)]
pub struct BarrierValues {
    pub g: f64,
    pub psi: f64,
    pub grad_g: DVector<f64>,
    pub hess_g: DMatrix<f64>,
    pub grad_psi: DVector<f64>,
    pub hess_psi: DMatrix<f64>,
}

impl Barrier {
    pub const DEFAULT_BLEND_DELTA: f64 = 0.25;

    pub fn new(domain: Arc<dyn SmoothDomain>) -> Self {
        Barrier::with_blend(domain, Self::DEFAULT_BLEND_DELTA)
    }

    pub fn with_blend(domain: Arc<dyn SmoothDomain>, blend_delta: f64) -> Self {
        assert!(blend_delta > 0.0 && blend_delta < 1.0);
        let clamp_level = (domain.tube_width() / (1.0 + blend_delta)).min(1.0);
        Barrier {
            domain,
            clamp_level,
            blend_delta,
        }
    }

    pub fn domain(&self) -> &Arc<dyn SmoothDomain> {
        &self.domain
    }

    /// `g = b_K` exactly for `b_K <= identity_level()`.
    pub fn identity_level(&self) -> f64 {
        self.clamp_level * (1.0 - self.blend_delta)
    }

    /// `g = clamp_level()` exactly for `b_K >= plateau_level()`.
    pub fn plateau_level(&self) -> f64 {
        self.clamp_level * (1.0 + self.blend_delta)
    }

    pub fn clamp_level(&self) -> f64 {
        self.clamp_level
    }

    /// The clamp `phi(b)` and its first two derivatives in `b`.
    fn clamp(&self, b: f64) -> (f64, f64, f64) {
        let lo = self.identity_level();
        let hi = self.plateau_level();
        if b <= lo {
            (b, 1.0, 0.0)
        } else if b >= hi {
            (self.clamp_level, 0.0, 0.0)
        } else {
            let w = hi - lo;
            let (q, dq, ddq) = blend((b - lo) / w);
            (lo + w * q, dq, ddq / w)
        }
    }

    /// `g(x)`; total on all of `R^n` (negative outside the domain).
    pub fn g(&self, x: &[f64]) -> f64 {
        self.clamp(self.domain.oriented_distance(x)).0
    }

    /// `Psi(x) = -log g(x)`; defined only on the open interior.
    pub fn psi(&self, x: &[f64]) -> Result<f64> {
        let b = self.domain.oriented_distance(x);
        if b <= 0.0 {
            return Err(CoreError::Precondition(format!(
                "Psi undefined at b = {b:.3e} (outside the open domain)"
            )));
        }
        Ok(-self.clamp(b).0.ln())
    }

    /// `(g, Psi, grad Psi, hess Psi)` at an interior point.
    ///
    /// On the plateau the derivatives of `g` vanish identically and no
    /// distance derivatives are required; elsewhere the point lies inside
    /// the regular tube by construction of the clamp level.
    pub fn values(&self, x: &[f64]) -> Result<BarrierValues> {
        let b = self.domain.oriented_distance(x);
        if b <= 0.0 {
            return Err(CoreError::Precondition(format!(
                "Psi undefined at b = {b:.3e} (outside the open domain)"
            )));
        }
        let (g, dphi, ddphi) = self.clamp(b);
        let psi = -g.ln();
        let n = self.domain.dim();
        if dphi == 0.0 && ddphi == 0.0 {
            return Ok(BarrierValues {
                g,
                psi,
                grad_g: DVector::zeros(n),
                hess_g: DMatrix::zeros(n, n),
                grad_psi: DVector::zeros(n),
                hess_psi: DMatrix::zeros(n, n),
            });
        }
        let gb = self.domain.grad_b(x)?;
        let hb = self.domain.hess_b(x)?;
        let grad_g = &gb * dphi;
        let hess_g = &gb * gb.transpose() * ddphi + hb * dphi;
        let grad_psi = &grad_g * (-1.0 / g);
        let hess_psi = &hess_g * (-1.0 / g) + &grad_g * grad_g.transpose() / (g * g);
        Ok(BarrierValues {
            g,
            psi,
            grad_g,
            hess_g,
            grad_psi,
            hess_psi,
        })
    }
}
