//! Compact smooth domains through their oriented distance function.
//!
//! A domain `K` is exposed via the signed distance to its boundary,
//!
//! ```text
//! b_K(x) = dist(x, dK)   inside,    0 on dK,    -dist(x, dK) outside,
//! ```
//!
//! together with its gradient, Hessian and the nearest-boundary projection.
//! All derivative queries are restricted to the tube `{ |b_K| < eps0 }`
//! where `b_K` inherits the boundary's regularity; inside the tube the
//! gradient is the unit inward direction (`grad b = -n` at the projection,
//! with `n` the outward unit normal) and `|grad b| = 1` (eikonal property).
//!
//! Shipped instances: balls (closed forms), ellipsoids (Newton projection on
//! the Lagrange-multiplier equation plus curvature-based Hessians), and the
//! inner approximations `Q_i = { b_K >= 1/i }` that exhaust the interior.
//! Domains are immutable and all queries are pure.

mod barrier;

pub use barrier::{Barrier, BarrierValues};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::rng::CounterRng;

pub trait SmoothDomain: Send + Sync {
    fn dim(&self) -> usize;

    /// Width `eps0` of the tube `{ |b| < eps0 }` on which derivative queries
    /// are admissible.
    fn tube_width(&self) -> f64;

    /// The oriented distance `b_K(x)`: positive inside, zero on the
    /// boundary, negative outside.
    fn oriented_distance(&self, x: &[f64]) -> f64;

    /// `grad b_K(x)`; requires `|b(x)| < eps0`.
    fn grad_b(&self, x: &[f64]) -> Result<DVector<f64>>;

    /// `hess b_K(x)` (symmetric); requires `|b(x)| < eps0`.
    fn hess_b(&self, x: &[f64]) -> Result<DMatrix<f64>>;

    /// The unique nearest boundary point; requires `|b(x)| < eps0`.
    fn project_boundary(&self, x: &[f64]) -> Result<DVector<f64>>;

    /// A witness point in the deep interior.
    fn interior_point(&self) -> DVector<f64>;

    /// An axis-aligned box containing the domain, for rejection sampling.
    fn bounding_box(&self) -> (DVector<f64>, DVector<f64>);

    /// A random boundary point; draws from `rng` at counters
    /// `counter_base, counter_base + 1, ...`.
    fn random_boundary_point(&self, rng: &CounterRng, counter_base: u64) -> DVector<f64>;

    fn describe(&self) -> String;
}

fn require_tube(b: f64, eps0: f64) -> Result<()> {
    // Inclusive at the rim: the closed tube still has the regularity the
    // open-tube statement guarantees for the domains shipped here.
    if b.abs() <= eps0 {
        Ok(())
    } else {
        Err(CoreError::OutsideTube {
            b_abs: b.abs(),
            eps0,
        })
    }
}

fn gaussian_direction(rng: &CounterRng, counter_base: u64, dim: usize) -> DVector<f64> {
    let mut base = counter_base;
    loop {
        let g = DVector::from_fn(dim, |i, _| rng.normal(base + i as u64));
        let n = g.norm();
        if n > 1e-6 {
            return g / n;
        }
        base += dim as u64;
    }
}

/// A ball `{ |x - c| <= R }`; every geometric quantity is in closed form.
#[derive(Debug, Clone)]
pub struct BallDomain {
    center: DVector<f64>,
    radius: f64,
    tube_width: f64,
}

impl BallDomain {
    /// `tube_width` defaults to `R/2` and must stay below `R` so queries
    /// never reach the center, where the distance is not differentiable.
    pub fn new(center: Vec<f64>, radius: f64, tube_width: Option<f64>) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(CoreError::InvalidConfig(format!("ball radius {radius} must be positive")));
        }
        let tube = tube_width.unwrap_or(radius / 2.0);
        if !(tube > 0.0 && tube < radius) {
            return Err(CoreError::InvalidConfig(format!(
                "tube width {tube} must lie in (0, {radius})"
            )));
        }
        Ok(BallDomain {
            center: DVector::from_vec(center),
            radius,
            tube_width: tube,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    fn radial(&self, x: &[f64]) -> (f64, DVector<f64>) {
        let d = DVector::from_column_slice(x) - &self.center;
        (d.norm(), d)
    }
}

impl SmoothDomain for BallDomain {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn tube_width(&self) -> f64 {
        self.tube_width
    }

    fn oriented_distance(&self, x: &[f64]) -> f64 {
        self.radius - self.radial(x).0
    }

    fn grad_b(&self, x: &[f64]) -> Result<DVector<f64>> {
        let (r, d) = self.radial(x);
        require_tube(self.radius - r, self.tube_width)?;
        Ok(-d / r)
    }

    fn hess_b(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let (r, d) = self.radial(x);
        require_tube(self.radius - r, self.tube_width)?;
        let u = d / r;
        let n = self.dim();
        let mut h = DMatrix::identity(n, n);
        h -= &u * u.transpose();
        Ok(h / -r)
    }

    fn project_boundary(&self, x: &[f64]) -> Result<DVector<f64>> {
        let (r, d) = self.radial(x);
        require_tube(self.radius - r, self.tube_width)?;
        Ok(&self.center + d * (self.radius / r))
    }

    fn interior_point(&self) -> DVector<f64> {
        self.center.clone()
    }

    fn bounding_box(&self) -> (DVector<f64>, DVector<f64>) {
        let r = DVector::from_element(self.dim(), self.radius);
        (&self.center - &r, &self.center + &r)
    }

    fn random_boundary_point(&self, rng: &CounterRng, counter_base: u64) -> DVector<f64> {
        let u = gaussian_direction(rng, counter_base, self.dim());
        &self.center + u * self.radius
    }

    fn describe(&self) -> String {
        format!("ball{{center={:?}, radius={}}}", self.center.as_slice(), self.radius)
    }
}

/// An ellipsoid `{ sum ((x_i - c_i)/a_i)^2 <= 1 }`.
///
/// Projection solves the Lagrange-multiplier equation
/// `y_i = c_i + (x_i - c_i) a_i^2 / (a_i^2 + lam)` by a bracketed Newton
/// iteration on `lam`; the oriented distance, gradient and Hessian are then
/// derived from the projection and the boundary curvature.
#[derive(Debug, Clone)]
pub struct EllipsoidDomain {
    center: DVector<f64>,
    semi_axes: DVector<f64>,
    tube_width: f64,
}

const PROJECTION_TOL: f64 = 1e-13;
const PROJECTION_MAX_ITERS: usize = 100;

impl EllipsoidDomain {
    /// `tube_width` defaults to half the reach lower bound
    /// `(min a_i)^2 / max a_i`.
    pub fn new(center: Vec<f64>, semi_axes: Vec<f64>, tube_width: Option<f64>) -> Result<Self> {
        if semi_axes.len() != center.len() {
            return Err(CoreError::DimensionMismatch {
                expected: center.len(),
                got: semi_axes.len(),
            });
        }
        if !semi_axes.iter().all(|a| *a > 0.0) {
            return Err(CoreError::InvalidConfig("semi-axes must be positive".into()));
        }
        let a_min = semi_axes.iter().cloned().fold(f64::INFINITY, f64::min);
        let a_max = semi_axes.iter().cloned().fold(0.0, f64::max);
        let reach = a_min * a_min / a_max;
        let tube = tube_width.unwrap_or(0.5 * reach);
        if !(tube > 0.0 && tube <= reach) {
            return Err(CoreError::InvalidConfig(format!(
                "tube width {tube} must lie in (0, {reach}] (reach bound)"
            )));
        }
        Ok(EllipsoidDomain {
            center: DVector::from_vec(center),
            semi_axes: DVector::from_vec(semi_axes),
            tube_width: tube,
        })
    }

    fn level(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.center.iter())
            .zip(self.semi_axes.iter())
            .map(|((xi, ci), ai)| {
                let u = (xi - ci) / ai;
                u * u
            })
            .sum::<f64>()
            - 1.0
    }

    /// Solve for the multiplier `lam` in the projection equations.
    fn project_multiplier(&self, x: &[f64]) -> Result<f64> {
        let n = self.dim();
        let dx: Vec<f64> = (0..n).map(|i| x[i] - self.center[i]).collect();
        let a2: Vec<f64> = (0..n).map(|i| self.semi_axes[i] * self.semi_axes[i]).collect();
        let g = |lam: f64| -> f64 {
            (0..n)
                .map(|i| {
                    let w = dx[i] * self.semi_axes[i] / (a2[i] + lam);
                    w * w
                })
                .sum::<f64>()
                - 1.0
        };
        let g_prime = |lam: f64| -> f64 {
            (0..n)
                .map(|i| {
                    let num = dx[i] * self.semi_axes[i];
                    -2.0 * num * num / (a2[i] + lam).powi(3)
                })
                .sum::<f64>()
        };

        // Radial scaling guess: y = c + t* (x - c) lands on the boundary;
        // matching a single effective axis gives lam0 = a_eff^2 (1/t* - 1).
        let s: f64 = (0..n).map(|i| (dx[i] / self.semi_axes[i]).powi(2)).sum();
        if s == 0.0 {
            return Err(CoreError::Precondition(
                "projection undefined at the ellipsoid center".into(),
            ));
        }
        let t_star = 1.0 / s.sqrt();
        let num: f64 = (0..n).map(|i| (dx[i] * self.semi_axes[i]).powi(2)).sum();
        let den: f64 = (0..n).map(|i| dx[i] * dx[i]).sum();
        let a_eff2 = num / den;
        let mut lam = a_eff2 * (1.0 / t_star - 1.0);

        // Bracket: g is decreasing in lam on (-min a_i^2, inf).
        let a2_min = a2.iter().cloned().fold(f64::INFINITY, f64::min);
        let (mut lo, mut hi);
        if g(0.0) >= 0.0 {
            // On or outside: lam >= 0.
            lo = 0.0;
            hi = lam.max(1.0);
            let mut iters = 0;
            while g(hi) > 0.0 {
                hi *= 2.0;
                iters += 1;
                if iters > 200 {
                    return Err(CoreError::ProjectionFailed {
                        iters,
                        residual: g(hi),
                    });
                }
            }
        } else {
            // Inside: lam in (-min a_i^2, 0).
            lo = -a2_min * (1.0 - 1e-12);
            hi = 0.0;
        }
        if !(lam > lo && lam < hi) {
            lam = 0.5 * (lo + hi);
        }

        for _ in 0..PROJECTION_MAX_ITERS {
            let val = g(lam);
            if val.abs() <= PROJECTION_TOL {
                return Ok(lam);
            }
            if val > 0.0 {
                lo = lam;
            } else {
                hi = lam;
            }
            let slope = g_prime(lam);
            let mut next = if slope != 0.0 { lam - val / slope } else { lam };
            // Backtrack into the bracket when Newton overshoots.
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            lam = next;
        }
        Err(CoreError::ProjectionFailed {
            iters: PROJECTION_MAX_ITERS,
            residual: g(lam),
        })
    }

    fn project_unchecked(&self, x: &[f64]) -> Result<DVector<f64>> {
        let lam = self.project_multiplier(x)?;
        let n = self.dim();
        Ok(DVector::from_fn(n, |i, _| {
            let a2 = self.semi_axes[i] * self.semi_axes[i];
            self.center[i] + (x[i] - self.center[i]) * a2 / (a2 + lam)
        }))
    }

    fn signed_distance(&self, x: &[f64]) -> Result<f64> {
        let y = self.project_unchecked(x)?;
        let d = (DVector::from_column_slice(x) - &y).norm();
        Ok(if self.level(x) <= 0.0 { d } else { -d })
    }

    /// Outward unit normal at a boundary point.
    fn outward_normal(&self, y: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let g = DVector::from_fn(n, |i, _| {
            2.0 * (y[i] - self.center[i]) / (self.semi_axes[i] * self.semi_axes[i])
        });
        let norm = g.norm();
        g / norm
    }
}

impl SmoothDomain for EllipsoidDomain {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn tube_width(&self) -> f64 {
        self.tube_width
    }

    fn oriented_distance(&self, x: &[f64]) -> f64 {
        // Far queries only need a sign and a rough magnitude; the Newton
        // projection is reliable well beyond the tube for points that are
        // not near the medial axis, and the level set provides the sign.
        self.signed_distance(x).unwrap_or_else(|_| {
            let lv = self.level(x);
            let a_min = self.semi_axes.min();
            if lv <= 0.0 {
                a_min * (1.0 - (lv + 1.0).max(0.0).sqrt())
            } else {
                -a_min * ((lv + 1.0).sqrt() - 1.0)
            }
        })
    }

    fn grad_b(&self, x: &[f64]) -> Result<DVector<f64>> {
        let b = self.signed_distance(x)?;
        require_tube(b, self.tube_width)?;
        let y = self.project_unchecked(x)?;
        Ok(-self.outward_normal(&y))
    }

    fn hess_b(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let b = self.signed_distance(x)?;
        require_tube(b, self.tube_width)?;
        let y = self.project_unchecked(x)?;
        let nrm = self.outward_normal(&y);
        let n = self.dim();
        // Shape operator of the boundary in ambient coordinates:
        // A = P (hess h / |grad h|) P with h the quadratic level function.
        let grad_h_norm = DVector::from_fn(n, |i, _| {
            2.0 * (y[i] - self.center[i]) / (self.semi_axes[i] * self.semi_axes[i])
        })
        .norm();
        let p = DMatrix::identity(n, n) - &nrm * nrm.transpose();
        let hess_h_scaled = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                2.0 / (self.semi_axes[i] * self.semi_axes[i]) / grad_h_norm
            } else {
                0.0
            }
        });
        let a = &p * hess_h_scaled * &p;
        // hess b = -A (I - b A)^{-1}, extended by zero on the normal line.
        let m = DMatrix::identity(n, n) - &a * b;
        let x_sol = m.lu().solve(&a).ok_or(CoreError::ProjectionFailed {
            iters: 0,
            residual: f64::NAN,
        })?;
        let h = -x_sol;
        Ok((&h + h.transpose()) * 0.5)
    }

    fn project_boundary(&self, x: &[f64]) -> Result<DVector<f64>> {
        let b = self.signed_distance(x)?;
        require_tube(b, self.tube_width)?;
        self.project_unchecked(x)
    }

    fn interior_point(&self) -> DVector<f64> {
        self.center.clone()
    }

    fn bounding_box(&self) -> (DVector<f64>, DVector<f64>) {
        (&self.center - &self.semi_axes, &self.center + &self.semi_axes)
    }

    fn random_boundary_point(&self, rng: &CounterRng, counter_base: u64) -> DVector<f64> {
        let u = gaussian_direction(rng, counter_base, self.dim());
        DVector::from_fn(self.dim(), |i, _| self.center[i] + self.semi_axes[i] * u[i])
    }

    fn describe(&self) -> String {
        format!(
            "ellipsoid{{center={:?}, semi_axes={:?}}}",
            self.center.as_slice(),
            self.semi_axes.as_slice()
        )
    }
}

/// The inner approximation `Q_i = { x in K : b_K(x) >= 1/i }`, exposed via
/// the shifted oriented distance `b_Q = b_K - 1/i`. The parent's derivatives
/// carry over unchanged on the common tube.
pub struct InnerDomain {
    parent: Arc<dyn SmoothDomain>,
    offset: f64,
}

/// Build `Q_i`; requires `1/i < eps0` so `Q_i` is itself a smooth compact
/// domain with nonempty interior.
pub fn inner_domain(parent: Arc<dyn SmoothDomain>, i: u32) -> Result<InnerDomain> {
    if i == 0 {
        return Err(CoreError::Precondition("inner index must be >= 1".into()));
    }
    let offset = 1.0 / f64::from(i);
    if offset >= parent.tube_width() {
        return Err(CoreError::Precondition(format!(
            "1/i = {offset} must be below the tube width {}",
            parent.tube_width()
        )));
    }
    let witness_b = parent.oriented_distance(parent.interior_point().as_slice());
    if witness_b <= offset {
        return Err(CoreError::Precondition(format!(
            "interior witness has b = {witness_b}, not inside Q_i (offset {offset})"
        )));
    }
    Ok(InnerDomain { parent, offset })
}

impl InnerDomain {
    pub fn offset(&self) -> f64 {
        self.offset
    }
}

impl SmoothDomain for InnerDomain {
    fn dim(&self) -> usize {
        self.parent.dim()
    }

    fn tube_width(&self) -> f64 {
        self.parent.tube_width() - self.offset
    }

    fn oriented_distance(&self, x: &[f64]) -> f64 {
        self.parent.oriented_distance(x) - self.offset
    }

    fn grad_b(&self, x: &[f64]) -> Result<DVector<f64>> {
        require_tube(self.oriented_distance(x), self.tube_width())?;
        self.parent.grad_b(x)
    }

    fn hess_b(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        require_tube(self.oriented_distance(x), self.tube_width())?;
        self.parent.hess_b(x)
    }

    fn project_boundary(&self, x: &[f64]) -> Result<DVector<f64>> {
        let b_q = self.oriented_distance(x);
        require_tube(b_q, self.tube_width())?;
        // Slide along the normal line to the level set { b_K = offset }.
        let g = self.parent.grad_b(x)?;
        Ok(DVector::from_column_slice(x) - g * b_q)
    }

    fn interior_point(&self) -> DVector<f64> {
        self.parent.interior_point()
    }

    fn bounding_box(&self) -> (DVector<f64>, DVector<f64>) {
        self.parent.bounding_box()
    }

    fn random_boundary_point(&self, rng: &CounterRng, counter_base: u64) -> DVector<f64> {
        let y = self.parent.random_boundary_point(rng, counter_base);
        let g = self.parent.grad_b(y.as_slice()).expect("boundary point lies in the tube");
        y + g * self.offset
    }

    fn describe(&self) -> String {
        format!("inner{{offset={}, parent={}}}", self.offset, self.parent.describe())
    }
}

/// Report of [`check_regularity`].
#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub n_boundary: usize,
    pub n_tube: usize,
    pub boundary_grad_norm_min: f64,
    pub boundary_grad_norm_max: f64,
    pub boundary_projection_residual_max: f64,
    pub tube_grad_norm_min: f64,
    pub tube_grad_norm_max: f64,
    pub hess_lipschitz_estimate: f64,
    pub passed: bool,
}

const EIKONAL_TOL: f64 = 1e-8;

/// Sample boundary and tube points and verify the unit-gradient property.
/// `|grad b| = 1` at a boundary point means the generalized gradient there
/// is a singleton unit vector, so `0` cannot lie in its convex hull; the
/// tangency condition below is therefore non-degenerate. Also estimates the
/// Lipschitz constant of the Hessian over tube sample pairs. Report-only.
pub fn check_regularity(
    domain: &dyn SmoothDomain,
    n_boundary: usize,
    n_tube: usize,
    seed: u64,
) -> RegularityReport {
    let rng = CounterRng::new(seed, 0);
    let mut b_min = f64::INFINITY;
    let mut b_max: f64 = 0.0;
    let mut proj_res: f64 = 0.0;
    for k in 0..n_boundary {
        let y = domain.random_boundary_point(&rng, (k as u64) << 8);
        if let Ok(g) = domain.grad_b(y.as_slice()) {
            b_min = b_min.min(g.norm());
            b_max = b_max.max(g.norm());
        }
        proj_res = proj_res.max(domain.oriented_distance(y.as_slice()).abs());
    }

    // Tube points: boundary samples pushed inward/outward by random offsets.
    let eps0 = domain.tube_width();
    let mut t_min = f64::INFINITY;
    let mut t_max: f64 = 0.0;
    let mut hess_lip: f64 = 0.0;
    let mut prev: Option<(DVector<f64>, DMatrix<f64>)> = None;
    let rng_t = CounterRng::new(seed, 1);
    for k in 0..n_tube {
        let base = (k as u64) << 8;
        let y = domain.random_boundary_point(&rng_t, base);
        let g = match domain.grad_b(y.as_slice()) {
            Ok(g) => g,
            Err(_) => continue,
        };
        let depth = eps0 * (1.8 * rng_t.uniform(base + 100) - 0.9);
        let x = &y + &g * depth;
        let (Ok(gx), Ok(hx)) = (domain.grad_b(x.as_slice()), domain.hess_b(x.as_slice())) else {
            continue;
        };
        t_min = t_min.min(gx.norm());
        t_max = t_max.max(gx.norm());
        if let Some((px, ph)) = prev.take() {
            let dx = (&x - &px).norm();
            if dx > 1e-9 {
                hess_lip = hess_lip.max((&hx - &ph).norm() / dx);
            }
        }
        prev = Some((x, hx));
    }

    let passed = (b_min - 1.0).abs() <= EIKONAL_TOL
        && (b_max - 1.0).abs() <= EIKONAL_TOL
        && (t_min - 1.0).abs() <= EIKONAL_TOL
        && (t_max - 1.0).abs() <= EIKONAL_TOL
        && proj_res <= 1e-8;
    RegularityReport {
        n_boundary,
        n_tube,
        boundary_grad_norm_min: b_min,
        boundary_grad_norm_max: b_max,
        boundary_projection_residual_max: proj_res,
        tube_grad_norm_min: t_min,
        tube_grad_norm_max: t_max,
        hess_lipschitz_estimate: hess_lip,
        passed,
    }
}

/// Rejection-sample a point with `b >= margin` from the bounding box;
/// falls back to the interior witness when acceptance is too rare.
pub fn sample_interior_point(
    domain: &dyn SmoothDomain,
    margin: f64,
    rng: &CounterRng,
    counter_base: u64,
) -> DVector<f64> {
    let (lo, hi) = domain.bounding_box();
    let dim = domain.dim();
    for attempt in 0..256u64 {
        let x = DVector::from_fn(dim, |i, _| {
            let u = rng.uniform(counter_base + attempt * dim as u64 + i as u64);
            lo[i] + (hi[i] - lo[i]) * u
        });
        if domain.oriented_distance(x.as_slice()) >= margin {
            return x;
        }
    }
    domain.interior_point()
}

/// Pull `x` toward the interior witness until `b >= margin` (bisection on
/// the segment; exact enough for the star-shaped domains shipped here).
pub fn clamp_to_interior(domain: &dyn SmoothDomain, x: &DVector<f64>, margin: f64) -> DVector<f64> {
    if domain.oriented_distance(x.as_slice()) >= margin {
        return x.clone();
    }
    let w = domain.interior_point();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let y = &w + (x - &w) * mid;
        if domain.oriented_distance(y.as_slice()) >= margin {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    &w + (x - &w) * lo
}
