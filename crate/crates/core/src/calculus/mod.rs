//! Non-anticipative functionals and their pathwise derivatives.
//!
//! A functional `F = (F_t)` acts on pairs `(x_t, v_t)` of a state path and a
//! matrix-valued second argument, both restricted to `[0, t]`. Two
//! directional derivatives are realized by finite differences:
//!
//! ```text
//! horizontal:  D_t F = lim_{h->0+} [F_{t+h}(x_{t,h}, v_{t,h}) - F_t(x, v)] / h
//! vertical:    d_i F = lim_{h->0}  [F_t(x^{h e_i}, v) - F_t(x, v)] / h
//! ```
//!
//! The horizontal limit is one-sided, so it is discretized by forward
//! differences on a geometric ladder of extensions with Richardson
//! extrapolation to `h = 0`. The vertical derivatives use central divided
//! differences over the *realized* bumped endpoints: the denominators are
//! the actually-achieved coordinate displacements, which makes coordinate
//! projections and endpoint-affine maps differentiate exactly in floating
//! point. That exactness is what lets the functional Ito residual vanish
//! identically on the identity functional.
//!
//! For `F_t(x, v) = f(t, x(t))` these derivatives reduce to the classical
//! `d_t f` and `grad_y f`, which is what the oracle tests pin down.
//!
//! Functionals are pure; derivative evaluations on distinct pairs can run
//! concurrently.

pub mod catalog;

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};
use crate::paths::PathPair;
use crate::sde::{Coefficients, PathHistory, Trajectory};

/// A non-anticipative functional on path pairs.
///
/// `eval` receives a pair already restricted to its final time; the
/// non-anticipativity contract is enforced structurally by [`evaluate_at`],
/// which restricts before evaluating. Implementations flagged
/// `predictable_in_v` must not look at the final value of the second
/// argument (they see `v_{t-}`); [`predictability_residual`] probes that.
///
/// [`evaluate_at`]: PathFunctional::evaluate_at
pub trait PathFunctional: Send + Sync {
    fn name(&self) -> &str;

    /// Asserts predictable dependence on the second argument.
    fn predictable_in_v(&self) -> bool {
        true
    }

    /// Evaluate `F_t(x_t, v_t)` with `t = pair.t_end()`.
    fn eval(&self, pair: &PathPair) -> Result<f64>;

    /// Non-anticipative evaluation at an earlier time: restrict, then eval.
    fn evaluate_at(&self, pair: &PathPair, t: f64) -> Result<f64> {
        self.eval(&pair.restrict(t)?)
    }
}

/// Finite-difference discretization of the derivative limits.
#[derive(Debug, Clone)]
pub struct FdScheme {
    /// Vertical first-difference step.
    pub bump_size: f64,
    /// Vertical second-difference step (larger, to beat cancellation in h^2).
    pub hessian_bump: f64,
    /// Smallest and largest horizontal extension.
    pub h_min: f64,
    pub h_max: f64,
    /// Number of geometric extension steps fed to Richardson extrapolation.
    pub richardson_levels: usize,
}

impl FdScheme {
    /// Default scheme scaled to the path: bumps proportional to
    /// `1 + sup|x|` balance truncation against cancellation at double
    /// precision.
    pub fn default_for(pair: &PathPair) -> FdScheme {
        let scale = 1.0 + pair.x().sup_norm();
        FdScheme {
            bump_size: 1e-5 * scale,
            hessian_bump: 1e-4 * scale,
            h_min: 1e-4,
            h_max: 1e-2,
            richardson_levels: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bump_size > 0.0 && self.hessian_bump > 0.0) {
            return Err(CoreError::InvalidConfig("bump sizes must be positive".into()));
        }
        if !(0.0 < self.h_min && self.h_min <= self.h_max) {
            return Err(CoreError::InvalidConfig(
                "need 0 < h_min <= h_max for the horizontal ladder".into(),
            ));
        }
        if self.richardson_levels == 0 {
            return Err(CoreError::InvalidConfig("richardson_levels must be >= 1".into()));
        }
        Ok(())
    }

    fn horizontal_nodes(&self) -> Vec<f64> {
        let l = self.richardson_levels;
        if l == 1 || self.h_min == self.h_max {
            return vec![self.h_min];
        }
        let ratio = (self.h_min / self.h_max).powf(1.0 / (l - 1) as f64);
        (0..l).map(|j| self.h_max * ratio.powi(j as i32)).collect()
    }
}

/// All pathwise derivatives of a functional at one pair.
#[derive(Debug, Clone)]
pub struct DerivativeBundle {
    pub horizontal: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

fn check_finite(value: f64, context: &str, h: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(CoreError::NonFinite {
            context: context.into(),
            h,
        })
    }
}

/// Forward-difference horizontal derivative with Richardson extrapolation
/// over geometric extension steps in `[h_min, h_max]`.
pub fn horizontal_derivative(
    f: &dyn PathFunctional,
    pair: &PathPair,
    scheme: &FdScheme,
) -> Result<f64> {
    scheme.validate()?;
    let base = f.eval(pair)?;
    let nodes = scheme.horizontal_nodes();
    let mut table: Vec<f64> = Vec::with_capacity(nodes.len());
    for &h in &nodes {
        let extended = pair.horizontal_extend(h)?;
        let d = (f.eval(&extended)? - base) / h;
        table.push(check_finite(d, &format!("horizontal derivative of {}", f.name()), h)?);
    }
    // Neville extrapolation of the difference quotients to h = 0.
    let l = nodes.len();
    for k in 1..l {
        for j in (k..l).rev() {
            table[j] = (nodes[j - k] * table[j] - nodes[j] * table[j - 1])
                / (nodes[j - k] - nodes[j]);
        }
    }
    check_finite(table[l - 1], "horizontal Richardson table", *nodes.last().unwrap())
}

/// Central-difference vertical gradient. Each component divides by the
/// realized displacement of the bumped endpoint coordinate, so affine
/// endpoint maps differentiate exactly.
pub fn vertical_gradient(
    f: &dyn PathFunctional,
    pair: &PathPair,
    scheme: &FdScheme,
) -> Result<DVector<f64>> {
    scheme.validate()?;
    let n = pair.state_dim();
    let h = scheme.bump_size;
    let mut grad = DVector::zeros(n);
    let mut e = vec![0.0; n];
    for i in 0..n {
        e[i] = h;
        let plus = pair.vertical_bump(&e)?;
        e[i] = -h;
        let minus = pair.vertical_bump(&e)?;
        e[i] = 0.0;
        let width = plus.x().final_value()[i] - minus.x().final_value()[i];
        let d = (f.eval(&plus)? - f.eval(&minus)?) / width;
        grad[i] = check_finite(d, &format!("vertical gradient of {}", f.name()), h)?;
    }
    Ok(grad)
}

/// Second-order vertical derivatives: three-point divided differences on the
/// diagonal, a four-point stencil off the diagonal. The stencil for `(i, j)`
/// and `(j, i)` is the same four evaluations, so the result is symmetric by
/// construction.
pub fn vertical_hessian(
    f: &dyn PathFunctional,
    pair: &PathPair,
    scheme: &FdScheme,
) -> Result<DMatrix<f64>> {
    scheme.validate()?;
    let n = pair.state_dim();
    let h = scheme.hessian_bump;
    let base = f.eval(pair)?;
    let x0 = pair.x().final_value().to_vec();
    let mut hess = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let ctx = |i: usize, j: usize| format!("vertical hessian ({i},{j}) of {}", f.name());

    for i in 0..n {
        e[i] = h;
        let plus = pair.vertical_bump(&e)?;
        e[i] = -h;
        let minus = pair.vertical_bump(&e)?;
        e[i] = 0.0;
        let xp = plus.x().final_value()[i];
        let xm = minus.x().final_value()[i];
        // Second divided difference over the realized nodes xm < x0 < xp.
        let fwd = (f.eval(&plus)? - base) / (xp - x0[i]);
        let bwd = (base - f.eval(&minus)?) / (x0[i] - xm);
        let d = 2.0 * (fwd - bwd) / (xp - xm);
        hess[(i, i)] = check_finite(d, &ctx(i, i), h)?;
    }

    for i in 0..n {
        for j in (i + 1)..n {
            let mut bump = |si: f64, sj: f64| -> Result<(f64, f64, f64)> {
                e[i] = si * h;
                e[j] = sj * h;
                let bumped = pair.vertical_bump(&e)?;
                e[i] = 0.0;
                e[j] = 0.0;
                let val = f.eval(&bumped)?;
                let fi = bumped.x().final_value()[i];
                let fj = bumped.x().final_value()[j];
                Ok((val, fi, fj))
            };
            let (fpp, xi_p, xj_p) = bump(1.0, 1.0)?;
            let (fpm, _, xj_m) = bump(1.0, -1.0)?;
            let (fmp, xi_m, _) = bump(-1.0, 1.0)?;
            let (fmm, _, _) = bump(-1.0, -1.0)?;
            let wi = xi_p - xi_m;
            let wj = xj_p - xj_m;
            let d = ((fpp - fpm) - (fmp - fmm)) / (wi * wj);
            let d = check_finite(d, &ctx(i, j), h)?;
            hess[(i, j)] = d;
            hess[(j, i)] = d;
        }
    }
    Ok(hess)
}

/// All three derivatives at one pair.
pub fn derivative_bundle(
    f: &dyn PathFunctional,
    pair: &PathPair,
    scheme: &FdScheme,
) -> Result<DerivativeBundle> {
    Ok(DerivativeBundle {
        horizontal: horizontal_derivative(f, pair, scheme)?,
        gradient: vertical_gradient(f, pair, scheme)?,
        hessian: vertical_hessian(f, pair, scheme)?,
    })
}

/// `|F(x, v) - F(x, v with final value replaced by its left limit)|`;
/// must stay at rounding level for functionals flagged predictable.
pub fn predictability_residual(f: &dyn PathFunctional, pair: &PathPair) -> Result<f64> {
    Ok((f.eval(pair)? - f.eval(&pair.with_predictable_v())?).abs())
}

pub(crate) fn trace_product(h: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    let n = h.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += h[(i, j)] * a[(j, i)];
        }
    }
    acc
}

/// Apply the path-functional generator
///
/// ```text
/// L F = D_t F + <grad F, mu(x_t)> + 1/2 Tr(hess F . sigma sigma*(x_t))
/// ```
///
/// at the full path `x_path`, with the second argument of `F` set to the
/// quadratic-variation density path `r -> sigma(x_r) sigma*(x_r)`.
pub fn generator_apply(
    f: &dyn PathFunctional,
    x_path: &crate::paths::CadlagPath,
    coeffs: &dyn Coefficients,
    scheme: &FdScheme,
) -> Result<f64> {
    let v = crate::sde::qv_density_path(x_path, coeffs)?;
    let n = x_path.dim();
    let a_end = DMatrix::from_row_slice(n, n, v.final_value());
    let pair = PathPair::new(x_path.clone(), v)?;
    let hist = PathHistory::from_path(x_path);
    let mu = coeffs.drift(&hist);
    let d = derivative_bundle(f, &pair, scheme)?;
    Ok(d.horizontal + d.gradient.dot(&mu) + 0.5 * trace_product(&d.hessian, &a_end))
}

/// Discrepancy between the two sides of the functional change-of-variable
/// formula along a simulated trajectory:
///
/// ```text
/// F_s(X_s, A_s) - F_t(X_t, A_t)
///   - int D_u F du  - 1/2 int Tr(hess F dA du)  - sum grad F . dX
/// ```
///
/// with left-point Riemann sums for the time integrals and a left-point Ito
/// sum for the stochastic integral (any other sampling point breaks the
/// martingale property being tested). All functional derivatives are
/// evaluated on restricted trajectory prefixes. The residual is accumulated
/// per step, so for the identity functional both sides telescope and the
/// result is exactly zero on every trajectory and grid.
pub fn ito_residual(
    f: &dyn PathFunctional,
    traj: &Trajectory,
    scheme: &FdScheme,
) -> Result<f64> {
    if traj.brownian_increments.is_none() {
        return Err(CoreError::MissingIncrements);
    }
    let n = traj.path.dim();
    let times = traj.path.times();
    let i0 = traj.start_index;

    // Growing prefix pair (the restriction to the current grid instant).
    let mut prefix = PathPair::new(
        traj.path.restrict(traj.start_time)?,
        traj.qv_density.restrict(traj.start_time)?,
    )?;
    let mut f_prev = f.eval(&prefix)?;

    let mut residual = 0.0;
    let mut delta = vec![0.0; n];
    for k in i0..times.len() - 1 {
        let horizontal = horizontal_derivative(f, &prefix, scheme)?;
        let grad = vertical_gradient(f, &prefix, scheme)?;
        let hess = vertical_hessian(f, &prefix, scheme)?;
        let a_k = DMatrix::from_row_slice(n, n, traj.qv_density.sample(k));
        let du = times[k + 1] - times[k];

        let x_now = traj.path.sample(k);
        let x_next = traj.path.sample(k + 1);
        for i in 0..n {
            delta[i] = x_next[i] - x_now[i];
        }
        let mut ito_term = 0.0;
        for i in 0..n {
            ito_term += grad[i] * delta[i];
        }

        prefix.push(times[k + 1], x_next, traj.qv_density.sample(k + 1));
        let f_next = f.eval(&prefix)?;

        residual += (f_next - f_prev)
            - horizontal * du
            - 0.5 * trace_product(&hess, &a_k) * du
            - ito_term;
        f_prev = f_next;
    }
    Ok(residual)
}
