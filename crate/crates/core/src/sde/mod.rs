//! Seeded Euler-Maruyama simulation of path-dependent SDEs.
//!
//! The state solves
//!
//! ```text
//! dX(r) = mu(X_r) dr + sigma(X_r) dW(r),    r > t,
//!  X(s) = chi(s),                           0 <= s <= t,
//! ```
//!
//! where both coefficients are functionals of the *entire* restricted path
//! `X_r`, not just the current state. The scheme is explicit Euler-Maruyama
//! on a uniform grid: at each step the coefficients see the step-function
//! skeleton of the trajectory so far (history followed by the simulated
//! prefix), and the quadratic-variation density `A(r) = sigma sigma*` is
//! recorded alongside the state.
//!
//! Randomness comes from a counter-based generator keyed by
//! `(seed, path index, step index)`, so ensembles are bit-reproducible under
//! any thread count and may run their paths concurrently.

pub mod catalog;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::paths::{euclidean_norm, CadlagPath};
use crate::rng::CounterRng;

/// The restricted past path handed to coefficient functionals, together with
/// running statistics that the coefficient catalog needs in O(1):
/// the sup norm over the grid and the exact left-sum integral
/// `int_0^t x(s) ds`. Both are plain functions of the path; the simulator
/// maintains them incrementally so that path-dependent coefficients do not
/// force a rescan of the whole history at every step.
pub struct PathHistory<'a> {
    path: &'a CadlagPath,
    sup_norm: f64,
    integral: DVector<f64>,
}

impl<'a> PathHistory<'a> {
    /// Compute the running statistics by a single scan of `path`.
    pub fn from_path(path: &'a CadlagPath) -> Self {
        let dim = path.dim();
        let mut integral = DVector::zeros(dim);
        for k in 0..path.len() - 1 {
            let w = path.times()[k + 1] - path.times()[k];
            for (slot, x) in integral.iter_mut().zip(path.sample(k)) {
                *slot += x * w;
            }
        }
        let sup_norm = path.sup_norm();
        PathHistory {
            path,
            sup_norm,
            integral,
        }
    }

    pub(crate) fn from_parts(path: &'a CadlagPath, sup_norm: f64, integral: DVector<f64>) -> Self {
        PathHistory {
            path,
            sup_norm,
            integral,
        }
    }

    /// The restricted path itself.
    pub fn path(&self) -> &CadlagPath {
        self.path
    }

    /// Final time of the restriction.
    pub fn t(&self) -> f64 {
        self.path.t_end()
    }

    /// Current state `x(t)`.
    pub fn endpoint(&self) -> &[f64] {
        self.path.final_value()
    }

    /// `sup_{0<=s<=t} |x(s)|`, exact on the grid.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// Exact step-path integral `int_0^t x(s) ds` (componentwise left sums).
    pub fn integral(&self) -> &DVector<f64> {
        &self.integral
    }

    /// `integral / t`; at `t = 0` defined as the endpoint value.
    pub fn time_average(&self) -> DVector<f64> {
        let t = self.t();
        if t == 0.0 {
            DVector::from_column_slice(self.endpoint())
        } else {
            &self.integral / t
        }
    }
}

/// Drift and diffusion as functionals of the restricted past path, with
/// declared Lipschitz and growth constants:
///
/// ```text
/// |mu(x) - mu(x')| + |sigma(x) - sigma(x')|_F <= C1 sup|x - x'|,
/// |mu(x)| + |sigma(x)|_F <= C2 (1 + sup|x|).
/// ```
///
/// The declared constants are contracts probed empirically by
/// [`lipschitz_probe`]; coefficients need not be smooth in any functional
/// sense, only measurable maps of the restriction, which the signature
/// enforces.
pub trait Coefficients: Send + Sync {
    fn state_dim(&self) -> usize;
    fn brownian_dim(&self) -> usize;
    /// Drift vector `mu(x_t)` in `R^n`.
    fn drift(&self, past: &PathHistory<'_>) -> DVector<f64>;
    /// Diffusion matrix `sigma(x_t)` in `R^{n x d}`.
    fn diffusion(&self, past: &PathHistory<'_>) -> DMatrix<f64>;
    fn declared_lipschitz(&self) -> f64;
    fn declared_growth(&self) -> f64;
    fn describe(&self) -> String;
}

/// Simulation parameters. The reference probability system is realized as a
/// seeded discrete Brownian increment stream.
#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub n_paths: usize,
    pub store_increments: bool,
}

impl SimConfig {
    pub fn validate(&self, t_start: f64) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(CoreError::InvalidConfig(format!("dt = {} must be positive", self.dt)));
        }
        if self.horizon <= t_start {
            return Err(CoreError::InvalidConfig(format!(
                "horizon {} must exceed start time {}",
                self.horizon, t_start
            )));
        }
        if self.dt > self.horizon - t_start {
            return Err(CoreError::InvalidConfig(format!(
                "dt = {} exceeds the simulation span {}",
                self.dt,
                self.horizon - t_start
            )));
        }
        if self.n_paths == 0 {
            return Err(CoreError::InvalidConfig("n_paths must be >= 1".into()));
        }
        Ok(())
    }

    fn n_steps(&self, t_start: f64) -> usize {
        ((self.horizon - t_start) / self.dt - 1e-9).ceil().max(1.0) as usize
    }
}

/// One simulated trajectory: the state path on `[0, horizon]` (including the
/// supplied initial history on `[0, t]`), the per-step Brownian increments
/// (already scaled by sqrt(dt)) when retained, and the quadratic-variation
/// density path `r -> sigma(X_r) sigma*(X_r)` on the same grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub path: CadlagPath,
    pub start_time: f64,
    /// Grid index of `start_time` in `path`.
    pub start_index: usize,
    pub brownian_increments: Option<Vec<DVector<f64>>>,
    pub qv_density: CadlagPath,
}

impl Trajectory {
    /// The quadratic-variation density at grid index `k`, as an `n x n` matrix.
    pub fn qv_at(&self, k: usize) -> DMatrix<f64> {
        let n = self.path.dim();
        DMatrix::from_row_slice(n, n, self.qv_density.sample(k))
    }
}

/// Outcome of a first-exit scan along a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct HittingResult {
    pub exited: bool,
    /// First grid instant with `b_K(X(s)) <= 0`; `+inf` when no exit occurred.
    pub tau: f64,
    /// Sub-grid refinement by linear interpolation of `b_K` between the
    /// bracketing grid points; equals `tau` when no exit occurred.
    pub tau_refined: f64,
    pub exit_point: Option<Vec<f64>>,
}

impl HittingResult {
    pub fn consistent(&self) -> bool {
        self.exited == self.tau.is_finite() && self.exited == self.exit_point.is_some()
    }
}

fn flatten_sym(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec() // row-major
}

/// Simulate one trajectory with the ensemble substream `stream`.
///
/// Bit-deterministic: the result is a pure function of
/// `(history, coeffs, config, stream)`.
pub fn simulate_with_stream(
    history: &CadlagPath,
    coeffs: &dyn Coefficients,
    config: &SimConfig,
    stream: u64,
) -> Result<Trajectory> {
    let n = coeffs.state_dim();
    let d = coeffs.brownian_dim();
    if history.dim() != n {
        return Err(CoreError::DimensionMismatch {
            expected: n,
            got: history.dim(),
        });
    }
    let t_start = history.t_end();
    config.validate(t_start)?;
    let n_steps = config.n_steps(t_start);
    let rng = CounterRng::new(config.seed, stream);
    let sqrt_dt = config.dt.sqrt();

    // Growing state path; starts as a copy of the history.
    let mut path = history.clone();
    let mut qv_times: Vec<f64> = Vec::with_capacity(history.len() + n_steps);
    let mut qv_data: Vec<f64> = Vec::with_capacity((history.len() + n_steps) * n * n);

    // Quadratic-variation density on the strict history prefixes.
    {
        let mut prefix = CadlagPath::from_flat(
            vec![history.times()[0]],
            history.sample(0).to_vec(),
            n,
        );
        let mut sup = euclidean_norm(history.sample(0));
        let mut integral = DVector::zeros(n);
        for j in 0..history.len().saturating_sub(1) {
            if j > 0 {
                let w = history.times()[j] - history.times()[j - 1];
                for (slot, x) in integral.iter_mut().zip(history.sample(j - 1)) {
                    *slot += x * w;
                }
                prefix.push(history.times()[j], history.sample(j));
                sup = sup.max(euclidean_norm(history.sample(j)));
            }
            let view = PathHistory::from_parts(&prefix, sup, integral.clone());
            let sigma = coeffs.diffusion(&view);
            qv_times.push(history.times()[j]);
            qv_data.extend_from_slice(&flatten_sym(&(&sigma * sigma.transpose())));
        }
    }

    // Running statistics of the full path (history included).
    let full_stats = PathHistory::from_path(history);
    let mut sup = full_stats.sup_norm;
    let mut integral = full_stats.integral;

    let mut increments: Option<Vec<DVector<f64>>> = if config.store_increments {
        Some(Vec::with_capacity(n_steps))
    } else {
        None
    };
    let mut dw = DVector::zeros(d);
    let mut next = vec![0.0; n];

    for k in 0..n_steps {
        let (mu, sigma) = {
            let view = PathHistory::from_parts(&path, sup, integral.clone());
            (coeffs.drift(&view), coeffs.diffusion(&view))
        };
        // Density at the current grid instant r_k.
        qv_times.push(path.t_end());
        qv_data.extend_from_slice(&flatten_sym(&(&sigma * sigma.transpose())));

        for j in 0..d {
            dw[j] = rng.normal(k as u64 * d as u64 + j as u64) * sqrt_dt;
        }

        let x = path.final_value();
        for i in 0..n {
            let mut xi = x[i] + mu[i] * config.dt;
            for j in 0..d {
                xi += sigma[(i, j)] * dw[j];
            }
            next[i] = xi;
        }
        let r_next = t_start + (k + 1) as f64 * config.dt;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(CoreError::SimulationBlowup {
                step: k,
                time: r_next,
            });
        }

        for (slot, x) in integral.iter_mut().zip(path.final_value()) {
            *slot += x * config.dt;
        }
        path.push(r_next, &next);
        sup = sup.max(euclidean_norm(&next));
        if let Some(ref mut incs) = increments {
            incs.push(dw.clone());
        }
    }

    // Density at the final grid instant.
    {
        let view = PathHistory::from_parts(&path, sup, integral.clone());
        let sigma = coeffs.diffusion(&view);
        qv_times.push(path.t_end());
        qv_data.extend_from_slice(&flatten_sym(&(&sigma * sigma.transpose())));
    }

    let start_index = history.len() - 1;
    Ok(Trajectory {
        qv_density: CadlagPath::from_flat(qv_times, qv_data, n * n),
        path,
        start_time: t_start,
        start_index,
        brownian_increments: increments,
    })
}

/// Simulate with the default substream 0 (what `ensemble` uses for path 0).
pub fn simulate(
    history: &CadlagPath,
    coeffs: &dyn Coefficients,
    config: &SimConfig,
) -> Result<Trajectory> {
    simulate_with_stream(history, coeffs, config, 0)
}

/// Variant stepping with externally supplied increments (already scaled to
/// the step size); used by coupled-grid convergence diagnostics.
pub fn simulate_with_increments(
    history: &CadlagPath,
    coeffs: &dyn Coefficients,
    dt: f64,
    increments: &[DVector<f64>],
) -> Result<Trajectory> {
    let config = SimConfig {
        dt,
        horizon: history.t_end() + dt * increments.len() as f64,
        seed: 0,
        n_paths: 1,
        store_increments: false,
    };
    let n = coeffs.state_dim();
    config.validate(history.t_end())?;
    let t_start = history.t_end();
    let mut path = history.clone();
    let mut sup;
    let mut integral;
    {
        let stats = PathHistory::from_path(history);
        sup = stats.sup_norm;
        integral = stats.integral;
    }
    let mut qv_times = Vec::new();
    let mut qv_data = Vec::new();
    let mut next = vec![0.0; n];
    for (k, dw) in increments.iter().enumerate() {
        let (mu, sigma) = {
            let view = PathHistory::from_parts(&path, sup, integral.clone());
            (coeffs.drift(&view), coeffs.diffusion(&view))
        };
        qv_times.push(path.t_end());
        qv_data.extend_from_slice(&flatten_sym(&(&sigma * sigma.transpose())));
        let x = path.final_value();
        for i in 0..n {
            let mut xi = x[i] + mu[i] * dt;
            for j in 0..dw.len() {
                xi += sigma[(i, j)] * dw[j];
            }
            next[i] = xi;
        }
        let r_next = t_start + (k + 1) as f64 * dt;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(CoreError::SimulationBlowup { step: k, time: r_next });
        }
        for (slot, x) in integral.iter_mut().zip(path.final_value()) {
            *slot += x * dt;
        }
        path.push(r_next, &next);
        sup = sup.max(euclidean_norm(&next));
    }
    {
        let view = PathHistory::from_parts(&path, sup, integral.clone());
        let sigma = coeffs.diffusion(&view);
        qv_times.push(path.t_end());
        qv_data.extend_from_slice(&flatten_sym(&(&sigma * sigma.transpose())));
    }
    let start_index = history.len() - 1;
    Ok(Trajectory {
        qv_density: CadlagPath::from_flat(qv_times, qv_data, n * n),
        path,
        start_time: t_start,
        start_index,
        brownian_increments: None,
    })
}

/// Simulate `config.n_paths` independent trajectories. Path `k` uses the
/// substream derived from `(config.seed, k)`, so the ensemble is independent
/// of execution order and parallelism width.
pub fn ensemble(
    history: &CadlagPath,
    coeffs: &dyn Coefficients,
    config: &SimConfig,
) -> Result<Vec<Trajectory>> {
    ensemble_map(history, coeffs, config, |_, traj| traj.clone())
}

/// Run the ensemble, mapping each trajectory to a reduced per-path result so
/// large ensembles never hold every path in memory. Results come back in
/// path order; per-path failures are aggregated with their indices.
pub fn ensemble_map<R: Send>(
    history: &CadlagPath,
    coeffs: &dyn Coefficients,
    config: &SimConfig,
    f: impl Fn(usize, &Trajectory) -> R + Sync,
) -> Result<Vec<R>> {
    config.validate(history.t_end())?;
    let results: Vec<std::result::Result<R, (usize, String)>> = (0..config.n_paths)
        .into_par_iter()
        .map(|k| {
            simulate_with_stream(history, coeffs, config, k as u64)
                .map(|traj| f(k, &traj))
                .map_err(|e| (k, e.to_string()))
        })
        .collect();
    let mut out = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(v) => out.push(v),
            Err(fail) => failures.push(fail),
        }
    }
    if let Some((k, msg)) = failures.first() {
        return Err(CoreError::Precondition(format!(
            "{} ensemble paths failed; first failure at path {k}: {msg}",
            failures.len()
        )));
    }
    Ok(out)
}

/// Cumulative quadratic variation `[X](s) = int_t^s A(r) dr` as a
/// matrix-valued path on the trajectory grid (zero on the history segment),
/// by exact left-point integration of the recorded density.
pub fn quadratic_variation(traj: &Trajectory) -> CadlagPath {
    let n = traj.path.dim();
    let nn = n * n;
    let times = traj.path.times();
    let mut data = vec![0.0; times.len() * nn];
    let mut acc = vec![0.0; nn];
    for k in (traj.start_index + 1)..times.len() {
        let w = times[k] - times[k - 1];
        let a = traj.qv_density.sample(k - 1);
        for (slot, aij) in acc.iter_mut().zip(a) {
            *slot += aij * w;
        }
        data[k * nn..(k + 1) * nn].copy_from_slice(&acc);
    }
    CadlagPath::from_flat(times.to_vec(), data, nn)
}

/// First exit of the trajectory from a domain: the first grid instant
/// `s >= start_time` with `b_K(X(s)) <= 0`.
///
/// The whole pre-start history must lie in the open interior. Exit detection
/// is grid-based; `tau_refined` interpolates the crossing linearly in `b_K`
/// between the bracketing grid points. There is no Brownian-bridge
/// correction, so boundary-grazing exits between grid points go undetected.
pub fn hitting_time(
    traj: &Trajectory,
    domain: &dyn crate::domains::SmoothDomain,
) -> Result<HittingResult> {
    let times = traj.path.times();
    let mut b_prev = f64::INFINITY;
    for k in 0..=traj.start_index {
        let b = domain.oriented_distance(traj.path.sample(k));
        if b <= 0.0 {
            return Err(CoreError::Precondition(format!(
                "history leaves the open domain at grid index {k} (b = {b:.3e})"
            )));
        }
        b_prev = b;
    }
    for k in (traj.start_index + 1)..times.len() {
        let x = traj.path.sample(k);
        let b = domain.oriented_distance(x);
        if b <= 0.0 {
            let tau = times[k];
            let dt = times[k] - times[k - 1];
            let theta = if b_prev > b { b_prev / (b_prev - b) } else { 1.0 };
            return Ok(HittingResult {
                exited: true,
                tau,
                tau_refined: times[k - 1] + theta * dt,
                exit_point: Some(x.to_vec()),
            });
        }
        b_prev = b;
    }
    Ok(HittingResult {
        exited: false,
        tau: f64::INFINITY,
        tau_refined: f64::INFINITY,
        exit_point: None,
    })
}

/// The quadratic-variation density path `r -> sigma(x_r) sigma*(x_r)` of an
/// arbitrary state path, evaluated on its own grid.
pub fn qv_density_path(x: &CadlagPath, coeffs: &dyn Coefficients) -> Result<CadlagPath> {
    let n = x.dim();
    if n != coeffs.state_dim() {
        return Err(CoreError::DimensionMismatch {
            expected: coeffs.state_dim(),
            got: n,
        });
    }
    let mut prefix = CadlagPath::from_flat(vec![x.times()[0]], x.sample(0).to_vec(), n);
    let mut sup = euclidean_norm(x.sample(0));
    let mut integral = DVector::zeros(n);
    let mut data = Vec::with_capacity(x.len() * n * n);
    for k in 0..x.len() {
        if k > 0 {
            let w = x.times()[k] - x.times()[k - 1];
            for (slot, v) in integral.iter_mut().zip(x.sample(k - 1)) {
                *slot += v * w;
            }
            prefix.push(x.times()[k], x.sample(k));
            sup = sup.max(euclidean_norm(x.sample(k)));
        }
        let view = PathHistory::from_parts(&prefix, sup, integral.clone());
        let sigma = coeffs.diffusion(&view);
        data.extend_from_slice(&flatten_sym(&(&sigma * sigma.transpose())));
    }
    Ok(CadlagPath::from_flat(x.times().to_vec(), data, n * n))
}

/// Empirical probe of the declared Lipschitz and growth constants.
#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    pub n_pairs: usize,
    pub max_lipschitz_ratio: f64,
    pub max_growth_ratio: f64,
    pub declared_lipschitz: f64,
    pub declared_growth: f64,
    pub lipschitz_violated: bool,
    pub growth_violated: bool,
}

/// Estimate `sup (|d mu| + |d sigma|) / sup|x - x'|` and
/// `sup (|mu| + |sigma|) / (1 + sup|x|)` over sampled path pairs and flag
/// violations of the declared constants. Report-only: never fails.
pub fn lipschitz_probe(
    coeffs: &dyn Coefficients,
    sampler: &dyn Fn(usize) -> (CadlagPath, CadlagPath),
    n_pairs: usize,
) -> LipschitzReport {
    let mut max_lip: f64 = 0.0;
    let mut max_growth: f64 = 0.0;
    for k in 0..n_pairs {
        let (a, b) = sampler(k);
        let ha = PathHistory::from_path(&a);
        let hb = PathHistory::from_path(&b);
        let (mu_a, sg_a) = (coeffs.drift(&ha), coeffs.diffusion(&ha));
        let (mu_b, sg_b) = (coeffs.drift(&hb), coeffs.diffusion(&hb));
        let denom = crate::paths::sup_distance(&a, &b);
        if denom > 0.0 {
            let num = (&mu_a - &mu_b).norm() + (&sg_a - &sg_b).norm();
            max_lip = max_lip.max(num / denom);
        }
        for (mu, sg, h) in [(&mu_a, &sg_a, &ha), (&mu_b, &sg_b, &hb)] {
            max_growth = max_growth.max((mu.norm() + sg.norm()) / (1.0 + h.sup_norm()));
        }
    }
    LipschitzReport {
        n_pairs,
        max_lipschitz_ratio: max_lip,
        max_growth_ratio: max_growth,
        declared_lipschitz: coeffs.declared_lipschitz(),
        declared_growth: coeffs.declared_growth(),
        lipschitz_violated: max_lip > coeffs.declared_lipschitz() + 1e-9,
        growth_violated: max_growth > coeffs.declared_growth() + 1e-9,
    }
}

/// Random equal-grid step-path pairs for [`lipschitz_probe`].
pub struct RandomPathPairSampler {
    pub dim: usize,
    pub grid_len: usize,
    pub t_end: f64,
    pub amplitude: f64,
    pub seed: u64,
}

impl RandomPathPairSampler {
    pub fn pair(&self, k: usize) -> (CadlagPath, CadlagPath) {
        let rng = CounterRng::new(self.seed, k as u64);
        let make = |offset: u64| {
            let times: Vec<f64> = (0..self.grid_len)
                .map(|j| self.t_end * j as f64 / (self.grid_len - 1).max(1) as f64)
                .collect();
            let values: Vec<Vec<f64>> = (0..self.grid_len)
                .map(|j| {
                    (0..self.dim)
                        .map(|i| {
                            let c = offset + (j * self.dim + i) as u64;
                            self.amplitude * (2.0 * rng.uniform(c) - 1.0)
                        })
                        .collect()
                })
                .collect();
            CadlagPath::new(times, values).expect("valid sampler grid")
        };
        (make(0), make(1 << 32))
    }
}
