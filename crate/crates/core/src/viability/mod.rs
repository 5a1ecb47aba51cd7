//! Executable viability checks for a smooth compact domain under a
//! path-dependent SDE.
//!
//! The equivalence under test ties three statements together:
//!
//! 1. the domain (resp. its interior) is invariant for the flow — every
//!    solution started with an interior history stays inside almost surely;
//! 2. on every boundary path `chi_t` (interior strictly before `t`, endpoint
//!    on the boundary) the coefficients satisfy
//!
//!    ```text
//!    sigma*(chi_t) grad b_K(chi_t(t)) = 0        (tangency)
//!    L(-b_K)(chi_t) <= 0                         (generator sign)
//!    ```
//!
//! 3. the log barrier `Psi = -log g` has `L Psi <= M` on interior paths, and
//!    the stopped process satisfies
//!    `E[Psi(X_{s ^ tau_Qi})] <= Psi(chi_t) + M (s - t)`.
//!
//! Quantification over all boundary paths is replaced by stratified random
//! sampling (endpoint location, history roughness, history length); reports
//! expose worst cases, not just averages. Exit probabilities are Monte Carlo
//! estimates with Wilson intervals at finite horizons; absence of observed
//! exits never *proves* viability, and the round-trip verdict says so.
//!
//! All checks are pure functions of their seeds.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::catalog::NegOrientedDistance;
use crate::calculus::{generator_apply, FdScheme};
use crate::domains::{
    check_regularity, clamp_to_interior, inner_domain, sample_interior_point, Barrier,
    SmoothDomain,
};
use crate::error::{CoreError, Result};
use crate::paths::CadlagPath;
use crate::rng::CounterRng;
use crate::sde::{
    hitting_time, simulate_with_stream, Coefficients, HittingResult, PathHistory, SimConfig,
};
use crate::stats::{mean_and_se, wilson_interval, Histogram};

/// Numerical floor added to supermartingale slack comparisons so that
/// zero-variance degenerate ensembles (all paths identical) do not fail on
/// the rounding of a mean of identical values.
const SLACK_FLOOR: f64 = 1e-9;

/// Tolerance on the boundary placement of sampled boundary paths.
const BOUNDARY_PLACEMENT_TOL: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Boundary path sampling
// ---------------------------------------------------------------------------

/// A path whose values are interior strictly before its final time and whose
/// final value lies on the boundary.
#[derive(Debug, Clone)]
pub struct BoundaryPathSample {
    pub path: CadlagPath,
}

impl BoundaryPathSample {
    /// Check the defining invariants against a domain.
    pub fn validate(&self, domain: &dyn SmoothDomain) -> Result<()> {
        let n = self.path.len();
        for k in 0..n - 1 {
            let b = domain.oriented_distance(self.path.sample(k));
            if b <= 0.0 {
                return Err(CoreError::Precondition(format!(
                    "boundary-path history not interior at grid index {k} (b = {b:.3e})"
                )));
            }
        }
        let b_end = domain.oriented_distance(self.path.final_value());
        if b_end.abs() > BOUNDARY_PLACEMENT_TOL {
            return Err(CoreError::Precondition(format!(
                "final value off the boundary (b = {b_end:.3e})"
            )));
        }
        Ok(())
    }
}

/// Strategy knobs for the boundary-path sampler.
#[derive(Debug, Clone)]
pub struct BoundarySamplerConfig {
    /// Grid points of the interior history on `[0, t)`.
    pub history_steps: usize,
    /// Histories are clamped to `b >= margin_frac * eps0`.
    pub interior_margin_frac: f64,
    /// Diffusion multipliers cycled across samples for history roughness.
    pub roughness_cycle: Vec<f64>,
}

impl Default for BoundarySamplerConfig {
    fn default() -> Self {
        BoundarySamplerConfig {
            history_steps: 64,
            interior_margin_frac: 0.05,
            roughness_cycle: vec![0.5, 1.0, 2.0],
        }
    }
}

const CTR_START: u64 = 0;
const CTR_SIM: u64 = 1 << 20;
const CTR_BOUNDARY: u64 = 1 << 21;

/// Sample `n` boundary paths of length `t`: an interior trajectory of the
/// coefficients (clamped away from the boundary) followed by a final value
/// placed exactly on the boundary — the projection of the pre-final state
/// when that state is inside the tube, otherwise a random boundary point.
/// `t = 0` yields single-instant paths at random boundary points.
pub fn sample_boundary_paths(
    domain: &dyn SmoothDomain,
    coeffs: &dyn Coefficients,
    t: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<BoundaryPathSample>> {
    sample_boundary_paths_with(&BoundarySamplerConfig::default(), domain, coeffs, t, n, seed)
}

pub fn sample_boundary_paths_with(
    cfg: &BoundarySamplerConfig,
    domain: &dyn SmoothDomain,
    coeffs: &dyn Coefficients,
    t: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<BoundaryPathSample>> {
    if t < 0.0 {
        return Err(CoreError::NegativeDuration(t));
    }
    if n == 0 || cfg.history_steps == 0 {
        return Err(CoreError::InvalidConfig("need n >= 1 and history_steps >= 1".into()));
    }
    let dim = domain.dim();
    let d = coeffs.brownian_dim();
    let eps0 = domain.tube_width();
    let margin = cfg.interior_margin_frac * eps0;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let rng = CounterRng::new(seed, k as u64);
        let path = if t == 0.0 {
            CadlagPath::point(domain.random_boundary_point(&rng, CTR_BOUNDARY).as_slice())?
        } else {
            let steps = cfg.history_steps;
            let dt = t / steps as f64;
            let sqrt_dt = dt.sqrt();
            let roughness = cfg.roughness_cycle[k % cfg.roughness_cycle.len()];
            let x0 = sample_interior_point(domain, margin, &rng, CTR_START);

            let mut path = CadlagPath::point(x0.as_slice())?;
            let mut sup = x0.norm();
            let mut integral = DVector::zeros(dim);
            let mut dw = vec![0.0; d];
            for j in 1..steps {
                let (mu, sigma) = {
                    let view = PathHistory::from_parts(&path, sup, integral.clone());
                    (coeffs.drift(&view), coeffs.diffusion(&view))
                };
                for (l, w) in dw.iter_mut().enumerate() {
                    *w = rng.normal(CTR_SIM + (j as u64 - 1) * d as u64 + l as u64)
                        * sqrt_dt
                        * roughness;
                }
                let x = DVector::from_column_slice(path.final_value());
                let mut x_new = &x + mu * dt;
                for i in 0..dim {
                    for (l, w) in dw.iter().enumerate() {
                        x_new[i] += sigma[(i, l)] * w;
                    }
                }
                let x_new = clamp_to_interior(domain, &x_new, margin);
                for (slot, xi) in integral.iter_mut().zip(path.final_value()) {
                    *slot += xi * dt;
                }
                path.push(j as f64 * dt, x_new.as_slice());
                sup = sup.max(x_new.norm());
            }

            let y = path.final_value();
            let b_y = domain.oriented_distance(y);
            let endpoint = if b_y.abs() < 0.999 * eps0 {
                domain.project_boundary(y)?
            } else {
                domain.random_boundary_point(&rng, CTR_BOUNDARY)
            };
            path.push(t, endpoint.as_slice());
            path
        };
        let sample = BoundaryPathSample { path };
        sample.validate(domain)?;
        out.push(sample);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Condition (ii): tangency and generator sign on boundary paths
// ---------------------------------------------------------------------------

/// Tolerances of the boundary condition check. The tangency tolerance is
/// scaled by the diffusion magnitude at the interior witness; generator
/// values within `borderline_factor * generator` of zero are treated as
/// borderline rather than given a sign.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionTolerances {
    pub tangency_base: f64,
    pub generator: f64,
    pub borderline_factor: f64,
}

impl Default for ConditionTolerances {
    fn default() -> Self {
        ConditionTolerances {
            tangency_base: 1e-6,
            generator: 1e-6,
            borderline_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConditionVerdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionSample {
    pub t: f64,
    pub endpoint: Vec<f64>,
    /// `|sigma*(chi_t) grad b_K(chi_t(t))|`.
    pub tangency_residual: f64,
    /// `L(-b_K)(chi_t) = -<grad b, mu> - 1/2 Tr(hess b . sigma sigma*)`.
    pub generator_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub n_samples: usize,
    pub tol_tangency: f64,
    pub tol_generator: f64,
    pub borderline_band: f64,
    pub max_tangency: f64,
    pub worst_tangency_index: usize,
    pub max_generator: f64,
    pub min_generator: f64,
    pub worst_generator_index: usize,
    /// Largest |analytic - finite-difference| generator value over the
    /// cross-checked subset (None when the cross-check is off).
    pub cross_check_max_diff: Option<f64>,
    pub verdict: ConditionVerdict,
    pub samples: Vec<ConditionSample>,
}

/// Full configuration of [`check_condition_ii`].
#[derive(Debug, Clone)]
pub struct ConditionCheckConfig {
    /// History lengths `t` at which boundary paths are sampled.
    pub times: Vec<f64>,
    pub n_per_time: usize,
    pub tolerances: ConditionTolerances,
    pub seed: u64,
    /// Number of samples on which the analytic generator is cross-checked
    /// against the finite-difference functional route (0 = off).
    pub cross_check_samples: usize,
    pub sampler: BoundarySamplerConfig,
}

impl Default for ConditionCheckConfig {
    fn default() -> Self {
        ConditionCheckConfig {
            times: vec![0.0, 0.5, 1.0],
            n_per_time: 100,
            tolerances: ConditionTolerances::default(),
            seed: 1,
            cross_check_samples: 0,
            sampler: BoundarySamplerConfig::default(),
        }
    }
}

/// Magnitude of the diffusion at the interior witness, used to scale the
/// tangency tolerance.
fn sigma_scale(domain: &dyn SmoothDomain, coeffs: &dyn Coefficients) -> f64 {
    let w = domain.interior_point();
    let p = CadlagPath::point(w.as_slice()).expect("witness point path");
    let h = PathHistory::from_path(&p);
    coeffs.diffusion(&h).norm()
}

/// Evaluate the boundary condition on sampled boundary paths: for each path
/// the tangency residual `|sigma* grad b|` and the generator value
/// `L(-b_K)` from the analytic domain derivatives (the test functional is
/// endpoint-only, so its horizontal derivative vanishes identically).
pub fn check_condition_ii(
    domain: &Arc<dyn SmoothDomain>,
    coeffs: &dyn Coefficients,
    cfg: &ConditionCheckConfig,
) -> Result<ConditionReport> {
    let spot = check_regularity(domain.as_ref(), 32, 32, cfg.seed ^ 0x5eed);
    if !spot.passed {
        return Err(CoreError::Precondition(format!(
            "domain failed the regularity spot check: {spot:?}"
        )));
    }

    let mut samples = Vec::new();
    let mut paths = Vec::new();
    for (ti, &t) in cfg.times.iter().enumerate() {
        let seed_t = CounterRng::new(cfg.seed, ti as u64).bits(7);
        let batch =
            sample_boundary_paths_with(&cfg.sampler, domain.as_ref(), coeffs, t, cfg.n_per_time, seed_t)?;
        for s in batch {
            let hist = PathHistory::from_path(&s.path);
            let sigma = coeffs.diffusion(&hist);
            let mu = coeffs.drift(&hist);
            let x_end = s.path.final_value();
            let gb = domain.grad_b(x_end)?;
            let hb = domain.hess_b(x_end)?;
            let tangency = (sigma.transpose() * &gb).norm();
            let a = &sigma * sigma.transpose();
            let generator = -gb.dot(&mu) - 0.5 * crate::calculus::trace_product(&hb, &a);
            samples.push(ConditionSample {
                t,
                endpoint: x_end.to_vec(),
                tangency_residual: tangency,
                generator_value: generator,
            });
            paths.push(s);
        }
    }

    let mut cross_check_max_diff = None;
    if cfg.cross_check_samples > 0 {
        let f = NegOrientedDistance::new(domain.clone());
        let mut worst: f64 = 0.0;
        let stride = (paths.len() / cfg.cross_check_samples).max(1);
        for (s, rec) in paths.iter().zip(&samples).step_by(stride) {
            let pair_scale = crate::paths::PathPair::with_zero_v(s.path.clone());
            let scheme = FdScheme::default_for(&pair_scale);
            let fd = generator_apply(&f, &s.path, coeffs, &scheme)?;
            worst = worst.max((fd - rec.generator_value).abs());
        }
        cross_check_max_diff = Some(worst);
    }

    let tol_tangency = cfg.tolerances.tangency_base * (1.0 + sigma_scale(domain.as_ref(), coeffs));
    let tol_generator = cfg.tolerances.generator;
    let band = cfg.tolerances.borderline_factor * tol_generator;

    let (mut max_tan, mut wt) = (f64::NEG_INFINITY, 0);
    let (mut max_gen, mut wg) = (f64::NEG_INFINITY, 0);
    let mut min_gen = f64::INFINITY;
    for (i, s) in samples.iter().enumerate() {
        if s.tangency_residual > max_tan {
            max_tan = s.tangency_residual;
            wt = i;
        }
        if s.generator_value > max_gen {
            max_gen = s.generator_value;
            wg = i;
        }
        min_gen = min_gen.min(s.generator_value);
    }

    // Tangency failures or clearly positive generator values fail the
    // condition; a maximal generator value inside the borderline band around
    // zero is reported as inconclusive rather than given a sign.
    let verdict = if max_tan > tol_tangency || max_gen > band {
        ConditionVerdict::Fail
    } else if max_gen < -band {
        ConditionVerdict::Pass
    } else {
        ConditionVerdict::Inconclusive
    };

    Ok(ConditionReport {
        n_samples: samples.len(),
        tol_tangency,
        tol_generator,
        borderline_band: band,
        max_tangency: max_tan,
        worst_tangency_index: wt,
        max_generator: max_gen,
        min_generator: min_gen,
        worst_generator_index: wg,
        cross_check_max_diff,
        verdict,
        samples,
    })
}

// ---------------------------------------------------------------------------
// Exit probability (conditions (i) and (iii))
// ---------------------------------------------------------------------------

/// Supplies the initial history of ensemble path `k`.
pub trait HistorySampler: Send + Sync {
    fn history(&self, path_index: usize) -> CadlagPath;
}

/// Every path starts from the same single-instant history `{(0, point)}`.
pub struct FixedStart(pub Vec<f64>);

impl HistorySampler for FixedStart {
    fn history(&self, _path_index: usize) -> CadlagPath {
        CadlagPath::point(&self.0).expect("valid start point")
    }
}

/// Cycles through a list of explicit histories.
pub struct HistoryList(pub Vec<CadlagPath>);

impl HistorySampler for HistoryList {
    fn history(&self, path_index: usize) -> CadlagPath {
        self.0[path_index % self.0.len()].clone()
    }
}

/// Monte Carlo exit statistics over an ensemble.
#[derive(Debug, Clone, Serialize)]
pub struct ExitStats {
    pub n_paths: usize,
    pub n_exited: usize,
    pub p_hat: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub start_time: f64,
    pub horizon: f64,
    pub mean_exit_time: Option<f64>,
    pub exit_time_histogram: Histogram,
}

/// Estimate the probability that the trajectory leaves the domain by the
/// horizon. Histories must lie in the open interior (checked); exits are
/// detected on the simulation grid.
pub fn estimate_exit_probability(
    domain: &dyn SmoothDomain,
    coeffs: &dyn Coefficients,
    histories: &dyn HistorySampler,
    config: &SimConfig,
) -> Result<ExitStats> {
    let results: Vec<std::result::Result<HittingResult, (usize, String)>> = (0..config.n_paths)
        .into_par_iter()
        .map(|k| {
            let history = histories.history(k);
            simulate_with_stream(&history, coeffs, config, k as u64)
                .and_then(|traj| hitting_time(&traj, domain))
                .map_err(|e| (k, e.to_string()))
        })
        .collect();
    let mut hits = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(h) => hits.push(h),
            Err((k, msg)) => {
                return Err(CoreError::Precondition(format!("exit path {k}: {msg}")))
            }
        }
    }
    let start_time = histories.history(0).t_end();
    let n_exited = hits.iter().filter(|h| h.exited).count();
    let (lo, hi) = wilson_interval(n_exited, hits.len());
    let exit_times: Vec<f64> = hits
        .iter()
        .filter(|h| h.exited)
        .map(|h| h.tau_refined)
        .collect();
    let mean_exit_time = if exit_times.is_empty() {
        None
    } else {
        Some(mean_and_se(&exit_times).0)
    };
    Ok(ExitStats {
        n_paths: hits.len(),
        n_exited,
        p_hat: n_exited as f64 / hits.len() as f64,
        wilson_lo: lo,
        wilson_hi: hi,
        start_time,
        horizon: config.horizon,
        mean_exit_time,
        exit_time_histogram: Histogram::build(exit_times, start_time, config.horizon, 16),
    })
}

/// Closure-viability probe: exit statistics for starts approaching a
/// boundary point from inside along the inward normal. Diagnostic only —
/// grid-based exit detection systematically overestimates exits for starts
/// within an Euler step of the boundary, so these numbers inform a trend
/// and never gate a verdict.
#[derive(Debug, Clone, Serialize)]
pub struct ClosureStep {
    pub pullback: f64,
    pub exit: ExitStats,
}

pub fn closure_viability(
    domain: &dyn SmoothDomain,
    coeffs: &dyn Coefficients,
    boundary_point: &[f64],
    pullbacks: &[f64],
    config: &SimConfig,
) -> Result<Vec<ClosureStep>> {
    let g = domain.grad_b(boundary_point)?;
    let x0 = DVector::from_column_slice(boundary_point);
    let mut out = Vec::with_capacity(pullbacks.len());
    for &eps in pullbacks {
        if eps <= 0.0 {
            return Err(CoreError::InvalidConfig("pullbacks must be positive".into()));
        }
        let start = &x0 + &g * eps;
        let stats = estimate_exit_probability(
            domain,
            coeffs,
            &FixedStart(start.as_slice().to_vec()),
            config,
        )?;
        out.push(ClosureStep {
            pullback: eps,
            exit: stats,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Lyapunov scan (the barrier bound)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct LevelStats {
    pub b_level: f64,
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovReport {
    /// Empirical sup of `L Psi` over all sampled interior paths.
    pub m_hat: f64,
    pub deep: LevelStats,
    /// Tube levels ordered from coarse (eps0/2) to fine (eps0/128).
    pub tube_levels: Vec<LevelStats>,
    /// Set when the tube maxima grow without bound toward the boundary
    /// (each refinement at least doubles the positive maximum).
    pub divergence: bool,
    pub n_excluded: usize,
}

/// `L Psi` from the barrier identity
/// `(1/g^2) |sigma* grad g|^2 - (1/g) [<grad g, mu> + 1/2 Tr(hess g . A)]`.
fn l_psi(
    barrier: &Barrier,
    coeffs: &dyn Coefficients,
    path: &CadlagPath,
) -> Result<f64> {
    let hist = PathHistory::from_path(path);
    let sigma = coeffs.diffusion(&hist);
    let mu = coeffs.drift(&hist);
    let bv = barrier.values(path.final_value())?;
    let sg = (sigma.transpose() * &bv.grad_g).norm_squared();
    let a = &sigma * sigma.transpose();
    let lg = bv.grad_g.dot(&mu) + 0.5 * crate::calculus::trace_product(&bv.hess_g, &a);
    Ok(sg / (bv.g * bv.g) - lg / bv.g)
}

/// Evaluate `L Psi` on interior paths stratified by oriented-distance level:
/// a deep stratum (`b >= eps0`) and tube strata at
/// `b = eps0/2, eps0/8, eps0/32, eps0/128`. `m_hat` is the sampled maximum;
/// the divergence flag fires when the tube maxima grow as `b -> 0`, the
/// signature of a failed tangency condition.
pub fn lyapunov_scan(
    domain: &Arc<dyn SmoothDomain>,
    barrier: &Barrier,
    coeffs: &dyn Coefficients,
    t: f64,
    n_per_level: usize,
    seed: u64,
) -> Result<LyapunovReport> {
    let eps0 = domain.tube_width();
    let tube_levels: Vec<f64> = [2.0, 8.0, 32.0, 128.0].iter().map(|d| eps0 / d).collect();
    let mut excluded = 0usize;

    let mut eval_level = |level: Option<f64>, stream: u64| -> Result<LevelStats> {
        let mut vals = Vec::with_capacity(n_per_level);
        for k in 0..n_per_level {
            let rng = CounterRng::new(seed, stream * 65_536 + k as u64);
            let path = interior_path_at_level(domain.as_ref(), coeffs, t, level, &rng)?;
            if domain.oriented_distance(path.final_value()) <= 0.0 {
                excluded += 1; // Psi infinite on the boundary; skip with note
                continue;
            }
            vals.push(l_psi(barrier, coeffs, &path)?);
        }
        let (m, _) = mean_and_se(&vals);
        Ok(LevelStats {
            b_level: level.unwrap_or(eps0),
            n: vals.len(),
            min: vals.iter().cloned().fold(f64::INFINITY, f64::min),
            max: vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            mean: m,
        })
    };

    let deep = eval_level(None, 0)?;
    let mut tube_stats = Vec::new();
    for (li, &level) in tube_levels.iter().enumerate() {
        tube_stats.push(eval_level(Some(level), 1 + li as u64)?);
    }

    let m_hat = tube_stats
        .iter()
        .map(|s| s.max)
        .fold(deep.max, f64::max);

    let maxima: Vec<f64> = tube_stats.iter().map(|s| s.max).collect();
    let all_positive = maxima.iter().all(|m| *m > 0.0);
    let growing = maxima.windows(2).all(|w| w[1] >= 2.0 * w[0]);
    let overall = maxima.last().unwrap_or(&0.0) >= &(8.0 * maxima.first().unwrap_or(&f64::INFINITY));
    // Noise floor: genuine 1/b or 1/b^2 growth reaches order 1/eps0 at the
    // finest level; rounding noise in an identically-zero L Psi sits around
    // machine epsilon and must not flag.
    let significant = *maxima.last().unwrap_or(&0.0) > 1e-3 * (1.0 + deep.max.abs());
    let divergence = all_positive && growing && overall && significant;

    Ok(LyapunovReport {
        m_hat,
        deep,
        tube_levels: tube_stats,
        divergence,
        n_excluded: excluded,
    })
}

/// An interior path of length `t` whose endpoint sits at the prescribed
/// oriented-distance level (or in the deep interior when `level` is None).
fn interior_path_at_level(
    domain: &dyn SmoothDomain,
    coeffs: &dyn Coefficients,
    t: f64,
    level: Option<f64>,
    rng: &CounterRng,
) -> Result<CadlagPath> {
    let endpoint = match level {
        Some(level) => {
            let y = domain.random_boundary_point(rng, CTR_BOUNDARY);
            let g = domain.grad_b(y.as_slice())?;
            y + g * level
        }
        None => sample_interior_point(domain, domain.tube_width(), rng, CTR_BOUNDARY),
    };
    if t == 0.0 {
        return CadlagPath::point(endpoint.as_slice());
    }
    // Interior history, then the prescribed endpoint at t.
    let cfg = BoundarySamplerConfig::default();
    let steps = cfg.history_steps;
    let dt = t / steps as f64;
    let sqrt_dt = dt.sqrt();
    let dim = domain.dim();
    let d = coeffs.brownian_dim();
    let margin = cfg.interior_margin_frac * domain.tube_width();
    let x0 = sample_interior_point(domain, margin, rng, CTR_START);
    let mut path = CadlagPath::point(x0.as_slice())?;
    let mut sup = x0.norm();
    let mut integral = DVector::zeros(dim);
    for j in 1..steps {
        let (mu, sigma) = {
            let view = PathHistory::from_parts(&path, sup, integral.clone());
            (coeffs.drift(&view), coeffs.diffusion(&view))
        };
        let x = DVector::from_column_slice(path.final_value());
        let mut x_new = &x + mu * dt;
        for i in 0..dim {
            for l in 0..d {
                x_new[i] +=
                    sigma[(i, l)] * rng.normal(CTR_SIM + (j as u64 - 1) * d as u64 + l as u64) * sqrt_dt;
            }
        }
        let x_new = clamp_to_interior(domain, &x_new, margin);
        for (slot, xi) in integral.iter_mut().zip(path.final_value()) {
            *slot += xi * dt;
        }
        path.push(j as f64 * dt, x_new.as_slice());
        sup = sup.max(x_new.norm());
    }
    path.push(t, endpoint.as_slice());
    Ok(path)
}

// ---------------------------------------------------------------------------
// Supermartingale inequality for the stopped barrier
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CheckpointStat {
    pub s: f64,
    pub mean_psi: f64,
    pub se: f64,
    /// `mean Psi(X_{s ^ tau}) - Psi(chi_t) - m_hat (s - t)`.
    pub slack: f64,
    pub n_stopped: usize,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SupermartingaleReport {
    pub psi_start: f64,
    pub m_hat_used: f64,
    pub inner_offset: f64,
    pub n_paths: usize,
    pub checkpoints: Vec<CheckpointStat>,
    pub worst_slack: f64,
    pub all_hold: bool,
}

/// Verify `E[Psi(X_{s ^ tau_Qi})] <= Psi(chi_t) + m_hat (s - t) + 3 SE` at
/// the given checkpoints, with `tau_Qi` the hitting time of the inner domain
/// `Q_i` and the stopped state projected back onto the level set
/// `{ b_K = 1/i }` (the grid crossing overshoots it slightly).
pub fn supermartingale_check(
    domain: &Arc<dyn SmoothDomain>,
    barrier: &Barrier,
    coeffs: &dyn Coefficients,
    history: &CadlagPath,
    config: &SimConfig,
    inner_index: u32,
    checkpoints: &[f64],
    m_hat: f64,
) -> Result<SupermartingaleReport> {
    let q = inner_domain(domain.clone(), inner_index)?;
    let t_start = history.t_end();
    let psi_start = barrier.psi(history.final_value())?;
    if checkpoints.is_empty() {
        return Err(CoreError::InvalidConfig("need at least one checkpoint".into()));
    }
    let mut snapped = Vec::with_capacity(checkpoints.len());
    for &s in checkpoints {
        if s < t_start || s > config.horizon + 1e-12 {
            return Err(CoreError::InvalidConfig(format!(
                "checkpoint {s} outside [{t_start}, {}]",
                config.horizon
            )));
        }
        snapped.push(t_start + ((s - t_start) / config.dt).round() * config.dt);
    }

    let per_path: Vec<std::result::Result<(Vec<f64>, bool), (usize, String)>> = (0..config
        .n_paths)
        .into_par_iter()
        .map(|k| {
            let run = || -> Result<(Vec<f64>, bool)> {
                let traj = simulate_with_stream(history, coeffs, config, k as u64)?;
                let hit = hitting_time(&traj, &q)?;
                let mut psis = Vec::with_capacity(snapped.len());
                for &s in &snapped {
                    let x = if hit.exited && hit.tau <= s {
                        let exit = hit.exit_point.as_ref().expect("exit point present");
                        // Stop exactly on the level set { b_K = 1/i }.
                        match q.project_boundary(exit) {
                            Ok(p) => p,
                            Err(_) => clamp_to_interior(domain.as_ref(),
                                &DVector::from_column_slice(exit), q.offset()),
                        }
                    } else {
                        DVector::from_column_slice(traj.path.value_at(s.min(traj.path.t_end()))?)
                    };
                    psis.push(barrier.psi(x.as_slice())?);
                }
                Ok((psis, hit.exited))
            };
            run().map_err(|e| (k, e.to_string()))
        })
        .collect();

    let mut psi_matrix: Vec<Vec<f64>> = vec![Vec::with_capacity(config.n_paths); snapped.len()];
    let mut n_stopped_total = 0usize;
    for r in per_path {
        match r {
            Ok((psis, stopped)) => {
                if stopped {
                    n_stopped_total += 1;
                }
                for (ci, v) in psis.into_iter().enumerate() {
                    psi_matrix[ci].push(v);
                }
            }
            Err((k, msg)) => {
                return Err(CoreError::Precondition(format!(
                    "supermartingale path {k}: {msg}"
                )))
            }
        }
    }

    let mut stats = Vec::with_capacity(snapped.len());
    let mut worst = f64::NEG_INFINITY;
    let mut all_hold = true;
    for (ci, s) in snapped.iter().enumerate() {
        let (m, se) = mean_and_se(&psi_matrix[ci]);
        let slack = m - psi_start - m_hat * (s - t_start);
        let holds = slack <= 3.0 * se + SLACK_FLOOR;
        worst = worst.max(slack);
        all_hold &= holds;
        stats.push(CheckpointStat {
            s: *s,
            mean_psi: m,
            se,
            slack,
            n_stopped: n_stopped_total,
            holds,
        });
    }

    Ok(SupermartingaleReport {
        psi_start,
        m_hat_used: m_hat,
        inner_offset: q.offset(),
        n_paths: config.n_paths,
        checkpoints: stats,
        worst_slack: worst,
        all_hold,
    })
}

// ---------------------------------------------------------------------------
// Round trip: do the three faces of the theorem agree?
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Consistency {
    Consistent,
    Inconclusive,
}

/// Which way the combined evidence points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Viable,
    NonViable,
    Undetermined,
}

#[derive(Debug, Clone, Serialize)]
pub struct HorizonExit {
    pub horizon: f64,
    pub stats: ExitStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundtripReport {
    pub condition: ConditionReport,
    pub exits: Vec<HorizonExit>,
    pub closure: Vec<ClosureStep>,
    pub lyapunov: LyapunovReport,
    pub supermartingale: SupermartingaleReport,
    pub verdict: Consistency,
    pub direction: Direction,
    pub caveat: String,
}

#[derive(Debug, Clone)]
pub struct RoundtripProtocol {
    pub condition: ConditionCheckConfig,
    pub sim: SimConfig,
    /// Horizons for the interior exit estimate (nondecreasing).
    pub horizons: Vec<f64>,
    pub start_point: Vec<f64>,
    /// Pullbacks for the closure-viability diagnostic.
    pub closure_pullbacks: Vec<f64>,
    pub inner_index: u32,
    pub checkpoints: Vec<f64>,
    pub lyapunov_t: f64,
    pub lyapunov_samples_per_level: usize,
    /// A horizon passes the no-exit test when the Wilson upper bound stays
    /// below this threshold.
    pub exit_epsilon: f64,
}

/// Run all checks and emit a consistency verdict: `Consistent` when the
/// boundary condition, the exit statistics and the barrier checks all point
/// the same way, `Inconclusive` otherwise. One-sided caveat: no finite
/// ensemble proves viability; the pass direction asserts only that no
/// contradiction was found at the tested horizons and resolution.
pub fn theorem_roundtrip(
    domain: &Arc<dyn SmoothDomain>,
    coeffs: &dyn Coefficients,
    protocol: &RoundtripProtocol,
) -> Result<RoundtripReport> {
    let condition = check_condition_ii(domain, coeffs, &protocol.condition)?;

    let mut exits = Vec::new();
    for &h in &protocol.horizons {
        let mut cfg = protocol.sim.clone();
        cfg.horizon = h;
        let stats = estimate_exit_probability(
            domain.as_ref(),
            coeffs,
            &FixedStart(protocol.start_point.clone()),
            &cfg,
        )?;
        exits.push(HorizonExit { horizon: h, stats });
    }

    let rng = CounterRng::new(protocol.sim.seed, 0xb0);
    let boundary_point = domain.random_boundary_point(&rng, 0);
    let closure = closure_viability(
        domain.as_ref(),
        coeffs,
        boundary_point.as_slice(),
        &protocol.closure_pullbacks,
        &protocol.sim,
    )?;

    let barrier = Barrier::new(domain.clone());
    let lyapunov = lyapunov_scan(
        domain,
        &barrier,
        coeffs,
        protocol.lyapunov_t,
        protocol.lyapunov_samples_per_level,
        protocol.sim.seed ^ 0x17a,
    )?;
    let supermartingale = supermartingale_check(
        domain,
        &barrier,
        coeffs,
        &CadlagPath::point(&protocol.start_point)?,
        &protocol.sim,
        protocol.inner_index,
        &protocol.checkpoints,
        lyapunov.m_hat.max(0.0),
    )?;

    let no_exits = exits
        .iter()
        .all(|e| e.stats.n_exited == 0 && e.stats.wilson_hi <= protocol.exit_epsilon);
    let all_pass = condition.verdict == ConditionVerdict::Pass
        && no_exits
        && !lyapunov.divergence
        && supermartingale.all_hold;
    let exit_evidence = exits
        .last()
        .map(|e| e.stats.wilson_lo > 0.0)
        .unwrap_or(false);
    let fail_consistent = condition.verdict == ConditionVerdict::Fail && exit_evidence;

    let (verdict, direction) = if all_pass {
        (Consistency::Consistent, Direction::Viable)
    } else if fail_consistent {
        (Consistency::Consistent, Direction::NonViable)
    } else {
        (Consistency::Inconclusive, Direction::Undetermined)
    };

    Ok(RoundtripReport {
        condition,
        exits,
        closure,
        lyapunov,
        supermartingale,
        verdict,
        direction,
        caveat: "absence of observed exits at finite horizon and grid resolution never proves \
                 viability; the pass direction records consistency of the evidence, not a proof"
            .into(),
    })
}
