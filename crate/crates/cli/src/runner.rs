//! Check execution and artifact writing.
//!
//! Every run writes a `report.json` (check report plus config hash and
//! seed), a `manifest.json` naming the artifacts, and plot-ready CSV series.
//! Artifacts are bit-reproducible: rerunning the same config and seed, with
//! any `--threads`, writes identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use viab_core::calculus::catalog::functional_by_name;
use viab_core::calculus::{ito_residual, FdScheme};
use viab_core::domains::{Barrier, SmoothDomain};
use viab_core::paths::{CadlagPath, PathPair};
use viab_core::sde::{simulate_with_stream, Coefficients, SimConfig};
use viab_core::stats::rms;
use viab_core::viability::{
    check_condition_ii, closure_viability, estimate_exit_probability, lyapunov_scan,
    supermartingale_check, theorem_roundtrip, ConditionVerdict, Consistency, Direction,
    ExitStats, FixedStart, RoundtripProtocol,
};

use crate::config::{ConfigError, ExperimentConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Pass,
    Fail,
    Inconclusive,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::Fail => 1,
            Outcome::Inconclusive => 3,
        }
    }
}

pub struct RunResult {
    pub outcome: Outcome,
    pub summary: String,
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], artifacts: &mut Vec<String>) -> Result<(), ConfigError> {
    fs::create_dir_all(dir).map_err(|e| ConfigError::Read {
        path: dir.display().to_string(),
        source: e,
    })?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| ConfigError::Read {
        path: path.display().to_string(),
        source: e,
    })?;
    artifacts.push(name.to_string());
    Ok(())
}

fn json_report<T: Serialize>(
    kind: &str,
    config_hash: &str,
    seed: u64,
    outcome: Outcome,
    body: &T,
) -> Vec<u8> {
    let doc = json!({
        "check": kind,
        "config_hash": config_hash,
        "seed": seed,
        "outcome": outcome,
        "report": body,
    });
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("serializable report");
    bytes.push(b'\n');
    bytes
}

fn exit_csv(rows: &[(f64, &ExitStats)]) -> Vec<u8> {
    let mut out = String::from("horizon,n_paths,n_exited,p_hat,wilson_lo,wilson_hi\n");
    for (h, s) in rows {
        out.push_str(&format!(
            "{h},{},{},{},{},{}\n",
            s.n_paths, s.n_exited, s.p_hat, s.wilson_lo, s.wilson_hi
        ));
    }
    out.into_bytes()
}

pub struct Runner<'a> {
    pub config: &'a ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    artifacts: Vec<String>,
}

impl<'a> Runner<'a> {
    pub fn new(
        config: &'a ExperimentConfig,
        config_hash: String,
        seed_override: Option<u64>,
        out_dir: PathBuf,
    ) -> Self {
        Runner {
            config,
            config_hash,
            seed: seed_override.unwrap_or(config.sim.seed),
            out_dir,
            artifacts: Vec::new(),
        }
    }

    fn sim(&self) -> SimConfig {
        let mut s = self.config.sim_config(Some(self.seed));
        s.seed = self.seed;
        s
    }

    pub fn run(&mut self) -> Result<RunResult, ConfigError> {
        let domain = self.config.build_domain()?;
        let coeffs = self.config.build_coefficients()?;
        let result = match self.config.check.kind.as_str() {
            "condition_ii" => self.run_condition(&domain, &coeffs)?,
            "exit" => self.run_exit(&domain, &coeffs)?,
            "lyapunov" => self.run_lyapunov(&domain, &coeffs)?,
            "supermartingale" => self.run_supermartingale(&domain, &coeffs)?,
            "roundtrip" => self.run_roundtrip(&domain, &coeffs)?,
            "ito_verify" => self.run_ito_verify(&domain, &coeffs)?,
            _ => unreachable!("validated"),
        };
        self.write_manifest()?;
        if self.config.output.dump_trajectories > 0 {
            self.dump_trajectories(&coeffs, &domain)?;
        }
        Ok(result)
    }

    fn write_manifest(&mut self) -> Result<(), ConfigError> {
        let doc = json!({
            "config_hash": self.config_hash,
            "seed": self.seed,
            "dt": self.config.sim.dt,
            "check": self.config.check.kind,
            "artifacts": self.artifacts,
        });
        let mut bytes = serde_json::to_vec_pretty(&doc).expect("manifest");
        bytes.push(b'\n');
        let mut artifacts = std::mem::take(&mut self.artifacts);
        write_file(&self.out_dir, "manifest.json", &bytes, &mut artifacts)?;
        self.artifacts = artifacts;
        Ok(())
    }

    fn dump_trajectories(
        &mut self,
        coeffs: &dyn Coefficients,
        domain: &Arc<dyn SmoothDomain>,
    ) -> Result<(), ConfigError> {
        let sim = self.sim();
        let start = self.config.start_point(domain);
        let history = CadlagPath::point(&start)?;
        let mut artifacts = std::mem::take(&mut self.artifacts);
        for k in 0..self.config.output.dump_trajectories.min(sim.n_paths) {
            let traj = simulate_with_stream(&history, coeffs, &sim, k as u64)?;
            let n = traj.path.dim();
            let mut out = String::from("time");
            for i in 0..n {
                out.push_str(&format!(",x{i}"));
            }
            for i in 0..n {
                for j in 0..n {
                    out.push_str(&format!(",a{i}{j}"));
                }
            }
            out.push('\n');
            for idx in 0..traj.path.len() {
                out.push_str(&format!("{}", traj.path.times()[idx]));
                for v in traj.path.sample(idx) {
                    out.push_str(&format!(",{v}"));
                }
                for v in traj.qv_density.sample(idx) {
                    out.push_str(&format!(",{v}"));
                }
                out.push('\n');
            }
            write_file(
                &self.out_dir,
                &format!("trajectory_{k}.csv"),
                out.as_bytes(),
                &mut artifacts,
            )?;
        }
        self.artifacts = artifacts;
        Ok(())
    }

    fn run_condition(
        &mut self,
        domain: &Arc<dyn SmoothDomain>,
        coeffs: &dyn Coefficients,
    ) -> Result<RunResult, ConfigError> {
        let cfg = self.config.condition_config(self.seed);
        let report = check_condition_ii(domain, coeffs, &cfg)?;
        let outcome = match report.verdict {
            ConditionVerdict::Pass => Outcome::Pass,
            ConditionVerdict::Fail => Outcome::Fail,
            ConditionVerdict::Inconclusive => Outcome::Inconclusive,
        };

        let mut csv = String::from("index,t,tangency_residual,generator_value");
        let dim = domain.dim();
        for i in 0..dim {
            csv.push_str(&format!(",x{i}"));
        }
        csv.push('\n');
        for (i, s) in report.samples.iter().enumerate() {
            csv.push_str(&format!(
                "{i},{},{},{}",
                s.t, s.tangency_residual, s.generator_value
            ));
            for v in &s.endpoint {
                csv.push_str(&format!(",{v}"));
            }
            csv.push('\n');
        }
        let mut artifacts = std::mem::take(&mut self.artifacts);
        write_file(&self.out_dir, "condition_samples.csv", csv.as_bytes(), &mut artifacts)?;
        write_file(
            &self.out_dir,
            "report.json",
            &json_report("condition_ii", &self.config_hash, self.seed, outcome, &report),
            &mut artifacts,
        )?;
        self.artifacts = artifacts;

        let summary = format!(
            "condition_ii: {:?} over {} boundary paths\n  max tangency residual {:.3e} (tol {:.3e})\n  generator range [{:.6}, {:.6}] (tol {:.1e}, borderline band {:.1e})\n  worst offenders: tangency #{}, generator #{}{}",
            report.verdict,
            report.n_samples,
            report.max_tangency,
            report.tol_tangency,
            report.min_generator,
            report.max_generator,
            report.tol_generator,
            report.borderline_band,
            report.worst_tangency_index,
            report.worst_generator_index,
            report
                .cross_check_max_diff
                .map(|d| format!("\n  analytic-vs-FD generator cross-check: max diff {d:.3e}"))
                .unwrap_or_default()
        );
        Ok(RunResult { outcome, summary })
    }

    fn run_exit(
        &mut self,
        domain: &Arc<dyn SmoothDomain>,
        coeffs: &dyn Coefficients,
    ) -> Result<RunResult, ConfigError> {
        let start = self.config.start_point(domain);
        let eps = self.config.check.exit_epsilon.unwrap_or(5e-4);
        let mut per_horizon = Vec::new();
        for &h in &self.config.sim.horizons {
            let mut sim = self.sim();
            sim.horizon = h;
            let stats = estimate_exit_probability(
                domain.as_ref(),
                coeffs,
                &FixedStart(start.clone()),
                &sim,
            )?;
            per_horizon.push((h, stats));
        }
        let closure = match &self.config.check.closure_pullbacks {
            Some(pullbacks) => {
                let rng = viab_core::rng::CounterRng::new(self.seed, 0xb0);
                let bp = domain.random_boundary_point(&rng, 0);
                Some(closure_viability(
                    domain.as_ref(),
                    coeffs,
                    bp.as_slice(),
                    pullbacks,
                    &self.sim(),
                )?)
            }
            None => None,
        };

        let last = &per_horizon.last().unwrap().1;
        let all_quiet = per_horizon
            .iter()
            .all(|(_, s)| s.n_exited == 0 && s.wilson_hi <= eps);
        let outcome = if all_quiet {
            Outcome::Pass
        } else if last.wilson_lo > 0.0 {
            Outcome::Fail
        } else {
            Outcome::Inconclusive
        };

        let rows: Vec<(f64, &ExitStats)> = per_horizon.iter().map(|(h, s)| (*h, s)).collect();
        let body = json!({
            "per_horizon": per_horizon.iter().map(|(h, s)| json!({"horizon": h, "stats": s})).collect::<Vec<_>>(),
            "closure": closure,
            "exit_epsilon": eps,
        });
        let mut artifacts = std::mem::take(&mut self.artifacts);
        write_file(&self.out_dir, "exit_vs_horizon.csv", &exit_csv(&rows), &mut artifacts)?;
        write_file(
            &self.out_dir,
            "report.json",
            &json_report("exit", &self.config_hash, self.seed, outcome, &body),
            &mut artifacts,
        )?;
        self.artifacts = artifacts;

        let mut summary = format!("exit: {outcome:?} from start {start:?}\n");
        for (h, s) in &per_horizon {
            summary.push_str(&format!(
                "  T = {h}: p_hat = {} ({}/{} paths), Wilson 95% [{:.3e}, {:.3e}]\n",
                s.p_hat, s.n_exited, s.n_paths, s.wilson_lo, s.wilson_hi
            ));
        }
        Ok(RunResult { outcome, summary })
    }

    fn run_lyapunov(
        &mut self,
        domain: &Arc<dyn SmoothDomain>,
        coeffs: &dyn Coefficients,
    ) -> Result<RunResult, ConfigError> {
        let barrier = Barrier::new(domain.clone());
        let report = lyapunov_scan(
            domain,
            &barrier,
            coeffs,
            self.config.check.lyapunov_t.unwrap_or(1.0),
            self.config.check.samples_per_level.unwrap_or(64),
            self.seed,
        )?;
        let outcome = if report.divergence {
            Outcome::Fail
        } else {
            Outcome::Pass
        };

        let mut csv = String::from("b_level,n,min,max,mean\n");
        for s in std::iter::once(&report.deep).chain(&report.tube_levels) {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                s.b_level, s.n, s.min, s.max, s.mean
            ));
        }
        let mut artifacts = std::mem::take(&mut self.artifacts);
        write_file(&self.out_dir, "lpsi_vs_level.csv", csv.as_bytes(), &mut artifacts)?;
        write_file(
            &self.out_dir,
            "report.json",
            &json_report("lyapunov", &self.config_hash, self.seed, outcome, &report),
            &mut artifacts,
        )?;
        self.artifacts = artifacts;

        let summary = format!(
            "lyapunov: {outcome:?}\n  M_hat = {:.6} over {} levels, divergence flag: {}\n  finest tube level max = {:.3e}",
            report.m_hat,
            report.tube_levels.len() + 1,
            report.divergence,
            report.tube_levels.last().map(|s| s.max).unwrap_or(f64::NAN)
        );
        Ok(RunResult { outcome, summary })
    }

    fn run_supermartingale(
        &mut self,
        domain: &Arc<dyn SmoothDomain>,
        coeffs: &dyn Coefficients,
    ) -> Result<RunResult, ConfigError> {
        let barrier = Barrier::new(domain.clone());
        // M_hat from the config, or from a scan when absent.
        let m_hat = match self.config.check.m_hat {
            Some(m) => m,
            None => {
                let scan = lyapunov_scan(
                    domain,
                    &barrier,
                    coeffs,
                    self.config.check.lyapunov_t.unwrap_or(1.0),
                    self.config.check.samples_per_level.unwrap_or(64),
                    self.seed,
                )?;
                scan.m_hat.max(0.0)
            }
        };
        let start = self.config.start_point(domain);
        let history = CadlagPath::point(&start)?;
        let inner_index = self.config.check.inner_index.unwrap_or_else(|| {
            (4.0 / domain.tube_width()).ceil() as u32
        });
        let checkpoints = self
            .config
            .check
            .checkpoints
            .clone()
            .unwrap_or_else(|| vec![*self.config.sim.horizons.last().unwrap()]);
        let report = supermartingale_check(
            domain,
            &barrier,
            coeffs,
            &history,
            &self.sim(),
            inner_index,
            &checkpoints,
            m_hat,
        )?;
        let outcome = if report.all_hold {
            Outcome::Pass
        } else {
            Outcome::Fail
        };

        let mut csv = String::from("s,mean_psi,se,slack,holds\n");
        for c in &report.checkpoints {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                c.s, c.mean_psi, c.se, c.slack, c.holds
            ));
        }
        let mut artifacts = std::mem::take(&mut self.artifacts);
        write_file(&self.out_dir, "supermartingale.csv", csv.as_bytes(), &mut artifacts)?;
        write_file(
            &self.out_dir,
            "report.json",
            &json_report("supermartingale", &self.config_hash, self.seed, outcome, &report),
            &mut artifacts,
        )?;
        self.artifacts = artifacts;

        let summary = format!(
            "supermartingale: {outcome:?}\n  Psi(start) = {:.6}, M_hat = {:.6}, Q_i offset = {:.4}\n  worst slack = {:.3e} over {} checkpoints",
            report.psi_start,
            report.m_hat_used,
            report.inner_offset,
            report.worst_slack,
            report.checkpoints.len()
        );
        Ok(RunResult { outcome, summary })
    }

    fn run_roundtrip(
        &mut self,
        domain: &Arc<dyn SmoothDomain>,
        coeffs: &dyn Coefficients,
    ) -> Result<RunResult, ConfigError> {
        let start = self.config.start_point(domain);
        let protocol = RoundtripProtocol {
            condition: self.config.condition_config(self.seed),
            sim: self.sim(),
            horizons: self.config.sim.horizons.clone(),
            start_point: start,
            closure_pullbacks: self
                .config
                .check
                .closure_pullbacks
                .clone()
                .unwrap_or_else(|| vec![0.2, 0.1]),
            inner_index: self.config.check.inner_index.unwrap_or_else(|| {
                (4.0 / domain.tube_width()).ceil() as u32
            }),
            checkpoints: self
                .config
                .check
                .checkpoints
                .clone()
                .unwrap_or_else(|| self.config.sim.horizons.clone()),
            lyapunov_t: self.config.check.lyapunov_t.unwrap_or(1.0),
            lyapunov_samples_per_level: self.config.check.samples_per_level.unwrap_or(64),
            exit_epsilon: self.config.check.exit_epsilon.unwrap_or(5e-4),
        };
        let report = theorem_roundtrip(domain, coeffs, &protocol)?;
        let outcome = match (report.verdict, report.direction) {
            (Consistency::Consistent, Direction::Viable) => Outcome::Pass,
            (Consistency::Consistent, _) => Outcome::Fail,
            (Consistency::Inconclusive, _) => Outcome::Inconclusive,
        };

        let rows: Vec<(f64, &ExitStats)> =
            report.exits.iter().map(|e| (e.horizon, &e.stats)).collect();
        let mut lcsv = String::from("b_level,n,min,max,mean\n");
        for s in std::iter::once(&report.lyapunov.deep).chain(&report.lyapunov.tube_levels) {
            lcsv.push_str(&format!(
                "{},{},{},{},{}\n",
                s.b_level, s.n, s.min, s.max, s.mean
            ));
        }
        let mut ccsv = String::from("index,t,tangency_residual,generator_value\n");
        for (i, s) in report.condition.samples.iter().enumerate() {
            ccsv.push_str(&format!(
                "{i},{},{},{}\n",
                s.t, s.tangency_residual, s.generator_value
            ));
        }
        let mut artifacts = std::mem::take(&mut self.artifacts);
        write_file(&self.out_dir, "exit_vs_horizon.csv", &exit_csv(&rows), &mut artifacts)?;
        write_file(&self.out_dir, "lpsi_vs_level.csv", lcsv.as_bytes(), &mut artifacts)?;
        write_file(&self.out_dir, "condition_samples.csv", ccsv.as_bytes(), &mut artifacts)?;
        write_file(
            &self.out_dir,
            "report.json",
            &json_report("roundtrip", &self.config_hash, self.seed, outcome, &report),
            &mut artifacts,
        )?;
        self.artifacts = artifacts;

        let last_exit = report.exits.last().map(|e| &e.stats);
        let summary = format!(
            "roundtrip: verdict {:?}, direction {:?} -> {outcome:?}\n  condition_ii: {:?} (max tangency {:.3e}, generator range [{:.6}, {:.6}])\n  exit at T = {}: p_hat = {} (Wilson [{:.3e}, {:.3e}])\n  lyapunov: M_hat = {:.6}, divergence {}\n  supermartingale: worst slack {:.3e}, holds {}\n  caveat: {}",
            report.verdict,
            report.direction,
            report.condition.verdict,
            report.condition.max_tangency,
            report.condition.min_generator,
            report.condition.max_generator,
            last_exit.map(|s| s.horizon).unwrap_or(f64::NAN),
            last_exit.map(|s| s.p_hat).unwrap_or(f64::NAN),
            last_exit.map(|s| s.wilson_lo).unwrap_or(f64::NAN),
            last_exit.map(|s| s.wilson_hi).unwrap_or(f64::NAN),
            report.lyapunov.m_hat,
            report.lyapunov.divergence,
            report.supermartingale.worst_slack,
            report.supermartingale.all_hold,
            report.caveat
        );
        Ok(RunResult { outcome, summary })
    }

    fn run_ito_verify(
        &mut self,
        domain: &Arc<dyn SmoothDomain>,
        coeffs: &dyn Coefficients,
    ) -> Result<RunResult, ConfigError> {
        let name = self
            .config
            .check
            .functional
            .clone()
            .unwrap_or_else(|| "endpoint_quadratic".into());
        let functional = functional_by_name(&name, domain.dim(), Some(domain.clone()))?;
        let ladder = self.config.check.dt_ladder.clone().expect("validated");
        let n_seeds = self.config.check.n_seeds.unwrap_or(64);
        let horizon = self.config.check.ito_horizon.unwrap_or(1.0);
        let start = self.config.start_point(domain);
        let history = CadlagPath::point(&start)?;

        let mut rows = Vec::new();
        for &dt in &ladder {
            let residuals: Vec<f64> = (0..n_seeds)
                .map(|s| {
                    let sim = SimConfig {
                        dt,
                        horizon,
                        seed: self.seed.wrapping_add(s as u64),
                        n_paths: 1,
                        store_increments: true,
                    };
                    let traj = simulate_with_stream(&history, coeffs, &sim, 0)?;
                    let scheme = FdScheme::default_for(&PathPair::with_zero_v(traj.path.clone()));
                    ito_residual(functional.as_ref(), &traj, &scheme)
                })
                .collect::<Result<_, _>>()?;
            rows.push((dt, rms(&residuals)));
        }

        // Monotone decrease within batch noise.
        let noise_allowance = 1.0 + 1.0 / (n_seeds as f64).sqrt();
        let monotone = rows.windows(2).all(|w| w[1].1 <= w[0].1 * noise_allowance);
        let outcome = if monotone { Outcome::Pass } else { Outcome::Fail };

        let mut csv = String::from("dt,rms_residual,n_seeds\n");
        for (dt, r) in &rows {
            csv.push_str(&format!("{dt},{r},{n_seeds}\n"));
        }
        let body = json!({
            "functional": name,
            "ladder": rows.iter().map(|(dt, r)| json!({"dt": dt, "rms_residual": r})).collect::<Vec<_>>(),
            "n_seeds": n_seeds,
            "horizon": horizon,
            "monotone_within_noise": monotone,
        });
        let mut artifacts = std::mem::take(&mut self.artifacts);
        write_file(&self.out_dir, "ito_residuals.csv", csv.as_bytes(), &mut artifacts)?;
        write_file(
            &self.out_dir,
            "report.json",
            &json_report("ito_verify", &self.config_hash, self.seed, outcome, &body),
            &mut artifacts,
        )?;
        self.artifacts = artifacts;

        let mut summary = format!("ito_verify: {outcome:?} for `{name}` over {n_seeds} seeds\n");
        for (dt, r) in &rows {
            summary.push_str(&format!("  dt = {dt:>9}: RMS residual = {r:.6e}\n"));
        }
        Ok(RunResult { outcome, summary })
    }
}

/// One-page human summary; excluded from reproducibility guarantees.
pub fn print_summary(result: &RunResult, out_dir: &Path) {
    println!("{}", result.summary);
    println!("artifacts in {}", out_dir.display());
    let _ = std::io::stdout().flush();
}
