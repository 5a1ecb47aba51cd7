//! `viab`: batch experiment runner for the path-dependent viability
//! laboratory. Exit codes are the machine contract:
//! 0 pass, 1 fail, 2 usage or config error, 3 inconclusive.

mod config;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, ExperimentConfig, CHECK_KINDS};
use runner::{print_summary, Runner};

#[derive(Parser)]
#[command(
    name = "viab",
    about = "Viability checks for path-dependent SDEs on smooth domains",
    version
)]
struct Cli {
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (default: config [output].dir, else $VIAB_OUT_DIR, else ./out).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Worker threads (must not change results; 0 = rayon default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the check selected in the config and write artifacts.
    Run { config: PathBuf },
    /// Run the change-of-variable residual ladder for a catalog functional.
    ItoVerify { config: PathBuf },
    /// List the coefficient, functional and domain catalogs.
    Catalog,
    /// Parse and validate a config, printing its hash.
    Validate { config: PathBuf },
}

fn resolve_out_dir(cli_dir: &Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    cli_dir
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var("VIAB_OUT_DIR").ok().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn execute(cli: &Cli) -> Result<i32, ConfigError> {
    if cli.threads > 0 {
        // Ignore the error when a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    match &cli.command {
        Command::Run { config } => {
            let (cfg, hash) = ExperimentConfig::load(config)?;
            let out_dir = resolve_out_dir(&cli.out_dir, &cfg);
            let mut runner = Runner::new(&cfg, hash, cli.seed, out_dir.clone());
            let result = runner.run()?;
            print_summary(&result, &out_dir);
            Ok(result.outcome.exit_code())
        }
        Command::ItoVerify { config } => {
            let (mut cfg, hash) = ExperimentConfig::load(config)?;
            if cfg.check.kind != "ito_verify" {
                cfg.check.kind = "ito_verify".into();
                cfg.validate().map_err(|e| match e {
                    ConfigError::Invalid { field, message } => ConfigError::Invalid {
                        field,
                        message: format!("{message} (required by ito-verify)"),
                    },
                    other => other,
                })?;
            }
            let out_dir = resolve_out_dir(&cli.out_dir, &cfg);
            let mut runner = Runner::new(&cfg, hash, cli.seed, out_dir.clone());
            let result = runner.run()?;
            print_summary(&result, &out_dir);
            Ok(result.outcome.exit_code())
        }
        Command::Catalog => {
            println!("checks: {}", CHECK_KINDS.join(", "));
            println!(
                "drifts: {}",
                viab_core::sde::catalog::DRIFT_NAMES.join(", ")
            );
            println!(
                "diffusions: {}",
                viab_core::sde::catalog::SIGMA_NAMES.join(", ")
            );
            println!(
                "functionals: {}",
                viab_core::calculus::catalog::FUNCTIONAL_NAMES.join(", ")
            );
            println!("domains: ball, ellipsoid");
            Ok(0)
        }
        Command::Validate { config } => {
            let (_cfg, hash) = ExperimentConfig::load(config)?;
            println!("ok {hash}");
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
