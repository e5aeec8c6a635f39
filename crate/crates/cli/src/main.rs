//! Experiment runner: reproduces the reference-figure pipelines and the
//! verification suites, emitting plot-ready CSV/JSON with config sidecars.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use icap_core::experiments::{self, emit, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "icap",
    version,
    about = "Predictable/innovation capacity experiments for noisy driven reservoirs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config file; missing sections fall back to built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for grid cells; 0 keeps the library default.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Temperature sweep of the linear RLC reservoir vs the analytic curve.
    RlcSweep,
    /// Capacity grid over (beta, T) for the Duffing oscillator.
    DuffingGrid,
    /// Covariance-closure fit: planted synthetic or simulated grid.
    Covfit,
    /// Whitened-geometry walkthrough on the analytic RLC split.
    GeometryDemo,
    /// Typical-set packing family with its Fano curve.
    HardnessDemo,
    /// Randomized invariant suites across every module.
    Verify,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::RlcSweep => "rlc-sweep",
            Command::DuffingGrid => "duffing-grid",
            Command::Covfit => "covfit",
            Command::GeometryDemo => "geometry-demo",
            Command::HardnessDemo => "hardness-demo",
            Command::Verify => "verify",
        }
    }
}

/// Exit codes: 0 success, 1 invariant/runtime failure, 2 invalid config.
const EXIT_FAILURE: u8 = 1;
const EXIT_BAD_CONFIG: u8 = 2;

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        None => ExperimentConfig::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = Some(out.display().to_string());
    }
    if let Some(threads) = cli.threads {
        cfg.threads = Some(threads);
    }
    // A config that names an experiment must match the subcommand.
    if let Some(named) = &cfg.experiment {
        if named != cli.command.name() {
            return Err(anyhow!(
                "config names experiment '{named}' but subcommand is '{}'",
                cli.command.name()
            ));
        }
    }
    // When a config file is supplied, the chosen experiment's block must be
    // present.
    if cli.config.is_some() {
        let present = match cli.command {
            Command::RlcSweep => cfg.rlc_sweep.is_some(),
            Command::DuffingGrid => cfg.duffing_grid.is_some(),
            Command::Covfit => cfg.covfit.is_some(),
            Command::GeometryDemo => cfg.geometry_demo.is_some(),
            Command::HardnessDemo => cfg.hardness_demo.is_some(),
            Command::Verify => cfg.verify.is_some(),
        };
        if !present {
            return Err(anyhow!(
                "config has no [{}] section",
                cli.command.name().replace('-', "_")
            ));
        }
    }
    Ok(cfg)
}

fn error_report(stage: &str, err: &dyn std::fmt::Display) {
    let report = serde_json::json!({
        "error": err.to_string(),
        "stage": stage,
    });
    eprintln!("{}", serde_json::to_string_pretty(&report).expect("report"));
}

fn run(cli: &Cli, cfg: &ExperimentConfig) -> anyhow::Result<bool> {
    let seed = cfg.seed.unwrap_or(42);
    let out_dir = PathBuf::from(cfg.out_dir.clone().unwrap_or_else(|| "out".into()));
    match cli.command {
        Command::RlcSweep => {
            let sweep_cfg = cfg.rlc_sweep.clone().unwrap_or_default();
            let result = experiments::run_rlc_sweep(&sweep_cfg, seed)?;
            emit::rlc_sweep(&out_dir, &sweep_cfg, seed, &result)?;
            println!(
                "rlc-sweep: {} temperatures, max |sim - analytic| = ({:.4}, {:.4})",
                result.rows.len(),
                result.max_dev_ip,
                result.max_dev_i
            );
            println!("wrote {}", out_dir.join("rlc_sweep.csv").display());
            Ok(true)
        }
        Command::DuffingGrid => {
            let grid_cfg = cfg.duffing_grid.clone().unwrap_or_default();
            let cells = experiments::run_duffing_grid(&grid_cfg, seed)?;
            emit::duffing_grid(&out_dir, &grid_cfg, seed, &cells)?;
            let diverged = cells.iter().filter(|c| c.diverged).count();
            println!(
                "duffing-grid: {} cells ({} diverged)",
                cells.len(),
                diverged
            );
            println!("wrote {}", out_dir.join("duffing_grid.csv").display());
            Ok(true)
        }
        Command::Covfit => {
            let covfit_cfg = cfg.covfit.clone().unwrap_or_default();
            let result = experiments::run_covfit(&covfit_cfg, seed)?;
            emit::covfit(&out_dir, &covfit_cfg, seed, &result)?;
            match result.synthetic_recovery_error {
                Some(err) => println!(
                    "covfit (planted): recovery error {err:.3e}, capacity dev {:.4}",
                    result.max_capacity_dev
                ),
                None => println!(
                    "covfit: {} grid points, max capacity dev {:.4}",
                    result.curves.len(),
                    result.max_capacity_dev
                ),
            }
            println!("wrote {}", out_dir.join("covfit_curves.csv").display());
            Ok(true)
        }
        Command::GeometryDemo => {
            let demo_cfg = cfg.geometry_demo.clone().unwrap_or_default();
            let result = experiments::run_geometry_demo(&demo_cfg)?;
            emit::geometry_demo(&out_dir, &demo_cfg, seed, &result)?;
            println!(
                "geometry-demo: C_ip = {:.4}, C_i = {:.4}, block dim {}, covering lb {:.3}",
                result.c_ip, result.c_i, result.block_dim, result.covering_lb
            );
            println!("wrote {}", out_dir.join("geometry_demo.json").display());
            Ok(true)
        }
        Command::HardnessDemo => {
            let demo_cfg = cfg.hardness_demo.clone().unwrap_or_default();
            let result = experiments::run_hardness_demo(&demo_cfg, seed)?;
            emit::hardness_demo(&out_dir, &demo_cfg, seed, &result)?;
            println!(
                "hardness-demo: |V| = {}, min TV = {:.4}, max KL = {:.4}, n* = {}",
                result.summary.n_codewords,
                result.summary.min_tv,
                result.summary.max_kl,
                result.sample_complexity_n
            );
            println!("wrote {}", out_dir.join("hardness_family.json").display());
            Ok(true)
        }
        Command::Verify => {
            let verify_cfg = cfg.verify.clone().unwrap_or_default();
            let report = experiments::run_verify(&verify_cfg, seed);
            emit::verify(&out_dir, &verify_cfg, seed, &report)?;
            for suite in &report.suites {
                println!(
                    "[{}] {} - {}",
                    if suite.pass { "PASS" } else { "FAIL" },
                    suite.name,
                    suite.detail
                );
            }
            println!(
                "verify: {}/{} suites passed in {:.1}s",
                report.suites.iter().filter(|s| s.pass).count(),
                report.suites.len(),
                report.elapsed_seconds
            );
            if report.elapsed_seconds > 600.0 {
                eprintln!(
                    "warning: verify took {:.0}s, above the 600s budget",
                    report.elapsed_seconds
                );
            }
            Ok(report.all_pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(err) => {
            error_report("config", &err);
            return ExitCode::from(EXIT_BAD_CONFIG);
        }
    };
    if let Some(threads) = cfg.threads {
        if threads > 0 {
            if let Err(err) = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
            {
                error_report("threads", &err);
                return ExitCode::from(EXIT_BAD_CONFIG);
            }
        }
    }
    match run(&cli, &cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILURE),
        Err(err) => {
            error_report("run", &err);
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
