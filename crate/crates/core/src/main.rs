use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use entrynav::montecarlo::{run_paired, FigurePreset, HarnessError, RunHistory};
use entrynav::report::{emit_histories, emit_report, ReportError};
use entrynav::validate::run_checks;
use entrynav::{load_config, run_campaign, ConfigError, GainMode, ScenarioConfig};

const EXIT_VALIDATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

/// Desensitized EKF navigation for Mars atmospheric entry.
#[derive(Debug, Parser)]
#[command(name = "entrynav", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file; the built-in Mars entry preset when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    runs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Both)]
    mode: ModeArg,
    /// Filter and integrator step, s.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Sensitivity weights `w1,w2`.
    #[arg(long, global = true, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Worker threads; all cores when omitted. Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One run with per-epoch trajectories, sensitivities and error bounds.
    Simulate {
        #[arg(long, default_value_t = 0)]
        run_index: usize,
    },
    /// Monte Carlo campaign statistics.
    Montecarlo,
    /// Regenerates the data behind every figure preset.
    Figures,
    /// Numerical self-checks.
    Validate,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Ekf,
    Adekf,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<GainMode> {
        match self {
            ModeArg::Ekf => vec![GainMode::Ekf],
            ModeArg::Adekf => vec![GainMode::Adekf],
            ModeArg::Both => vec![GainMode::Ekf, GainMode::Adekf],
        }
    }
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Validation(String),
    Diverged(String),
    Runtime(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Diverged(_) => EXIT_DIVERGED,
            Failure::Runtime(_) => EXIT_VALIDATION,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Validation(m) | Failure::Diverged(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::EmptyReport { .. } => Failure::Diverged(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn scenario(common: &Common) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => ScenarioConfig::mars_entry(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(runs) = common.runs {
        if runs == 0 {
            return Err(Failure::Config("--runs must be at least 1".into()));
        }
        cfg.runs = runs;
    }
    if let Some(dt) = common.dt {
        let steps = cfg.horizon / dt;
        if !(dt > 0.0) || (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Failure::Config(format!(
                "--dt {dt} must be positive and divide the {} s horizon",
                cfg.horizon
            )));
        }
        cfg.dt = dt;
    }
    if let Some(w) = &common.weights {
        if w.len() != 2 {
            return Err(Failure::Config(format!("--weights takes two values, got {}", w.len())));
        }
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Failure::Config("--weights must be finite and nonnegative".into()));
        }
        cfg.weights = [w[0], w[1]];
    }
    Ok(cfg)
}

fn single_run(cfg: &ScenarioConfig, run_index: usize, modes: &[GainMode], dir: &Path) -> Result<Vec<RunHistory>, Failure> {
    let paired = run_paired(cfg, run_index, modes)?;
    emit_histories(&paired.histories, dir)?;
    for h in &paired.histories {
        if let Some(d) = &h.divergence {
            eprintln!("{} run {} diverged at {:.1} s: {}", h.mode, run_index, d.epoch, d.message);
        }
    }
    if paired.histories.iter().all(RunHistory::diverged) {
        return Err(Failure::Diverged(format!("every filter diverged in run {run_index}")));
    }
    Ok(paired.histories)
}

fn campaign(cfg: &ScenarioConfig, modes: &[GainMode], dir: &Path) -> Result<(), Failure> {
    let report = run_campaign(cfg, modes)?;
    emit_report(&report, dir)?;
    for stats in &report.modes {
        println!(
            "{}: {} runs used, {} diverged",
            stats.mode, stats.runs_used, stats.runs_diverged
        );
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let cfg = scenario(&cli.common)?;
    let modes = cli.common.mode.modes();
    let out = &cli.common.out;
    match cli.command {
        Command::Simulate { run_index } => {
            single_run(&cfg, run_index, &modes, out)?;
            println!("wrote run {run_index} to {}", out.display());
        }
        Command::Montecarlo => {
            campaign(&cfg, &modes, out)?;
            println!("wrote campaign statistics to {}", out.display());
        }
        Command::Figures => {
            for preset in FigurePreset::ALL {
                let dir = out.join(preset.name());
                let preset_cfg = preset.apply(&cfg);
                match preset {
                    FigurePreset::Campaign => campaign(&preset_cfg, &modes, &dir)?,
                    _ => {
                        single_run(&preset_cfg, 0, &modes, &dir)?;
                    }
                }
                println!("wrote {}", dir.display());
            }
        }
        Command::Validate => {
            let outcomes = run_checks(&cfg)?;
            for o in &outcomes {
                println!("{o}");
            }
            let failed: Vec<_> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
            if !failed.is_empty() {
                return Err(Failure::Validation(format!("failed checks: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.exit_code())
        }
    }
}
