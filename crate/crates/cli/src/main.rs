use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use rbai::config::{self, Experiment, Mode};
use rbai::harness;
use rbai::report::{self, ExperimentReport};
use rbai::{CliError, Result};
use rbai_core::policy::PolicyConfig;

/// Fixed-confidence best-arm identification for restless Markov arms.
#[derive(Parser)]
#[command(name = "rbai", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// One of off, error, warn, info, debug, trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
}

#[derive(Subcommand)]
enum Verb {
    /// Run the experiment named by `experiment.mode` (Monte Carlo by default).
    Run(Common),
    /// Never-stopping run: LLR drift and occupancy convergence.
    Drift(Common),
    /// T_R* and T_R^unif over `experiment.r_values`.
    Sweep(Common),
    /// Structural checks; exits with 3 if any fails.
    Verify(Common),
    /// Print the instance summary and theoretical constants.
    Describe(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Existing directory for report.json and the CSV tables.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `experiment.workers`.
    #[arg(long)]
    workers: Option<usize>,
}

fn load(common: &Common) -> Result<Experiment> {
    let mut exp = config::load(&common.config)?;
    if let Some(seed) = common.seed {
        exp.file.experiment.seed = seed;
    }
    if let Some(workers) = common.workers {
        if workers == 0 {
            return Err(CliError::Parse("--workers must be at least 1".into()));
        }
        exp.file.experiment.workers = workers;
    }
    Ok(exp)
}

fn monte_carlo(exp: &Experiment, out: &Path) -> Result<ExperimentReport> {
    let tables = harness::build_tables(exp)?;
    let mut report = harness::base_report(exp, &tables)?;
    let e = &exp.file.experiment;
    let records = harness::run_trials(&exp.instance, &tables, &exp.policy, e.trials, e.seed, e.workers)?;
    let summary = harness::summarize_trials(&records, exp.policy.confidence);
    info!(
        "{} trials: error rate {} (99% CI {}..{}), mean tau {}",
        summary.trials, summary.error_rate, summary.error_ci_low, summary.error_ci_high, summary.mean_tau
    );
    report.monte_carlo = Some(summary);
    report::write_trials(out, &records)?;
    for &l in &e.confidence_levels {
        let policy = PolicyConfig { confidence: l, ..exp.policy };
        policy.validate_for(exp.instance.arms())?;
        let recs = harness::run_trials(&exp.instance, &tables, &policy, e.trials, e.seed, e.workers)?;
        report.series.push(harness::series_point(&recs, l));
    }
    Ok(report)
}

fn drift(exp: &Experiment, out: &Path) -> Result<ExperimentReport> {
    let tables = harness::build_tables(exp)?;
    let mut report = harness::base_report(exp, &tables)?;
    let e = &exp.file.experiment;
    let d = harness::drift(exp, &tables, e.horizon, e.drift_policy, e.seed)?;
    info!("drift at n={}: {:?} vs limits {:?}", d.horizon, d.final_normalized_llr, d.limits);
    report::write_drift(out, &d)?;
    report.drift = Some(d);
    Ok(report)
}

fn sweep(exp: &Experiment, out: &Path) -> Result<ExperimentReport> {
    let tables = harness::build_tables(exp)?;
    let mut report = harness::base_report(exp, &tables)?;
    report.lp_sweep = harness::lp_sweep(&exp.instance, &exp.r_values(), exp.policy.eta)?;
    report::write_sweep(out, &report.lp_sweep)?;
    Ok(report)
}

fn verify(exp: &Experiment, out: &Path) -> Result<ExperimentReport> {
    let tables = harness::build_tables(exp)?;
    let mut report = harness::base_report(exp, &tables)?;
    let previous_path = out.join(report::REPORT_FILE);
    let previous = if previous_path.is_file() { Some(report::read_report(&previous_path)?) } else { None };
    report.checks = harness::verify(exp, &tables, &report, previous.as_ref())?;
    for c in &report.checks {
        println!("{} {}: {:e} (tolerance {:e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
    }
    Ok(report)
}

fn execute(verb: Verb) -> Result<()> {
    let (common, mode) = match &verb {
        Verb::Run(c) => (c, None),
        Verb::Drift(c) => (c, Some(Mode::Drift)),
        Verb::Sweep(c) => (c, Some(Mode::LpSweep)),
        Verb::Verify(c) => (c, Some(Mode::Verify)),
        Verb::Describe(c) => {
            let exp = load(c)?;
            let tables = harness::build_tables(&exp)?;
            let report = harness::base_report(&exp, &tables)?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            println!("{text}");
            return Ok(());
        }
    };
    let exp = load(common)?;
    let out = &common.out;
    let mode = mode.unwrap_or(exp.file.experiment.mode);
    let report = match mode {
        Mode::Montecarlo => monte_carlo(&exp, out)?,
        Mode::Drift => drift(&exp, out)?,
        Mode::LpSweep => sweep(&exp, out)?,
        Mode::Verify => verify(&exp, out)?,
    };
    report::write_report(out, &report)?;
    let failed = report.checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(CliError::VerifyFailed { failed });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    match execute(cli.verb) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
