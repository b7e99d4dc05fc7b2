//! Report types and their on-disk forms: `report.json` plus flat CSV tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rbai_core::policy::TrialRecord;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const REPORT_FILE: &str = "report.json";
pub const TRIALS_FILE: &str = "trials.csv";
pub const SWEEP_FILE: &str = "lp_sweep.csv";
pub const DRIFT_FILE: &str = "drift.csv";

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct ExperimentReport {
    pub instance: InstanceSummary,
    pub policy: PolicySummary,
    pub theory: Theory,
    pub diagnostics: Diagnostics,
    #[serde(default)]
    pub monte_carlo: Option<MonteCarloSummary>,
    #[serde(default)]
    pub series: Vec<SeriesPoint>,
    #[serde(default)]
    pub drift: Option<DriftSummary>,
    #[serde(default)]
    pub lp_sweep: Vec<SweepRow>,
    #[serde(default)]
    pub checks: Vec<CheckResult>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct InstanceSummary {
    pub arms: usize,
    pub chain_states: usize,
    pub tpm_means: Vec<f64>,
    pub assignment: Vec<usize>,
    pub best_arm: usize,
    pub delay_states: usize,
    pub configurations: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct PolicySummary {
    #[serde(rename = "L")]
    pub confidence: f64,
    pub eta: f64,
    #[serde(rename = "R")]
    pub max_delay: usize,
    pub max_horizon: u64,
    pub threshold: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct Theory {
    /// Values for the true configuration.
    #[serde(rename = "T_R_star")]
    pub t_star: f64,
    #[serde(rename = "T_R_unif")]
    pub t_unif: f64,
    /// `1 / (eta T_unif + (1 - eta) T_R*)`: limit of `E[tau] / log L`.
    pub stopping_bound: f64,
    /// `d(1/L, 1 - 1/L) / T_R*`, with `d` the binary relative entropy.
    pub lower_bound_proxy: f64,
    pub per_configuration: Vec<ConfigurationTheory>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct ConfigurationTheory {
    pub assignment: Vec<usize>,
    #[serde(rename = "T_R_star")]
    pub t_star: f64,
    #[serde(rename = "T_R_unif")]
    pub t_unif: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct Diagnostics {
    pub uniform_stationary_residual: f64,
    pub uniform_occupancy_residual: f64,
    pub optimal_occupancy_residual: f64,
    pub duality_gap: f64,
    pub dual_infeasibility: f64,
    pub simplex_pivots: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct MonteCarloSummary {
    pub trials: u64,
    pub errors: u64,
    pub error_rate: f64,
    /// Clopper-Pearson 99% interval for the error probability.
    pub error_ci_low: f64,
    pub error_ci_high: f64,
    pub mean_tau: f64,
    pub median_tau: f64,
    pub tau_std_error: f64,
    pub tau_over_log_l: f64,
    pub hit_horizon: u64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct SeriesPoint {
    #[serde(rename = "L")]
    pub confidence: f64,
    pub trials: u64,
    pub errors: u64,
    pub mean_tau: f64,
    pub tau_std_error: f64,
    pub tau_over_log_l: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct DriftSummary {
    pub horizon: u64,
    pub mode: String,
    pub alternatives: Vec<Vec<usize>>,
    /// `sum nu_eta kl` per alternative.
    pub limits: Vec<f64>,
    /// `Z_CC'(n) / n` at the horizon.
    pub final_normalized_llr: Vec<f64>,
    pub relative_errors: Vec<f64>,
    /// Slopes over the second half of the run.
    pub late_slopes: Vec<f64>,
    pub occupancy_gap: f64,
    pub last_disagreement: Option<u64>,
    pub checkpoints: Vec<DriftPoint>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct DriftPoint {
    pub time: u64,
    pub normalized_llr: Vec<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct SweepRow {
    #[serde(rename = "R")]
    pub max_delay: usize,
    #[serde(rename = "T_R_star")]
    pub t_star: f64,
    #[serde(rename = "T_R_unif")]
    pub t_unif: f64,
    pub n_states: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Serialize)]
struct TrialRow {
    seed: u64,
    tau: u64,
    declared: usize,
    error: u8,
    hit_horizon: u8,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(CliError::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist")))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e))
}

pub fn write_report(dir: &Path, report: &ExperimentReport) -> Result<()> {
    ensure_dir(dir)?;
    let path = dir.join(REPORT_FILE);
    let mut out = create(&path)?;
    serde_json::to_writer_pretty(&mut out, report).map_err(|e| CliError::io(&path, e.into()))?;
    out.write_all(b"\n").and_then(|_| out.flush()).map_err(|e| CliError::io(&path, e))
}

pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

/// `seed,tau,declared,error,hit_horizon`, one row per trial in trial order.
pub fn write_trials(dir: &Path, records: &[TrialRecord]) -> Result<()> {
    ensure_dir(dir)?;
    let path = dir.join(TRIALS_FILE);
    let mut w = csv::Writer::from_writer(create(&path)?);
    for r in records {
        w.serialize(TrialRow {
            seed: r.seed,
            tau: r.stop_time,
            declared: r.declared,
            error: r.error as u8,
            hit_horizon: r.hit_horizon as u8,
        })
        .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))
}

/// `R,T_R_star,T_R_unif,n_states`.
pub fn write_sweep(dir: &Path, rows: &[SweepRow]) -> Result<()> {
    ensure_dir(dir)?;
    let path = dir.join(SWEEP_FILE);
    let mut w = csv::Writer::from_writer(create(&path)?);
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))
}

/// `n` followed by `Z_CC'(n)/n` for each alternative.
pub fn write_drift(dir: &Path, drift: &DriftSummary) -> Result<()> {
    ensure_dir(dir)?;
    let path = dir.join(DRIFT_FILE);
    let mut w = csv::Writer::from_writer(create(&path)?);
    let mut header = vec!["n".to_string()];
    header.extend((0..drift.alternatives.len()).map(|k| format!("llr_over_n_{k}")));
    w.write_record(&header).map_err(|e| csv_error(&path, e))?;
    for p in &drift.checkpoints {
        let mut row = vec![p.time.to_string()];
        row.extend(p.normalized_llr.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))
}
