//! Experiment drivers: parallel Monte Carlo trials, drift runs, LP sweeps and
//! structural verification. LP solves happen before any trial starts.

use log::{debug, info};
use rayon::prelude::*;
use rbai_core::instance::ProblemInstance;
use rbai_core::llr::batch_log_likelihoods;
use rbai_core::markov::bernoulli_kl;
use rbai_core::occupancy::{
    chain_residual, induced_chain, induced_chain_is_ergodic, verify_occupancy, SamplingRule,
};
use rbai_core::policy::{
    recompute_initial, run_nonstopping, run_rdcr_bai, stopping_threshold, trial_seed, DriftMode,
    PolicyConfig, PolicyTables, TrialRecord,
};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::config::{DriftPolicy, Experiment};
use crate::error::{CliError, Result};
use crate::report::{
    CheckResult, ConfigurationTheory, Diagnostics, DriftPoint, DriftSummary, ExperimentReport,
    InstanceSummary, MonteCarloSummary, PolicySummary, SeriesPoint, SweepRow, Theory,
};

pub const STATIONARY_TOL: f64 = 1e-10;
pub const OCCUPANCY_TOL: f64 = 1e-8;
pub const LEDGER_TOL: f64 = 1e-9;
pub const MONOTONE_TOL: f64 = 1e-7;
/// Horizon of the ledger/batch consistency run.
pub const LEDGER_CHECK_STEPS: u64 = 10_000;

pub fn build_tables(exp: &Experiment) -> Result<PolicyTables> {
    let tables = PolicyTables::build(&exp.instance, exp.policy.eta, exp.policy.max_delay)?;
    info!(
        "tables ready: {} configurations, {} delay states",
        tables.configs().len(),
        tables.space().len()
    );
    Ok(tables)
}

/// Runs `trials` independent trials on a pool of `workers` threads.
///
/// Trial `i` always uses `trial_seed(base_seed, i)` and results come back in
/// trial order, so the output does not depend on the worker count.
pub fn run_trials(
    instance: &ProblemInstance,
    tables: &PolicyTables,
    policy: &PolicyConfig,
    trials: u64,
    base_seed: u64,
    workers: usize,
) -> Result<Vec<TrialRecord>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::io("<thread pool>", std::io::Error::other(e)))?;
    let records = pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|i| run_rdcr_bai(instance, tables, policy, trial_seed(base_seed, i)))
            .collect::<rbai_core::Result<Vec<_>>>()
    })?;
    let capped = records.iter().filter(|r| r.hit_horizon).count();
    if capped > 0 {
        log::warn!("{capped} trial(s) reached the horizon cap of {}", policy.max_horizon);
    }
    Ok(records)
}

/// Clopper-Pearson interval at confidence `level` for `k` successes in `n`.
pub fn clopper_pearson(k: u64, n: u64, level: f64) -> (f64, f64) {
    let alpha = 1.0 - level;
    let (kf, nf) = (k as f64, n as f64);
    let low = if k == 0 { 0.0 } else { Beta::new(kf, nf - kf + 1.0).unwrap().inverse_cdf(alpha / 2.0) };
    let high = if k == n { 1.0 } else { Beta::new(kf + 1.0, nf - kf).unwrap().inverse_cdf(1.0 - alpha / 2.0) };
    (low, high)
}

fn tau_stats(records: &[TrialRecord]) -> (f64, f64, f64) {
    let n = records.len() as f64;
    let mean = records.iter().map(|r| r.stop_time as f64).sum::<f64>() / n;
    let var = records.iter().map(|r| (r.stop_time as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let mut taus: Vec<u64> = records.iter().map(|r| r.stop_time).collect();
    taus.sort_unstable();
    let mid = taus.len() / 2;
    let median = if taus.len().is_multiple_of(2) {
        (taus[mid - 1] + taus[mid]) as f64 / 2.0
    } else {
        taus[mid] as f64
    };
    (mean, median, (var / n).sqrt())
}

pub fn summarize_trials(records: &[TrialRecord], confidence: f64) -> MonteCarloSummary {
    let trials = records.len() as u64;
    let errors = records.iter().filter(|r| r.error).count() as u64;
    let (low, high) = clopper_pearson(errors, trials, 0.99);
    let (mean, median, se) = tau_stats(records);
    MonteCarloSummary {
        trials,
        errors,
        error_rate: errors as f64 / trials as f64,
        error_ci_low: low,
        error_ci_high: high,
        mean_tau: mean,
        median_tau: median,
        tau_std_error: se,
        tau_over_log_l: mean / confidence.ln(),
        hit_horizon: records.iter().filter(|r| r.hit_horizon).count() as u64,
    }
}

pub fn series_point(records: &[TrialRecord], confidence: f64) -> SeriesPoint {
    let (mean, _, se) = tau_stats(records);
    SeriesPoint {
        confidence,
        trials: records.len() as u64,
        errors: records.iter().filter(|r| r.error).count() as u64,
        mean_tau: mean,
        tau_std_error: se,
        tau_over_log_l: mean / confidence.ln(),
    }
}

/// Report skeleton: instance, policy, theoretical constants and LP diagnostics.
pub fn base_report(exp: &Experiment, tables: &PolicyTables) -> Result<ExperimentReport> {
    let inst = &exp.instance;
    let truth = tables.truth_index(inst);
    let an = tables.analysis(truth);
    let eta = exp.policy.eta;
    let epsilon = 1.0 / exp.policy.confidence;
    let lower = if epsilon < 0.5 { bernoulli_kl(epsilon, 1.0 - epsilon)? / an.t_star() } else { 0.0 };
    let mut diag = Diagnostics::default();
    for c in 0..tables.configs().len() {
        let a = tables.analysis(c);
        let q = induced_chain(tables.space(), &a.kernel, &SamplingRule::uniform(tables.space()));
        diag.uniform_stationary_residual = diag
            .uniform_stationary_residual
            .max(chain_residual(tables.space().len(), &q, &a.uniform_stationary));
        diag.uniform_occupancy_residual = diag
            .uniform_occupancy_residual
            .max(verify_occupancy(&a.uniform, &a.kernel, tables.space()).max());
        diag.optimal_occupancy_residual = diag
            .optimal_occupancy_residual
            .max(verify_occupancy(&a.optimal.measure, &a.kernel, tables.space()).max());
        diag.duality_gap = diag.duality_gap.max(a.optimal.diagnostics.duality_gap);
        diag.dual_infeasibility = diag.dual_infeasibility.max(a.optimal.diagnostics.dual_infeasibility);
        diag.simplex_pivots += a.optimal.diagnostics.pivots;
    }
    Ok(ExperimentReport {
        instance: InstanceSummary {
            arms: inst.arms(),
            chain_states: inst.chain_states(),
            tpm_means: inst.tpm_means().to_vec(),
            assignment: inst.truth().perm().to_vec(),
            best_arm: inst.truth().best_arm_position(),
            delay_states: tables.space().len(),
            configurations: tables.configs().len(),
        },
        policy: PolicySummary {
            confidence: exp.policy.confidence,
            eta,
            max_delay: exp.policy.max_delay,
            max_horizon: exp.policy.max_horizon,
            threshold: stopping_threshold(exp.policy.confidence, inst.arms())?,
        },
        theory: Theory {
            t_star: an.t_star(),
            t_unif: an.t_unif,
            stopping_bound: an.stopping_bound(eta),
            lower_bound_proxy: lower,
            per_configuration: (0..tables.configs().len())
                .map(|c| ConfigurationTheory {
                    assignment: tables.configs().get(c).perm().to_vec(),
                    t_star: tables.analysis(c).t_star(),
                    t_unif: tables.analysis(c).t_unif,
                })
                .collect(),
        },
        diagnostics: diag,
        ..ExperimentReport::default()
    })
}

/// `T_R*` and `T_R^unif` of the true configuration for each maximum delay.
pub fn lp_sweep(instance: &ProblemInstance, r_values: &[usize], eta: f64) -> Result<Vec<SweepRow>> {
    r_values
        .iter()
        .map(|&r| {
            let tables = PolicyTables::build(instance, eta, r)?;
            let an = tables.analysis(tables.truth_index(instance));
            debug!("R={r}: T*={} T_unif={} pivots={}", an.t_star(), an.t_unif, an.optimal.diagnostics.pivots);
            Ok(SweepRow { max_delay: r, t_star: an.t_star(), t_unif: an.t_unif, n_states: tables.space().len() })
        })
        .collect()
}

/// Checkpoint times: powers of two from 1024, plus half the horizon and the horizon.
pub fn drift_checkpoints(horizon: u64) -> Vec<u64> {
    let mut marks: Vec<u64> = (10..64).map(|e| 1u64 << e).take_while(|&t| t < horizon).collect();
    marks.push(horizon / 2);
    marks.push(horizon);
    marks.sort_unstable();
    marks.dedup();
    marks
}

pub fn drift(
    exp: &Experiment,
    tables: &PolicyTables,
    horizon: u64,
    policy: DriftPolicy,
    seed: u64,
) -> Result<DriftSummary> {
    let inst = &exp.instance;
    let truth = tables.truth_index(inst);
    let mode = match policy {
        DriftPolicy::Fixed => DriftMode::Fixed(truth),
        DriftPolicy::Estimate => DriftMode::Estimate,
    };
    let marks = drift_checkpoints(horizon);
    let rec = run_nonstopping(inst, tables, mode, horizon, &marks, seed)?;
    let an = tables.analysis(truth);
    let limits = an.mixture_drifts();
    let last = rec.checkpoints.len() - 1;
    let half = rec.checkpoints.iter().position(|c| c.time == horizon / 2).unwrap_or(0);
    let final_llr = rec.checkpoints[last].normalized_llr.clone();
    let relative_errors = final_llr.iter().zip(&limits).map(|(z, l)| (z - l).abs() / l).collect();
    let occupancy_gap = rec.counts.empirical_occupancy().sup_distance(&an.mixture);
    Ok(DriftSummary {
        horizon,
        mode: match policy {
            DriftPolicy::Fixed => "fixed".into(),
            DriftPolicy::Estimate => "estimate".into(),
        },
        alternatives: rec.alternatives.iter().map(|&c| tables.configs().get(c).perm().to_vec()).collect(),
        limits,
        final_normalized_llr: final_llr,
        relative_errors,
        late_slopes: rec.slopes(half, last),
        occupancy_gap,
        last_disagreement: rec.last_disagreement,
        checkpoints: rec
            .checkpoints
            .iter()
            .map(|c| DriftPoint { time: c.time, normalized_llr: c.normalized_llr.clone() })
            .collect(),
    })
}

fn check(name: &str, value: f64, tolerance: f64) -> CheckResult {
    CheckResult { name: name.into(), value, tolerance, pass: value <= tolerance }
}

/// Structural checks on the precomputed tables and a short ledger run.
///
/// With `previous`, the theoretical constants must also match it exactly.
pub fn verify(
    exp: &Experiment,
    tables: &PolicyTables,
    report: &ExperimentReport,
    previous: Option<&ExperimentReport>,
) -> Result<Vec<CheckResult>> {
    let inst = &exp.instance;
    let d = &report.diagnostics;
    let mut checks = vec![
        check("uniform stationary residual", d.uniform_stationary_residual, STATIONARY_TOL),
        check("uniform occupancy residual", d.uniform_occupancy_residual, OCCUPANCY_TOL),
        check("optimal occupancy residual", d.optimal_occupancy_residual, OCCUPANCY_TOL),
        check("LP duality gap", d.duality_gap, LEDGER_TOL),
    ];
    let non_ergodic = (0..tables.configs().len())
        .filter(|&c| {
            let a = tables.analysis(c);
            !induced_chain_is_ergodic(tables.space(), &a.kernel, &a.rule)
        })
        .count();
    checks.push(check("non-ergodic mixture chains", non_ergodic as f64, 0.0));

    let rec = run_nonstopping(
        inst,
        tables,
        DriftMode::Estimate,
        LEDGER_CHECK_STEPS,
        &[LEDGER_CHECK_STEPS],
        exp.file.experiment.seed,
    )?;
    let initial = recompute_initial(inst, tables, &rec.first_obs)?;
    let batch = batch_log_likelihoods(&initial, &rec.counts, tables.space(), tables.configs(), tables.logs());
    let z = rec.ledger.values();
    let mut gap = 0.0_f64;
    for c in 0..z.len() {
        gap = gap.max(((z[c] - z[0]) - (batch[c] - batch[0])).abs());
    }
    checks.push(check("ledger vs batch LLR", gap, LEDGER_TOL));
    let expected = LEDGER_CHECK_STEPS - inst.arms() as u64;
    let conservation = (rec.counts.recount() as f64 - expected as f64).abs();
    checks.push(check("count conservation", conservation, 0.0));

    let r = exp.policy.max_delay;
    let next = lp_sweep(inst, &[r + 1], exp.policy.eta)?;
    checks.push(check("T_R* decrease from R to R+1", (report.theory.t_star - next[0].t_star).max(0.0), MONOTONE_TOL));

    if let Some(prev) = previous {
        let same = prev.theory == report.theory && prev.policy == report.policy;
        checks.push(check("theory reproduces previous report", if same { 0.0 } else { 1.0 }, 0.0));
    }
    Ok(checks)
}
