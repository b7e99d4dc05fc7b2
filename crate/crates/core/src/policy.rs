//! The restless environment and the delay-constrained track-and-stop policy.
//!
//! Time runs `t = 0, 1, ...`. At each tick the learner picks an arm, sees that
//! arm's current chain state, and then every arm's chain advances one step.
//! Arms `0..K` are sampled in order at `t = 0..K`; afterwards the learner
//! tracks the delay state, samples from the mixture rule of its current
//! configuration estimate, and stops once the GLR statistic of the estimate
//! clears `log(L (K-1) (K-1)!)`.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::delay::{DelayState, StateSpace};
use crate::instance::{ConfigurationSet, ProblemInstance};
use crate::llr::{initial_terms, CountTable, LlrLedger, LogKernelCache};
use crate::markov::PowerCache;
use crate::occupancy::{analyze_configuration, ConfigurationAnalysis, KlCache, SamplingRule};
use crate::{Error, Result};

pub const DEFAULT_MAX_HORIZON: u64 = 10_000_000;

/// Stream ids carved out of one trial seed. Arm `a` uses stream `ARM_STREAM_BASE + a`.
pub const POLICY_STREAM: u64 = 1;
pub const TIE_BREAK_STREAM: u64 = 2;
pub const ARM_STREAM_BASE: u64 = 16;

/// A ChaCha8 generator on a named stream of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-trial seed derived from a base seed (SplitMix64 finalizer).
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    let mut z = base.wrapping_add(trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn invert(cumulative: &[f64], u: f64) -> usize {
    cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1)
}

fn cumulative(row: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    row.iter()
        .map(|&p| {
            acc += p;
            acc
        })
        .collect()
}

/// `K` restless chains under the true assignment, each with its own stream.
#[derive(Clone, Debug)]
pub struct Environment {
    chain_states: usize,
    /// cumulative rows of each arm's true TPM, `[arm][i * S + j]`
    kernels: Vec<Vec<f64>>,
    states: Vec<usize>,
    time: u64,
    rngs: Vec<ChaCha8Rng>,
}

impl Environment {
    /// Draws every `X_0^a` independently from the initial law.
    pub fn new(instance: &ProblemInstance, seed: u64) -> Self {
        let k = instance.arms();
        let s = instance.chain_states();
        let phi = cumulative(instance.initial().probs());
        let mut rngs: Vec<ChaCha8Rng> =
            (0..k).map(|a| stream_rng(seed, ARM_STREAM_BASE + a as u64)).collect();
        let states = rngs.iter_mut().map(|r| invert(&phi, r.random())).collect();
        let kernels = (0..k)
            .map(|a| {
                let p = &instance.bank()[instance.truth().tpm_of(a)];
                (0..s).flat_map(|i| cumulative(p.row(i))).collect()
            })
            .collect();
        Self { chain_states: s, kernels, states, time: 0, rngs }
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    /// Returns the current state of `arm`, then advances every chain one step.
    pub fn observe_and_advance(&mut self, arm: usize) -> usize {
        let obs = self.states[arm];
        let s = self.chain_states;
        for ((x, kernel), rng) in self.states.iter_mut().zip(&self.kernels).zip(&mut self.rngs) {
            let row = &kernel[*x * s..(*x + 1) * s];
            *x = invert(row, rng.random());
        }
        self.time += 1;
        obs
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyConfig {
    /// Confidence scale `L > 1`; the target error probability is `1/L`.
    pub confidence: f64,
    /// Weight of the uniform occupancy in the sampling mixture, in `(0, 1]`.
    pub eta: f64,
    /// Maximum delay `R > K`.
    pub max_delay: usize,
    pub max_horizon: u64,
}

impl PolicyConfig {
    pub fn new(confidence: f64, eta: f64, max_delay: usize) -> Result<Self> {
        let cfg = Self { confidence, eta, max_delay, max_horizon: DEFAULT_MAX_HORIZON };
        cfg.check()?;
        Ok(cfg)
    }

    /// `L = 1/epsilon`.
    pub fn from_error_probability(epsilon: f64, eta: f64, max_delay: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter { name: "epsilon", value: epsilon });
        }
        Self::new(1.0 / epsilon, eta, max_delay)
    }

    pub fn with_max_horizon(mut self, max_horizon: u64) -> Self {
        self.max_horizon = max_horizon;
        self
    }

    fn check(&self) -> Result<()> {
        if !(self.confidence > 1.0 && self.confidence.is_finite()) {
            return Err(Error::InvalidParameter { name: "L", value: self.confidence });
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidParameter { name: "eta", value: self.eta });
        }
        Ok(())
    }

    pub fn validate_for(&self, arms: usize) -> Result<()> {
        self.check()?;
        if self.max_delay <= arms {
            return Err(Error::DelayBoundTooSmall { max_delay: self.max_delay, arms });
        }
        Ok(())
    }
}

/// `log(L (K-1) (K-1)!)`.
pub fn stopping_threshold(confidence: f64, arms: usize) -> Result<f64> {
    if !(confidence > 1.0) {
        return Err(Error::InvalidParameter { name: "L", value: confidence });
    }
    if arms < 2 {
        return Err(Error::InvalidParameter { name: "arm count", value: arms as f64 });
    }
    let log_factorial: f64 = (2..arms).map(|m| libm::log(m as f64)).sum();
    Ok(libm::log(confidence) + libm::log((arms - 1) as f64) + log_factorial)
}

/// Everything precomputed before trials: delay space, kernels and one
/// analysis (LP solve, uniform occupancy, sampling rule) per configuration.
#[derive(Clone, Debug)]
pub struct PolicyTables {
    configs: ConfigurationSet,
    space: StateSpace,
    powers: PowerCache,
    logs: LogKernelCache,
    analyses: Vec<ConfigurationAnalysis>,
    eta: f64,
}

impl PolicyTables {
    pub fn build(instance: &ProblemInstance, eta: f64, max_delay: usize) -> Result<Self> {
        let k = instance.arms();
        let configs = ConfigurationSet::new(k);
        let space = StateSpace::enumerate(k, max_delay, instance.chain_states())?;
        let powers = PowerCache::new(instance.bank(), max_delay.max(k));
        let cache = KlCache::new(&powers)?;
        let logs = LogKernelCache::new(&powers);
        let analyses = (0..configs.len())
            .map(|c| analyze_configuration(&configs, c, &space, &powers, &cache, eta))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { configs, space, powers, logs, analyses, eta })
    }

    pub fn configs(&self) -> &ConfigurationSet {
        &self.configs
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn powers(&self) -> &PowerCache {
        &self.powers
    }

    pub fn logs(&self) -> &LogKernelCache {
        &self.logs
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn analysis(&self, config: usize) -> &ConfigurationAnalysis {
        &self.analyses[config]
    }

    pub fn rule(&self, config: usize) -> &SamplingRule {
        &self.analyses[config].rule
    }

    /// Index of the instance's true assignment.
    pub fn truth_index(&self, instance: &ProblemInstance) -> usize {
        self.configs.index_of(instance.truth()).expect("truth is a configuration")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialRecord {
    pub seed: u64,
    /// Time index at which the policy stopped (or the horizon).
    pub stop_time: u64,
    pub declared: usize,
    pub error: bool,
    pub final_glr: f64,
    pub hit_horizon: bool,
}

/// Round-robin start shared by both policy variants.
struct Start {
    env: Environment,
    ledger: LlrLedger,
    state: usize,
    first_obs: Vec<usize>,
}

fn start(instance: &ProblemInstance, tables: &PolicyTables, seed: u64) -> Result<Start> {
    let k = instance.arms();
    let mut env = Environment::new(instance, seed);
    let first_obs: Vec<usize> = (0..k).map(|a| env.observe_and_advance(a)).collect();
    let ledger = LlrLedger::init(&first_obs, instance.initial().probs(), &tables.configs, &tables.powers)?;
    let state = tables
        .space
        .index_of(&DelayState::initial(&first_obs))
        .ok_or(Error::UnknownState)?;
    Ok(Start { env, ledger, state, first_obs })
}

/// One sampling step: draw an arm from `rule`, observe, update ledger and delay state.
#[inline]
fn step(
    tables: &PolicyTables,
    rule: &SamplingRule,
    env: &mut Environment,
    ledger: &mut LlrLedger,
    state: &mut usize,
    policy_rng: &mut ChaCha8Rng,
) -> Result<(usize, usize, usize)> {
    let arm = rule.sample(*state, policy_rng.random());
    debug_assert!(tables.space.is_legal(*state, arm));
    let st = tables.space.state(*state);
    let obs = env.observe_and_advance(arm);
    ledger.record(&tables.configs, &tables.logs, arm, st.delay(arm), st.last_state(arm), obs)?;
    let prev = *state;
    *state = tables.space.successor(prev, arm, obs).ok_or(Error::IllegalAction {
        arm,
        forced: tables.space.forced_arm(prev).unwrap_or(arm),
    })?;
    Ok((prev, arm, obs))
}

/// Runs one trial of the stopping policy.
pub fn run_rdcr_bai(
    instance: &ProblemInstance,
    tables: &PolicyTables,
    config: &PolicyConfig,
    seed: u64,
) -> Result<TrialRecord> {
    config.validate_for(instance.arms())?;
    if tables.space.max_delay() != config.max_delay {
        return Err(Error::InvalidParameter { name: "R", value: config.max_delay as f64 });
    }
    if tables.eta != config.eta {
        return Err(Error::InvalidParameter { name: "eta", value: config.eta });
    }
    let threshold = stopping_threshold(config.confidence, instance.arms())?;
    let true_best = instance.truth().best_arm_position();
    let Start { mut env, mut ledger, mut state, .. } = start(instance, tables, seed)?;
    let mut policy_rng = stream_rng(seed, POLICY_STREAM);
    let mut tie_rng = stream_rng(seed, TIE_BREAK_STREAM);
    let mut scratch = Vec::with_capacity(tables.configs.len());
    loop {
        let n = env.time();
        let (estimate, glr) = ledger.argmax_config(&tables.configs, &mut scratch, &mut tie_rng);
        let stop = glr >= threshold;
        if stop || n >= config.max_horizon {
            let declared = tables.configs.best_arm(estimate);
            return Ok(TrialRecord {
                seed,
                stop_time: n,
                declared,
                error: declared != true_best,
                final_glr: glr,
                hit_horizon: !stop,
            });
        }
        step(tables, tables.rule(estimate), &mut env, &mut ledger, &mut state, &mut policy_rng)?;
    }
}

/// Which sampling rule the non-stopping policy follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DriftMode {
    /// Always the rule of this configuration index.
    Fixed(usize),
    /// The rule of the running estimate, as the stopping policy would.
    Estimate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriftCheckpoint {
    pub time: u64,
    /// `Z_CC'(n)/n` for each alternative of the true configuration.
    pub normalized_llr: Vec<f64>,
    pub estimate: usize,
}

#[derive(Clone, Debug)]
pub struct DriftRecord {
    pub truth: usize,
    pub alternatives: Vec<usize>,
    pub checkpoints: Vec<DriftCheckpoint>,
    pub counts: CountTable,
    pub ledger: LlrLedger,
    /// `z` at the end of the round-robin, for batch recomputation.
    pub initial: Vec<f64>,
    pub first_obs: Vec<usize>,
    /// Last time the estimate disagreed with the truth.
    pub last_disagreement: Option<u64>,
}

impl DriftRecord {
    /// `(Z(n_b) - Z(n_a)) / (n_b - n_a)` between two checkpoints, per alternative.
    pub fn slopes(&self, from: usize, to: usize) -> Vec<f64> {
        let (a, b) = (&self.checkpoints[from], &self.checkpoints[to]);
        let span = (b.time - a.time) as f64;
        a.normalized_llr
            .iter()
            .zip(&b.normalized_llr)
            .map(|(&za, &zb)| (zb * b.time as f64 - za * a.time as f64) / span)
            .collect()
    }
}

/// Runs the never-stopping variant up to `horizon`, recording at each checkpoint time.
pub fn run_nonstopping(
    instance: &ProblemInstance,
    tables: &PolicyTables,
    mode: DriftMode,
    horizon: u64,
    checkpoints: &[u64],
    seed: u64,
) -> Result<DriftRecord> {
    let truth = tables.truth_index(instance);
    let alternatives = tables.configs.alt_set(truth);
    let Start { mut env, mut ledger, mut state, first_obs } = start(instance, tables, seed)?;
    let initial = ledger.values().to_vec();
    let mut counts = CountTable::new(&tables.space);
    let mut policy_rng = stream_rng(seed, POLICY_STREAM);
    let mut tie_rng = stream_rng(seed, TIE_BREAK_STREAM);
    let mut scratch = Vec::with_capacity(tables.configs.len());
    let mut marks: Vec<u64> = checkpoints.iter().copied().filter(|&t| t <= horizon).collect();
    marks.sort_unstable();
    marks.dedup();
    let mut next_mark = 0;
    let mut out = Vec::with_capacity(marks.len());
    let mut last_disagreement = None;
    while env.time() < horizon {
        let n = env.time();
        let estimate = match mode {
            DriftMode::Fixed(c) => c,
            DriftMode::Estimate => ledger.argmax_config(&tables.configs, &mut scratch, &mut tie_rng).0,
        };
        if estimate != truth {
            last_disagreement = Some(n);
        }
        let (s, a, j) =
            step(tables, tables.rule(estimate), &mut env, &mut ledger, &mut state, &mut policy_rng)?;
        counts.record(s, a, j);
        while next_mark < marks.len() && marks[next_mark] <= env.time() {
            let t = env.time() as f64;
            out.push(DriftCheckpoint {
                time: env.time(),
                normalized_llr: alternatives.iter().map(|&c| ledger.llr(truth, c) / t).collect(),
                estimate,
            });
            next_mark += 1;
        }
    }
    Ok(DriftRecord {
        truth,
        alternatives,
        checkpoints: out,
        counts,
        ledger,
        initial,
        first_obs,
        last_disagreement,
    })
}

/// Visits per delay state when the true configuration is driven by `rule` for `steps` ticks.
pub fn simulate_visits(
    instance: &ProblemInstance,
    space: &StateSpace,
    rule: &SamplingRule,
    steps: u64,
    seed: u64,
) -> Result<Vec<u64>> {
    let k = instance.arms();
    let mut env = Environment::new(instance, seed);
    let first_obs: Vec<usize> = (0..k).map(|a| env.observe_and_advance(a)).collect();
    let mut state = space.index_of(&DelayState::initial(&first_obs)).ok_or(Error::UnknownState)?;
    let mut rng = stream_rng(seed, POLICY_STREAM);
    let mut visits = vec![0u64; space.len()];
    for _ in 0..steps {
        visits[state] += 1;
        let arm = rule.sample(state, rng.random());
        let obs = env.observe_and_advance(arm);
        state = space.successor(state, arm, obs).ok_or(Error::UnknownState)?;
    }
    Ok(visits)
}

/// Initial terms recomputed for a drift record, for ledger/batch comparison.
pub fn recompute_initial(
    instance: &ProblemInstance,
    tables: &PolicyTables,
    first_obs: &[usize],
) -> Result<Vec<f64>> {
    initial_terms(first_obs, instance.initial().probs(), &tables.configs, &tables.powers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{ArmAssignment, RewardFunction};
    use crate::markov::validate_tpm;

    fn instance_i1() -> ProblemInstance {
        let p1 = validate_tpm(&[vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let p2 = validate_tpm(&[vec![0.7, 0.3], vec![0.6, 0.4]]).unwrap();
        ProblemInstance::new(
            vec![p1, p2],
            RewardFunction::new(vec![0.0, 1.0]).unwrap(),
            ArmAssignment::identity(2),
            None,
        )
        .unwrap()
    }

    #[test]
    fn threshold_values() {
        assert!((stopping_threshold(core::f64::consts::E, 2).unwrap() - 1.0).abs() < 1e-15);
        assert!((stopping_threshold(100.0, 4).unwrap() - libm::log(1800.0)).abs() < 1e-12);
        assert!(stopping_threshold(1.0, 3).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PolicyConfig::new(1.0, 0.5, 4).is_err());
        assert!(PolicyConfig::new(10.0, 0.0, 4).is_err());
        assert!(PolicyConfig::new(10.0, 1.5, 4).is_err());
        assert!(PolicyConfig::new(10.0, 0.5, 2).unwrap().validate_for(2).is_err());
        let c = PolicyConfig::from_error_probability(0.01, 0.2, 4).unwrap();
        assert!((c.confidence - 100.0).abs() < 1e-12);
    }

    #[test]
    fn trials_are_reproducible_and_stop_above_threshold() {
        let inst = instance_i1();
        let tables = PolicyTables::build(&inst, 0.2, 4).unwrap();
        let cfg = PolicyConfig::new(100.0, 0.2, 4).unwrap();
        let a = run_rdcr_bai(&inst, &tables, &cfg, 11).unwrap();
        let b = run_rdcr_bai(&inst, &tables, &cfg, 11).unwrap();
        assert_eq!(a, b);
        assert!(!a.hit_horizon);
        assert!(a.final_glr >= stopping_threshold(100.0, 2).unwrap());
        assert!(a.stop_time >= 2);
    }

    #[test]
    fn horizon_cap_is_reported() {
        let inst = instance_i1();
        let tables = PolicyTables::build(&inst, 0.2, 4).unwrap();
        let cfg = PolicyConfig::new(1e300, 0.2, 4).unwrap().with_max_horizon(50);
        let rec = run_rdcr_bai(&inst, &tables, &cfg, 5).unwrap();
        assert!(rec.hit_horizon);
        assert_eq!(rec.stop_time, 50);
    }

    #[test]
    fn trial_seeds_are_distinct() {
        let seeds: Vec<u64> = (0..1000).map(|t| trial_seed(42, t)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
    }
}
