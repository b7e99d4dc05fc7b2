//! The experiment file: one JSON document pinning instance, policy and run.

use std::path::Path;

use rbai_core::instance::{ArmAssignment, ProblemInstance, RewardFunction};
use rbai_core::markov::{Distribution, TransitionMatrix};
use rbai_core::policy::{PolicyConfig, DEFAULT_MAX_HORIZON};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Largest arm count accepted from a file; `|C| = K!` grows fast.
pub const MAX_CONFIG_ARMS: usize = 5;

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub state_space_size: usize,
    pub reward: Vec<f64>,
    /// Row-major matrices; entry 0 must have the largest ergodic mean.
    pub tpms: Vec<Vec<Vec<f64>>>,
    pub assignment: Vec<usize>,
    #[serde(default)]
    pub phi: Option<Vec<f64>>,
    pub policy: PolicySection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    #[serde(rename = "L", default)]
    pub confidence: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    pub eta: f64,
    #[serde(rename = "R")]
    pub max_delay: usize,
    #[serde(default)]
    pub max_horizon: Option<u64>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Montecarlo,
    Drift,
    LpSweep,
    Verify,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum DriftPolicy {
    #[default]
    Fixed,
    Estimate,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub mode: Mode,
    /// Extra confidence scales for the stopping-time series.
    #[serde(default)]
    pub confidence_levels: Vec<f64>,
    /// Maximum delays for the LP sweep; defaults to `K+1 ..= K+4`.
    #[serde(default)]
    pub r_values: Vec<usize>,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default)]
    pub drift_policy: DriftPolicy,
}

fn default_trials() -> u64 {
    1000
}

fn default_workers() -> usize {
    1
}

fn default_horizon() -> u64 {
    200_000
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            seed: 0,
            workers: default_workers(),
            mode: Mode::default(),
            confidence_levels: Vec::new(),
            r_values: Vec::new(),
            horizon: default_horizon(),
            drift_policy: DriftPolicy::default(),
        }
    }
}

/// A validated experiment.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub file: ExperimentFile,
    pub instance: ProblemInstance,
    pub policy: PolicyConfig,
}

impl ExperimentFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn validate(self) -> Result<Experiment> {
        let s = self.state_space_size;
        let k = self.tpms.len();
        if k > MAX_CONFIG_ARMS {
            return Err(rbai_core::Error::TooManyArms { arms: k, max: MAX_CONFIG_ARMS }.into());
        }
        if self.reward.len() != s {
            return Err(rbai_core::Error::LengthMismatch { left: self.reward.len(), right: s }.into());
        }
        let bank = self
            .tpms
            .iter()
            .map(|rows| {
                if rows.len() != s {
                    return Err(rbai_core::Error::BadShape { rows: rows.len(), cols: s });
                }
                TransitionMatrix::stochastic(rows)
            })
            .collect::<rbai_core::Result<Vec<_>>>()?;
        let phi = self.phi.clone().map(Distribution::new).transpose()?;
        let instance = ProblemInstance::new(
            bank,
            RewardFunction::new(self.reward.clone())?,
            ArmAssignment::new(self.assignment.clone())?,
            phi,
        )?;
        let p = &self.policy;
        let policy = match (p.confidence, p.epsilon) {
            (Some(_), Some(_)) => {
                return Err(CliError::Parse("policy: give exactly one of `L` and `epsilon`, not both".into()))
            }
            (None, None) => return Err(CliError::Parse("policy: one of `L` or `epsilon` is required".into())),
            (Some(l), None) => PolicyConfig::new(l, p.eta, p.max_delay)?,
            (None, Some(e)) => PolicyConfig::from_error_probability(e, p.eta, p.max_delay)?,
        };
        let policy = policy.with_max_horizon(p.max_horizon.unwrap_or(DEFAULT_MAX_HORIZON));
        policy.validate_for(k)?;
        if self.experiment.trials == 0 {
            return Err(CliError::Parse("experiment.trials must be at least 1".into()));
        }
        if self.experiment.workers == 0 {
            return Err(CliError::Parse("experiment.workers must be at least 1".into()));
        }
        if let Some(&r) = self.experiment.r_values.iter().find(|&&r| r <= k) {
            return Err(rbai_core::Error::DelayBoundTooSmall { max_delay: r, arms: k }.into());
        }
        Ok(Experiment { file: self, instance, policy })
    }
}

pub fn load(path: &Path) -> Result<Experiment> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    ExperimentFile::parse(&text)?.validate()
}

impl Experiment {
    pub fn r_values(&self) -> Vec<usize> {
        if self.file.experiment.r_values.is_empty() {
            let k = self.instance.arms();
            (k + 1..=k + 4).collect()
        } else {
            self.file.experiment.r_values.clone()
        }
    }
}
