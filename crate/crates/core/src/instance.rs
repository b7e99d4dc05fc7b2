//! Problem instances and the hypothesis space of TPM assignments.
//!
//! Index conventions are 0-based throughout: arms are `0..K`, TPMs in the bank
//! are `0..K`, and bank entry 0 is the best-arm TPM.

use alloc::vec;
use alloc::vec::Vec;

use crate::delay::MAX_ARMS;
use crate::markov::{
    check_mutual_ac, stationary_distribution, Distribution, TransitionMatrix,
};
use crate::{Error, Result};

/// Minimum gap between the best and second-best ergodic mean.
pub const TIE_TOLERANCE: f64 = 1e-10;

/// Largest supported chain state count (states are stored as bytes).
pub const MAX_CHAIN_STATES: usize = 255;

#[derive(Clone, Debug, PartialEq)]
pub struct RewardFunction(Vec<f64>);

impl RewardFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "reward function" });
        }
        let first = values.first().copied().unwrap_or(0.0);
        if values.iter().all(|&v| v == first) {
            return Err(Error::TiedBestArm { gap: 0.0 });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// A configuration: arm `a` is driven by TPM `perm[a]` of the bank.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArmAssignment(Vec<usize>);

impl ArmAssignment {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let k = perm.len();
        if k < 2 {
            return Err(Error::NotAPermutation);
        }
        let mut seen = vec![false; k];
        for &p in &perm {
            if p >= k || seen[p] {
                return Err(Error::NotAPermutation);
            }
            seen[p] = true;
        }
        Ok(Self(perm))
    }

    pub fn identity(k: usize) -> Self {
        Self((0..k).collect())
    }

    pub fn arms(&self) -> usize {
        self.0.len()
    }

    /// Bank index of the TPM driving `arm`.
    pub fn tpm_of(&self, arm: usize) -> usize {
        self.0[arm]
    }

    pub fn perm(&self) -> &[usize] {
        &self.0
    }

    /// Arm holding bank TPM 0, the best-arm TPM.
    pub fn best_arm_position(&self) -> usize {
        self.0.iter().position(|&p| p == 0).expect("permutation contains 0")
    }
}

/// `sum_i f(i) mu(i)` under the stationary law of `p`.
pub fn ergodic_mean(p: &TransitionMatrix, f: &RewardFunction) -> Result<f64> {
    if f.values().len() != p.size() {
        return Err(Error::LengthMismatch { left: f.values().len(), right: p.size() });
    }
    let mu = stationary_distribution(p)?;
    Ok(mu.probs().iter().zip(f.values()).map(|(m, v)| m * v).sum())
}

#[derive(Clone, Debug)]
pub struct ProblemInstance {
    bank: Vec<TransitionMatrix>,
    reward: RewardFunction,
    truth: ArmAssignment,
    initial: Distribution,
    means: Vec<f64>,
}

impl ProblemInstance {
    /// Validates the bank, reward, true assignment and initial law.
    ///
    /// `initial` defaults to the uniform law over chain states.
    pub fn new(
        bank: Vec<TransitionMatrix>,
        reward: RewardFunction,
        truth: ArmAssignment,
        initial: Option<Distribution>,
    ) -> Result<Self> {
        let k = bank.len();
        if k < 2 {
            return Err(Error::InvalidParameter { name: "arm count", value: k as f64 });
        }
        if k > MAX_ARMS {
            return Err(Error::TooManyArms { arms: k, max: MAX_ARMS });
        }
        if truth.arms() != k {
            return Err(Error::LengthMismatch { left: truth.arms(), right: k });
        }
        let s = bank[0].size();
        if s > MAX_CHAIN_STATES {
            return Err(Error::TooManyStates { states: s, max: MAX_CHAIN_STATES });
        }
        for p in &bank {
            if p.size() != s {
                return Err(Error::LengthMismatch { left: p.size(), right: s });
            }
            if !p.is_ergodic() {
                return Err(Error::NotErgodic);
            }
        }
        for x in 0..k {
            for y in x + 1..k {
                if !check_mutual_ac(&bank[x], &bank[y]) {
                    return Err(Error::NotMutuallyContinuous { first: x, second: y });
                }
            }
        }
        let initial = initial.unwrap_or_else(|| Distribution::uniform(s));
        if initial.len() != s {
            return Err(Error::LengthMismatch { left: initial.len(), right: s });
        }
        if let Some(&p) = initial.probs().iter().find(|&&p| p <= 0.0) {
            return Err(Error::InvalidParameter { name: "initial probability", value: p });
        }
        let means = bank
            .iter()
            .map(|p| ergodic_mean(p, &reward))
            .collect::<Result<Vec<_>>>()?;
        let best = argmax_unique(&means)?;
        if best != 0 {
            return Err(Error::BestTpmNotFirst { best });
        }
        Ok(Self { bank, reward, truth, initial, means })
    }

    pub fn arms(&self) -> usize {
        self.bank.len()
    }

    pub fn chain_states(&self) -> usize {
        self.bank[0].size()
    }

    pub fn bank(&self) -> &[TransitionMatrix] {
        &self.bank
    }

    pub fn reward(&self) -> &RewardFunction {
        &self.reward
    }

    pub fn truth(&self) -> &ArmAssignment {
        &self.truth
    }

    pub fn initial(&self) -> &Distribution {
        &self.initial
    }

    /// Ergodic mean of each bank TPM.
    pub fn tpm_means(&self) -> &[f64] {
        &self.means
    }

    /// Ergodic mean of each arm under `c`.
    pub fn arm_means(&self, c: &ArmAssignment) -> Vec<f64> {
        c.perm().iter().map(|&p| self.means[p]).collect()
    }
}

fn argmax_unique(values: &[f64]) -> Result<usize> {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    let runner_up = values
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let gap = values[best] - runner_up;
    if gap < TIE_TOLERANCE {
        return Err(Error::TiedBestArm { gap });
    }
    Ok(best)
}

/// Arm with the largest ergodic mean under assignment `c`.
pub fn best_arm(c: &ArmAssignment, instance: &ProblemInstance) -> Result<usize> {
    argmax_unique(&instance.arm_means(c))
}

/// All `K!` assignments in lexicographic order of their permutation vectors.
pub fn enumerate_configurations(k: usize) -> Vec<ArmAssignment> {
    let mut out = Vec::new();
    let mut perm: Vec<usize> = (0..k).collect();
    loop {
        out.push(ArmAssignment(perm.clone()));
        // next lexicographic permutation
        let Some(i) = (0..k.saturating_sub(1)).rev().find(|&i| perm[i] < perm[i + 1]) else {
            break;
        };
        let j = (i + 1..k).rev().find(|&j| perm[j] > perm[i]).expect("successor exists");
        perm.swap(i, j);
        perm[i + 1..].reverse();
    }
    out
}

/// The configuration set with best arms, alternative sets and partition classes.
#[derive(Clone, Debug)]
pub struct ConfigurationSet {
    arms: usize,
    configs: Vec<ArmAssignment>,
    best: Vec<usize>,
    flat: Vec<usize>,
}

impl ConfigurationSet {
    pub fn new(k: usize) -> Self {
        let configs = enumerate_configurations(k);
        let best = configs.iter().map(ArmAssignment::best_arm_position).collect();
        let flat = configs.iter().flat_map(|c| c.perm().iter().copied()).collect();
        Self { arms: k, configs, best, flat }
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn get(&self, index: usize) -> &ArmAssignment {
        &self.configs[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ArmAssignment> {
        self.configs.iter()
    }

    pub fn index_of(&self, c: &ArmAssignment) -> Option<usize> {
        self.configs.binary_search(c).ok()
    }

    /// Best arm of configuration `index` (the arm holding bank TPM 0).
    pub fn best_arm(&self, index: usize) -> usize {
        self.best[index]
    }

    /// Bank TPM driving `arm` under configuration `index`.
    #[inline]
    pub fn tpm_of(&self, index: usize, arm: usize) -> usize {
        self.flat[index * self.arms + arm]
    }

    /// Indices of `Alt(C)`: configurations whose best arm differs.
    pub fn alt_set(&self, index: usize) -> Vec<usize> {
        let b = self.best[index];
        (0..self.len()).filter(|&j| self.best[j] != b).collect()
    }

    /// Configurations whose best arm is `arm`.
    pub fn class(&self, arm: usize) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.best[j] == arm).collect()
    }
}

/// `Alt(C)` as assignments, for callers holding a bare assignment.
pub fn alt_set(c: &ArmAssignment) -> Vec<ArmAssignment> {
    let b = c.best_arm_position();
    enumerate_configurations(c.arms())
        .into_iter()
        .filter(|x| x.best_arm_position() != b)
        .collect()
}
