//! Running log-likelihoods, transition counts and the GLR statistic.
//!
//! `z[C]` holds only the `C`-dependent part of the log-likelihood of the
//! observation history: the initial round-robin term plus the accumulated
//! `log (P_C^a)^{d_a}(j | i_a)` increments. The control terms are identical
//! across configurations and are never computed; every quantity used by the
//! policy is a difference of ledger entries.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::delay::StateSpace;
use crate::instance::ConfigurationSet;
use crate::markov::PowerCache;
use crate::occupancy::OccupancyMeasure;
use crate::{Error, Result};

/// `log P_p^d(j | i)` for every bank TPM, delay `0..=R` and state pair.
#[derive(Clone, Debug)]
pub struct LogKernelCache {
    tpms: usize,
    max_delay: usize,
    chain_states: usize,
    values: Vec<f64>,
}

impl LogKernelCache {
    pub fn new(powers: &PowerCache) -> Self {
        let tpms = powers.tpm_count();
        let max_delay = powers.max_power();
        let s = powers.get(0, 0).size();
        let mut values = Vec::with_capacity(tpms * (max_delay + 1) * s * s);
        for p in 0..tpms {
            for d in 0..=max_delay {
                let m = powers.get(p, d);
                for i in 0..s {
                    values.extend(m.row(i).iter().map(|&x| libm::log(x)));
                }
            }
        }
        Self { tpms, max_delay, chain_states: s, values }
    }

    pub fn tpm_count(&self) -> usize {
        self.tpms
    }

    #[inline]
    pub fn get(&self, tpm: usize, delay: usize, last: usize, obs: usize) -> f64 {
        let s = self.chain_states;
        self.values[((tpm * (self.max_delay + 1) + delay) * s + last) * s + obs]
    }
}

/// `N(n, s, a, j)`: how often arm `a` was selected at delay state `s` and showed `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountTable {
    arms: usize,
    chain_states: usize,
    counts: Vec<u64>,
    total: u64,
}

impl CountTable {
    pub fn new(space: &StateSpace) -> Self {
        let arms = space.arms();
        let chain_states = space.chain_states();
        Self { arms, chain_states, counts: vec![0; space.len() * arms * chain_states], total: 0 }
    }

    #[inline]
    pub fn record(&mut self, state: usize, arm: usize, obs: usize) {
        self.counts[(state * self.arms + arm) * self.chain_states + obs] += 1;
        self.total += 1;
    }

    #[inline]
    pub fn get(&self, state: usize, arm: usize, obs: usize) -> u64 {
        self.counts[(state * self.arms + arm) * self.chain_states + obs]
    }

    /// `N(n, s, a)`.
    pub fn pair_count(&self, state: usize, arm: usize) -> u64 {
        let start = (state * self.arms + arm) * self.chain_states;
        self.counts[start..start + self.chain_states].iter().sum()
    }

    /// `N(n, s)`.
    pub fn state_count(&self, state: usize) -> u64 {
        (0..self.arms).map(|a| self.pair_count(state, a)).sum()
    }

    /// Number of recorded observations; equals `n - K + 1` at time `n`.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn states(&self) -> usize {
        self.counts.len() / (self.arms * self.chain_states)
    }

    /// Sum over all cells, recomputed from scratch.
    pub fn recount(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `N(n, s, a) / total` as an occupancy measure.
    pub fn empirical_occupancy(&self) -> OccupancyMeasure {
        let denom = self.total.max(1) as f64;
        let mass = (0..self.states() * self.arms)
            .map(|pair| {
                let start = pair * self.chain_states;
                self.counts[start..start + self.chain_states].iter().sum::<u64>() as f64 / denom
            })
            .collect();
        OccupancyMeasure::from_mass(self.arms, mass)
    }
}

/// `sum_a log sum_i phi(i) (P_C^a)^a(j_a | i)` for every configuration (0-based arms).
pub fn initial_terms(
    first_obs: &[usize],
    phi: &[f64],
    configs: &ConfigurationSet,
    powers: &PowerCache,
) -> Result<Vec<f64>> {
    let k = configs.arms();
    if first_obs.len() != k {
        return Err(Error::LengthMismatch { left: first_obs.len(), right: k });
    }
    let tpms = powers.tpm_count();
    // per (arm, tpm): log of the marginal probability of the first observation
    let mut marginal = vec![0.0; k * tpms];
    for (a, &j) in first_obs.iter().enumerate() {
        for p in 0..tpms {
            let m = powers.get(p, a);
            let prob: f64 = phi.iter().enumerate().map(|(i, &w)| w * m.get(i, j)).sum();
            if !(prob > 0.0) {
                return Err(Error::ImpossibleObservation { arm: a });
            }
            marginal[a * tpms + p] = libm::log(prob);
        }
    }
    Ok((0..configs.len())
        .map(|c| (0..k).map(|a| marginal[a * tpms + configs.tpm_of(c, a)]).sum())
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LlrLedger {
    z: Vec<f64>,
    increments: Vec<f64>,
}

impl LlrLedger {
    pub fn init(
        first_obs: &[usize],
        phi: &[f64],
        configs: &ConfigurationSet,
        powers: &PowerCache,
    ) -> Result<Self> {
        let z = initial_terms(first_obs, phi, configs, powers)?;
        Ok(Self { z, increments: vec![0.0; powers.tpm_count()] })
    }

    /// Adds `log (P_C^a)^{delay}(obs | last)` to every `z[C]`.
    pub fn record(
        &mut self,
        configs: &ConfigurationSet,
        logs: &LogKernelCache,
        arm: usize,
        delay: usize,
        last: usize,
        obs: usize,
    ) -> Result<()> {
        for (p, inc) in self.increments.iter_mut().enumerate() {
            *inc = logs.get(p, delay, last, obs);
            if !inc.is_finite() {
                return Err(Error::ZeroLikelihood { arm });
            }
        }
        for (c, z) in self.z.iter_mut().enumerate() {
            *z += self.increments[configs.tpm_of(c, arm)];
        }
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    pub fn z(&self, config: usize) -> f64 {
        self.z[config]
    }

    /// `Z_CC'(n) = z[C] - z[C']`.
    pub fn llr(&self, config: usize, other: usize) -> f64 {
        self.z[config] - self.z[other]
    }

    /// `M_C(n) = min_{C' in Alt(C)} Z_CC'(n)`.
    pub fn glr_statistic(&self, configs: &ConfigurationSet, config: usize) -> f64 {
        let b = configs.best_arm(config);
        let rival = (0..configs.len())
            .filter(|&c| configs.best_arm(c) != b)
            .map(|c| self.z[c])
            .fold(f64::NEG_INFINITY, f64::max);
        self.z[config] - rival
    }

    /// `M_C(n)` for every configuration in `O(|C|)`, via per-best-arm class maxima.
    pub fn glr_all(&self, configs: &ConfigurationSet, out: &mut Vec<f64>) {
        let k = configs.arms();
        let mut class_max = [f64::NEG_INFINITY; crate::delay::MAX_ARMS];
        for (c, &z) in self.z.iter().enumerate() {
            let b = configs.best_arm(c);
            class_max[b] = class_max[b].max(z);
        }
        // top two class maxima give the rival for every class
        let (mut first, mut second) = (0usize, usize::MAX);
        for b in 1..k {
            if class_max[b] > class_max[first] {
                second = first;
                first = b;
            } else if second == usize::MAX || class_max[b] > class_max[second] {
                second = b;
            }
        }
        out.clear();
        out.extend(self.z.iter().enumerate().map(|(c, &z)| {
            let b = configs.best_arm(c);
            let rival = if b == first { class_max[second] } else { class_max[first] };
            z - rival
        }));
    }

    /// `C̄(n) in argmax_C M_C(n)` with exact ties broken uniformly; returns the index and its `M`.
    pub fn argmax_config<G: Rng + ?Sized>(
        &self,
        configs: &ConfigurationSet,
        scratch: &mut Vec<f64>,
        rng: &mut G,
    ) -> (usize, f64) {
        self.glr_all(configs, scratch);
        let best = scratch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties = scratch.iter().filter(|&&m| m == best).count();
        let pick = if ties == 1 { 0 } else { rng.random_range(0..ties) };
        let index = scratch
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == best)
            .nth(pick)
            .map(|(c, _)| c)
            .expect("at least one maximizer");
        (index, best)
    }
}

/// Batch recomputation of `z` from the initial terms and a count table.
pub fn batch_log_likelihoods(
    initial: &[f64],
    counts: &CountTable,
    space: &StateSpace,
    configs: &ConfigurationSet,
    logs: &LogKernelCache,
) -> Vec<f64> {
    let s_obs = space.chain_states();
    let mut z = initial.to_vec();
    for (s, a) in space.legal_pairs() {
        let st = space.state(s);
        for j in 0..s_obs {
            let n = counts.get(s, a, j);
            if n == 0 {
                continue;
            }
            for (c, zc) in z.iter_mut().enumerate() {
                *zc += n as f64 * logs.get(configs.tpm_of(c, a), st.delay(a), st.last_state(a), j);
            }
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::validate_tpm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn powers() -> PowerCache {
        let p1 = validate_tpm(&[vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let p2 = validate_tpm(&[vec![0.7, 0.3], vec![0.6, 0.4]]).unwrap();
        PowerCache::new(&[p1, p2], 4)
    }

    #[test]
    fn first_arm_term_is_phi() {
        let configs = ConfigurationSet::new(2);
        let pw = powers();
        let phi = [0.25, 0.75];
        let z = initial_terms(&[1, 0], &phi, &configs, &pw).unwrap();
        // arm 0 contributes log phi(1) to both; arm 1 contributes log (phi P_C^1)(0)
        let m1: f64 = 0.25 * 0.3 + 0.75 * 0.6;
        let m2: f64 = 0.25 * 0.7 + 0.75 * 0.6;
        assert!((z[0] - (0.75f64.ln() + m2.ln())).abs() < 1e-14);
        assert!((z[1] - (0.75f64.ln() + m1.ln())).abs() < 1e-14);
    }

    #[test]
    fn scripted_trajectory_matches_hand_sum() {
        let configs = ConfigurationSet::new(2);
        let pw = powers();
        let logs = LogKernelCache::new(&pw);
        let phi = [0.5, 0.5];
        let mut ledger = LlrLedger::init(&[0, 1], &phi, &configs, &pw).unwrap();
        // (arm, delay, last, obs)
        let steps = [(0, 2, 0, 1), (1, 2, 1, 1), (1, 1, 1, 0), (0, 3, 1, 0), (0, 1, 0, 0)];
        for &(a, d, i, j) in &steps {
            ledger.record(&configs, &logs, a, d, i, j).unwrap();
        }
        let p: [[[f64; 2]; 2]; 2] = [[[0.3, 0.7], [0.6, 0.4]], [[0.7, 0.3], [0.6, 0.4]]];
        let pow = |t: usize, d: usize, i: usize, j: usize| {
            let mut row = [0.0f64; 2];
            row[i] = 1.0;
            for _ in 0..d {
                row = [
                    row[0] * p[t][0][0] + row[1] * p[t][1][0],
                    row[0] * p[t][0][1] + row[1] * p[t][1][1],
                ];
            }
            row[j]
        };
        for (c, perm) in [[0usize, 1], [1, 0]].iter().enumerate() {
            let mut want = 0.5f64.ln() + (0.5 * pow(perm[1], 1, 0, 1) + 0.5 * pow(perm[1], 1, 1, 1)).ln();
            for &(a, d, i, j) in &steps {
                want += pow(perm[a], d, i, j).ln();
            }
            assert!((ledger.z(c) - want).abs() < 1e-12, "config {c}");
        }
    }

    #[test]
    fn glr_all_matches_direct_minimum() {
        let configs = ConfigurationSet::new(3);
        let z: Vec<f64> = (0..6).map(|c| [0.3, -1.2, 2.5, 2.5, 0.0, -0.7][c]).collect();
        let ledger = LlrLedger { z, increments: vec![0.0; 3] };
        let mut out = Vec::new();
        ledger.glr_all(&configs, &mut out);
        for c in 0..configs.len() {
            let direct = configs
                .alt_set(c)
                .into_iter()
                .map(|o| ledger.llr(c, o))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(out[c], direct);
            assert_eq!(ledger.glr_statistic(&configs, c), direct);
        }
    }

    #[test]
    fn full_tie_is_broken_uniformly() {
        let configs = ConfigurationSet::new(3);
        let ledger = LlrLedger { z: vec![0.0; 6], increments: vec![0.0; 3] };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut hits = [0u32; 6];
        let mut scratch = Vec::new();
        for _ in 0..6000 {
            hits[ledger.argmax_config(&configs, &mut scratch, &mut rng).0] += 1;
        }
        assert!(hits.iter().all(|&h| (800..1200).contains(&h)), "{hits:?}");
    }
}
