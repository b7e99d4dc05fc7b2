//! The controlled process of arm delays and last observed states.
//!
//! After the initial round-robin the learner tracks, per arm, the time since
//! it was last sampled (`delay`) and the state seen then (`last`). Selecting
//! arm `a` resets its delay to 1 and bumps every other delay by one. With a
//! maximum delay `R`, an arm whose delay reaches `R` must be selected next,
//! which keeps the reachable state space finite.

use alloc::collections::btree_map::Entry;
use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use crate::instance::ArmAssignment;
use crate::markov::PowerCache;
use crate::{Error, Result};

/// Hard limit on the number of arms a [`DelayState`] can hold.
pub const MAX_ARMS: usize = 8;

const NOT_FORCED: u8 = u8::MAX;
const NO_SUCCESSOR: u32 = u32::MAX;

/// Arm delays and last observed states, `(d, i)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DelayState {
    arms: u8,
    delays: [u8; MAX_ARMS],
    last: [u8; MAX_ARMS],
}

/// Arms that may be selected from a given state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AllowedActions {
    /// The arm at the maximum delay must be selected.
    Forced(usize),
    /// Any of the `K` arms.
    Any(usize),
}

impl AllowedActions {
    pub fn contains(&self, arm: usize) -> bool {
        match *self {
            Self::Forced(a) => a == arm,
            Self::Any(k) => arm < k,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> {
        match *self {
            Self::Forced(a) => a..a + 1,
            Self::Any(k) => 0..k,
        }
    }
}

impl DelayState {
    /// State right after the round-robin: delays `(K, K-1, ..., 1)`.
    pub fn initial(first_obs: &[usize]) -> Self {
        let k = first_obs.len();
        assert!((2..=MAX_ARMS).contains(&k), "arm count out of range");
        let mut delays = [0u8; MAX_ARMS];
        let mut last = [0u8; MAX_ARMS];
        for (a, &obs) in first_obs.iter().enumerate() {
            delays[a] = (k - a) as u8;
            last[a] = u8::try_from(obs).expect("chain state fits in a byte");
        }
        Self { arms: k as u8, delays, last }
    }

    /// Builds a state from raw parts, checking the delay invariants.
    pub fn from_parts(delays: &[usize], last: &[usize]) -> Result<Self> {
        let k = delays.len();
        if !(2..=MAX_ARMS).contains(&k) {
            return Err(Error::TooManyArms { arms: k, max: MAX_ARMS });
        }
        if last.len() != k {
            return Err(Error::LengthMismatch { left: k, right: last.len() });
        }
        let mut state = Self { arms: k as u8, delays: [0; MAX_ARMS], last: [0; MAX_ARMS] };
        for a in 0..k {
            state.delays[a] = u8::try_from(delays[a]).map_err(|_| Error::DelayOverflow { arm: a })?;
            state.last[a] = u8::try_from(last[a]).map_err(|_| Error::UnknownState)?;
        }
        if !state.delays_are_valid() {
            return Err(Error::UnknownState);
        }
        Ok(state)
    }

    pub fn arms(&self) -> usize {
        self.arms as usize
    }

    pub fn delay(&self, arm: usize) -> usize {
        self.delays[arm] as usize
    }

    pub fn last_state(&self, arm: usize) -> usize {
        self.last[arm] as usize
    }

    pub fn delays(&self) -> impl Iterator<Item = usize> + '_ {
        self.delays[..self.arms()].iter().map(|&d| d as usize)
    }

    pub fn last_states(&self) -> impl Iterator<Item = usize> + '_ {
        self.last[..self.arms()].iter().map(|&s| s as usize)
    }

    /// Exactly one delay equals 1 and all delays are distinct and positive.
    pub fn delays_are_valid(&self) -> bool {
        let d = &self.delays[..self.arms()];
        let ones = d.iter().filter(|&&x| x == 1).count();
        let distinct = d.iter().enumerate().all(|(i, x)| !d[i + 1..].contains(x));
        ones == 1 && distinct && d.iter().all(|&x| x >= 1)
    }

    /// Arm whose delay has reached `max_delay`, if any.
    pub fn forced_arm(&self, max_delay: usize) -> Option<usize> {
        self.delays[..self.arms()].iter().position(|&d| d as usize == max_delay)
    }

    pub fn allowed_actions(&self, max_delay: usize) -> AllowedActions {
        match self.forced_arm(max_delay) {
            Some(a) => AllowedActions::Forced(a),
            None => AllowedActions::Any(self.arms()),
        }
    }

    /// Selects `arm`, observes chain state `obs`, and advances the delays.
    pub fn apply_selection(&self, arm: usize, obs: usize, max_delay: usize) -> Result<Self> {
        if let Some(forced) = self.forced_arm(max_delay) {
            if forced != arm {
                return Err(Error::IllegalAction { arm, forced });
            }
        }
        if arm >= self.arms() {
            return Err(Error::IllegalAction { arm, forced: arm });
        }
        let mut next = *self;
        for b in 0..self.arms() {
            if b == arm {
                next.delays[b] = 1;
                next.last[b] = u8::try_from(obs).map_err(|_| Error::UnknownState)?;
            } else {
                let d = self.delays[b] as usize + 1;
                if d > max_delay {
                    return Err(Error::DelayOverflow { arm: b });
                }
                next.delays[b] = d as u8;
            }
        }
        debug_assert!(next.delays_are_valid());
        Ok(next)
    }
}

/// The reachable states with all delays at most `R`, densely indexed.
#[derive(Clone, Debug)]
pub struct StateSpace {
    arms: usize,
    max_delay: usize,
    chain_states: usize,
    states: Vec<DelayState>,
    index: BTreeMap<DelayState, u32>,
    forced: Vec<u8>,
    successors: Vec<u32>,
}

impl StateSpace {
    /// Breadth-first closure from every post-round-robin state under legal actions.
    pub fn enumerate(arms: usize, max_delay: usize, chain_states: usize) -> Result<Self> {
        if !(2..=MAX_ARMS).contains(&arms) {
            return Err(Error::TooManyArms { arms, max: MAX_ARMS });
        }
        if max_delay <= arms || max_delay > u8::MAX as usize - 1 {
            return Err(Error::DelayBoundTooSmall { max_delay, arms });
        }
        if !(2..=u8::MAX as usize).contains(&chain_states) {
            return Err(Error::TooManyStates { states: chain_states, max: u8::MAX as usize });
        }
        let mut states = Vec::new();
        let mut index = BTreeMap::new();
        let mut queue = VecDeque::new();
        let mut obs = vec![0usize; arms];
        loop {
            let s = DelayState::initial(&obs);
            if index.insert(s, states.len() as u32).is_none() {
                states.push(s);
                queue.push_back(s);
            }
            // odometer over S^K, arm 0 most significant
            let mut pos = arms;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                obs[pos] += 1;
                if obs[pos] < chain_states {
                    break;
                }
                obs[pos] = 0;
                if pos == 0 {
                    pos = usize::MAX;
                    break;
                }
            }
            if pos == usize::MAX {
                break;
            }
        }
        while let Some(s) = queue.pop_front() {
            for a in s.allowed_actions(max_delay).iter() {
                for j in 0..chain_states {
                    let next = s.apply_selection(a, j, max_delay)?;
                    if let Entry::Vacant(slot) = index.entry(next) {
                        slot.insert(states.len() as u32);
                        states.push(next);
                        queue.push_back(next);
                    }
                }
            }
        }
        let forced = states
            .iter()
            .map(|s| s.forced_arm(max_delay).map_or(NOT_FORCED, |a| a as u8))
            .collect();
        let mut successors = vec![NO_SUCCESSOR; states.len() * arms * chain_states];
        for (si, s) in states.iter().enumerate() {
            for a in s.allowed_actions(max_delay).iter() {
                for j in 0..chain_states {
                    let next = s.apply_selection(a, j, max_delay)?;
                    successors[(si * arms + a) * chain_states + j] = index[&next];
                }
            }
        }
        Ok(Self { arms, max_delay, chain_states, states, index, forced, successors })
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn max_delay(&self) -> usize {
        self.max_delay
    }

    pub fn chain_states(&self) -> usize {
        self.chain_states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, index: usize) -> &DelayState {
        &self.states[index]
    }

    pub fn states(&self) -> &[DelayState] {
        &self.states
    }

    pub fn index_of(&self, state: &DelayState) -> Option<usize> {
        self.index.get(state).map(|&i| i as usize)
    }

    /// Arm forced at state `index`, i.e. membership in `S_{R,a}`.
    #[inline]
    pub fn forced_arm(&self, index: usize) -> Option<usize> {
        let f = self.forced[index];
        (f != NOT_FORCED).then_some(f as usize)
    }

    #[inline]
    pub fn is_legal(&self, index: usize, arm: usize) -> bool {
        self.forced_arm(index).is_none_or(|f| f == arm)
    }

    /// `S_{R,a}`.
    pub fn forced_set(&self, arm: usize) -> Vec<usize> {
        (0..self.len()).filter(|&s| self.forced_arm(s) == Some(arm)).collect()
    }

    /// Successor index after selecting `arm` at `index` and observing `obs`.
    #[inline]
    pub fn successor(&self, index: usize, arm: usize, obs: usize) -> Option<usize> {
        let s = self.successors[(index * self.arms + arm) * self.chain_states + obs];
        (s != NO_SUCCESSOR).then_some(s as usize)
    }

    /// Number of distinct delay vectors in the space.
    pub fn delay_vector_count(&self) -> usize {
        let mut seen: Vec<[u8; MAX_ARMS]> = self.states.iter().map(|s| s.delays).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// Legal `(state, arm)` pairs in index order.
    pub fn legal_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).flat_map(move |s| {
            (0..self.arms).filter(move |&a| self.is_legal(s, a)).map(move |a| (s, a))
        })
    }
}

/// `Q_{C,R}`: per legal `(state, arm)` the law of the observed state `j`;
/// the successor index comes from [`StateSpace::successor`].
#[derive(Clone, Debug)]
pub struct SparseKernel {
    arms: usize,
    chain_states: usize,
    probs: Vec<f64>,
    legal: Vec<bool>,
}

impl SparseKernel {
    /// Observation law for `(state, arm)`, or `None` when the action is illegal.
    pub fn row(&self, state: usize, arm: usize) -> Option<&[f64]> {
        let pair = state * self.arms + arm;
        if !self.legal[pair] {
            return None;
        }
        let start = pair * self.chain_states;
        Some(&self.probs[start..start + self.chain_states])
    }

    /// `(successor, probability)` pairs for a legal `(state, arm)`.
    pub fn transitions<'a>(
        &'a self,
        space: &'a StateSpace,
        state: usize,
        arm: usize,
    ) -> impl Iterator<Item = (usize, f64)> + 'a {
        self.row(state, arm).into_iter().flat_map(move |row| {
            row.iter().enumerate().map(move |(j, &p)| {
                (space.successor(state, arm, j).expect("legal pair has successors"), p)
            })
        })
    }
}

/// Builds `Q_{C,R}` from cached d-step kernels: selecting arm `a` at `(d, i)`
/// observes `j` with probability `(P_C^a)^{d_a}(j | i_a)`.
pub fn transition_kernel(c: &ArmAssignment, space: &StateSpace, powers: &PowerCache) -> SparseKernel {
    assert!(powers.max_power() >= space.max_delay(), "power cache too short");
    let k = space.arms();
    let n_obs = space.chain_states();
    let mut probs = vec![0.0; space.len() * k * n_obs];
    let mut legal = vec![false; space.len() * k];
    for (s, a) in space.legal_pairs() {
        let st = space.state(s);
        let kernel = powers.get(c.tpm_of(a), st.delay(a));
        let start = (s * k + a) * n_obs;
        probs[start..start + n_obs].copy_from_slice(kernel.row(st.last_state(a)));
        legal[s * k + a] = true;
    }
    SparseKernel { arms: k, chain_states: n_obs, probs, legal }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::validate_tpm;

    #[test]
    fn initial_state_delays() {
        let s = DelayState::initial(&[0, 1]);
        assert_eq!(s.delays().collect::<Vec<_>>(), vec![2, 1]);
        assert_eq!(s.last_states().collect::<Vec<_>>(), vec![0, 1]);
        let s3 = DelayState::initial(&[1, 0, 1]);
        assert_eq!(s3.delays().collect::<Vec<_>>(), vec![3, 2, 1]);
        assert_eq!(s3.delays().position(|d| d == 1), Some(2));
    }

    #[test]
    fn selection_updates() {
        let s = DelayState::initial(&[0, 1]);
        let next = s.apply_selection(0, 1, 3).unwrap();
        assert_eq!(next.delays().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(next.last_states().collect::<Vec<_>>(), vec![1, 1]);
        // re-selecting the delay-1 arm
        let again = next.apply_selection(0, 0, 3).unwrap();
        assert_eq!(again.delays().collect::<Vec<_>>(), vec![1, 3]);
        // arm 1 now sits at R = 3 and is forced
        assert_eq!(again.allowed_actions(3), AllowedActions::Forced(1));
        assert_eq!(
            again.apply_selection(0, 0, 3).unwrap_err(),
            Error::IllegalAction { arm: 0, forced: 1 }
        );
    }

    #[test]
    fn allowed_actions_examples() {
        let s = DelayState::initial(&[0, 0, 0]);
        assert_eq!(s.allowed_actions(5), AllowedActions::Any(3));
        assert_eq!(s.allowed_actions(5).iter().count(), 3);
        assert_eq!(s.allowed_actions(3), AllowedActions::Forced(0));
    }

    #[test]
    fn invalid_parts_are_rejected() {
        assert!(DelayState::from_parts(&[2, 2], &[0, 0]).is_err());
        assert!(DelayState::from_parts(&[3, 2], &[0, 0]).is_err());
        assert!(DelayState::from_parts(&[1, 3], &[0, 1]).is_ok());
    }

    #[test]
    fn sixteen_states_for_two_arms_two_states_r3() {
        let space = StateSpace::enumerate(2, 3, 2).unwrap();
        assert_eq!(space.len(), 16);
        let mut vectors: Vec<Vec<usize>> =
            space.states().iter().map(|s| s.delays().collect()).collect();
        vectors.sort();
        vectors.dedup();
        assert_eq!(vectors, vec![vec![1, 2], vec![1, 3], vec![2, 1], vec![3, 1]]);
    }

    #[test]
    fn two_arm_delay_vector_count() {
        for r in 3..=6 {
            let space = StateSpace::enumerate(2, r, 2).unwrap();
            assert_eq!(space.delay_vector_count(), 2 * (r - 1));
        }
    }

    #[test]
    fn delay_bound_must_exceed_arms() {
        assert!(matches!(
            StateSpace::enumerate(3, 3, 2),
            Err(Error::DelayBoundTooSmall { .. })
        ));
    }

    #[test]
    fn forced_sets_are_disjoint_and_closed() {
        let space = StateSpace::enumerate(3, 5, 2).unwrap();
        for s in 0..space.len() {
            assert!(space.state(s).delays_are_valid());
            assert!(space.state(s).delays().all(|d| d <= 5));
            for a in 0..3 {
                if !space.is_legal(s, a) {
                    continue;
                }
                for j in 0..2 {
                    assert!(space.successor(s, a, j).is_some());
                }
            }
        }
        let sets: Vec<Vec<usize>> = (0..3).map(|a| space.forced_set(a)).collect();
        for a in 0..3 {
            for b in a + 1..3 {
                assert!(sets[a].iter().all(|s| !sets[b].contains(s)));
            }
        }
    }

    #[test]
    fn kernel_rows_use_delay_power() {
        let p1 = validate_tpm(&[vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let p2 = validate_tpm(&[vec![0.7, 0.3], vec![0.6, 0.4]]).unwrap();
        let bank = vec![p1, p2];
        let powers = PowerCache::new(&bank, 3);
        let space = StateSpace::enumerate(2, 3, 2).unwrap();
        let c = ArmAssignment::identity(2);
        let q = transition_kernel(&c, &space, &powers);
        for (s, a) in space.legal_pairs() {
            let row = q.row(s, a).unwrap();
            assert_eq!(row.len(), 2);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let st = space.state(s);
            let expected = powers.get(a, st.delay(a)).row(st.last_state(a));
            assert_eq!(row, expected);
        }
        let forced = space.forced_set(1)[0];
        assert!(q.row(forced, 0).is_none());
        let st = space.state(forced);
        assert_eq!(q.row(forced, 1).unwrap(), powers.get(1, 3).row(st.last_state(1)));
    }
}
