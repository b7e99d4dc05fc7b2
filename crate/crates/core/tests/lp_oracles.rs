mod common;

use proptest::prelude::*;
use rbai_core::delay::{transition_kernel, StateSpace};
use rbai_core::instance::ConfigurationSet;
use rbai_core::markov::{kl_divergence, PowerCache, TransitionMatrix};
use rbai_core::occupancy::{
    analyze_configuration, embed_occupancy, induced_chain_is_ergodic, kl_coefficients,
    solve_t_r_star, verify_occupancy, worst_case_separation, KlCache, FEASIBILITY_TOL,
};

fn analysis_for(bank: &[TransitionMatrix], r: usize, config: usize, eta: f64) -> (StateSpace, rbai_core::occupancy::ConfigurationAnalysis) {
    let k = bank.len();
    let space = StateSpace::enumerate(k, r, bank[0].size()).unwrap();
    let powers = PowerCache::new(bank, r);
    let cache = KlCache::new(&powers).unwrap();
    let an = analyze_configuration(&ConfigurationSet::new(k), config, &space, &powers, &cache, eta).unwrap();
    (space, an)
}

fn step_kernel(p: &TransitionMatrix, d: usize, i: usize) -> Vec<f64> {
    let n = p.size();
    let mut row = vec![0.0; n];
    row[i] = 1.0;
    for _ in 0..d {
        row = (0..n).map(|j| (0..n).map(|k| row[k] * p.get(k, j)).sum()).collect();
    }
    row
}

/// Best worst-case separation over deterministic stationary policies, each
/// evaluated through the stationary law of its lazy induced chain.
fn best_deterministic_policy(bank: &[TransitionMatrix], r: usize) -> f64 {
    let space = StateSpace::enumerate(2, r, 2).unwrap();
    let n = space.len();
    let free: Vec<usize> = (0..n).filter(|&s| space.forced_arm(s).is_none()).collect();
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << free.len()) {
        let mut action: Vec<usize> = (0..n).map(|s| space.forced_arm(s).unwrap_or(0)).collect();
        for (bit, &s) in free.iter().enumerate() {
            action[s] = ((mask >> bit) & 1) as usize;
        }
        let mut q = vec![vec![0.0; n]; n];
        let mut reward = vec![0.0; n];
        for s in 0..n {
            let a = action[s];
            let st = space.state(s);
            // configuration 0 is the identity; the single alternative swaps the TPMs
            let own = step_kernel(&bank[a], st.delay(a), st.last_state(a));
            let alt = step_kernel(&bank[1 - a], st.delay(a), st.last_state(a));
            reward[s] = kl_divergence(&own, &alt).unwrap();
            for (j, &p) in own.iter().enumerate() {
                q[s][space.successor(s, a, j).unwrap()] += p;
            }
        }
        let mut v = vec![1.0 / n as f64; n];
        for _ in 0..20_000 {
            let mut next: Vec<f64> = v.iter().map(|x| 0.5 * x).collect();
            for s in 0..n {
                for t in 0..n {
                    next[t] += 0.5 * v[s] * q[s][t];
                }
            }
            v = next;
        }
        let value: f64 = v.iter().zip(&reward).map(|(a, b)| a * b).sum();
        best = best.max(value);
    }
    best
}

#[test]
fn lp_value_matches_policy_enumeration() {
    let bank = common::i1_bank();
    let (_, an) = analysis_for(&bank, 3, 0, 0.2);
    let oracle = best_deterministic_policy(&bank, 3);
    assert!((an.t_star() - oracle).abs() < 1e-9, "{} vs {}", an.t_star(), oracle);
}

#[test]
fn i1_values_grow_with_r() {
    let bank = common::i1_bank();
    let mut prev = 0.0;
    for r in 3..=7 {
        let (space, an) = analysis_for(&bank, r, 0, 0.2);
        assert!(an.t_star() >= prev - 1e-7, "R={r}");
        assert!(an.t_unif <= an.t_star() + 1e-9);
        assert!(an.t_unif > 0.0);
        prev = an.t_star();
        assert!(verify_occupancy(&an.optimal.measure, &an.kernel, &space).max() <= FEASIBILITY_TOL);
        assert!(verify_occupancy(&an.uniform, &an.kernel, &space).max() <= FEASIBILITY_TOL);
    }
}

#[test]
fn zero_padding_keeps_feasibility_and_value() {
    let inst = common::random_instance(5, 3, 2);
    let bank = inst.bank();
    let configs = ConfigurationSet::new(3);
    for r in 4..=5 {
        let small = StateSpace::enumerate(3, r, 2).unwrap();
        let large = StateSpace::enumerate(3, r + 1, 2).unwrap();
        let powers = PowerCache::new(bank, r + 1);
        let cache = KlCache::new(&powers).unwrap();
        let ks = transition_kernel(configs.get(0), &small, &powers);
        let kl_small = kl_coefficients(&configs, 0, &small, &cache);
        let sol = solve_t_r_star(&small, &ks, &kl_small).unwrap();
        let embedded = embed_occupancy(&sol.measure, &small, &large).unwrap();
        let kb = transition_kernel(configs.get(0), &large, &powers);
        let kl_large = kl_coefficients(&configs, 0, &large, &cache);
        assert!(verify_occupancy(&embedded, &kb, &large).max() <= FEASIBILITY_TOL);
        let value = worst_case_separation(&embedded, &kl_large);
        assert!((value - sol.value).abs() < 1e-10);
        let bigger = solve_t_r_star(&large, &kb, &kl_large).unwrap();
        assert!(bigger.value >= value - 1e-9);
    }
}

#[test]
fn mixture_rule_induces_an_ergodic_chain() {
    let inst = common::random_instance(8, 3, 2);
    for eta in [1.0, 0.5, 0.05] {
        let (space, an) = analysis_for(inst.bank(), 4, 0, eta);
        assert!(induced_chain_is_ergodic(&space, &an.kernel, &an.rule));
        assert!(an.mixture_marginal.iter().all(|&m| m > 0.0));
    }
}

#[test]
fn identical_rows_follow_the_forcing_floor() {
    // forcing keeps each arm's frequency at least 1/R, so the best frequency
    // vector sits on that floor rather than at a simplex vertex
    let bank = common::identical_rows_bank(&[vec![0.2, 0.8], vec![0.6, 0.4]]);
    let a = kl_divergence(&[0.2, 0.8], &[0.6, 0.4]).unwrap();
    let b = kl_divergence(&[0.6, 0.4], &[0.2, 0.8]).unwrap();
    for r in 3..=6 {
        let (_, an) = analysis_for(&bank, r, 0, 0.2);
        let rf = r as f64;
        let floor_value = ((rf - 1.0) * a.max(b) + a.min(b)) / rf;
        assert!((an.t_star() - floor_value).abs() < 1e-9, "R={r}");
    }
}

#[test]
fn identical_rows_three_arms_match_frequency_program() {
    let rows = [vec![0.15, 0.85], vec![0.4, 0.6], vec![0.7, 0.3]];
    let bank = common::identical_rows_bank(&rows);
    let configs = ConfigurationSet::new(3);
    for r in [4, 6] {
        let (_, an) = analysis_for(&bank, r, 0, 0.2);
        let weights: Vec<Vec<f64>> = configs
            .alt_set(0)
            .into_iter()
            .map(|alt| {
                (0..3)
                    .map(|a| kl_divergence(&rows[configs.tpm_of(0, a)], &rows[configs.tpm_of(alt, a)]).unwrap())
                    .collect()
            })
            .collect();
        let floor = 1.0 / r as f64;
        let exact = common::arm_frequency_value(&weights, floor);
        let grid = common::arm_frequency_grid(&weights, floor, 600);
        assert!(grid <= exact + 1e-12 && exact - grid < 5e-3);
        assert!((an.t_star() - exact).abs() < 1e-8, "R={r}: {} vs {exact}", an.t_star());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn monotone_in_r_on_random_two_arm_instances(seed in 0u64..10_000) {
        let inst = common::random_instance(seed, 2, 2);
        let mut prev = 0.0;
        for r in 3..=6 {
            let (_, an) = analysis_for(inst.bank(), r, 0, 0.3);
            prop_assert!(an.t_star() >= prev - 1e-7);
            prop_assert!(an.t_unif <= an.t_star() + 1e-9);
            prev = an.t_star();
        }
    }
}
