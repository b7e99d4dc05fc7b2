#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbai_core::instance::{ArmAssignment, ProblemInstance, RewardFunction};
use rbai_core::markov::{validate_tpm, TransitionMatrix};

pub fn i1_bank() -> Vec<TransitionMatrix> {
    vec![
        validate_tpm(&[vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap(),
        validate_tpm(&[vec![0.7, 0.3], vec![0.6, 0.4]]).unwrap(),
    ]
}

pub fn i1() -> ProblemInstance {
    ProblemInstance::new(
        i1_bank(),
        RewardFunction::new(vec![0.0, 1.0]).unwrap(),
        ArmAssignment::identity(2),
        None,
    )
    .unwrap()
}

/// Row-stochastic matrix with entries bounded away from zero.
pub fn random_tpm(rng: &mut ChaCha8Rng, n: usize) -> TransitionMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
            let total: f64 = v.iter().sum();
            v.into_iter().map(|x| x / total).collect()
        })
        .collect();
    validate_tpm(&rows).unwrap()
}

/// Random bank of `k` TPMs, sorted so that bank entry 0 has the largest
/// ergodic mean under `f = (0, 1, ..., n-1)`.
pub fn random_instance(seed: u64, k: usize, n: usize) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f: Vec<f64> = (0..n).map(|i| i as f64).collect();
    loop {
        let mut bank: Vec<TransitionMatrix> = (0..k).map(|_| random_tpm(&mut rng, n)).collect();
        let mean = |p: &TransitionMatrix| {
            let mu = rbai_core::markov::stationary_distribution(p).unwrap();
            mu.probs().iter().zip(&f).map(|(m, v)| m * v).sum::<f64>()
        };
        bank.sort_by(|a, b| mean(b).total_cmp(&mean(a)));
        if let Ok(inst) = ProblemInstance::new(
            bank,
            RewardFunction::new(f.clone()).unwrap(),
            ArmAssignment::identity(k),
            None,
        ) {
            return inst;
        }
    }
}

/// Bank whose TPMs repeat one row: every observation is i.i.d. from that row.
pub fn identical_rows_bank(rows: &[Vec<f64>]) -> Vec<TransitionMatrix> {
    rows.iter()
        .map(|r| validate_tpm(&vec![r.clone(); r.len()]).unwrap())
        .collect()
}

/// `max_kappa min_k sum_a kappa_a w[k][a]` over `kappa_a >= floor`, `sum kappa = 1`,
/// solved as a small linear program.
pub fn arm_frequency_value(weights: &[Vec<f64>], floor: f64) -> f64 {
    use rbai_core::simplex::{solve, LinearProgram, Relation, SimplexOptions};
    let k = weights[0].len();
    let mut lp = LinearProgram::new(k + 1);
    lp.set_objective(k, 1.0);
    lp.add_constraint((0..k).map(|a| (a, 1.0)).collect(), Relation::Equal, 1.0);
    for a in 0..k {
        lp.add_constraint(vec![(a, 1.0)], Relation::GreaterEq, floor);
    }
    for w in weights {
        let mut row: Vec<(usize, f64)> = w.iter().enumerate().map(|(a, &v)| (a, -v)).collect();
        row.push((k, 1.0));
        lp.add_constraint(row, Relation::LessEq, 0.0);
    }
    solve(&lp, &SimplexOptions::default()).unwrap().objective
}

/// Same quantity by brute force on a simplex grid (three arms at most).
pub fn arm_frequency_grid(weights: &[Vec<f64>], floor: f64, steps: usize) -> f64 {
    let k = weights[0].len();
    let eval = |kappa: &[f64]| {
        weights
            .iter()
            .map(|w| w.iter().zip(kappa).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    };
    let mut best = f64::NEG_INFINITY;
    for x in 0..=steps {
        let k0 = x as f64 / steps as f64;
        if k == 2 {
            let kappa = [k0, 1.0 - k0];
            if kappa.iter().all(|&v| v >= floor - 1e-15) {
                best = best.max(eval(&kappa));
            }
            continue;
        }
        for y in 0..=steps - x {
            let k1 = y as f64 / steps as f64;
            let kappa = [k0, k1, 1.0 - k0 - k1];
            if kappa.iter().all(|&v| v >= floor - 1e-15) {
                best = best.max(eval(&kappa));
            }
        }
    }
    best
}
