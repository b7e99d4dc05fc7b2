//! Finite-state Markov chain primitives.
//!
//! A [`TransitionMatrix`] is a validated row-stochastic matrix. Arm TPMs must
//! also be ergodic, which [`validate_tpm`] checks exactly on the positive-entry
//! graph (no floating-point heuristics). Stationary laws come from a direct
//! dense solve with one balance equation replaced by the normalization.

use alloc::vec;
use alloc::vec::Vec;

use crate::graph::is_ergodic_graph;
use crate::linalg::solve_refined;
use crate::{Error, Result};

/// Row sums must be within this distance of 1.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Tolerance on products of stochastic matrices.
pub const POWER_TOL: f64 = 1e-10;

/// Row-stochastic matrix, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    /// Validates shape, nonnegativity and row sums. Does not require ergodicity.
    pub fn stochastic(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::BadShape { rows: n, cols: rows.first().map_or(0, Vec::len) });
        }
        let mut data = Vec::with_capacity(n * n);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::BadShape { rows: n, cols: row.len() });
            }
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite { what: "transition matrix" });
                }
                if v < 0.0 {
                    return Err(Error::NegativeEntry { row: r, col: c, value: v });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::RowSumViolation { row: r, sum });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// Matrix product `self * other`.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "dimension mismatch");
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        Self { n, data }
    }

    pub fn is_ergodic(&self) -> bool {
        is_ergodic(self)
    }

    /// Positive-entry adjacency lists.
    pub fn support_graph(&self) -> Vec<Vec<usize>> {
        (0..self.n)
            .map(|i| (0..self.n).filter(|&j| self.get(i, j) > 0.0).collect())
            .collect()
    }

    /// Largest deviation of any row sum from 1.
    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.n)
            .map(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Probability vector over a finite set.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::BadShape { rows: 1, cols: 0 });
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::NonFinite { what: "distribution" });
            }
            if p < 0.0 {
                return Err(Error::NegativeEntry { row: 0, col: i, value: p });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::RowSumViolation { row: 0, sum });
        }
        Ok(Self(probs))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Validates an arm TPM: stochastic rows and an ergodic chain.
pub fn validate_tpm(rows: &[Vec<f64>]) -> Result<TransitionMatrix> {
    let p = TransitionMatrix::stochastic(rows)?;
    if !p.is_ergodic() {
        return Err(Error::NotErgodic);
    }
    Ok(p)
}

/// Irreducible and aperiodic, decided on the positive-entry digraph.
pub fn is_ergodic(p: &TransitionMatrix) -> bool {
    is_ergodic_graph(&p.support_graph())
}

/// Stationary law of a dense row-major stochastic matrix of order `n`.
pub(crate) fn stationary_dense(n: usize, p: &[f64]) -> Result<Vec<f64>> {
    // Row r of the system is the balance equation for state r; the last one
    // is replaced by the normalization.
    let mut a = vec![0.0; n * n];
    for r in 0..n - 1 {
        for i in 0..n {
            a[r * n + i] = p[i * n + r];
        }
        a[r * n + r] -= 1.0;
    }
    for i in 0..n {
        a[(n - 1) * n + i] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    let mut mu = solve_refined(n, &a, &b)?;
    for v in &mut mu {
        if *v < 0.0 && *v > -1e-14 {
            *v = 0.0;
        }
    }
    if mu.iter().any(|&v| v < 0.0) {
        return Err(Error::SingularSystem);
    }
    let total: f64 = mu.iter().sum();
    for v in &mut mu {
        *v /= total;
    }
    Ok(mu)
}

/// Unique `mu` with `mu P = mu`.
pub fn stationary_distribution(p: &TransitionMatrix) -> Result<Distribution> {
    stationary_dense(p.n, &p.data).map(Distribution)
}

/// `max_j |(mu P)_j - mu_j|`.
pub fn stationary_residual(p: &TransitionMatrix, mu: &[f64]) -> f64 {
    (0..p.n)
        .map(|j| {
            let flow: f64 = (0..p.n).map(|i| mu[i] * p.get(i, j)).sum();
            (flow - mu[j]).abs()
        })
        .fold(0.0, f64::max)
}

/// `P^d` by repeated squaring. `d = 0` gives the identity.
pub fn matrix_power(p: &TransitionMatrix, d: u32) -> TransitionMatrix {
    let mut result = TransitionMatrix::identity(p.n);
    let mut base = p.clone();
    let mut e = d;
    let mut first = true;
    while e > 0 {
        if e & 1 == 1 {
            result = if first { base.clone() } else { result.mul(&base) };
            first = false;
        }
        e >>= 1;
        if e > 0 {
            base = base.mul(&base);
        }
    }
    result
}

/// `sum_i p(i) log(p(i)/q(i))` in nats, with `0 log(0/q) = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch { left: p.len(), right: q.len() });
    }
    let mut sum = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(Error::SupportViolation { index: i });
        }
        sum += pi * libm::log(pi / qi);
    }
    // Rounding can leave tiny negatives when p and q nearly coincide.
    Ok(sum.max(0.0))
}

/// Relative entropy between Bernoulli(x) and Bernoulli(y).
pub fn bernoulli_kl(x: f64, y: f64) -> Result<f64> {
    for (what, v) in [("x", x), ("y", y)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::DomainError { what, value: v });
        }
    }
    let value = x * libm::log(x / y) + (1.0 - x) * libm::log((1.0 - x) / (1.0 - y));
    Ok(value.max(0.0))
}

/// Rows of `p` and `q` share the same zero pattern.
///
/// This carries over to every power `P^d, Q^d`.
pub fn check_mutual_ac(p: &TransitionMatrix, q: &TransitionMatrix) -> bool {
    p.n == q.n && p.data.iter().zip(&q.data).all(|(&a, &b)| (a > 0.0) == (b > 0.0))
}

/// `P^d` for every TPM in a bank and every `d` in `0..=max_power`.
#[derive(Clone, Debug)]
pub struct PowerCache {
    max_power: usize,
    powers: Vec<Vec<TransitionMatrix>>,
}

impl PowerCache {
    pub fn new(bank: &[TransitionMatrix], max_power: usize) -> Self {
        let powers = bank
            .iter()
            .map(|p| {
                let mut list = Vec::with_capacity(max_power + 1);
                list.push(TransitionMatrix::identity(p.size()));
                for d in 1..=max_power {
                    let next = list[d - 1].mul(p);
                    list.push(next);
                }
                list
            })
            .collect();
        Self { max_power, powers }
    }

    pub fn max_power(&self) -> usize {
        self.max_power
    }

    pub fn tpm_count(&self) -> usize {
        self.powers.len()
    }

    pub fn get(&self, tpm: usize, d: usize) -> &TransitionMatrix {
        &self.powers[tpm][d]
    }
}
