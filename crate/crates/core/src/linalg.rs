//! Dense LU factorization with partial pivoting.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// `PA = LU` for a square row-major matrix.
#[derive(Clone, Debug)]
pub struct LuDecomposition {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl LuDecomposition {
    pub fn factor(n: usize, mut a: Vec<f64>) -> Result<Self> {
        assert_eq!(a.len(), n * n, "matrix must be n x n");
        let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (pivot_row, pivot_abs) = (k..n)
                .map(|r| (r, a[r * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot_abs <= 1e-13 * scale {
                return Err(Error::SingularSystem);
            }
            if pivot_row != k {
                for c in 0..n {
                    a.swap(k * n + c, pivot_row * n + c);
                }
                perm.swap(k, pivot_row);
            }
            let pivot = a[k * n + k];
            for r in k + 1..n {
                let factor = a[r * n + k] / pivot;
                if factor == 0.0 {
                    continue;
                }
                a[r * n + k] = factor;
                for c in k + 1..n {
                    a[r * n + c] -= factor * a[k * n + c];
                }
            }
        }
        Ok(Self { n, lu: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut acc = x[r];
            for c in 0..r {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc;
        }
        for r in (0..n).rev() {
            let mut acc = x[r];
            for c in r + 1..n {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc / self.lu[r * n + r];
        }
        x
    }

    /// Solves `A^T y = c`.
    pub fn solve_transpose(&self, c: &[f64]) -> Vec<f64> {
        let n = self.n;
        // U^T w = c
        let mut w = c.to_vec();
        for r in 0..n {
            let mut acc = w[r];
            for k in 0..r {
                acc -= self.lu[k * n + r] * w[k];
            }
            w[r] = acc / self.lu[r * n + r];
        }
        // L^T v = w
        for r in (0..n).rev() {
            let mut acc = w[r];
            for k in r + 1..n {
                acc -= self.lu[k * n + r] * w[k];
            }
            w[r] = acc;
        }
        let mut y = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            y[p] = w[k];
        }
        y
    }
}

/// Solves `A x = b` with one round of iterative refinement.
pub(crate) fn solve_refined(n: usize, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let lu = LuDecomposition::factor(n, a.to_vec())?;
    let mut x = lu.solve(b);
    let residual: Vec<f64> = (0..n)
        .map(|r| b[r] - (0..n).map(|c| a[r * n + c] * x[c]).sum::<f64>())
        .collect();
    let delta = lu.solve(&residual);
    for (xi, di) in x.iter_mut().zip(&delta) {
        *xi += di;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(x)
}
