//! Dense two-phase simplex for small and medium linear programs.
//!
//! Problems are stated as `maximize c.x` subject to `a.x (<=|=|>=) b` and
//! `x >= 0`. Pricing is Dantzig's largest reduced cost; after a run of
//! degenerate pivots the solver falls back to Bland's rule until progress
//! resumes, which rules out cycling. The final basis is re-factored from the
//! original data, so reported primal values, duals and residuals do not carry
//! the round-off accumulated in the tableau.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::linalg::LuDecomposition;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    LessEq,
    Equal,
    GreaterEq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `maximize objective.x` over `x >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(vars: usize) -> Self {
        Self { objective: vec![0.0; vars], constraints: Vec::new() }
    }

    pub fn vars(&self) -> usize {
        self.objective.len()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] = coeff;
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        debug_assert!(coeffs.iter().all(|&(j, _)| j < self.vars()));
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    /// Plain-text listing: objective row, one line per constraint, bounds.
    pub fn to_listing(&self, names: impl Fn(usize) -> String) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "MAXIMIZE");
        let _ = write!(out, " obj:");
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                let _ = write!(out, " {:+e} {}", c, names(j));
            }
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "SUBJECT TO");
        for (i, con) in self.constraints.iter().enumerate() {
            let _ = write!(out, " c{i}:");
            for &(j, a) in &con.coeffs {
                let _ = write!(out, " {:+e} {}", a, names(j));
            }
            let op = match con.relation {
                Relation::LessEq => "<=",
                Relation::Equal => "=",
                Relation::GreaterEq => ">=",
            };
            let _ = writeln!(out, " {op} {:e}", con.rhs);
        }
        let _ = writeln!(out, "BOUNDS");
        for j in 0..self.vars() {
            let _ = writeln!(out, " {} >= 0", names(j));
        }
        let _ = writeln!(out, "END");
        out
    }

    /// Worst violation of any constraint or sign bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().fold(0.0_f64, |m, &v| m.max(-v));
        for con in &self.constraints {
            let lhs: f64 = con.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let v = match con.relation {
                Relation::LessEq => lhs - con.rhs,
                Relation::Equal => (lhs - con.rhs).abs(),
                Relation::GreaterEq => con.rhs - lhs,
            };
            worst = worst.max(v);
        }
        worst
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SimplexOptions {
    pub max_pivots: usize,
    /// A column may enter when its reduced cost exceeds this.
    pub optimality_tol: f64,
    /// Smallest admissible pivot magnitude.
    pub pivot_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_streak: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { max_pivots: 200_000, optimality_tol: 1e-10, pivot_tol: 1e-9, degenerate_streak: 2_000 }
    }
}

#[derive(Clone, Debug)]
pub struct SimplexSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One dual value per constraint in the order they were added.
    pub duals: Vec<f64>,
    pub pivots: usize,
    /// Worst constraint violation of the returned `x`.
    pub primal_residual: f64,
    /// Largest positive reduced cost at the final basis.
    pub dual_infeasibility: f64,
    /// `|c.x - b.y|`.
    pub duality_gap: f64,
}

struct Tableau {
    rows: usize,
    width: usize,
    data: Vec<f64>,
    /// reduced costs `c_j - z_j`, plus the objective value in the last slot
    cost: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.data[r * self.width + self.width - 1]
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width;
        let p = self.data[r * w + e];
        let (before, rest) = self.data.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for v in prow.iter_mut() {
            *v /= p;
        }
        prow[e] = 1.0;
        let nz: Vec<usize> = (0..w).filter(|&j| prow[j] != 0.0).collect();
        let dense = nz.len() * 2 > w;
        let eliminate = |row: &mut [f64]| {
            let f = row[e];
            if f == 0.0 {
                return;
            }
            if dense {
                for (x, &y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * y;
                }
            } else {
                for &j in &nz {
                    row[j] -= f * prow[j];
                }
            }
            row[e] = 0.0;
        };
        for row in before.chunks_exact_mut(w) {
            eliminate(row);
        }
        for row in after.chunks_exact_mut(w) {
            eliminate(row);
        }
        eliminate(&mut self.cost);
        self.basis[r] = e;
    }

    /// Runs simplex iterations on the current cost row. `allowed` masks columns.
    fn optimize(
        &mut self,
        allowed: usize,
        opts: &SimplexOptions,
        pivots: &mut usize,
    ) -> Result<()> {
        let mut degenerate = 0usize;
        loop {
            let bland = degenerate >= opts.degenerate_streak;
            let entering = if bland {
                (0..allowed).find(|&j| self.cost[j] > opts.optimality_tol)
            } else {
                let mut best = None;
                let mut best_val = opts.optimality_tol;
                for j in 0..allowed {
                    if self.cost[j] > best_val {
                        best_val = self.cost[j];
                        best = Some(j);
                    }
                }
                best
            };
            let Some(e) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, e);
                if a <= opts.pivot_tol {
                    continue;
                }
                let ratio = self.rhs(r).max(0.0) / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        let tie = (ratio - lratio).abs() <= 1e-12 * lratio.max(1.0);
                        if ratio < lratio && !tie {
                            Some((r, ratio))
                        } else if tie {
                            let better = if bland {
                                self.basis[r] < self.basis[lr]
                            } else {
                                a > self.at(lr, e)
                            };
                            if better { Some((r, ratio)) } else { Some((lr, lratio)) }
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
            let Some((r, ratio)) = leave else {
                return Err(Error::Unbounded);
            };
            if ratio <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, e);
            *pivots += 1;
            if *pivots > opts.max_pivots {
                return Err(Error::NumericalBreakdown { detail: "pivot limit reached" });
            }
        }
    }

    fn reset_cost(&mut self, costs: &[f64]) {
        let w = self.width;
        self.cost = vec![0.0; w];
        self.cost[..costs.len()].copy_from_slice(costs);
        for r in 0..self.rows {
            let cb = costs.get(self.basis[r]).copied().unwrap_or(0.0);
            if cb == 0.0 {
                continue;
            }
            for j in 0..w {
                self.cost[j] -= cb * self.data[r * w + j];
            }
        }
    }
}

/// Standard form `A x = b, x >= 0, b >= 0` with slack and surplus columns.
struct StandardForm {
    rows: usize,
    /// structural + slack columns (artificials excluded)
    cols: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    /// +1 or -1: sign applied to the original row
    sign: Vec<f64>,
    needs_artificial: Vec<bool>,
}

fn standard_form(lp: &LinearProgram) -> StandardForm {
    let m = lp.constraints.len();
    let n = lp.vars();
    let slack_count =
        lp.constraints.iter().filter(|c| c.relation != Relation::Equal).count();
    let cols = n + slack_count;
    let mut a = vec![0.0; m * cols];
    let mut b = vec![0.0; m];
    let mut sign = vec![1.0; m];
    let mut needs_artificial = vec![true; m];
    let mut slack = n;
    for (i, con) in lp.constraints.iter().enumerate() {
        let s = if con.rhs < 0.0 { -1.0 } else { 1.0 };
        sign[i] = s;
        for &(j, v) in &con.coeffs {
            a[i * cols + j] += s * v;
        }
        b[i] = s * con.rhs;
        match con.relation {
            Relation::Equal => {}
            Relation::LessEq | Relation::GreaterEq => {
                let slack_sign = if con.relation == Relation::LessEq { 1.0 } else { -1.0 };
                a[i * cols + slack] = s * slack_sign;
                // a +1 slack on a nonnegative right-hand side is a ready basic column
                needs_artificial[i] = s * slack_sign < 0.0;
                slack += 1;
            }
        }
    }
    let mut c = vec![0.0; cols];
    c[..n].copy_from_slice(&lp.objective);
    StandardForm { rows: m, cols, a, b, c, sign, needs_artificial }
}

pub fn solve(lp: &LinearProgram, opts: &SimplexOptions) -> Result<SimplexSolution> {
    if lp.objective.iter().any(|v| !v.is_finite())
        || lp.constraints.iter().any(|c| !c.rhs.is_finite() || c.coeffs.iter().any(|x| !x.1.is_finite()))
    {
        return Err(Error::NonFinite { what: "linear program" });
    }
    let sf = standard_form(lp);
    let m = sf.rows;
    let n_art = sf.needs_artificial.iter().filter(|&&x| x).count();
    let total = sf.cols + n_art;
    let width = total + 1;
    let mut data = vec![0.0; m * width];
    let mut basis = vec![0; m];
    let mut art = sf.cols;
    for i in 0..m {
        data[i * width..i * width + sf.cols].copy_from_slice(&sf.a[i * sf.cols..(i + 1) * sf.cols]);
        data[i * width + total] = sf.b[i];
        if sf.needs_artificial[i] {
            data[i * width + art] = 1.0;
            basis[i] = art;
            art += 1;
        } else {
            // the +1 slack of this row
            basis[i] = (0..sf.cols)
                .rev()
                .find(|&j| j >= lp.vars() && sf.a[i * sf.cols + j] == 1.0)
                .expect("slack column");
        }
    }
    let mut t = Tableau { rows: m, width, data, cost: Vec::new(), basis };
    let mut pivots = 0usize;

    // phase 1: maximize -sum(artificials)
    let mut kept_rows: Vec<usize> = (0..m).collect();
    if n_art > 0 {
        let mut phase1 = vec![0.0; total];
        for v in &mut phase1[sf.cols..] {
            *v = -1.0;
        }
        t.reset_cost(&phase1);
        t.optimize(total, opts, &mut pivots)?;
        let infeasibility: f64 =
            (0..m).filter(|&r| t.basis[r] >= sf.cols).map(|r| t.rhs(r).abs()).sum();
        let scale = sf.b.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        if infeasibility > 1e-9 * scale {
            return Err(Error::Infeasible);
        }
        // drive zero-level artificials out of the basis; drop redundant rows
        let mut redundant = Vec::new();
        for r in 0..m {
            if t.basis[r] < sf.cols {
                continue;
            }
            let col = (0..sf.cols)
                .filter(|&j| t.at(r, j).abs() > opts.pivot_tol)
                .max_by(|&x, &y| t.at(r, x).abs().total_cmp(&t.at(r, y).abs()));
            match col {
                Some(j) => {
                    t.pivot(r, j);
                    pivots += 1;
                }
                None => redundant.push(r),
            }
        }
        kept_rows.retain(|r| !redundant.contains(r));
        t = compact(&t, &kept_rows, sf.cols);
    }

    let mut rounds = 0;
    loop {
        t.reset_cost(&sf.c);
        t.optimize(sf.cols, opts, &mut pivots)?;
        let refined = refine(&sf, &kept_rows, &t.basis)?;
        if refined.dual_infeasibility <= opts.optimality_tol.max(1e-9) || rounds >= 3 {
            return Ok(finish(lp, &sf, &kept_rows, refined, pivots));
        }
        // tableau drifted: rebuild it from the refactored basis and continue
        t = rebuild(&sf, &kept_rows, &t.basis)?;
        rounds += 1;
    }
}

fn compact(t: &Tableau, kept: &[usize], cols: usize) -> Tableau {
    let width = cols + 1;
    let mut data = Vec::with_capacity(kept.len() * width);
    for &r in kept {
        data.extend_from_slice(&t.data[r * t.width..r * t.width + cols]);
        data.push(t.rhs(r));
    }
    Tableau {
        rows: kept.len(),
        width,
        data,
        cost: Vec::new(),
        basis: kept.iter().map(|&r| t.basis[r]).collect(),
    }
}

struct Refined {
    x: Vec<f64>,
    y: Vec<f64>,
    dual_infeasibility: f64,
}

fn basis_lu(sf: &StandardForm, kept: &[usize], basis: &[usize]) -> Result<LuDecomposition> {
    let m = kept.len();
    let mut bmat = vec![0.0; m * m];
    for (ri, &r) in kept.iter().enumerate() {
        for (k, &col) in basis.iter().enumerate() {
            bmat[ri * m + k] = sf.a[r * sf.cols + col];
        }
    }
    LuDecomposition::factor(m, bmat)
        .map_err(|_| Error::NumericalBreakdown { detail: "singular final basis" })
}

fn refine(sf: &StandardForm, kept: &[usize], basis: &[usize]) -> Result<Refined> {
    let lu = basis_lu(sf, kept, basis)?;
    let b: Vec<f64> = kept.iter().map(|&r| sf.b[r]).collect();
    let xb = lu.solve(&b);
    let cb: Vec<f64> = basis.iter().map(|&j| sf.c[j]).collect();
    let y = lu.solve_transpose(&cb);
    let mut x = vec![0.0; sf.cols];
    for (k, &j) in basis.iter().enumerate() {
        if xb[k] < -1e-9 {
            return Err(Error::NumericalBreakdown { detail: "negative basic variable" });
        }
        x[j] = xb[k].max(0.0);
    }
    let mut dual_infeasibility = 0.0_f64;
    for j in 0..sf.cols {
        let zj: f64 = kept.iter().zip(&y).map(|(&r, yi)| yi * sf.a[r * sf.cols + j]).sum();
        dual_infeasibility = dual_infeasibility.max(sf.c[j] - zj);
    }
    Ok(Refined { x, y, dual_infeasibility })
}

fn rebuild(sf: &StandardForm, kept: &[usize], basis: &[usize]) -> Result<Tableau> {
    let lu = basis_lu(sf, kept, basis)?;
    let m = kept.len();
    let width = sf.cols + 1;
    let mut data = vec![0.0; m * width];
    let mut column = vec![0.0; m];
    for j in 0..width {
        for (ri, &r) in kept.iter().enumerate() {
            column[ri] = if j < sf.cols { sf.a[r * sf.cols + j] } else { sf.b[r] };
        }
        let solved = lu.solve(&column);
        for ri in 0..m {
            data[ri * width + j] = solved[ri];
        }
    }
    Ok(Tableau { rows: m, width, data, cost: Vec::new(), basis: basis.to_vec() })
}

fn finish(
    lp: &LinearProgram,
    sf: &StandardForm,
    kept: &[usize],
    refined: Refined,
    pivots: usize,
) -> SimplexSolution {
    let x: Vec<f64> = refined.x[..lp.vars()].to_vec();
    let objective: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let mut duals = vec![0.0; sf.rows];
    let mut dual_obj = 0.0;
    for (&r, &yi) in kept.iter().zip(&refined.y) {
        duals[r] = sf.sign[r] * yi;
        dual_obj += yi * sf.b[r];
    }
    SimplexSolution {
        primal_residual: lp.max_violation(&x),
        dual_infeasibility: refined.dual_infeasibility.max(0.0),
        duality_gap: (objective - dual_obj).abs(),
        x,
        objective,
        duals,
        pivots,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, 3.0);
        lp.set_objective(1, 5.0);
        lp.add_constraint(vec![(0, 1.0)], Relation::LessEq, 4.0);
        lp.add_constraint(vec![(1, 2.0)], Relation::LessEq, 12.0);
        lp.add_constraint(vec![(0, 3.0), (1, 2.0)], Relation::LessEq, 18.0);
        let sol = solve(&lp, &SimplexOptions::default()).unwrap();
        assert!(close(sol.objective, 36.0));
        assert!(close(sol.x[0], 2.0) && close(sol.x[1], 6.0));
        assert!(sol.duality_gap < 1e-9);
        // duals of the textbook problem: (0, 1.5, 1)
        assert!(close(sol.duals[0], 0.0) && close(sol.duals[1], 1.5) && close(sol.duals[2], 1.0));
    }

    #[test]
    fn equality_and_ge_rows() {
        // max x + y s.t. x + y = 1, x >= 0.25, y >= 0.5 -> value 1
        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, 2.0);
        lp.set_objective(1, 1.0);
        lp.add_constraint(vec![(0, 1.0), (1, 1.0)], Relation::Equal, 1.0);
        lp.add_constraint(vec![(0, 1.0)], Relation::GreaterEq, 0.25);
        lp.add_constraint(vec![(1, 1.0)], Relation::GreaterEq, 0.5);
        let sol = solve(&lp, &SimplexOptions::default()).unwrap();
        assert!(close(sol.objective, 1.5));
        assert!(close(sol.x[0], 0.5));
        assert!(sol.primal_residual < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.add_constraint(vec![(0, 1.0)], Relation::GreaterEq, 2.0);
        lp.add_constraint(vec![(0, 1.0)], Relation::LessEq, 1.0);
        assert_eq!(solve(&lp, &SimplexOptions::default()).unwrap_err(), Error::Infeasible);

        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, 1.0);
        lp.add_constraint(vec![(0, 1.0), (1, -1.0)], Relation::LessEq, 1.0);
        assert_eq!(solve(&lp, &SimplexOptions::default()).unwrap_err(), Error::Unbounded);
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, 1.0);
        lp.add_constraint(vec![(0, 1.0), (1, 1.0)], Relation::Equal, 1.0);
        lp.add_constraint(vec![(0, 2.0), (1, 2.0)], Relation::Equal, 2.0);
        let sol = solve(&lp, &SimplexOptions::default()).unwrap();
        assert!(close(sol.objective, 1.0));
    }

    #[test]
    fn negative_rhs_is_normalized() {
        // -x <= -2  <=>  x >= 2 ; min x via max -x
        let mut lp = LinearProgram::new(1);
        lp.set_objective(0, -1.0);
        lp.add_constraint(vec![(0, -1.0)], Relation::LessEq, -2.0);
        let sol = solve(&lp, &SimplexOptions::default()).unwrap();
        assert!(close(sol.x[0], 2.0));
        assert!(close(sol.duals[0], 1.0));
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Beale's cycling example (maximization form).
        let mut lp = LinearProgram::new(4);
        for (j, c) in [0.75, -20.0, 0.5, -6.0].into_iter().enumerate() {
            lp.set_objective(j, c);
        }
        lp.add_constraint(vec![(0, 0.25), (1, -8.0), (2, -1.0), (3, 9.0)], Relation::LessEq, 0.0);
        lp.add_constraint(vec![(0, 0.5), (1, -12.0), (2, -0.5), (3, 3.0)], Relation::LessEq, 0.0);
        lp.add_constraint(vec![(2, 1.0)], Relation::LessEq, 1.0);
        let opts = SimplexOptions { degenerate_streak: 0, ..SimplexOptions::default() };
        let sol = solve(&lp, &opts).unwrap();
        assert!(close(sol.objective, 1.25));
    }

    #[test]
    fn listing_mentions_every_row() {
        let mut lp = LinearProgram::new(2);
        lp.set_objective(1, 1.0);
        lp.add_constraint(vec![(0, 1.0), (1, 1.0)], Relation::Equal, 1.0);
        let text = lp.to_listing(|j| alloc::format!("x{j}"));
        assert!(text.contains("MAXIMIZE") && text.contains(" c0:") && text.contains("x1 >= 0"));
    }
}
