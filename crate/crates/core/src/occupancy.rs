//! Occupancy measures over `S_R x arms` and the finite program for `T_R*(C)`.
//!
//! A feasible occupancy measure is nonnegative, has total mass one, balances
//! flow into and out of every state under `Q_{C,R}`, and puts no mass on
//! non-forced arms at forced states. `T_R*(C)` maximizes, over that
//! polytope, the smallest KL-weighted separation between `C` and any
//! alternative. The program is solved in epigraph form:
//!
//! ```text
//! maximize t
//!   t <= sum nu(s,a) kl(s,a,C')      for every C' in Alt(C)
//!   sum_a nu(s',a) = sum nu(s,a) Q(s'|s,a)   (one row dropped)
//!   sum nu = 1,  nu >= 0
//! ```
//!
//! Forced-selection constraints are enforced structurally: only legal
//! `(state, arm)` pairs get a column.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::delay::{transition_kernel, SparseKernel, StateSpace};
use crate::graph::is_ergodic_graph;
use crate::instance::ConfigurationSet;
use crate::markov::{kl_divergence, stationary_dense, PowerCache};
use crate::simplex::{self, LinearProgram, Relation, SimplexOptions};
use crate::{Error, Result};

/// Tolerance on flow, normalization and forced-row residuals.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Optimality tolerance handed to the simplex solver.
pub const OPTIMALITY_TOL: f64 = 1e-9;

/// `KL(P_p^d(.|i) || P_q^d(.|i))` for every TPM pair, delay and last state.
#[derive(Clone, Debug)]
pub struct KlCache {
    tpms: usize,
    max_delay: usize,
    chain_states: usize,
    values: Vec<f64>,
}

impl KlCache {
    pub fn new(powers: &PowerCache) -> Result<Self> {
        let tpms = powers.tpm_count();
        let max_delay = powers.max_power();
        let chain_states = powers.get(0, 0).size();
        let mut values = vec![0.0; tpms * tpms * (max_delay + 1) * chain_states];
        for p in 0..tpms {
            for q in 0..tpms {
                if p == q {
                    continue;
                }
                for d in 1..=max_delay {
                    for i in 0..chain_states {
                        let kl = kl_divergence(powers.get(p, d).row(i), powers.get(q, d).row(i))?;
                        values[((p * tpms + q) * (max_delay + 1) + d) * chain_states + i] = kl;
                    }
                }
            }
        }
        Ok(Self { tpms, max_delay, chain_states, values })
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize, delay: usize, last: usize) -> f64 {
        self.values[((p * self.tpms + q) * (self.max_delay + 1) + delay) * self.chain_states + last]
    }
}

/// KL coefficients of one configuration against each of its alternatives.
#[derive(Clone, Debug)]
pub struct KlCoefficients {
    arms: usize,
    alternatives: Vec<usize>,
    /// per alternative, indexed by `state * K + arm`
    coeffs: Vec<Vec<f64>>,
}

impl KlCoefficients {
    pub fn alternatives(&self) -> &[usize] {
        &self.alternatives
    }

    pub fn for_alternative(&self, k: usize) -> &[f64] {
        &self.coeffs[k]
    }

    pub fn get(&self, k: usize, state: usize, arm: usize) -> f64 {
        self.coeffs[k][state * self.arms + arm]
    }
}

/// `kl[s,a,C'] = KL((P_C^a)^{d_a}(.|i_a) || (P_{C'}^a)^{d_a}(.|i_a))` for `C' in Alt(C)`.
pub fn kl_coefficients(
    configs: &ConfigurationSet,
    config: usize,
    space: &StateSpace,
    cache: &KlCache,
) -> KlCoefficients {
    let k = space.arms();
    let alternatives = configs.alt_set(config);
    let coeffs = alternatives
        .iter()
        .map(|&alt| {
            let mut row = vec![0.0; space.len() * k];
            for (s, a) in space.legal_pairs() {
                let st = space.state(s);
                let p = configs.tpm_of(config, a);
                let q = configs.tpm_of(alt, a);
                if p != q {
                    row[s * k + a] = cache.get(p, q, st.delay(a), st.last_state(a));
                }
            }
            row
        })
        .collect();
    KlCoefficients { arms: k, alternatives, coeffs }
}

/// Mass per `(state, arm)`, indexed `state * K + arm`.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyMeasure {
    arms: usize,
    mass: Vec<f64>,
}

impl OccupancyMeasure {
    pub fn from_mass(arms: usize, mass: Vec<f64>) -> Self {
        assert_eq!(mass.len() % arms, 0, "mass length must be a multiple of the arm count");
        Self { arms, mass }
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn states(&self) -> usize {
        self.mass.len() / self.arms
    }

    #[inline]
    pub fn get(&self, state: usize, arm: usize) -> f64 {
        self.mass[state * self.arms + arm]
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `sum_a nu(s, a)` per state.
    pub fn state_marginal(&self) -> Vec<f64> {
        self.mass.chunks_exact(self.arms).map(|c| c.iter().sum()).collect()
    }

    /// `sum_s nu(s, a)` per arm.
    pub fn arm_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.arms];
        for chunk in self.mass.chunks_exact(self.arms) {
            for (o, v) in out.iter_mut().zip(chunk) {
                *o += v;
            }
        }
        out
    }

    /// Largest entrywise distance to another measure of the same shape.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.mass.iter().zip(&other.mass).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Per-state arm distribution `lambda(a | s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingRule {
    arms: usize,
    probs: Vec<f64>,
}

impl SamplingRule {
    /// Uniform over arms at free states, point mass at forced states.
    pub fn uniform(space: &StateSpace) -> Self {
        let k = space.arms();
        let mut probs = vec![0.0; space.len() * k];
        for s in 0..space.len() {
            match space.forced_arm(s) {
                Some(f) => probs[s * k + f] = 1.0,
                None => probs[s * k..(s + 1) * k].fill(1.0 / k as f64),
            }
        }
        Self { arms: k, probs }
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.probs[state * self.arms..(state + 1) * self.arms]
    }

    /// Draws an arm by inversion from a uniform variate `u` in `[0, 1)`.
    #[inline]
    pub fn sample(&self, state: usize, u: f64) -> usize {
        let row = self.row(state);
        let mut acc = 0.0;
        for (a, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        // u fell in the rounding gap at the top; take the last arm with mass
        row.iter().rposition(|&p| p > 0.0).unwrap_or(self.arms - 1)
    }
}

/// Dense TPM of the chain on `S_R` induced by `rule`.
pub fn induced_chain(space: &StateSpace, kernel: &SparseKernel, rule: &SamplingRule) -> Vec<f64> {
    let n = space.len();
    let mut q = vec![0.0; n * n];
    for (s, a) in space.legal_pairs() {
        let w = rule.row(s)[a];
        if w == 0.0 {
            continue;
        }
        for (next, p) in kernel.transitions(space, s, a) {
            q[s * n + next] += w * p;
        }
    }
    q
}

/// The induced chain under `rule` is irreducible and aperiodic.
pub fn induced_chain_is_ergodic(
    space: &StateSpace,
    kernel: &SparseKernel,
    rule: &SamplingRule,
) -> bool {
    let mut adj = vec![Vec::new(); space.len()];
    for (s, a) in space.legal_pairs() {
        if rule.row(s)[a] <= 0.0 {
            continue;
        }
        for (next, p) in kernel.transitions(space, s, a) {
            if p > 0.0 && !adj[s].contains(&next) {
                adj[s].push(next);
            }
        }
    }
    is_ergodic_graph(&adj)
}

/// Stationary law on `S_R` of the uniform-with-forcing policy.
pub fn uniform_chain_stationary(space: &StateSpace, kernel: &SparseKernel) -> Result<Vec<f64>> {
    let rule = SamplingRule::uniform(space);
    let q = induced_chain(space, kernel, &rule);
    stationary_dense(space.len(), &q)
}

/// `max_s' |(mu Q)(s') - mu(s')|` for a dense chain.
pub fn chain_residual(n: usize, q: &[f64], mu: &[f64]) -> f64 {
    let mut flow = vec![0.0; n];
    for s in 0..n {
        if mu[s] == 0.0 {
            continue;
        }
        for t in 0..n {
            flow[t] += mu[s] * q[s * n + t];
        }
    }
    flow.iter().zip(mu).map(|(f, m)| (f - m).abs()).fold(0.0, f64::max)
}

/// `nu_unif(s,a)`: `mu(s)/K` at free states, `mu(s)` on the forced arm.
pub fn uniform_occupancy(mu: &[f64], space: &StateSpace) -> OccupancyMeasure {
    let k = space.arms();
    let mut mass = vec![0.0; space.len() * k];
    for (s, &m) in mu.iter().enumerate() {
        match space.forced_arm(s) {
            Some(f) => mass[s * k + f] = m,
            None => mass[s * k..(s + 1) * k].fill(m / k as f64),
        }
    }
    OccupancyMeasure { arms: k, mass }
}

/// `sum_{s,a} nu(s,a) coeff(s,a)`.
pub fn kl_weighted_objective(nu: &OccupancyMeasure, coeffs: &[f64]) -> f64 {
    nu.mass.iter().zip(coeffs).map(|(m, c)| m * c).sum()
}

/// `min_{C'} sum nu kl(., C')`: the worst-case separation achieved by `nu`.
pub fn worst_case_separation(nu: &OccupancyMeasure, kl: &KlCoefficients) -> f64 {
    kl.coeffs.iter().map(|c| kl_weighted_objective(nu, c)).fold(f64::INFINITY, f64::min)
}

/// `T_R^unif(C)`.
pub fn t_r_unif(nu_unif: &OccupancyMeasure, kl: &KlCoefficients) -> f64 {
    worst_case_separation(nu_unif, kl)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverDiagnostics {
    pub pivots: usize,
    pub constraint_rows: usize,
    pub columns: usize,
    pub primal_residual: f64,
    pub dual_infeasibility: f64,
    pub duality_gap: f64,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    /// `T_R*(C)` in nats per sample.
    pub value: f64,
    pub measure: OccupancyMeasure,
    pub diagnostics: SolverDiagnostics,
}

struct OccupancyProgram {
    lp: LinearProgram,
    /// `(state, arm)` of each measure column; the epigraph column is last
    columns: Vec<(usize, usize)>,
}

fn build_program(space: &StateSpace, kernel: &SparseKernel, kl: &KlCoefficients) -> OccupancyProgram {
    let n = space.len();
    let columns: Vec<(usize, usize)> = space.legal_pairs().collect();
    let t_col = columns.len();
    let mut lp = LinearProgram::new(columns.len() + 1);
    lp.set_objective(t_col, 1.0);

    // flow rows for every state except the last (it is implied by the rest)
    let mut flow: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (col, &(s, a)) in columns.iter().enumerate() {
        flow[s].push((col, 1.0));
        for (next, p) in kernel.transitions(space, s, a) {
            if p != 0.0 {
                flow[next].push((col, -p));
            }
        }
    }
    flow.pop();
    for row in flow {
        lp.add_constraint(row, Relation::Equal, 0.0);
    }
    lp.add_constraint((0..t_col).map(|c| (c, 1.0)).collect(), Relation::Equal, 1.0);
    for coeffs in &kl.coeffs {
        let mut row: Vec<(usize, f64)> = columns
            .iter()
            .enumerate()
            .filter_map(|(col, &(s, a))| {
                let v = coeffs[s * space.arms() + a];
                (v != 0.0).then_some((col, -v))
            })
            .collect();
        row.push((t_col, 1.0));
        lp.add_constraint(row, Relation::LessEq, 0.0);
    }
    OccupancyProgram { lp, columns }
}

/// Solves the finite program for `T_R*(C)`.
pub fn solve_t_r_star(
    space: &StateSpace,
    kernel: &SparseKernel,
    kl: &KlCoefficients,
) -> Result<LpSolution> {
    let program = build_program(space, kernel, kl);
    let opts = SimplexOptions { optimality_tol: 1e-10, ..SimplexOptions::default() };
    let sol = simplex::solve(&program.lp, &opts)?;
    let k = space.arms();
    let mut mass = vec![0.0; space.len() * k];
    for (col, &(s, a)) in program.columns.iter().enumerate() {
        mass[s * k + a] = sol.x[col];
    }
    let measure = OccupancyMeasure { arms: k, mass };
    let report = verify_occupancy(&measure, kernel, space);
    if report.max() > FEASIBILITY_TOL {
        return Err(Error::NumericalBreakdown { detail: "optimal measure violates feasibility" });
    }
    if sol.dual_infeasibility > OPTIMALITY_TOL || sol.duality_gap > OPTIMALITY_TOL {
        return Err(Error::NumericalBreakdown { detail: "optimality certificate failed" });
    }
    let value = worst_case_separation(&measure, kl);
    Ok(LpSolution {
        value,
        measure,
        diagnostics: SolverDiagnostics {
            pivots: sol.pivots,
            constraint_rows: program.lp.constraints().len(),
            columns: program.lp.vars(),
            primal_residual: sol.primal_residual,
            dual_infeasibility: sol.dual_infeasibility,
            duality_gap: sol.duality_gap,
        },
    })
}

/// Standard-form listing of the `T_R*(C)` program for external cross-checks.
pub fn program_listing(space: &StateSpace, kernel: &SparseKernel, kl: &KlCoefficients) -> String {
    let program = build_program(space, kernel, kl);
    let columns = program.columns;
    program.lp.to_listing(|j| match columns.get(j) {
        Some(&(s, a)) => format!("nu_{s}_{a}"),
        None => String::from("t"),
    })
}

/// `eta * nu_unif + (1 - eta) * nu_star` and its state marginal.
pub fn mixture_occupancy(
    nu_unif: &OccupancyMeasure,
    nu_star: &OccupancyMeasure,
    eta: f64,
) -> Result<(OccupancyMeasure, Vec<f64>)> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter { name: "eta", value: eta });
    }
    if nu_unif.mass.len() != nu_star.mass.len() {
        return Err(Error::LengthMismatch { left: nu_unif.mass.len(), right: nu_star.mass.len() });
    }
    let mass = nu_unif
        .mass
        .iter()
        .zip(&nu_star.mass)
        .map(|(u, s)| if eta == 1.0 { *u } else { eta * u + (1.0 - eta) * s })
        .collect();
    let nu = OccupancyMeasure { arms: nu_unif.arms, mass };
    let marginal = nu.state_marginal();
    Ok((nu, marginal))
}

/// `lambda(a | s) = nu(s, a) / mu(s)`; forced states get an exact point mass.
pub fn sampling_rule(
    nu: &OccupancyMeasure,
    marginal: &[f64],
    space: &StateSpace,
) -> Result<SamplingRule> {
    let k = space.arms();
    let mut probs = vec![0.0; space.len() * k];
    for s in 0..space.len() {
        let m = marginal[s];
        if !(m > 0.0) {
            return Err(Error::ZeroMarginal { state: s });
        }
        match space.forced_arm(s) {
            Some(f) => probs[s * k + f] = 1.0,
            None => {
                let row = &mut probs[s * k..(s + 1) * k];
                for (a, p) in row.iter_mut().enumerate() {
                    *p = nu.get(s, a).max(0.0) / m;
                }
                let total: f64 = row.iter().sum();
                for p in row.iter_mut() {
                    *p /= total;
                }
            }
        }
    }
    Ok(SamplingRule { arms: k, probs })
}

/// Constraint residuals of a candidate occupancy measure.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ResidualReport {
    pub flow: f64,
    pub normalization: f64,
    /// Magnitude of the most negative entry.
    pub negativity: f64,
    /// Largest mass on a non-forced arm at a forced state.
    pub forced: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.flow.max(self.normalization).max(self.negativity).max(self.forced)
    }
}

pub fn verify_occupancy(
    nu: &OccupancyMeasure,
    kernel: &SparseKernel,
    space: &StateSpace,
) -> ResidualReport {
    let k = space.arms();
    let n = space.len();
    let mut inflow = vec![0.0; n];
    let mut forced = 0.0_f64;
    for s in 0..n {
        for a in 0..k {
            let m = nu.get(s, a);
            if !space.is_legal(s, a) {
                forced = forced.max(m.abs());
                continue;
            }
            if m == 0.0 {
                continue;
            }
            for (next, p) in kernel.transitions(space, s, a) {
                inflow[next] += m * p;
            }
        }
    }
    let outflow = nu.state_marginal();
    let flow = inflow.iter().zip(&outflow).map(|(i, o)| (i - o).abs()).fold(0.0, f64::max);
    let total: f64 = nu.mass.iter().sum();
    let negativity = nu.mass.iter().fold(0.0_f64, |m, &v| m.max(-v));
    ResidualReport { flow, normalization: (total - 1.0).abs(), negativity, forced }
}

/// Zero-extends a measure on `from` to the larger space `to` (same arms and chain states).
pub fn embed_occupancy(
    nu: &OccupancyMeasure,
    from: &StateSpace,
    to: &StateSpace,
) -> Result<OccupancyMeasure> {
    let k = from.arms();
    let mut mass = vec![0.0; to.len() * k];
    for s in 0..from.len() {
        let target = to.index_of(from.state(s)).ok_or(Error::UnknownState)?;
        for a in 0..k {
            mass[target * k + a] = nu.get(s, a);
        }
    }
    Ok(OccupancyMeasure { arms: k, mass })
}

/// Everything the policy and the reports need for one configuration.
#[derive(Clone, Debug)]
pub struct ConfigurationAnalysis {
    pub config: usize,
    pub kernel: SparseKernel,
    pub kl: KlCoefficients,
    pub uniform_stationary: Vec<f64>,
    pub uniform: OccupancyMeasure,
    pub optimal: LpSolution,
    pub t_unif: f64,
    pub mixture: OccupancyMeasure,
    pub mixture_marginal: Vec<f64>,
    pub rule: SamplingRule,
}

impl ConfigurationAnalysis {
    pub fn t_star(&self) -> f64 {
        self.optimal.value
    }

    /// Drift of `Z_CC'(n)/n` under the mixture rule, per alternative.
    pub fn mixture_drifts(&self) -> Vec<f64> {
        self.kl.coeffs.iter().map(|c| kl_weighted_objective(&self.mixture, c)).collect()
    }

    /// `1 / (eta T_unif + (1 - eta) T_R*)`.
    pub fn stopping_bound(&self, eta: f64) -> f64 {
        1.0 / (eta * self.t_unif + (1.0 - eta) * self.t_star())
    }
}

pub fn analyze_configuration(
    configs: &ConfigurationSet,
    config: usize,
    space: &StateSpace,
    powers: &PowerCache,
    cache: &KlCache,
    eta: f64,
) -> Result<ConfigurationAnalysis> {
    let kernel = transition_kernel(configs.get(config), space, powers);
    let kl = kl_coefficients(configs, config, space, cache);
    let uniform_stationary = uniform_chain_stationary(space, &kernel)?;
    let uniform = uniform_occupancy(&uniform_stationary, space);
    let optimal = solve_t_r_star(space, &kernel, &kl)?;
    let t_unif = t_r_unif(&uniform, &kl);
    let (mixture, mixture_marginal) = mixture_occupancy(&uniform, &optimal.measure, eta)?;
    let rule = sampling_rule(&mixture, &mixture_marginal, space)?;
    Ok(ConfigurationAnalysis {
        config,
        kernel,
        kl,
        uniform_stationary,
        uniform,
        optimal,
        t_unif,
        mixture,
        mixture_marginal,
        rule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::validate_tpm;

    struct Fixture {
        configs: ConfigurationSet,
        space: StateSpace,
        powers: PowerCache,
        cache: KlCache,
    }

    fn fixture(r: usize) -> Fixture {
        let p1 = validate_tpm(&[vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let p2 = validate_tpm(&[vec![0.7, 0.3], vec![0.6, 0.4]]).unwrap();
        let powers = PowerCache::new(&[p1, p2], r);
        let cache = KlCache::new(&powers).unwrap();
        Fixture {
            configs: ConfigurationSet::new(2),
            space: StateSpace::enumerate(2, r, 2).unwrap(),
            powers,
            cache,
        }
    }

    fn analysis(f: &Fixture, eta: f64) -> ConfigurationAnalysis {
        analyze_configuration(&f.configs, 0, &f.space, &f.powers, &f.cache, eta).unwrap()
    }

    #[test]
    fn uniform_stationary_is_positive_fixed_point() {
        let f = fixture(3);
        let an = analysis(&f, 0.2);
        let q = induced_chain(&f.space, &an.kernel, &SamplingRule::uniform(&f.space));
        assert!(chain_residual(f.space.len(), &q, &an.uniform_stationary) <= 1e-10);
        assert!(an.uniform_stationary.iter().all(|&m| m > 0.0));
        assert!((an.uniform_stationary.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(induced_chain_is_ergodic(&f.space, &an.kernel, &SamplingRule::uniform(&f.space)));
    }

    #[test]
    fn uniform_occupancy_is_feasible() {
        let f = fixture(3);
        let an = analysis(&f, 0.2);
        assert!(verify_occupancy(&an.uniform, &an.kernel, &f.space).max() <= FEASIBILITY_TOL);
        for s in 0..f.space.len() {
            match f.space.forced_arm(s) {
                Some(a) => {
                    assert_eq!(an.uniform.get(s, a), an.uniform_stationary[s]);
                    assert_eq!(an.uniform.get(s, 1 - a), 0.0);
                }
                None => assert_eq!(an.uniform.get(s, 0), an.uniform.get(s, 1)),
            }
        }
    }

    #[test]
    fn lp_beats_uniform_and_is_feasible() {
        let f = fixture(4);
        let an = analysis(&f, 0.2);
        assert!(an.t_star() >= an.t_unif - 1e-9);
        assert!(an.t_unif > 0.0);
        assert!(verify_occupancy(&an.optimal.measure, &an.kernel, &f.space).max() <= FEASIBILITY_TOL);
        assert!(an.optimal.diagnostics.duality_gap <= 1e-9);
    }

    #[test]
    fn mixture_endpoints_and_positivity() {
        let f = fixture(3);
        let an = analysis(&f, 1.0);
        assert_eq!(an.mixture, an.uniform);
        for s in 0..f.space.len() {
            if f.space.forced_arm(s).is_none() {
                for &p in an.rule.row(s) {
                    assert!((p - 0.5).abs() < 1e-12);
                }
            }
        }
        let an = analysis(&f, 0.1);
        assert!(verify_occupancy(&an.mixture, &an.kernel, &f.space).max() <= FEASIBILITY_TOL);
        let min_unif = an.uniform_stationary.iter().copied().fold(f64::INFINITY, f64::min);
        for s in 0..f.space.len() {
            assert!(an.mixture_marginal[s] >= 0.1 / 2.0 * an.uniform_stationary[s] - 1e-15);
            match f.space.forced_arm(s) {
                Some(a) => assert_eq!(an.rule.row(s)[a], 1.0),
                None => {
                    for &p in an.rule.row(s) {
                        assert!(p >= 0.1 / 2.0 * min_unif);
                    }
                }
            }
        }
        assert!(mixture_occupancy(&an.uniform, &an.uniform, 0.0).is_err());
    }

    #[test]
    fn perturbation_shows_in_flow_residual() {
        let f = fixture(3);
        let an = analysis(&f, 0.2);
        let mut mass = an.uniform.mass().to_vec();
        let free = (0..f.space.len()).find(|&s| f.space.forced_arm(s).is_none()).unwrap();
        mass[free * 2] += 1e-3;
        let perturbed = OccupancyMeasure::from_mass(2, mass);
        let report = verify_occupancy(&perturbed, &an.kernel, &f.space);
        assert!(report.flow >= 1e-4);
    }

    #[test]
    fn objective_is_linear() {
        let f = fixture(3);
        let an = analysis(&f, 0.2);
        let coeffs = an.kl.for_alternative(0);
        let alpha = 0.3;
        let (mix, _) = mixture_occupancy(&an.uniform, &an.optimal.measure, alpha).unwrap();
        let lhs = kl_weighted_objective(&mix, coeffs);
        let rhs = alpha * kl_weighted_objective(&an.uniform, coeffs)
            + (1.0 - alpha) * kl_weighted_objective(&an.optimal.measure, coeffs);
        assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn self_coefficients_vanish() {
        let f = fixture(3);
        // C against itself: every arm keeps its TPM
        for (s, a) in f.space.legal_pairs() {
            let st = f.space.state(s);
            let p = f.configs.tpm_of(0, a);
            assert_eq!(f.cache.get(p, p, st.delay(a), st.last_state(a)), 0.0);
        }
    }

    #[test]
    fn sampling_rule_rejects_zero_marginal() {
        let f = fixture(3);
        let nu = OccupancyMeasure::from_mass(2, vec![0.0; f.space.len() * 2]);
        let marginal = nu.state_marginal();
        assert!(matches!(
            sampling_rule(&nu, &marginal, &f.space),
            Err(Error::ZeroMarginal { state: 0 })
        ));
    }

    #[test]
    fn listing_has_epigraph_column() {
        let f = fixture(3);
        let an = analysis(&f, 0.2);
        let text = program_listing(&f.space, &an.kernel, &an.kl);
        assert!(text.contains("+1e0 t"));
        assert!(text.contains("nu_0_0"));
    }
}
