//! Online LP relaxations and their solver.
//!
//! The Bernoulli relaxation has one variable per (user, round):
//!
//! ```text
//! max   sum x[i,t] * q[i,t] * v[i,t]
//! s.t.  sum_i x[i,t] <= p_t * c_t                                (capacity)
//!       x[i,t] <= p_t * (1 - sum_{t' < t} x[i,t'] * q[i,t'])     (online)
//!       x >= 0
//! ```
//!
//! The general relaxation indexes variables by (user, round, realization),
//! adds a per-user unit row and takes the online prefix over all earlier
//! realizations. With the stochastic flag the per-user row and the prefix
//! sums carry the success probabilities as weights.
//!
//! All rows are `<=` with non-negative right-hand sides, so the origin is
//! always feasible.

mod simplex;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::instance::{BernoulliInstance, GeneralInstance};
use crate::{Error, Result};

pub use simplex::SimplexOptions;

/// Default feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-8;

/// Index of an LP variable. Bernoulli models always use realization 0,
/// which coincides with the active realization of the general embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarKey {
    pub user: usize,
    pub round: usize,
    pub realization: usize,
}

impl VarKey {
    pub fn pair(user: usize, round: usize) -> Self {
        VarKey { user, round, realization: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Bernoulli,
    General { stochastic: bool },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub key: VarKey,
    pub objective: f64,
    /// Weight of this variable in the prefix mass of later rounds.
    pub prefix_weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Capacity { round: usize, realization: usize },
    Online { user: usize, round: usize, realization: usize },
    UserUnit { user: usize },
}

/// A `<=` constraint over model columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub kind: RowKind,
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Row {
    pub fn name(&self) -> String {
        match self.kind {
            RowKind::Capacity { round, realization } => format!("cap_{round}_{realization}"),
            RowKind::Online { user, round, realization } => format!("online_{user}_{round}_{realization}"),
            RowKind::UserUnit { user } => format!("unit_{user}"),
        }
    }

    fn lhs(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(c, a)| a * x[c]).sum()
    }
}

#[derive(Clone, Debug)]
pub struct LpModel {
    pub kind: ModelKind,
    pub n: usize,
    pub num_rounds: usize,
    pub columns: Vec<Column>,
    pub rows: Vec<Row>,
    /// Variables pinned to zero because their realization has probability 0.
    pub fixed_zero: Vec<VarKey>,
    index: HashMap<VarKey, usize>,
}

impl LpModel {
    fn new(kind: ModelKind, n: usize, num_rounds: usize) -> Self {
        LpModel { kind, n, num_rounds, columns: vec![], rows: vec![], fixed_zero: vec![], index: HashMap::new() }
    }

    fn add_column(&mut self, key: VarKey, objective: f64, prefix_weight: f64) -> usize {
        let idx = self.columns.len();
        self.columns.push(Column { key, objective, prefix_weight });
        self.index.insert(key, idx);
        idx
    }

    pub fn column(&self, key: &VarKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn num_capacity_rows(&self) -> usize {
        self.rows.iter().filter(|r| matches!(r.kind, RowKind::Capacity { .. })).count()
    }

    pub fn num_online_rows(&self) -> usize {
        self.rows.iter().filter(|r| matches!(r.kind, RowKind::Online { .. })).count()
    }

    fn dense_x(&self, sol: &LpSolution) -> Vec<f64> {
        self.columns.iter().map(|c| sol.get(&c.key)).collect()
    }

    /// Objective of an arbitrary assignment.
    pub fn evaluate(&self, sol: &LpSolution) -> f64 {
        self.columns.iter().map(|c| c.objective * sol.get(&c.key)).sum()
    }

    /// Weighted prefix mass of `user` strictly before `round`:
    /// sum over earlier rounds (and all their realizations) of `x * weight`.
    pub fn y_prefix(&self, sol: &LpSolution, user: usize, round: usize) -> f64 {
        self.columns
            .iter()
            .filter(|c| c.key.user == user && c.key.round < round)
            .map(|c| c.prefix_weight * sol.get(&c.key))
            .sum()
    }

    /// Lists all constraints violated by more than `tol`.
    pub fn check_feasibility(&self, sol: &LpSolution, tol: f64) -> FeasibilityReport {
        let x = self.dense_x(sol);
        let mut violations = Vec::new();
        for (c, &v) in self.columns.iter().zip(&x) {
            if v < -tol || !v.is_finite() {
                violations.push(Violation { constraint: format!("lower_{}", var_name(&c.key)), lhs: -v, rhs: 0.0 });
            }
        }
        for key in &self.fixed_zero {
            let v = sol.get(key);
            if v.abs() > tol {
                violations.push(Violation { constraint: format!("fixed_{}", var_name(key)), lhs: v.abs(), rhs: 0.0 });
            }
        }
        for row in &self.rows {
            let lhs = row.lhs(&x);
            if lhs > row.rhs + tol {
                violations.push(Violation { constraint: row.name(), lhs, rhs: row.rhs });
            }
        }
        FeasibilityReport { violations }
    }

    /// Dumps the model in CPLEX LP text format.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::new();
        let term = |coef: f64, key: &VarKey| format!("{coef:+} {}", var_name(key));
        out.push_str("\\ capalloc online LP\nMaximize\n obj:");
        for c in &self.columns {
            let _ = write!(out, " {}", term(c.objective, &c.key));
        }
        out.push_str("\nSubject To\n");
        for row in &self.rows {
            let _ = write!(out, " {}:", row.name());
            if row.coeffs.is_empty() {
                out.push_str(" 0 x_dummy");
            }
            for &(c, a) in &row.coeffs {
                let _ = write!(out, " {}", term(a, &self.columns[c].key));
            }
            let _ = writeln!(out, " <= {}", row.rhs);
        }
        out.push_str("Bounds\n");
        for key in &self.fixed_zero {
            let _ = writeln!(out, " {} = 0", var_name(key));
        }
        out.push_str("End\n");
        out
    }

    /// Solves with the dense revised simplex.
    pub fn solve(&self) -> Result<LpSolution> {
        self.solve_with(&SimplexOptions::default())
    }

    pub fn solve_with(&self, opts: &SimplexOptions) -> Result<LpSolution> {
        let m = self.rows.len();
        let nc = self.columns.len();
        let mut a = vec![vec![0.0; nc]; m];
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, coef) in &row.coeffs {
                a[r][c] += coef;
            }
        }
        let b: Vec<f64> = self.rows.iter().map(|r| r.rhs).collect();
        let obj: Vec<f64> = self.columns.iter().map(|c| c.objective).collect();
        let x = simplex::maximize(&a, &b, &obj, opts)?;

        let mut values = BTreeMap::new();
        for (c, v) in self.columns.iter().zip(&x) {
            values.insert(c.key, *v);
        }
        for key in &self.fixed_zero {
            values.insert(*key, 0.0);
        }
        let objective = obj.iter().zip(&x).map(|(c, v)| c * v).sum();
        let sol = LpSolution { status: LpStatus::Optimal, objective, x: values };
        let report = self.check_feasibility(&sol, FEAS_TOL);
        if !report.is_feasible() {
            return Err(Error::Solver(format!("solver returned an infeasible point: {}", report.summary())));
        }
        Ok(sol)
    }
}

fn var_name(key: &VarKey) -> String {
    format!("x_{}_{}_{}", key.user, key.round, key.realization)
}

/// Builds the Bernoulli relaxation. Variables of rounds with `p = 0` are
/// fixed to zero and get no online row.
pub fn build_bernoulli(inst: &BernoulliInstance) -> LpModel {
    let mut model = LpModel::new(ModelKind::Bernoulli, inst.n, inst.rounds.len());
    let mut cols: Vec<Vec<Option<usize>>> = Vec::with_capacity(inst.rounds.len());
    for (t, r) in inst.rounds.iter().enumerate() {
        let row_cols = (0..inst.n)
            .map(|i| {
                let key = VarKey::pair(i, t);
                if r.p > 0.0 {
                    Some(model.add_column(key, r.values[i] * r.q[i], r.q[i]))
                } else {
                    model.fixed_zero.push(key);
                    None
                }
            })
            .collect();
        cols.push(row_cols);
    }
    for (t, r) in inst.rounds.iter().enumerate() {
        let coeffs = cols[t].iter().flatten().map(|&c| (c, 1.0)).collect();
        model.rows.push(Row { kind: RowKind::Capacity { round: t, realization: 0 }, coeffs, rhs: r.p * r.c as f64 });
    }
    for (t, r) in inst.rounds.iter().enumerate() {
        for i in 0..inst.n {
            let Some(own) = cols[t][i] else { continue };
            let mut coeffs = vec![(own, 1.0)];
            for (tp, earlier) in cols.iter().enumerate().take(t) {
                if let Some(c) = earlier[i] {
                    let w = r.p * inst.rounds[tp].q[i];
                    if w != 0.0 {
                        coeffs.push((c, w));
                    }
                }
            }
            model.rows.push(Row { kind: RowKind::Online { user: i, round: t, realization: 0 }, coeffs, rhs: r.p });
        }
    }
    model
}

/// Builds the general relaxation; `stochastic` adds success-probability
/// weights to the per-user row and the online prefix sums.
pub fn build_general(inst: &GeneralInstance, stochastic: bool) -> LpModel {
    let mut model = LpModel::new(ModelKind::General { stochastic }, inst.n, inst.rounds.len());
    // cols[t][j][i]
    let mut cols: Vec<Vec<Vec<Option<usize>>>> = Vec::with_capacity(inst.rounds.len());
    for (t, round) in inst.rounds.iter().enumerate() {
        let mut per_round = Vec::with_capacity(round.realizations.len());
        for (j, z) in round.realizations.iter().enumerate() {
            let per_real = (0..inst.n)
                .map(|i| {
                    let key = VarKey { user: i, round: t, realization: j };
                    if z.p > 0.0 {
                        let w = if stochastic { z.q[i] } else { 1.0 };
                        Some(model.add_column(key, z.values[i] * z.q[i], w))
                    } else {
                        model.fixed_zero.push(key);
                        None
                    }
                })
                .collect();
            per_round.push(per_real);
        }
        cols.push(per_round);
    }
    let weight = |c: usize, m: &LpModel| m.columns[c].prefix_weight;
    for i in 0..inst.n {
        let coeffs: Vec<(usize, f64)> = cols
            .iter()
            .flat_map(|r| r.iter().filter_map(move |z| z[i]))
            .map(|c| (c, weight(c, &model)))
            .filter(|&(_, w)| w != 0.0)
            .collect();
        model.rows.push(Row { kind: RowKind::UserUnit { user: i }, coeffs, rhs: 1.0 });
    }
    for (t, round) in inst.rounds.iter().enumerate() {
        for (j, z) in round.realizations.iter().enumerate() {
            let coeffs = cols[t][j].iter().flatten().map(|&c| (c, 1.0)).collect();
            model.rows.push(Row {
                kind: RowKind::Capacity { round: t, realization: j },
                coeffs,
                rhs: z.p * z.c as f64,
            });
        }
    }
    for (t, round) in inst.rounds.iter().enumerate() {
        for (j, z) in round.realizations.iter().enumerate() {
            for i in 0..inst.n {
                let Some(own) = cols[t][j][i] else { continue };
                let mut coeffs = vec![(own, 1.0)];
                for earlier in cols.iter().take(t) {
                    for c in earlier.iter().filter_map(|zz| zz[i]) {
                        let w = z.p * weight(c, &model);
                        if w != 0.0 {
                            coeffs.push((c, w));
                        }
                    }
                }
                model.rows.push(Row {
                    kind: RowKind::Online { user: i, round: t, realization: j },
                    coeffs,
                    rhs: z.p,
                });
            }
        }
    }
    model
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Error,
}

/// Fractional allocation. Missing keys read as zero.
#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub x: BTreeMap<VarKey, f64>,
}

impl LpSolution {
    pub fn get(&self, key: &VarKey) -> f64 {
        self.x.get(key).copied().unwrap_or(0.0)
    }

    /// Bernoulli-indexed value `x[user, round]`.
    pub fn pair(&self, user: usize, round: usize) -> f64 {
        self.get(&VarKey::pair(user, round))
    }

    /// Builds a solution from explicit values; the objective is evaluated on `model`.
    pub fn from_values(model: &LpModel, values: impl IntoIterator<Item = (VarKey, f64)>) -> Self {
        let x: BTreeMap<VarKey, f64> = values.into_iter().collect();
        let mut sol = LpSolution { status: LpStatus::Optimal, objective: 0.0, x };
        sol.objective = model.evaluate(&sol);
        sol
    }

    pub fn to_json_string(&self) -> Result<String> {
        let doc = SolutionDoc {
            schema: SOLUTION_SCHEMA.to_string(),
            status: self.status,
            objective: self.objective,
            x: self.x.iter().map(|(k, v)| SolutionEntry { user: k.user, round: k.round, realization: k.realization, value: *v }).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: SolutionDoc = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if doc.schema != SOLUTION_SCHEMA {
            return Err(Error::Schema(format!("unsupported solution schema `{}`", doc.schema)));
        }
        let x = doc
            .x
            .into_iter()
            .map(|e| (VarKey { user: e.user, round: e.round, realization: e.realization }, e.value))
            .collect();
        Ok(LpSolution { status: doc.status, objective: doc.objective, x })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut body = self.to_json_string()?;
        body.push('\n');
        crate::util::write_atomic(path.as_ref(), body.as_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

pub const SOLUTION_SCHEMA: &str = "capalloc-solution/1";

#[derive(Serialize, Deserialize)]
struct SolutionDoc {
    schema: String,
    status: LpStatus,
    objective: f64,
    x: Vec<SolutionEntry>,
}

#[derive(Serialize, Deserialize)]
struct SolutionEntry {
    user: usize,
    round: usize,
    #[serde(default)]
    realization: usize,
    value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub constraint: String,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        self.violations
            .iter()
            .map(|v| format!("{} ({} > {})", v.constraint, v.lhs, v.rhs))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Solves the relaxation of a Bernoulli instance.
pub fn solve_bernoulli(inst: &BernoulliInstance) -> Result<LpSolution> {
    build_bernoulli(inst).solve()
}

/// Solves the relaxation of a general instance, using the stochastic form
/// whenever some success probability is below one.
pub fn solve_general(inst: &GeneralInstance) -> Result<LpSolution> {
    build_general(inst, !inst.deterministic_rewards()).solve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_bdm_counterexample, gen_lp_gap, gen_random, RandomParams, RoundSpec};

    fn single_edge() -> BernoulliInstance {
        BernoulliInstance { n: 1, rounds: vec![RoundSpec { p: 1.0, c: 1, values: vec![1.0], q: vec![1.0] }] }
    }

    #[test]
    fn lp_gap_counts() {
        let m = build_bernoulli(&gen_lp_gap());
        assert_eq!(m.columns.len(), 4);
        assert_eq!(m.num_capacity_rows(), 2);
        assert_eq!(m.num_online_rows(), 4);
    }

    #[test]
    fn single_edge_model() {
        let m = build_bernoulli(&single_edge());
        assert_eq!(m.columns.len(), 1);
        assert_eq!(m.columns[0].objective, 1.0);
        assert_eq!(m.rows.len(), 2);
        for row in &m.rows {
            assert_eq!(row.coeffs, vec![(0, 1.0)]);
            assert_eq!(row.rhs, 1.0);
        }
        let sol = m.solve().unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bdm_capacity_rhs() {
        let m = build_bernoulli(&gen_bdm_counterexample(4).unwrap());
        let cap0 = m.rows.iter().find(|r| r.kind == RowKind::Capacity { round: 0, realization: 0 }).unwrap();
        assert!((cap0.rhs - 3.0).abs() < 1e-15);
    }

    #[test]
    fn lp_gap_optimum() {
        let m = build_bernoulli(&gen_lp_gap());
        let sol = m.solve().unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-8);
        // the all-half point is also optimal
        let half = LpSolution::from_values(&m, m.columns.iter().map(|c| (c.key, 0.5)));
        assert!(m.check_feasibility(&half, 1e-12).is_feasible());
        assert!((half.objective - 2.0).abs() < 1e-12);
        assert!((m.y_prefix(&half, 0, 1) - 0.5).abs() < 1e-15);
        assert_eq!(m.y_prefix(&sol, 1, 0), 0.0);
    }

    #[test]
    fn bdm_unique_optimum() {
        let m = build_bernoulli(&gen_bdm_counterexample(4).unwrap());
        let sol = m.solve().unwrap();
        assert!((sol.objective - 19.0).abs() < 1e-8);
        for i in 0..4 {
            assert!((sol.pair(i, 0) - 0.75).abs() < 1e-8);
            assert!((sol.pair(i, 1) - 0.25).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_values_zero_objective() {
        let mut inst = gen_lp_gap();
        for r in &mut inst.rounds {
            r.values.iter_mut().for_each(|v| *v = 0.0);
        }
        assert_eq!(solve_bernoulli(&inst).unwrap().objective, 0.0);
    }

    #[test]
    fn zero_probability_round_fixed() {
        let mut inst = gen_lp_gap();
        inst.rounds[0].p = 0.0;
        let m = build_bernoulli(&inst);
        assert_eq!(m.fixed_zero.len(), 2);
        assert_eq!(m.num_online_rows(), 2);
        let sol = m.solve().unwrap();
        assert_eq!(sol.pair(0, 0), 0.0);
        assert!((sol.objective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn perturbation_is_reported() {
        let m = build_bernoulli(&gen_lp_gap());
        let tol = 1e-8;
        let mut values: Vec<(VarKey, f64)> = m.columns.iter().map(|c| (c.key, 0.5)).collect();
        values[0].1 += 2.0 * tol;
        let sol = LpSolution::from_values(&m, values);
        let report = m.check_feasibility(&sol, tol);
        assert!(!report.is_feasible());
        assert!(report.violations.iter().any(|v| v.constraint == "cap_0_0"));
        assert!(report.violations.iter().any(|v| v.constraint == "online_0_0_0"));
    }

    #[test]
    fn general_single_realization_is_fractional_knapsack() {
        // one round, deterministic arrival, capacity 2: take the top two v*q
        let inst = GeneralInstance {
            n: 4,
            rounds: vec![crate::instance::GeneralRound {
                realizations: vec![RoundSpec {
                    p: 1.0,
                    c: 2,
                    values: vec![3.0, 1.0, 5.0, 2.0],
                    q: vec![0.5, 1.0, 0.2, 1.0],
                }],
            }],
        };
        let sol = solve_general(&inst).unwrap();
        // v*q = 1.5, 1.0, 1.0, 2.0 -> top two = 3.5
        let mut vq: Vec<f64> = (0..4).map(|i| inst.rounds[0].realizations[0].values[i] * inst.rounds[0].realizations[0].q[i]).collect();
        vq.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((sol.objective - (vq[0] + vq[1])).abs() < 1e-9);
    }

    #[test]
    fn stochastic_flag_irrelevant_when_q_is_one() {
        let g = gen_lp_gap().to_general();
        let a = build_general(&g, true);
        let b = build_general(&g, false);
        assert_eq!(a.columns, b.columns);
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn general_embedding_matches_bernoulli_objective() {
        let params = RandomParams { n: 3, rounds: 3, capacity: (1, 3), value: (0.0, 5.0), q: (0.3, 1.0), p: (0.0, 1.0) };
        for seed in 0..20 {
            let inst = gen_random(&params, seed).unwrap();
            let a = solve_bernoulli(&inst).unwrap().objective;
            let b = build_general(&inst.to_general(), true).solve().unwrap().objective;
            assert!((a - b).abs() < 1e-9, "seed {seed}: {a} vs {b}");
        }
    }

    #[test]
    fn lp_format_mentions_all_rows() {
        let m = build_bernoulli(&gen_lp_gap());
        let text = m.to_lp_format();
        assert!(text.starts_with("\\ capalloc"));
        for row in &m.rows {
            assert!(text.contains(&format!(" {}:", row.name())));
        }
    }

    #[test]
    fn solution_file_round_trip() {
        let sol = solve_bernoulli(&gen_lp_gap()).unwrap();
        let back = LpSolution::from_json_str(&sol.to_json_string().unwrap()).unwrap();
        assert_eq!(back, sol);
    }
}
