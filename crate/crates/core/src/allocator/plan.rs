//! Per-round quantities the rounding scheme needs, precomputed from an LP
//! solution. Bernoulli and general instances share this representation: a
//! Bernoulli round is a general round with one realization and the
//! non-arrival mass left implicit.

use crate::instance::{BernoulliInstance, GeneralInstance, RoundSpec};
use crate::lp::{self, LpModel, LpSolution, VarKey};
use crate::{Error, Result};

use super::alpha;

/// Tolerance when checking a supplied LP solution against its model.
pub const PLAN_FEAS_TOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct RealizationPlan {
    pub index: usize,
    pub prob: f64,
    pub cap: u32,
    /// False when `prob = 0` or `cap = 0`; such outcomes do nothing.
    pub active: bool,
    pub x: Vec<f64>,
    /// `x / prob`, clamped to `[0, 1]`.
    pub marginals: Vec<f64>,
    pub q: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundPlan {
    /// Success-weighted LP mass of each user before this round.
    pub y: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Users with `alpha = 1`, who may also be picked by the second proposal.
    pub late: Vec<bool>,
    pub realizations: Vec<RealizationPlan>,
}

impl RoundPlan {
    /// Outcome selected by a uniform draw `u`; `None` means nothing arrives.
    pub fn pick(&self, u: f64) -> Option<usize> {
        let mut cum = 0.0;
        for r in &self.realizations {
            cum += r.prob;
            if u < cum {
                return Some(r.index);
            }
        }
        None
    }

    /// Probability that an active realization is drawn.
    pub fn active_mass(&self) -> f64 {
        self.realizations.iter().filter(|r| r.active).map(|r| r.prob).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub n: usize,
    /// The constant the allocation probabilities target.
    pub kappa: f64,
    pub rounds: Vec<RoundPlan>,
}

impl Plan {
    pub fn num_rounds(&self) -> usize {
        self.rounds.len()
    }

    pub fn realization(&self, t: usize, j: usize) -> &RealizationPlan {
        &self.rounds[t].realizations[j]
    }

    /// All `(user, round, realization)` keys with positive LP mass.
    pub fn keys(&self) -> Vec<VarKey> {
        let mut out = Vec::new();
        for (t, r) in self.rounds.iter().enumerate() {
            for z in &r.realizations {
                for i in 0..self.n {
                    if z.x[i] > 0.0 {
                        out.push(VarKey { user: i, round: t, realization: z.index });
                    }
                }
            }
        }
        out
    }

    pub fn x(&self, key: &VarKey) -> f64 {
        self.rounds[key.round].realizations[key.realization].x[key.user]
    }

    pub fn for_bernoulli(inst: &BernoulliInstance, sol: &LpSolution, kappa: f64) -> Result<Self> {
        inst.validate().into_result()?;
        let model = lp::build_bernoulli(inst);
        check(&model, sol)?;
        let rounds = inst.rounds.iter().enumerate().map(|(t, r)| vec![(r, sol_row(sol, inst.n, t, 0))]).collect();
        build(inst.n, kappa, rounds)
    }

    pub fn for_general(inst: &GeneralInstance, sol: &LpSolution, kappa: f64) -> Result<Self> {
        inst.validate().into_result()?;
        let model = lp::build_general(inst, !inst.deterministic_rewards());
        check(&model, sol)?;
        let rounds = inst
            .rounds
            .iter()
            .enumerate()
            .map(|(t, r)| r.realizations.iter().enumerate().map(|(j, z)| (z, sol_row(sol, inst.n, t, j))).collect())
            .collect();
        build(inst.n, kappa, rounds)
    }
}

fn sol_row(sol: &LpSolution, n: usize, t: usize, j: usize) -> Vec<f64> {
    (0..n).map(|i| sol.get(&VarKey { user: i, round: t, realization: j }).max(0.0)).collect()
}

fn check(model: &LpModel, sol: &LpSolution) -> Result<()> {
    let report = model.check_feasibility(sol, PLAN_FEAS_TOL);
    if report.is_feasible() {
        Ok(())
    } else {
        Err(Error::InfeasibleSolution(report.summary()))
    }
}

fn build(n: usize, kappa: f64, rounds: Vec<Vec<(&RoundSpec, Vec<f64>)>>) -> Result<Plan> {
    let mut y = vec![0.0; n];
    let mut out = Vec::with_capacity(rounds.len());
    for round in rounds {
        let ycur: Vec<f64> = y.iter().map(|v: &f64| v.min(1.0)).collect();
        let alphas = ycur.iter().map(|&v| alpha(v, kappa)).collect::<Result<Vec<f64>>>()?;
        let late = alphas.iter().map(|&a| a == 1.0).collect();
        let mut realizations = Vec::with_capacity(round.len());
        for (j, (spec, x)) in round.into_iter().enumerate() {
            let active = spec.p > 0.0 && spec.c > 0;
            let mut marginals: Vec<f64> =
                x.iter().map(|&v| if active { (v / spec.p).clamp(0.0, 1.0) } else { 0.0 }).collect();
            // solver slack can push the sum just past the capacity
            let total: f64 = marginals.iter().sum();
            if total > spec.c as f64 {
                let scale = spec.c as f64 / total;
                marginals.iter_mut().for_each(|m| *m *= scale);
            }
            for i in 0..n {
                y[i] += spec.q[i] * x[i];
            }
            realizations.push(RealizationPlan {
                index: j,
                prob: spec.p,
                cap: spec.c,
                active,
                x,
                marginals,
                q: spec.q.clone(),
                values: spec.values.clone(),
            });
        }
        out.push(RoundPlan { y: ycur, alpha: alphas, late, realizations });
    }
    Ok(Plan { n, kappa, rounds: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::gen_lp_gap;

    #[test]
    fn lp_gap_plan() {
        let inst = gen_lp_gap();
        let model = lp::build_bernoulli(&inst);
        let sol = LpSolution::from_values(&model, model.columns.iter().map(|c| (c.key, 0.5)));
        let plan = Plan::for_bernoulli(&inst, &sol, 0.0115).unwrap();
        assert_eq!(plan.rounds[0].realizations[0].marginals, vec![1.0, 1.0]);
        assert_eq!(plan.rounds[1].y, vec![0.5, 0.5]);
        assert!((plan.rounds[0].alpha[0] - 0.5115).abs() < 1e-15);
        assert_eq!(plan.rounds[0].pick(0.49), Some(0));
        assert_eq!(plan.rounds[0].pick(0.5), None);
        assert_eq!(plan.keys().len(), 4);
    }

    #[test]
    fn infeasible_solution_rejected() {
        let inst = gen_lp_gap();
        let model = lp::build_bernoulli(&inst);
        let sol = LpSolution::from_values(&model, model.columns.iter().map(|c| (c.key, 0.9)));
        assert!(matches!(Plan::for_bernoulli(&inst, &sol, 0.0115), Err(Error::InfeasibleSolution(_))));
    }

    #[test]
    fn embedded_plan_matches() {
        let inst = gen_lp_gap();
        let sol = lp::solve_bernoulli(&inst).unwrap();
        let a = Plan::for_bernoulli(&inst, &sol, 0.0115).unwrap();
        let b = Plan::for_general(&inst.to_general(), &sol, 0.0115).unwrap();
        for (ra, rb) in a.rounds.iter().zip(&b.rounds) {
            assert_eq!(ra.y, rb.y);
            assert_eq!(ra.realizations[0], rb.realizations[0]);
            assert!(rb.realizations[1..].iter().all(|z| !z.active));
        }
    }
}
