//! Comparison policies.
//!
//! [`Bdm`] is the proposal algorithm for matching generalised to capacities:
//! every available user proposes independently with probability
//! `x / (p (1 - sum of earlier x))` and the resource takes the `c` most
//! valuable proposers. [`Greedy`] ignores the LP and takes the `c`
//! available users with the largest `v * q`.
//!
//! Ties in value go to the lowest user index.

use rand::Rng;

use crate::allocator::{RoundTrace, RunTrace};
use crate::instance::{BernoulliInstance, GeneralInstance, Instance};
use crate::lp::{self, LpSolution, VarKey};
use crate::sim::{Policy, TrialStreams};
use crate::{Error, Result};

pub struct Bdm {
    inst: BernoulliInstance,
    /// Proposal probability per `[t][i]`.
    propose: Vec<Vec<f64>>,
}

impl Bdm {
    pub fn new(inst: &BernoulliInstance, sol: &LpSolution) -> Result<Self> {
        inst.validate().into_result()?;
        if !inst.deterministic_rewards() {
            return Err(Error::invalid_arg("the proposal baseline needs every success probability equal to 1"));
        }
        let report = lp::build_bernoulli(inst).check_feasibility(sol, crate::allocator::PLAN_FEAS_TOL);
        if !report.is_feasible() {
            return Err(Error::InfeasibleSolution(report.summary()));
        }
        let mut prefix = vec![0.0; inst.n];
        let mut propose = Vec::with_capacity(inst.rounds.len());
        for (t, r) in inst.rounds.iter().enumerate() {
            let row = (0..inst.n)
                .map(|i| {
                    let x = sol.get(&VarKey::pair(i, t)).max(0.0);
                    let denom = r.p * (1.0 - prefix[i]);
                    if x > 0.0 && denom > 0.0 {
                        (x / denom).clamp(0.0, 1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            for (i, p) in prefix.iter_mut().enumerate() {
                *p += sol.get(&VarKey::pair(i, t)).max(0.0);
            }
            propose.push(row);
        }
        Ok(Bdm { inst: inst.clone(), propose })
    }

    pub fn proposal_probabilities(&self) -> &[Vec<f64>] {
        &self.propose
    }
}

/// Indices of `cands` sorted by value descending, then index ascending.
fn top_by_value(mut cands: Vec<usize>, key: impl Fn(usize) -> f64, cap: usize) -> Vec<usize> {
    cands.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    cands.truncate(cap);
    cands.sort_unstable();
    cands
}

impl Policy for Bdm {
    fn play(&self, streams: &mut TrialStreams) -> RunTrace {
        let mut available = vec![true; self.inst.n];
        let mut trace = RunTrace::default();
        for (t, r) in self.inst.rounds.iter().enumerate() {
            let arrived = streams.arrivals.gen::<f64>() < r.p;
            let mut rt = RoundTrace { round: t, capacity: r.c, ..Default::default() };
            if arrived {
                rt.realization = Some(0);
                let mut proposers = Vec::new();
                for i in 0..self.inst.n {
                    if available[i] && streams.alpha.gen::<f64>() < self.propose[t][i] {
                        proposers.push(i);
                    }
                }
                rt.first_proposal = proposers.clone();
                rt.allocations = top_by_value(proposers, |i| r.values[i], r.c as usize);
                for &i in &rt.allocations {
                    available[i] = false;
                    rt.welfare += r.values[i];
                }
                rt.successes = rt.allocations.clone();
            }
            trace.welfare += rt.welfare;
            trace.rounds.push(rt);
        }
        trace
    }
}

pub struct Greedy {
    inst: GeneralInstance,
}

impl Greedy {
    pub fn new(inst: &Instance) -> Result<Self> {
        inst.validate().into_result()?;
        Ok(Greedy { inst: inst.to_general() })
    }
}

impl Policy for Greedy {
    fn play(&self, streams: &mut TrialStreams) -> RunTrace {
        let n = self.inst.n;
        let mut available = vec![true; n];
        let mut trace = RunTrace::default();
        for (t, round) in self.inst.rounds.iter().enumerate() {
            let u: f64 = streams.arrivals.gen();
            let mut cum = 0.0;
            let mut rt = RoundTrace { round: t, ..Default::default() };
            for (j, z) in round.realizations.iter().enumerate() {
                cum += z.p;
                if u < cum {
                    rt.realization = Some(j);
                    rt.capacity = z.c;
                    let cands = (0..n).filter(|&i| available[i] && z.values[i] * z.q[i] > 0.0).collect();
                    rt.allocations = top_by_value(cands, |i| z.values[i] * z.q[i], z.c as usize);
                    for &i in &rt.allocations {
                        if streams.success.gen::<f64>() < z.q[i] {
                            available[i] = false;
                            rt.successes.push(i);
                            rt.welfare += z.values[i];
                        }
                    }
                    break;
                }
            }
            trace.welfare += rt.welfare;
            trace.rounds.push(rt);
        }
        trace
    }
}

/// One trial of the proposal baseline.
pub fn run_bdm<R: Rng + ?Sized>(inst: &BernoulliInstance, sol: &LpSolution, rng: &mut R) -> Result<RunTrace> {
    Ok(Bdm::new(inst, sol)?.play(&mut TrialStreams::from_rng(rng)))
}

/// One trial of the greedy baseline.
pub fn run_greedy<R: Rng + ?Sized>(inst: &Instance, rng: &mut R) -> Result<RunTrace> {
    Ok(Greedy::new(inst)?.play(&mut TrialStreams::from_rng(rng)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_bdm_counterexample, gen_lp_gap, RoundSpec};
    use crate::sim::run_trials;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bdm_rejects_stochastic_rewards() {
        let mut inst = gen_lp_gap();
        inst.rounds[0].q[0] = 0.5;
        let sol = lp::solve_bernoulli(&gen_lp_gap()).unwrap();
        assert!(matches!(Bdm::new(&inst, &sol), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn bdm_counterexample_mean() {
        let inst = gen_bdm_counterexample(4).unwrap();
        let sol = lp::solve_bernoulli(&inst).unwrap();
        let bdm = Bdm::new(&inst, &sol).unwrap();
        // everyone proposes with certainty in both rounds
        assert!(bdm.proposal_probabilities().iter().flatten().all(|&p| (p - 1.0).abs() < 1e-9));
        let agg = run_trials(&bdm, 20_000, 5, 0).unwrap();
        assert!((agg.mean_welfare() - 7.0).abs() < 3.0 * agg.welfare_se());
    }

    #[test]
    fn bdm_unit_capacity_has_one_winner() {
        let inst = gen_lp_gap();
        let sol = lp::solve_bernoulli(&inst).unwrap();
        let bdm = Bdm::new(&inst, &sol).unwrap();
        for trial in 0..300 {
            let tr = bdm.play(&mut TrialStreams::new(9, trial));
            tr.check(2).unwrap();
            assert!(tr.rounds[1].allocations.len() <= 1);
        }
    }

    #[test]
    fn greedy_picks_the_best() {
        let inst = BernoulliInstance { n: 2, rounds: vec![RoundSpec { p: 1.0, c: 1, values: vec![3.0, 1.0], q: vec![1.0, 1.0] }] };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let tr = run_greedy(&inst.clone().into(), &mut rng).unwrap();
            assert_eq!(tr.rounds[0].allocations, vec![0]);
            assert_eq!(tr.welfare, 3.0);
        }
    }

    #[test]
    fn greedy_on_lp_gap() {
        let g = Greedy::new(&gen_lp_gap().into()).unwrap();
        let agg = run_trials(&g, 20_000, 1, 0).unwrap();
        // 2 when the first resource arrives, else 1
        assert!((agg.mean_welfare() - 1.5).abs() < 3.0 * agg.welfare_se());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(top_by_value(vec![3, 1, 2, 0], |_| 1.0, 2), vec![0, 1]);
        assert_eq!(top_by_value(vec![0, 1, 2], |i| i as f64, 1), vec![2]);
    }
}
