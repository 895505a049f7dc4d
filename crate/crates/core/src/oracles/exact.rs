//! Exact forward propagation of the two-proposal scheme.
//!
//! The state before each round is a distribution over availability masks.
//! A round composes: realization draw, first-proposal subset law, alpha
//! coins, second-proposal subset law given the first-stage count, beta
//! coins and success coins. `rho` for a round is read off the
//! intermediate distribution after the alpha coins, which is exactly the
//! quantity the second stage needs.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::allocator::{beta_or_default, beta_raw, Plan};
use crate::instance::BernoulliInstance;
use crate::lp::{LpSolution, VarKey};
use crate::pivotal::{subset_distribution, MarginalVector};
use crate::util::{bits, submasks, subset_outcome_prob};
use crate::{Error, Result};

pub const EXACT_MAX_USERS: usize = 6;
pub const EXACT_MAX_ROUNDS: usize = 6;

/// Exact per-pair probabilities. Tables are indexed `[t][j][i]` (round,
/// realization, user); availability tables by `[t][i]` with `t` running
/// over `0..=T`, where index `t` means "before round `t`".
#[derive(Clone, Debug, Serialize)]
pub struct ExactReport {
    pub n: usize,
    pub kappa: f64,
    pub x: Vec<Vec<Vec<f64>>>,
    /// Prefix mass before each round, plus a final row after the last one.
    pub y: Vec<Vec<f64>>,
    pub late: Vec<Vec<bool>>,
    /// Pr[allocated by the first proposal].
    pub first: Vec<Vec<Vec<f64>>>,
    /// Pr[allocated by the second proposal].
    pub second: Vec<Vec<Vec<f64>>>,
    pub rho: Vec<Vec<Vec<f64>>>,
    /// Unclamped beta for late users, 0 for early ones.
    pub beta_raw: Vec<Vec<Vec<f64>>>,
    pub beta: Vec<Vec<Vec<f64>>>,
    pub availability: Vec<Vec<f64>>,
    /// `[t][i][k]`: Pr[i and k both available before round t].
    pub joint_availability: Vec<Vec<Vec<f64>>>,
    pub expected_welfare: f64,
    pub capacity_respected: bool,
    /// True when some late pair with positive mass needed `beta > 1`.
    pub beta_capped: bool,
}

impl ExactReport {
    pub fn num_rounds(&self) -> usize {
        self.first.len()
    }

    pub fn allocation_prob(&self, key: &VarKey) -> f64 {
        self.first[key.round][key.realization][key.user] + self.second[key.round][key.realization][key.user]
    }

    pub fn target(&self, key: &VarKey) -> f64 {
        (0.5 + self.kappa) * self.x[key.round][key.realization][key.user]
    }

    pub fn keys(&self) -> Vec<VarKey> {
        let mut out = Vec::new();
        for (t, r) in self.x.iter().enumerate() {
            for (j, z) in r.iter().enumerate() {
                for i in 0..self.n {
                    if z[i] > 0.0 {
                        out.push(VarKey { user: i, round: t, realization: j });
                    }
                }
            }
        }
        out
    }

    /// Largest `|Pr[allocated] - (0.5 + kappa) x|` over all pairs.
    pub fn max_law_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for (t, r) in self.x.iter().enumerate() {
            for (j, z) in r.iter().enumerate() {
                for i in 0..self.n {
                    let key = VarKey { user: i, round: t, realization: j };
                    worst = worst.max((self.allocation_prob(&key) - (0.5 + self.kappa) * z[i]).abs());
                }
            }
        }
        worst
    }

    pub(crate) fn beta_table(&self) -> Vec<Vec<Vec<f64>>> {
        self.beta.clone()
    }

    /// Pair-level CSV.
    pub fn pairs_csv(&self) -> String {
        let mut out = String::from("user,round,realization,x,y,late,first,second,total,target,rho,beta_raw,availability\n");
        for key in self.keys() {
            let (i, t, j) = (key.user, key.round, key.realization);
            let _ = writeln!(
                out,
                "{i},{t},{j},{},{},{},{},{},{},{},{},{},{}",
                self.x[t][j][i],
                self.y[t][i],
                self.late[t][i],
                self.first[t][j][i],
                self.second[t][j][i],
                self.allocation_prob(&key),
                self.target(&key),
                self.rho[t][j][i],
                self.beta_raw[t][j][i],
                self.availability[t][i]
            );
        }
        out
    }
}

/// Exact report for a Bernoulli instance and LP solution.
pub fn exact_report(inst: &BernoulliInstance, sol: &LpSolution, kappa: f64) -> Result<ExactReport> {
    exact_report_for_plan(&Plan::for_bernoulli(inst, sol, kappa)?)
}

fn dist_vec(m: &[f64], cap: usize) -> Result<Vec<(u64, f64)>> {
    let mv = MarginalVector::new(m.to_vec(), cap)?;
    Ok(subset_distribution(&mv)?.into_iter().filter(|&(_, p)| p > 0.0).collect())
}

/// Probability of exactly `hit` among `trials` with per-user probabilities `p`.
fn coin_prob(trials: u64, hit: u64, p: &[f64]) -> f64 {
    subset_outcome_prob(trials, hit, p)
}

pub fn exact_report_for_plan(plan: &Plan) -> Result<ExactReport> {
    let n = plan.n;
    let rounds = plan.num_rounds();
    if n > EXACT_MAX_USERS || rounds > EXACT_MAX_ROUNDS {
        // work units: rounds x availability states
        return Err(Error::BudgetExceeded {
            required: (rounds.max(1) as u128) << n.min(127),
            budget: (EXACT_MAX_ROUNDS as u128) << EXACT_MAX_USERS,
        });
    }
    let kappa = plan.kappa;
    let full: u64 = (1u64 << n) - 1;
    let shape = |t: usize| vec![vec![0.0; n]; plan.rounds[t].realizations.len()];
    let mut report = ExactReport {
        n,
        kappa,
        x: plan.rounds.iter().map(|r| r.realizations.iter().map(|z| z.x.clone()).collect()).collect(),
        y: prefix_rows(plan),
        late: plan.rounds.iter().map(|r| r.late.clone()).collect(),
        first: (0..rounds).map(shape).collect(),
        second: (0..rounds).map(shape).collect(),
        rho: (0..rounds).map(shape).collect(),
        beta_raw: (0..rounds).map(shape).collect(),
        beta: (0..rounds).map(shape).collect(),
        availability: Vec::with_capacity(rounds + 1),
        joint_availability: Vec::with_capacity(rounds + 1),
        expected_welfare: 0.0,
        capacity_respected: true,
        beta_capped: false,
    };

    let mut dist = vec![0.0; 1 << n];
    dist[full as usize] = 1.0;

    for (t, round) in plan.rounds.iter().enumerate() {
        record_availability(&mut report, &dist, n);
        let mut next = vec![0.0; 1 << n];
        let idle = (1.0 - round.active_mass()).max(0.0);
        for (f, &w) in dist.iter().enumerate() {
            next[f] += idle * w;
        }
        let late_mask = round.late.iter().enumerate().filter(|(_, &l)| l).fold(0u64, |m, (i, _)| m | 1 << i);

        for z in round.realizations.iter().filter(|z| z.active) {
            let j = z.index;
            let cap = z.cap as usize;

            // state after the first proposal and alpha coins: (available, accepted) -> weight
            let mut after_first: BTreeMap<(u64, u64), f64> = BTreeMap::new();
            let fp = dist_vec(&z.marginals, cap)?;
            for (f, &w) in dist.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let f = f as u64;
                for &(s, ps) in &fp {
                    let cand = s & f;
                    for g in submasks(cand) {
                        let pa = coin_prob(cand, g, &round.alpha);
                        if pa > 0.0 {
                            *after_first.entry((f, g)).or_insert(0.0) += w * ps * pa;
                        }
                    }
                }
            }

            let mut rho = vec![0.0; n];
            for (&(f, g), &w) in &after_first {
                let share = 1.0 - g.count_ones() as f64 / cap as f64;
                for i in bits(f & !g) {
                    rho[i] += w * share;
                }
                for i in bits(g) {
                    report.first[t][j][i] += z.prob * w;
                }
            }
            let mut betas = vec![0.0; n];
            for i in 0..n {
                if !round.late[i] {
                    continue;
                }
                let y = round.y[i];
                if rho[i] > 0.0 {
                    let raw = beta_raw(y, rho[i], kappa)?;
                    report.beta_raw[t][j][i] = raw;
                    if raw > 1.0 && z.x[i] > 0.0 {
                        report.beta_capped = true;
                    }
                }
                betas[i] = beta_or_default(y, rho[i], kappa);
            }
            report.rho[t][j] = rho;
            report.beta[t][j] = betas.clone();

            // second proposal and beta coins: (available, allocated) -> weight
            let mut sp_cache: HashMap<usize, Vec<(u64, f64)>> = HashMap::new();
            let mut after_second: BTreeMap<(u64, u64), f64> = BTreeMap::new();
            for (&(f, g), &w) in &after_first {
                let a = g.count_ones() as usize;
                if a >= cap {
                    *after_second.entry((f, g)).or_insert(0.0) += w;
                    continue;
                }
                if let std::collections::hash_map::Entry::Vacant(e) = sp_cache.entry(a) {
                    let factor = 1.0 - a as f64 / cap as f64;
                    let m: Vec<f64> = z.marginals.iter().map(|v| v * factor).collect();
                    e.insert(dist_vec(&m, cap - a)?);
                }
                for &(s, ps) in &sp_cache[&a] {
                    let cand = s & f & !g & late_mask;
                    for h in submasks(cand) {
                        let pb = coin_prob(cand, h, &betas);
                        if pb == 0.0 {
                            continue;
                        }
                        let mass = w * ps * pb;
                        for i in bits(h) {
                            report.second[t][j][i] += z.prob * mass;
                        }
                        *after_second.entry((f, g | h)).or_insert(0.0) += mass;
                    }
                }
            }

            for (&(f, alloc), &w) in &after_second {
                if alloc.count_ones() as usize > cap {
                    report.capacity_respected = false;
                }
                for k in submasks(alloc) {
                    let pk = coin_prob(alloc, k, &z.q);
                    if pk == 0.0 {
                        continue;
                    }
                    let mass = z.prob * w * pk;
                    next[(f & !k) as usize] += mass;
                    report.expected_welfare += mass * bits(k).map(|i| z.values[i]).sum::<f64>();
                }
            }
        }
        dist = next;
    }
    record_availability(&mut report, &dist, n);
    Ok(report)
}

fn prefix_rows(plan: &Plan) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = plan.rounds.iter().map(|r| r.y.clone()).collect();
    let mut last = rows.last().cloned().unwrap_or_else(|| vec![0.0; plan.n]);
    if let Some(r) = plan.rounds.last() {
        for z in &r.realizations {
            for (i, v) in last.iter_mut().enumerate() {
                *v += z.q[i] * z.x[i];
            }
        }
    }
    rows.push(last);
    rows
}

fn record_availability(report: &mut ExactReport, dist: &[f64], n: usize) {
    let mut single = vec![0.0; n];
    let mut joint = vec![vec![0.0; n]; n];
    for (f, &w) in dist.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let f = f as u64;
        for i in bits(f) {
            single[i] += w;
            for k in bits(f) {
                joint[i][k] += w;
            }
        }
    }
    report.availability.push(single);
    report.joint_availability.push(joint);
}
