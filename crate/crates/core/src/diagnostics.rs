//! Runnable checks of the analysis: constants, the capacity-dependent
//! choice of kappa, correlation bounds and approximation ratios.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::Serialize;

use crate::allocator::{AlgoConfig, Allocator, DerivedConstants, Plan, RhoMode};
use crate::baselines::{Bdm, Greedy};
use crate::instance::Instance;
use crate::lp;
use crate::oracles::{opt_online, ExactReport};
use crate::sim::{run_trials, Aggregate};
use crate::{Error, Result};

/// Absolute tolerance of the correlation audit.
pub const AUDIT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KappaCheck {
    pub holds: bool,
    /// `LHS - RHS` of the defining inequality.
    pub slack: f64,
}

/// `tau - ((1 - tau) / min_c + delta (0.5 + kappa)) >= 2 kappa / (0.5 - kappa)`.
pub fn check_kappa_inequality(kappa: f64, min_c: u32) -> KappaCheck {
    let c = DerivedConstants::new(kappa);
    let lhs = c.tau - ((1.0 - c.tau) / min_c.max(1) as f64 + c.delta * (0.5 + kappa));
    let rhs = 2.0 * kappa / (0.5 - kappa);
    let slack = lhs - rhs;
    KappaCheck { holds: slack >= 0.0, slack }
}

/// Largest kappa (to within `1e-7`) satisfying the inequality at `min_c`.
pub fn solve_kappa(min_c: u32) -> f64 {
    let (mut lo, mut hi) = (0.0, 0.25);
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if check_kappa_inequality(mid, min_c).holds {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KappaTable {
    pub rows: Vec<(u32, f64)>,
}

impl KappaTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("min_c,kappa,slack\n");
        for &(c, k) in &self.rows {
            let _ = writeln!(out, "{c},{k:.7},{:.3e}", check_kappa_inequality(k, c).slack);
        }
        out
    }
}

pub fn kappa_table(max_c: u32) -> KappaTable {
    KappaTable { rows: (1..=max_c).map(|c| (c, solve_kappa(c))).collect() }
}

pub fn correlation_f(z: f64, kappa: f64) -> f64 {
    let hi = 0.5 + kappa;
    1.0 + z * hi * hi / (1.0 - z * hi)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationRow {
    /// Availability index: "before round `t`" (`t = T` is after the last).
    pub t: usize,
    pub i: usize,
    pub k: usize,
    pub joint: f64,
    pub product: f64,
    /// `f(y_i) * product`, when both prefixes were at most tau a round earlier.
    pub f_bound: Option<f64>,
    pub delta_bound: f64,
    pub f_violation: bool,
    pub delta_violation: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationAudit {
    pub rows: Vec<CorrelationRow>,
}

impl CorrelationAudit {
    pub fn f_violations(&self) -> usize {
        self.rows.iter().filter(|r| r.f_violation).count()
    }

    pub fn delta_violations(&self) -> usize {
        self.rows.iter().filter(|r| r.delta_violation).count()
    }

    /// Rows where the pair is positively correlated.
    pub fn positively_correlated(&self) -> impl Iterator<Item = &CorrelationRow> {
        self.rows.iter().filter(|r| r.joint > r.product + AUDIT_TOL)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,i,k,joint,product,f_bound,delta_bound,f_violation,delta_violation\n");
        for r in &self.rows {
            let f = r.f_bound.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{f},{},{},{}",
                r.t, r.i, r.k, r.joint, r.product, r.delta_bound, r.f_violation, r.delta_violation
            );
        }
        out
    }
}

/// Compares joint availability with the product of marginals for every
/// ordered pair of users at every round boundary.
pub fn correlation_audit(report: &ExactReport) -> CorrelationAudit {
    let kappa = report.kappa;
    let consts = DerivedConstants::new(kappa);
    let n = report.n;
    let mut rows = Vec::new();
    for (t, joint) in report.joint_availability.iter().enumerate() {
        let single = &report.availability[t];
        for i in 0..n {
            for k in 0..n {
                if i == k {
                    continue;
                }
                let product = single[i] * single[k];
                let early = t == 0 || (report.y[t - 1][i] <= consts.tau && report.y[t - 1][k] <= consts.tau);
                let f_bound = early.then(|| correlation_f(report.y[t][i], kappa) * product);
                let delta_bound = consts.delta * product;
                let j = joint[i][k];
                rows.push(CorrelationRow {
                    t,
                    i,
                    k,
                    joint: j,
                    product,
                    f_bound,
                    delta_bound,
                    f_violation: f_bound.is_some_and(|b| j > b + AUDIT_TOL),
                    delta_violation: j > delta_bound + AUDIT_TOL,
                });
            }
        }
    }
    CorrelationAudit { rows }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    TwoproposalExact,
    TwoproposalSampled,
    TwoproposalGeneral,
    Bdm,
    Greedy,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::TwoproposalExact,
        Algorithm::TwoproposalSampled,
        Algorithm::TwoproposalGeneral,
        Algorithm::Bdm,
        Algorithm::Greedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::TwoproposalExact => "twoproposal-exact",
            Algorithm::TwoproposalSampled => "twoproposal-sampled",
            Algorithm::TwoproposalGeneral => "twoproposal-general",
            Algorithm::Bdm => "bdm",
            Algorithm::Greedy => "greedy",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid_arg(format!("unknown algorithm `{s}`")))
    }
}

/// Simulation outcome. `plan` is set for the two-proposal variants.
pub struct Simulation {
    pub aggregate: Aggregate,
    pub plan: Option<Plan>,
}

/// Runs `alg` for `trials` trials. Two-proposal variants use the LP optimum
/// of the instance; the general variant always works on the general form.
pub fn simulate(inst: &Instance, alg: Algorithm, cfg: &AlgoConfig, trials: u64, seed: u64, jobs: usize) -> Result<Aggregate> {
    Ok(simulate_detailed(inst, alg, cfg, trials, seed, jobs)?.aggregate)
}

/// Like [`simulate`], also returning the plan the two-proposal variants ran.
pub fn simulate_detailed(
    inst: &Instance,
    alg: Algorithm,
    cfg: &AlgoConfig,
    trials: u64,
    seed: u64,
    jobs: usize,
) -> Result<Simulation> {
    let with_mode = |mode| AlgoConfig { rho_mode: mode, ..cfg.clone() };
    let two_proposal = |alloc: Allocator| -> Result<Simulation> {
        let aggregate = run_trials(&alloc, trials, seed, jobs)?;
        Ok(Simulation { aggregate, plan: Some(alloc.plan().clone()) })
    };
    let baseline = |aggregate| Simulation { aggregate, plan: None };
    match (alg, inst) {
        (Algorithm::TwoproposalExact | Algorithm::TwoproposalSampled, Instance::Bernoulli(b)) => {
            let mode = if alg == Algorithm::TwoproposalExact { RhoMode::Exact } else { RhoMode::Sampled };
            let sol = lp::solve_bernoulli(b)?;
            two_proposal(Allocator::for_bernoulli(b, &sol, &with_mode(mode))?)
        }
        (Algorithm::TwoproposalExact | Algorithm::TwoproposalSampled | Algorithm::TwoproposalGeneral, _) => {
            let mode = if alg == Algorithm::TwoproposalSampled { RhoMode::Sampled } else { cfg.rho_mode };
            let g = inst.to_general();
            let sol = lp::solve_general(&g)?;
            two_proposal(Allocator::for_general(&g, &sol, &with_mode(mode))?)
        }
        (Algorithm::Bdm, Instance::Bernoulli(b)) => {
            let sol = lp::solve_bernoulli(b)?;
            Ok(baseline(run_trials(&Bdm::new(b, &sol)?, trials, seed, jobs)?))
        }
        (Algorithm::Bdm, Instance::General(_)) => Err(Error::invalid_arg("the proposal baseline needs a Bernoulli instance")),
        (Algorithm::Greedy, _) => Ok(baseline(run_trials(&Greedy::new(inst)?, trials, seed, jobs)?)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioRow {
    pub algorithm: Algorithm,
    pub mean: f64,
    /// 95% normal half-width of the mean.
    pub ci: f64,
    pub ratio_lp: f64,
    pub ratio_opt: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioReport {
    pub lp: f64,
    pub opt_online: Option<f64>,
    pub note: Option<String>,
    pub rows: Vec<RatioRow>,
}

impl RatioReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(note) = &self.note {
            let _ = writeln!(out, "# {note}");
        }
        out.push_str("algorithm,lp,opt_online,mean_welfare,ci95,ratio_lp,ratio_lp_ci,ratio_opt,ratio_opt_ci\n");
        let opt = self.opt_online.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let lp_ci = if self.lp > 0.0 { r.ci / self.lp } else { 0.0 };
            let (ro, ro_ci) = match (r.ratio_opt, self.opt_online) {
                (Some(v), Some(o)) if o > 0.0 => (v.to_string(), (r.ci / o).to_string()),
                (Some(v), _) => (v.to_string(), "0".to_string()),
                _ => (String::new(), String::new()),
            };
            let _ = writeln!(out, "{},{},{opt},{},{},{},{lp_ci},{ro},{ro_ci}", r.algorithm, self.lp, r.mean, r.ci, r.ratio_lp);
        }
        out
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Mean welfare of each algorithm against the LP optimum and, when the
/// oracle is within budget, the optimum online value.
pub fn ratio_report(
    inst: &Instance,
    algorithms: &[Algorithm],
    cfg: &AlgoConfig,
    trials: u64,
    seed: u64,
    jobs: usize,
) -> Result<RatioReport> {
    let lp_value = match inst {
        Instance::Bernoulli(b) => lp::solve_bernoulli(b)?.objective,
        Instance::General(g) => lp::solve_general(g)?.objective,
    };
    let (opt, note) = match opt_online(inst) {
        Ok(v) => (Some(v.value), None),
        Err(Error::BudgetExceeded { required, budget }) => {
            (None, Some(format!("optimum online omitted: needs {required} work units, budget {budget}")))
        }
        Err(e) => return Err(e),
    };
    let mut rows = Vec::new();
    for &alg in algorithms {
        let agg = simulate(inst, alg, cfg, trials, seed, jobs)?;
        let mean = agg.mean_welfare();
        rows.push(RatioRow {
            algorithm: alg,
            mean,
            ci: 1.96 * agg.welfare_se(),
            ratio_lp: ratio(mean, lp_value),
            ratio_opt: opt.map(|o| ratio(mean, o)),
        });
    }
    Ok(RatioReport { lp: lp_value, opt_online: opt, note, rows })
}
