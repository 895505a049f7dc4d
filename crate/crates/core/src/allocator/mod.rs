//! Two-proposal online rounding.
//!
//! Given a feasible LP solution `x`, each arriving resource runs two rounds
//! of pivotal sampling. The first proposal samples users with marginals
//! `x / p` and accepts each available proposer with probability `alpha`,
//! which depends only on the user's prefix mass `y`. Users with
//! `alpha = 1` ("late" users) may also be picked by a second proposal on
//! the leftover capacity and accepted with probability `beta`. `beta`
//! is normalised by `rho`, the expected leftover capacity share seen by an
//! available, unallocated user. With `rho` known exactly, every pair is
//! allocated with probability exactly `(0.5 + kappa) * x`.
//!
//! `rho` comes either from the exact engine in [`crate::oracles`] (tiny
//! instances) or from Monte-Carlo estimates that replay the algorithm on
//! fresh randomness, memoised per round and realization.

mod plan;
mod trace;

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::instance::{BernoulliInstance, GeneralInstance};
use crate::lp::LpSolution;
use crate::pivotal;
use crate::sim::{splitmix64, Policy, TrialStreams};
use crate::{Error, Result};

pub use plan::{Plan, RealizationPlan, RoundPlan, PLAN_FEAS_TOL};
pub use trace::{RoundTrace, RunTrace};

pub const DEFAULT_KAPPA: f64 = 0.0115;
pub const DEFAULT_EPSILON: f64 = 0.001;
pub const DEFAULT_SAMPLE_COUNT: usize = 10_000;
/// Largest sample count accepted from the closed-form formula.
pub const MAX_SAMPLE_COUNT: u128 = 1_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoMode {
    Exact,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub kappa: f64,
    /// Slack subtracted from `kappa` in sampled mode.
    pub epsilon: f64,
    pub rho_mode: RhoMode,
    pub sample_count_override: Option<usize>,
    /// Use `N = 50 n T (eps / 400T)^-2 kappa^-2` instead of the default.
    pub use_formula_sample_count: bool,
    pub seed: u64,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        AlgoConfig {
            kappa: DEFAULT_KAPPA,
            epsilon: DEFAULT_EPSILON,
            rho_mode: RhoMode::Exact,
            sample_count_override: None,
            use_formula_sample_count: false,
            seed: 0,
        }
    }
}

impl AlgoConfig {
    pub fn sampled(seed: u64) -> Self {
        AlgoConfig { rho_mode: RhoMode::Sampled, seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa < 0.5) {
            return Err(Error::invalid_arg(format!("kappa must lie in (0, 0.5), got {}", self.kappa)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::invalid_arg(format!("epsilon must be non-negative, got {}", self.epsilon)));
        }
        if self.rho_mode == RhoMode::Sampled && self.effective_kappa() <= 0.0 {
            return Err(Error::invalid_arg("kappa - epsilon must be positive in sampled mode"));
        }
        if self.sample_count_override == Some(0) {
            return Err(Error::invalid_arg("sample count must be positive"));
        }
        Ok(())
    }

    /// `kappa` in exact mode, `kappa - epsilon` in sampled mode.
    pub fn effective_kappa(&self) -> f64 {
        match self.rho_mode {
            RhoMode::Exact => self.kappa,
            RhoMode::Sampled => self.kappa - self.epsilon,
        }
    }

    /// Number of replays per estimate in sampled mode.
    pub fn sample_count(&self, n: usize, rounds: usize) -> Result<usize> {
        if let Some(s) = self.sample_count_override {
            return Ok(s);
        }
        if !self.use_formula_sample_count {
            return Ok(DEFAULT_SAMPLE_COUNT);
        }
        let t = rounds.max(1) as f64;
        let k = self.effective_kappa();
        let n_f = 50.0 * n as f64 * t * (self.epsilon / (400.0 * t)).powi(-2) * k.powi(-2);
        if !n_f.is_finite() || n_f > MAX_SAMPLE_COUNT as f64 {
            let required = if n_f.is_finite() { n_f.ceil() as u128 } else { u128::MAX };
            return Err(Error::BudgetExceeded { required, budget: MAX_SAMPLE_COUNT });
        }
        Ok(n_f.ceil() as usize)
    }
}

/// Analysis constants at a given `kappa`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub kappa: f64,
    /// Prefix mass at which `alpha` reaches 1.
    pub tau: f64,
    pub gamma: f64,
    pub delta: f64,
    /// `2 tau - 1 - delta (0.5 + kappa)`.
    pub g: f64,
    /// Lower bound on `rho` for late pairs: `(0.5 - kappa) g`.
    pub rho_floor: f64,
}

impl DerivedConstants {
    pub fn new(kappa: f64) -> Self {
        let hi = 0.5 + kappa;
        let lo = 0.5 - kappa;
        let tau = lo / hi;
        let gamma = 1.0 + hi * hi / lo;
        let delta = gamma * (hi / lo).powi(2);
        let g = 2.0 * tau - 1.0 - delta * hi;
        DerivedConstants { kappa, tau, gamma, delta, g, rho_floor: lo * g }
    }
}

pub fn tau(kappa: f64) -> f64 {
    (0.5 - kappa) / (0.5 + kappa)
}

/// First-proposal acceptance probability `min(1, (0.5+k) / (1 - (0.5+k) y))`.
pub fn alpha(y: f64, kappa: f64) -> Result<f64> {
    if !(-1e-9..=1.0 + 1e-9).contains(&y) {
        return Err(Error::invalid_arg(format!("prefix mass {y} outside [0,1]")));
    }
    let y = y.clamp(0.0, 1.0);
    if y >= tau(kappa) {
        return Ok(1.0);
    }
    let hi = 0.5 + kappa;
    Ok((hi / (1.0 - hi * y)).min(1.0))
}

/// `((0.5+k) y - (0.5-k)) / rho` without the clamp to `[0, 1]`.
pub fn beta_raw(y: f64, rho: f64, kappa: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::invalid_arg(format!("rho must be positive, got {rho}")));
    }
    Ok(((0.5 + kappa) * y - (0.5 - kappa)) / rho)
}

/// Second-proposal acceptance probability, clamped to `[0, 1]`.
pub fn beta(y: f64, rho: f64, kappa: f64) -> Result<f64> {
    Ok(beta_raw(y, rho, kappa)?.clamp(0.0, 1.0))
}

/// `beta` for a late user whose `rho` may be zero. A zero `rho` means the
/// second proposal can never reach the user, so the value is immaterial.
pub(crate) fn beta_or_default(y: f64, rho: f64, kappa: f64) -> f64 {
    match beta(y, rho, kappa) {
        Ok(b) => b,
        Err(_) => {
            if (0.5 + kappa) * y - (0.5 - kappa) > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

struct SigmaCache {
    /// `cells[t][j][i]`, filled on first use.
    cells: Vec<Vec<OnceLock<Vec<f64>>>>,
    samples: usize,
    seed: u64,
    simulations: AtomicUsize,
}

enum RhoSource {
    Exact { beta: Vec<Vec<Vec<f64>>>, beta_capped: bool },
    Sampled(SigmaCache),
}

/// The rounding scheme bound to one plan and configuration.
pub struct Allocator {
    plan: Plan,
    cfg: AlgoConfig,
    rho: RhoSource,
}

#[derive(Default)]
struct Scratch {
    work: Vec<f64>,
    marg: Vec<f64>,
    picked: Vec<usize>,
    allocated: Vec<bool>,
}

impl Allocator {
    pub fn for_bernoulli(inst: &BernoulliInstance, sol: &LpSolution, cfg: &AlgoConfig) -> Result<Self> {
        cfg.validate()?;
        Self::from_plan(Plan::for_bernoulli(inst, sol, cfg.effective_kappa())?, cfg)
    }

    pub fn for_general(inst: &GeneralInstance, sol: &LpSolution, cfg: &AlgoConfig) -> Result<Self> {
        cfg.validate()?;
        Self::from_plan(Plan::for_general(inst, sol, cfg.effective_kappa())?, cfg)
    }

    pub fn from_plan(plan: Plan, cfg: &AlgoConfig) -> Result<Self> {
        cfg.validate()?;
        let rho = match cfg.rho_mode {
            RhoMode::Exact => {
                let report = crate::oracles::exact_report_for_plan(&plan)?;
                if report.beta_capped {
                    log::warn!("exact mode: some raw beta exceeded 1 and was capped");
                }
                RhoSource::Exact { beta: report.beta_table(), beta_capped: report.beta_capped }
            }
            RhoMode::Sampled => RhoSource::Sampled(SigmaCache {
                cells: plan
                    .rounds
                    .iter()
                    .map(|r| r.realizations.iter().map(|_| OnceLock::new()).collect())
                    .collect(),
                samples: cfg.sample_count(plan.n, plan.num_rounds())?,
                seed: cfg.seed,
                simulations: AtomicUsize::new(0),
            }),
        };
        Ok(Allocator { plan, cfg: cfg.clone(), rho })
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn config(&self) -> &AlgoConfig {
        &self.cfg
    }

    /// In exact mode, whether any `beta` needed the cap at 1.
    pub fn beta_capped(&self) -> Option<bool> {
        match &self.rho {
            RhoSource::Exact { beta_capped, .. } => Some(*beta_capped),
            RhoSource::Sampled(_) => None,
        }
    }

    /// Replays performed so far for `rho` estimates.
    pub fn simulations(&self) -> usize {
        match &self.rho {
            RhoSource::Exact { .. } => 0,
            RhoSource::Sampled(c) => c.simulations.load(Ordering::Relaxed),
        }
    }

    /// Estimated `rho` for round `t`, realization `j`, if sampled mode.
    pub fn sigma(&self, t: usize, j: usize) -> Option<&[f64]> {
        match &self.rho {
            RhoSource::Exact { .. } => None,
            RhoSource::Sampled(c) => Some(c.cells[t][j].get_or_init(|| self.estimate_sigma(c, t, j))),
        }
    }

    /// Fills every estimate in sampled mode, in round order.
    pub fn prefill(&self) {
        for (t, r) in self.plan.rounds.iter().enumerate() {
            for z in &r.realizations {
                if z.active {
                    self.sigma(t, z.index);
                }
            }
        }
    }

    fn beta_for(&self, t: usize, j: usize, i: usize) -> f64 {
        match &self.rho {
            RhoSource::Exact { beta, .. } => beta[t][j][i],
            RhoSource::Sampled(_) => {
                let rho = self.sigma(t, j).map_or(0.0, |s| s[i]);
                beta_or_default(self.plan.rounds[t].y[i], rho, self.plan.kappa)
            }
        }
    }

    /// First proposal and its acceptance coins. Marks accepted users in
    /// `s.allocated` and returns `(proposal, coins, accepted count)`.
    fn first_stage(
        &self,
        t: usize,
        z: &RealizationPlan,
        available: &[bool],
        streams: &mut TrialStreams,
        s: &mut Scratch,
    ) -> (Vec<usize>, Vec<(usize, bool)>, usize) {
        let round = &self.plan.rounds[t];
        s.allocated.clear();
        s.allocated.resize(self.plan.n, false);
        pivotal::sample_into(&z.marginals, z.cap as usize, &mut streams.pivotal, &mut s.work, &mut s.picked);
        let fp = s.picked.clone();
        let mut coins = Vec::new();
        let mut accepted = 0;
        for &i in &fp {
            if available[i] {
                let hit = streams.alpha.gen::<f64>() < round.alpha[i];
                coins.push((i, hit));
                if hit {
                    s.allocated[i] = true;
                    accepted += 1;
                }
            }
        }
        (fp, coins, accepted)
    }

    fn play_round(&self, t: usize, j: usize, available: &mut [bool], streams: &mut TrialStreams, s: &mut Scratch) -> RoundTrace {
        let z = &self.plan.rounds[t].realizations[j];
        let mut rt = RoundTrace { round: t, realization: Some(j), capacity: z.cap, ..Default::default() };
        if !z.active {
            return rt;
        }
        let (fp, alpha_coins, a) = self.first_stage(t, z, available, streams, s);
        rt.first_proposal = fp;
        rt.alpha_coins = alpha_coins;
        rt.first_allocated = a;

        let cap = z.cap as usize;
        if a < cap {
            let factor = 1.0 - a as f64 / cap as f64;
            s.marg.clear();
            s.marg.extend(z.marginals.iter().map(|m| m * factor));
            pivotal::sample_into(&s.marg, cap - a, &mut streams.pivotal, &mut s.work, &mut s.picked);
            rt.second_proposal = s.picked.clone();
            let late = &self.plan.rounds[t].late;
            for &i in &rt.second_proposal {
                if late[i] && available[i] && !s.allocated[i] {
                    let b = self.beta_for(t, j, i);
                    let hit = streams.beta.gen::<f64>() < b;
                    rt.beta_coins.push((i, hit));
                    if hit {
                        s.allocated[i] = true;
                    }
                }
            }
        }

        for i in 0..self.plan.n {
            if s.allocated[i] {
                rt.allocations.push(i);
                if streams.success.gen::<f64>() < z.q[i] {
                    rt.successes.push(i);
                    available[i] = false;
                    rt.welfare += z.values[i];
                }
            }
        }
        rt
    }

    /// Plays one full trial.
    pub fn run_trial(&self, streams: &mut TrialStreams) -> RunTrace {
        let mut available = vec![true; self.plan.n];
        let mut s = Scratch::default();
        let mut trace = RunTrace::default();
        for (t, round) in self.plan.rounds.iter().enumerate() {
            let u: f64 = streams.arrivals.gen();
            let rt = match round.pick(u) {
                Some(j) => self.play_round(t, j, &mut available, streams, &mut s),
                None => RoundTrace { round: t, ..Default::default() },
            };
            trace.welfare += rt.welfare;
            trace.rounds.push(rt);
        }
        trace
    }

    /// Average over fresh replays of `1[available and not accepted in the
    /// first proposal] * (1 - A / c)` at round `t` given realization `j`.
    fn estimate_sigma(&self, cache: &SigmaCache, t: usize, j: usize) -> Vec<f64> {
        let n = self.plan.n;
        let z = &self.plan.rounds[t].realizations[j];
        let mut acc = vec![0.0; n];
        if !z.active {
            return acc;
        }
        let seed = splitmix64(cache.seed ^ splitmix64(((t as u64) << 32) | j as u64));
        let mut s = Scratch::default();
        for k in 0..cache.samples {
            let mut streams = TrialStreams::new(seed, k as u64);
            let mut available = vec![true; n];
            for (tp, round) in self.plan.rounds.iter().enumerate().take(t) {
                let u: f64 = streams.arrivals.gen();
                if let Some(jp) = round.pick(u) {
                    self.play_round(tp, jp, &mut available, &mut streams, &mut s);
                }
            }
            let (_, _, a) = self.first_stage(t, z, &available, &mut streams, &mut s);
            let factor = 1.0 - a as f64 / z.cap as f64;
            for i in 0..n {
                if available[i] && !s.allocated[i] {
                    acc[i] += factor;
                }
            }
        }
        cache.simulations.fetch_add(cache.samples, Ordering::Relaxed);
        acc.iter().map(|v| v / cache.samples as f64).collect()
    }
}

impl Policy for Allocator {
    fn play(&self, streams: &mut TrialStreams) -> RunTrace {
        self.run_trial(streams)
    }
}

/// One trial on a Bernoulli instance, using `cfg.rho_mode`.
pub fn run<R: Rng + ?Sized>(inst: &BernoulliInstance, sol: &LpSolution, cfg: &AlgoConfig, rng: &mut R) -> Result<RunTrace> {
    let alloc = Allocator::for_bernoulli(inst, sol, cfg)?;
    Ok(alloc.run_trial(&mut TrialStreams::from_rng(rng)))
}

/// One trial with sampled `rho` estimates.
pub fn run_sampled<R: Rng + ?Sized>(
    inst: &BernoulliInstance,
    sol: &LpSolution,
    cfg: &AlgoConfig,
    rng: &mut R,
) -> Result<RunTrace> {
    if cfg.rho_mode != RhoMode::Sampled {
        return Err(Error::invalid_arg("run_sampled needs rho_mode = sampled"));
    }
    run(inst, sol, cfg, rng)
}

/// One trial on a general instance.
pub fn run_general<R: Rng + ?Sized>(
    inst: &GeneralInstance,
    sol: &LpSolution,
    cfg: &AlgoConfig,
    rng: &mut R,
) -> Result<RunTrace> {
    let alloc = Allocator::for_general(inst, sol, cfg)?;
    Ok(alloc.run_trial(&mut TrialStreams::from_rng(rng)))
}

/// Per-pair CSV: `pair,x,empirical_prob,target_prob,ci_half_width`, with a
/// 95% normal interval. Pairs are written as `user:round:realization`.
pub fn aggregate_csv(plan: &Plan, agg: &crate::sim::Aggregate) -> String {
    let mut out = String::from("pair,x,empirical_prob,target_prob,ci_half_width\n");
    let n = agg.trials.max(1) as f64;
    for key in plan.keys() {
        let x = plan.x(&key);
        let f = agg.frequency(&key);
        let half = 1.96 * (f * (1.0 - f) / n).sqrt();
        let _ = writeln!(
            out,
            "{}:{}:{},{x},{f},{},{half}",
            key.user,
            key.round,
            key.realization,
            (0.5 + plan.kappa) * x
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_lp_gap, RoundSpec};
    use crate::lp;
    use crate::sim::run_trials;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const K: f64 = 0.0115;

    #[test]
    fn alpha_examples() {
        assert!((alpha(0.0, K).unwrap() - 0.5115).abs() < 1e-15);
        assert_eq!(alpha(tau(K), K).unwrap(), 1.0);
        assert_eq!(alpha(1.0, K).unwrap(), 1.0);
        assert!(alpha(1.0 + 1e-6, K).is_err());
        assert!(alpha(tau(K) - 1e-6, K).unwrap() < 1.0);
    }

    #[test]
    fn beta_examples() {
        assert!(beta(tau(K), 0.3, K).unwrap().abs() < 1e-15);
        let b = beta(1.0, 0.02389, K).unwrap();
        assert!((b - 2.0 * K / 0.02389).abs() < 1e-12);
        assert!((b - 0.9627).abs() < 1e-4);
        assert_eq!(beta(1.0, 0.001, K).unwrap(), 1.0);
        assert!(beta(1.0, 0.0, K).is_err());
        assert!(beta(1.0, -0.1, K).is_err());
    }

    #[test]
    fn constants_at_default_kappa() {
        let c = DerivedConstants::new(K);
        assert!((c.tau - 0.955034).abs() < 1e-6);
        assert!((c.gamma - 1.535583).abs() < 1e-6);
        assert!((c.delta - 1.683586).abs() < 1e-6);
        assert!((c.rho_floor - 0.0238945).abs() < 1e-6);
        assert!(c.g >= 2.0 * K / (0.5 - K));
    }

    #[test]
    fn config_checks() {
        assert!(AlgoConfig { kappa: 0.6, ..Default::default() }.validate().is_err());
        let cfg = AlgoConfig { sample_count_override: Some(10_000), ..AlgoConfig::sampled(1) };
        assert_eq!(cfg.sample_count(3, 3).unwrap(), 10_000);
        assert!((cfg.effective_kappa() - 0.0105).abs() < 1e-15);
        let formula = AlgoConfig { use_formula_sample_count: true, ..AlgoConfig::sampled(1) };
        assert!(matches!(formula.sample_count(2, 2), Err(Error::BudgetExceeded { .. })));
    }

    fn single_edge() -> (BernoulliInstance, LpSolution) {
        let inst = BernoulliInstance { n: 1, rounds: vec![RoundSpec { p: 1.0, c: 1, values: vec![1.0], q: vec![1.0] }] };
        let sol = lp::solve_bernoulli(&inst).unwrap();
        (inst, sol)
    }

    #[test]
    fn single_edge_frequency() {
        let (inst, sol) = single_edge();
        let alloc = Allocator::for_bernoulli(&inst, &sol, &AlgoConfig::default()).unwrap();
        let agg = run_trials(&alloc, 100_000, 3, 0).unwrap();
        let f = agg.frequency(&crate::lp::VarKey::pair(0, 0));
        let se = (0.5115f64 * 0.4885 / 1e5).sqrt();
        assert!((f - 0.5115).abs() < 3.0 * se, "{f}");
    }

    #[test]
    fn non_arrival_leaves_state_untouched() {
        let mut inst = gen_lp_gap();
        inst.rounds[0].p = 1e-300;
        let sol = lp::solve_bernoulli(&inst).unwrap();
        let alloc = Allocator::for_bernoulli(&inst, &sol, &AlgoConfig::default()).unwrap();
        let trace = alloc.run_trial(&mut TrialStreams::new(0, 0));
        assert_eq!(trace.rounds[0].realization, None);
        assert!(trace.rounds[0].allocations.is_empty());
    }

    #[test]
    fn traces_are_valid_and_reproducible() {
        let inst = gen_lp_gap();
        let sol = lp::solve_bernoulli(&inst).unwrap();
        let alloc = Allocator::for_bernoulli(&inst, &sol, &AlgoConfig::default()).unwrap();
        for trial in 0..500 {
            let a = alloc.run_trial(&mut TrialStreams::new(7, trial));
            a.check(2).unwrap();
            assert_eq!(a, alloc.run_trial(&mut TrialStreams::new(7, trial)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        run(&inst, &sol, &AlgoConfig::default(), &mut rng).unwrap().check(2).unwrap();
    }

    #[test]
    fn sigma_is_cached() {
        let inst = gen_lp_gap();
        let sol = lp::solve_bernoulli(&inst).unwrap();
        let cfg = AlgoConfig { sample_count_override: Some(500), ..AlgoConfig::sampled(5) };
        let alloc = Allocator::for_bernoulli(&inst, &sol, &cfg).unwrap();
        let first = alloc.sigma(1, 0).unwrap().to_vec();
        let count = alloc.simulations();
        assert_eq!(count, 500);
        assert_eq!(alloc.sigma(1, 0).unwrap(), first.as_slice());
        assert_eq!(alloc.simulations(), count);
        assert!(run_sampled(&inst, &sol, &AlgoConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn zero_capacity_realization_is_idle() {
        let g = gen_lp_gap().to_general();
        let sol = lp::solve_general(&g).unwrap();
        let alloc = Allocator::for_general(&g, &sol, &AlgoConfig::default()).unwrap();
        for trial in 0..200 {
            let tr = alloc.run_trial(&mut TrialStreams::new(1, trial));
            for r in &tr.rounds {
                if r.realization == Some(1) {
                    assert!(r.first_proposal.is_empty() && r.allocations.is_empty());
                }
            }
        }
    }

    #[test]
    fn zero_success_keeps_everyone_available() {
        let mut g = gen_lp_gap().to_general();
        for r in &mut g.rounds {
            for z in &mut r.realizations {
                z.q.iter_mut().for_each(|q| *q = 0.0);
            }
        }
        let sol = lp::solve_general(&g).unwrap();
        let alloc = Allocator::for_general(&g, &sol, &AlgoConfig::default()).unwrap();
        for trial in 0..200 {
            let tr = alloc.run_trial(&mut TrialStreams::new(2, trial));
            assert_eq!(tr.welfare, 0.0);
            assert!(tr.rounds.iter().all(|r| r.successes.is_empty()));
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let inst = gen_lp_gap();
        let sol = lp::solve_bernoulli(&inst).unwrap();
        let alloc = Allocator::for_bernoulli(&inst, &sol, &AlgoConfig::default()).unwrap();
        let agg = run_trials(&alloc, 2000, 1, 2).unwrap();
        let csv = aggregate_csv(alloc.plan(), &agg);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("pair,x,empirical_prob,target_prob,ci_half_width"));
        assert_eq!(lines.count(), alloc.plan().keys().len());
    }
}
