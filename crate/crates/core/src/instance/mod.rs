//! Problem instances for online capacitated allocation.
//!
//! A [`BernoulliInstance`] has one potential resource per round that is
//! active with probability `p`. A [`GeneralInstance`] draws one of several
//! realizations per round, each with its own capacity, values and success
//! probabilities. Rounds are independent of one another in both models.

mod generators;
mod io;

pub use generators::{
    gen_bdm_counterexample, gen_lp_gap, gen_positive_correlation, gen_random, gen_random_general,
    RandomParams,
};
pub use io::{from_json_str, read, read_with_warnings, to_json_string, write, BERNOULLI_SCHEMA, GENERAL_SCHEMA};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Probability sums per general round must equal one within this tolerance.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// One round of a Bernoulli instance: the resource arrives with probability
/// `p`, can serve up to `c` users, and allocating user `i` succeeds with
/// probability `q[i]`, yielding `values[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundSpec {
    pub p: f64,
    pub c: u32,
    pub values: Vec<f64>,
    pub q: Vec<f64>,
}

/// One possible outcome of a general round. Same fields as [`RoundSpec`];
/// `p` is the probability that this realization is drawn.
pub type Realization = RoundSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernoulliInstance {
    pub n: usize,
    pub rounds: Vec<RoundSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralRound {
    pub realizations: Vec<Realization>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralInstance {
    pub n: usize,
    pub rounds: Vec<GeneralRound>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Instance {
    Bernoulli(BernoulliInstance),
    General(GeneralInstance),
}

impl Instance {
    pub fn n(&self) -> usize {
        match self {
            Instance::Bernoulli(b) => b.n,
            Instance::General(g) => g.n,
        }
    }

    pub fn num_rounds(&self) -> usize {
        match self {
            Instance::Bernoulli(b) => b.rounds.len(),
            Instance::General(g) => g.rounds.len(),
        }
    }

    pub fn validate(&self) -> ValidationReport {
        match self {
            Instance::Bernoulli(b) => b.validate(),
            Instance::General(g) => g.validate(),
        }
    }

    /// The general form of this instance (Bernoulli instances are embedded).
    pub fn to_general(&self) -> GeneralInstance {
        match self {
            Instance::Bernoulli(b) => b.to_general(),
            Instance::General(g) => g.clone(),
        }
    }
}

impl From<BernoulliInstance> for Instance {
    fn from(b: BernoulliInstance) -> Self {
        Instance::Bernoulli(b)
    }
}

impl From<GeneralInstance> for Instance {
    fn from(g: GeneralInstance) -> Self {
        Instance::General(g)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Issue {
    /// Where the problem is, e.g. `rounds[1].q[0]`.
    pub location: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// List of violated invariants; empty iff the instance is valid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue { location: location.into(), message: message.into() });
    }

    /// Turns a non-empty report into an [`crate::Error::InvalidInstance`].
    pub fn into_result(self) -> crate::Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            let msg = self.issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ");
            Err(crate::Error::InvalidInstance(msg))
        }
    }
}

fn is_probability(x: f64) -> bool {
    x.is_finite() && (0.0..=1.0).contains(&x)
}

fn check_arrival(report: &mut ValidationReport, loc: &str, n: usize, r: &RoundSpec) {
    if !is_probability(r.p) {
        report.push(format!("{loc}.p"), format!("probability {} outside [0,1]", r.p));
    }
    if r.values.len() != n {
        report.push(
            format!("{loc}.values"),
            format!("length mismatch: expected {n}, found {}", r.values.len()),
        );
    }
    if r.q.len() != n {
        report.push(format!("{loc}.q"), format!("length mismatch: expected {n}, found {}", r.q.len()));
    }
    for (i, v) in r.values.iter().enumerate() {
        if !(v.is_finite() && *v >= 0.0) {
            report.push(format!("{loc}.values[{i}]"), format!("value {v} is negative or not finite"));
        }
    }
    for (i, q) in r.q.iter().enumerate() {
        if !is_probability(*q) {
            report.push(format!("{loc}.q[{i}]"), format!("probability {q} outside [0,1]"));
        }
    }
}

impl BernoulliInstance {
    pub fn num_rounds(&self) -> usize {
        self.rounds.len()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.n == 0 {
            report.push("n", "instance has no users");
        }
        for (t, r) in self.rounds.iter().enumerate() {
            check_arrival(&mut report, &format!("rounds[{t}]"), self.n, r);
        }
        report
    }

    /// Embeds into the general model. Realization 0 is always the active
    /// resource; a capacity-0, zero-value realization absorbs non-arrival and
    /// is omitted when `p = 1`. Its success probabilities are 1, so an
    /// instance with sure rewards stays one.
    pub fn to_general(&self) -> GeneralInstance {
        let rounds = self
            .rounds
            .iter()
            .map(|r| {
                let mut realizations = vec![r.clone()];
                if r.p < 1.0 {
                    realizations.push(RoundSpec {
                        p: 1.0 - r.p,
                        c: 0,
                        values: vec![0.0; self.n],
                        q: vec![1.0; self.n],
                    });
                }
                GeneralRound { realizations }
            })
            .collect();
        GeneralInstance { n: self.n, rounds }
    }

    /// True iff every success probability equals one.
    pub fn deterministic_rewards(&self) -> bool {
        self.rounds.iter().all(|r| r.q.iter().all(|&q| q == 1.0))
    }

    pub fn min_capacity(&self) -> Option<u32> {
        self.rounds.iter().map(|r| r.c).min()
    }
}

impl GeneralInstance {
    pub fn num_rounds(&self) -> usize {
        self.rounds.len()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.n == 0 {
            report.push("n", "instance has no users");
        }
        for (t, round) in self.rounds.iter().enumerate() {
            if round.realizations.is_empty() {
                report.push(format!("rounds[{t}].realizations"), "round has no realizations");
                continue;
            }
            let mut total = 0.0;
            for (j, r) in round.realizations.iter().enumerate() {
                check_arrival(&mut report, &format!("rounds[{t}].realizations[{j}]"), self.n, r);
                total += r.p;
            }
            if (total - 1.0).abs() > PROB_SUM_TOL {
                report.push(
                    format!("rounds[{t}].realizations"),
                    format!("realization probabilities sum to {total}, expected 1"),
                );
            }
        }
        report
    }

    pub fn deterministic_rewards(&self) -> bool {
        self.rounds
            .iter()
            .all(|r| r.realizations.iter().all(|z| z.q.iter().all(|&q| q == 1.0)))
    }
}
