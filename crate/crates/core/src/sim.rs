//! Seeded Monte-Carlo trials.
//!
//! Every trial gets its own random streams derived from `(seed, trial)`, so
//! a trial's outcome does not depend on which worker runs it. Trials are
//! grouped into fixed-size chunks and reduced in chunk order, which makes
//! aggregates bit-identical for any number of jobs.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::allocator::RunTrace;
use crate::lp::VarKey;
use crate::{Error, Result};

const CHUNK: u64 = 1024;

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent substreams for one trial.
#[derive(Clone, Debug)]
pub struct TrialStreams {
    pub arrivals: ChaCha8Rng,
    pub pivotal: ChaCha8Rng,
    pub alpha: ChaCha8Rng,
    pub beta: ChaCha8Rng,
    pub success: ChaCha8Rng,
}

impl TrialStreams {
    pub fn new(seed: u64, trial: u64) -> Self {
        let key = splitmix64(seed ^ splitmix64(trial.wrapping_add(0x5851_F42D_4C95_7F2D)));
        let stream = |s: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(key);
            r.set_stream(s);
            r
        };
        TrialStreams { arrivals: stream(0), pivotal: stream(1), alpha: stream(2), beta: stream(3), success: stream(4) }
    }

    /// Streams keyed by a value drawn from `rng`.
    pub fn from_rng<R: Rng + ?Sized>(rng: &mut R) -> Self {
        TrialStreams::new(rng.gen(), 0)
    }
}

/// Anything that can play one seeded trial.
pub trait Policy: Sync {
    fn play(&self, streams: &mut TrialStreams) -> RunTrace;
}

/// Per-pair allocation and success counts plus welfare moments.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Aggregate {
    pub trials: u64,
    pub welfare_sum: f64,
    pub welfare_sq_sum: f64,
    pub allocations: BTreeMap<VarKey, u64>,
    pub successes: BTreeMap<VarKey, u64>,
}

impl Aggregate {
    pub fn record(&mut self, trace: &RunTrace) {
        self.trials += 1;
        self.welfare_sum += trace.welfare;
        self.welfare_sq_sum += trace.welfare * trace.welfare;
        for r in &trace.rounds {
            let Some(j) = r.realization else { continue };
            for &i in &r.allocations {
                *self.allocations.entry(VarKey { user: i, round: r.round, realization: j }).or_insert(0) += 1;
            }
            for &i in &r.successes {
                *self.successes.entry(VarKey { user: i, round: r.round, realization: j }).or_insert(0) += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &Aggregate) {
        self.trials += other.trials;
        self.welfare_sum += other.welfare_sum;
        self.welfare_sq_sum += other.welfare_sq_sum;
        for (k, v) in &other.allocations {
            *self.allocations.entry(*k).or_insert(0) += v;
        }
        for (k, v) in &other.successes {
            *self.successes.entry(*k).or_insert(0) += v;
        }
    }

    /// Empirical allocation frequency of `key`.
    pub fn frequency(&self, key: &VarKey) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        self.allocations.get(key).copied().unwrap_or(0) as f64 / self.trials as f64
    }

    pub fn mean_welfare(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.welfare_sum / self.trials as f64
        }
    }

    /// Sample standard deviation of the per-trial welfare.
    pub fn welfare_sd(&self) -> f64 {
        let n = self.trials as f64;
        if self.trials < 2 {
            return 0.0;
        }
        let mean = self.welfare_sum / n;
        ((self.welfare_sq_sum - n * mean * mean) / (n - 1.0)).max(0.0).sqrt()
    }

    /// Standard error of the mean welfare.
    pub fn welfare_se(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.welfare_sd() / (self.trials as f64).sqrt()
        }
    }
}

/// Runs `trials` trials of `policy` on `jobs` threads (0 = all cores).
pub fn run_trials<P: Policy>(policy: &P, trials: u64, seed: u64, jobs: usize) -> Result<Aggregate> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid_arg(format!("cannot start worker pool: {e}")))?;
    let chunks = trials.div_ceil(CHUNK);
    let parts: Vec<Aggregate> = pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut agg = Aggregate::default();
                for trial in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                    let mut streams = TrialStreams::new(seed, trial);
                    agg.record(&policy.play(&mut streams));
                }
                agg
            })
            .collect()
    });
    let mut total = Aggregate::default();
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}
