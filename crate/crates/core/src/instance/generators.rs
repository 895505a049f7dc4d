use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BernoulliInstance, GeneralInstance, GeneralRound, RoundSpec};
use crate::{Error, Result};

/// Two users; a capacity-2 resource arriving with probability 1/2, then a
/// unit-capacity resource that always arrives. Unit values, sure success.
/// The online optimum is 1.5 while the LP relaxation reaches 2.
pub fn gen_lp_gap() -> BernoulliInstance {
    BernoulliInstance {
        n: 2,
        rounds: vec![
            RoundSpec { p: 0.5, c: 2, values: vec![1.0, 1.0], q: vec![1.0, 1.0] },
            RoundSpec { p: 1.0, c: 1, values: vec![1.0, 1.0], q: vec![1.0, 1.0] },
        ],
    }
}

/// Instance on which proposing to the top-`c_t` proposers collapses: a
/// capacity-`n` resource with unit values arriving with probability
/// `1 - 1/n`, followed by a unit-capacity resource worth `n^2` to everyone.
pub fn gen_bdm_counterexample(n: usize) -> Result<BernoulliInstance> {
    if n < 2 {
        return Err(Error::invalid_arg(format!("counterexample needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    let cap = u32::try_from(n).map_err(|_| Error::invalid_arg("n does not fit a capacity"))?;
    Ok(BernoulliInstance {
        n,
        rounds: vec![
            RoundSpec { p: 1.0 - 1.0 / nf, c: cap, values: vec![1.0; n], q: vec![1.0; n] },
            RoundSpec { p: 1.0, c: 1, values: vec![nf * nf; n], q: vec![1.0; n] },
        ],
    })
}

/// Two unit-value users and one capacity-2 resource arriving with
/// probability `eps`. A zero-value, zero-capacity sentinel round follows so
/// that availability after the gadget round is reported as a round quantity.
pub fn gen_positive_correlation(eps: f64) -> Result<BernoulliInstance> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid_arg(format!("eps must lie in (0,1), got {eps}")));
    }
    Ok(BernoulliInstance {
        n: 2,
        rounds: vec![
            RoundSpec { p: eps, c: 2, values: vec![1.0, 1.0], q: vec![1.0, 1.0] },
            RoundSpec { p: 1.0, c: 0, values: vec![0.0, 0.0], q: vec![1.0, 1.0] },
        ],
    })
}

/// Inclusive ranges for random instance generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomParams {
    pub n: usize,
    pub rounds: usize,
    pub capacity: (u32, u32),
    pub value: (f64, f64),
    pub q: (f64, f64),
    pub p: (f64, f64),
}

impl Default for RandomParams {
    fn default() -> Self {
        RandomParams { n: 3, rounds: 3, capacity: (1, 2), value: (0.0, 1.0), q: (1.0, 1.0), p: (0.2, 1.0) }
    }
}

impl RandomParams {
    fn check(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid_arg(format!("empty or invalid {what} range")));
        if self.n == 0 {
            return Err(Error::invalid_arg("n must be positive"));
        }
        if self.capacity.0 > self.capacity.1 {
            return bad("capacity");
        }
        let (vlo, vhi) = self.value;
        if !(vlo.is_finite() && vhi.is_finite() && 0.0 <= vlo && vlo <= vhi) {
            return bad("value");
        }
        for (name, (lo, hi)) in [("q", self.q), ("p", self.p)] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return bad(name);
            }
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

fn random_arrival(rng: &mut ChaCha8Rng, params: &RandomParams, p: f64) -> RoundSpec {
    let c = rng.gen_range(params.capacity.0..=params.capacity.1);
    let values = (0..params.n).map(|_| uniform(rng, params.value)).collect();
    let q = (0..params.n).map(|_| uniform(rng, params.q)).collect();
    RoundSpec { p, c, values, q }
}

/// Deterministic for a fixed seed.
pub fn gen_random(params: &RandomParams, seed: u64) -> Result<BernoulliInstance> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rounds = (0..params.rounds)
        .map(|_| {
            let p = uniform(&mut rng, params.p);
            random_arrival(&mut rng, params, p)
        })
        .collect();
    Ok(BernoulliInstance { n: params.n, rounds })
}

/// Random general instance with `realizations` outcomes per round. The
/// outcome weights are drawn uniformly and normalised; `params.p` is ignored.
pub fn gen_random_general(params: &RandomParams, realizations: usize, seed: u64) -> Result<GeneralInstance> {
    params.check()?;
    if realizations == 0 {
        return Err(Error::invalid_arg("need at least one realization per round"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rounds = (0..params.rounds)
        .map(|_| {
            let weights: Vec<f64> = (0..realizations).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = weights.iter().sum();
            let mut realizations: Vec<RoundSpec> =
                weights.iter().map(|w| random_arrival(&mut rng, params, w / total)).collect();
            // make the probabilities sum to one exactly
            let head: f64 = realizations[..realizations.len() - 1].iter().map(|r| r.p).sum();
            realizations.last_mut().unwrap().p = 1.0 - head;
            GeneralRound { realizations }
        })
        .collect();
    Ok(GeneralInstance { n: params.n, rounds })
}
