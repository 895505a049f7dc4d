//! Pivotal sampling.
//!
//! Rounds a vector of marginals `m` with `sum(m) <= k` to a subset `S` such
//! that `Pr[i in S] = m[i]`, `|S| <= k` always, and inclusion (and exclusion)
//! events are negatively cylinder dependent.
//!
//! Pivots always take the two lowest-index fractional entries, so the joint
//! law is a fixed function of `m`. [`sample`] and [`subset_distribution`]
//! share the same step and therefore describe the same distribution.

use std::collections::BTreeMap;

use rand::Rng;

use crate::{Error, Result};

/// Entries within this distance of 0 or 1 are treated as integral.
const SNAP: f64 = 1e-12;
/// Slack allowed on entries above 1 and on the sum above `k`.
pub const INPUT_TOL: f64 = 1e-9;
/// Largest input accepted by [`subset_distribution`].
pub const MAX_EXACT_N: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct MarginalVector {
    m: Vec<f64>,
    k: usize,
}

impl MarginalVector {
    /// Clamps entries in `(1, 1 + 1e-9]` to 1; rejects anything else outside `[0, 1]`.
    pub fn new(m: Vec<f64>, k: usize) -> Result<Self> {
        let mut m = m;
        for (i, v) in m.iter_mut().enumerate() {
            if !v.is_finite() || *v < 0.0 || *v > 1.0 + INPUT_TOL {
                return Err(Error::invalid_arg(format!("marginal {i} = {v} outside [0,1]")));
            }
            *v = v.min(1.0);
        }
        let total: f64 = m.iter().sum();
        if total > k as f64 + INPUT_TOL {
            return Err(Error::invalid_arg(format!("marginals sum to {total}, exceeding cap {k}")));
        }
        Ok(MarginalVector { m, k })
    }

    pub fn marginals(&self) -> &[f64] {
        &self.m
    }

    pub fn cap(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

fn snap(v: f64) -> f64 {
    if v < SNAP {
        0.0
    } else if v > 1.0 - SNAP {
        1.0
    } else {
        v
    }
}

fn is_fractional(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

/// One randomized step: with probability `p_first` the working vector takes
/// `first`, otherwise `second`, at the listed positions.
struct Step {
    a: usize,
    b: Option<usize>,
    p_first: f64,
    first: (f64, f64),
    second: (f64, f64),
}

impl Step {
    fn apply(&self, v: &mut [f64], take_first: bool) {
        let (va, vb) = if take_first { self.first } else { self.second };
        v[self.a] = snap(va);
        if let Some(b) = self.b {
            v[b] = snap(vb);
        }
    }
}

/// Next pivot for the working vector, or `None` once it is integral.
fn next_step(v: &[f64], k: usize) -> Option<Step> {
    let mut frac = v.iter().enumerate().filter(|(_, &x)| is_fractional(x)).map(|(i, _)| i);
    let a = frac.next()?;
    match frac.next() {
        Some(b) => {
            let (va, vb) = (v[a], v[b]);
            let s = va + vb;
            Some(if s <= 1.0 {
                Step { a, b: Some(b), p_first: va / s, first: (s, 0.0), second: (0.0, s) }
            } else {
                Step { a, b: Some(b), p_first: (1.0 - vb) / (2.0 - s), first: (1.0, s - 1.0), second: (s - 1.0, 1.0) }
            })
        }
        None => {
            let ones = v.iter().filter(|&&x| x == 1.0).count();
            if ones >= k {
                // only rounding noise can be left here
                Some(Step { a, b: None, p_first: 0.0, first: (1.0, 0.0), second: (0.0, 0.0) })
            } else {
                Some(Step { a, b: None, p_first: v[a], first: (1.0, 0.0), second: (0.0, 0.0) })
            }
        }
    }
}

fn initial(mv: &MarginalVector) -> Vec<f64> {
    mv.m.iter().map(|&x| snap(x)).collect()
}

/// Draws a subset; returns the selected indices in increasing order.
pub fn sample<R: Rng + ?Sized>(mv: &MarginalVector, rng: &mut R) -> Vec<usize> {
    let mut v = initial(mv);
    while let Some(step) = next_step(&v, mv.k) {
        let u: f64 = rng.gen();
        step.apply(&mut v, u < step.p_first);
    }
    v.iter().enumerate().filter(|(_, &x)| x == 1.0).map(|(i, _)| i).collect()
}

/// Unchecked variant used on hot paths where the marginals were validated
/// upstream. Writes membership flags into `out`.
pub(crate) fn sample_into<R: Rng + ?Sized>(m: &[f64], k: usize, rng: &mut R, work: &mut Vec<f64>, out: &mut Vec<usize>) {
    work.clear();
    work.extend(m.iter().map(|&x| snap(x.clamp(0.0, 1.0))));
    while let Some(step) = next_step(work, k) {
        let u: f64 = rng.gen();
        step.apply(work, u < step.p_first);
    }
    out.clear();
    out.extend(work.iter().enumerate().filter(|(_, &x)| x == 1.0).map(|(i, _)| i));
}

/// Exact law of [`sample`] as a map from subset bitmask (bit `i` set iff
/// index `i` is selected) to probability.
pub fn subset_distribution(mv: &MarginalVector) -> Result<BTreeMap<u64, f64>> {
    if mv.len() > MAX_EXACT_N {
        return Err(Error::invalid_arg(format!(
            "exact subset distribution supports at most {MAX_EXACT_N} entries, got {}",
            mv.len()
        )));
    }
    let mut out = BTreeMap::new();
    let mut v = initial(mv);
    walk(&mut v, mv.k, 1.0, &mut out);
    Ok(out)
}

fn walk(v: &mut Vec<f64>, k: usize, weight: f64, out: &mut BTreeMap<u64, f64>) {
    let Some(step) = next_step(v, k) else {
        let mask = v.iter().enumerate().filter(|(_, &x)| x == 1.0).fold(0u64, |m, (i, _)| m | 1 << i);
        *out.entry(mask).or_insert(0.0) += weight;
        return;
    };
    for (take_first, p) in [(true, step.p_first), (false, 1.0 - step.p_first)] {
        if p > 0.0 {
            let saved = v.clone();
            step.apply(v, take_first);
            walk(v, k, weight * p, out);
            *v = saved;
        }
    }
}
