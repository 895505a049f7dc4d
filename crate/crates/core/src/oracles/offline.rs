//! Offline (prophet) benchmark: the best assignment in hindsight, once the
//! realized resources and every allocation's success coin are known.

use rand::Rng;
use serde::Serialize;

use crate::instance::Instance;
use crate::util::{bits, submasks};
use crate::Result;

/// Above this many users the per-path optimum uses min-cost flow instead
/// of enumeration.
pub const ENUMERATION_MAX_USERS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OfflineEstimate {
    pub mean: f64,
    pub se: f64,
    /// 95% normal half-width.
    pub ci_half_width: f64,
    pub trials: u64,
}

/// One sampled path: per round, the realized capacity and each user's
/// value if allocated there (zero when the success coin fails).
pub(crate) struct PathProblem {
    pub n: usize,
    pub caps: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
}

fn sample_path<R: Rng + ?Sized>(inst: &Instance, rng: &mut R) -> PathProblem {
    let g = inst.to_general();
    let mut caps = Vec::new();
    let mut weights = Vec::new();
    for round in &g.rounds {
        let u: f64 = rng.gen();
        let mut cum = 0.0;
        let mut chosen = None;
        for z in &round.realizations {
            cum += z.p;
            if u < cum {
                chosen = Some(z);
                break;
            }
        }
        let coins: Vec<f64> = (0..g.n).map(|_| rng.gen()).collect();
        match chosen {
            Some(z) if z.c > 0 => {
                caps.push(z.c as usize);
                weights.push((0..g.n).map(|i| if coins[i] < z.q[i] { z.values[i] } else { 0.0 }).collect());
            }
            _ => {
                caps.push(0);
                weights.push(vec![0.0; g.n]);
            }
        }
    }
    PathProblem { n: g.n, caps, weights }
}

/// Exact optimum by dynamic programming over used-user masks.
pub(crate) fn solve_by_enumeration(p: &PathProblem) -> f64 {
    let states = 1usize << p.n;
    let mut best = vec![f64::NEG_INFINITY; states];
    best[0] = 0.0;
    for (cap, w) in p.caps.iter().zip(&p.weights) {
        if *cap == 0 {
            continue;
        }
        let positive = w.iter().enumerate().filter(|(_, &v)| v > 0.0).fold(0u64, |m, (i, _)| m | 1 << i);
        let mut next = best.clone();
        for used in 0..states {
            if best[used] == f64::NEG_INFINITY {
                continue;
            }
            let free = positive & !(used as u64);
            for add in submasks(free) {
                if add == 0 || add.count_ones() as usize > *cap {
                    continue;
                }
                let val = best[used] + bits(add).map(|i| w[i]).sum::<f64>();
                let to = used | add as usize;
                if val > next[to] {
                    next[to] = val;
                }
            }
        }
        best = next;
    }
    best.into_iter().fold(0.0, f64::max)
}

/// Max-weight capacitated assignment by successive shortest paths,
/// stopping once no augmenting path has negative cost.
pub(crate) fn solve_by_flow(p: &PathProblem) -> f64 {
    let rounds = p.caps.len();
    let n = p.n;
    // nodes: source, rounds, users, sink
    let source = 0;
    let sink = 1 + rounds + n;
    let mut g = Flow::new(sink + 1);
    for (t, &c) in p.caps.iter().enumerate() {
        if c == 0 {
            continue;
        }
        g.add(source, 1 + t, c as i64, 0.0);
        for i in 0..n {
            if p.weights[t][i] > 0.0 {
                g.add(1 + t, 1 + rounds + i, 1, -p.weights[t][i]);
            }
        }
    }
    for i in 0..n {
        g.add(1 + rounds + i, sink, 1, 0.0);
    }
    -g.min_cost_while_negative(source, sink)
}

struct Edge {
    to: usize,
    cap: i64,
    cost: f64,
}

struct Flow {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl Flow {
    fn new(nodes: usize) -> Self {
        Flow { edges: Vec::new(), adj: vec![Vec::new(); nodes] }
    }

    fn add(&mut self, from: usize, to: usize, cap: i64, cost: f64) {
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge { to, cap, cost });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge { to: from, cap: 0, cost: -cost });
    }

    fn min_cost_while_negative(&mut self, s: usize, t: usize) -> f64 {
        let nodes = self.adj.len();
        let mut total = 0.0;
        loop {
            // Bellman-Ford; the residual graph has no negative cycles
            let mut dist = vec![f64::INFINITY; nodes];
            let mut via = vec![usize::MAX; nodes];
            dist[s] = 0.0;
            for _ in 0..nodes {
                let mut changed = false;
                for u in 0..nodes {
                    if dist[u] == f64::INFINITY {
                        continue;
                    }
                    for &e in &self.adj[u] {
                        let edge = &self.edges[e];
                        if edge.cap > 0 && dist[u] + edge.cost < dist[edge.to] - 1e-12 {
                            dist[edge.to] = dist[u] + edge.cost;
                            via[edge.to] = e;
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if !(dist[t] < -1e-12) {
                return total;
            }
            let mut v = t;
            while v != s {
                let e = via[v];
                self.edges[e].cap -= 1;
                self.edges[e ^ 1].cap += 1;
                v = self.edges[e ^ 1].to;
            }
            total += dist[t];
        }
    }
}

/// Monte-Carlo estimate of the offline optimum.
pub fn opt_offline_estimate<R: Rng + ?Sized>(inst: &Instance, trials: u64, rng: &mut R) -> Result<OfflineEstimate> {
    inst.validate().into_result()?;
    let trials = trials.max(1);
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..trials {
        let path = sample_path(inst, rng);
        let v = if path.n <= ENUMERATION_MAX_USERS { solve_by_enumeration(&path) } else { solve_by_flow(&path) };
        sum += v;
        sq += v * v;
    }
    let nt = trials as f64;
    let mean = sum / nt;
    let var = if trials > 1 { ((sq - nt * mean * mean) / (nt - 1.0)).max(0.0) } else { 0.0 };
    let se = (var / nt).sqrt();
    Ok(OfflineEstimate { mean, se, ci_half_width: 1.96 * se, trials })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_lp_gap, gen_random, BernoulliInstance, RandomParams, RoundSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn picks_the_max() {
        let inst = BernoulliInstance { n: 2, rounds: vec![RoundSpec { p: 1.0, c: 1, values: vec![3.0, 1.0], q: vec![1.0, 1.0] }] };
        let est = opt_offline_estimate(&inst.into(), 100, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(est.mean, 3.0);
        assert_eq!(est.se, 0.0);
    }

    #[test]
    fn lp_gap_dominates_online() {
        let est = opt_offline_estimate(&gen_lp_gap().into(), 20_000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        // offline gets 2 when the first resource arrives, 1 otherwise
        assert!((est.mean - 1.5).abs() < 3.0 * est.se + 1e-12);
        assert!(est.mean + 3.0 * est.se >= 1.5);
    }

    #[test]
    fn zero_values() {
        let mut inst = gen_lp_gap();
        for r in &mut inst.rounds {
            r.values = vec![0.0, 0.0];
        }
        let est = opt_offline_estimate(&inst.into(), 50, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(est.mean, 0.0);
    }

    #[test]
    fn flow_agrees_with_enumeration() {
        let params = RandomParams { n: 6, rounds: 4, capacity: (0, 3), value: (0.0, 5.0), q: (0.3, 1.0), p: (0.2, 1.0) };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..20 {
            let inst: Instance = gen_random(&params, seed).unwrap().into();
            for _ in 0..20 {
                let path = sample_path(&inst, &mut rng);
                let a = solve_by_enumeration(&path);
                let b = solve_by_flow(&path);
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }
}
