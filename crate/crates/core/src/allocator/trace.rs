use serde::Serialize;
use serde_json::json;

/// Everything that happened in one round of one trial.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RoundTrace {
    pub round: usize,
    /// Realized outcome index; `None` when nothing arrived.
    pub realization: Option<usize>,
    pub capacity: u32,
    pub first_proposal: Vec<usize>,
    pub alpha_coins: Vec<(usize, bool)>,
    /// Number of users allocated by the first proposal.
    pub first_allocated: usize,
    pub second_proposal: Vec<usize>,
    pub beta_coins: Vec<(usize, bool)>,
    /// All users allocated this round, in increasing order.
    pub allocations: Vec<usize>,
    /// Allocated users whose allocation succeeded.
    pub successes: Vec<usize>,
    pub welfare: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunTrace {
    pub rounds: Vec<RoundTrace>,
    pub welfare: f64,
}

impl RunTrace {
    /// Line-delimited `{round, event, payload}` records.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut emit = |round: usize, event: &str, payload: serde_json::Value| {
            out.push_str(&json!({ "round": round, "event": event, "payload": payload }).to_string());
            out.push('\n');
        };
        for r in &self.rounds {
            emit(r.round, "arrival", json!({ "realization": r.realization, "capacity": r.capacity }));
            if r.realization.is_none() {
                continue;
            }
            emit(r.round, "first_proposal", json!(r.first_proposal));
            emit(r.round, "alpha_coins", json!(r.alpha_coins));
            emit(r.round, "first_allocated", json!(r.first_allocated));
            emit(r.round, "second_proposal", json!(r.second_proposal));
            emit(r.round, "beta_coins", json!(r.beta_coins));
            emit(r.round, "allocations", json!(r.allocations));
            emit(r.round, "successes", json!(r.successes));
            emit(r.round, "welfare", json!(r.welfare));
        }
        out
    }

    /// Checks capacity, no reuse of successfully allocated users, and the
    /// welfare total. Returns a description of the first problem found.
    pub fn check(&self, n: usize) -> Result<(), String> {
        let mut taken = vec![false; n];
        let mut total = 0.0;
        for r in &self.rounds {
            if r.allocations.len() > r.capacity as usize {
                return Err(format!("round {}: {} allocations exceed capacity {}", r.round, r.allocations.len(), r.capacity));
            }
            for &i in &r.allocations {
                if taken[i] {
                    return Err(format!("round {}: user {i} allocated after a successful allocation", r.round));
                }
            }
            for &i in &r.successes {
                if !r.allocations.contains(&i) {
                    return Err(format!("round {}: user {i} succeeded without allocation", r.round));
                }
                taken[i] = true;
            }
            total += r.welfare;
        }
        if (total - self.welfare).abs() > 1e-9 * (1.0 + total.abs()) {
            return Err(format!("welfare {} differs from round sum {total}", self.welfare));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_lines_parse() {
        let t = RunTrace {
            rounds: vec![
                RoundTrace { round: 0, realization: None, ..Default::default() },
                RoundTrace {
                    round: 1,
                    realization: Some(0),
                    capacity: 1,
                    first_proposal: vec![1],
                    alpha_coins: vec![(1, true)],
                    first_allocated: 1,
                    allocations: vec![1],
                    successes: vec![1],
                    welfare: 2.0,
                    ..Default::default()
                },
            ],
            welfare: 2.0,
        };
        let text = t.to_jsonl();
        assert_eq!(text.lines().count(), 1 + 9);
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v.get("round").is_some() && v.get("event").is_some() && v.get("payload").is_some());
        }
        assert!(t.check(2).is_ok());
    }

    #[test]
    fn check_flags_over_capacity() {
        let t = RunTrace {
            rounds: vec![RoundTrace { realization: Some(0), capacity: 1, allocations: vec![0, 1], ..Default::default() }],
            welfare: 0.0,
        };
        assert!(t.check(2).unwrap_err().contains("capacity"));
    }
}
