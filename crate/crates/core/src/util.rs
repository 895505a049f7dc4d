use std::fs;
use std::io::Write;
use std::path::Path;

use crate::Result;

/// Writes `bytes` to a temp file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let file_name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{file_name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Bitmask helpers for user subsets.
pub(crate) fn bits(mask: u64) -> impl Iterator<Item = usize> {
    let mut m = mask;
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        }
    })
}

/// All submasks of `mask`, including `mask` itself and 0.
pub(crate) fn submasks(mask: u64) -> impl Iterator<Item = u64> {
    let mut sub = mask;
    let mut done = false;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let out = sub;
        if sub == 0 {
            done = true;
        } else {
            sub = (sub - 1) & mask;
        }
        Some(out)
    })
}

/// Probability that exactly the users in `hit` succeed among `trials`, each
/// user `i` succeeding independently with probability `prob[i]`.
pub(crate) fn subset_outcome_prob(trials: u64, hit: u64, prob: &[f64]) -> f64 {
    bits(trials).fold(1.0, |acc, i| if hit >> i & 1 == 1 { acc * prob[i] } else { acc * (1.0 - prob[i]) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn submask_enumeration() {
        let mut subs: Vec<u64> = submasks(0b101).collect();
        subs.sort();
        assert_eq!(subs, vec![0, 1, 4, 5]);
        assert_eq!(submasks(0).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn outcome_probabilities_sum_to_one() {
        let prob = [0.3, 0.9, 0.5];
        let total: f64 = submasks(0b111).map(|h| subset_outcome_prob(0b111, h, &prob)).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert_eq!(bits(0b1010).collect::<Vec<_>>(), vec![1, 3]);
    }
}
