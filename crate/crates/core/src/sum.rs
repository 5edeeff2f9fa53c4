//! Deterministic accumulation for parallel Monte Carlo reductions.

use std::collections::BTreeMap;

/// Neumaier-compensated sum in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut compensation = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            compensation += (sum - t) + v;
        } else {
            compensation += (v - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

/// Per-path contributions keyed by path index.
///
/// The total is always reduced in ascending path order with compensated
/// summation, so it does not depend on which thread produced which
/// entry, and merging disjoint shards reproduces the single-run total
/// exactly.
#[derive(Clone, Debug, Default)]
pub struct PathSums {
    entries: BTreeMap<u64, f64>,
}

impl PathSums {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path_index: u64, value: f64) {
        let previous = self.entries.insert(path_index, value);
        assert!(previous.is_none(), "duplicate contribution for path {path_index}");
    }

    pub fn merge(&mut self, other: PathSums) {
        for (path, value) in other.entries {
            self.insert(path, value);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Canonical-order compensated total.
    pub fn total(&self) -> f64 {
        compensated_sum(self.entries.values().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let xs = [1e16, 1.0, -1e16];
        assert_eq!(compensated_sum(xs), 1.0);
    }

    #[test]
    fn merged_shards_equal_the_single_run_exactly() {
        let values: Vec<f64> = (0..301)
            .map(|i| ((i as f64) * 0.731).sin().abs() * 1e-3)
            .collect();
        let mut whole = PathSums::new();
        for (i, v) in values.iter().enumerate() {
            whole.insert(i as u64, *v);
        }
        let mut left = PathSums::new();
        let mut right = PathSums::new();
        for (i, v) in values.iter().enumerate() {
            if i < 137 {
                left.insert(i as u64, *v);
            } else {
                right.insert(i as u64, *v);
            }
        }
        left.merge(right);
        assert_eq!(whole.total().to_bits(), left.total().to_bits());
    }

    #[test]
    #[should_panic(expected = "duplicate contribution")]
    fn duplicate_paths_are_rejected() {
        let mut s = PathSums::new();
        s.insert(3, 1.0);
        s.insert(3, 2.0);
    }
}
