//! Robust per-arm aggregation of neighbour reports.
//!
//! For every arm, reports whose pull count falls below the agent's own
//! threshold are discarded (unless that would leave fewer than the quorum
//! `(1 - 2 alpha) |N_w(i)|`, in which case the threshold is reset to the
//! smallest reported count and every report is restored). The remaining
//! per-report averages are then trimmed symmetrically and averaged.

use std::cmp::Ordering;

use crate::scalar::{Field, Tolerance};

/// One neighbour's statistics for a single arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Report<T> {
    pub sum: T,
    pub count: T,
}

impl<T: Field> Report<T> {
    pub fn new(sum: T, count: T) -> Self {
        Report { sum, count }
    }

    /// `sum / count`; a report with no positive count carries no reward.
    pub fn average(&self) -> T {
        if self.count > T::zero() {
            self.sum / self.count
        } else {
            T::zero()
        }
    }
}

/// Result of filtering one arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmEstimate<T> {
    /// Trimmed mean capped at one.
    pub value: T,
    /// Trimmed mean before the cap.
    pub mean: T,
    /// Count threshold in force after the optional reset.
    pub threshold: T,
    /// Reports that passed the count filter (all of them after a reset).
    pub eligible: usize,
    /// Reports dropped from each end of the sorted averages.
    pub trimmed: usize,
    /// Reports averaged in the end.
    pub kept: usize,
    /// Whether the count filter left too few reports and was reset.
    pub reset: bool,
}

/// Filters and averages the reports for one arm.
///
/// `neighborhood` is `|N_w(i)|`, the size the quorum is measured against.
///
/// # Panics
///
/// Panics if `reports` is empty.
pub fn filter_arm<T: Field>(
    reports: &[Report<T>],
    threshold: T,
    alpha: Tolerance,
    neighborhood: usize,
) -> ArmEstimate<T> {
    assert!(!reports.is_empty(), "filter needs at least the agent's own report");

    let mut threshold = threshold;
    let mut eligible: Vec<&Report<T>> = reports.iter().filter(|r| !(r.count < threshold)).collect();
    let reset = alpha.below_quorum(eligible.len(), neighborhood);
    if reset {
        threshold = reports
            .iter()
            .map(|r| r.count)
            .reduce(|a, b| if b < a { b } else { a })
            .expect("non-empty");
        eligible = reports.iter().collect();
    }

    let trimmed = alpha.trim_count(eligible.len(), neighborhood);
    let mut averages: Vec<T> = eligible.iter().map(|r| r.average()).collect();
    averages.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let kept_values = &averages[trimmed..averages.len() - trimmed];
    let mean = mean_of(kept_values);
    let value = if mean > T::one() { T::one() } else { mean };

    ArmEstimate {
        value,
        mean,
        threshold,
        eligible: eligible.len(),
        trimmed,
        kept: kept_values.len(),
        reset,
    }
}

fn mean_of<T: Field>(values: &[T]) -> T {
    let mut sum = T::zero();
    let mut n = T::zero();
    for &v in values {
        sum = sum + v;
        n = n + T::one();
    }
    sum / n
}
