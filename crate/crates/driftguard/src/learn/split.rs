//! Axis-aligned split search for the tree learners.
//!
//! Candidate thresholds are the midpoints of consecutive distinct sorted
//! values of a feature. The best split maximizes Gini impurity decrease;
//! ties go to the lower feature index, then the lower threshold, which
//! keeps every tree build deterministic.

use crate::featurize::FEATURE_DIM;
use crate::types::Label;

/// A chosen split: rows with `value <= threshold` go left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

fn gini(benign: f64, malicious: f64) -> f64 {
    let n = benign + malicious;
    if n == 0.0 {
        return 0.0;
    }
    let pb = benign / n;
    let pm = malicious / n;
    1.0 - pb * pb - pm * pm
}

/// Midpoint of two consecutive distinct values, nudged down when rounding
/// would land it on the upper value (which would make the right side empty).
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = (lo + hi) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Finds the best Gini split of `indices` over the given features, or
/// `None` when every candidate feature is constant on those rows.
pub fn best_split(
    data: &[[f64; FEATURE_DIM]],
    labels: &[Label],
    indices: &[usize],
    features: &[usize],
) -> Option<SplitCandidate> {
    let n = indices.len();
    if n < 2 {
        return None;
    }
    let total_mal = indices
        .iter()
        .filter(|&&i| labels[i].is_malicious())
        .count() as f64;
    let total_ben = n as f64 - total_mal;
    let parent = gini(total_ben, total_mal);

    let mut best: Option<SplitCandidate> = None;
    let mut sorted: Vec<usize> = Vec::with_capacity(n);
    for &feature in features {
        sorted.clear();
        sorted.extend_from_slice(indices);
        sorted.sort_unstable_by(|&a, &b| data[a][feature].total_cmp(&data[b][feature]));

        let mut left_mal = 0.0;
        let mut left_ben = 0.0;
        for pos in 0..n - 1 {
            let i = sorted[pos];
            if labels[i].is_malicious() {
                left_mal += 1.0;
            } else {
                left_ben += 1.0;
            }
            let here = data[i][feature];
            let next = data[sorted[pos + 1]][feature];
            if here == next {
                continue;
            }
            let left_n = left_ben + left_mal;
            let right_ben = total_ben - left_ben;
            let right_mal = total_mal - left_mal;
            let right_n = right_ben + right_mal;
            let weighted = (left_n * gini(left_ben, left_mal)
                + right_n * gini(right_ben, right_mal))
                / n as f64;
            let gain = parent - weighted;
            // Strict comparison: earlier features and lower thresholds win ties.
            if best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitCandidate {
                    feature,
                    threshold: midpoint(here, next),
                    gain,
                });
            }
        }
    }
    best
}
