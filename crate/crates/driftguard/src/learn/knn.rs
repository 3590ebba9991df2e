//! k-nearest-neighbor prediction over raw (unscaled) feature vectors.
//!
//! Distances are Euclidean. Neighbor ties at equal distance resolve to the
//! earlier training row, so predictions are reproducible. Features are
//! deliberately not normalized, which lets large-magnitude dimensions such
//! as port numbers dominate the metric.

use crate::featurize::FEATURE_DIM;
use crate::types::Label;

fn dist2(a: &[f64; FEATURE_DIM], b: &[f64; FEATURE_DIM]) -> f64 {
    let mut sum = 0.0;
    for i in 0..FEATURE_DIM {
        let d = a[i] - b[i];
        sum += d * d;
    }
    sum
}

/// Unweighted majority over the `k` nearest points (all points when the
/// training set is smaller than `k`). An even effective `k` can tie; ties
/// resolve to benign, matching the tree learners. The score is the
/// malicious share of the vote.
pub(crate) fn knn_predict(
    points: &[[f64; FEATURE_DIM]],
    labels: &[Label],
    k: usize,
    query: &[f64; FEATURE_DIM],
) -> (Label, f64) {
    debug_assert!(!points.is_empty());
    let mut ranked: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (dist2(p, query), i))
        .collect();
    ranked.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let k_eff = k.max(1).min(points.len());
    let malicious = ranked[..k_eff]
        .iter()
        .filter(|&&(_, i)| labels[i].is_malicious())
        .count();
    let label = if 2 * malicious > k_eff {
        Label::Malicious
    } else {
        Label::Benign
    };
    (label, malicious as f64 / k_eff as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(x: f64) -> [f64; FEATURE_DIM] {
        let mut p = [0.0; FEATURE_DIM];
        p[0] = x;
        p
    }

    /// Five 1-D points, two benign near zero and three malicious: with
    /// k = 5 the whole set votes, so the majority is malicious everywhere.
    #[test]
    fn five_point_majority_is_malicious_everywhere() {
        let points: Vec<_> = [0.0, 1.0, 2.0, 10.0, 11.0]
            .iter()
            .map(|&x| point(x))
            .collect();
        let labels = vec![
            Label::Benign,
            Label::Benign,
            Label::Malicious,
            Label::Malicious,
            Label::Malicious,
        ];
        for x in [-100.0, 0.0, 1.5, 10.0, 500.0] {
            let (label, score) = knn_predict(&points, &labels, 5, &point(x));
            assert_eq!(label, Label::Malicious);
            assert_eq!(score, 0.6);
        }
    }

    #[test]
    fn k_one_follows_the_nearest_point() {
        let points: Vec<_> = [0.0, 10.0].iter().map(|&x| point(x)).collect();
        let labels = vec![Label::Benign, Label::Malicious];
        assert_eq!(
            knn_predict(&points, &labels, 1, &point(1.0)).0,
            Label::Benign
        );
        assert_eq!(
            knn_predict(&points, &labels, 1, &point(9.0)).0,
            Label::Malicious
        );
    }

    #[test]
    fn equal_distances_prefer_earlier_training_rows() {
        // Query sits exactly between a benign and a malicious point; with
        // k = 1 the earlier (benign) row wins the neighbor slot.
        let points: Vec<_> = [0.0, 2.0].iter().map(|&x| point(x)).collect();
        let labels = vec![Label::Benign, Label::Malicious];
        let (label, score) = knn_predict(&points, &labels, 1, &point(1.0));
        assert_eq!(label, Label::Benign);
        assert_eq!(score, 0.0);
    }

    #[test]
    fn k_larger_than_dataset_uses_all_points() {
        let points: Vec<_> = [0.0, 1.0, 2.0].iter().map(|&x| point(x)).collect();
        let labels = vec![Label::Malicious, Label::Malicious, Label::Benign];
        let (label, score) = knn_predict(&points, &labels, 50, &point(0.0));
        assert_eq!(label, Label::Malicious);
        assert!((score - 2.0 / 3.0).abs() < 1e-12);
    }
}
