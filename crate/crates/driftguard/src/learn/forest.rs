//! Bagged ensemble of classification trees.
//!
//! Tree `t` draws its bootstrap sample and per-split feature subsets from
//! a stream seeded with `model_seed + t`, so a forest is reproducible
//! tree-by-tree no matter how training is scheduled.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::featurize::FEATURE_DIM;
use crate::learn::tree::{grow_tree, ClassTree};
use crate::learn::ForestParams;
use crate::types::Label;

pub(crate) fn train_forest(
    data: &[[f64; FEATURE_DIM]],
    labels: &[Label],
    params: &ForestParams,
    seed: u64,
) -> Vec<ClassTree> {
    let n = data.len();
    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let indices: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let max_features = params.max_features.clamp(1, FEATURE_DIM);
        let mut sampler = || -> Vec<usize> {
            if max_features == FEATURE_DIM {
                return (0..FEATURE_DIM).collect();
            }
            let mut picked =
                rand::seq::index::sample(&mut rng, FEATURE_DIM, max_features).into_vec();
            // Ascending order keeps the split tie-break (lower feature
            // index first) independent of sampling order.
            picked.sort_unstable();
            picked
        };
        trees.push(grow_tree(data, labels, indices, None, &mut sampler));
    }
    trees
}

/// Majority vote across trees; ties go to benign. The score is the
/// fraction of trees voting malicious.
pub(crate) fn forest_predict(trees: &[ClassTree], v: &[f64; FEATURE_DIM]) -> (Label, f64) {
    let malicious_votes = trees
        .iter()
        .filter(|t| t.predict(v).0 == Label::Malicious)
        .count();
    let label = if 2 * malicious_votes > trees.len() {
        Label::Malicious
    } else {
        Label::Benign
    };
    (label, malicious_votes as f64 / trees.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(x: f64) -> [f64; FEATURE_DIM] {
        let mut r = [0.0; FEATURE_DIM];
        for f in r.iter_mut() {
            *f = x;
        }
        r
    }

    fn separable() -> (Vec<[f64; FEATURE_DIM]>, Vec<Label>) {
        let data: Vec<_> = (0..20)
            .map(|i| {
                if i < 10 {
                    row(i as f64 / 10.0)
                } else {
                    row(5.0 + i as f64 / 10.0)
                }
            })
            .collect();
        let labels: Vec<_> = (0..20)
            .map(|i| {
                if i < 10 {
                    Label::Benign
                } else {
                    Label::Malicious
                }
            })
            .collect();
        (data, labels)
    }

    #[test]
    fn same_seed_same_forest() {
        let (data, labels) = separable();
        let params = ForestParams::default();
        let a = train_forest(&data, &labels, &params, 99);
        let b = train_forest(&data, &labels, &params, 99);
        assert_eq!(a, b);
    }

    #[test]
    fn different_seed_different_forest() {
        let (data, labels) = separable();
        let params = ForestParams::default();
        let a = train_forest(&data, &labels, &params, 99);
        let b = train_forest(&data, &labels, &params, 100);
        assert_ne!(a, b);
    }

    #[test]
    fn single_tree_forest_behaves_like_its_tree() {
        let (data, labels) = separable();
        let params = ForestParams {
            n_trees: 1,
            max_features: FEATURE_DIM,
            bootstrap: false,
        };
        let trees = train_forest(&data, &labels, &params, 7);
        assert_eq!(trees.len(), 1);
        for v in &data {
            assert_eq!(forest_predict(&trees, v).0, trees[0].predict(v).0);
        }
    }

    #[test]
    fn separable_data_is_classified_consistently() {
        let (data, labels) = separable();
        let trees = train_forest(&data, &labels, &ForestParams::default(), 42);
        for (v, want) in data.iter().zip(&labels) {
            let (got, score) = forest_predict(&trees, v);
            assert_eq!(got, *want);
            assert!((0.0..=1.0).contains(&score));
        }
    }
}
