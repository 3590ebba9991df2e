//! Binary benign/malicious classifiers: k-NN, decision tree, random
//! forest, and gradient-boosted trees, plus evaluation metrics and the
//! model transfer codec.
//!
//! All four learners consume the same unscaled feature vectors. Parameter
//! defaults follow the usual library conventions: 5 neighbors for k-NN,
//! 100 trees with sqrt-of-features sampling for the forest, 100 stages at
//! learning rate 0.1 and depth 3 for boosting, and an unlimited-depth
//! Gini tree.

mod codec;
mod forest;
mod gbdt;
mod knn;
mod split;
mod tree;

pub use codec::{deserialize_model, serialize_model, CodecError};
pub use split::{best_split, SplitCandidate};

use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featurize::{ClassCounts, FeatureVector, LabeledDataset, FEATURE_DIM};
use crate::types::{Label, TimeWindow};

use self::gbdt::GbdtModel;
use self::tree::ClassTree;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlgorithmKind {
    Knn,
    DecisionTree,
    RandomForest,
    Gbdt,
}

impl FromStr for AlgorithmKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "knn" => Ok(AlgorithmKind::Knn),
            "dt" | "tree" => Ok(AlgorithmKind::DecisionTree),
            "rf" | "forest" => Ok(AlgorithmKind::RandomForest),
            "gbdt" => Ok(AlgorithmKind::Gbdt),
            other => Err(format!(
                "unknown algorithm {other:?} (expected knn, dt, rf, gbdt)"
            )),
        }
    }
}

impl std::fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AlgorithmKind::Knn => "knn",
            AlgorithmKind::DecisionTree => "dt",
            AlgorithmKind::RandomForest => "rf",
            AlgorithmKind::Gbdt => "gbdt",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 5 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate features per split; 3 = floor(sqrt(9)) for this schema.
    pub max_features: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_features: 3,
            bootstrap: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GbdtParams {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub max_depth: u32,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_stages: 100,
            learning_rate: 0.1,
            max_depth: 3,
        }
    }
}

/// Algorithm choice together with its parameters. Open for extension:
/// further classifiers can slot in behind the same train/predict surface.
#[derive(Clone, Copy, Debug, PartialEq)]
#[non_exhaustive]
pub enum Algorithm {
    Knn(KnnParams),
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    Gbdt(GbdtParams),
}

/// Everything `train` needs to know: the algorithm, its parameters, and
/// the seed that drives any sampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlgorithmSpec {
    pub algorithm: Algorithm,
    pub rng_seed: u64,
}

impl AlgorithmSpec {
    /// Spec with the conventional defaults for `kind`.
    pub fn with_defaults(kind: AlgorithmKind, rng_seed: u64) -> Self {
        let algorithm = match kind {
            AlgorithmKind::Knn => Algorithm::Knn(KnnParams::default()),
            AlgorithmKind::DecisionTree => Algorithm::DecisionTree(TreeParams::default()),
            AlgorithmKind::RandomForest => Algorithm::RandomForest(ForestParams::default()),
            AlgorithmKind::Gbdt => Algorithm::Gbdt(GbdtParams::default()),
        };
        AlgorithmSpec {
            algorithm,
            rng_seed,
        }
    }

    pub fn kind(&self) -> AlgorithmKind {
        match self.algorithm {
            Algorithm::Knn(_) => AlgorithmKind::Knn,
            Algorithm::DecisionTree(_) => AlgorithmKind::DecisionTree,
            Algorithm::RandomForest(_) => AlgorithmKind::RandomForest,
            Algorithm::Gbdt(_) => AlgorithmKind::Gbdt,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("feature schema mismatch: model {model:#018x}, vector {vector:#018x}")]
    SchemaMismatch { model: u64, vector: u64 },
    #[error("prediction/truth lengths differ: {preds} vs {truths}")]
    LengthMismatch { preds: usize, truths: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum ModelPayload {
    Knn {
        points: Vec<[f64; FEATURE_DIM]>,
        labels: Vec<Label>,
    },
    Tree(ClassTree),
    Forest(Vec<ClassTree>),
    Gbdt(GbdtModel),
}

/// A trained, serializable binary classifier with its provenance.
///
/// Prediction is pure: the same payload and input always produce the same
/// verdict, so models can be shared freely between threads.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionModel {
    pub spec: AlgorithmSpec,
    pub schema_hash: u64,
    /// Simulated time the model became available (its window's end).
    pub trained_at: f64,
    pub train_window: TimeWindow,
    pub class_counts: ClassCounts,
    /// Measured wall-clock training time. Not serialized; zero after a
    /// round trip through the transfer format.
    pub train_seconds: f64,
    pub(crate) payload: ModelPayload,
}

impl DetectionModel {
    /// True when the training window held only one class; such a model
    /// can only ever repeat that class.
    pub fn is_single_class(&self) -> bool {
        self.class_counts.is_single_class()
    }

    /// The label a single-class model always answers, if it is one.
    pub fn constant_label(&self) -> Option<Label> {
        if self.class_counts.malicious == 0 && self.class_counts.benign > 0 {
            Some(Label::Benign)
        } else if self.class_counts.benign == 0 && self.class_counts.malicious > 0 {
            Some(Label::Malicious)
        } else {
            None
        }
    }

    /// Classifies one feature vector, with a malicious-class score in
    /// `[0, 1]`.
    pub fn predict(&self, v: &FeatureVector) -> Result<(Label, f64), LearnError> {
        if v.schema_hash != self.schema_hash {
            return Err(LearnError::SchemaMismatch {
                model: self.schema_hash,
                vector: v.schema_hash,
            });
        }
        Ok(match &self.payload {
            ModelPayload::Knn { points, labels } => {
                let k = match self.spec.algorithm {
                    Algorithm::Knn(p) => p.k,
                    _ => unreachable!(),
                };
                knn::knn_predict(points, labels, k, &v.values)
            }
            ModelPayload::Tree(tree) => tree.predict(&v.values),
            ModelPayload::Forest(trees) => forest::forest_predict(trees, &v.values),
            ModelPayload::Gbdt(model) => model.predict(&v.values),
        })
    }
}

/// Trains a model on a labeled dataset. Single-class datasets still train
/// (the result is a constant predictor, flagged via
/// [`DetectionModel::is_single_class`]); whether to publish such a model
/// is the scheduler's call.
pub fn train(spec: &AlgorithmSpec, ds: &LabeledDataset) -> Result<DetectionModel, LearnError> {
    if ds.rows.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let schema = ds.rows[0].vector.schema_hash;
    let data: Vec<[f64; FEATURE_DIM]> = ds.rows.iter().map(|r| r.vector.values).collect();
    let labels: Vec<Label> = ds.rows.iter().map(|r| r.label).collect();

    let started = Instant::now();
    let payload = match &spec.algorithm {
        Algorithm::Knn(_) => ModelPayload::Knn {
            points: data,
            labels,
        },
        Algorithm::DecisionTree(p) => {
            let mut all_features = || (0..FEATURE_DIM).collect::<Vec<_>>();
            ModelPayload::Tree(tree::grow_tree(
                &data,
                &labels,
                (0..ds.rows.len()).collect(),
                p.max_depth,
                &mut all_features,
            ))
        }
        Algorithm::RandomForest(p) => {
            ModelPayload::Forest(forest::train_forest(&data, &labels, p, spec.rng_seed))
        }
        Algorithm::Gbdt(p) => ModelPayload::Gbdt(gbdt::train_gbdt(&data, &labels, p)),
    };
    let train_seconds = started.elapsed().as_secs_f64();

    Ok(DetectionModel {
        spec: *spec,
        schema_hash: schema,
        trained_at: ds.window.end,
        train_window: ds.window,
        class_counts: ds.class_counts,
        train_seconds,
        payload,
    })
}

/// Confusion counts and derived scores with malicious as the positive
/// class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when no positives exist on either side, making F1 undefined;
    /// the score is reported as zero in that case.
    pub degenerate: bool,
}

impl EvalMetrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let denom = 2 * tp + fp + fn_;
        let (f1, degenerate) = if denom == 0 {
            (0.0, true)
        } else {
            ((2 * tp) as f64 / denom as f64, false)
        };
        EvalMetrics {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            true_negatives: tn,
            precision,
            recall,
            f1,
            degenerate,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_positives + self.false_positives + self.false_negatives + self.true_negatives
    }
}

/// Scores predictions against ground truth.
pub fn f1_score(preds: &[Label], truths: &[Label]) -> Result<EvalMetrics, LearnError> {
    if preds.len() != truths.len() {
        return Err(LearnError::LengthMismatch {
            preds: preds.len(),
            truths: truths.len(),
        });
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut tn = 0;
    for (p, t) in preds.iter().zip(truths) {
        match (p.is_malicious(), t.is_malicious()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(EvalMetrics::from_counts(tp, fp, fn_, tn))
}
