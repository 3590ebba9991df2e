//! Gradient-boosted decision trees for binary classification with
//! logistic loss.
//!
//! Each stage fits a small regression tree to the current residuals
//! (label minus predicted probability); leaf values take a Newton step
//! (residual sum over hessian sum). Every stage sees the full dataset, so
//! boosting is deterministic and the model seed is irrelevant here.

use crate::featurize::FEATURE_DIM;
use crate::learn::GbdtParams;
use crate::types::Label;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum RegNode {
    Split {
        feature: u8,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Default)]
pub(crate) struct RegTree {
    pub(crate) nodes: Vec<RegNode>,
}

impl RegTree {
    fn leaf_of(&self, v: &[f64; FEATURE_DIM]) -> usize {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if v[usize::from(*feature)] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                RegNode::Leaf { .. } => return at,
            }
        }
    }

    pub(crate) fn predict(&self, v: &[f64; FEATURE_DIM]) -> f64 {
        match &self.nodes[self.leaf_of(v)] {
            RegNode::Leaf { value } => *value,
            RegNode::Split { .. } => unreachable!("leaf_of returns a leaf"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct GbdtModel {
    pub(crate) base_score: f64,
    pub(crate) learning_rate: f64,
    pub(crate) stages: Vec<RegTree>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl GbdtModel {
    /// Probability of the malicious class; the decision boundary is
    /// `score >= 0.5`, so a raw margin of exactly zero reads malicious.
    pub(crate) fn score(&self, v: &[f64; FEATURE_DIM]) -> f64 {
        let mut margin = self.base_score;
        for tree in &self.stages {
            margin += self.learning_rate * tree.predict(v);
        }
        sigmoid(margin)
    }

    pub(crate) fn predict(&self, v: &[f64; FEATURE_DIM]) -> (Label, f64) {
        let score = self.score(v);
        let label = if score >= 0.5 {
            Label::Malicious
        } else {
            Label::Benign
        };
        (label, score)
    }
}

struct RegSplit {
    feature: usize,
    threshold: f64,
}

/// Best variance-reducing split, or `None` when nothing reduces the sum
/// of squared errors. Shares the midpoint-threshold and tie-break rules
/// of the classification splitter.
fn best_reg_split(
    data: &[[f64; FEATURE_DIM]],
    targets: &[f64],
    indices: &[usize],
    sorted_scratch: &mut Vec<usize>,
) -> Option<RegSplit> {
    let n = indices.len();
    if n < 2 {
        return None;
    }
    let total_sum: f64 = indices.iter().map(|&i| targets[i]).sum();
    let total_sq: f64 = indices.iter().map(|&i| targets[i] * targets[i]).sum();
    let parent_sse = total_sq - total_sum * total_sum / n as f64;
    if parent_sse <= 1e-12 {
        return None;
    }

    let mut best_gain = 0.0f64;
    let mut best: Option<RegSplit> = None;
    // `feature` indexes the inner per-row arrays, not an iterable.
    #[allow(clippy::needless_range_loop)]
    for feature in 0..FEATURE_DIM {
        sorted_scratch.clear();
        sorted_scratch.extend_from_slice(indices);
        sorted_scratch.sort_unstable_by(|&a, &b| data[a][feature].total_cmp(&data[b][feature]));

        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for pos in 0..n - 1 {
            let i = sorted_scratch[pos];
            left_sum += targets[i];
            left_sq += targets[i] * targets[i];
            let here = data[i][feature];
            let next = data[sorted_scratch[pos + 1]][feature];
            if here == next {
                continue;
            }
            let left_n = (pos + 1) as f64;
            let right_n = (n - pos - 1) as f64;
            let right_sum = total_sum - left_sum;
            let right_sq = total_sq - left_sq;
            let sse = (left_sq - left_sum * left_sum / left_n)
                + (right_sq - right_sum * right_sum / right_n);
            let gain = parent_sse - sse;
            if gain > best_gain + 1e-12 {
                best_gain = gain;
                let mid = (here + next) / 2.0;
                best = Some(RegSplit {
                    feature,
                    threshold: if mid < next { mid } else { here },
                });
            }
        }
    }
    best
}

fn grow_reg_tree(
    data: &[[f64; FEATURE_DIM]],
    targets: &[f64],
    hessians: &[f64],
    indices: Vec<usize>,
    max_depth: u32,
) -> RegTree {
    enum Attach {
        Root,
        Left(usize),
        Right(usize),
    }
    let mut tree = RegTree { nodes: Vec::new() };
    let mut scratch = Vec::new();
    let mut work = vec![(indices, 0u32, Attach::Root)];
    while let Some((indices, depth, attach)) = work.pop() {
        let split = if depth >= max_depth {
            None
        } else {
            best_reg_split(data, targets, &indices, &mut scratch)
        };
        let node_idx = tree.nodes.len() as u32;
        match attach {
            Attach::Root => {}
            Attach::Left(p) => {
                if let RegNode::Split { left, .. } = &mut tree.nodes[p] {
                    *left = node_idx;
                }
            }
            Attach::Right(p) => {
                if let RegNode::Split { right, .. } = &mut tree.nodes[p] {
                    *right = node_idx;
                }
            }
        }
        match split {
            None => {
                // Newton step: residual sum over hessian sum.
                let num: f64 = indices.iter().map(|&i| targets[i]).sum();
                let den: f64 = indices.iter().map(|&i| hessians[i]).sum();
                let value = if den > 1e-16 { num / den } else { 0.0 };
                tree.nodes.push(RegNode::Leaf { value });
            }
            Some(s) => {
                tree.nodes.push(RegNode::Split {
                    feature: s.feature as u8,
                    threshold: s.threshold,
                    left: u32::MAX,
                    right: u32::MAX,
                });
                let parent = node_idx as usize;
                let (l, r): (Vec<usize>, Vec<usize>) = indices
                    .iter()
                    .partition(|&&i| data[i][s.feature] <= s.threshold);
                work.push((r, depth + 1, Attach::Right(parent)));
                work.push((l, depth + 1, Attach::Left(parent)));
            }
        }
    }
    tree
}

pub(crate) fn train_gbdt(
    data: &[[f64; FEATURE_DIM]],
    labels: &[Label],
    params: &GbdtParams,
) -> GbdtModel {
    let n = data.len();
    let y: Vec<f64> = labels
        .iter()
        .map(|l| if l.is_malicious() { 1.0 } else { 0.0 })
        .collect();
    let positive = y.iter().sum::<f64>() / n as f64;
    let p0 = positive.clamp(1e-12, 1.0 - 1e-12);
    let base_score = (p0 / (1.0 - p0)).ln();

    let mut margins = vec![base_score; n];
    let mut residuals = vec![0.0; n];
    let mut hessians = vec![0.0; n];
    let mut stages = Vec::with_capacity(params.n_stages);
    for _ in 0..params.n_stages {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            residuals[i] = y[i] - p;
            hessians[i] = p * (1.0 - p);
        }
        let tree = grow_reg_tree(
            data,
            &residuals,
            &hessians,
            (0..n).collect(),
            params.max_depth,
        );
        for i in 0..n {
            margins[i] += params.learning_rate * tree.predict(&data[i]);
        }
        stages.push(tree);
    }
    GbdtModel {
        base_score,
        learning_rate: params.learning_rate,
        stages,
    }
}
