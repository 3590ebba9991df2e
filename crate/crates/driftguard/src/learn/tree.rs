//! CART-style classification tree on an index arena.
//!
//! Growth is iterative (explicit work stack) so deep trees on large
//! datasets cannot overflow the thread stack. Rows with a feature value
//! `<= threshold` descend left. Leaves keep both class counts; the
//! majority wins with ties going to benign, and the malicious fraction
//! doubles as the score.

use crate::featurize::FEATURE_DIM;
use crate::learn::split::best_split;
use crate::types::Label;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum ClassNode {
    Split {
        feature: u8,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        benign: u32,
        malicious: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Default)]
pub(crate) struct ClassTree {
    pub(crate) nodes: Vec<ClassNode>,
}

impl ClassTree {
    /// Root is always node 0.
    pub(crate) fn predict(&self, v: &[f64; FEATURE_DIM]) -> (Label, f64) {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                ClassNode::Split {
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
                ClassNode::Leaf { benign, malicious } => {
                    let label = if malicious > benign {
                        Label::Malicious
                    } else {
                        Label::Benign
                    };
                    let total = benign + malicious;
                    let score = if total == 0 {
                        0.0
                    } else {
                        f64::from(*malicious) / f64::from(total)
                    };
                    return (label, score);
                }
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

enum Attach {
    Root,
    Left(usize),
    Right(usize),
}

struct WorkItem {
    indices: Vec<usize>,
    depth: u32,
    attach: Attach,
}

/// Grows a tree over `indices`. `feature_sampler` picks the candidate
/// feature set per split; plain trees pass all features, forests sample.
pub(crate) fn grow_tree(
    data: &[[f64; FEATURE_DIM]],
    labels: &[Label],
    indices: Vec<usize>,
    max_depth: Option<u32>,
    feature_sampler: &mut dyn FnMut() -> Vec<usize>,
) -> ClassTree {
    let mut tree = ClassTree { nodes: Vec::new() };
    let mut work = vec![WorkItem {
        indices,
        depth: 0,
        attach: Attach::Root,
    }];
    while let Some(item) = work.pop() {
        let malicious = item
            .indices
            .iter()
            .filter(|&&i| labels[i].is_malicious())
            .count() as u32;
        let benign = item.indices.len() as u32 - malicious;
        let depth_cap = max_depth.is_some_and(|d| item.depth >= d);
        let pure = benign == 0 || malicious == 0;

        let split = if pure || depth_cap || item.indices.len() < 2 {
            None
        } else {
            let features = feature_sampler();
            best_split(data, labels, &item.indices, &features)
        };

        let node_idx = tree.nodes.len() as u32;
        match &item.attach {
            Attach::Root => {}
            Attach::Left(parent) => {
                if let ClassNode::Split { left, .. } = &mut tree.nodes[*parent] {
                    *left = node_idx;
                }
            }
            Attach::Right(parent) => {
                if let ClassNode::Split { right, .. } = &mut tree.nodes[*parent] {
                    *right = node_idx;
                }
            }
        }

        match split {
            None => tree.nodes.push(ClassNode::Leaf { benign, malicious }),
            Some(s) => {
                tree.nodes.push(ClassNode::Split {
                    feature: s.feature as u8,
                    threshold: s.threshold,
                    left: u32::MAX,
                    right: u32::MAX,
                });
                let parent = node_idx as usize;
                let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = item
                    .indices
                    .iter()
                    .partition(|&&i| data[i][s.feature] <= s.threshold);
                work.push(WorkItem {
                    indices: right_idx,
                    depth: item.depth + 1,
                    attach: Attach::Right(parent),
                });
                work.push(WorkItem {
                    indices: left_idx,
                    depth: item.depth + 1,
                    attach: Attach::Left(parent),
                });
            }
        }
    }
    tree
}
