//! CART classification tree, Gini impurity.
//!
//! Split quality is compared exactly: minimising the weighted child Gini
//! `Σ_children n_k (1 − Σ_c p²)` is the same as maximising
//! `S_L/n_L + S_R/n_R` with `S = Σ_c count_c²`, and that ratio is compared in
//! integer arithmetic so equal-quality splits tie deterministically (lowest
//! feature, then lowest threshold).

use std::fmt;

use super::{ClassifierError, LabeledDataset, ModelKind, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtParams {
    pub min_leaf: usize,
}

impl Default for DtParams {
    fn default() -> Self {
        Self { min_leaf: 1 }
    }
}

impl fmt::Display for DtParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "dt min_leaf={}", self.min_leaf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    Leaf {
        class: usize,
    },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Nodes in creation order; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    pub nodes: Vec<TreeNode>,
}

impl TreeModel {
    pub fn predict_index(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { class } => return class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }
}

/// `numerator / denominator`, compared without rounding.
#[derive(Debug, Clone, Copy)]
struct Ratio {
    numerator: u128,
    denominator: u128,
}

impl Ratio {
    fn greater_than(self, other: Ratio) -> bool {
        self.numerator * other.denominator > other.numerator * self.denominator
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    quality: Ratio,
}

struct Grower<'a> {
    ds: &'a LabeledDataset,
    /// Column-major copy of the features.
    columns: Vec<f64>,
    classes: usize,
    min_leaf: usize,
    nodes: Vec<TreeNode>,
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &v) in counts.iter().enumerate() {
        if v > counts[best] {
            best = c;
        }
    }
    best
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

impl Grower<'_> {
    fn best_split(&self, samples: &[usize]) -> Option<Candidate> {
        let n = self.ds.len();
        let size = samples.len();
        let mut best: Option<Candidate> = None;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(size);
        let mut left = vec![0u64; self.classes];
        let mut right = vec![0u64; self.classes];

        for feature in 0..self.ds.dim() {
            let column = &self.columns[feature * n..(feature + 1) * n];
            pairs.clear();
            pairs.extend(samples.iter().map(|&i| (column[i], self.ds.targets()[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[size - 1].0 {
                continue;
            }
            left.iter_mut().for_each(|v| *v = 0);
            right.iter_mut().for_each(|v| *v = 0);
            for &(_, t) in &pairs {
                right[t] += 1;
            }
            let mut sq_left: u64 = 0;
            let mut sq_right: u64 = right.iter().map(|v| v * v).sum();
            for pos in 0..size - 1 {
                let t = pairs[pos].1;
                sq_left += 2 * left[t] + 1;
                left[t] += 1;
                sq_right -= 2 * right[t] - 1;
                right[t] -= 1;
                let (lo, hi) = (pairs[pos].0, pairs[pos + 1].0);
                if lo == hi {
                    continue;
                }
                let n_left = (pos + 1) as u128;
                let n_right = (size - pos - 1) as u128;
                let quality = Ratio {
                    numerator: sq_left as u128 * n_right + sq_right as u128 * n_left,
                    denominator: n_left * n_right,
                };
                if best.is_none_or(|b| quality.greater_than(b.quality)) {
                    best = Some(Candidate {
                        feature,
                        threshold: midpoint(lo, hi),
                        quality,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, samples: Vec<usize>) -> usize {
        let mut counts = vec![0usize; self.classes];
        for &i in &samples {
            counts[self.ds.targets()[i]] += 1;
        }
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            class: majority(&counts),
        });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || samples.len() <= self.min_leaf {
            return id;
        }
        let Some(split) = self.best_split(&samples) else {
            return id;
        };
        let n = self.ds.len();
        let column = &self.columns[split.feature * n..(split.feature + 1) * n];
        let (go_left, go_right): (Vec<usize>, Vec<usize>) =
            samples.into_iter().partition(|&i| column[i] <= split.threshold);
        let left = self.grow(go_left);
        let right = self.grow(go_right);
        self.nodes[id] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

pub fn train_dt(ds: &LabeledDataset, params: &DtParams) -> Result<TrainedModel, ClassifierError> {
    if params.min_leaf == 0 {
        return Err(ClassifierError::InvalidHyperparameter(
            "dt min_leaf must be positive".into(),
        ));
    }
    let (n, d) = (ds.len(), ds.dim());
    let mut columns = vec![0.0; n * d];
    for i in 0..n {
        for (j, &v) in ds.row(i).iter().enumerate() {
            columns[j * n + i] = v;
        }
    }
    let mut grower = Grower {
        ds,
        columns,
        classes: ds.class_count(),
        min_leaf: params.min_leaf,
        nodes: Vec::new(),
    };
    grower.grow((0..n).collect());
    let model = TreeModel { nodes: grower.nodes };
    Ok(TrainedModel::new(ds, params.to_string(), ModelKind::Dt(model)))
}
