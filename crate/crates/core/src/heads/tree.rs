//! CART decision tree with Gini impurity.

use serde::{Deserialize, Serialize};

use super::{check_training_set, FeatureVector, HeadError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class: usize,
        counts: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Preorder; the root is `nodes[root]`.
    pub nodes: Vec<Node>,
    pub root: usize,
    pub num_classes: usize,
    pub max_depth: usize,
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

struct Split {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

struct Builder<'a> {
    features: &'a [FeatureVector],
    labels: &'a [usize],
    num_classes: usize,
    max_depth: usize,
    min_samples_split: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        for &i in idx {
            c[self.labels[i]] += 1;
        }
        c
    }

    /// Lowest weighted Gini over every feature and midpoint; ties keep the
    /// earlier (feature, threshold).
    fn best_split(&self, idx: &[usize]) -> Option<Split> {
        let n = idx.len();
        let total = self.counts(idx);
        let mut best: Option<Split> = None;
        let mut order = idx.to_vec();
        for feature in 0..self.features[0].dim() {
            order.sort_by(|&a, &b| self.features[a].0[feature].total_cmp(&self.features[b].0[feature]));
            let mut left = vec![0; self.num_classes];
            for pos in 0..n - 1 {
                left[self.labels[order[pos]]] += 1;
                let a = self.features[order[pos]].0[feature];
                let b = self.features[order[pos + 1]].0[feature];
                if a == b {
                    continue;
                }
                let mut threshold = a + (b - a) / 2.0;
                if !(threshold >= a && threshold < b) {
                    threshold = a;
                }
                let nl = pos + 1;
                let nr = n - nl;
                let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
                let impurity = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
                if best.as_ref().is_none_or(|s| impurity < s.impurity) {
                    best = Some(Split {
                        feature,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: &[usize], depth: usize) -> usize {
        let counts = self.counts(idx);
        let slot = self.nodes.len();
        let leaf = Node::Leaf {
            class: majority(&counts),
            counts: counts.clone(),
        };
        self.nodes.push(leaf);
        let parent = gini(&counts, idx.len());
        if parent == 0.0 || depth >= self.max_depth || idx.len() < self.min_samples_split {
            return slot;
        }
        let Some(split) = self.best_split(idx) else {
            return slot;
        };
        // zero-gain splits are kept: XOR-like structure only pays off one level down
        if split.impurity > parent + 1e-12 {
            return slot;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.features[i].0[split.feature] <= split.threshold);
        let left = self.grow(&l, depth + 1);
        let right = self.grow(&r, depth + 1);
        self.nodes[slot] = Node::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        slot
    }
}

/// Greedy CART. A node stays a leaf when it is pure, at `max_depth`, has
/// fewer than `min_samples_split` samples, or admits no split.
pub fn train_dt(
    features: &[FeatureVector],
    labels: &[usize],
    max_depth: usize,
    min_samples_split: usize,
) -> Result<DecisionTree, HeadError> {
    check_training_set(features, labels)?;
    let num_classes = labels.iter().max().map_or(2, |&m| (m + 1).max(2));
    let mut b = Builder {
        features,
        labels,
        num_classes,
        max_depth,
        min_samples_split,
        nodes: Vec::new(),
    };
    let all: Vec<usize> = (0..features.len()).collect();
    let root = b.grow(&all, 0);
    Ok(DecisionTree {
        nodes: b.nodes,
        root,
        num_classes,
        max_depth,
    })
}

pub fn dt_predict(tree: &DecisionTree, x: &FeatureVector) -> Result<usize, HeadError> {
    match &tree.nodes[tree.route(x)?] {
        Node::Leaf { class, .. } => Ok(*class),
        Node::Internal { .. } => unreachable!("route ends at a leaf"),
    }
}

impl DecisionTree {
    /// Index of the leaf `x` lands in; equality goes left.
    pub fn route(&self, x: &FeatureVector) -> Result<usize, HeadError> {
        let need = self.min_dim();
        if x.dim() < need {
            return Err(HeadError::DimensionMismatch {
                expected: need,
                got: x.dim(),
            });
        }
        let mut at = self.root;
        loop {
            match &self.nodes[at] {
                Node::Leaf { .. } => return Ok(at),
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x.0[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Smallest feature dimension the tree can route.
    pub fn min_dim(&self) -> usize {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Internal { feature, .. } => Some(feature + 1),
                Node::Leaf { .. } => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Longest root-to-leaf edge count.
    pub fn depth(&self) -> usize {
        fn walk(t: &DecisionTree, at: usize) -> usize {
            match &t.nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Internal { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, self.root)
    }

    /// Checks that the node graph is a proper binary tree within `max_depth`.
    pub fn validate(&self) -> Result<(), HeadError> {
        let bad = |s: String| Err(HeadError::Malformed(s));
        if self.root >= self.nodes.len() {
            return bad(format!("root {} out of range", self.root));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![(self.root, 0usize)];
        while let Some((at, depth)) = stack.pop() {
            if seen[at] {
                return bad(format!("node {at} reached twice"));
            }
            seen[at] = true;
            if depth > self.max_depth {
                return bad(format!("depth {depth} exceeds max_depth {}", self.max_depth));
            }
            match &self.nodes[at] {
                Node::Leaf { class, counts } => {
                    if *class >= self.num_classes || counts.len() != self.num_classes {
                        return bad(format!("leaf {at} has an invalid class"));
                    }
                }
                Node::Internal {
                    threshold, left, right, ..
                } => {
                    if !threshold.is_finite() {
                        return bad(format!("node {at} has a non-finite threshold"));
                    }
                    for &child in [left, right] {
                        if child >= self.nodes.len() {
                            return bad(format!("node {at} points at missing node {child}"));
                        }
                        stack.push((child, depth + 1));
                    }
                }
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return bad(format!("node {orphan} is unreachable"));
        }
        Ok(())
    }
}
