//! CART regression trees grown by exhaustive variance-reduction splitting.
//!
//! Each node scans its candidate features in ascending index order and, per
//! feature, thresholds at the midpoints between consecutive distinct values
//! in ascending order. A candidate replaces the incumbent only if its
//! children's summed squared error is lower by more than a relative
//! tolerance, so ties go to the lowest feature, then the lowest threshold.
//! Rows with `x[feature] <= threshold` go left.
//!
//! Per-feature orderings are sorted once at the root and stably partitioned
//! down the tree, so each level costs `O(n_features * n_rows)`.

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;

use super::{ForestConfig, MaxFeatures};

/// Relative tolerance used both for tie-breaking and for the
/// "split must reduce squared error" test.
pub const SPLIT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A fitted tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn from_nodes(nodes: Vec<Node>) -> Option<Self> {
        let valid = !nodes.is_empty()
            && nodes.iter().enumerate().all(|(i, n)| match *n {
                Node::Leaf { value } => value.is_finite(),
                Node::Split {
                    left,
                    right,
                    threshold,
                    ..
                } => left > i && right > i && left < nodes.len() && right < nodes.len() && threshold.is_finite(),
            });
        valid.then_some(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Index of the leaf `x` is routed to.
    pub fn leaf_index(&self, x: ArrayView1<'_, f64>) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict_row(&self, x: ArrayView1<'_, f64>) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    /// Largest feature index used by any split, if any.
    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }
}

struct Pending {
    node: usize,
    /// For every feature, the node's sample slots ordered by
    /// `(feature value, slot)`.
    by_feature: Vec<Vec<u32>>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
}

/// Grow a tree on every row of `features`/`labels`.
pub fn fit_cart<R: Rng + ?Sized>(
    features: ArrayView2<'_, f64>,
    labels: &[f64],
    config: &ForestConfig,
    rng: &mut R,
) -> RegressionTree {
    let sample: Vec<usize> = (0..labels.len()).collect();
    fit_cart_on(features, labels, &sample, config, rng)
}

/// Grow a tree on the multiset of rows `sample` (a bootstrap resample may
/// repeat rows). Leaf values are means over the routed sample entries,
/// summed in sample order.
pub fn fit_cart_on<R: Rng + ?Sized>(
    features: ArrayView2<'_, f64>,
    labels: &[f64],
    sample: &[usize],
    config: &ForestConfig,
    rng: &mut R,
) -> RegressionTree {
    assert!(!sample.is_empty(), "fit_cart needs at least one row");
    let n_features = features.ncols();
    let value = |slot: u32, f: usize| features[(sample[slot as usize], f)];
    let label = |slot: u32| labels[sample[slot as usize]];

    let root_order: Vec<Vec<u32>> = (0..n_features)
        .map(|f| {
            let mut order: Vec<u32> = (0..sample.len() as u32).collect();
            order.sort_by(|&a, &b| value(a, f).total_cmp(&value(b, f)).then(a.cmp(&b)));
            order
        })
        .collect();

    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut stack = vec![Pending {
        node: 0,
        by_feature: root_order,
    }];
    let mut in_slot_order: Vec<u32> = Vec::new();
    let mut centered: Vec<f64> = vec![0.0; sample.len()];
    let mut goes_left: Vec<bool> = vec![false; sample.len()];

    while let Some(Pending { node, by_feature }) = stack.pop() {
        in_slot_order.clear();
        in_slot_order.extend_from_slice(&by_feature[0]);
        in_slot_order.sort_unstable();
        let m = in_slot_order.len();
        let mean = in_slot_order.iter().map(|&s| label(s)).sum::<f64>() / m as f64;

        let first = label(in_slot_order[0]);
        let pure = in_slot_order.iter().all(|&s| label(s) == first);
        let best = if pure || m < config.min_samples_split {
            None
        } else {
            for &s in &in_slot_order {
                centered[s as usize] = label(s) - mean;
            }
            let parent_sse: f64 = in_slot_order.iter().map(|&s| centered[s as usize].powi(2)).sum();
            let candidates = candidate_features(n_features, config.max_features, rng);
            best_split(&by_feature, &candidates, &centered, parent_sse, config.min_samples_leaf, &value)
        };

        let Some(split) = best else {
            nodes[node] = Node::Leaf { value: mean };
            continue;
        };

        for &s in &by_feature[0] {
            goes_left[s as usize] = value(s, split.feature) <= split.threshold;
        }
        let (left_lists, right_lists): (Vec<Vec<u32>>, Vec<Vec<u32>>) = by_feature
            .iter()
            .map(|order| order.iter().partition(|&&s| goes_left[s as usize]))
            .unzip();
        drop(by_feature);

        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[node] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        // Right is pushed first so the left subtree is grown first.
        stack.push(Pending {
            node: right,
            by_feature: right_lists,
        });
        stack.push(Pending {
            node: left,
            by_feature: left_lists,
        });
    }
    RegressionTree { nodes }
}

fn candidate_features<R: Rng + ?Sized>(n_features: usize, max: MaxFeatures, rng: &mut R) -> Vec<usize> {
    match max {
        MaxFeatures::All => (0..n_features).collect(),
        MaxFeatures::Count(k) if k >= n_features => (0..n_features).collect(),
        MaxFeatures::Count(k) => {
            let mut all: Vec<usize> = (0..n_features).collect();
            // Partial Fisher-Yates, then ascending for the tie rule.
            for i in 0..k {
                let j = rng.random_range(i..n_features);
                all.swap(i, j);
            }
            let mut chosen = all[..k].to_vec();
            chosen.sort_unstable();
            chosen
        }
    }
}

fn best_split(
    by_feature: &[Vec<u32>],
    candidates: &[usize],
    centered: &[f64],
    parent_sse: f64,
    min_leaf: usize,
    value: &dyn Fn(u32, usize) -> f64,
) -> Option<BestSplit> {
    let m = by_feature[0].len();
    let tol = SPLIT_TOLERANCE * parent_sse;
    let total: f64 = by_feature[0].iter().map(|&s| centered[s as usize]).sum();
    let mut best: Option<BestSplit> = None;
    let mut best_sse = parent_sse - tol;

    for &f in candidates {
        let order = &by_feature[f];
        let (mut sum_l, mut sq_l) = (0.0, 0.0);
        let sq_total: f64 = order.iter().map(|&s| centered[s as usize].powi(2)).sum();
        for i in 0..m - 1 {
            let c = centered[order[i] as usize];
            sum_l += c;
            sq_l += c * c;
            let (lo, hi) = (value(order[i], f), value(order[i + 1], f));
            if lo >= hi {
                continue;
            }
            let n_l = i + 1;
            let n_r = m - n_l;
            if n_l < min_leaf || n_r < min_leaf {
                continue;
            }
            let sum_r = total - sum_l;
            let sse = (sq_l - sum_l * sum_l / n_l as f64) + ((sq_total - sq_l) - sum_r * sum_r / n_r as f64);
            if sse < best_sse - if best.is_some() { tol } else { 0.0 } {
                let mut threshold = 0.5 * (lo + hi);
                if threshold >= hi {
                    threshold = lo;
                }
                best_sse = sse;
                best = Some(BestSplit { feature: f, threshold });
            }
        }
    }
    best
}
