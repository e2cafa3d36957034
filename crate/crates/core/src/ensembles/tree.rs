//! Axis-aligned decision trees: a classification grower (impurity
//! criteria, random feature subsets per split) and a regression grower
//! (variance-reduction splits, Newton leaf values) shared by the forest
//! and boosting modules.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Criterion;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Visit every leaf with the rows routed to it.
    pub fn leaf_rows(&self, x: &[Vec<f64>], rows: &[usize]) -> Vec<(usize, Vec<usize>)> {
        let mut buckets: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for &r in rows {
            let mut idx = 0;
            loop {
                match &self.nodes[idx] {
                    Node::Leaf { .. } => break,
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        idx = if x[r][*feature] <= *threshold {
                            *left
                        } else {
                            *right
                        };
                    }
                }
            }
            buckets.entry(idx).or_default().push(r);
        }
        buckets.into_iter().collect()
    }
}

/// Sample `k` distinct indices from `0..n` (partial Fisher-Yates). The
/// result preserves sampling order.
pub(super) fn sample_indices(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    use rand::Rng;
    let mut pool: Vec<usize> = (0..n).collect();
    let k = k.min(n);
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
        out.push(pool[i]);
    }
    out
}

// ---------------------------------------------------------------------------
// classification
// ---------------------------------------------------------------------------

pub(super) struct ClassParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    /// Candidate features drawn fresh per split.
    pub n_candidate_features: usize,
    pub criterion: Criterion,
}

fn impurity(pos: f64, total: f64, criterion: Criterion) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let p = pos / total;
    match criterion {
        Criterion::Gini => 2.0 * p * (1.0 - p),
        Criterion::Entropy => {
            let mut h = 0.0;
            if p > 0.0 {
                h -= p * p.ln();
            }
            if p < 1.0 {
                h -= (1.0 - p) * (1.0 - p).ln();
            }
            h
        }
    }
}

/// Grow a classification tree on the given rows. Leaf values are
/// positive-class frequencies.
pub(super) fn grow_classification(
    x: &[Vec<f64>],
    y: &[u8],
    rows: Vec<usize>,
    params: &ClassParams,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let n_features = x.first().map_or(0, Vec::len);
    let mut nodes = Vec::new();
    grow_class_node(x, y, rows, 0, params, n_features, rng, &mut nodes);
    Tree { nodes }
}

#[allow(clippy::too_many_arguments)]
fn grow_class_node(
    x: &[Vec<f64>],
    y: &[u8],
    rows: Vec<usize>,
    depth: usize,
    params: &ClassParams,
    n_features: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    let total = rows.len() as f64;
    let pos = rows.iter().filter(|&&r| y[r] == 1).count() as f64;
    let node_impurity = impurity(pos, total, params.criterion);

    let make_leaf = |nodes: &mut Vec<Node>| {
        let idx = nodes.len();
        nodes.push(Node::Leaf { value: pos / total });
        idx
    };

    if depth >= params.max_depth
        || rows.len() < params.min_samples_split
        || node_impurity <= 0.0
        || n_features == 0
    {
        return make_leaf(nodes);
    }

    let candidates = sample_indices(rng, n_features, params.n_candidate_features);
    let best = find_best_class_split(x, y, &rows, &candidates, node_impurity, params);
    let Some((feature, threshold)) = best else {
        return make_leaf(nodes);
    };

    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.into_iter().partition(|&r| x[r][feature] <= threshold);

    let idx = nodes.len();
    nodes.push(Node::Split {
        feature,
        threshold,
        left: 0,
        right: 0,
    });
    let left = grow_class_node(x, y, left_rows, depth + 1, params, n_features, rng, nodes);
    let right = grow_class_node(x, y, right_rows, depth + 1, params, n_features, rng, nodes);
    nodes[idx] = Node::Split {
        feature,
        threshold,
        left,
        right,
    };
    idx
}

fn find_best_class_split(
    x: &[Vec<f64>],
    y: &[u8],
    rows: &[usize],
    candidates: &[usize],
    node_impurity: f64,
    params: &ClassParams,
) -> Option<(usize, f64)> {
    let total = rows.len() as f64;
    let mut best: Option<(f64, usize, f64)> = None;
    for &feature in candidates {
        let mut pairs: Vec<(f64, u8)> = rows.iter().map(|&r| (x[r][feature], y[r])).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature values"));
        let total_pos = pairs.iter().filter(|(_, l)| *l == 1).count() as f64;

        let mut left_n = 0.0;
        let mut left_pos = 0.0;
        for i in 0..pairs.len() - 1 {
            left_n += 1.0;
            left_pos += f64::from(pairs[i].1);
            if pairs[i].0 == pairs[i + 1].0 {
                continue;
            }
            let right_n = total - left_n;
            if (left_n as usize) < params.min_samples_leaf
                || (right_n as usize) < params.min_samples_leaf
            {
                continue;
            }
            let gain = node_impurity
                - (left_n * impurity(left_pos, left_n, params.criterion)
                    + right_n * impurity(total_pos - left_pos, right_n, params.criterion))
                    / total;
            if gain > 1e-12 && best.as_ref().is_none_or(|(b, _, _)| gain > *b) {
                let threshold = 0.5 * (pairs[i].0 + pairs[i + 1].0);
                best = Some((gain, feature, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

// ---------------------------------------------------------------------------
// regression (for boosting)
// ---------------------------------------------------------------------------

pub(super) struct RegParams {
    pub max_depth: usize,
    /// Candidate features per depth level (column subsampling by level).
    pub level_features: Vec<Vec<usize>>,
}

/// Grow a regression tree on gradient/hessian targets. Splits maximize the
/// squared-sum gain ((Σg)²/n per side); leaves take the Newton step
/// Σg / (Σh + ε).
pub(super) fn grow_regression(
    x: &[Vec<f64>],
    gradient: &[f64],
    hessian: &[f64],
    rows: Vec<usize>,
    params: &RegParams,
) -> Tree {
    let mut nodes = Vec::new();
    grow_reg_node(x, gradient, hessian, rows, 0, params, &mut nodes);
    Tree { nodes }
}

fn grow_reg_node(
    x: &[Vec<f64>],
    gradient: &[f64],
    hessian: &[f64],
    rows: Vec<usize>,
    depth: usize,
    params: &RegParams,
    nodes: &mut Vec<Node>,
) -> usize {
    let sum_g: f64 = rows.iter().map(|&r| gradient[r]).sum();
    let sum_h: f64 = rows.iter().map(|&r| hessian[r]).sum();
    let make_leaf = |nodes: &mut Vec<Node>| {
        let idx = nodes.len();
        nodes.push(Node::Leaf {
            value: sum_g / (sum_h + 1e-12),
        });
        idx
    };
    if depth >= params.max_depth || rows.len() < 2 {
        return make_leaf(nodes);
    }
    let candidates = &params.level_features[depth.min(params.level_features.len() - 1)];
    let best = find_best_reg_split(x, gradient, &rows, candidates, sum_g);
    let Some((feature, threshold)) = best else {
        return make_leaf(nodes);
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.into_iter().partition(|&r| x[r][feature] <= threshold);
    let idx = nodes.len();
    nodes.push(Node::Split {
        feature,
        threshold,
        left: 0,
        right: 0,
    });
    let left = grow_reg_node(x, gradient, hessian, left_rows, depth + 1, params, nodes);
    let right = grow_reg_node(x, gradient, hessian, right_rows, depth + 1, params, nodes);
    nodes[idx] = Node::Split {
        feature,
        threshold,
        left,
        right,
    };
    idx
}

fn find_best_reg_split(
    x: &[Vec<f64>],
    gradient: &[f64],
    rows: &[usize],
    candidates: &[usize],
    sum_g: f64,
) -> Option<(usize, f64)> {
    let total = rows.len() as f64;
    let parent_score = sum_g * sum_g / total;
    let mut best: Option<(f64, usize, f64)> = None;
    for &feature in candidates {
        let mut pairs: Vec<(f64, f64)> =
            rows.iter().map(|&r| (x[r][feature], gradient[r])).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature values"));
        let mut left_n = 0.0;
        let mut left_g = 0.0;
        for i in 0..pairs.len() - 1 {
            left_n += 1.0;
            left_g += pairs[i].1;
            if pairs[i].0 == pairs[i + 1].0 {
                continue;
            }
            let right_n = total - left_n;
            let right_g = sum_g - left_g;
            let gain = left_g * left_g / left_n + right_g * right_g / right_n - parent_score;
            if gain > 1e-12 && best.as_ref().is_none_or(|(b, _, _)| gain > *b) {
                let threshold = 0.5 * (pairs[i].0 + pairs[i + 1].0);
                best = Some((gain, feature, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    #[test]
    fn sampled_indices_are_distinct_and_deterministic() {
        let mut rng = rng_from(5);
        let picked = sample_indices(&mut rng, 10, 4);
        assert_eq!(picked.len(), 4);
        let mut sorted = picked.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 4);
        let mut rng2 = rng_from(5);
        assert_eq!(picked, sample_indices(&mut rng2, 10, 4));
    }

    #[test]
    fn pure_nodes_become_pure_leaves() {
        let x = vec![vec![0.0], vec![0.0], vec![1.0], vec![1.0]];
        let y = vec![0, 0, 1, 1];
        let params = ClassParams {
            max_depth: 4,
            min_samples_leaf: 1,
            min_samples_split: 2,
            n_candidate_features: 1,
            criterion: Criterion::Entropy,
        };
        let mut rng = rng_from(1);
        let tree = grow_classification(&x, &y, vec![0, 1, 2, 3], &params, &mut rng);
        assert_eq!(tree.predict_row(&[0.0]), 0.0);
        assert_eq!(tree.predict_row(&[1.0]), 1.0);
        // Threshold lies strictly between the observed values.
        if let Node::Split { threshold, .. } = tree.nodes[0] {
            assert!(threshold > 0.0 && threshold < 1.0);
        } else {
            panic!("expected a split at the root");
        }
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![f64::from(i)]).collect();
        let y: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        let params = ClassParams {
            max_depth: 10,
            min_samples_leaf: 4,
            min_samples_split: 8,
            n_candidate_features: 1,
            criterion: Criterion::Gini,
        };
        let mut rng = rng_from(2);
        let rows: Vec<usize> = (0..20).collect();
        let tree = grow_classification(&x, &y, rows.clone(), &params, &mut rng);
        for (_, leaf_rows) in tree.leaf_rows(&x, &rows) {
            assert!(leaf_rows.len() >= 4, "leaf with {} rows", leaf_rows.len());
        }
    }

    #[test]
    fn regression_leaf_takes_newton_step() {
        let x = vec![vec![0.0], vec![1.0]];
        let g = vec![0.5, -0.25];
        let h = vec![0.25, 0.1875];
        let params = RegParams {
            max_depth: 1,
            level_features: vec![vec![0]],
        };
        let tree = grow_regression(&x, &g, &h, vec![0, 1], &params);
        let left = tree.predict_row(&[0.0]);
        let right = tree.predict_row(&[1.0]);
        assert!((left - 0.5 / 0.25).abs() < 1e-9);
        assert!((right - (-0.25) / 0.1875).abs() < 1e-9);
    }
}
