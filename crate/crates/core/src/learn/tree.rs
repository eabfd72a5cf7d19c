//! Greedy binary regression trees on presorted columns.
//!
//! One builder serves plain CART (squared error, leaf = mean) and the
//! second-order boosting trees (gain with λ/γ, leaf = −G/(H+λ)). With unit
//! hessians and λ = 0 the two split scores coincide.

use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

/// Flat node array, root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree { nodes: vec![Node::Leaf { value }] }
    }

    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    /// `None` grows until the other stopping rules apply.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features drawn per node; `None` uses all of them.
    pub feature_subset_size: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: None, min_leaf: 1, feature_subset_size: None }
    }
}

/// How splits are scored and leaves valued.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Objective {
    /// Squared error; `stats` are targets.
    SquaredError,
    /// Newton step on gradients `g` with unit hessians.
    Newton { lambda: f64, gamma: f64 },
}

impl Objective {
    fn leaf_value(&self, sum: f64, count: f64) -> f64 {
        match *self {
            Objective::SquaredError => sum / count,
            Objective::Newton { lambda, .. } => -sum / (count + lambda),
        }
    }
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    stats: &'a [f64],
    params: &'a TreeParams,
    objective: Objective,
    rng: &'a mut ChaCha8Rng,
    nodes: Vec<Node>,
    /// Scratch flag per sample row: goes left at the current split.
    goes_left: Vec<bool>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
    n_left: usize,
}

/// Midpoint between two distinct sorted values that still separates them.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

impl Builder<'_> {
    /// `sorted[f]` lists the node's sample positions ordered by feature `f`
    /// (ties by position). `rows` maps a position to its row in `x`.
    fn grow(&mut self, rows: &[usize], sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let members = &sorted[0];
        let n = members.len();
        let sum: f64 = members.iter().map(|&p| self.stats[p]).sum();
        let leaf_value = self.objective.leaf_value(sum, n as f64);
        self.nodes[idx] = Node::Leaf { value: leaf_value };

        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        let min_leaf = self.params.min_leaf.max(1);
        if !depth_ok || n < 2 * min_leaf {
            return idx;
        }
        if let Objective::SquaredError = self.objective {
            let first = self.stats[members[0]];
            if members.iter().all(|&p| self.stats[p] == first) {
                return idx;
            }
        }
        let Some(best) = self.best_split(rows, &sorted, sum, min_leaf) else { return idx };

        for &p in &sorted[best.feature][..best.n_left] {
            self.goes_left[p] = true;
        }
        let mut left_sorted = Vec::with_capacity(sorted.len());
        let mut right_sorted = Vec::with_capacity(sorted.len());
        for list in sorted {
            let (l, r): (Vec<usize>, Vec<usize>) = list.into_iter().partition(|&p| self.goes_left[p]);
            left_sorted.push(l);
            right_sorted.push(r);
        }
        for &p in &left_sorted[0] {
            self.goes_left[p] = false;
        }
        let left = self.grow(rows, left_sorted, depth + 1);
        let right = self.grow(rows, right_sorted, depth + 1);
        self.nodes[idx] = Node::Split { feature: best.feature, threshold: best.threshold, left, right };
        idx
    }

    fn best_split(&mut self, rows: &[usize], sorted: &[Vec<usize>], sum: f64, min_leaf: usize) -> Option<BestSplit> {
        let n_features = self.x.ncols();
        let features: Vec<usize> = match self.params.feature_subset_size {
            Some(k) if k < n_features => {
                let mut f = sample(self.rng, n_features, k.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..n_features).collect(),
        };
        let n = sorted[0].len();
        let mean = sum / n as f64;
        // gains within `tol` of each other count as ties
        let scale: f64 = match self.objective {
            Objective::SquaredError => sorted[0].iter().map(|&p| (self.stats[p] - mean).powi(2)).sum(),
            Objective::Newton { .. } => sorted[0].iter().map(|&p| self.stats[p].powi(2)).sum(),
        };
        let tol = 1e-12 * scale;
        let mut best: Option<BestSplit> = None;
        for &f in &features {
            let order = &sorted[f];
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                let p = order[k];
                left_sum += self.stats[p];
                let nl = k + 1;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let a = self.x[[rows[p], f]];
                let b = self.x[[rows[order[k + 1]], f]];
                if a == b {
                    continue;
                }
                let gain = match self.objective {
                    Objective::SquaredError => {
                        let lc = left_sum - nl as f64 * mean;
                        lc * lc * (1.0 / nl as f64 + 1.0 / nr as f64)
                    }
                    Objective::Newton { lambda, gamma } => {
                        let right_sum = sum - left_sum;
                        0.5 * (left_sum * left_sum / (nl as f64 + lambda) + right_sum * right_sum / (nr as f64 + lambda)
                            - sum * sum / (n as f64 + lambda))
                            - gamma
                    }
                };
                if best.as_ref().is_none_or(|bs| gain > bs.gain + tol) {
                    best = Some(BestSplit { feature: f, threshold: midpoint(a, b), gain, n_left: nl });
                }
            }
        }
        best.filter(|b| b.gain > tol)
    }
}

/// Grows a tree over the sample rows `rows` (repeats allowed). `stats[p]`
/// is the target or gradient of sample position `p`.
pub(crate) fn grow_tree(
    x: ArrayView2<f64>,
    rows: &[usize],
    stats: &[f64],
    params: &TreeParams,
    objective: Objective,
    rng: &mut ChaCha8Rng,
) -> Tree {
    assert_eq!(rows.len(), stats.len());
    assert!(!rows.is_empty(), "cannot grow a tree on zero samples");
    let sorted: Vec<Vec<usize>> = (0..x.ncols())
        .map(|f| {
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.sort_by(|&a, &b| x[[rows[a], f]].total_cmp(&x[[rows[b], f]]).then(a.cmp(&b)));
            order
        })
        .collect();
    let mut b = Builder {
        x,
        stats,
        params,
        objective,
        rng,
        nodes: Vec::new(),
        goes_left: vec![false; rows.len()],
    };
    b.grow(rows, sorted, 0);
    Tree { nodes: b.nodes }
}

/// CART regression tree: squared-error splits at midpoints between distinct
/// sorted values, ties to the lowest feature then the lowest threshold.
pub fn fit_tree(x: ArrayView2<f64>, y: &[f64], params: &TreeParams, rng: &mut ChaCha8Rng) -> Tree {
    assert_eq!(x.nrows(), y.len());
    let rows: Vec<usize> = (0..y.len()).collect();
    grow_tree(x, &rows, y, params, Objective::SquaredError, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    fn sse(tree: &Tree, x: &Array2<f64>, y: &[f64]) -> f64 {
        y.iter().enumerate().map(|(i, &t)| (tree.predict(x.row(i).as_slice().unwrap()) - t).powi(2)).sum()
    }

    #[test]
    fn constant_targets_give_single_leaf() {
        let x = Array2::from_shape_fn((6, 2), |(i, j)| (i * 3 + j) as f64);
        let t = fit_tree(x.view(), &[2.5; 6], &TreeParams::default(), &mut rng());
        assert_eq!(t, Tree::leaf(2.5));
    }

    #[test]
    fn step_function_split() {
        let x = Array2::from_shape_vec((4, 1), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let t = fit_tree(x.view(), &[0.0, 0.0, 1.0, 1.0], &TreeParams::default(), &mut rng());
        assert_eq!(
            t.nodes,
            vec![
                Node::Split { feature: 0, threshold: 1.5, left: 1, right: 2 },
                Node::Leaf { value: 0.0 },
                Node::Leaf { value: 1.0 },
            ]
        );
    }

    #[test]
    fn single_sample_is_leaf() {
        let x = Array2::from_shape_vec((1, 3), vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(fit_tree(x.view(), &[7.0], &TreeParams::default(), &mut rng()), Tree::leaf(7.0));
    }

    #[test]
    fn ties_go_to_lowest_feature() {
        // both columns separate the targets identically
        let x = Array2::from_shape_vec((4, 2), vec![0.0, 10.0, 1.0, 11.0, 2.0, 12.0, 3.0, 13.0]).unwrap();
        let t = fit_tree(x.view(), &[0.0, 0.0, 1.0, 1.0], &TreeParams::default(), &mut rng());
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn midpoint_separates_adjacent_floats() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(a <= m && b > m);
    }

    #[test]
    fn depth_and_leaf_limits() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((200, 3), |_| r.random::<f64>());
        let y: Vec<f64> = (0..200).map(|i| x[[i, 0]] * 3.0 + x[[i, 1]].sin()).collect();
        let p = TreeParams { max_depth: Some(3), min_leaf: 5, feature_subset_size: None };
        let t = fit_tree(x.view(), &y, &p, &mut rng());
        assert!(t.depth() <= 3);
        let mut counts = vec![0usize; t.nodes.len()];
        for i in 0..200 {
            counts[t.leaf_index(x.row(i).as_slice().unwrap())] += 1;
        }
        for (i, n) in t.nodes.iter().enumerate() {
            if let Node::Leaf { .. } = n {
                assert!(counts[i] >= 5);
            }
        }
        // unlimited tree on distinct rows interpolates
        let full = fit_tree(x.view(), &y, &TreeParams::default(), &mut rng());
        assert!(sse(&full, &x, &y) < 1e-20);
    }

    proptest! {
        #[test]
        fn leaves_hold_their_training_means(seed in any::<u64>(), n in 2usize..40) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((n, 2), |_| (r.random_range(0..6)) as f64);
            let y: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
            let p = TreeParams { max_depth: Some(3), ..Default::default() };
            let t = fit_tree(x.view(), &y, &p, &mut rng());
            let mut acc = vec![(0.0, 0usize); t.nodes.len()];
            for i in 0..n {
                let l = t.leaf_index(x.row(i).as_slice().unwrap());
                acc[l].0 += y[i];
                acc[l].1 += 1;
            }
            for (i, node) in t.nodes.iter().enumerate() {
                if let Node::Leaf { value } = node {
                    prop_assert!(acc[i].1 > 0, "unreachable leaf");
                    prop_assert!((value - acc[i].0 / acc[i].1 as f64).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn affine_rescaling_invariance(seed in any::<u64>(), a in 0.01f64..100.0, b in -1e3f64..1e3) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((30, 3), |_| r.random::<f64>());
            let y: Vec<f64> = (0..30).map(|_| r.random::<f64>()).collect();
            let mut xs = x.clone();
            xs.column_mut(1).mapv_inplace(|v| a * v + b);
            let p = TreeParams { max_depth: Some(4), ..Default::default() };
            let t1 = fit_tree(x.view(), &y, &p, &mut rng());
            let t2 = fit_tree(xs.view(), &y, &p, &mut rng());
            for i in 0..30 {
                let p1 = t1.predict(x.row(i).as_slice().unwrap());
                let p2 = t2.predict(xs.row(i).as_slice().unwrap());
                prop_assert_eq!(p1, p2);
            }
        }
    }
}
