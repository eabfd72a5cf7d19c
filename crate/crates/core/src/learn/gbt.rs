//! Second-order gradient boosting with squared loss.

use ndarray::ArrayView2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, Objective, Tree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    pub rounds: usize,
    pub learning_rate: f64,
    /// `None` for unlimited depth.
    pub max_depth: Option<usize>,
    pub lambda: f64,
    pub gamma: f64,
    pub min_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self { rounds: 150, learning_rate: 0.3, max_depth: Some(6), lambda: 1.0, gamma: 0.0, min_leaf: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbt {
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl Gbt {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().fold(self.base_score, |acc, t| acc + self.learning_rate * t.predict(x))
    }

    /// Prediction after the first `rounds` trees.
    pub fn predict_rounds(&self, x: &[f64], rounds: usize) -> f64 {
        self.trees[..rounds].iter().fold(self.base_score, |acc, t| acc + self.learning_rate * t.predict(x))
    }
}

/// Each round fits a tree to g = pred − y with unit hessians. Leaves hold
/// −G/(H+λ); splits need ½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)] − γ > 0.
pub fn fit_gbt(x: ArrayView2<f64>, y: &[f64], params: &GbtParams, seed: u64) -> Gbt {
    assert_eq!(x.nrows(), y.len());
    assert!(!y.is_empty(), "cannot boost on zero samples");
    let n = y.len();
    let base_score = y.iter().sum::<f64>() / n as f64;
    let rows: Vec<usize> = (0..n).collect();
    let tree_params = TreeParams { max_depth: params.max_depth, min_leaf: params.min_leaf, feature_subset_size: None };
    let objective = Objective::Newton { lambda: params.lambda, gamma: params.gamma };
    // all features are scanned, so the rng is never drawn from
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pred = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.rounds);
    for _ in 0..params.rounds {
        for i in 0..n {
            grad[i] = pred[i] - y[i];
        }
        let tree = grow_tree(x, &rows, &grad, &tree_params, objective, &mut rng);
        for (i, p) in pred.iter_mut().enumerate() {
            *p += params.learning_rate * tree.predict(x.row(i).as_slice().expect("standard layout"));
        }
        trees.push(tree);
    }
    Gbt { base_score, learning_rate: params.learning_rate, trees }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::tree::Node;
    use ndarray::Array2;
    use rand::Rng;

    fn data(n: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 3), |_| r.random::<f64>());
        let y = (0..n).map(|i| (4.0 * x[[i, 0]]).sin() + x[[i, 1]] * x[[i, 2]]).collect();
        (x, y)
    }

    #[test]
    fn single_leaf_weight() {
        // constant x cannot split, and G = 0 around the mean
        let x = Array2::zeros((4, 1));
        let p = GbtParams { rounds: 1, lambda: 1.0, ..Default::default() };
        let m = fit_gbt(x.view(), &[1.0, 1.0, 0.0, 0.0], &p, 0);
        assert_eq!(m.trees[0], Tree::leaf(0.0));
        // leaf weight rule itself: G = −2 over four rows, λ = 1
        let g = [-0.5; 4];
        let t = grow_tree(
            x.view(),
            &[0, 1, 2, 3],
            &g,
            &TreeParams::default(),
            Objective::Newton { lambda: 1.0, gamma: 0.0 },
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(t, Tree::leaf(0.4));
    }

    #[test]
    fn one_full_round_interpolates() {
        let (x, y) = data(60, 1);
        let p = GbtParams { rounds: 1, learning_rate: 1.0, lambda: 0.0, max_depth: None, ..Default::default() };
        let m = fit_gbt(x.view(), &y, &p, 0);
        for i in 0..60 {
            let got = m.predict(x.row(i).as_slice().unwrap());
            assert!((got - y[i]).abs() < 1e-12, "{got} vs {}", y[i]);
        }
    }

    #[test]
    fn training_sse_non_increasing() {
        let (x, y) = data(200, 2);
        let m = fit_gbt(x.view(), &y, &GbtParams::default(), 0);
        let mut prev = f64::INFINITY;
        for r in 0..=150 {
            let sse: f64 = (0..200).map(|i| (m.predict_rounds(x.row(i).as_slice().unwrap(), r) - y[i]).powi(2)).sum();
            assert!(sse <= prev * (1.0 + 1e-12), "round {r}: {sse} > {prev}");
            prev = sse;
        }
    }

    #[test]
    fn leaf_weights_match_their_rows() {
        let (x, y) = data(150, 3);
        let p = GbtParams { rounds: 20, ..Default::default() };
        let m = fit_gbt(x.view(), &y, &p, 0);
        let mut pred = vec![m.base_score; 150];
        for t in &m.trees {
            let mut acc = vec![(0.0, 0.0); t.nodes.len()];
            for i in 0..150 {
                let l = t.leaf_index(x.row(i).as_slice().unwrap());
                acc[l].0 += pred[i] - y[i];
                acc[l].1 += 1.0;
            }
            for (k, node) in t.nodes.iter().enumerate() {
                if let Node::Leaf { value } = *node {
                    let want = -acc[k].0 / (acc[k].1 + p.lambda);
                    assert!((value - want).abs() <= 1e-10 * want.abs().max(1e-300));
                }
            }
            for (i, pr) in pred.iter_mut().enumerate() {
                *pr += p.learning_rate * t.predict(x.row(i).as_slice().unwrap());
            }
        }
    }

    #[test]
    fn gamma_prunes_weak_splits() {
        let (x, y) = data(100, 4);
        let p = GbtParams { rounds: 1, gamma: 1e6, ..Default::default() };
        let m = fit_gbt(x.view(), &y, &p, 0);
        assert_eq!(m.trees[0].n_leaves(), 1);
    }
}
