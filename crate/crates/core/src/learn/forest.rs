//! Bagged regression forests.

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, Objective, Tree, TreeParams};
use crate::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 150, bootstrap: true, tree: TreeParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Tree `t` draws its bootstrap sample and feature subsets from
/// `derive_seed(seed, t)`, so the model does not depend on scheduling.
pub fn fit_forest(x: ArrayView2<f64>, y: &[f64], params: &ForestParams, seed: u64) -> Forest {
    assert_eq!(x.nrows(), y.len());
    assert!(params.n_trees >= 1, "forest needs at least one tree");
    let n = y.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let stats: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
            grow_tree(x, &rows, &stats, &params.tree, Objective::SquaredError, &mut rng)
        })
        .collect();
    Forest { trees }
}
