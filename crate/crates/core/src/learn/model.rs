//! Three per-axis regressors bundled into a position model.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forest::{fit_forest, Forest, ForestParams};
use super::gbt::{fit_gbt, Gbt, GbtParams};
use super::mlp::{fit_mlp, Mlp, MlpParams};
use super::tree::{fit_tree, Tree, TreeParams};
use super::{LearnError, TrainingSet};
use crate::derive_seed;
use crate::geometry::Vec3;
use crate::vision::FeatureVector;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Forest,
    Gbt,
    SingleTree,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Forest, ModelKind::Gbt, ModelKind::SingleTree, ModelKind::Mlp];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Forest => "forest",
            ModelKind::Gbt => "gbt",
            ModelKind::SingleTree => "single-tree",
            ModelKind::Mlp => "mlp",
        }
    }

    pub fn default_spec(self) -> ModelSpec {
        match self {
            ModelKind::Forest => ModelSpec::Forest(ForestParams::default()),
            ModelKind::Gbt => ModelSpec::Gbt(GbtParams::default()),
            ModelKind::SingleTree => ModelSpec::SingleTree(TreeParams::default()),
            ModelKind::Mlp => ModelSpec::Mlp(MlpParams::default()),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| LearnError::InvalidParams(format!("unknown model kind {s:?}")))
    }
}

/// Model kind with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum ModelSpec {
    Forest(ForestParams),
    Gbt(GbtParams),
    SingleTree(TreeParams),
    Mlp(MlpParams),
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Forest(_) => ModelKind::Forest,
            ModelSpec::Gbt(_) => ModelKind::Gbt,
            ModelSpec::SingleTree(_) => ModelKind::SingleTree,
            ModelSpec::Mlp(_) => ModelKind::Mlp,
        }
    }

    fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidParams(m.to_owned()));
        match self {
            ModelSpec::Forest(p) if p.n_trees == 0 => bad("forest needs at least one tree"),
            ModelSpec::Gbt(p) if !(p.learning_rate.is_finite() && p.learning_rate > 0.0) => bad("learning_rate must be positive"),
            ModelSpec::Gbt(p) if !(p.lambda >= 0.0 && p.gamma >= 0.0) => bad("lambda and gamma must be non-negative"),
            ModelSpec::Mlp(p) if p.hidden.contains(&0) => bad("layer widths must be at least 1"),
            ModelSpec::Mlp(p) if p.batch_size == 0 => bad("batch_size must be at least 1"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisModel {
    SingleTree(Tree),
    Forest(Forest),
    Gbt(Gbt),
    Mlp(Mlp),
}

impl AxisModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            AxisModel::SingleTree(t) => t.predict(x),
            AxisModel::Forest(f) => f.predict(x),
            AxisModel::Gbt(g) => g.predict(x),
            AxisModel::Mlp(m) => m.predict(x),
        }
    }

    fn kind(&self) -> ModelKind {
        match self {
            AxisModel::SingleTree(_) => ModelKind::SingleTree,
            AxisModel::Forest(_) => ModelKind::Forest,
            AxisModel::Gbt(_) => ModelKind::Gbt,
            AxisModel::Mlp(_) => ModelKind::Mlp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionModel {
    pub version: u32,
    #[serde(flatten)]
    pub spec: ModelSpec,
    pub seed: u64,
    /// x, y, z regressors.
    pub axes: Vec<AxisModel>,
}

impl PositionModel {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    pub fn predict(&self, f: &FeatureVector) -> Vec3 {
        let x = &f.0;
        Vec3::new(self.axes[0].predict(x), self.axes[1].predict(x), self.axes[2].predict(x))
    }

    pub fn to_json(&self) -> Result<String, LearnError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, LearnError> {
        let m: PositionModel = serde_json::from_str(s)?;
        if m.version != MODEL_FORMAT_VERSION {
            return Err(LearnError::UnsupportedVersion(m.version));
        }
        if m.axes.len() != 3 {
            return Err(LearnError::AxisCount(m.axes.len()));
        }
        if m.axes.iter().any(|a| a.kind() != m.kind()) {
            return Err(LearnError::InvalidParams("axis model kind differs from the declared kind".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LearnError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn fit_axis(data: &TrainingSet, spec: &ModelSpec, axis: usize, seed: u64) -> AxisModel {
    let x = data.features().view();
    let y = data.target_column(axis);
    match spec {
        ModelSpec::SingleTree(p) => AxisModel::SingleTree(fit_tree(x, &y, p, &mut ChaCha8Rng::seed_from_u64(seed))),
        ModelSpec::Forest(p) => AxisModel::Forest(fit_forest(x, &y, p, seed)),
        ModelSpec::Gbt(p) => AxisModel::Gbt(fit_gbt(x, &y, p, seed)),
        ModelSpec::Mlp(p) => AxisModel::Mlp(fit_mlp(x, &y, p, seed)),
    }
}

/// One regressor per target axis, axis `k` seeded with `derive_seed(seed, k)`.
pub fn fit_position_model(data: &TrainingSet, spec: &ModelSpec, seed: u64) -> Result<PositionModel, LearnError> {
    spec.validate()?;
    if matches!(spec, ModelSpec::Forest(_)) && data.len() < 2 {
        return Err(LearnError::TooFewRows { needed: 2, got: data.len() });
    }
    let axes = (0..3usize)
        .into_par_iter()
        .map(|k| fit_axis(data, spec, k, derive_seed(seed, k as u64)))
        .collect();
    Ok(PositionModel { version: MODEL_FORMAT_VERSION, spec: spec.clone(), seed, axes })
}

pub fn predict_position(model: &PositionModel, f: &FeatureVector) -> Vec3 {
    model.predict(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{RowMeta, Source};
    use ndarray::Array2;
    use rand::Rng;

    fn data(n: usize, seed: u64) -> TrainingSet {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let f = Array2::from_shape_fn((n, 8), |_| r.random_range(0.0..2000.0));
        let t = Array2::from_shape_fn((n, 3), |(i, k)| f[[i, k]] / 1000.0 + f[[i, k + 4]] / 3000.0);
        let meta = vec![RowMeta { grid_i: 0, grid_j: 0, height_m: 1.3, source: Source::CleanSim }; n];
        TrainingSet::new(f, t, meta).unwrap()
    }

    fn small_specs() -> Vec<ModelSpec> {
        vec![
            ModelSpec::SingleTree(TreeParams::default()),
            ModelSpec::Forest(ForestParams { n_trees: 5, ..Default::default() }),
            ModelSpec::Gbt(GbtParams { rounds: 10, ..Default::default() }),
            ModelSpec::Mlp(MlpParams { hidden: vec![6], epochs: 3, ..Default::default() }),
        ]
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let d = data(60, 1);
        let mut r = ChaCha8Rng::seed_from_u64(2);
        for spec in small_specs() {
            let m = fit_position_model(&d, &spec, 11).unwrap();
            let back = PositionModel::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back, m);
            for _ in 0..1000 {
                let f = FeatureVector(std::array::from_fn(|_| r.random_range(0.0..2000.0)));
                let (a, b) = (m.predict(&f), back.predict(&f));
                assert_eq!((a.x.to_bits(), a.y.to_bits(), a.z.to_bits()), (b.x.to_bits(), b.y.to_bits(), b.z.to_bits()));
            }
        }
    }

    #[test]
    fn json_shape() {
        let m = fit_position_model(&data(10, 1), &ModelSpec::Gbt(GbtParams { rounds: 1, ..Default::default() }), 3).unwrap();
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["kind"], "gbt");
        assert_eq!(v["params"]["rounds"], 1);
        assert_eq!(v["axes"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn rejects_bad_documents() {
        let m = fit_position_model(&data(10, 1), &ModelSpec::SingleTree(TreeParams::default()), 3).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        v["version"] = 7.into();
        assert!(matches!(PositionModel::from_json(&v.to_string()), Err(LearnError::UnsupportedVersion(7))));
        v["version"] = 1.into();
        v["axes"].as_array_mut().unwrap().pop();
        assert!(matches!(PositionModel::from_json(&v.to_string()), Err(LearnError::AxisCount(2))));
    }

    #[test]
    fn overfit_forest_interpolates_training_rows() {
        let d = data(40, 4);
        let spec = ModelSpec::Forest(ForestParams { n_trees: 1, bootstrap: false, ..Default::default() });
        let m = fit_position_model(&d, &spec, 0).unwrap();
        for i in 0..40 {
            let f = FeatureVector(std::array::from_fn(|k| d.features()[[i, k]]));
            let p = m.predict(&f);
            let t = d.targets().row(i);
            assert!((p.x - t[0]).abs() < 1e-12 && (p.y - t[1]).abs() < 1e-12 && (p.z - t[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn permuting_targets_permutes_axes() {
        let d = data(50, 5);
        let t = d.targets();
        let swapped = Array2::from_shape_fn((50, 3), |(i, k)| t[[i, [2, 0, 1][k]]]);
        let d2 = TrainingSet::new(d.features().clone(), swapped, d.meta().to_vec()).unwrap();
        let spec = ModelSpec::SingleTree(TreeParams::default());
        let a = fit_position_model(&d, &spec, 1).unwrap();
        let b = fit_position_model(&d2, &spec, 1).unwrap();
        assert_eq!(b.axes[0], a.axes[2]);
        assert_eq!(b.axes[1], a.axes[0]);
        assert_eq!(b.axes[2], a.axes[1]);
    }

    #[test]
    fn constant_targets_predict_constant() {
        let d = data(30, 6);
        let c = TrainingSet::new(d.features().clone(), Array2::from_elem((30, 3), 0.25), d.meta().to_vec()).unwrap();
        for spec in small_specs().into_iter().take(3) {
            let m = fit_position_model(&c, &spec, 0).unwrap();
            let p = m.predict(&FeatureVector([123.0; 8]));
            assert_eq!((p.x, p.y, p.z), (0.25, 0.25, 0.25));
        }
    }

    #[test]
    fn kind_parsing() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("svm".parse::<ModelKind>().is_err());
    }
}
