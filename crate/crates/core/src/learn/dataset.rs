use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::LearnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    CleanSim,
    NoisySim,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::CleanSim => "clean-sim",
            Source::NoisySim => "noisy-sim",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowMeta {
    pub grid_i: usize,
    pub grid_j: usize,
    pub height_m: f64,
    pub source: Source,
}

/// Features (N×8 pixels) and targets (N×3 metres in the LED frame).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    features: Array2<f64>,
    targets: Array2<f64>,
    meta: Vec<RowMeta>,
}

impl TrainingSet {
    pub fn new(features: Array2<f64>, targets: Array2<f64>, meta: Vec<RowMeta>) -> Result<Self, LearnError> {
        let n = features.nrows();
        if n == 0 {
            return Err(LearnError::EmptyTrainingSet);
        }
        if targets.nrows() != n || meta.len() != n || targets.ncols() != 3 {
            return Err(LearnError::ShapeMismatch {
                features: n,
                targets: targets.nrows(),
                meta: meta.len(),
            });
        }
        let bad = features
            .rows()
            .into_iter()
            .zip(targets.rows())
            .position(|(f, t)| f.iter().chain(t.iter()).any(|v| !v.is_finite()));
        if let Some(row) = bad {
            return Err(LearnError::NonFinite { row });
        }
        Ok(Self { features: features.as_standard_layout().into_owned(), targets: targets.as_standard_layout().into_owned(), meta })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn targets(&self) -> &Array2<f64> {
        &self.targets
    }

    pub fn meta(&self) -> &[RowMeta] {
        &self.meta
    }

    pub fn target_column(&self, axis: usize) -> Vec<f64> {
        self.targets.column(axis).to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(n: usize) -> Vec<RowMeta> {
        vec![RowMeta { grid_i: 0, grid_j: 0, height_m: 1.3, source: Source::CleanSim }; n]
    }

    #[test]
    fn validation() {
        assert!(matches!(
            TrainingSet::new(Array2::zeros((0, 8)), Array2::zeros((0, 3)), vec![]),
            Err(LearnError::EmptyTrainingSet)
        ));
        assert!(matches!(
            TrainingSet::new(Array2::zeros((2, 8)), Array2::zeros((3, 3)), meta(2)),
            Err(LearnError::ShapeMismatch { .. })
        ));
        let mut f = Array2::zeros((3, 8));
        f[[1, 4]] = f64::NAN;
        assert!(matches!(TrainingSet::new(f, Array2::zeros((3, 3)), meta(3)), Err(LearnError::NonFinite { row: 1 })));
        let ok = TrainingSet::new(Array2::ones((3, 8)), Array2::zeros((3, 3)), meta(3)).unwrap();
        assert_eq!(ok.len(), 3);
    }
}
