//! Error metrics, CDFs and per-grid maps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::sweep::Dataset;
use super::HarnessError;
use crate::geometry::Vec3;
use crate::learn::{ModelKind, PositionModel};

/// Euclidean distance in centimetres.
pub fn error_3d(pred: Vec3, truth: Vec3) -> f64 {
    100.0 * (pred - truth).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub error_cm: f64,
    pub fraction: f64,
}

/// Right-continuous empirical CDF: the k-th smallest error maps to k/n.
pub fn empirical_cdf(errors: &[f64]) -> Vec<CdfPoint> {
    let mut s = errors.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.into_iter()
        .enumerate()
        .map(|(k, e)| CdfPoint { error_cm: e, fraction: (k + 1) as f64 / n })
        .collect()
}

/// Nearest-rank percentile: the smallest error whose CDF value reaches `q`.
pub fn percentile(errors: &[f64], q: f64) -> f64 {
    assert!(!errors.is_empty());
    let mut s = errors.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((q * s.len() as f64).ceil() as usize).clamp(1, s.len());
    s[rank - 1]
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub grid_i: usize,
    pub grid_j: usize,
    pub count: usize,
    pub mean_error_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub model: ModelKind,
    pub n_test: usize,
    pub mean_3d_error_cm: f64,
    pub p90_error_cm: f64,
    pub max_error_cm: f64,
    /// Mean absolute error per axis (x, y, z).
    pub axis_mean_abs_error_cm: [f64; 3],
    pub axis_p90_error_cm: [f64; 3],
    pub cdf_3d: Vec<CdfPoint>,
    /// CDFs of absolute per-axis deviations (x, y, z).
    pub cdf_axis: [Vec<CdfPoint>; 3],
    pub per_grid: Vec<GridCell>,
    /// Raw 3D errors in test-row order.
    pub errors_cm: Vec<f64>,
    pub config: serde_json::Value,
}

impl EvalReport {
    /// Fraction of test rows with 3D error at or below `e`.
    pub fn cdf_at(&self, e: f64) -> f64 {
        self.errors_cm.iter().filter(|&&x| x <= e).count() as f64 / self.n_test as f64
    }
}

/// Builds a report from predictions and truths given in test-row order.
pub fn report_from_predictions(
    model: ModelKind,
    preds: &[Vec3],
    test: &Dataset,
) -> Result<EvalReport, HarnessError> {
    if test.is_empty() {
        return Err(HarnessError::EmptyTestSet);
    }
    assert_eq!(preds.len(), test.len());
    let errors: Vec<f64> = preds.iter().zip(&test.rows).map(|(p, r)| error_3d(*p, r.target())).collect();
    let axis: [Vec<f64>; 3] = std::array::from_fn(|k| {
        preds
            .iter()
            .zip(&test.rows)
            .map(|(p, r)| 100.0 * (p.to_array()[k] - r.target().to_array()[k]).abs())
            .collect()
    });
    let mut cells: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for (e, r) in errors.iter().zip(&test.rows) {
        cells.entry((r.grid_i, r.grid_j)).or_default().push(*e);
    }
    let per_grid = cells
        .into_iter()
        .map(|((i, j), es)| GridCell { grid_i: i, grid_j: j, count: es.len(), mean_error_cm: mean(&es) })
        .collect();
    Ok(EvalReport {
        label: String::new(),
        model,
        n_test: errors.len(),
        mean_3d_error_cm: mean(&errors),
        p90_error_cm: percentile(&errors, 0.9),
        max_error_cm: errors.iter().copied().fold(0.0, f64::max),
        axis_mean_abs_error_cm: std::array::from_fn(|k| mean(&axis[k])),
        axis_p90_error_cm: std::array::from_fn(|k| percentile(&axis[k], 0.9)),
        cdf_3d: empirical_cdf(&errors),
        cdf_axis: std::array::from_fn(|k| empirical_cdf(&axis[k])),
        per_grid,
        errors_cm: errors,
        config: serde_json::Value::Null,
    })
}

pub fn evaluate(model: &PositionModel, test: &Dataset) -> Result<EvalReport, HarnessError> {
    let preds: Vec<Vec3> = test.rows.iter().map(|r| model.predict(&r.features)).collect();
    report_from_predictions(model.kind(), &preds, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::harness::sweep::DatasetRow;
    use crate::learn::Source;
    use crate::vision::FeatureVector;
    use proptest::prelude::*;

    fn rows(targets: &[(usize, usize, Vec3)]) -> Dataset {
        Dataset {
            rows: targets
                .iter()
                .map(|&(i, j, t)| DatasetRow {
                    features: FeatureVector([0.0; 8]),
                    pose: Pose::nadir(t.x, t.y, t.z),
                    grid_i: i,
                    grid_j: j,
                    height_m: 1.3,
                    source: Source::CleanSim,
                })
                .collect(),
        }
    }

    #[test]
    fn error_3d_cases() {
        let o = Vec3::ZERO;
        let p = Vec3::new(0.03, 0.04, 0.0);
        assert_eq!(error_3d(o, o), 0.0);
        assert!((error_3d(o, p) - 5.0).abs() < 1e-12);
        assert_eq!(error_3d(o, p), error_3d(p, o));
    }

    #[test]
    fn perfect_model_gives_zero_report() {
        let t = rows(&[(0, 0, Vec3::new(0.1, 0.2, 1.3)), (1, 0, Vec3::new(0.0, 0.2, 1.3))]);
        let preds: Vec<Vec3> = t.rows.iter().map(|r| r.target()).collect();
        let r = report_from_predictions(ModelKind::Gbt, &preds, &t).unwrap();
        assert_eq!((r.mean_3d_error_cm, r.p90_error_cm, r.max_error_cm), (0.0, 0.0, 0.0));
        assert_eq!(r.axis_mean_abs_error_cm, [0.0; 3]);
        assert!(r.per_grid.iter().all(|c| c.mean_error_cm == 0.0));
    }

    #[test]
    fn single_row_is_a_step() {
        let t = rows(&[(0, 0, Vec3::new(0.0, 0.0, 1.3))]);
        let r = report_from_predictions(ModelKind::Forest, &[Vec3::new(0.03, 0.04, 1.3)], &t).unwrap();
        assert!((r.mean_3d_error_cm - 5.0).abs() < 1e-9);
        assert_eq!(r.mean_3d_error_cm, r.p90_error_cm);
        assert_eq!(r.p90_error_cm, r.max_error_cm);
        assert_eq!(r.cdf_3d, vec![CdfPoint { error_cm: r.max_error_cm, fraction: 1.0 }]);
    }

    #[test]
    fn empty_test_set() {
        assert!(matches!(
            report_from_predictions(ModelKind::Gbt, &[], &Dataset::default()),
            Err(HarnessError::EmptyTestSet)
        ));
    }

    #[test]
    fn percentile_nearest_rank() {
        let e: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentile(&e, 0.9), 9.0);
        assert_eq!(percentile(&e, 1.0), 10.0);
        assert_eq!(percentile(&e, 0.0), 1.0);
    }

    proptest! {
        #[test]
        fn report_invariants(errs in proptest::collection::vec((0usize..3, 0usize..3, -0.5f64..0.5, -0.5f64..0.5, -0.5f64..0.5), 1..60)) {
            let truth: Vec<_> = errs.iter().map(|&(i, j, ..)| (i, j, Vec3::new(0.0, 0.0, 1.3))).collect();
            let t = rows(&truth);
            let preds: Vec<Vec3> = errs.iter().map(|&(_, _, a, b, c)| Vec3::new(a, b, 1.3 + c)).collect();
            let r = report_from_predictions(ModelKind::Gbt, &preds, &t).unwrap();
            // recompute the mean independently
            let m: f64 = preds.iter().map(|p| 100.0 * (p.x * p.x + p.y * p.y + (p.z - 1.3).powi(2)).sqrt()).sum::<f64>() / preds.len() as f64;
            prop_assert!((r.mean_3d_error_cm - m).abs() <= 1e-9 * m.max(1.0));
            for cdf in std::iter::once(&r.cdf_3d).chain(r.cdf_axis.iter()) {
                prop_assert!(cdf.windows(2).all(|w| w[0].error_cm <= w[1].error_cm && w[0].fraction < w[1].fraction));
                prop_assert!(cdf[0].fraction > 0.0 && cdf.last().unwrap().fraction == 1.0);
            }
            let weighted: f64 = r.per_grid.iter().map(|c| c.mean_error_cm * c.count as f64).sum::<f64>() / r.n_test as f64;
            prop_assert!((weighted - r.mean_3d_error_cm).abs() <= 1e-9);
            prop_assert!(r.p90_error_cm <= r.max_error_cm);
        }
    }
}
