//! Grid/attitude sweeps and the dataset rows they produce.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::geometry::{in_fov, project_labeled_corners, Attitude, CameraIntrinsics, LedPanel, Pose, Vec3};
use crate::learn::{LearnError, RowMeta, Source, TrainingSet};
use crate::vision::{features, FeatureVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub extent_m: f64,
    pub spacing_m: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { extent_m: 1.2, spacing_m: 0.2 }
    }
}

impl GridSpec {
    /// Points per side.
    pub fn count(&self) -> Result<usize, HarnessError> {
        let q = self.extent_m / self.spacing_m;
        if !(self.spacing_m > 0.0 && self.extent_m >= 0.0 && q.is_finite()) || (q - q.round()).abs() > 1e-9 {
            return Err(HarnessError::config("grid", "extent_m / spacing_m must be a whole number"));
        }
        Ok(q.round() as usize + 1)
    }

    /// Coordinate of index `i` along either axis, centered on the origin.
    pub fn coordinate(&self, i: usize) -> f64 {
        let half = (self.extent_m / self.spacing_m).round() / 2.0;
        (i as f64 - half) * self.spacing_m
    }

    /// `(i, j, x, y)` for every grid location, `i` along x.
    pub fn points(&self) -> Result<Vec<(usize, usize, f64, f64)>, HarnessError> {
        let n = self.count()?;
        Ok((0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, self.coordinate(i), self.coordinate(j)))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub heights_m: Vec<f64>,
    pub angle_step_deg: f64,
    pub grid: GridSpec,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { heights_m: vec![1.3, 1.66], angle_step_deg: 45.0, grid: GridSpec::default() }
    }
}

impl SweepSpec {
    pub fn angles(&self) -> Result<Vec<f64>, HarnessError> {
        let q = 360.0 / self.angle_step_deg;
        if !(self.angle_step_deg > 0.0) || (q - q.round()).abs() > 1e-9 {
            return Err(HarnessError::config("sweep.angle_step_deg", "must divide 360"));
        }
        Ok((0..q.round() as usize).map(|k| k as f64 * self.angle_step_deg).collect())
    }

    pub fn candidate_count(&self) -> Result<usize, HarnessError> {
        let n = self.grid.count()?;
        Ok(n * n * self.heights_m.len() * self.angles()?.len().pow(3))
    }
}

/// One labelled sample. Features are in physical-corner order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub features: FeatureVector,
    pub pose: Pose,
    pub grid_i: usize,
    pub grid_j: usize,
    pub height_m: f64,
    pub source: Source,
}

impl DatasetRow {
    pub fn target(&self) -> Vec3 {
        self.pose.position
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: Vec<DatasetRow>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn at_heights(&self, heights_m: &[f64]) -> Dataset {
        Dataset { rows: self.rows.iter().filter(|r| heights_m.contains(&r.height_m)).copied().collect() }
    }

    pub fn count_at(&self, height_m: f64) -> usize {
        self.rows.iter().filter(|r| r.height_m == height_m).count()
    }

    pub fn extend(&mut self, other: Dataset) {
        self.rows.extend(other.rows);
    }

    pub fn to_training_set(&self) -> Result<TrainingSet, LearnError> {
        let n = self.rows.len();
        let f = ndarray::Array2::from_shape_fn((n, 8), |(i, k)| self.rows[i].features.0[k]);
        let t = ndarray::Array2::from_shape_fn((n, 3), |(i, k)| self.rows[i].target().to_array()[k]);
        let meta = self
            .rows
            .iter()
            .map(|r| RowMeta { grid_i: r.grid_i, grid_j: r.grid_j, height_m: r.height_m, source: r.source })
            .collect();
        TrainingSet::new(f, t, meta)
    }
}

/// Every grid point, height and roll/pitch/yaw combination whose four
/// corners land on the sensor, labelled by ray casting.
pub fn generate_sweep(spec: &SweepSpec, intr: &CameraIntrinsics, panel: &LedPanel) -> Result<Dataset, HarnessError> {
    let angles = spec.angles()?;
    let mut cells = Vec::new();
    for &(i, j, x, y) in &spec.grid.points()? {
        for &h in &spec.heights_m {
            cells.push((i, j, x, y, h));
        }
    }
    let rows: Vec<Vec<DatasetRow>> = cells
        .par_iter()
        .map(|&(i, j, x, y, h)| {
            let mut out = Vec::new();
            for &roll in &angles {
                for &pitch in &angles {
                    for &yaw in &angles {
                        let pose = Pose::new(Vec3::new(x, y, h), Attitude::new(roll, pitch, yaw));
                        let Ok(c) = project_labeled_corners(intr, &pose, panel) else { continue };
                        if in_fov(&c, intr) {
                            out.push(DatasetRow {
                                features: features(&c),
                                pose,
                                grid_i: i,
                                grid_j: j,
                                height_m: h,
                                source: Source::CleanSim,
                            });
                        }
                    }
                }
            }
            out
        })
        .collect();
    Ok(Dataset { rows: rows.into_iter().flatten().collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_is_seven_by_seven() {
        let g = GridSpec::default();
        assert_eq!(g.count().unwrap(), 7);
        let pts = g.points().unwrap();
        assert_eq!(pts.len(), 49);
        assert!((pts[0].2 + 0.6).abs() < 1e-12 && (pts[48].3 - 0.6).abs() < 1e-12);
        assert!(GridSpec { extent_m: 1.2, spacing_m: 0.25 }.count().is_err());
    }

    #[test]
    fn candidate_count() {
        assert_eq!(SweepSpec::default().candidate_count().unwrap(), 50_176);
        assert!(SweepSpec { angle_step_deg: 50.0, ..Default::default() }.angles().is_err());
    }

    #[test]
    fn nadir_poses_within_the_cone_are_retained() {
        let intr = CameraIntrinsics::default();
        let panel = LedPanel::default();
        let ds = generate_sweep(&SweepSpec::default(), &intr, &panel).unwrap();
        // a nadir pose is kept exactly when its projection stays on the sensor
        let mut kept = 0;
        for (x, y) in [(0.0, 0.0), (0.2, -0.2), (0.0, 0.2), (0.6, 0.6), (-0.4, 0.0)] {
            for h in [1.3, 1.66] {
                for yaw in [0.0, 45.0, 90.0, 135.0, 180.0, 225.0, 270.0, 315.0] {
                    let pose = Pose::new(Vec3::new(x, y, h), Attitude::new(0.0, 0.0, yaw));
                    let c = project_labeled_corners(&intr, &pose, &panel).unwrap();
                    let hit = ds.rows.iter().any(|r| {
                        (r.pose.position.x - x).abs() < 1e-12
                            && (r.pose.position.y - y).abs() < 1e-12
                            && r.height_m == h
                            && r.pose.attitude == pose.attitude
                    });
                    assert_eq!(hit, in_fov(&c, &intr), "{pose:?}");
                    kept += hit as usize;
                }
            }
        }
        assert!(kept >= 40, "{kept}");
        let n13 = ds.count_at(1.3);
        let n166 = ds.count_at(1.66);
        assert!(n13 < n166, "{n13} vs {n166}");
        assert!(ds.rows.iter().all(|r| r.source == Source::CleanSim && r.features.is_finite()));
    }
}
