//! The canned studies: model selection, sim-vs-capture and height
//! generalization.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::capture::{plan_captures, render_plans, CapturePlan, CaptureStats};
use super::config::{ExperimentConfig, Study};
use super::io::{grid_svg, write_cdf_csv, write_grid_csv};
use super::metrics::{evaluate, EvalReport};
use super::split::{location_key, split_indices, LocationKey};
use super::sweep::{generate_sweep, Dataset};
use super::HarnessError;
use crate::derive_seed;
use crate::geometry::{CameraIntrinsics, LedPanel};
use crate::learn::{fit_position_model, ModelKind, PositionModel};
use crate::render::CaptureNoise;

// seed streams derived from the config seed
const CAPTURE_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;
const TRAIN_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub rows: usize,
    /// `(height_m, rows)` pairs.
    pub per_height: Vec<(f64, usize)>,
    pub capture: Option<CaptureStats>,
}

impl DatasetSummary {
    fn of(name: &str, ds: &Dataset, capture: Option<CaptureStats>) -> Self {
        let mut per: BTreeMap<u64, usize> = BTreeMap::new();
        for r in &ds.rows {
            *per.entry(r.height_m.to_bits()).or_default() += 1;
        }
        Self {
            name: name.to_owned(),
            rows: ds.len(),
            per_height: per.into_iter().map(|(h, n)| (f64::from_bits(h), n)).collect(),
            capture,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOutput {
    pub study: Study,
    pub seed: u64,
    pub datasets: Vec<DatasetSummary>,
    pub reports: Vec<EvalReport>,
}

impl StudyOutput {
    pub fn report(&self, label: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.label == label)
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Training seed for one model kind, so adding a kind leaves the others alone.
fn train_seed(cfg: &ExperimentConfig, kind: ModelKind) -> u64 {
    let idx = ModelKind::ALL.iter().position(|k| *k == kind).expect("known kind") as u64;
    derive_seed(derive_seed(cfg.seed, TRAIN_STREAM), idx)
}

fn train(cfg: &ExperimentConfig, kind: ModelKind, data: &Dataset) -> Result<PositionModel, HarnessError> {
    Ok(fit_position_model(&data.to_training_set()?, &cfg.model_spec(kind), train_seed(cfg, kind))?)
}

fn labelled(mut r: EvalReport, label: String, echo: &serde_json::Value) -> EvalReport {
    r.label = label;
    r.config = echo.clone();
    r
}

/// Held-out captures, rendered with and without the configured noise.
struct CaptureSplit {
    train: Dataset,
    test_noisy: Dataset,
    test_clean: Dataset,
    stats: CaptureStats,
}

fn capture_split(cfg: &ExperimentConfig, intr: &CameraIntrinsics, panel: &LedPanel) -> Result<CaptureSplit, HarnessError> {
    let spec = cfg.capture_spec(&cfg.capture.heights_m, derive_seed(cfg.seed, CAPTURE_STREAM));
    let (plans, mut stats) = plan_captures(&spec, intr, panel)?;
    // locations too short to split (partly outside the field of view) are left out
    let t = cfg.split.test_per_location;
    let keys: Vec<LocationKey> = plans.iter().map(|p| location_key(p.grid_i, p.grid_j, p.height_m)).collect();
    let mut counts: BTreeMap<LocationKey, usize> = BTreeMap::new();
    for k in &keys {
        *counts.entry(*k).or_default() += 1;
    }
    let (plans, keys): (Vec<CapturePlan>, Vec<LocationKey>) =
        plans.into_iter().zip(keys).filter(|(_, k)| counts[k] > t).unzip();
    let (test_idx, train_idx) = split_indices(&keys, t, derive_seed(cfg.seed, SPLIT_STREAM))?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| plans[i]).collect::<Vec<_>>();
    let (train, f1) = render_plans(&pick(&train_idx), &spec, &spec.noise, intr, panel);
    let (test_noisy, f2) = render_plans(&pick(&test_idx), &spec, &spec.noise, intr, panel);
    let (test_clean, _) = render_plans(&pick(&test_idx), &spec, &CaptureNoise::NONE, intr, panel);
    stats.vision_failures = f1 + f2;
    stats.retained = train.len() + test_noisy.len();
    Ok(CaptureSplit { train, test_noisy, test_clean, stats })
}

fn model_selection(cfg: &ExperimentConfig, intr: &CameraIntrinsics, panel: &LedPanel) -> Result<StudyOutput, HarnessError> {
    let echo = serde_json::to_value(cfg)?;
    let cs = capture_split(cfg, intr, panel)?;
    let mut reports = Vec::new();
    for &kind in &cfg.models {
        let model = train(cfg, kind, &cs.train)?;
        for (name, test) in [("capture-noisy", &cs.test_noisy), ("capture-clean", &cs.test_clean)] {
            reports.push(labelled(evaluate(&model, test)?, format!("{kind}/{name}"), &echo));
        }
    }
    Ok(StudyOutput {
        study: Study::ModelSelection,
        seed: cfg.seed,
        datasets: vec![
            DatasetSummary::of("capture-train", &cs.train, Some(cs.stats)),
            DatasetSummary::of("capture-test-noisy", &cs.test_noisy, None),
            DatasetSummary::of("capture-test-clean", &cs.test_clean, None),
        ],
        reports,
    })
}

fn sim_vs_capture(cfg: &ExperimentConfig, intr: &CameraIntrinsics, panel: &LedPanel) -> Result<StudyOutput, HarnessError> {
    let echo = serde_json::to_value(cfg)?;
    let cs = capture_split(cfg, intr, panel)?;
    let sweep = generate_sweep(&cfg.sweep_spec(&cfg.capture.heights_m), intr, panel)?;
    let kind = cfg.model;
    let mut reports = Vec::new();
    for &h in &cfg.capture.heights_m {
        let test = cs.test_noisy.at_heights(&[h]);
        if test.is_empty() {
            continue;
        }
        let sim = train(cfg, kind, &sweep.at_heights(&[h]))?;
        reports.push(labelled(evaluate(&sim, &test)?, format!("{kind}/sim-to-capture/{h}"), &echo));
        let real = train(cfg, kind, &cs.train.at_heights(&[h]))?;
        reports.push(labelled(evaluate(&real, &test)?, format!("{kind}/capture-to-capture/{h}"), &echo));
    }
    Ok(StudyOutput {
        study: Study::SimVsCapture,
        seed: cfg.seed,
        datasets: vec![
            DatasetSummary::of("sweep", &sweep, None),
            DatasetSummary::of("capture-train", &cs.train, Some(cs.stats)),
            DatasetSummary::of("capture-test-noisy", &cs.test_noisy, None),
        ],
        reports,
    })
}

fn height_generalization(
    cfg: &ExperimentConfig,
    intr: &CameraIntrinsics,
    panel: &LedPanel,
) -> Result<StudyOutput, HarnessError> {
    let echo = serde_json::to_value(cfg)?;
    let g = &cfg.generalization;
    if let Some(h) = g.test_heights_m.iter().find(|h| g.train_heights_m.contains(h)) {
        return Err(HarnessError::config("generalization.test_heights_m", format!("{h} is also a training height")));
    }
    let sweep = generate_sweep(&cfg.sweep_spec(&g.train_heights_m), intr, panel)?;
    let spec = cfg.capture_spec(&g.test_heights_m, derive_seed(cfg.seed, CAPTURE_STREAM));
    let (plans, mut stats) = plan_captures(&spec, intr, panel)?;
    let (test, failures) = render_plans(&plans, &spec, &spec.noise, intr, panel);
    stats.vision_failures = failures;
    stats.retained = test.len();
    let model = train(cfg, g.model, &sweep)?;
    let kind = g.model;
    let mut reports = vec![labelled(evaluate(&model, &test)?, format!("{kind}/all"), &echo)];
    for &h in &g.test_heights_m {
        let t = test.at_heights(&[h]);
        if !t.is_empty() {
            reports.push(labelled(evaluate(&model, &t)?, format!("{kind}/{h}"), &echo));
        }
    }
    Ok(StudyOutput {
        study: Study::HeightGeneralization,
        seed: cfg.seed,
        datasets: vec![DatasetSummary::of("sweep", &sweep, None), DatasetSummary::of("capture-test", &test, Some(stats))],
        reports,
    })
}

/// Runs the configured study. Every random choice derives from `cfg.seed`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<StudyOutput, HarnessError> {
    cfg.validate()?;
    let intr = cfg.camera.clone();
    let panel = cfg.panel.build()?;
    match cfg.study {
        Study::ModelSelection => model_selection(cfg, &intr, &panel),
        Study::SimVsCapture => sim_vs_capture(cfg, &intr, &panel),
        Study::HeightGeneralization => height_generalization(cfg, &intr, &panel),
    }
}

fn file_stem(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

/// Writes `report.json`, `cdf.csv`, `per_grid.csv` and one heat map per report.
pub fn write_outputs(out: &StudyOutput, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), out.to_json()?)?;
    write_cdf_csv(&out.reports, std::fs::File::create(dir.join("cdf.csv"))?)?;
    write_grid_csv(&out.reports, std::fs::File::create(dir.join("per_grid.csv"))?)?;
    for r in &out.reports {
        std::fs::write(dir.join(format!("grid_{}.svg", file_stem(&r.label))), grid_svg(r))?;
    }
    Ok(())
}
