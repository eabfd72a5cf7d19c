//! Study configuration, read from TOML (dotted keys welcome).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::capture::CaptureSpec;
use super::sweep::{GridSpec, SweepSpec};
use super::HarnessError;
use crate::codec::{LedId, DEFAULT_BIT_RATE_HZ};
use crate::geometry::{CameraIntrinsics, LedPanel};
use crate::learn::{ForestParams, GbtParams, MlpParams, ModelKind, ModelSpec, TreeParams};
use crate::render::{parse_ies, CaptureNoise};
use crate::vision::VisionParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    #[default]
    ModelSelection,
    SimVsCapture,
    HeightGeneralization,
}

impl Study {
    pub fn as_str(self) -> &'static str {
        match self {
            Study::ModelSelection => "model-selection",
            Study::SimVsCapture => "sim-vs-capture",
            Study::HeightGeneralization => "height-generalization",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelConfig {
    pub side_m: f64,
    pub flux_lm: f64,
    pub cct_k: f64,
    /// Optional IES LM-63 file; the default is a Lambertian emitter.
    pub ies_file: Option<PathBuf>,
}

impl Default for PanelConfig {
    fn default() -> Self {
        let p = LedPanel::default();
        Self { side_m: p.side_m, flux_lm: p.flux_lm, cct_k: p.cct_k, ies_file: None }
    }
}

impl PanelConfig {
    pub fn build(&self) -> Result<LedPanel, HarnessError> {
        let mut panel = LedPanel { side_m: self.side_m, flux_lm: self.flux_lm, cct_k: self.cct_k, ..LedPanel::default() };
        panel.curve = match &self.ies_file {
            Some(path) => parse_ies(&std::fs::read_to_string(path)?)
                .map_err(|e| HarnessError::config("panel.ies_file", e.to_string()))?,
            None => crate::render::lambertian_default(self.flux_lm),
        };
        panel.validate().map_err(|e| HarnessError::config("panel", e.to_string()))?;
        Ok(panel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub heights_m: Vec<f64>,
    pub angle_step_deg: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { heights_m: vec![1.3, 1.66], angle_step_deg: 45.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptureConfig {
    pub heights_m: Vec<f64>,
    pub per_location: usize,
    /// Tilt magnitude is uniform in `[0, max_tilt_deg]` about a uniform axis.
    pub max_tilt_deg: f64,
    /// Yaw is uniform in `[-yaw_spread_deg, yaw_spread_deg)`; 180 covers all yaws.
    pub yaw_spread_deg: f64,
    pub led_id: u8,
    pub bit_rate_hz: f64,
    pub corner_jitter_px: f64,
    pub pixel_sigma: f64,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        let noise = CaptureNoise::default();
        Self {
            heights_m: vec![1.3, 1.66],
            per_location: 10,
            max_tilt_deg: 1.0,
            yaw_spread_deg: 1.0,
            led_id: 0xA5,
            bit_rate_hz: DEFAULT_BIT_RATE_HZ,
            corner_jitter_px: noise.corner_jitter_px,
            pixel_sigma: noise.pixel_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_per_location: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { test_per_location: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneralizationConfig {
    pub train_heights_m: Vec<f64>,
    pub test_heights_m: Vec<f64>,
    pub model: ModelKind,
}

impl Default for GeneralizationConfig {
    fn default() -> Self {
        Self { train_heights_m: vec![1.56, 1.76], test_heights_m: vec![1.23, 1.6], model: ModelKind::Gbt }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: Study,
    pub seed: u64,
    /// Models compared by the model-selection study.
    pub models: Vec<ModelKind>,
    /// Model used by the sim-vs-capture study.
    pub model: ModelKind,
    pub camera: CameraIntrinsics,
    pub panel: PanelConfig,
    pub grid: GridSpec,
    pub sweep: SweepConfig,
    pub capture: CaptureConfig,
    pub split: SplitConfig,
    pub vision: VisionParams,
    pub generalization: GeneralizationConfig,
    pub tree: TreeParams,
    pub forest: ForestParams,
    pub gbt: GbtParams,
    pub mlp: MlpParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            study: Study::default(),
            seed: 2024,
            models: vec![ModelKind::Forest, ModelKind::Gbt, ModelKind::Mlp],
            model: ModelKind::Gbt,
            camera: CameraIntrinsics::default(),
            panel: PanelConfig::default(),
            grid: GridSpec::default(),
            sweep: SweepConfig::default(),
            capture: CaptureConfig::default(),
            split: SplitConfig::default(),
            vision: VisionParams::default(),
            generalization: GeneralizationConfig::default(),
            tree: TreeParams::default(),
            forest: ForestParams::default(),
            gbt: GbtParams::default(),
            mlp: MlpParams::default(),
        }
    }
}

fn check(ok: bool, key: &str, msg: &str) -> Result<(), HarnessError> {
    if ok {
        Ok(())
    } else {
        Err(HarnessError::config(key, msg))
    }
}

fn check_heights(h: &[f64], key: &str) -> Result<(), HarnessError> {
    check(!h.is_empty(), key, "needs at least one height")?;
    check(h.iter().all(|v| v.is_finite() && *v > 0.0), key, "heights must be positive")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let de = toml::Deserializer::parse(text).map_err(|e| HarnessError::config("<document>", e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            HarnessError::config(&key, e.into_inner().message().trim().to_owned())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.camera.validate().map_err(|e| HarnessError::config("camera", e.to_string()))?;
        self.grid.count().map_err(|_| HarnessError::config("grid", "extent_m / spacing_m must be a whole number"))?;
        check_heights(&self.sweep.heights_m, "sweep.heights_m")?;
        let step = self.sweep.angle_step_deg;
        check(
            step > 0.0 && (360.0 / step - (360.0 / step).round()).abs() < 1e-9,
            "sweep.angle_step_deg",
            "must divide 360",
        )?;
        check_heights(&self.capture.heights_m, "capture.heights_m")?;
        check(self.capture.per_location >= 1, "capture.per_location", "must be at least 1")?;
        check(
            (0.0..90.0).contains(&self.capture.max_tilt_deg),
            "capture.max_tilt_deg",
            "must be in [0, 90)",
        )?;
        check(
            (0.0..=180.0).contains(&self.capture.yaw_spread_deg),
            "capture.yaw_spread_deg",
            "must be in [0, 180]",
        )?;
        check(self.capture.bit_rate_hz > 0.0, "capture.bit_rate_hz", "must be positive")?;
        check(self.capture.corner_jitter_px >= 0.0, "capture.corner_jitter_px", "must be non-negative")?;
        check(self.capture.pixel_sigma >= 0.0, "capture.pixel_sigma", "must be non-negative")?;
        check(
            self.split.test_per_location < self.capture.per_location,
            "split.test_per_location",
            "must leave training rows at each location",
        )?;
        check_heights(&self.generalization.train_heights_m, "generalization.train_heights_m")?;
        check_heights(&self.generalization.test_heights_m, "generalization.test_heights_m")?;
        check(!self.models.is_empty(), "models", "needs at least one model")?;
        check(self.forest.n_trees >= 1, "forest.n_trees", "must be at least 1")?;
        check(self.gbt.learning_rate > 0.0, "gbt.learning_rate", "must be positive")?;
        check(self.gbt.lambda >= 0.0, "gbt.lambda", "must be non-negative")?;
        check(self.gbt.gamma >= 0.0, "gbt.gamma", "must be non-negative")?;
        check(!self.mlp.hidden.contains(&0), "mlp.hidden", "layer widths must be at least 1")?;
        check(self.mlp.batch_size >= 1, "mlp.batch_size", "must be at least 1")?;
        Ok(())
    }

    pub fn model_spec(&self, kind: ModelKind) -> ModelSpec {
        match kind {
            ModelKind::Forest => ModelSpec::Forest(self.forest),
            ModelKind::Gbt => ModelSpec::Gbt(self.gbt),
            ModelKind::SingleTree => ModelSpec::SingleTree(self.tree),
            ModelKind::Mlp => ModelSpec::Mlp(self.mlp.clone()),
        }
    }

    pub fn sweep_spec(&self, heights_m: &[f64]) -> SweepSpec {
        SweepSpec {
            heights_m: heights_m.to_vec(),
            angle_step_deg: self.sweep.angle_step_deg,
            grid: self.grid,
        }
    }

    pub fn capture_spec(&self, heights_m: &[f64], seed: u64) -> CaptureSpec {
        CaptureSpec {
            grid: self.grid,
            heights_m: heights_m.to_vec(),
            per_location: self.capture.per_location,
            max_tilt_deg: self.capture.max_tilt_deg,
            yaw_spread_deg: self.capture.yaw_spread_deg,
            led_id: LedId(self.capture.led_id),
            bit_rate_hz: self.capture.bit_rate_hz,
            noise: CaptureNoise {
                corner_jitter_px: self.capture.corner_jitter_px,
                pixel_sigma: self.capture.pixel_sigma,
            },
            vision: self.vision,
            seed,
        }
    }
}
