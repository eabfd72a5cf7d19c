//! Angular intensity of the panel: LM-63 (IES) parsing and writing, a
//! Lambertian fallback, and the exposure model that turns luminous
//! intensity into a normalized pixel brightness.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::RenderError;
use crate::geometry::{CameraIntrinsics, LedPanel, Pose, Vec3};

/// Luminous intensity (cd) against polar angle from the panel normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarCurve {
    samples: Vec<(f64, f64)>,
}

impl PolarCurve {
    /// Angles must start at 0°, increase strictly and stay within
    /// `[0, 90]`; intensities must be non-negative.
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self, RenderError> {
        if samples.len() < 2 {
            return Err(RenderError::MalformedIes("need at least two samples".into()));
        }
        if samples[0].0 != 0.0 {
            return Err(RenderError::MalformedIes("first angle must be 0".into()));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(RenderError::MalformedIes(format!(
                    "vertical angles not increasing at {}",
                    w[1].0
                )));
            }
        }
        if let Some(&(a, _)) = samples.iter().find(|(a, _)| *a > 90.0 || !a.is_finite()) {
            return Err(RenderError::MalformedIes(format!("angle {a} outside [0, 90]")));
        }
        if let Some(&(_, i)) = samples.iter().find(|(_, i)| !(*i >= 0.0) || !i.is_finite()) {
            return Err(RenderError::MalformedIes(format!("negative intensity {i}")));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    /// Linear interpolation; zero beyond the last sample.
    pub fn intensity_at(&self, angle_deg: f64) -> f64 {
        let s = &self.samples;
        if angle_deg <= 0.0 {
            return s[0].1;
        }
        let last = s[s.len() - 1];
        if angle_deg >= last.0 {
            return if angle_deg == last.0 { last.1 } else { 0.0 };
        }
        let i = s.partition_point(|(a, _)| *a <= angle_deg);
        let (a0, i0) = s[i - 1];
        let (a1, i1) = s[i];
        i0 + (i1 - i0) * (angle_deg - a0) / (a1 - a0)
    }

    /// Total flux ∫ I(θ) 2π sinθ dθ over the sampled hemisphere, trapezoid
    /// rule on the sample grid.
    pub fn hemisphere_flux(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| {
                let (a0, i0) = (w[0].0.to_radians(), w[0].1);
                let (a1, i1) = (w[1].0.to_radians(), w[1].1);
                0.5 * (a1 - a0) * 2.0 * PI * (i0 * a0.sin() + i1 * a1.sin())
            })
            .sum()
    }
}

/// `I(θ) = (flux / π) cos θ` sampled every 5°.
pub fn lambertian_default(flux_lm: f64) -> PolarCurve {
    let peak = flux_lm / PI;
    let samples = (0..=18)
        .map(|k| {
            let a = 5.0 * k as f64;
            let i = if k == 18 { 0.0 } else { peak * a.to_radians().cos() };
            (a, i)
        })
        .collect();
    PolarCurve { samples }
}

/// Parses an LM-63 photometric file. Only the first horizontal plane and
/// vertical angles in `[0, 90]` are kept.
pub fn parse_ies(text: &str) -> Result<PolarCurve, RenderError> {
    let bad = |m: String| RenderError::MalformedIes(m);
    let mut lines = text.lines();
    let mut tilt = None;
    for line in lines.by_ref() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("TILT=") {
            tilt = Some(rest.trim().to_string());
            break;
        }
    }
    let tilt = tilt.ok_or_else(|| bad("missing TILT line".into()))?;
    let mut tokens = lines.flat_map(|l| l.split(|c: char| c.is_whitespace() || c == ','));
    let mut tokens = std::iter::from_fn(move || loop {
        match tokens.next() {
            Some("") => continue,
            other => return other,
        }
    });
    let mut next_num = |what: &str| -> Result<f64, RenderError> {
        let tok = tokens
            .next()
            .ok_or_else(|| bad(format!("unexpected end of file reading {what}")))?;
        tok.parse::<f64>()
            .map_err(|_| bad(format!("non-numeric {what}: {tok:?}")))
    };
    if tilt == "INCLUDE" {
        let _geometry = next_num("lamp-to-luminaire geometry")?;
        let n = next_num("tilt angle count")? as usize;
        for _ in 0..2 * n {
            next_num("tilt table")?;
        }
    }
    let _lamps = next_num("lamp count")?;
    let _lumens = next_num("lumens per lamp")?;
    let multiplier = next_num("candela multiplier")?;
    let n_vert = next_num("vertical angle count")?;
    let n_horiz = next_num("horizontal angle count")?;
    if n_vert < 1.0 || n_horiz < 1.0 || n_vert.fract() != 0.0 || n_horiz.fract() != 0.0 {
        return Err(bad(format!("invalid angle counts {n_vert} × {n_horiz}")));
    }
    let (n_vert, n_horiz) = (n_vert as usize, n_horiz as usize);
    // photometric type, units, width, length, height, ballast, future, watts
    for what in ["photometric type", "units", "width", "length", "height", "ballast factor", "future use", "input watts"] {
        next_num(what)?;
    }
    let vert: Vec<f64> = (0..n_vert)
        .map(|_| next_num("vertical angle"))
        .collect::<Result<_, _>>()?;
    for _ in 0..n_horiz {
        next_num("horizontal angle")?;
    }
    let candela: Vec<f64> = (0..n_vert)
        .map(|_| next_num("candela value"))
        .collect::<Result<_, _>>()?;
    for w in vert.windows(2) {
        if !(w[1] > w[0]) {
            return Err(bad(format!("vertical angles not increasing at {}", w[1])));
        }
    }
    let samples = vert
        .into_iter()
        .zip(candela)
        .filter(|(a, _)| (0.0..=90.0).contains(a))
        .map(|(a, c)| (a, c * multiplier))
        .collect();
    PolarCurve::new(samples)
}

/// Writes a single-plane LM-63-2002 file for `curve`.
pub fn write_ies(curve: &PolarCurve, flux_lm: f64) -> String {
    let mut out = String::new();
    out.push_str("IESNA:LM-63-2002\n[TEST] vlp export\n[MANUFAC] vlp\nTILT=NONE\n");
    let n = curve.samples.len();
    let _ = writeln!(out, "1 {flux_lm} 1 {n} 1 1 2 0.595 0.595 0");
    out.push_str("1.0 1.0 0\n");
    let angles: Vec<String> = curve.samples.iter().map(|(a, _)| format!("{a}")).collect();
    let _ = writeln!(out, "{}", angles.join(" "));
    out.push_str("0\n");
    let cd: Vec<String> = curve.samples.iter().map(|(_, i)| format!("{i}")).collect();
    let _ = writeln!(out, "{}", cd.join(" "));
    out
}

/// Raw (unclamped) brightness at the calibration anchor: nadir, 1.3 m,
/// default panel and intrinsics.
pub const SATURATION_HEADROOM: f64 = 3.0;
const ANCHOR_DISTANCE_M: f64 = 1.3;

fn calibration_constant() -> f64 {
    let intr = CameraIntrinsics::default();
    let peak = 3600.0 / PI;
    SATURATION_HEADROOM * ANCHOR_DISTANCE_M * ANCHOR_DISTANCE_M
        / (peak * intr.iso_gain * intr.exposure_us)
}

/// Unclamped exposure value `k · I(θ) / d² · iso · exposure`.
pub fn raw_brightness(pose: &Pose, panel: &LedPanel, intr: &CameraIntrinsics) -> f64 {
    let to_cam: Vec3 = pose.position;
    let d = to_cam.norm();
    if d == 0.0 {
        return 0.0;
    }
    let cos_emit = (to_cam.z / d).clamp(-1.0, 1.0);
    if cos_emit <= 0.0 {
        return 0.0;
    }
    let theta = cos_emit.acos().to_degrees();
    calibration_constant() * panel.curve.intensity_at(theta) / (d * d)
        * intr.iso_gain
        * intr.exposure_us
}

/// Normalized panel brightness in `[0, 1]`; 1.0 means saturated.
pub fn base_brightness(pose: &Pose, panel: &LedPanel, intr: &CameraIntrinsics) -> f64 {
    raw_brightness(pose, panel, intr).clamp(0.0, 1.0)
}
