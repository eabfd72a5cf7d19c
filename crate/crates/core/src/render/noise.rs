//! Capture-realism knobs: corner jitter and additive pixel noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::frame::Frame;
use super::raster::quad_spans;
use crate::geometry::{CornerSet, PixelPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptureNoise {
    /// Standard deviation of each corner coordinate, pixels.
    pub corner_jitter_px: f64,
    /// Standard deviation of pixel noise as a fraction of full scale.
    pub pixel_sigma: f64,
}

impl Default for CaptureNoise {
    fn default() -> Self {
        Self { corner_jitter_px: 1.0, pixel_sigma: 0.02 }
    }
}

impl CaptureNoise {
    pub const NONE: CaptureNoise = CaptureNoise { corner_jitter_px: 0.0, pixel_sigma: 0.0 };

    pub fn pixel_sigma_gray(&self) -> f64 {
        self.pixel_sigma * 255.0
    }
}

/// Re-rasterizes the panel with corners jittered by `N(0, jitter²)` and adds
/// clamped Gaussian noise of `pixel_sigma_gray` gray levels to every pixel.
///
/// The panel region of `frame` must be `quad`'s scanline support with one
/// value per row, as produced by the renderer. Each row of the jittered quad
/// keeps the value of the nearest original row.
pub fn add_capture_noise(
    mut frame: Frame,
    quad: &CornerSet,
    corner_jitter_px: f64,
    pixel_sigma_gray: f64,
    seed: u64,
) -> Frame {
    assert!(corner_jitter_px >= 0.0 && pixel_sigma_gray >= 0.0, "noise must be non-negative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if corner_jitter_px > 0.0 {
        let jittered: [PixelPoint; 4] = std::array::from_fn(|k| {
            let du: f64 = rng.sample(StandardNormal);
            let dv: f64 = rng.sample(StandardNormal);
            PixelPoint::new(
                quad.points[k].u + corner_jitter_px * du,
                quad.points[k].v + corner_jitter_px * dv,
            )
        });
        frame = rejitter(frame, quad, &jittered);
    }
    if pixel_sigma_gray > 0.0 {
        for p in frame.pixels_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *p = (*p as f64 + pixel_sigma_gray * n).round().clamp(0.0, 255.0) as u8;
        }
    }
    frame
}

fn rejitter(mut frame: Frame, quad: &CornerSet, jittered: &[PixelPoint; 4]) -> Frame {
    let (w, h) = (frame.width(), frame.height());
    let old = quad_spans(&quad.points, w, h);
    if old.is_empty() {
        return frame;
    }
    let mut row_value: Vec<Option<u8>> = vec![None; h];
    for s in &old {
        row_value[s.row] = Some(frame.get((s.start + s.end) / 2, s.row));
        frame.row_mut(s.row)[s.start..=s.end].fill(0);
    }
    let (first, last) = (old[0].row, old[old.len() - 1].row);
    for s in quad_spans(jittered, w, h) {
        let src = s.row.clamp(first, last);
        // rows inside the original range are contiguous, so this always hits
        let v = row_value[src].or_else(|| nearest_value(&row_value, src)).unwrap_or(0);
        frame.row_mut(s.row)[s.start..=s.end].fill(v);
    }
    frame
}

fn nearest_value(values: &[Option<u8>], row: usize) -> Option<u8> {
    (1..values.len()).find_map(|d| {
        let lo = row.checked_sub(d).and_then(|r| values[r]);
        lo.or_else(|| values.get(row + d).copied().flatten())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project_labeled_corners, CameraIntrinsics, LedPanel, Pose};
    use crate::render::{apply_rolling_shutter, rasterize_panel, FrameMeta, Waveform};

    fn striped() -> (Frame, CornerSet) {
        let intr = CameraIntrinsics::default();
        let panel = LedPanel::default();
        let pose = Pose::nadir(0.1, -0.1, 1.3);
        let quad = project_labeled_corners(&intr, &pose, &panel).unwrap();
        let f = rasterize_panel(&intr, &pose, &panel, 1.0).unwrap();
        (apply_rolling_shutter(f, &quad, &Waveform::square(50.0, 50.0), 7.0), quad)
    }

    #[test]
    fn zero_noise_is_identity() {
        let (f, q) = striped();
        assert_eq!(add_capture_noise(f.clone(), &q, 0.0, 0.0, 99), f);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let (f, q) = striped();
        let a = add_capture_noise(f.clone(), &q, 1.0, 5.0, 42);
        let b = add_capture_noise(f.clone(), &q, 1.0, 5.0, 42);
        let c = add_capture_noise(f, &q, 1.0, 5.0, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn pixel_noise_std_on_mid_grey() {
        let meta = FrameMeta::from(&CameraIntrinsics::default());
        let f = Frame::from_pixels(1000, 1000, vec![128; 1_000_000], meta).unwrap();
        let quad = CornerSet::new([PixelPoint::new(-10.0, -10.0); 4]);
        let g = add_capture_noise(f, &quad, 0.0, 5.0, 7);
        let n = g.pixels().len() as f64;
        let mean = g.pixels().iter().map(|&p| p as f64).sum::<f64>() / n;
        let var = g.pixels().iter().map(|&p| (p as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!((var.sqrt() - 5.0).abs() < 0.5, "std {}", var.sqrt());
        assert!((mean - 128.0).abs() < 0.05);
    }

    #[test]
    fn background_noise_is_half_normal() {
        // clamping at 0 folds the negative half onto zero
        let meta = FrameMeta::from(&CameraIntrinsics::default());
        let f = Frame::black(1000, 1000, meta);
        let quad = CornerSet::new([PixelPoint::new(-10.0, -10.0); 4]);
        let sigma = 5.0;
        let g = add_capture_noise(f, &quad, 0.0, sigma, 8);
        let n = g.pixels().len() as f64;
        let zeros = g.pixels().iter().filter(|&&p| p == 0).count() as f64 / n;
        // P(round(σZ) <= 0) = Φ(0.5/σ)
        let phi = 0.5 * (1.0 + erf(0.5 / sigma / std::f64::consts::SQRT_2));
        assert!((zeros - phi).abs() < 0.005, "{zeros} vs {phi}");
        let mean = g.pixels().iter().map(|&p| p as f64).sum::<f64>() / n;
        let half_normal_mean = sigma / (2.0 * std::f64::consts::PI).sqrt();
        assert!((mean - half_normal_mean).abs() / half_normal_mean < 0.05);
    }

    fn erf(x: f64) -> f64 {
        // Abramowitz-Stegun 7.1.26
        let t = 1.0 / (1.0 + 0.3275911 * x.abs());
        let y = 1.0
            - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
                + 0.254829592)
                * t
                * (-x * x).exp();
        y.copysign(x)
    }

    #[test]
    fn jitter_moves_edges_but_keeps_stripes() {
        let (f, q) = striped();
        let g = add_capture_noise(f.clone(), &q, 2.0, 0.0, 5);
        assert_ne!(f, g);
        let lit_f = f.pixels().iter().filter(|&&p| p > 0).count() as f64;
        let lit_g = g.pixels().iter().filter(|&&p| p > 0).count() as f64;
        assert!((lit_f - lit_g).abs() / lit_f < 0.02);
        // center column keeps its per-row levels
        let c = 864;
        for r in 900..1200 {
            assert_eq!(f.get(c, r), g.get(c, r));
        }
    }
}
