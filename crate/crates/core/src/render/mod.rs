//! Synthetic rolling-shutter frames of the LED panel.

mod frame;
mod noise;
mod photometry;
mod raster;
mod shutter;

use thiserror::Error;

pub use frame::{Frame, FrameMeta};
pub use noise::{add_capture_noise, CaptureNoise};
pub use photometry::{
    base_brightness, lambertian_default, parse_ies, raw_brightness, write_ies, PolarCurve,
    SATURATION_HEADROOM,
};
pub use raster::{fill_spans, panel_level, polygon_spans, quad_spans, rasterize_panel, RowSpan};
pub use shutter::{apply_rolling_shutter, row_exposure_fraction, row_fractions, Waveform};

use crate::geometry::{project_labeled_corners, CameraIntrinsics, CornerSet, GeometryError, LedPanel, Pose};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("malformed IES file: {0}")]
    MalformedIes(String),
    #[error("PGM: {0}")]
    Pgm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Brightness, rasterization and rolling shutter in one step. Returns the
/// frame and the ray-cast corner labels of the quad that was filled.
pub fn render_striped(
    intr: &CameraIntrinsics,
    pose: &Pose,
    panel: &LedPanel,
    waveform: &Waveform,
    phase_us: f64,
) -> Result<(Frame, CornerSet), GeometryError> {
    let quad = project_labeled_corners(intr, pose, panel)?;
    let b = base_brightness(pose, panel, intr);
    let frame = rasterize_panel(intr, pose, panel, b)?;
    Ok((apply_rolling_shutter(frame, &quad, waveform, phase_us), quad))
}
