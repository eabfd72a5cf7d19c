//! Frame → ordered panel corners: threshold, bridge the stripe gaps, keep
//! the biggest blob, fill its convex hull, find its four corners.

mod corners;
mod morphology;

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use corners::{detect_corners, CornerParams, Refinement};
pub use morphology::{
    binarize, close, convex_hull, dilate, erode, fill_convex_hull, largest_component, BitMask,
};

use crate::geometry::{CornerSet, PixelPoint};
use crate::render::{Frame, FrameMeta};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisionError {
    #[error("mask has no set pixels")]
    EmptyMask,
    #[error("found {found} corners, wanted {wanted}")]
    TooFewCorners { found: usize, wanted: usize },
    #[error("corner points are duplicate or collinear")]
    DegenerateQuad,
    #[error("quad area {area:.0} px² is under {ratio} of the blob's {pixels} px")]
    QuadSanity { area: f64, pixels: usize, ratio: f64 },
}

/// `(u1, v1, …, u4, v4)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; 8]);

impl FeatureVector {
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn to_corners(&self) -> CornerSet {
        CornerSet::new(std::array::from_fn(|k| PixelPoint::new(self.0[2 * k], self.0[2 * k + 1])))
    }
}

pub fn features(c: &CornerSet) -> FeatureVector {
    FeatureVector(std::array::from_fn(|i| {
        let p = c.points[i / 2];
        if i % 2 == 0 {
            p.u
        } else {
            p.v
        }
    }))
}

fn cross(o: PixelPoint, a: PixelPoint, b: PixelPoint) -> f64 {
    (a.u - o.u) * (b.v - o.v) - (a.v - o.v) * (b.u - o.u)
}

/// Canonical order: ascending angle about the centroid, measured from `+u`
/// in `[0, 2π)`.
pub fn order_corners(points: [PixelPoint; 4]) -> Result<CornerSet, VisionError> {
    let scale = points
        .iter()
        .flat_map(|a| points.iter().map(move |b| a.dist(*b)))
        .fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(VisionError::DegenerateQuad);
    }
    for i in 0..4 {
        for j in i + 1..4 {
            if points[i].dist(points[j]) <= 1e-9 * scale {
                return Err(VisionError::DegenerateQuad);
            }
            for k in j + 1..4 {
                if cross(points[i], points[j], points[k]).abs() <= 1e-9 * scale * scale {
                    return Err(VisionError::DegenerateQuad);
                }
            }
        }
    }
    let cu = points.iter().map(|p| p.u).sum::<f64>() / 4.0;
    let cv = points.iter().map(|p| p.v).sum::<f64>() / 4.0;
    let angle = |p: &PixelPoint| {
        let a = (p.v - cv).atan2(p.u - cu);
        if a < 0.0 {
            a + TAU
        } else {
            a
        }
    };
    let mut sorted = points;
    sorted.sort_by(|a, b| angle(a).total_cmp(&angle(b)).then(a.u.total_cmp(&b.u)).then(a.v.total_cmp(&b.v)));
    Ok(CornerSet::new(sorted))
}

/// Area of the convex hull of `c`, or `None` if the points in their given
/// order do not bound a convex quadrilateral.
pub fn convex_area(c: &CornerSet) -> Option<f64> {
    let p = &c.points;
    let signs: Vec<f64> = (0..4).map(|i| cross(p[i], p[(i + 1) % 4], p[(i + 2) % 4])).collect();
    let all_pos = signs.iter().all(|&s| s > 0.0);
    let all_neg = signs.iter().all(|&s| s < 0.0);
    (all_pos || all_neg).then(|| c.area())
}

/// Row count of the longest dark stripe for the given timing: a two-level
/// off run, in rows.
pub fn dark_run_rows(meta: &FrameMeta, bit_rate_hz: f64) -> f64 {
    2.0 * (1e6 / (2.0 * bit_rate_hz)) / meta.row_readout_us
}

/// `ceil(dark_run_rows / 2) + 1`, enough to bridge every dark stripe.
pub fn default_close_radius(meta: &FrameMeta, bit_rate_hz: f64) -> usize {
    (dark_run_rows(meta, bit_rate_hz) / 2.0).ceil() as usize + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisionParams {
    pub threshold: u8,
    /// Closing radius; `None` derives it from the frame timing.
    pub close_radius_px: Option<usize>,
    pub bit_rate_hz: f64,
    pub corners: CornerParams,
    /// Minimum ratio of quad area to blob pixel count.
    pub min_fill_ratio: f64,
}

impl Default for VisionParams {
    fn default() -> Self {
        Self {
            threshold: 32,
            close_radius_px: None,
            bit_rate_hz: crate::codec::DEFAULT_BIT_RATE_HZ,
            corners: CornerParams::default(),
            min_fill_ratio: 0.8,
        }
    }
}

/// Result of [`extract_corners`].
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub corners: CornerSet,
    pub blob_pixels: usize,
}

/// Full pipeline on one frame. Corners come back in canonical order.
pub fn extract_corners(frame: &Frame, params: &VisionParams) -> Result<Extraction, VisionError> {
    let mask = binarize(frame, params.threshold);
    let (c0, r0, c1, r1) = mask.bounding_box().ok_or(VisionError::EmptyMask)?;
    let radius = params
        .close_radius_px
        .unwrap_or_else(|| default_close_radius(&frame.meta, params.bit_rate_hz));
    // room for the closing and the detector windows around the blob
    let margin = (radius + params.corners.window + params.corners.refine_radius + 8) as isize;
    let (oc, or) = (c0 as isize - margin, r0 as isize - margin);
    let w = c1 - c0 + 1 + 2 * margin as usize;
    let h = r1 - r0 + 1 + 2 * margin as usize;
    let crop = mask.crop(oc, or, w, h);
    // the hull removes the notches stripe gaps leave along slanted sides
    let blob = fill_convex_hull(&largest_component(&close(&crop, radius))?);
    let pts = detect_corners(&blob, &params.corners)?;
    let mut quad = [PixelPoint::default(); 4];
    for (q, p) in quad.iter_mut().zip(&pts) {
        *q = PixelPoint::new(p.u + oc as f64, p.v + or as f64);
    }
    let corners = order_corners(quad)?;
    let pixels = blob.count();
    let area = convex_area(&corners).unwrap_or(0.0);
    if area < params.min_fill_ratio * pixels as f64 {
        return Err(VisionError::QuadSanity { area, pixels, ratio: params.min_fill_ratio });
    }
    Ok(Extraction { corners, blob_pixels: pixels })
}

/// Permutes `detected` to best match `labels` (least total squared
/// distance over all 24 orderings). Used to carry physical corner labels
/// over to detected points.
pub fn assign_labels(detected: &CornerSet, labels: &CornerSet) -> CornerSet {
    let mut best = (f64::INFINITY, *detected);
    for perm in permutations4() {
        let cand = CornerSet::new(std::array::from_fn(|k| detected.points[perm[k]]));
        let cost: f64 = (0..4).map(|k| cand.points[k].dist(labels.points[k]).powi(2)).sum();
        if cost < best.0 {
            best = (cost, cand);
        }
    }
    best.1
}

fn permutations4() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    if (0..4).all(|i| p[i + 1..].iter().all(|&x| x != p[i])) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}
