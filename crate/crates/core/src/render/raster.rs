//! Scanline fill of the projected panel quadrilateral.

use super::frame::{Frame, FrameMeta};
use crate::geometry::{project_labeled_corners, CameraIntrinsics, GeometryError, LedPanel, PixelPoint, Pose};

/// Inclusive column range `[start, end]` covered by the quad on one row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowSpan {
    pub row: usize,
    pub start: usize,
    pub end: usize,
}

impl RowSpan {
    pub fn pixel_count(&self) -> usize {
        self.end - self.start + 1
    }
}

/// Pixels whose centers lie inside the convex polygon `points` (boundary
/// order, either winding), clipped to the sensor.
pub fn quad_spans(points: &[PixelPoint; 4], width: usize, height: usize) -> Vec<RowSpan> {
    polygon_spans(points, width, height)
}

/// [`quad_spans`] for any convex polygon with at least one vertex. Centers
/// on the boundary count as inside.
pub fn polygon_spans(points: &[PixelPoint], width: usize, height: usize) -> Vec<RowSpan> {
    const EPS: f64 = 1e-9;
    if width == 0 || height == 0 || points.is_empty() {
        return Vec::new();
    }
    let vmin = points.iter().map(|p| p.v).fold(f64::INFINITY, f64::min);
    let vmax = points.iter().map(|p| p.v).fold(f64::NEG_INFINITY, f64::max);
    if !(vmin.is_finite() && vmax.is_finite()) || vmax < 0.0 || vmin > (height - 1) as f64 {
        return Vec::new();
    }
    let r0 = (vmin - EPS).ceil().max(0.0) as usize;
    let r1 = ((vmax + EPS).floor() as i64).min(height as i64 - 1);
    if r1 < r0 as i64 {
        return Vec::new();
    }
    let n = points.len();
    let mut spans = Vec::with_capacity(r1 as usize - r0 + 1);
    for row in r0..=r1 as usize {
        let y = row as f64;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let a = points[i];
            let b = points[(i + 1) % n];
            let (ymin, ymax) = if a.v < b.v { (a.v, b.v) } else { (b.v, a.v) };
            if y < ymin - EPS || y > ymax + EPS {
                continue;
            }
            if (a.v - b.v).abs() <= EPS {
                lo = lo.min(a.u.min(b.u));
                hi = hi.max(a.u.max(b.u));
            } else {
                let t = ((y - a.v) / (b.v - a.v)).clamp(0.0, 1.0);
                let x = a.u + t * (b.u - a.u);
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        if !(lo <= hi) {
            continue;
        }
        let c0 = (lo - EPS).ceil().max(0.0);
        let c1 = (hi + EPS).floor().min((width - 1) as f64);
        if c1 < c0 {
            continue;
        }
        spans.push(RowSpan { row, start: c0 as usize, end: c1 as usize });
    }
    spans
}

/// Fills `spans` with `value` on a black frame.
pub fn fill_spans(width: usize, height: usize, meta: FrameMeta, spans: &[RowSpan], value: u8) -> Frame {
    let mut frame = Frame::black(width, height, meta);
    if value != 0 {
        for s in spans {
            frame.row_mut(s.row)[s.start..=s.end].fill(value);
        }
    }
    frame
}

/// Pixel value of a panel at normalized `brightness`.
pub fn panel_level(brightness: f64) -> u8 {
    (255.0 * brightness.clamp(0.0, 1.0)).round() as u8
}

/// Renders the panel as a uniformly lit quad on a black background. Corners
/// off the sensor are clipped.
pub fn rasterize_panel(
    intr: &CameraIntrinsics,
    pose: &Pose,
    panel: &LedPanel,
    brightness: f64,
) -> Result<Frame, GeometryError> {
    let quad = project_labeled_corners(intr, pose, panel)?;
    let (w, h) = (intr.width_px as usize, intr.height_px as usize);
    let spans = quad_spans(&quad.points, w, h);
    Ok(fill_spans(w, h, FrameMeta::from(intr), &spans, panel_level(brightness)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Attitude, Vec3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn count_lit(f: &Frame) -> usize {
        f.pixels().iter().filter(|&&p| p > 0).count()
    }

    #[test]
    fn nadir_square_area() {
        let intr = CameraIntrinsics::default();
        let panel = LedPanel::default();
        for d in [1.23, 1.3, 1.66] {
            let f = rasterize_panel(&intr, &Pose::nadir(0.0, 0.0, d), &panel, 1.0).unwrap();
            let side = intr.fx_px * panel.side_m / d;
            let n = count_lit(&f) as f64;
            assert!((n - side * side).abs() / (side * side) < 0.01, "{d}: {n}");
            assert!(f.pixels().iter().all(|&p| p == 0 || p == 255));
            // centered on the principal point
            let (mut su, mut sv) = (0.0, 0.0);
            for r in 0..f.height() {
                for c in 0..f.width() {
                    if f.get(c, r) > 0 {
                        su += c as f64;
                        sv += r as f64;
                    }
                }
            }
            assert!((su / n - intr.cx_px).abs() < 1.0 && (sv / n - intr.cy_px).abs() < 1.0);
        }
    }

    #[test]
    fn zero_brightness_is_black() {
        let intr = CameraIntrinsics::default();
        let f = rasterize_panel(&intr, &Pose::nadir(0.0, 0.0, 1.3), &LedPanel::default(), 0.0).unwrap();
        assert_eq!(count_lit(&f), 0);
    }

    fn inside_convex(p: PixelPoint, q: &[PixelPoint; 4]) -> bool {
        let mut sign = 0.0f64;
        for i in 0..4 {
            let a = q[i];
            let b = q[(i + 1) % 4];
            let cross = (b.u - a.u) * (p.v - a.v) - (b.v - a.v) * (p.u - a.u);
            if cross.abs() < 1e-12 {
                continue;
            }
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
        true
    }

    #[test]
    fn tilted_quad_interior_is_lit() {
        let intr = CameraIntrinsics::default();
        let panel = LedPanel::default();
        let pose = Pose::new(Vec3::new(0.2, -0.1, 1.4), Attitude::new(8.0, 352.0, 33.0));
        let quad = project_labeled_corners(&intr, &pose, &panel).unwrap();
        let f = rasterize_panel(&intr, &pose, &panel, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        while checked < 100 {
            // random convex combination of the corners, snapped to a pixel
            let w: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>());
            let s: f64 = w.iter().sum();
            let u: f64 = (0..4).map(|k| w[k] * quad.points[k].u).sum::<f64>() / s;
            let v: f64 = (0..4).map(|k| w[k] * quad.points[k].v).sum::<f64>() / s;
            let px = PixelPoint::new(u.round(), v.round());
            if !inside_convex(px, &quad.points) {
                continue;
            }
            assert_eq!(f.get(px.u as usize, px.v as usize), 255);
            checked += 1;
        }
        // and nothing outside the quad is lit
        for r in (0..f.height()).step_by(7) {
            for c in (0..f.width()).step_by(7) {
                if f.get(c, r) > 0 {
                    assert!(inside_convex(PixelPoint::new(c as f64, r as f64), &quad.points));
                }
            }
        }
    }

    #[test]
    fn area_matches_shoelace_for_large_quads() {
        let intr = CameraIntrinsics::default();
        let panel = LedPanel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let pose = Pose::new(
                Vec3::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), rng.random_range(1.2..2.0)),
                Attitude::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(0.0..360.0)),
            );
            let quad = project_labeled_corners(&intr, &pose, &panel).unwrap();
            if !crate::geometry::in_fov(&quad, &intr) {
                continue;
            }
            let f = rasterize_panel(&intr, &pose, &panel, 1.0).unwrap();
            let n = count_lit(&f) as f64;
            assert!((n - quad.area()).abs() / quad.area() < 0.01);
        }
    }

    #[test]
    fn off_sensor_quads_are_clipped() {
        let q = [
            PixelPoint::new(-50.0, -50.0),
            PixelPoint::new(20.0, -50.0),
            PixelPoint::new(20.0, 10.0),
            PixelPoint::new(-50.0, 10.0),
        ];
        let spans = quad_spans(&q, 100, 100);
        assert_eq!(spans.len(), 11);
        assert!(spans.iter().all(|s| s.start == 0 && s.end == 20));
        let far = [PixelPoint::new(500.0, 500.0); 4];
        assert!(quad_spans(&far, 100, 100).is_empty());
    }
}
