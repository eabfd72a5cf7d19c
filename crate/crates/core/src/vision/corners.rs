//! Shi-Tomasi corner scoring with greedy suppression and sub-pixel
//! refinement.

use serde::{Deserialize, Serialize};

use super::morphology::BitMask;
use super::VisionError;
use crate::geometry::PixelPoint;

/// Sub-pixel refinement applied to each detected corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Refinement {
    None,
    /// Score-weighted centroid over the detection window.
    Centroid,
    /// Least-squares point that every nearby gradient is orthogonal to the
    /// displacement from (edge-line intersection).
    #[default]
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CornerParams {
    pub count: usize,
    /// Side of the structure-tensor window, odd.
    pub window: usize,
    pub min_distance_px: f64,
    /// Candidates below this fraction of the best score are ignored.
    pub quality: f64,
    pub smoothing_sigma: f64,
    pub refinement: Refinement,
    /// Half-width of the gradient refinement window.
    pub refine_radius: usize,
}

impl Default for CornerParams {
    fn default() -> Self {
        Self {
            count: 4,
            window: 5,
            min_distance_px: 20.0,
            quality: 0.01,
            smoothing_sigma: 1.0,
            refinement: Refinement::default(),
            refine_radius: 6,
        }
    }
}

/// Dense f64 image used for the gradient computations.
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Plane {
    #[inline]
    fn at(&self, c: usize, r: usize) -> f64 {
        self.data[r * self.w + c]
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let rad = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-rad..=rad).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable convolution with replicated borders.
fn smooth(mask: &BitMask, sigma: f64) -> Plane {
    let (w, h) = (mask.width(), mask.height());
    let src: Vec<f64> = mask.as_bytes().iter().map(|&b| b as f64).collect();
    let k = gaussian_kernel(sigma);
    let rad = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let cc = (c as isize + i as isize - rad).clamp(0, w as isize - 1) as usize;
                acc += kv * src[r * w + cc];
            }
            tmp[r * w + c] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let rr = (r as isize + i as isize - rad).clamp(0, h as isize - 1) as usize;
                acc += kv * tmp[rr * w + c];
            }
            out[r * w + c] = acc;
        }
    }
    Plane { w, h, data: out }
}

/// Central differences; one-sided at the border.
fn gradients(img: &Plane) -> (Plane, Plane) {
    let (w, h) = (img.w, img.h);
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let (cl, cr) = (c.saturating_sub(1), (c + 1).min(w - 1));
            let (ru, rd) = (r.saturating_sub(1), (r + 1).min(h - 1));
            gx[r * w + c] = (img.at(cr, r) - img.at(cl, r)) / (cr - cl).max(1) as f64;
            gy[r * w + c] = (img.at(c, rd) - img.at(c, ru)) / (rd - ru).max(1) as f64;
        }
    }
    (Plane { w, h, data: gx }, Plane { w, h, data: gy })
}

/// Box sum over a `(2r+1)²` window, zero outside.
fn box_sum(p: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let mut tmp = vec![0.0; w * h];
    for row in 0..h {
        let line = &p[row * w..(row + 1) * w];
        let mut acc: f64 = line[..r.min(w)].iter().sum();
        for c in 0..w {
            if c + r < w {
                acc += line[c + r];
            }
            if c > r {
                acc -= line[c - r - 1];
            }
            tmp[row * w + c] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for c in 0..w {
        let mut acc: f64 = (0..r.min(h)).map(|row| tmp[row * w + c]).sum();
        for row in 0..h {
            if row + r < h {
                acc += tmp[(row + r) * w + c];
            }
            if row > r {
                acc -= tmp[(row - r - 1) * w + c];
            }
            out[row * w + c] = acc;
        }
    }
    out
}

/// Smaller eigenvalue of the windowed structure tensor at every pixel.
fn min_eigen_scores(gx: &Plane, gy: &Plane, window: usize) -> Vec<f64> {
    let (w, h) = (gx.w, gx.h);
    let r = window / 2;
    let xx: Vec<f64> = gx.data.iter().map(|g| g * g).collect();
    let yy: Vec<f64> = gy.data.iter().map(|g| g * g).collect();
    let xy: Vec<f64> = gx.data.iter().zip(&gy.data).map(|(a, b)| a * b).collect();
    let (a, c, b) = (box_sum(&xx, w, h, r), box_sum(&yy, w, h, r), box_sum(&xy, w, h, r));
    (0..w * h)
        .map(|i| {
            let half_tr = (a[i] + c[i]) / 2.0;
            let d = ((a[i] - c[i]) / 2.0).hypot(b[i]);
            (half_tr - d).max(0.0)
        })
        .collect()
}

/// Shi-Tomasi detection on a binary mask. Returns `params.count` corners in
/// descending score order.
pub fn detect_corners(mask: &BitMask, params: &CornerParams) -> Result<Vec<PixelPoint>, VisionError> {
    let (w, h) = (mask.width(), mask.height());
    if w < 3 || h < 3 {
        return Err(VisionError::TooFewCorners { found: 0, wanted: params.count });
    }
    let img = smooth(mask, params.smoothing_sigma);
    let (gx, gy) = gradients(&img);
    let score = min_eigen_scores(&gx, &gy, params.window.max(1));
    let best = score.iter().cloned().fold(0.0, f64::max);
    if best <= 0.0 {
        return Err(VisionError::TooFewCorners { found: 0, wanted: params.count });
    }
    let floor = params.quality * best;
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let s = score[r * w + c];
            if s < floor || s <= 0.0 {
                continue;
            }
            // 3×3 local maximum; plateaus keep their first pixel in scan order
            let mut is_max = true;
            'nb: for dr in 0..3 {
                for dc in 0..3 {
                    if dr == 1 && dc == 1 {
                        continue;
                    }
                    let (nr, nc) = (r + dr - 1, c + dc - 1);
                    let o = score[nr * w + nc];
                    let earlier = (nr, nc) < (r, c);
                    if o > s || (o == s && earlier) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                cands.push((s, r, c));
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut picked: Vec<(usize, usize)> = Vec::new();
    let min_d2 = params.min_distance_px * params.min_distance_px;
    for &(_, r, c) in &cands {
        let far = picked.iter().all(|&(pr, pc)| {
            let (dr, dc) = (pr as f64 - r as f64, pc as f64 - c as f64);
            dr * dr + dc * dc >= min_d2
        });
        if far {
            picked.push((r, c));
            if picked.len() == params.count {
                break;
            }
        }
    }
    if picked.len() < params.count {
        return Err(VisionError::TooFewCorners { found: picked.len(), wanted: params.count });
    }
    Ok(picked
        .into_iter()
        .map(|(r, c)| match params.refinement {
            Refinement::None => PixelPoint::new(c as f64, r as f64),
            Refinement::Centroid => centroid_refine(&score, w, h, c, r, params.window / 2),
            Refinement::Gradient => gradient_refine(&gx, &gy, c, r, params.refine_radius)
                .unwrap_or_else(|| centroid_refine(&score, w, h, c, r, params.window / 2)),
        })
        .collect())
}

fn centroid_refine(score: &[f64], w: usize, h: usize, c: usize, r: usize, rad: usize) -> PixelPoint {
    let (mut su, mut sv, mut sw) = (0.0, 0.0, 0.0);
    for rr in r.saturating_sub(rad)..=(r + rad).min(h - 1) {
        for cc in c.saturating_sub(rad)..=(c + rad).min(w - 1) {
            let s = score[rr * w + cc];
            su += s * cc as f64;
            sv += s * rr as f64;
            sw += s;
        }
    }
    if sw > 0.0 {
        PixelPoint::new(su / sw, sv / sw)
    } else {
        PixelPoint::new(c as f64, r as f64)
    }
}

/// Iterates `q = (Σ g gᵀ)⁻¹ Σ g gᵀ p` over a Gaussian-weighted window
/// centred on the current estimate. `None` if the system is singular or
/// the estimate runs away from the start.
fn gradient_refine(gx: &Plane, gy: &Plane, c: usize, r: usize, rad: usize) -> Option<PixelPoint> {
    let (w, h) = (gx.w, gx.h);
    let (mut qu, mut qv) = (c as f64, r as f64);
    let sigma = rad as f64 / 2.0;
    for _ in 0..20 {
        let (cu, cv) = (qu.round() as isize, qv.round() as isize);
        let (mut a, mut b, mut d, mut bu, mut bv) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for dr in -(rad as isize)..=rad as isize {
            for dc in -(rad as isize)..=rad as isize {
                let (pr, pc) = (cv + dr, cu + dc);
                if pr < 0 || pc < 0 || pr >= h as isize || pc >= w as isize {
                    continue;
                }
                let (pu, pv) = (pc as f64, pr as f64);
                let dist2 = (pu - qu).powi(2) + (pv - qv).powi(2);
                let wt = (-dist2 / (2.0 * sigma * sigma)).exp();
                let i = pr as usize * w + pc as usize;
                let (x, y) = (gx.data[i], gy.data[i]);
                let (xx, xy, yy) = (wt * x * x, wt * x * y, wt * y * y);
                a += xx;
                b += xy;
                d += yy;
                bu += xx * pu + xy * pv;
                bv += xy * pu + yy * pv;
            }
        }
        let det = a * d - b * b;
        if det.abs() < 1e-12 * (a + d).powi(2).max(1e-300) {
            return None;
        }
        let nu = (d * bu - b * bv) / det;
        let nv = (a * bv - b * bu) / det;
        let step = (nu - qu).hypot(nv - qv);
        qu = nu;
        qv = nv;
        if (qu - c as f64).hypot(qv - r as f64) > rad as f64 {
            return None;
        }
        if step < 1e-3 {
            break;
        }
    }
    Some(PixelPoint::new(qu, qv))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_mask(off_c: usize, off_r: usize, side: usize) -> BitMask {
        BitMask::from_fn(off_c + side + 60, off_r + side + 60, |c, r| {
            (off_c..off_c + side).contains(&c) && (off_r..off_r + side).contains(&r)
        })
    }

    fn nearest(p: PixelPoint, truth: &[PixelPoint]) -> f64 {
        truth.iter().map(|t| t.dist(p)).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn square_corners_each_refinement() {
        // pixel centres off..off+side-1 set: the continuous outline is half a
        // pixel outside them
        let (oc, or, side) = (37, 53, 400);
        let m = square_mask(oc, or, side);
        let lo_c = oc as f64 - 0.5;
        let lo_r = or as f64 - 0.5;
        let s = side as f64;
        let truth = [
            PixelPoint::new(lo_c, lo_r),
            PixelPoint::new(lo_c + s, lo_r),
            PixelPoint::new(lo_c + s, lo_r + s),
            PixelPoint::new(lo_c, lo_r + s),
        ];
        // the score centroid sits inside the blob: the measured bias is just
        // under 2 px, which is why the edge-intersection refinement is default
        for (refinement, tol) in [(Refinement::Centroid, 2.5), (Refinement::Gradient, 0.25)] {
            let params = CornerParams { refinement, ..Default::default() };
            let pts = detect_corners(&m, &params).unwrap();
            assert_eq!(pts.len(), 4);
            for p in &pts {
                let e = nearest(*p, &truth);
                assert!(e < tol, "{refinement:?}: {p:?} off by {e}");
            }
            let mut hit: Vec<usize> = pts
                .iter()
                .map(|p| (0..4).min_by(|&a, &b| truth[a].dist(*p).total_cmp(&truth[b].dist(*p))).unwrap())
                .collect();
            hit.sort();
            assert_eq!(hit, vec![0, 1, 2, 3]);
        }
        let pts = detect_corners(&m, &CornerParams::default()).unwrap();
        assert!(pts.iter().all(|p| nearest(*p, &truth) < 1.0));
    }

    #[test]
    fn disk_is_not_a_quad() {
        let (cx, cy, rad) = (150.0, 150.0, 100.0);
        let m = BitMask::from_fn(300, 300, |c, r| (c as f64 - cx).hypot(r as f64 - cy) <= rad);
        match detect_corners(&m, &CornerParams::default()) {
            Err(VisionError::TooFewCorners { .. }) => {}
            Ok(pts) => {
                // four boundary points: their quad is far smaller than the disk
                let mut q = [PixelPoint::default(); 4];
                q.copy_from_slice(&pts);
                let quad = super::super::order_corners(q).unwrap();
                assert!(quad.area() < 0.8 * m.count() as f64);
            }
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn empty_mask_has_no_corners() {
        assert!(matches!(
            detect_corners(&BitMask::new(50, 50), &CornerParams::default()),
            Err(VisionError::TooFewCorners { found: 0, .. })
        ));
    }

    #[test]
    fn box_sum_matches_direct_sum() {
        let (w, h) = (9, 7);
        let p: Vec<f64> = (0..w * h).map(|i| ((i * 37) % 11) as f64).collect();
        let got = box_sum(&p, w, h, 2);
        for r in 0..h {
            for c in 0..w {
                let mut s = 0.0;
                for rr in r.saturating_sub(2)..=(r + 2).min(h - 1) {
                    for cc in c.saturating_sub(2)..=(c + 2).min(w - 1) {
                        s += p[rr * w + cc];
                    }
                }
                assert!((got[r * w + c] - s).abs() < 1e-9);
            }
        }
    }
}
