//! Binary masks, square-element morphology and connected components.

use super::VisionError;
use crate::geometry::PixelPoint;
use crate::render::{polygon_spans, Frame};

/// One byte per pixel, 0 or 1, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    width: usize,
    height: usize,
    bits: Vec<u8>,
}

impl BitMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![0; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for r in 0..height {
            for c in 0..width {
                m.bits[r * width + c] = f(c, r) as u8;
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[row * self.width + col] != 0
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, on: bool) {
        self.bits[row * self.width + col] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bits
    }

    /// `(col_min, row_min, col_max, row_max)` of the set pixels, inclusive.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for r in 0..self.height {
            let row = &self.bits[r * self.width..(r + 1) * self.width];
            let Some(c0) = row.iter().position(|&b| b != 0) else { continue };
            let c1 = row.iter().rposition(|&b| b != 0).unwrap();
            bb = Some(match bb {
                None => (c0, r, c1, r),
                Some((a, b, c, _)) => (a.min(c0), b, c.max(c1), r),
            });
        }
        bb
    }

    /// Sub-mask `[col0, col0 + w) × [row0, row0 + h)`; pixels outside the
    /// source are unset.
    pub fn crop(&self, col0: isize, row0: isize, w: usize, h: usize) -> BitMask {
        let mut out = BitMask::new(w, h);
        for r in 0..h {
            let sr = row0 + r as isize;
            if sr < 0 || sr >= self.height as isize {
                continue;
            }
            for c in 0..w {
                let sc = col0 + c as isize;
                if sc >= 0 && sc < self.width as isize {
                    out.bits[r * w + c] = self.bits[sr as usize * self.width + sc as usize];
                }
            }
        }
        out
    }

    pub fn is_subset_of(&self, other: &BitMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| a <= b)
    }
}

/// Bit set iff pixel ≥ `threshold`.
pub fn binarize(frame: &Frame, threshold: u8) -> BitMask {
    BitMask {
        width: frame.width(),
        height: frame.height(),
        bits: frame.pixels().iter().map(|&p| (p >= threshold) as u8).collect(),
    }
}

/// Sliding-window OR (`dilate`) or AND (`!dilate`) along one line. Outside
/// the line counts as unset for OR and set for AND.
fn line_pass(src: &[u8], dst: &mut [u8], r: usize, dilate: bool) {
    let n = src.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0u32);
    for &b in src {
        prefix.push(prefix.last().unwrap() + b as u32);
    }
    for i in 0..n {
        let lo = i.saturating_sub(r);
        let hi = (i + r + 1).min(n);
        let set = prefix[hi] - prefix[lo];
        dst[i] = if dilate { (set > 0) as u8 } else { (set as usize == hi - lo) as u8 };
    }
}

fn separable(mask: &BitMask, r: usize, dilate: bool) -> BitMask {
    if r == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width, mask.height);
    let mut tmp = BitMask::new(w, h);
    for row in 0..h {
        let s = row * w..(row + 1) * w;
        line_pass(&mask.bits[s.clone()], &mut tmp.bits[s], r, dilate);
    }
    let mut out = BitMask::new(w, h);
    let mut col_src = vec![0u8; h];
    let mut col_dst = vec![0u8; h];
    for c in 0..w {
        for row in 0..h {
            col_src[row] = tmp.bits[row * w + c];
        }
        line_pass(&col_src, &mut col_dst, r, dilate);
        for row in 0..h {
            out.bits[row * w + c] = col_dst[row];
        }
    }
    out
}

/// Dilation by a `(2r+1)²` square.
pub fn dilate(mask: &BitMask, radius_px: usize) -> BitMask {
    separable(mask, radius_px, true)
}

/// Erosion by a `(2r+1)²` square; the border does not erode.
pub fn erode(mask: &BitMask, radius_px: usize) -> BitMask {
    separable(mask, radius_px, false)
}

/// Dilation followed by erosion: bridges gaps up to `2r` without growing the
/// outline.
pub fn close(mask: &BitMask, radius_px: usize) -> BitMask {
    erode(&dilate(mask, radius_px), radius_px)
}

/// Convex hull of the set pixel centers, counter-clockwise in image
/// coordinates, collinear points dropped.
pub fn convex_hull(mask: &BitMask) -> Vec<PixelPoint> {
    // the row extremes are the only hull candidates
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for r in 0..mask.height {
        let row = &mask.bits[r * mask.width..(r + 1) * mask.width];
        if let Some(c0) = row.iter().position(|&b| b != 0) {
            let c1 = row.iter().rposition(|&b| b != 0).unwrap();
            pts.push((c0 as f64, r as f64));
            if c1 != c0 {
                pts.push((c1 as f64, r as f64));
            }
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts.into_iter().map(|(u, v)| PixelPoint::new(u, v)).collect();
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull.into_iter().map(|(u, v)| PixelPoint::new(u, v)).collect()
}

/// Sets every pixel whose center lies in the convex hull of the set pixels.
pub fn fill_convex_hull(mask: &BitMask) -> BitMask {
    let hull = convex_hull(mask);
    let mut out = BitMask::new(mask.width, mask.height);
    for s in polygon_spans(&hull, mask.width, mask.height) {
        out.bits[s.row * mask.width + s.start..=s.row * mask.width + s.end].fill(1);
    }
    out
}

/// The 8-connected component with the most pixels. Ties go to the component
/// whose topmost-leftmost pixel comes first in `(row, col)` order.
pub fn largest_component(mask: &BitMask) -> Result<BitMask, VisionError> {
    let (w, h) = (mask.width, mask.height);
    let mut label = vec![0u32; w * h];
    let mut best: Option<(u32, usize)> = None;
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if mask.bits[start] == 0 || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        stack.push(start);
        let mut size = 0usize;
        while let Some(i) = stack.pop() {
            size += 1;
            let (c, r) = (i % w, i / w);
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (nr, nc) = (r as isize + dr, c as isize + dc);
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    let j = nr as usize * w + nc as usize;
                    if mask.bits[j] != 0 && label[j] == 0 {
                        label[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
        // scan order visits components by topmost-leftmost pixel, so a
        // strict comparison keeps the earlier one on ties
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((next, size));
        }
    }
    let (keep, _) = best.ok_or(VisionError::EmptyMask)?;
    Ok(BitMask { width: w, height: h, bits: label.iter().map(|&l| (l == keep) as u8).collect() })
}
