use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::RenderError;
use crate::geometry::CameraIntrinsics;

/// Camera timing copied onto every frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub exposure_us: f64,
    pub row_readout_us: f64,
    pub iso_gain: f64,
}

impl From<&CameraIntrinsics> for FrameMeta {
    fn from(i: &CameraIntrinsics) -> Self {
        Self {
            exposure_us: i.exposure_us,
            row_readout_us: i.row_readout_us,
            iso_gain: i.iso_gain,
        }
    }
}

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    pub meta: FrameMeta,
}

impl Frame {
    pub fn black(width: usize, height: usize, meta: FrameMeta) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height],
            meta,
        }
    }

    pub fn from_pixels(
        width: usize,
        height: usize,
        pixels: Vec<u8>,
        meta: FrameMeta,
    ) -> Result<Self, RenderError> {
        if pixels.len() != width * height {
            return Err(RenderError::Pgm(format!(
                "pixel buffer has {} bytes, expected {}",
                pixels.len(),
                width * height
            )));
        }
        Ok(Self { width, height, pixels, meta })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[u8] {
        &self.pixels[row * self.width..(row + 1) * self.width]
    }

    #[inline]
    pub fn row_mut(&mut self, row: usize) -> &mut [u8] {
        let w = self.width;
        &mut self.pixels[row * w..(row + 1) * w]
    }

    /// Binary PGM (P5) with a metadata comment.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> Result<(), RenderError> {
        write!(
            out,
            "P5\n# vlp exposure_us={} row_readout_us={} iso_gain={}\n{} {}\n255\n",
            self.meta.exposure_us, self.meta.row_readout_us, self.meta.iso_gain, self.width, self.height
        )?;
        out.write_all(&self.pixels)?;
        Ok(())
    }

    /// Reads a P5 PGM. Metadata missing from the comment falls back to the
    /// default camera timing.
    pub fn read_pgm<R: Read>(input: R) -> Result<Self, RenderError> {
        let mut r = BufReader::new(input);
        let mut meta = FrameMeta::from(&CameraIntrinsics::default());
        let mut header: Vec<String> = Vec::new();
        let mut line = String::new();
        while header.len() < 4 {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(RenderError::Pgm("truncated header".into()));
            }
            let text = line.trim();
            if let Some(comment) = text.strip_prefix('#') {
                parse_meta_comment(comment, &mut meta);
                continue;
            }
            let data = text.split('#').next().unwrap_or("");
            header.extend(data.split_whitespace().map(str::to_string));
        }
        if header[0] != "P5" {
            return Err(RenderError::Pgm(format!("unsupported magic {:?}", header[0])));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| RenderError::Pgm(format!("bad header field {s:?}")))
        };
        let (width, height, maxval) = (num(&header[1])?, num(&header[2])?, num(&header[3])?);
        if maxval != 255 {
            return Err(RenderError::Pgm(format!("unsupported maxval {maxval}")));
        }
        let mut pixels = vec![0; width * height];
        r.read_exact(&mut pixels)?;
        Self::from_pixels(width, height, pixels, meta)
    }
}

fn parse_meta_comment(comment: &str, meta: &mut FrameMeta) {
    for kv in comment.split_whitespace() {
        let Some((k, v)) = kv.split_once('=') else { continue };
        let Ok(v) = v.parse::<f64>() else { continue };
        match k {
            "exposure_us" => meta.exposure_us = v,
            "row_readout_us" => meta.row_readout_us = v,
            "iso_gain" => meta.iso_gain = v,
            _ => {}
        }
    }
}
