//! LED identity channel: differential Manchester on/off keying, stripe
//! decoding from a rolling-shutter frame, and the id database that anchors
//! a relative fix in world coordinates.

use std::collections::HashMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CornerSet, Vec3};
use crate::render::{quad_spans, Frame, Waveform};

pub const DEFAULT_BIT_RATE_HZ: f64 = 10_000.0;
pub const DEFAULT_MOUNT_HEIGHT_M: f64 = 2.56;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("quad covers no image rows")]
    EmptyQuad,
    #[error("row profile too short: {rows} rows, need {needed}")]
    ProfileTooShort { rows: usize, needed: usize },
    #[error("profile has no transitions (LED not modulated)")]
    NoTransitions,
    #[error("stripe run of {0:.2} half-bit units is not a valid line-code run")]
    InvalidRunLength(f64),
    #[error("decoded bits match no database record")]
    NoMatch,
    #[error("ids {0:#04x} and {1:#04x} are cyclic rotations of each other")]
    AmbiguousMatch(u8, u8),
    #[error("duplicate id {0:#04x}")]
    DuplicateId(u8),
    #[error("LED database: {0}")]
    Database(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LedId(pub u8);

impl LedId {
    /// Bits most significant first.
    pub fn bits(self) -> [bool; 8] {
        std::array::from_fn(|i| self.0 >> (7 - i) & 1 == 1)
    }

    pub fn from_bits(bits: &[bool; 8]) -> Self {
        LedId(bits.iter().fold(0u8, |acc, &b| acc << 1 | b as u8))
    }

    pub fn rotate_left(self, n: u32) -> Self {
        LedId(self.0.rotate_left(n))
    }

    /// Smallest value among the eight cyclic rotations.
    pub fn necklace(self) -> LedId {
        (0..8).map(|k| self.rotate_left(k)).min().unwrap()
    }

    pub fn is_rotation_of(self, other: LedId) -> bool {
        self.necklace() == other.necklace()
    }

    /// Accepts decimal or `0x`-prefixed hex.
    pub fn parse(s: &str) -> Result<Self, CodecError> {
        let s = s.trim();
        let v = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
            Some(hex) => u8::from_str_radix(hex, 16),
            None => s.parse::<u8>(),
        };
        v.map(LedId).map_err(|_| CodecError::Database(format!("bad id {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedRecord {
    pub id: LedId,
    pub world_position: Vec3,
    pub mount_height_m: f64,
}

impl LedRecord {
    pub fn new(id: LedId, world_position: Vec3) -> Self {
        Self { id, world_position, mount_height_m: DEFAULT_MOUNT_HEIGHT_M }
    }
}

/// Immutable set of deployed LEDs. Construction rejects duplicate ids and
/// ids that are cyclic rotations of each other, since a stream without a
/// preamble cannot tell those apart.
#[derive(Debug, Clone, PartialEq)]
pub struct LedDatabase {
    records: Vec<LedRecord>,
    by_necklace: HashMap<u8, usize>,
}

impl LedDatabase {
    pub fn new(records: Vec<LedRecord>) -> Result<Self, CodecError> {
        let mut by_necklace = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if let Some(&j) = by_necklace.get(&r.id.necklace().0) {
                let other: &LedRecord = &records[j];
                return Err(if other.id == r.id {
                    CodecError::DuplicateId(r.id.0)
                } else {
                    CodecError::AmbiguousMatch(other.id.0, r.id.0)
                });
            }
            by_necklace.insert(r.id.necklace().0, i);
        }
        Ok(Self { records, by_necklace })
    }

    pub fn records(&self) -> &[LedRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV with header `id,x,y,z`; `z` is also taken as the mount height.
    pub fn from_csv<R: Read>(input: R) -> Result<Self, CodecError> {
        let err = |e: csv::Error| CodecError::Database(e.to_string());
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(err)?;
            if row.len() != 4 {
                return Err(CodecError::Database(format!("expected 4 columns, got {}", row.len())));
            }
            let id = LedId::parse(&row[0])?;
            let num = |k: usize| {
                row[k]
                    .parse::<f64>()
                    .map_err(|_| CodecError::Database(format!("bad coordinate {:?}", &row[k])))
            };
            let p = Vec3::new(num(1)?, num(2)?, num(3)?);
            records.push(LedRecord { id, world_position: p, mount_height_m: p.z });
        }
        Self::new(records)
    }
}

/// Differential Manchester: a transition at every bit boundary, an extra
/// mid-bit transition for a 0, first level on, MSB first. Two levels per
/// bit. Ids with an odd number of ones end on the opposite level they began
/// with, so their repetitions alternate polarity.
pub fn dm_encode(id: LedId, bit_rate_hz: f64) -> Waveform {
    assert!(bit_rate_hz > 0.0, "bit rate must be positive");
    let mut levels = Vec::with_capacity(16);
    let mut level = true;
    for (i, bit) in id.bits().into_iter().enumerate() {
        if i > 0 {
            level = !level;
        }
        levels.push(level);
        if !bit {
            level = !level;
        }
        levels.push(level);
    }
    Waveform {
        levels,
        level_duration_us: 1e6 / (2.0 * bit_rate_hz),
        repeating: true,
        alternate_polarity: id.0.count_ones() % 2 == 1,
    }
}

/// Mean in-quad brightness per image row, normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowProfile {
    pub first_row: usize,
    pub values: Vec<f64>,
}

impl RowProfile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn extract_row_profile(frame: &Frame, quad: &CornerSet) -> Result<RowProfile, CodecError> {
    let spans = quad_spans(&quad.points, frame.width(), frame.height());
    let Some(first) = spans.first() else { return Err(CodecError::EmptyQuad) };
    let first_row = first.row;
    let last_row = spans[spans.len() - 1].row;
    let mut values = vec![0.0; last_row - first_row + 1];
    let mut filled = vec![false; values.len()];
    for s in &spans {
        let row = &frame.row(s.row)[s.start..=s.end];
        let sum: u32 = row.iter().map(|&p| p as u32).sum();
        values[s.row - first_row] = sum as f64 / (row.len() as f64 * 255.0);
        filled[s.row - first_row] = true;
    }
    // quads never skip rows in practice; fill any gap from the row above
    for i in 1..values.len() {
        if !filled[i] {
            values[i] = values[i - 1];
        }
    }
    Ok(RowProfile { first_row, values })
}

fn boxcar(values: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let n = values.len();
    let mut prefix = vec![0.0; n + 1];
    for (i, v) in values.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Level runs `(level, length_rows)` of the thresholded profile. Edges are
/// placed where the signal crosses the midpoint; hysteresis of `band` on
/// either side suppresses noise chatter.
fn threshold_runs(values: &[f64], mid: f64, band: f64) -> Vec<(bool, usize)> {
    let mut edges = Vec::new();
    let mut state = values[0] >= mid;
    let mut last_other_side = 0;
    for (i, &v) in values.iter().enumerate() {
        if (v >= mid) != state {
            // still inside the band, or the first sample past the midpoint
            if (v >= mid && v > mid + band) || (v < mid && v < mid - band) {
                edges.push(last_other_side + 1);
                state = !state;
                last_other_side = i;
            }
        } else {
            last_other_side = i;
        }
    }
    let mut runs = Vec::with_capacity(edges.len() + 1);
    let mut start = 0;
    let mut level = values[0] >= mid;
    for &e in &edges {
        runs.push((level, e - start));
        start = e;
        level = !level;
    }
    runs.push((level, values.len() - start));
    runs
}

/// Recovers the bit stream carried by a striped row profile.
///
/// The profile is lightly smoothed, binarized at the midpoint of its range
/// with hysteresis, and cut into runs. The two truncated runs at the quad
/// edges are dropped; the rest are classified as one or two half-bit units.
/// Bit boundaries are the half-bit boundaries that always carry a
/// transition; a missing mid-bit transition is a 1. The bits come out in
/// stream order starting at an arbitrary bit, so several repetitions of the
/// id appear rotated.
pub fn dm_decode(
    profile: &RowProfile,
    row_readout_us: f64,
    exposure_us: f64,
    bit_rate_hz: f64,
) -> Result<Vec<bool>, CodecError> {
    assert!(row_readout_us > 0.0 && exposure_us > 0.0 && bit_rate_hz > 0.0);
    let level_us = 1e6 / (2.0 * bit_rate_hz);
    let level_rows = level_us / row_readout_us;
    let needed = (16.0 * level_rows).ceil() as usize;
    if profile.len() < needed {
        return Err(CodecError::ProfileTooShort { rows: profile.len(), needed });
    }
    let mut width = ((level_rows / 4.0).round() as usize).max(1);
    if width % 2 == 0 {
        width += 1;
    }
    let smooth = boxcar(&profile.values, width);
    let max = smooth.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = smooth.iter().cloned().fold(f64::INFINITY, f64::min);
    let range = max - min;
    if range < 0.02 {
        return Err(CodecError::NoTransitions);
    }
    // single-unit stripes swing to within this fraction of the range of
    // the midpoint; keep the hysteresis band well inside it
    let r = (level_us / exposure_us).min(1.0);
    let margin = ((r - (1.0 - r).max(0.0)) / 2.0).max(0.05);
    let band = 0.4 * margin * range;
    let runs = threshold_runs(&smooth, min + range / 2.0, band);
    if runs.len() < 3 {
        return Err(CodecError::NoTransitions);
    }
    let mut slots: Vec<bool> = Vec::new();
    for &(level, len) in &runs[1..runs.len() - 1] {
        let units = len as f64 / level_rows;
        let n = if (0.5..1.5).contains(&units) {
            1
        } else if (1.5..2.5).contains(&units) {
            2
        } else {
            return Err(CodecError::InvalidRunLength(units));
        };
        slots.extend(std::iter::repeat_n(level, n));
    }
    let n = slots.len();
    // transition[k]: level change at the boundary before slot k; both
    // outer boundaries border a dropped run of the other level
    let transition = |k: usize| k == 0 || k == n || slots[k - 1] != slots[k];
    let parity = (0..2)
        .find(|&p| (p..=n).step_by(2).all(transition))
        .ok_or(CodecError::InvalidRunLength(0.0))?;
    let bits: Vec<bool> = (parity..n.saturating_sub(1))
        .step_by(2)
        .map(|k| !transition(k + 1))
        .collect();
    if bits.len() < 8 {
        return Err(CodecError::ProfileTooShort { rows: profile.len(), needed });
    }
    Ok(bits)
}

/// Majority vote per position modulo 8, then a rotation-invariant lookup.
pub fn match_id<'a>(bits: &[bool], db: &'a LedDatabase) -> Result<&'a LedRecord, CodecError> {
    if bits.len() < 8 {
        return Err(CodecError::NoMatch);
    }
    let mut ones = [0usize; 8];
    let mut total = [0usize; 8];
    for (i, &b) in bits.iter().enumerate() {
        total[i % 8] += 1;
        ones[i % 8] += b as usize;
    }
    let word: [bool; 8] = std::array::from_fn(|k| {
        if 2 * ones[k] == total[k] {
            bits[k]
        } else {
            2 * ones[k] > total[k]
        }
    });
    let id = LedId::from_bits(&word);
    db.by_necklace
        .get(&id.necklace().0)
        .map(|&i| &db.records[i])
        .ok_or(CodecError::NoMatch)
}

/// LCS `+z` points down from the panel, world `+z` points up.
pub fn rcs_to_wcs(position_lcs: Vec3, rec: &LedRecord) -> Vec3 {
    rec.world_position + Vec3::new(position_lcs.x, position_lcs.y, -position_lcs.z)
}

/// Extract, decode and match in one call.
pub fn decode_frame<'a>(
    frame: &Frame,
    quad: &CornerSet,
    bit_rate_hz: f64,
    db: &'a LedDatabase,
) -> Result<&'a LedRecord, CodecError> {
    let profile = extract_row_profile(frame, quad)?;
    let bits = dm_decode(&profile, frame.meta.row_readout_us, frame.meta.exposure_us, bit_rate_hz)?;
    match_id(&bits, db)
}
