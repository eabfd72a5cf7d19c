//! On-off keyed LED waveform and the rolling-shutter row integration that
//! turns it into horizontal stripes.

use serde::{Deserialize, Serialize};

use super::frame::Frame;
use super::raster::quad_spans;
use crate::geometry::CornerSet;

/// Binary LED drive levels of equal duration.
///
/// When `repeating`, the levels are extended periodically. With
/// `alternate_polarity` every other repetition is inverted, which is how a
/// differential line code continues when a block ends on the opposite level
/// it started on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub levels: Vec<bool>,
    pub level_duration_us: f64,
    pub repeating: bool,
    #[serde(default)]
    pub alternate_polarity: bool,
}

impl Waveform {
    pub fn constant_on() -> Self {
        Self {
            levels: vec![true],
            level_duration_us: 1.0,
            repeating: true,
            alternate_polarity: false,
        }
    }

    /// Square wave with the given on and off durations, starting on.
    pub fn square(on_us: f64, off_us: f64) -> Self {
        // express as levels of a common unit when durations are equal
        assert!(on_us > 0.0 && off_us > 0.0);
        if on_us == off_us {
            return Self {
                levels: vec![true, false],
                level_duration_us: on_us,
                repeating: true,
                alternate_polarity: false,
            };
        }
        let unit = gcd_f64(on_us, off_us);
        let n_on = (on_us / unit).round() as usize;
        let n_off = (off_us / unit).round() as usize;
        let mut levels = vec![true; n_on];
        levels.extend(std::iter::repeat_n(false, n_off));
        Self { levels, level_duration_us: unit, repeating: true, alternate_polarity: false }
    }

    /// One full period of the periodic extension.
    pub fn cycle(&self) -> Vec<bool> {
        let mut c = self.levels.clone();
        if self.repeating && self.alternate_polarity {
            c.extend(self.levels.iter().map(|l| !l));
        }
        c
    }

    pub fn period_us(&self) -> f64 {
        self.cycle().len() as f64 * self.level_duration_us
    }

    /// Fraction of one cycle spent on.
    pub fn duty_cycle(&self) -> f64 {
        let c = self.cycle();
        c.iter().filter(|&&l| l).count() as f64 / c.len() as f64
    }

    /// Run lengths (in levels) of the cyclic level sequence, starting at the
    /// first transition.
    pub fn cyclic_runs(&self) -> Vec<usize> {
        let c = self.cycle();
        let n = c.len();
        let Some(start) = (0..n).find(|&i| c[i] != c[(i + n - 1) % n]) else {
            return vec![n];
        };
        let mut runs = Vec::new();
        let mut len = 0;
        for k in 0..n {
            let i = (start + k) % n;
            if k > 0 && c[i] != c[(i + n - 1) % n] {
                runs.push(len);
                len = 0;
            }
            len += 1;
        }
        runs.push(len);
        runs
    }

    fn validate(&self) {
        assert!(!self.levels.is_empty(), "waveform has no levels");
        assert!(self.level_duration_us > 0.0, "level duration must be positive");
    }
}

fn gcd_f64(a: f64, b: f64) -> f64 {
    let (mut a, mut b) = (a, b);
    while b > 1e-9 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Cumulative on-time of the (extended) waveform over `[0, t]`.
struct OnTime {
    cycle: Vec<bool>,
    prefix: Vec<u32>,
    dur: f64,
    repeating: bool,
}

impl OnTime {
    fn new(w: &Waveform) -> Self {
        w.validate();
        let cycle = w.cycle();
        let mut prefix = Vec::with_capacity(cycle.len() + 1);
        prefix.push(0);
        for &l in &cycle {
            prefix.push(prefix.last().unwrap() + l as u32);
        }
        Self { cycle, prefix, dur: w.level_duration_us, repeating: w.repeating }
    }

    fn period(&self) -> f64 {
        self.cycle.len() as f64 * self.dur
    }

    fn within_cycle(&self, r: f64) -> f64 {
        let n = self.cycle.len();
        let k = ((r / self.dur).floor() as usize).min(n - 1);
        let frac = r - k as f64 * self.dur;
        self.prefix[k] as f64 * self.dur + if self.cycle[k] { frac } else { 0.0 }
    }

    fn until(&self, t: f64) -> f64 {
        let p = self.period();
        let on_per_cycle = *self.prefix.last().unwrap() as f64 * self.dur;
        if !self.repeating {
            return self.within_cycle(t.clamp(0.0, p));
        }
        let q = (t / p).floor();
        let r = (t - q * p).clamp(0.0, p);
        q * on_per_cycle + self.within_cycle(r)
    }

    fn fraction(&self, start: f64, exposure: f64) -> f64 {
        ((self.until(start + exposure) - self.until(start)) / exposure).clamp(0.0, 1.0)
    }
}

/// Fraction of `[row_start_us, row_start_us + exposure_us]` during which the
/// waveform is on. Exact piecewise-linear integration.
pub fn row_exposure_fraction(w: &Waveform, row_start_us: f64, exposure_us: f64) -> f64 {
    assert!(exposure_us > 0.0, "exposure must be positive");
    OnTime::new(w).fraction(row_start_us, exposure_us)
}

/// Exposure fractions for `rows` consecutive image rows starting at row 0,
/// where row `r` starts integrating at `phase_us + r · row_readout_us`.
pub fn row_fractions(w: &Waveform, phase_us: f64, row_readout_us: f64, exposure_us: f64, rows: usize) -> Vec<f64> {
    assert!(exposure_us > 0.0, "exposure must be positive");
    let on = OnTime::new(w);
    (0..rows)
        .map(|r| on.fraction(phase_us + r as f64 * row_readout_us, exposure_us))
        .collect()
}

/// Scales every pixel inside `quad` by its row's exposure fraction. The
/// waveform phase at row 0 is `phase_us`; background pixels are untouched.
pub fn apply_rolling_shutter(mut frame: Frame, quad: &CornerSet, w: &Waveform, phase_us: f64) -> Frame {
    let spans = quad_spans(&quad.points, frame.width(), frame.height());
    if spans.is_empty() {
        return frame;
    }
    let on = OnTime::new(w);
    let meta = frame.meta;
    for s in &spans {
        let f = on.fraction(phase_us + s.row as f64 * meta.row_readout_us, meta.exposure_us);
        if f >= 1.0 {
            continue;
        }
        let row = &mut frame.row_mut(s.row)[s.start..=s.end];
        let first = row[0];
        if row.iter().fold(true, |acc, &p| acc & (p == first)) {
            row.fill((first as f64 * f).round() as u8);
            continue;
        }
        let (mut last_in, mut last_out) = (0u8, 0u8);
        for p in row {
            if *p != last_in {
                last_in = *p;
                last_out = (*p as f64 * f).round() as u8;
            }
            *p = last_out;
        }
    }
    frame
}
