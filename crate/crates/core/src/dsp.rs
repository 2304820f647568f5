//! Windowing and the filtering primitives shared by the ECG and IMU feature
//! extractors. All filters are length-preserving.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_io::SensorStream;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("stream of {duration_s:.3} s is shorter than the {win_s} s window")]
    StreamTooShort { duration_s: f64, win_s: f64 },
    #[error("median kernel {k} must be odd and no longer than the signal ({len})")]
    BadKernel { k: usize, len: usize },
    #[error("invalid band [{lo_hz}, {hi_hz}] Hz at {rate_hz} Hz sampling")]
    BadBand { lo_hz: f64, hi_hz: f64, rate_hz: f64 },
    #[error("invalid window spec: win {win_s} s, step {step_s} s")]
    BadWindowSpec { win_s: f64, step_s: f64 },
}

pub type Result<T> = std::result::Result<T, DspError>;

/// Window length and hop, shared by sensor and response windowing so that
/// both produce identical center timestamps for the same `t0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub win_s: f64,
    pub step_s: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            win_s: 15.0,
            step_s: 3.0,
        }
    }
}

impl WindowSpec {
    pub fn new(win_s: f64, step_s: f64) -> Result<Self> {
        if !(win_s > 0.0 && step_s > 0.0 && step_s <= win_s) || !win_s.is_finite() {
            return Err(DspError::BadWindowSpec { win_s, step_s });
        }
        Ok(Self { win_s, step_s })
    }

    /// `floor((T - win) / step) + 1` for `T >= win`, else 0.
    pub fn count(&self, duration_s: f64) -> usize {
        if duration_s + 1e-9 < self.win_s {
            return 0;
        }
        ((duration_s - self.win_s) / self.step_s + 1e-9).floor() as usize + 1
    }

    pub fn win_ms(&self) -> i64 {
        (self.win_s * 1000.0).round() as i64
    }

    pub fn start_ms(&self, t0_ms: i64, k: usize) -> i64 {
        t0_ms + (k as f64 * self.step_s * 1000.0).round() as i64
    }

    pub fn center_ms(&self, t0_ms: i64, k: usize) -> i64 {
        self.start_ms(t0_ms, k) + self.win_ms() / 2
    }
}

/// A fixed-length slice of every channel of a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub samples: Vec<Vec<f64>>,
    pub t_start_ms: i64,
    pub t_center_ms: i64,
    pub rate_hz: f64,
}

impl Window {
    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel_count(&self) -> usize {
        self.samples.len()
    }
}

/// Splits a stream into overlapping windows; at the default 15 s / 3 s this
/// is 80% overlap and one window every 3 s.
pub fn sliding_windows(stream: &SensorStream, spec: WindowSpec) -> Result<Vec<Window>> {
    let duration_s = stream.duration_s();
    let count = spec.count(duration_s);
    if count == 0 {
        return Err(DspError::StreamTooShort {
            duration_s,
            win_s: spec.win_s,
        });
    }
    let n = stream.len();
    let len = (spec.win_s * stream.rate_hz).round() as usize;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let start = (k as f64 * spec.step_s * stream.rate_hz).round() as usize;
        if start + len > n {
            break;
        }
        out.push(Window {
            samples: stream
                .channels
                .iter()
                .map(|c| c.values[start..start + len].to_vec())
                .collect(),
            t_start_ms: spec.start_ms(stream.t0_ms, k),
            t_center_ms: spec.center_ms(stream.t0_ms, k),
            rate_hz: stream.rate_hz,
        });
    }
    Ok(out)
}

pub fn level_clip(x: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    debug_assert!(lo < hi);
    x.iter().map(|v| v.max(lo).min(hi)).collect()
}

/// Running median with replicated edges.
pub fn median_filter(x: &[f64], k: usize) -> Result<Vec<f64>> {
    if k % 2 == 0 || k > x.len() {
        return Err(DspError::BadKernel { k, len: x.len() });
    }
    let half = k / 2;
    let n = x.len() as isize;
    let mut buf = vec![0.0; k];
    let mut out = Vec::with_capacity(x.len());
    for i in 0..n {
        for (j, slot) in buf.iter_mut().enumerate() {
            let idx = (i + j as isize - half as isize).clamp(0, n - 1);
            *slot = x[idx as usize];
        }
        buf.sort_by(f64::total_cmp);
        out.push(buf[half]);
    }
    Ok(out)
}

/// Least-squares line fit of `x` against the sample index.
pub fn linear_fit(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.len() < 2 {
        return (x.first().copied().unwrap_or(0.0), 0.0);
    }
    let tm = (n - 1.0) / 2.0;
    let xm = x.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let dt = i as f64 - tm;
        sxy += dt * (v - xm);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    (xm - slope * tm, slope)
}

/// Subtracts the least-squares baseline line.
pub fn detrend_linear(x: &[f64]) -> Vec<f64> {
    let (a, b) = linear_fit(x);
    x.iter().enumerate().map(|(i, v)| v - (a + b * i as f64)).collect()
}

/// One second-order section, transposed direct form II; `a0` is 1.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Filters in place starting from the steady state of a constant input `x0`.
    fn run(&self, x: &mut [f64], x0: f64) {
        let g = self.dc_gain();
        let y0 = g * x0;
        let mut z2 = self.b[2] * x0 - self.a[1] * y0;
        let mut z1 = self.b[1] * x0 - self.a[0] * y0 + z2;
        for v in x.iter_mut() {
            let xin = *v;
            let y = self.b[0] * xin + z1;
            z1 = self.b[1] * xin - self.a[0] * y + z2;
            z2 = self.b[2] * xin - self.a[1] * y;
            *v = y;
        }
    }
}

const BUTTER_ORDER: usize = 4;

fn butterworth_sections(cut_hz: f64, rate_hz: f64, highpass: bool) -> Vec<Biquad> {
    let k = (std::f64::consts::PI * cut_hz / rate_hz).tan();
    (1..=BUTTER_ORDER / 2)
        .map(|i| {
            let theta = std::f64::consts::PI * (2 * i - 1) as f64 / (2 * BUTTER_ORDER) as f64;
            let q = 1.0 / (2.0 * theta.sin());
            let norm = 1.0 / (1.0 + k / q + k * k);
            let a = [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm];
            let b = if highpass {
                [norm, -2.0 * norm, norm]
            } else {
                let b0 = k * k * norm;
                [b0, 2.0 * b0, b0]
            };
            Biquad { b, a }
        })
        .collect()
}

fn run_cascade(sections: &[Biquad], x: &mut [f64]) {
    let mut x0 = x[0];
    for s in sections {
        let g = s.dc_gain();
        s.run(x, x0);
        x0 *= g;
    }
}

/// Zero-phase band-pass: 4th-order Butterworth high-pass at `lo_hz` (skipped
/// when `lo_hz == 0`) cascaded with a 4th-order low-pass at `hi_hz`, applied
/// forward and backward over an odd-reflection padded copy.
pub fn bandpass(x: &[f64], lo_hz: f64, hi_hz: f64, rate_hz: f64) -> Result<Vec<f64>> {
    if !(lo_hz >= 0.0 && lo_hz < hi_hz && hi_hz < rate_hz / 2.0) {
        return Err(DspError::BadBand {
            lo_hz,
            hi_hz,
            rate_hz,
        });
    }
    if x.len() < 2 {
        return Ok(x.to_vec());
    }
    let mut sections = Vec::with_capacity(BUTTER_ORDER);
    if lo_hz > 0.0 {
        sections.extend(butterworth_sections(lo_hz, rate_hz, true));
    }
    sections.extend(butterworth_sections(hi_hz, rate_hz, false));

    let n = x.len();
    let pad = (3 * (2 * sections.len() + 1)).min(n - 1);
    let mut buf = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        buf.push(2.0 * x[0] - x[i]);
    }
    buf.extend_from_slice(x);
    for i in 1..=pad {
        buf.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    run_cascade(&sections, &mut buf);
    buf.reverse();
    run_cascade(&sections, &mut buf);
    buf.reverse();
    Ok(buf[pad..pad + n].to_vec())
}

/// Teager-Kaiser energy `x[i]^2 - x[i-1] x[i+1]`; edges replicate their
/// neighbours.
pub fn teager_energy(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 3 {
        return vec![0.0; n];
    }
    let mut y = vec![0.0; n];
    for i in 1..n - 1 {
        y[i] = x[i] * x[i] - x[i - 1] * x[i + 1];
    }
    y[0] = y[1];
    y[n - 1] = y[n - 2];
    y
}

/// One-sided periodogram normalised so the bins sum to the mean square of
/// the signal. Returns `(frequencies, powers)`.
pub fn periodogram(x: &[f64], rate_hz: f64) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let nn = (n * n) as f64;
    let mut freqs = Vec::with_capacity(half + 1);
    let mut power = Vec::with_capacity(half + 1);
    for (k, c) in buf.iter().enumerate().take(half + 1) {
        let p = c.norm_sqr() / nn;
        let twice = k != 0 && !(n % 2 == 0 && k == half);
        freqs.push(k as f64 * rate_hz / n as f64);
        power.push(if twice { 2.0 * p } else { p });
    }
    (freqs, power)
}

/// Sum of periodogram bins with frequency in `[lo_hz, hi_hz)`; the Nyquist
/// bin is included when `hi_hz` reaches it.
pub fn band_power(x: &[f64], lo_hz: f64, hi_hz: f64, rate_hz: f64) -> Result<f64> {
    let (f, p) = periodogram(x, rate_hz);
    band_power_from(&f, &p, lo_hz, hi_hz, rate_hz)
}

pub fn band_power_from(freqs: &[f64], power: &[f64], lo_hz: f64, hi_hz: f64, rate_hz: f64) -> Result<f64> {
    let nyq = rate_hz / 2.0;
    if !(lo_hz >= 0.0 && lo_hz < hi_hz && hi_hz <= nyq) {
        return Err(DspError::BadBand {
            lo_hz,
            hi_hz,
            rate_hz,
        });
    }
    let include_nyq = hi_hz >= nyq;
    Ok(freqs
        .iter()
        .zip(power)
        .filter(|(&f, _)| f >= lo_hz && (f < hi_hz || (include_nyq && f <= nyq)))
        .map(|(_, &p)| p)
        .sum())
}

/// Crossings of the window mean per second.
pub fn mean_crossing_rate(x: &[f64], rate_hz: f64) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let scale = x.iter().fold(0.0f64, |a, v| a.max((v - m).abs()));
    let tol = scale * 1e-12;
    let mut prev = 0i8;
    let mut crossings = 0usize;
    for v in x {
        let d = v - m;
        let s = if d > tol {
            1
        } else if d < -tol {
            -1
        } else {
            0
        };
        if s != 0 {
            if prev != 0 && s != prev {
                crossings += 1;
            }
            prev = s;
        }
    }
    crossings as f64 * rate_hz / x.len() as f64
}
