//! Beat fiducials and the morphological feature vector of one ECG window.
//!
//! Two views of each window are kept: the detection view (median, detrend,
//! 5-25 Hz band-pass) where R peaks are found, and the morphology view
//! (median, detrend) where R is refined and Q, S, T and all amplitudes,
//! widths and distances are measured.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, DspError, Window};

#[derive(Debug, Error, PartialEq)]
pub enum EcgError {
    #[error("fewer than {min} beats found ({found})")]
    NoBeatsFound { found: usize, min: usize },
    #[error("beat at sample {r} has its search segment outside the window")]
    SegmentOutOfBounds { r: usize },
    #[error("beat at sample {r} has no measurable wave")]
    DegenerateBeat { r: usize },
    #[error("window has no channels")]
    EmptyWindow,
    #[error(transparent)]
    Dsp(#[from] DspError),
}

pub type Result<T> = std::result::Result<T, EcgError>;

/// Morphology fields in their exported order.
pub const MORPHOLOGY_FIELDS: [&str; 10] = [
    "r_mag",
    "r_prom",
    "r_width_ms",
    "t_mag",
    "t_width_ms",
    "qs_dist_ms",
    "st_dist_ms",
    "bpm",
    "r_power",
    "t_power",
];

pub const ECG_FEATURE_DIM: usize = 2 * MORPHOLOGY_FIELDS.len();

/// `<field>_mean, <field>_std` for every morphology field, interleaved.
pub fn ecg_feature_names() -> Vec<String> {
    MORPHOLOGY_FIELDS
        .iter()
        .flat_map(|f| [format!("{f}_mean"), format!("{f}_std")])
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EcgConfig {
    pub median_kernel: usize,
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    pub lockout_ms: f64,
    pub threshold_frac: f64,
    pub repair_threshold_frac: f64,
    pub rr_tolerance: f64,
    pub q_search_ms: f64,
    pub s_search_ms: f64,
    pub t_search_ms: f64,
    /// Half-width of the neighbourhood used to move a detected R onto the
    /// morphology view's maximum.
    pub refine_ms: f64,
    pub min_beats: usize,
}

impl Default for EcgConfig {
    fn default() -> Self {
        Self {
            median_kernel: 5,
            band_lo_hz: 5.0,
            band_hi_hz: 25.0,
            lockout_ms: 200.0,
            threshold_frac: 0.7,
            repair_threshold_frac: 0.5,
            rr_tolerance: 0.2,
            q_search_ms: 100.0,
            s_search_ms: 100.0,
            t_search_ms: 500.0,
            refine_ms: 25.0,
            min_beats: 3,
        }
    }
}

fn ms_to_samples(ms: f64, rate_hz: f64) -> usize {
    (ms * rate_hz / 1000.0).round() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedEcg {
    pub detect: Vec<f64>,
    pub morph: Vec<f64>,
    pub rate_hz: f64,
}

pub fn preprocess(lead: &[f64], rate_hz: f64, cfg: &EcgConfig) -> Result<PreparedEcg> {
    let med = dsp::median_filter(lead, cfg.median_kernel)?;
    let morph = dsp::detrend_linear(&med);
    let detect = dsp::bandpass(&morph, cfg.band_lo_hz, cfg.band_hi_hz, rate_hz)?;
    Ok(PreparedEcg {
        detect,
        morph,
        rate_hz,
    })
}

fn local_maxima(x: &[f64], lo: usize, hi: usize) -> impl Iterator<Item = usize> + '_ {
    (lo.max(1)..hi.min(x.len().saturating_sub(1))).filter(move |&i| x[i] >= x[i - 1] && x[i] > x[i + 1])
}

/// Peaks above `threshold_frac` of the window maximum, at least `lockout_ms`
/// apart; within a lockout the larger peak wins. Sorted by index.
pub fn detect_r_peaks(signal: &[f64], rate_hz: f64, cfg: &EcgConfig) -> Result<Vec<usize>> {
    let max = signal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(EcgError::NoBeatsFound {
            found: 0,
            min: cfg.min_beats,
        });
    }
    let thr = cfg.threshold_frac * max;
    let mut cands: Vec<usize> = local_maxima(signal, 0, signal.len()).filter(|&i| signal[i] >= thr).collect();
    cands.sort_by(|&a, &b| signal[b].total_cmp(&signal[a]).then(a.cmp(&b)));
    let lockout = ms_to_samples(cfg.lockout_ms, rate_hz);
    let mut kept: Vec<usize> = Vec::new();
    for c in cands {
        if kept.iter().all(|&k| k.abs_diff(c) >= lockout) {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    if kept.len() < cfg.min_beats {
        return Err(EcgError::NoBeatsFound {
            found: kept.len(),
            min: cfg.min_beats,
        });
    }
    Ok(kept)
}

fn mean_interval(r: &[usize]) -> f64 {
    (r[r.len() - 1] - r[0]) as f64 / (r.len() - 1) as f64
}

/// Repairs the R-R sequence against the whole-window mean interval: gaps
/// shorter than `1 - tol` of it lose their smaller peak, gaps longer than
/// `1 + tol` of it are re-searched at the lowered threshold.
pub fn correct_missed_peaks(r: &[usize], signal: &[f64], rate_hz: f64, cfg: &EcgConfig) -> Vec<usize> {
    let mut peaks = r.to_vec();
    peaks.sort_unstable();
    peaks.dedup();
    if peaks.len() < 3 {
        return peaks;
    }
    let lo_frac = 1.0 - cfg.rr_tolerance;
    let hi_frac = 1.0 + cfg.rr_tolerance;

    // close gaps first, one removal at a time so the mean tracks the repair
    while peaks.len() > 2 {
        let mean = mean_interval(&peaks);
        let worst = peaks
            .windows(2)
            .enumerate()
            .filter(|(_, w)| ((w[1] - w[0]) as f64) < lo_frac * mean)
            .min_by_key(|(_, w)| w[1] - w[0]);
        let Some((i, w)) = worst else { break };
        let drop = if signal[w[0]] < signal[w[1]] { i } else { i + 1 };
        peaks.remove(drop);
    }

    let lockout = ms_to_samples(cfg.lockout_ms, rate_hz);
    for _ in 0..r.len() * 2 {
        if peaks.len() < 2 {
            break;
        }
        let mean = mean_interval(&peaks);
        let mut inserted = false;
        for i in 0..peaks.len() - 1 {
            let (a, b) = (peaks[i], peaks[i + 1]);
            if ((b - a) as f64) <= hi_frac * mean {
                continue;
            }
            let local = signal[a].max(signal[b]);
            let thr = cfg.repair_threshold_frac * local;
            let best = local_maxima(signal, a + lockout, b.saturating_sub(lockout) + 1)
                .filter(|&j| signal[j] >= thr)
                .max_by(|&x, &y| signal[x].total_cmp(&signal[y]));
            if let Some(j) = best {
                peaks.insert(i + 1, j);
                inserted = true;
                break;
            }
        }
        if !inserted {
            break;
        }
    }
    peaks
}

/// Indices `i` whose interval `r[i+1] - r[i]` deviates from the mean by more
/// than `tol` (fractional).
pub fn irregular_intervals(r: &[usize], tol: f64) -> Vec<usize> {
    if r.len() < 2 {
        return Vec::new();
    }
    let mean = mean_interval(r);
    r.windows(2)
        .enumerate()
        .filter(|(_, w)| (((w[1] - w[0]) as f64) - mean).abs() > tol * mean)
        .map(|(i, _)| i)
        .collect()
}

/// Moves each peak to the morphology maximum within `refine_ms`.
pub fn refine_peaks(r: &[usize], morph: &[f64], rate_hz: f64, cfg: &EcgConfig) -> Vec<usize> {
    let h = ms_to_samples(cfg.refine_ms, rate_hz);
    let mut out: Vec<usize> = r
        .iter()
        .map(|&p| {
            let lo = p.saturating_sub(h);
            let hi = (p + h + 1).min(morph.len());
            argmax(morph, lo, hi)
        })
        .collect();
    out.dedup();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeatFiducials {
    pub q_idx: usize,
    pub r_idx: usize,
    pub s_idx: usize,
    pub t_idx: usize,
}

/// Index of the extreme of `x[lo..hi]`. On a plateau (as left by the median
/// filter, tilted slightly by detrending) the plateau's middle sample.
fn extreme(x: &[f64], lo: usize, hi: usize, maximum: bool) -> usize {
    if hi <= lo {
        return lo;
    }
    let better = |a: f64, b: f64| if maximum { a > b } else { a < b };
    let mut best = lo;
    for i in lo + 1..hi {
        if better(x[i], x[best]) {
            best = i;
        }
    }
    let tie = 1e-4 * x[best].abs().max(1e-3);
    let mut start = best;
    while start > lo && (x[start - 1] - x[best]).abs() <= tie {
        start -= 1;
    }
    let mut end = best;
    while end + 1 < hi && (x[end + 1] - x[best]).abs() <= tie {
        end += 1;
    }
    start + (end - start) / 2
}

fn argmin(x: &[f64], lo: usize, hi: usize) -> usize {
    extreme(x, lo, hi, false)
}

fn argmax(x: &[f64], lo: usize, hi: usize) -> usize {
    extreme(x, lo, hi, true)
}

/// Q is the minimum in `[r - q_search, r)`, S the minimum in `(r, r + s_search]`
/// and T the maximum in `(S, r + t_search]`. When the next beat is known the
/// T segment stops where that beat's Q search begins.
pub fn locate_qst(
    r: usize,
    next_r: Option<usize>,
    morph: &[f64],
    rate_hz: f64,
    cfg: &EcgConfig,
) -> Result<BeatFiducials> {
    let q_len = ms_to_samples(cfg.q_search_ms, rate_hz);
    let s_len = ms_to_samples(cfg.s_search_ms, rate_hz);
    let t_len = ms_to_samples(cfg.t_search_ms, rate_hz);
    if r < q_len || r + t_len >= morph.len() {
        return Err(EcgError::SegmentOutOfBounds { r });
    }
    let q = argmin(morph, r - q_len, r);
    let s = argmin(morph, r + 1, r + s_len + 1);
    let mut t_end = r + t_len;
    if let Some(n) = next_r {
        t_end = t_end.min(n.saturating_sub(q_len));
    }
    if t_end <= s + 1 {
        return Err(EcgError::DegenerateBeat { r });
    }
    let t = argmax(morph, s + 1, t_end + 1);
    if !(q < r && r < s && s < t) {
        return Err(EcgError::DegenerateBeat { r });
    }
    Ok(BeatFiducials {
        q_idx: q,
        r_idx: r,
        s_idx: s,
        t_idx: t,
    })
}

/// Width, in samples, of the peak at `p` measured at `level`, with linear
/// interpolation between samples, searching no further than `[lo, hi]`.
fn width_at(x: &[f64], p: usize, level: f64, lo: usize, hi: usize) -> Option<f64> {
    let mut i = p;
    while i > lo && x[i - 1] > level {
        i -= 1;
    }
    if i == lo {
        return None;
    }
    let left = (i - 1) as f64 + (level - x[i - 1]) / (x[i] - x[i - 1]);
    let mut j = p;
    while j < hi && x[j + 1] > level {
        j += 1;
    }
    if j == hi {
        return None;
    }
    let right = j as f64 + (x[j] - level) / (x[j] - x[j + 1]);
    Some(right - left)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatMorphology {
    pub r_mag: f64,
    pub r_prom: f64,
    pub r_width_ms: f64,
    pub t_mag: f64,
    pub t_width_ms: f64,
    pub qs_dist_ms: f64,
    pub st_dist_ms: f64,
    pub bpm: f64,
    /// Triangle area `r_width * r_prom / 2`, in mV·s.
    pub r_power: f64,
    /// Triangle area `t_width * |t_mag| / 2`, in mV·s.
    pub t_power: f64,
}

impl BeatMorphology {
    pub fn fields(&self) -> [f64; 10] {
        [
            self.r_mag,
            self.r_prom,
            self.r_width_ms,
            self.t_mag,
            self.t_width_ms,
            self.qs_dist_ms,
            self.st_dist_ms,
            self.bpm,
            self.r_power,
            self.t_power,
        ]
    }
}

/// Isoelectric level ahead of the beat: the mean of the PR segment taken as
/// 100 to 70 ms before R.
fn isoelectric(morph: &[f64], r: usize, rate_hz: f64) -> f64 {
    let lo = r.saturating_sub(ms_to_samples(100.0, rate_hz));
    let hi = r.saturating_sub(ms_to_samples(70.0, rate_hz)).max(lo + 1).min(r.max(1));
    let seg = &morph[lo..hi];
    seg.iter().sum::<f64>() / seg.len() as f64
}

/// Measures one beat. `rr_ms` is the R-R interval attributed to the beat and
/// `t_end` bounds the search for the T wave's right base. Magnitudes are taken
/// above the isoelectric level so that residual baseline offsets cancel.
pub fn beat_morphology(
    f: &BeatFiducials,
    rr_ms: f64,
    t_end: usize,
    morph: &[f64],
    rate_hz: f64,
) -> Result<BeatMorphology> {
    let ms = 1000.0 / rate_hz;
    let base = isoelectric(morph, f.r_idx, rate_hz);
    let r_val = morph[f.r_idx];
    let r_prom = r_val - morph[f.q_idx].max(morph[f.s_idx]);
    let degenerate = || EcgError::DegenerateBeat { r: f.r_idx };
    if !(r_prom > 0.0) {
        return Err(degenerate());
    }
    let r_width = width_at(morph, f.r_idx, r_val - r_prom / 2.0, f.q_idx, f.s_idx).ok_or_else(degenerate)? * ms;

    let t_val = morph[f.t_idx];
    let t_end = t_end.min(morph.len() - 1).max(f.t_idx + 1);
    let left_base = morph[f.s_idx..=f.t_idx].iter().copied().fold(f64::INFINITY, f64::min);
    let right_base = morph[f.t_idx..=t_end].iter().copied().fold(f64::INFINITY, f64::min);
    let t_prom = t_val - left_base.max(right_base);
    if !(t_prom > 0.0) {
        return Err(degenerate());
    }
    let t_width = width_at(morph, f.t_idx, t_val - t_prom / 2.0, f.s_idx, t_end).ok_or_else(degenerate)? * ms;
    if !(rr_ms > 0.0) {
        return Err(degenerate());
    }
    Ok(BeatMorphology {
        r_mag: r_val - base,
        r_prom,
        r_width_ms: r_width,
        t_mag: t_val - base,
        t_width_ms: t_width,
        qs_dist_ms: (f.s_idx - f.q_idx) as f64 * ms,
        st_dist_ms: (f.t_idx - f.s_idx) as f64 * ms,
        bpm: 60_000.0 / rr_ms,
        r_power: 0.5 * (r_width / 1000.0) * r_prom,
        t_power: 0.5 * (t_width / 1000.0) * (t_val - base).abs(),
    })
}

/// Per-field mean and population std over a window's beats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgFeatureVector {
    pub values: Vec<f64>,
}

impl EcgFeatureVector {
    pub fn from_beats(beats: &[BeatMorphology]) -> Self {
        let n = beats.len() as f64;
        let mut values = Vec::with_capacity(ECG_FEATURE_DIM);
        for k in 0..MORPHOLOGY_FIELDS.len() {
            let col: Vec<f64> = beats.iter().map(|b| b.fields()[k]).collect();
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            values.push(mean);
            values.push(var.max(0.0).sqrt());
        }
        Self { values }
    }

    pub fn mean_of(&self, field: &str) -> Option<f64> {
        MORPHOLOGY_FIELDS.iter().position(|f| *f == field).map(|k| self.values[2 * k])
    }

    pub fn std_of(&self, field: &str) -> Option<f64> {
        MORPHOLOGY_FIELDS.iter().position(|f| *f == field).map(|k| self.values[2 * k + 1])
    }
}

/// Everything measured in one window, for inspection and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBeats {
    pub r_peaks: Vec<usize>,
    pub fiducials: Vec<BeatFiducials>,
    pub beats: Vec<BeatMorphology>,
}

/// Runs detection, repair and measurement on one lead.
pub fn analyze_lead(lead: &[f64], rate_hz: f64, cfg: &EcgConfig) -> Result<WindowBeats> {
    let prep = preprocess(lead, rate_hz, cfg)?;
    let raw = detect_r_peaks(&prep.detect, rate_hz, cfg)?;
    let repaired = correct_missed_peaks(&raw, &prep.detect, rate_hz, cfg);
    let r = refine_peaks(&repaired, &prep.morph, rate_hz, cfg);
    let q_len = ms_to_samples(cfg.q_search_ms, rate_hz);
    let t_len = ms_to_samples(cfg.t_search_ms, rate_hz);
    let mut fiducials = Vec::new();
    let mut beats = Vec::new();
    for (i, &ri) in r.iter().enumerate() {
        let next = r.get(i + 1).copied();
        let Ok(f) = locate_qst(ri, next, &prep.morph, rate_hz, cfg) else {
            continue;
        };
        let rr = if i > 0 {
            ri - r[i - 1]
        } else if let Some(n) = next {
            n - ri
        } else {
            continue;
        };
        let rr_ms = rr as f64 * 1000.0 / rate_hz;
        let t_end = next.map_or(ri + t_len, |n| (ri + t_len).min(n.saturating_sub(q_len)));
        if let Ok(m) = beat_morphology(&f, rr_ms, t_end, &prep.morph, rate_hz) {
            fiducials.push(f);
            beats.push(m);
        }
    }
    if beats.len() < cfg.min_beats {
        return Err(EcgError::NoBeatsFound {
            found: beats.len(),
            min: cfg.min_beats,
        });
    }
    Ok(WindowBeats {
        r_peaks: r,
        fiducials,
        beats,
    })
}

pub fn lead_features(lead: &[f64], rate_hz: f64, cfg: &EcgConfig) -> Result<EcgFeatureVector> {
    Ok(EcgFeatureVector::from_beats(&analyze_lead(lead, rate_hz, cfg)?.beats))
}

/// Features of a window's first channel (Lead-I).
pub fn window_ecg_features(win: &Window, cfg: &EcgConfig) -> Result<EcgFeatureVector> {
    let lead = win.samples.first().ok_or(EcgError::EmptyWindow)?;
    lead_features(lead, win.rate_hz, cfg)
}
