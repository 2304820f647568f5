//! Synthetic sessions with planted ground truth.
//!
//! ECG is a sum of Gaussian bumps per beat (Q, R, S, T) placed at R-R
//! intervals carrying respiratory sinus arrhythmia. Each activity plants BR
//! and VE linearly on chosen morphology parameters. The IMU is per-activity
//! gravity orientation, a cadence oscillation and band-limited noise. The
//! spirometer is sampled at 1 Hz from the planted BR/VE plus label noise.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_io::{
    self, ActivityInterval, Channel, DataError, ResponseSample, ResponseSeries, SensorStream, SessionManifest,
};
use crate::dsp::{self, WindowSpec};
use crate::rng;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("bad synth config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MorphParam {
    RAmp,
    RWidth,
    TAmp,
    TWidth,
    TOffset,
    QsSpread,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Response {
    Br,
    Ve,
}

/// `param *= 1 + gain * (v - base) / base` where `v` is the instantaneous
/// planted response and `base` the activity's base level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Modulation {
    pub response: Response,
    pub param: MorphParam,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuSignature {
    /// Mean acceleration (g) on ax, ay, az.
    pub gravity: [f64; 3],
    pub cadence_hz: f64,
    /// Oscillation amplitude per channel (g for accel, dps for gyro).
    pub swing: [f64; 6],
    /// Std of the band-limited noise per channel.
    pub noise: [f64; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySpec {
    pub name: String,
    pub hr_bpm: f64,
    pub br_bpm: f64,
    pub ve_lpm: f64,
    /// Relative amplitude of the slow wander around the base levels.
    pub br_jitter: f64,
    pub ve_jitter: f64,
    pub hr_jitter: f64,
    pub modulation: Vec<Modulation>,
    pub imu: ImuSignature,
}

/// Beat template at 60 bpm; offsets and widths of T scale with sqrt(RR).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgTemplate {
    pub q_amp: f64,
    pub q_sigma_ms: f64,
    pub q_offset_ms: f64,
    pub r_amp: f64,
    pub r_sigma_ms: f64,
    pub s_amp: f64,
    pub s_sigma_ms: f64,
    pub s_offset_ms: f64,
    pub t_amp: f64,
    pub t_sigma_ms: f64,
    pub t_offset_ms: f64,
}

impl Default for EcgTemplate {
    fn default() -> Self {
        Self {
            q_amp: -0.12,
            q_sigma_ms: 10.0,
            q_offset_ms: -35.0,
            r_amp: 1.0,
            r_sigma_ms: 12.0,
            s_amp: -0.25,
            s_sigma_ms: 10.0,
            s_offset_ms: 35.0,
            t_amp: 0.3,
            t_sigma_ms: 40.0,
            t_offset_ms: 250.0,
        }
    }
}

/// Session generator settings. Missing fields in a deserialized config take
/// their default values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub subject_id: String,
    pub t0_ms: i64,
    pub ecg_rate_hz: f64,
    pub imu_rate_hz: f64,
    /// Seconds per activity segment.
    pub segment_s: f64,
    /// Repetitions of the whole activity protocol.
    pub cycles: usize,
    pub activities: Vec<ActivitySpec>,
    pub template: EcgTemplate,
    /// Relative RR modulation at the breathing frequency.
    pub rsa_depth: f64,
    /// Per-beat relative jitter of the T amplitude, independent of the
    /// responses.
    pub t_amp_jitter: f64,
    pub ecg_noise_mv: f64,
    pub baseline_wander_mv: f64,
    pub br_noise: f64,
    pub ve_noise: f64,
}

fn signature(gravity: [f64; 3], cadence_hz: f64, swing: [f64; 6], noise: [f64; 6]) -> ImuSignature {
    ImuSignature {
        gravity,
        cadence_hz,
        swing,
        noise,
    }
}

fn modulation(response: Response, param: MorphParam, gain: f64) -> Modulation {
    Modulation { response, param, gain }
}

impl Default for SynthConfig {
    fn default() -> Self {
        use MorphParam::*;
        use Response::*;
        let act = |name: &str, hr, br, ve, m: Vec<Modulation>, imu| ActivitySpec {
            name: name.to_string(),
            hr_bpm: hr,
            br_bpm: br,
            ve_lpm: ve,
            br_jitter: 0.25,
            ve_jitter: 0.3,
            hr_jitter: 0.03,
            modulation: m,
            imu,
        };
        Self {
            seed: 42,
            subject_id: "synth01".to_string(),
            t0_ms: 1_700_000_000_000,
            ecg_rate_hz: 250.0,
            imu_rate_hz: 50.0,
            segment_s: 240.0,
            cycles: 2,
            activities: vec![
                act(
                    "rest",
                    72.0,
                    14.0,
                    10.0,
                    vec![modulation(Br, RAmp, 0.6), modulation(Ve, TOffset, 0.4)],
                    signature([0.0, 0.0, 1.0], 0.0, [0.0; 6], [0.01, 0.01, 0.01, 1.0, 1.0, 1.0]),
                ),
                act(
                    "walk",
                    96.0,
                    20.0,
                    24.0,
                    vec![modulation(Br, TAmp, 0.8), modulation(Ve, RWidth, 0.6)],
                    signature([0.3, -0.2, 0.93], 1.8, [0.25, 0.15, 0.2, 40.0, 25.0, 30.0], [0.05, 0.05, 0.05, 8.0, 8.0, 8.0]),
                ),
                act(
                    "run",
                    140.0,
                    30.0,
                    55.0,
                    vec![modulation(Br, RAmp, 0.6), modulation(Ve, TWidth, 0.8)],
                    signature([0.5, -0.4, 0.77], 2.8, [0.9, 0.6, 0.7, 120.0, 90.0, 100.0], [0.15, 0.15, 0.15, 20.0, 20.0, 20.0]),
                ),
                act(
                    "bike",
                    110.0,
                    24.0,
                    40.0,
                    vec![modulation(Br, RWidth, 0.6), modulation(Ve, TAmp, 0.8)],
                    signature([-0.6, 0.1, 0.79], 1.3, [0.08, 0.1, 0.06, 10.0, 12.0, 8.0], [0.03, 0.03, 0.03, 4.0, 4.0, 4.0]),
                ),
                act(
                    "wave",
                    84.0,
                    16.0,
                    14.0,
                    vec![modulation(Br, TOffset, 0.4), modulation(Ve, RAmp, 0.6)],
                    signature([0.1, 0.9, 0.4], 1.0, [0.6, 0.3, 0.4, 150.0, 60.0, 90.0], [0.05, 0.05, 0.05, 10.0, 10.0, 10.0]),
                ),
            ],
            template: EcgTemplate::default(),
            rsa_depth: 0.02,
            t_amp_jitter: 0.1,
            ecg_noise_mv: 0.005,
            baseline_wander_mv: 0.03,
            br_noise: 1.5,
            ve_noise: 2.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::BadConfig(m));
        if self.activities.is_empty() {
            return bad("no activities".into());
        }
        if !(self.ecg_rate_hz > 0.0 && self.imu_rate_hz > 0.0 && self.segment_s > 0.0) || self.cycles == 0 {
            return bad("rates, segment length and cycles must be positive".into());
        }
        for a in &self.activities {
            if !(a.hr_bpm > 0.0 && a.br_bpm > 0.0 && a.ve_lpm > 0.0) {
                return bad(format!("activity {} has a non-positive rate", a.name));
            }
            if ![a.br_jitter, a.ve_jitter, a.hr_jitter].iter().all(|j| (0.0..1.0).contains(j)) {
                return bad(format!("activity {} jitter must lie in [0, 1)", a.name));
            }
            if a.imu.cadence_hz * 2.0 >= self.imu_rate_hz {
                return bad(format!("activity {} cadence is above Nyquist", a.name));
            }
        }
        if ![self.ecg_noise_mv, self.baseline_wander_mv, self.br_noise, self.ve_noise, self.t_amp_jitter]
            .iter()
            .all(|v| *v >= 0.0)
        {
            return bad("noise levels must be non-negative".into());
        }
        Ok(())
    }

    pub fn session_s(&self) -> f64 {
        self.segment_s * (self.activities.len() * self.cycles) as f64
    }
}

/// One planted beat. Offsets are relative to R in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatTruth {
    pub r_ms: f64,
    pub rr_ms: f64,
    pub q_offset_ms: f64,
    pub s_offset_ms: f64,
    pub t_offset_ms: f64,
    pub r_amp: f64,
    pub r_sigma_ms: f64,
    pub t_amp: f64,
    pub t_sigma_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowTruth {
    pub t_center_ms: i64,
    pub br: f64,
    pub ve: f64,
    pub activity: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub seed: u64,
    pub beats: Vec<BeatTruth>,
    /// Noise-free BR/VE at 1 Hz, aligned with the emitted response samples.
    pub br: Vec<f64>,
    pub ve: Vec<f64>,
    pub windows: Vec<WindowTruth>,
    pub intervals: Vec<ActivityInterval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSession {
    pub ecg: SensorStream,
    pub imu: SensorStream,
    pub resp: ResponseSeries,
    pub intervals: Vec<ActivityInterval>,
    pub truth: SynthTruth,
}

/// Slow wander in [-1, 1]: three sinusoids with periods in 40..160 s.
struct Wander {
    parts: [(f64, f64); 3],
}

impl Wander {
    fn new<R: Rng>(r: &mut R) -> Self {
        let mut part = || (r.random_range(40.0..160.0), r.random_range(0.0..std::f64::consts::TAU));
        Self {
            parts: [part(), part(), part()],
        }
    }

    fn at(&self, t_s: f64) -> f64 {
        self.parts
            .iter()
            .map(|(p, ph)| (std::f64::consts::TAU * t_s / p + ph).sin())
            .sum::<f64>()
            / 3.0
    }
}

struct Segment<'a> {
    spec: &'a ActivitySpec,
    start_s: f64,
    end_s: f64,
    br: Wander,
    ve: Wander,
    hr: Wander,
}

impl Segment<'_> {
    fn br(&self, t: f64) -> f64 {
        self.spec.br_bpm * (1.0 + self.spec.br_jitter * self.br.at(t - self.start_s))
    }

    fn ve(&self, t: f64) -> f64 {
        self.spec.ve_lpm * (1.0 + self.spec.ve_jitter * self.ve.at(t - self.start_s))
    }

    fn hr(&self, t: f64) -> f64 {
        self.spec.hr_bpm * (1.0 + self.spec.hr_jitter * self.hr.at(t - self.start_s))
    }

    /// Multiplier for `param` at time `t`.
    fn factor(&self, param: MorphParam, t: f64) -> f64 {
        self.spec
            .modulation
            .iter()
            .filter(|m| m.param == param)
            .map(|m| {
                let (v, base) = match m.response {
                    Response::Br => (self.br(t), self.spec.br_bpm),
                    Response::Ve => (self.ve(t), self.spec.ve_lpm),
                };
                1.0 + m.gain * (v - base) / base
            })
            .product()
    }
}

fn segments(cfg: &SynthConfig) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut start = 0.0;
    for cycle in 0..cfg.cycles {
        for a in &cfg.activities {
            let mut r = rng::substream(cfg.seed, &format!("synth/{}/{cycle}", a.name));
            out.push(Segment {
                spec: a,
                start_s: start,
                end_s: start + cfg.segment_s,
                br: Wander::new(&mut r),
                ve: Wander::new(&mut r),
                hr: Wander::new(&mut r),
            });
            start += cfg.segment_s;
        }
    }
    out
}

fn segment_at<'a, 'b>(segs: &'a [Segment<'b>], t: f64) -> &'a Segment<'b> {
    let i = segs.partition_point(|s| s.end_s <= t).min(segs.len() - 1);
    &segs[i]
}

fn add_bump(x: &mut [f64], rate: f64, center_s: f64, amp: f64, sigma_s: f64) {
    let c = center_s * rate;
    let s = sigma_s * rate;
    let lo = (c - 6.0 * s).floor().max(0.0) as usize;
    let hi = ((c + 6.0 * s).ceil().max(0.0) as usize + 1).min(x.len());
    for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
        let d = (i as f64 - c) / s;
        *v += amp * (-0.5 * d * d).exp();
    }
}

fn plant_beats(cfg: &SynthConfig, segs: &[Segment]) -> Vec<BeatTruth> {
    let tpl = &cfg.template;
    let total = cfg.session_s();
    let mut r = rng::substream(cfg.seed, "synth/beats");
    let mut beats = Vec::new();
    // first beat late enough for its Q search window
    let mut t = 0.4;
    let mut phase = 0.0;
    let mut last_t = 0.0;
    while t < total {
        let seg = segment_at(segs, t);
        phase += std::f64::consts::TAU * seg.br(t) / 60.0 * (t - last_t);
        last_t = t;
        let rr = 60.0 / seg.hr(t) * (1.0 + cfg.rsa_depth * phase.sin());
        let scale = (rr.min(1.2)).sqrt();
        let qs = seg.factor(MorphParam::QsSpread, t);
        let jitter: f64 = StandardNormal.sample(&mut r);
        beats.push(BeatTruth {
            r_ms: t * 1000.0,
            rr_ms: rr * 1000.0,
            q_offset_ms: tpl.q_offset_ms * qs,
            s_offset_ms: tpl.s_offset_ms * qs,
            t_offset_ms: tpl.t_offset_ms * scale * seg.factor(MorphParam::TOffset, t),
            r_amp: tpl.r_amp * seg.factor(MorphParam::RAmp, t),
            r_sigma_ms: tpl.r_sigma_ms * seg.factor(MorphParam::RWidth, t),
            t_amp: tpl.t_amp * seg.factor(MorphParam::TAmp, t) * (1.0 + cfg.t_amp_jitter * jitter).max(0.2),
            t_sigma_ms: tpl.t_sigma_ms * scale * seg.factor(MorphParam::TWidth, t),
        });
        t += rr;
    }
    beats
}

fn render_ecg(cfg: &SynthConfig, segs: &[Segment], beats: &[BeatTruth]) -> SensorStream {
    let rate = cfg.ecg_rate_hz;
    let n = (cfg.session_s() * rate).round() as usize;
    let tpl = &cfg.template;
    let mut x = vec![0.0; n];
    for b in beats {
        let r_s = b.r_ms / 1000.0;
        add_bump(&mut x, rate, r_s + b.q_offset_ms / 1000.0, tpl.q_amp, tpl.q_sigma_ms / 1000.0);
        add_bump(&mut x, rate, r_s, b.r_amp, b.r_sigma_ms / 1000.0);
        add_bump(&mut x, rate, r_s + b.s_offset_ms / 1000.0, tpl.s_amp, tpl.s_sigma_ms / 1000.0);
        add_bump(&mut x, rate, r_s + b.t_offset_ms / 1000.0, b.t_amp, b.t_sigma_ms / 1000.0);
    }
    // respiratory baseline wander at the planted breathing frequency
    let mut phase = 0.0;
    for (i, v) in x.iter_mut().enumerate() {
        let t = i as f64 / rate;
        phase += std::f64::consts::TAU * segment_at(segs, t).br(t) / 60.0 / rate;
        *v += cfg.baseline_wander_mv * phase.sin();
    }
    let mut r = rng::substream(cfg.seed, "synth/ecg-noise");
    let noise = Normal::new(0.0, cfg.ecg_noise_mv.max(0.0)).expect("finite std");
    let leads: Vec<Vec<f64>> = [1.0, 1.6, 0.6]
        .iter()
        .map(|g| x.iter().map(|v| g * v + noise.sample(&mut r)).collect())
        .collect();
    SensorStream {
        channels: leads
            .into_iter()
            .zip(["lead1_mv", "lead2_mv", "lead3_mv"])
            .map(|(values, name)| Channel {
                name: name.to_string(),
                unit: "mV".to_string(),
                values,
            })
            .collect(),
        rate_hz: rate,
        t0_ms: cfg.t0_ms,
    }
}

fn render_imu(cfg: &SynthConfig, segs: &[Segment]) -> SensorStream {
    let rate = cfg.imu_rate_hz;
    let n = (cfg.session_s() * rate).round() as usize;
    let hi = (0.45 * rate).min(15.0);
    let mut channels: Vec<Vec<f64>> = vec![Vec::with_capacity(n); 6];
    for (k, seg) in segs.iter().enumerate() {
        let sig = &seg.spec.imu;
        let lo_i = (seg.start_s * rate).round() as usize;
        let hi_i = ((seg.end_s * rate).round() as usize).min(n);
        let len = hi_i - lo_i;
        let mut r = rng::substream(cfg.seed, &format!("synth/imu/{k}"));
        for (c, out) in channels.iter_mut().enumerate() {
            let phase: f64 = r.random_range(0.0..std::f64::consts::TAU);
            let white: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut r)).collect();
            let mut band = dsp::bandpass(&white, 0.5, hi, rate).unwrap_or(white);
            let sd = (band.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
            if sd > 0.0 {
                band.iter_mut().for_each(|v| *v *= sig.noise[c] / sd);
            }
            let offset = if c < 3 { sig.gravity[c] } else { 0.0 };
            for (i, b) in band.iter().enumerate() {
                let t = (lo_i + i) as f64 / rate;
                let w = std::f64::consts::TAU * sig.cadence_hz * t + phase;
                let swing = sig.swing[c] * (w.sin() + 0.3 * (2.0 * w).sin());
                out.push(offset + swing + b);
            }
        }
    }
    let names = [("ax_g", "g"), ("ay_g", "g"), ("az_g", "g"), ("gx_dps", "dps"), ("gy_dps", "dps"), ("gz_dps", "dps")];
    SensorStream {
        channels: channels
            .into_iter()
            .zip(names)
            .map(|(values, (name, unit))| Channel {
                name: name.to_string(),
                unit: unit.to_string(),
                values,
            })
            .collect(),
        rate_hz: rate,
        t0_ms: cfg.t0_ms,
    }
}

pub fn gen_session(cfg: &SynthConfig) -> Result<SynthSession> {
    cfg.validate()?;
    let segs = segments(cfg);
    let beats = plant_beats(cfg, &segs);
    let ecg = render_ecg(cfg, &segs, &beats);
    let imu = render_imu(cfg, &segs);

    let seconds = cfg.session_s().floor() as usize;
    let mut r = rng::substream(cfg.seed, "synth/resp-noise");
    let (mut br, mut ve, mut samples) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..seconds {
        let t = k as f64;
        let seg = segment_at(&segs, t);
        let (b, v) = (seg.br(t), seg.ve(t));
        let nb: f64 = StandardNormal.sample(&mut r);
        let nv: f64 = StandardNormal.sample(&mut r);
        br.push(b);
        ve.push(v);
        samples.push(ResponseSample {
            t_ms: cfg.t0_ms + 1000 * k as i64,
            br_bpm: b + cfg.br_noise * nb,
            ve_lpm: v + cfg.ve_noise * nv,
        });
    }
    let intervals: Vec<ActivityInterval> = segs
        .iter()
        .map(|s| ActivityInterval {
            start_ms: cfg.t0_ms + (s.start_s * 1000.0).round() as i64,
            end_ms: cfg.t0_ms + (s.end_s * 1000.0).round() as i64,
            activity: s.spec.name.clone(),
        })
        .collect();

    let clean = ResponseSeries {
        samples: samples
            .iter()
            .zip(br.iter().zip(&ve))
            .map(|(s, (b, v))| ResponseSample {
                t_ms: s.t_ms,
                br_bpm: *b,
                ve_lpm: *v,
            })
            .collect(),
    };
    let spec = WindowSpec::default();
    let duration_ms = (cfg.session_s() * 1000.0).round() as i64;
    let windows = data_io::window_response_clocked(&clean, cfg.t0_ms, duration_ms, spec.win_s, spec.step_s)?
        .into_iter()
        .enumerate()
        .filter_map(|(k, w)| {
            let start = spec.start_ms(cfg.t0_ms, k);
            Some(WindowTruth {
                t_center_ms: w.t_center_ms,
                br: w.br_mean?,
                ve: w.ve_mean?,
                activity: data_io::activity_for(&intervals, start, start + spec.win_ms()).map(str::to_string),
            })
        })
        .collect();

    let truth = SynthTruth {
        seed: cfg.seed,
        beats,
        br,
        ve,
        windows,
        intervals: intervals.clone(),
    };
    Ok(SynthSession {
        ecg,
        imu,
        resp: ResponseSeries { samples },
        intervals,
        truth,
    })
}

/// Writes `ecg.csv`, `imu.csv`, `resp.csv`, `labels.csv`, `truth.json` and a
/// `manifest.toml` pointing at them. Returns the manifest path.
pub fn write_session(dir: &Path, cfg: &SynthConfig, session: &SynthSession) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| DataError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    data_io::write_stream_csv(&dir.join("ecg.csv"), &session.ecg)?;
    data_io::write_stream_csv(&dir.join("imu.csv"), &session.imu)?;
    data_io::write_resp_csv(&dir.join("resp.csv"), &session.resp)?;
    data_io::write_labels_csv(&dir.join("labels.csv"), &session.intervals)?;
    let truth = serde_json::to_string(&session.truth).expect("truth serializes");
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |e| DataError::Io { path, source: e }
    };
    let truth_path = dir.join("truth.json");
    std::fs::write(&truth_path, truth).map_err(io(&truth_path))?;
    let manifest = SessionManifest {
        subject_id: cfg.subject_id.clone(),
        ecg_path: "ecg.csv".into(),
        imu_path: "imu.csv".into(),
        resp_path: "resp.csv".into(),
        labels_path: Some("labels.csv".into()),
        activity_intervals: Vec::new(),
        contexts: cfg.activities.iter().map(|a| a.name.clone()).collect(),
    };
    let path = dir.join("manifest.toml");
    std::fs::write(&path, manifest.to_toml()).map_err(io(&path))?;
    Ok(path)
}
