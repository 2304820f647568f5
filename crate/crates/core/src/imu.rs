//! Activity features of a 6-channel IMU window.
//!
//! Raw layout (96 slots), in order:
//!
//! * per channel: mean, max, median, std, rms, variance, IQR (42)
//! * per pair within accel and within gyro: Pearson correlation, joint
//!   entropy (12)
//! * per channel: band power 0.01-0.5 Hz, 0.5-3 Hz, above 3 Hz, and the
//!   mean-crossing rate (24)
//! * per channel: Teager energy mean, max, variance (18)
//!
//! The exported vector drops the six rms slots (rms² = mean² + variance, so
//! they carry nothing the other two do not), leaving 90.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_io::SensorStream;
use crate::dsp::{self, DspError, Window};
use crate::stats;

#[derive(Debug, Error, PartialEq)]
pub enum ImuError {
    #[error("IMU window has {found} channels, expected 6")]
    WrongChannelCount { found: usize },
    #[error(transparent)]
    Dsp(#[from] DspError),
}

pub type Result<T> = std::result::Result<T, ImuError>;

pub const IMU_CHANNELS: [&str; 6] = ["ax", "ay", "az", "gx", "gy", "gz"];
pub const IMU_RAW_DIM: usize = 96;
pub const IMU_FEATURE_DIM: usize = 90;

const CHANNEL_STATS: [&str; 7] = ["mean", "max", "median", "std", "rms", "var", "iqr"];
const SPECTRAL: [&str; 4] = ["bp_low", "bp_mid", "bp_high", "mcr"];
const TEAGER: [&str; 3] = ["teo_mean", "teo_max", "teo_var"];
/// Axis pairs, as channel indices, within the accelerometer then the gyroscope.
pub const IMU_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)];
const ENTROPY_BINS: usize = 16;

/// Names of all 96 raw slots.
pub fn raw_feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(IMU_RAW_DIM);
    for ch in IMU_CHANNELS {
        names.extend(CHANNEL_STATS.iter().map(|s| format!("{ch}_{s}")));
    }
    for (a, b) in IMU_PAIRS {
        let (a, b) = (IMU_CHANNELS[a], IMU_CHANNELS[b]);
        names.push(format!("{a}{b}_corr"));
        names.push(format!("{a}{b}_entropy"));
    }
    for ch in IMU_CHANNELS {
        names.extend(SPECTRAL.iter().map(|s| format!("{ch}_{s}")));
    }
    for ch in IMU_CHANNELS {
        names.extend(TEAGER.iter().map(|s| format!("{ch}_{s}")));
    }
    names
}

/// `true` for raw slots that are exported.
pub fn export_mask() -> Vec<bool> {
    raw_feature_names().iter().map(|n| !n.ends_with("_rms")).collect()
}

pub fn imu_feature_names() -> Vec<String> {
    raw_feature_names()
        .into_iter()
        .zip(export_mask())
        .filter_map(|(n, keep)| keep.then_some(n))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuFeatureVector {
    pub values: Vec<f64>,
}

impl ImuFeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        imu_feature_names().iter().position(|n| n == name).map(|i| self.values[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuConfig {
    pub accel_clip_g: f64,
    pub gyro_clip_dps: f64,
    pub median_kernel: usize,
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
}

impl Default for ImuConfig {
    fn default() -> Self {
        Self {
            accel_clip_g: 4.0,
            gyro_clip_dps: 360.0,
            median_kernel: 5,
            band_lo_hz: 0.01,
            band_hi_hz: 20.0,
        }
    }
}

/// Clip, median filter and band-pass every channel of a whole IMU stream.
/// The upper band edge is pulled below Nyquist for slow streams.
pub fn preprocess_stream(stream: &SensorStream, cfg: &ImuConfig) -> Result<SensorStream> {
    if stream.channels.len() != 6 {
        return Err(ImuError::WrongChannelCount {
            found: stream.channels.len(),
        });
    }
    let hi = cfg.band_hi_hz.min(0.45 * stream.rate_hz);
    let mut out = stream.clone();
    for (i, ch) in out.channels.iter_mut().enumerate() {
        let lim = if i < 3 { cfg.accel_clip_g } else { cfg.gyro_clip_dps };
        let clipped = dsp::level_clip(&ch.values, -lim, lim);
        let k = cfg.median_kernel.min(clipped.len() | 1);
        let med = if clipped.len() >= k { dsp::median_filter(&clipped, k)? } else { clipped };
        ch.values = dsp::bandpass(&med, cfg.band_lo_hz, hi, stream.rate_hz)?;
    }
    Ok(out)
}

/// Joint entropy (nats) of the standardized pair on a 16×16 equal-width grid
/// spanning each variable's range; 0 when either side is constant.
pub fn joint_entropy(a: &[f64], b: &[f64]) -> f64 {
    let za = standardize(a);
    let zb = standardize(b);
    let (Some(za), Some(zb)) = (za, zb) else {
        return 0.0;
    };
    let bin = |z: &[f64]| {
        let lo = z.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w = (hi - lo) / ENTROPY_BINS as f64;
        z.iter()
            .map(move |v| (((v - lo) / w) as usize).min(ENTROPY_BINS - 1))
            .collect::<Vec<_>>()
    };
    let (ba, bb) = (bin(&za), bin(&zb));
    let mut counts = [0usize; ENTROPY_BINS * ENTROPY_BINS];
    for (i, j) in ba.iter().zip(&bb) {
        counts[i * ENTROPY_BINS + j] += 1;
    }
    let n = a.len() as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

fn standardize(x: &[f64]) -> Option<Vec<f64>> {
    let m = stats::mean(x);
    let sd = stats::std_dev(x);
    let scale = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    if !(sd > 1e-12 * scale) {
        return None;
    }
    Some(x.iter().map(|v| (v - m) / sd).collect())
}

/// All 96 raw slots of a preprocessed window.
pub fn raw_imu_features(win: &Window) -> Result<Vec<f64>> {
    if win.channel_count() != 6 {
        return Err(ImuError::WrongChannelCount {
            found: win.channel_count(),
        });
    }
    let rate = win.rate_hz;
    let nyq = rate / 2.0;
    let mut out = Vec::with_capacity(IMU_RAW_DIM);
    for ch in &win.samples {
        let sorted = stats::sorted_copy(ch);
        let mean = stats::mean(ch);
        let var = stats::variance(ch);
        let ms = ch.iter().map(|v| v * v).sum::<f64>() / ch.len().max(1) as f64;
        out.extend([
            mean,
            sorted.last().copied().unwrap_or(0.0),
            stats::quantile_sorted(&sorted, 0.5),
            var.sqrt(),
            ms.sqrt(),
            var,
            stats::quantile_sorted(&sorted, 0.75) - stats::quantile_sorted(&sorted, 0.25),
        ]);
    }
    for (a, b) in IMU_PAIRS {
        let (xa, xb) = (&win.samples[a], &win.samples[b]);
        out.push(stats::pearson(xa, xb));
        out.push(joint_entropy(xa, xb));
    }
    let high = 3.0f64.min(nyq * 0.999);
    for ch in &win.samples {
        let (f, p) = dsp::periodogram(ch, rate);
        out.push(dsp::band_power_from(&f, &p, 0.01, 0.5, rate)?);
        out.push(dsp::band_power_from(&f, &p, 0.5, high, rate)?);
        out.push(dsp::band_power_from(&f, &p, high, nyq, rate)?);
        out.push(dsp::mean_crossing_rate(ch, rate));
    }
    for ch in &win.samples {
        // centred first so a constant offset leaves the energy untouched
        let m = stats::mean(ch);
        let centred: Vec<f64> = ch.iter().map(|v| v - m).collect();
        let teo = dsp::teager_energy(&centred);
        out.push(stats::mean(&teo));
        out.push(teo.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        out.push(stats::variance(&teo));
    }
    for v in &mut out {
        if !v.is_finite() {
            *v = 0.0;
        }
    }
    Ok(out)
}

pub fn extract_imu_features(win: &Window) -> Result<ImuFeatureVector> {
    let raw = raw_imu_features(win)?;
    let values = raw
        .into_iter()
        .zip(export_mask())
        .filter_map(|(v, keep)| keep.then_some(v))
        .collect();
    Ok(ImuFeatureVector { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const RATE: f64 = 50.0;

    fn window(samples: Vec<Vec<f64>>) -> Window {
        Window {
            samples,
            t_start_ms: 0,
            t_center_ms: 7500,
            rate_hz: RATE,
        }
    }

    fn random_window(seed: u64) -> Window {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        window((0..6).map(|_| (0..750).map(|_| rng.random_range(-1.0..1.0)).collect()).collect())
    }

    fn index(name: &str) -> usize {
        imu_feature_names().iter().position(|n| n == name).unwrap()
    }

    #[test]
    fn layout_is_ninety_wide_and_stable() {
        assert_eq!(raw_feature_names().len(), IMU_RAW_DIM);
        let names = imu_feature_names();
        assert_eq!(names.len(), IMU_FEATURE_DIM);
        assert!(names.iter().all(|n| !n.ends_with("_rms")));
        assert_eq!(names[0], "ax_mean");
        assert_eq!(imu_feature_names(), names);
    }

    #[test]
    fn zero_window_is_all_zero() {
        let f = extract_imu_features(&window(vec![vec![0.0; 750]; 6])).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_channel_count() {
        assert_eq!(
            extract_imu_features(&window(vec![vec![0.0; 750]; 5])),
            Err(ImuError::WrongChannelCount { found: 5 })
        );
    }

    #[test]
    fn identical_axes_correlate_perfectly() {
        let mut w = random_window(1);
        w.samples[1] = w.samples[0].clone();
        let f = extract_imu_features(&w).unwrap();
        assert!((f.values[index("axay_corr")] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn order_statistics_match_sort_oracle() {
        let w = random_window(2);
        let f = extract_imu_features(&w).unwrap();
        for (c, ch) in w.samples.iter().enumerate() {
            let name = IMU_CHANNELS[c];
            let mut s = ch.clone();
            s.sort_by(f64::total_cmp);
            let q = |p: f64| {
                let pos = p * (s.len() - 1) as f64;
                let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
                s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
            };
            let sd = f.values[index(&format!("{name}_std"))];
            let var = f.values[index(&format!("{name}_var"))];
            assert!((sd * sd - var).abs() < 1e-12);
            assert!((f.values[index(&format!("{name}_iqr"))] - (q(0.75) - q(0.25))).abs() < 1e-12);
            assert_eq!(f.values[index(&format!("{name}_max"))], s[s.len() - 1]);
            assert!((f.values[index(&format!("{name}_median"))] - q(0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_of_independent_pair_exceeds_dependent() {
        let w = random_window(3);
        let indep = joint_entropy(&w.samples[0], &w.samples[1]);
        let dep = joint_entropy(&w.samples[0], &w.samples[0]);
        assert!(indep > dep);
        assert!(indep <= (256f64).ln() + 1e-12);
        assert_eq!(joint_entropy(&[1.0; 10], &w.samples[0][..10]), 0.0);
    }

    #[test]
    fn band_powers_locate_a_tone() {
        let tone: Vec<f64> = (0..750).map(|i| (2.0 * std::f64::consts::PI * 1.0 * i as f64 / RATE).sin()).collect();
        let f = extract_imu_features(&window(vec![tone; 6])).unwrap();
        assert!((f.values[index("ax_bp_mid")] - 0.5).abs() < 1e-9);
        assert!(f.values[index("ax_bp_low")].abs() < 1e-9);
        assert!(f.values[index("ax_bp_high")].abs() < 1e-9);
        assert!((f.values[index("ax_mcr")] - 2.0).abs() < 0.1);
    }

    #[test]
    fn preprocessing_clips_and_keeps_length() {
        let channels = IMU_CHANNELS
            .iter()
            .map(|n| crate::data_io::Channel {
                name: n.to_string(),
                unit: String::new(),
                values: (0..3000)
                    .map(|i| {
                        let spike = if (1500..1510).contains(&i) { 1000.0 } else { 0.0 };
                        (2.0 * std::f64::consts::PI * i as f64 / RATE).sin() + spike
                    })
                    .collect(),
            })
            .collect();
        let s = SensorStream {
            channels,
            rate_hz: RATE,
            t0_ms: 0,
        };
        let p = preprocess_stream(&s, &ImuConfig::default()).unwrap();
        assert_eq!(p.len(), 3000);
        let peak = p.channels[0].values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(peak > 3.0 && peak < 6.0, "{peak}");
        let gyro_peak = p.channels[3].values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(gyro_peak > 200.0 && gyro_peak < 540.0, "{gyro_peak}");
    }

    proptest! {
        #[test]
        fn offset_invariant_entries(seed in 0u64..1000, c in -50.0f64..50.0) {
            let w = random_window(seed);
            let mut shifted = w.clone();
            for ch in &mut shifted.samples {
                for v in ch.iter_mut() {
                    *v += c;
                }
            }
            let a = extract_imu_features(&w).unwrap();
            let b = extract_imu_features(&shifted).unwrap();
            for (i, name) in imu_feature_names().iter().enumerate() {
                let invariant = ["_std", "_var", "_iqr", "_corr", "_entropy", "_mcr", "_teo_mean", "_teo_max", "_teo_var"]
                    .iter()
                    .any(|s| name.ends_with(s));
                if invariant {
                    prop_assert!((a.values[i] - b.values[i]).abs() <= 1e-6 * (1.0 + a.values[i].abs()), "{name}");
                }
            }
        }

        #[test]
        fn finite_and_nonnegative(seed in 0u64..1000) {
            let f = extract_imu_features(&random_window(seed)).unwrap();
            for (v, name) in f.values.iter().zip(imu_feature_names()) {
                prop_assert!(v.is_finite());
                if name.ends_with("_var") || name.ends_with("_iqr") || name.contains("_bp_") {
                    prop_assert!(*v >= 0.0);
                }
                if name.ends_with("_corr") {
                    prop_assert!((-1.0..=1.0).contains(v));
                }
            }
        }
    }
}
