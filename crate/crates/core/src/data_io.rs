//! Session files: loading, validation, synchronization and response windowing.
//!
//! File schemas (all CSV with a header row):
//!
//! * ECG: `t_ms,lead1_mv[,lead2_mv,lead3_mv]`
//! * IMU: `t_ms,ax_g,ay_g,az_g,gx_dps,gy_dps,gz_dps`
//! * spirometer: `t_ms,br_bpm,ve_lpm`
//! * activity labels: `start_ms,end_ms,activity`
//!
//! A session manifest (TOML or JSON, chosen by extension) names the files.
//! Relative paths resolve against the manifest's directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::WindowSpec;

pub const ECG_HEADER: [&str; 4] = ["t_ms", "lead1_mv", "lead2_mv", "lead3_mv"];
pub const IMU_HEADER: [&str; 7] = ["t_ms", "ax_g", "ay_g", "az_g", "gx_dps", "gy_dps", "gz_dps"];
pub const RESP_HEADER: [&str; 3] = ["t_ms", "br_bpm", "ve_lpm"];
pub const LABELS_HEADER: [&str; 3] = ["start_ms", "end_ms", "activity"];

pub const DEFAULT_CONTEXTS: [&str; 5] = ["rest", "walk", "run", "bike", "wave"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("schema mismatch in {path}: expected header {expected}, found {found}")]
    SchemaMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("empty stream: {0}")]
    EmptyStream(PathBuf),
    #[error("non-monotonic timestamps in {path} at data row {row}")]
    NonMonotonicTimestamps { path: PathBuf, row: usize },
    #[error("parse error in {path} at data row {row}: {msg}")]
    Parse {
        path: PathBuf,
        row: usize,
        msg: String,
    },
    #[error("bad manifest: {0}")]
    BadManifest(String),
    #[error("bad activity intervals: {0}")]
    BadIntervals(String),
    #[error("response series is empty")]
    EmptySeries,
    #[error("invalid window parameters: win {win_s} s, step {step_s} s")]
    BadWindowing { win_s: f64, step_s: f64 },
    #[error("streams do not overlap in time")]
    NoOverlap,
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

/// Uniformly sampled multichannel series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorStream {
    pub channels: Vec<Channel>,
    pub rate_hz: f64,
    pub t0_ms: i64,
}

impl SensorStream {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.values.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.rate_hz
    }

    /// Timestamp of sample `i` in epoch milliseconds.
    pub fn time_ms(&self, i: usize) -> i64 {
        self.t0_ms + (i as f64 * 1000.0 / self.rate_hz).round() as i64
    }

    pub fn end_ms(&self) -> i64 {
        self.t0_ms + (self.duration_s() * 1000.0).round() as i64
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == name)
    }

    /// Drops `n` leading samples and keeps at most `keep` after them.
    fn slice(&mut self, n: usize, keep: usize) {
        let t0 = self.time_ms(n);
        for c in &mut self.channels {
            let end = (n + keep).min(c.values.len());
            c.values = c.values[n.min(end)..end].to_vec();
        }
        self.t0_ms = t0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseSample {
    pub t_ms: i64,
    pub br_bpm: f64,
    pub ve_lpm: f64,
}

/// Spirometer output; irregular timestamps, strictly increasing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResponseSeries {
    pub samples: Vec<ResponseSample>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityInterval {
    pub start_ms: i64,
    pub end_ms: i64,
    pub activity: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub subject_id: String,
    pub ecg_path: PathBuf,
    pub imu_path: PathBuf,
    pub resp_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<PathBuf>,
    /// Inline intervals; used when `labels_path` is absent.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub activity_intervals: Vec<ActivityInterval>,
    #[serde(default = "default_contexts")]
    pub contexts: Vec<String>,
}

fn default_contexts() -> Vec<String> {
    DEFAULT_CONTEXTS.iter().map(|s| s.to_string()).collect()
}

impl SessionManifest {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => DataError::MissingFile(path.to_path_buf()),
            _ => DataError::Io {
                path: path.to_path_buf(),
                source: e,
            },
        })?;
        let mut m: SessionManifest = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| DataError::BadManifest(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| DataError::BadManifest(e.to_string()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &PathBuf| {
            if p.is_relative() {
                base.join(p)
            } else {
                p.clone()
            }
        };
        m.ecg_path = resolve(&m.ecg_path);
        m.imu_path = resolve(&m.imu_path);
        m.resp_path = resolve(&m.resp_path);
        m.labels_path = m.labels_path.as_ref().map(resolve);
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

/// A loaded, validated and time-synchronized session.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub subject_id: String,
    pub ecg: SensorStream,
    pub imu: SensorStream,
    pub resp: ResponseSeries,
    pub intervals: Vec<ActivityInterval>,
    pub contexts: Vec<String>,
}

impl Session {
    /// Activity of the interval that fully contains `[start_ms, end_ms)`.
    pub fn activity_for(&self, start_ms: i64, end_ms: i64) -> Option<&str> {
        activity_for(&self.intervals, start_ms, end_ms)
    }
}

pub fn activity_for(intervals: &[ActivityInterval], start_ms: i64, end_ms: i64) -> Option<&str> {
    intervals
        .iter()
        .find(|iv| iv.start_ms <= start_ms && end_ms <= iv.end_ms)
        .map(|iv| iv.activity.as_str())
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DataError::MissingFile(path.to_path_buf()),
        _ => DataError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn headers(rdr: &mut csv::Reader<File>, path: &Path) -> Result<Vec<String>> {
    let h = rdr.headers().map_err(|e| DataError::Parse {
        path: path.to_path_buf(),
        row: 0,
        msg: e.to_string(),
    })?;
    Ok(h.iter().map(|s| s.to_string()).collect())
}

fn schema_error(path: &Path, expected: &[&str], found: &[String]) -> DataError {
    DataError::SchemaMismatch {
        path: path.to_path_buf(),
        expected: expected.join(","),
        found: found.join(","),
    }
}

/// Reads numeric rows. Non-finite or empty cells become NaN and are repaired
/// later; unparsable text is an error.
fn numeric_rows(rdr: &mut csv::Reader<File>, path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DataError::Parse {
            path: path.to_path_buf(),
            row: row + 1,
            msg: e.to_string(),
        })?;
        if rec.len() != width {
            return Err(DataError::Parse {
                path: path.to_path_buf(),
                row: row + 1,
                msg: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let mut vals = Vec::with_capacity(width);
        for cell in rec.iter() {
            if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                vals.push(f64::NAN);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| DataError::Parse {
                path: path.to_path_buf(),
                row: row + 1,
                msg: format!("not a number: {cell:?}"),
            })?;
            vals.push(v);
        }
        rows.push(vals);
    }
    Ok(rows)
}

fn check_times(times: &[f64], path: &Path) -> Result<()> {
    for (i, w) in times.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(DataError::NonMonotonicTimestamps {
                path: path.to_path_buf(),
                row: i + 2,
            });
        }
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(DataError::Parse {
            path: path.to_path_buf(),
            row: 0,
            msg: "non-finite timestamp".into(),
        });
    }
    Ok(())
}

/// Replaces NaN samples by the previous valid value (the next one at the
/// start). A channel with no valid samples is an empty stream.
fn repair_nan(values: &mut [f64], path: &Path) -> Result<()> {
    let first = values
        .iter()
        .position(|v| v.is_finite())
        .ok_or_else(|| DataError::EmptyStream(path.to_path_buf()))?;
    let mut last = values[first];
    for v in values.iter_mut() {
        if v.is_finite() {
            last = *v;
        } else {
            *v = last;
        }
    }
    Ok(())
}

fn stream_from_rows(rows: Vec<Vec<f64>>, columns: &[String], path: &Path) -> Result<SensorStream> {
    if rows.len() < 2 {
        return Err(DataError::EmptyStream(path.to_path_buf()));
    }
    let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    check_times(&times, path)?;
    let rate_hz = 1000.0 * (times.len() - 1) as f64 / (times[times.len() - 1] - times[0]);
    let mut channels = Vec::with_capacity(columns.len() - 1);
    for (j, name) in columns.iter().enumerate().skip(1) {
        let mut values: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        repair_nan(&mut values, path)?;
        let unit = name.rsplit('_').next().unwrap_or("").to_string();
        channels.push(Channel {
            name: name.clone(),
            unit,
            values,
        });
    }
    Ok(SensorStream {
        channels,
        rate_hz,
        t0_ms: times[0].round() as i64,
    })
}

pub fn read_ecg_csv(path: &Path) -> Result<SensorStream> {
    let mut rdr = open_csv(path)?;
    let h = headers(&mut rdr, path)?;
    let ok = (2..=4).contains(&h.len()) && h.iter().zip(ECG_HEADER).all(|(a, b)| a == b);
    if !ok {
        return Err(schema_error(path, &ECG_HEADER[..2], &h));
    }
    let rows = numeric_rows(&mut rdr, path, h.len())?;
    stream_from_rows(rows, &h, path)
}

pub fn read_imu_csv(path: &Path) -> Result<SensorStream> {
    let mut rdr = open_csv(path)?;
    let h = headers(&mut rdr, path)?;
    if h.len() != IMU_HEADER.len() || h.iter().zip(IMU_HEADER).any(|(a, b)| a != b) {
        return Err(schema_error(path, &IMU_HEADER, &h));
    }
    let rows = numeric_rows(&mut rdr, path, h.len())?;
    stream_from_rows(rows, &h, path)
}

pub fn read_resp_csv(path: &Path) -> Result<ResponseSeries> {
    let mut rdr = open_csv(path)?;
    let h = headers(&mut rdr, path)?;
    if h.len() != RESP_HEADER.len() || h.iter().zip(RESP_HEADER).any(|(a, b)| a != b) {
        return Err(schema_error(path, &RESP_HEADER, &h));
    }
    let rows = numeric_rows(&mut rdr, path, 3)?;
    let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    check_times(&times, path)?;
    let samples = rows
        .into_iter()
        .filter(|r| r[1].is_finite() && r[2].is_finite())
        .map(|r| ResponseSample {
            t_ms: r[0].round() as i64,
            br_bpm: r[1].max(0.0),
            ve_lpm: r[2].max(0.0),
        })
        .collect::<Vec<_>>();
    if samples.is_empty() {
        return Err(DataError::EmptyStream(path.to_path_buf()));
    }
    Ok(ResponseSeries { samples })
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<ActivityInterval>> {
    let mut rdr = open_csv(path)?;
    let h = headers(&mut rdr, path)?;
    if h.len() != LABELS_HEADER.len() || h.iter().zip(LABELS_HEADER).any(|(a, b)| a != b) {
        return Err(schema_error(path, &LABELS_HEADER, &h));
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DataError::Parse {
            path: path.to_path_buf(),
            row: row + 1,
            msg: e.to_string(),
        })?;
        let parse = |s: &str| -> Result<i64> {
            s.parse::<f64>()
                .map(|v| v.round() as i64)
                .map_err(|_| DataError::Parse {
                    path: path.to_path_buf(),
                    row: row + 1,
                    msg: format!("not a number: {s:?}"),
                })
        };
        out.push(ActivityInterval {
            start_ms: parse(&rec[0])?,
            end_ms: parse(&rec[1])?,
            activity: rec[2].to_string(),
        });
    }
    Ok(out)
}

pub fn validate_intervals(intervals: &[ActivityInterval], contexts: &[String]) -> Result<()> {
    for iv in intervals {
        if iv.end_ms <= iv.start_ms {
            return Err(DataError::BadIntervals(format!(
                "empty interval [{}, {})",
                iv.start_ms, iv.end_ms
            )));
        }
        if !contexts.iter().any(|c| c == &iv.activity) {
            return Err(DataError::BadIntervals(format!(
                "unknown activity {:?}",
                iv.activity
            )));
        }
    }
    for w in intervals.windows(2) {
        if w[1].start_ms < w[0].end_ms {
            return Err(DataError::BadIntervals(format!(
                "intervals overlap or are unsorted at {}",
                w[1].start_ms
            )));
        }
    }
    Ok(())
}

/// Trims both streams to their common time span.
pub fn trim_to_overlap(a: &mut SensorStream, b: &mut SensorStream) -> Result<()> {
    let start = a.t0_ms.max(b.t0_ms);
    let end = a.end_ms().min(b.end_ms());
    if end <= start {
        return Err(DataError::NoOverlap);
    }
    for s in [a, b] {
        let skip = (((start - s.t0_ms) as f64) * s.rate_hz / 1000.0 - 1e-9).ceil().max(0.0) as usize;
        let keep = (((end - start) as f64) * s.rate_hz / 1000.0 + 1e-9).floor() as usize;
        s.slice(skip, keep);
    }
    Ok(())
}

pub fn load_session(manifest: &SessionManifest) -> Result<Session> {
    let mut ecg = read_ecg_csv(&manifest.ecg_path)?;
    let mut imu = read_imu_csv(&manifest.imu_path)?;
    let resp = read_resp_csv(&manifest.resp_path)?;
    let intervals = match &manifest.labels_path {
        Some(p) => read_labels_csv(p)?,
        None => manifest.activity_intervals.clone(),
    };
    validate_intervals(&intervals, &manifest.contexts)?;
    if ecg.t0_ms != imu.t0_ms || ecg.end_ms() != imu.end_ms() {
        trim_to_overlap(&mut ecg, &mut imu)?;
    }
    Ok(Session {
        subject_id: manifest.subject_id.clone(),
        ecg,
        imu,
        resp,
        intervals,
        contexts: manifest.contexts.clone(),
    })
}

/// One averaged response label. `None` when no spirometer sample fell inside
/// the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseWindow {
    pub t_center_ms: i64,
    pub br_mean: Option<f64>,
    pub ve_mean: Option<f64>,
}

/// Windows the response series on its own clock: `t0` is the first sample and
/// the span extends one median sample interval past the last sample.
pub fn window_response(resp: &ResponseSeries, win_s: f64, step_s: f64) -> Result<Vec<ResponseWindow>> {
    let s = &resp.samples;
    if s.is_empty() {
        return Err(DataError::EmptySeries);
    }
    let mut dts: Vec<i64> = s.windows(2).map(|w| w[1].t_ms - w[0].t_ms).collect();
    dts.sort_unstable();
    let dt = dts.get(dts.len() / 2).copied().unwrap_or(0);
    let t0 = s[0].t_ms;
    let duration_ms = s[s.len() - 1].t_ms - t0 + dt;
    window_response_clocked(resp, t0, duration_ms, win_s, step_s)
}

/// Windows the response series on an external clock (the sensor streams'),
/// so centers coincide with feature windows.
pub fn window_response_clocked(
    resp: &ResponseSeries,
    t0_ms: i64,
    duration_ms: i64,
    win_s: f64,
    step_s: f64,
) -> Result<Vec<ResponseWindow>> {
    if resp.samples.is_empty() {
        return Err(DataError::EmptySeries);
    }
    let spec = WindowSpec::new(win_s, step_s).map_err(|_| DataError::BadWindowing { win_s, step_s })?;
    let count = spec.count(duration_ms as f64 / 1000.0);
    let s = &resp.samples;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let start = spec.start_ms(t0_ms, k);
        let end = start + spec.win_ms();
        let lo = s.partition_point(|x| x.t_ms < start);
        let hi = s.partition_point(|x| x.t_ms < end);
        let inside = &s[lo..hi];
        let (br, ve) = if inside.is_empty() {
            (None, None)
        } else {
            let n = inside.len() as f64;
            (
                Some(inside.iter().map(|x| x.br_bpm).sum::<f64>() / n),
                Some(inside.iter().map(|x| x.ve_lpm).sum::<f64>() / n),
            )
        };
        out.push(ResponseWindow {
            t_center_ms: spec.center_ms(t0_ms, k),
            br_mean: br,
            ve_mean: ve,
        });
    }
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| DataError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> DataError + '_ {
    move |e| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Writes a stream as CSV with 6 decimals per sample.
pub fn write_stream_csv(path: &Path, stream: &SensorStream) -> Result<()> {
    let mut w = create(path)?;
    let names: Vec<&str> = std::iter::once("t_ms")
        .chain(stream.channels.iter().map(|c| c.name.as_str()))
        .collect();
    let err = io_err(path);
    writeln!(w, "{}", names.join(",")).map_err(&err)?;
    let mut line = String::new();
    for i in 0..stream.len() {
        line.clear();
        line.push_str(&stream.time_ms(i).to_string());
        for c in &stream.channels {
            line.push(',');
            line.push_str(&format!("{:.6}", c.values[i]));
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(&err)?;
    }
    w.flush().map_err(&err)
}

pub fn write_resp_csv(path: &Path, resp: &ResponseSeries) -> Result<()> {
    let mut w = create(path)?;
    let err = io_err(path);
    writeln!(w, "{}", RESP_HEADER.join(",")).map_err(&err)?;
    for s in &resp.samples {
        writeln!(w, "{},{:.6},{:.6}", s.t_ms, s.br_bpm, s.ve_lpm).map_err(&err)?;
    }
    w.flush().map_err(&err)
}

pub fn write_labels_csv(path: &Path, intervals: &[ActivityInterval]) -> Result<()> {
    let mut w = create(path)?;
    let err = io_err(path);
    writeln!(w, "{}", LABELS_HEADER.join(",")).map_err(&err)?;
    for iv in intervals {
        writeln!(w, "{},{},{}", iv.start_ms, iv.end_ms, iv.activity).map_err(&err)?;
    }
    w.flush().map_err(&err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(points: &[(i64, f64, f64)]) -> ResponseSeries {
        ResponseSeries {
            samples: points
                .iter()
                .map(|&(t, b, v)| ResponseSample {
                    t_ms: t,
                    br_bpm: b,
                    ve_lpm: v,
                })
                .collect(),
        }
    }

    #[test]
    fn constant_response_windows_are_constant() {
        let pts: Vec<_> = (0..60).map(|i| (i * 1000, 12.0, 8.0)).collect();
        let w = window_response(&series(&pts), 15.0, 3.0).unwrap();
        assert_eq!(w.len(), 16);
        assert!(w.iter().all(|x| x.br_mean == Some(12.0) && x.ve_mean == Some(8.0)));
        assert_eq!(w[0].t_center_ms, 7500);
        assert_eq!(w[1].t_center_ms, 10500);
    }

    #[test]
    fn ramp_first_window_matches_direct_average() {
        // 10 -> 20 linearly over 60 s, sampled at 2 Hz
        let pts: Vec<_> = (0..120)
            .map(|i| {
                let t = i as f64 * 0.5;
                ((t * 1000.0) as i64, 10.0 + 10.0 * t / 60.0, 1.0)
            })
            .collect();
        let w = window_response(&series(&pts), 15.0, 3.0).unwrap();
        let direct: Vec<f64> = pts.iter().filter(|p| p.0 < 15_000).map(|p| p.1).collect();
        let expect = direct.iter().sum::<f64>() / direct.len() as f64;
        assert!((w[0].br_mean.unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn gaps_produce_missing_windows() {
        let mut pts: Vec<_> = (0..10).map(|i| (i * 1000, 10.0, 5.0)).collect();
        pts.extend((40..60).map(|i| (i * 1000, 10.0, 5.0)));
        let w = window_response_clocked(&series(&pts), 0, 60_000, 15.0, 3.0).unwrap();
        assert_eq!(w.len(), 16);
        // window starting at 12 s covers [12, 27) s: no samples
        assert_eq!(w[4].br_mean, None);
        assert!(w[0].br_mean.is_some());
    }

    #[test]
    fn empty_series_is_an_error() {
        assert!(matches!(
            window_response(&ResponseSeries::default(), 15.0, 3.0),
            Err(DataError::EmptySeries)
        ));
    }

    #[test]
    fn interval_validation() {
        let ctx = default_contexts();
        let iv = |s, e, a: &str| ActivityInterval {
            start_ms: s,
            end_ms: e,
            activity: a.into(),
        };
        assert!(validate_intervals(&[iv(0, 10, "rest"), iv(10, 20, "run")], &ctx).is_ok());
        assert!(validate_intervals(&[iv(0, 10, "rest"), iv(5, 20, "run")], &ctx).is_err());
        assert!(validate_intervals(&[iv(0, 10, "swim")], &ctx).is_err());
    }

    #[test]
    fn trim_aligns_start_times() {
        let mk = |t0, n| SensorStream {
            channels: vec![Channel {
                name: "x".into(),
                unit: "".into(),
                values: (0..n).map(|i| i as f64).collect(),
            }],
            rate_hz: 250.0,
            t0_ms: t0,
        };
        let mut a = mk(0, 2500);
        let mut b = mk(1000, 2500);
        trim_to_overlap(&mut a, &mut b).unwrap();
        assert_eq!(a.t0_ms, 1000);
        assert_eq!(b.t0_ms, 1000);
        assert_eq!(a.len(), 2250);
        assert_eq!(b.len(), 2250);
        assert_eq!(a.channels[0].values[0], 250.0);
    }
}
