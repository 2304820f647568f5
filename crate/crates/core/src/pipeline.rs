//! Context-conditioned regression: an IMU context classifier, one regression
//! bank per context over ECG features, and a posterior-driven aggregator.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{self, BoostConfig, ClassifierError, ContextPosterior, TotalBoostEnsemble};
use crate::data_io::{self, DataError, Session};
use crate::dsp::{self, DspError, WindowSpec};
use crate::ecg::{self, EcgConfig};
use crate::imu::{self, ImuConfig, ImuError};
use crate::regression::{ModelKind, RegressionError, RegressorConfig, TrainedRegressor};
use crate::rng;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("context {context} has {found} training instances, {kind} needs {min}")]
    BankUnderflow {
        context: String,
        kind: ModelKind,
        found: usize,
        min: usize,
    },
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("no usable instances")]
    NoInstances,
    #[error("train ratio {0} outside (0, 1)")]
    BadRatio(f64),
    #[error("instance has {found} {what} features, expected {expected}")]
    Layout { what: &'static str, expected: usize, found: usize },
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Imu(#[from] ImuError),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Br,
    Ve,
}

impl Target {
    pub const ALL: [Target; 2] = [Target::Br, Target::Ve];

    pub fn name(self) -> &'static str {
        match self {
            Target::Br => "br",
            Target::Ve => "ve",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s.to_ascii_lowercase())
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One synchronized 15 s window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub subject: String,
    pub t_center_ms: i64,
    pub context: usize,
    pub imu: Vec<f64>,
    pub ecg: Vec<f64>,
    pub br: f64,
    pub ve: f64,
}

impl Instance {
    pub fn y(&self, target: Target) -> f64 {
        match target {
            Target::Br => self.br,
            Target::Ve => self.ve,
        }
    }
}

/// Counts of windows dropped during extraction, by reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionStats {
    pub windows: usize,
    pub kept: usize,
    pub no_context: usize,
    pub no_response: usize,
    pub ecg_failed: usize,
}

/// Builds instances from a loaded session. A window is kept when a single
/// activity interval contains it, the spirometer has samples inside it and
/// the ECG yields enough beats.
pub fn extract_instances(
    session: &Session,
    ecg_cfg: &EcgConfig,
    imu_cfg: &ImuConfig,
) -> Result<(Vec<Instance>, ExtractionStats)> {
    let spec = WindowSpec::default();
    let imu_stream = imu::preprocess_stream(&session.imu, imu_cfg)?;
    let ecg_w = dsp::sliding_windows(&session.ecg, spec)?;
    let imu_w = dsp::sliding_windows(&imu_stream, spec)?;
    let duration_ms = session.ecg.end_ms() - session.ecg.t0_ms;
    let resp = data_io::window_response_clocked(&session.resp, session.ecg.t0_ms, duration_ms, spec.win_s, spec.step_s)?;
    let n = ecg_w.len().min(imu_w.len()).min(resp.len());
    let rows: Vec<std::result::Result<Instance, u8>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let (ew, iw, rw) = (&ecg_w[k], &imu_w[k], &resp[k]);
            let end = ew.t_start_ms + spec.win_ms();
            let context = session
                .activity_for(ew.t_start_ms, end)
                .and_then(|a| session.contexts.iter().position(|c| c == a))
                .ok_or(0u8)?;
            let (Some(br), Some(ve)) = (rw.br_mean, rw.ve_mean) else {
                return Err(1);
            };
            let ecg = ecg::window_ecg_features(ew, ecg_cfg).map_err(|_| 2u8)?;
            let imu = imu::extract_imu_features(iw).map_err(|_| 2u8)?;
            Ok(Instance {
                subject: session.subject_id.clone(),
                t_center_ms: ew.t_center_ms,
                context,
                imu: imu.values,
                ecg: ecg.values,
                br,
                ve,
            })
        })
        .collect();
    let mut stats = ExtractionStats {
        windows: n,
        ..ExtractionStats::default()
    };
    let mut out = Vec::new();
    for r in rows {
        match r {
            Ok(i) => out.push(i),
            Err(0) => stats.no_context += 1,
            Err(1) => stats.no_response += 1,
            Err(_) => stats.ecg_failed += 1,
        }
    }
    stats.kept = out.len();
    Ok((out, stats))
}

/// `p` selects the most probable bank when it is confident enough, and
/// otherwise weights every bank by its posterior.
pub fn aggregate(p: &ContextPosterior, bank_preds: &[f64], tau: f64) -> f64 {
    debug_assert_eq!(p.p.len(), bank_preds.len());
    let best = p.argmax();
    if p.p[best] >= tau {
        bank_preds[best]
    } else {
        p.p.iter().zip(bank_preds).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bank {
    pub context: String,
    pub models: Vec<TrainedRegressor>,
}

impl Bank {
    pub fn model(&self, kind: ModelKind) -> Option<&TrainedRegressor> {
        self.models.iter().find(|m| m.kind() == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankGroup {
    pub target: Target,
    pub tau: f64,
    pub kinds: Vec<ModelKind>,
    pub feature_dim: usize,
    /// One bank per context, in classifier class order.
    pub banks: Vec<Bank>,
}

fn model_seed(seed: u64, target: Target, kind: ModelKind, bank: &str) -> u64 {
    rng::substream_seed(seed, &format!("bank/{target}/{kind}/{bank}"))
}

fn check_layout(instances: &[&Instance]) -> Result<usize> {
    let Some(first) = instances.first() else {
        return Err(PipelineError::NoInstances);
    };
    let d = first.ecg.len();
    if let Some(bad) = instances.iter().find(|i| i.ecg.len() != d) {
        return Err(PipelineError::Layout {
            what: "ecg",
            expected: d,
            found: bad.ecg.len(),
        });
    }
    Ok(d)
}

/// One model of each kind per context, each trained on that context only.
pub fn train_pipeline(
    instances: &[&Instance],
    contexts: &[String],
    kinds: &[ModelKind],
    target: Target,
    tau: f64,
    cfg: &RegressorConfig,
    seed: u64,
) -> Result<BankGroup> {
    let feature_dim = check_layout(instances)?;
    let jobs: Vec<(usize, ModelKind)> = (0..contexts.len()).flat_map(|c| kinds.iter().map(move |&k| (c, k))).collect();
    for &(c, k) in &jobs {
        let found = instances.iter().filter(|i| i.context == c).count();
        if found < k.min_samples() {
            return Err(PipelineError::BankUnderflow {
                context: contexts[c].clone(),
                kind: k,
                found,
                min: k.min_samples(),
            });
        }
    }
    let fitted: Vec<Result<TrainedRegressor>> = jobs
        .par_iter()
        .map(|&(c, k)| {
            let rows: Vec<&&Instance> = instances.iter().filter(|i| i.context == c).collect();
            let x: Vec<Vec<f64>> = rows.iter().map(|i| i.ecg.clone()).collect();
            let y: Vec<f64> = rows.iter().map(|i| i.y(target)).collect();
            Ok(TrainedRegressor::fit(k, &x, &y, cfg, model_seed(seed, target, k, &contexts[c]))?)
        })
        .collect();
    let mut banks: Vec<Bank> = contexts
        .iter()
        .map(|c| Bank {
            context: c.clone(),
            models: Vec::new(),
        })
        .collect();
    for (&(c, _), m) in jobs.iter().zip(fitted) {
        banks[c].models.push(m?);
    }
    Ok(BankGroup {
        target,
        tau,
        kinds: kinds.to_vec(),
        feature_dim,
        banks,
    })
}

/// The same family trained on every context at once.
pub fn train_agnostic(
    instances: &[&Instance],
    kind: ModelKind,
    target: Target,
    cfg: &RegressorConfig,
    seed: u64,
) -> Result<TrainedRegressor> {
    check_layout(instances)?;
    let x: Vec<Vec<f64>> = instances.iter().map(|i| i.ecg.clone()).collect();
    let y: Vec<f64> = instances.iter().map(|i| i.y(target)).collect();
    Ok(TrainedRegressor::fit(kind, &x, &y, cfg, model_seed(seed, target, kind, "agnostic"))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub t_center_ms: i64,
    pub true_context: usize,
    pub posterior: ContextPosterior,
    pub bank_preds: Vec<f64>,
    pub aggregated: f64,
    pub agnostic: Option<f64>,
    pub truth: Option<f64>,
}

impl BankGroup {
    pub fn bank_predictions(&self, kind: ModelKind, ecg: &[f64]) -> Result<Vec<f64>> {
        self.banks
            .iter()
            .map(|b| {
                let m = b.model(kind).ok_or(RegressionError::DimensionMismatch {
                    expected: self.feature_dim,
                    found: ecg.len(),
                })?;
                Ok(m.predict(ecg)?)
            })
            .collect()
    }

    pub fn predict(&self, kind: ModelKind, posterior: ContextPosterior, inst: &Instance) -> Result<PredictionRecord> {
        let bank_preds = self.bank_predictions(kind, &inst.ecg)?;
        let aggregated = aggregate(&posterior, &bank_preds, self.tau);
        Ok(PredictionRecord {
            t_center_ms: inst.t_center_ms,
            true_context: inst.context,
            posterior,
            bank_preds,
            aggregated,
            agnostic: None,
            truth: Some(inst.y(self.target)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub accuracy: f64,
    pub tpr: Vec<f64>,
    pub fnr: Vec<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn classifier_metrics(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<ClassifierMetrics> {
    if truth.is_empty() {
        return Err(PipelineError::EmptyTestSet);
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        confusion[t][p] += 1;
    }
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let tpr: Vec<f64> = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let n: usize = row.iter().sum();
            if n == 0 {
                f64::NAN
            } else {
                row[c] as f64 / n as f64
            }
        })
        .collect();
    Ok(ClassifierMetrics {
        accuracy: correct as f64 / truth.len() as f64,
        fnr: tpr.iter().map(|t| 1.0 - t).collect(),
        tpr,
        confusion,
    })
}

/// Overall and per-context mean absolute error; `None` for contexts with no
/// test instances.
pub fn mae_by_context(pred: &[f64], truth: &[f64], context: &[usize], n_contexts: usize) -> Result<(f64, Vec<Option<f64>>)> {
    if pred.is_empty() {
        return Err(PipelineError::EmptyTestSet);
    }
    let mut sum = vec![0.0; n_contexts];
    let mut count = vec![0usize; n_contexts];
    let mut total = 0.0;
    for ((p, t), &c) in pred.iter().zip(truth).zip(context) {
        let e = (p - t).abs();
        sum[c] += e;
        count[c] += 1;
        total += e;
    }
    Ok((
        total / pred.len() as f64,
        sum.iter().zip(&count).map(|(s, &n)| (n > 0).then(|| s / n as f64)).collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Stratified random split of individual windows.
    #[default]
    Instance,
    /// Stratified split of contiguous runs of windows.
    Block,
}

impl SplitMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "instance" => Some(Self::Instance),
            "block" => Some(Self::Block),
            _ => None,
        }
    }
}

/// Windows per block in block mode: 60 s of 3 s hops.
pub const BLOCK_LEN: usize = 20;

pub const SWEEP_RATIOS: [f64; 7] = [0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2];

/// Disjoint `(train, test)` index sets, stratified by context.
pub fn split_indices(
    instances: &[Instance],
    n_contexts: usize,
    ratio: f64,
    mode: SplitMode,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(PipelineError::BadRatio(ratio));
    }
    let mut r = rng::substream(seed, &format!("split/{}", (ratio * 100.0).round() as u32));
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..n_contexts {
        let mut idx: Vec<usize> = (0..instances.len()).filter(|&i| instances[i].context == c).collect();
        if idx.is_empty() {
            continue;
        }
        let n_train = ((ratio * idx.len() as f64).round() as usize).clamp(1, idx.len());
        match mode {
            SplitMode::Instance => {
                idx.shuffle(&mut r);
                train.extend_from_slice(&idx[..n_train]);
                test.extend_from_slice(&idx[n_train..]);
            }
            SplitMode::Block => {
                idx.sort_by(|&a, &b| {
                    (&instances[a].subject, instances[a].t_center_ms).cmp(&(&instances[b].subject, instances[b].t_center_ms))
                });
                let mut blocks: Vec<&[usize]> = idx.chunks(BLOCK_LEN).collect();
                blocks.shuffle(&mut r);
                let mut taken = 0;
                for b in blocks {
                    if taken < n_train {
                        train.extend_from_slice(b);
                        taken += b.len();
                    } else {
                        test.extend_from_slice(b);
                    }
                }
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    if test.is_empty() {
        return Err(PipelineError::EmptyTestSet);
    }
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub kinds: Vec<ModelKind>,
    pub targets: Vec<Target>,
    pub ratios: Vec<f64>,
    pub tau: f64,
    pub split: SplitMode,
    pub seed: u64,
    pub boost: BoostConfig,
    pub regressors: RegressorConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            kinds: ModelKind::ALL.to_vec(),
            targets: Target::ALL.to_vec(),
            ratios: SWEEP_RATIOS.to_vec(),
            tau: 0.8,
            split: SplitMode::Instance,
            seed: 42,
            boost: BoostConfig::default(),
            regressors: RegressorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub overall_mae: f64,
    pub per_context_mae: BTreeMap<String, Option<f64>>,
    pub agnostic_mae: f64,
    pub agnostic_per_context_mae: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub accuracy: f64,
    pub tpr: BTreeMap<String, f64>,
    pub fnr: BTreeMap<String, f64>,
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub train_ratio: f64,
    pub test_ratio: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub classifier: ClassifierReport,
    /// target → model kind → metrics.
    pub models: BTreeMap<String, BTreeMap<String, ModelMetrics>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub contexts: Vec<String>,
    pub tau: f64,
    pub seed: u64,
    pub split: SplitMode,
    pub ratios: Vec<RatioReport>,
}

/// A prediction row tagged with where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedPrediction {
    pub train_ratio: f64,
    pub target: Target,
    pub kind: ModelKind,
    pub record: PredictionRecord,
}

fn named<T: Clone>(contexts: &[String], v: &[T]) -> BTreeMap<String, T> {
    contexts.iter().cloned().zip(v.iter().cloned()).collect()
}

/// Trains and evaluates the classifier, the contextual banks and the
/// context-agnostic baseline at one hold-out ratio.
pub fn evaluate_ratio(
    instances: &[Instance],
    contexts: &[String],
    ratio: f64,
    cfg: &EvalConfig,
) -> Result<(RatioReport, Vec<TaggedPrediction>)> {
    let m = contexts.len();
    let (train_idx, test_idx) = split_indices(instances, m, ratio, cfg.split, cfg.seed)?;
    let train: Vec<&Instance> = train_idx.iter().map(|&i| &instances[i]).collect();
    let test: Vec<&Instance> = test_idx.iter().map(|&i| &instances[i]).collect();

    let xi: Vec<Vec<f64>> = train.iter().map(|i| i.imu.clone()).collect();
    let yi: Vec<usize> = train.iter().map(|i| i.context).collect();
    let (ens, _) = classifier::train_ensemble(&xi, &yi, contexts, &cfg.boost)?;
    let posteriors: Vec<ContextPosterior> = test
        .iter()
        .map(|i| ens.predict_posterior(&i.imu))
        .collect::<std::result::Result<_, _>>()?;
    let truth_ctx: Vec<usize> = test.iter().map(|i| i.context).collect();
    let pred_ctx: Vec<usize> = posteriors.iter().map(ContextPosterior::argmax).collect();
    let cm = classifier_metrics(&truth_ctx, &pred_ctx, m)?;

    let jobs: Vec<(Target, ModelKind)> = cfg
        .targets
        .iter()
        .flat_map(|&t| cfg.kinds.iter().map(move |&k| (t, k)))
        .collect();
    let results: Vec<Result<(ModelMetrics, Vec<TaggedPrediction>)>> = jobs
        .par_iter()
        .map(|&(target, kind)| {
            let group = train_pipeline(&train, contexts, &[kind], target, cfg.tau, &cfg.regressors, cfg.seed)?;
            let agnostic = train_agnostic(&train, kind, target, &cfg.regressors, cfg.seed)?;
            let mut records = Vec::with_capacity(test.len());
            for (inst, post) in test.iter().zip(&posteriors) {
                let mut rec = group.predict(kind, post.clone(), inst)?;
                rec.agnostic = Some(agnostic.predict(&inst.ecg)?);
                records.push(rec);
            }
            let truth: Vec<f64> = test.iter().map(|i| i.y(target)).collect();
            let agg: Vec<f64> = records.iter().map(|r| r.aggregated).collect();
            let agn: Vec<f64> = records.iter().filter_map(|r| r.agnostic).collect();
            let (overall, per) = mae_by_context(&agg, &truth, &truth_ctx, m)?;
            let (a_overall, a_per) = mae_by_context(&agn, &truth, &truth_ctx, m)?;
            let metrics = ModelMetrics {
                overall_mae: overall,
                per_context_mae: named(contexts, &per),
                agnostic_mae: a_overall,
                agnostic_per_context_mae: named(contexts, &a_per),
            };
            let tagged = records
                .into_iter()
                .map(|record| TaggedPrediction {
                    train_ratio: ratio,
                    target,
                    kind,
                    record,
                })
                .collect();
            Ok((metrics, tagged))
        })
        .collect();
    let mut models: BTreeMap<String, BTreeMap<String, ModelMetrics>> = BTreeMap::new();
    let mut predictions = Vec::new();
    for (&(target, kind), r) in jobs.iter().zip(results) {
        let (metrics, tagged) = r?;
        models.entry(target.name().to_string()).or_default().insert(kind.name().to_string(), metrics);
        predictions.extend(tagged);
    }
    Ok((
        RatioReport {
            train_ratio: ratio,
            test_ratio: 1.0 - ratio,
            n_train: train.len(),
            n_test: test.len(),
            classifier: ClassifierReport {
                accuracy: cm.accuracy,
                tpr: named(contexts, &cm.tpr),
                fnr: named(contexts, &cm.fnr),
                confusion: cm.confusion,
            },
            models,
        },
        predictions,
    ))
}

/// Runs every configured ratio in turn.
pub fn sweep(instances: &[Instance], contexts: &[String], cfg: &EvalConfig) -> Result<(SweepReport, Vec<TaggedPrediction>)> {
    if instances.is_empty() {
        return Err(PipelineError::NoInstances);
    }
    let mut ratios = Vec::new();
    let mut predictions = Vec::new();
    for &r in &cfg.ratios {
        let (rep, preds) = evaluate_ratio(instances, contexts, r, cfg)?;
        ratios.push(rep);
        predictions.extend(preds);
    }
    Ok((
        SweepReport {
            contexts: contexts.to_vec(),
            tau: cfg.tau,
            seed: cfg.seed,
            split: cfg.split,
            ratios,
        },
        predictions,
    ))
}

/// Pretty JSON of a sweep report. Floats round-trip exactly, so equal
/// reports give equal bytes.
pub fn metrics_json(report: &SweepReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

/// Trains the classifier on every instance, for serving.
pub fn train_classifier(instances: &[Instance], contexts: &[String], cfg: &BoostConfig) -> Result<TotalBoostEnsemble> {
    let x: Vec<Vec<f64>> = instances.iter().map(|i| i.imu.clone()).collect();
    let y: Vec<usize> = instances.iter().map(|i| i.context).collect();
    Ok(classifier::train_ensemble(&x, &y, contexts, cfg)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn post(p: &[f64]) -> ContextPosterior {
        ContextPosterior { p: p.to_vec() }
    }

    #[test]
    fn aggregation_branches() {
        let preds = [10.0, 20.0, 30.0, 40.0, 50.0];
        assert_eq!(aggregate(&post(&[1.0, 0.0, 0.0, 0.0, 0.0]), &preds, 0.8), 10.0);
        assert!((aggregate(&post(&[0.2; 5]), &preds, 0.8) - 30.0).abs() < 1e-12);
        let p = post(&[0.6, 0.4, 0.0, 0.0, 0.0]);
        assert!((aggregate(&p, &[10.0, 20.0, 0.0, 0.0, 0.0], 0.8) - 14.0).abs() < 1e-12);
        // tie goes to the lowest index
        assert_eq!(aggregate(&post(&[0.5, 0.5]), &[1.0, 2.0], 0.5), 1.0);
    }

    proptest! {
        #[test]
        fn aggregate_is_convex(raw in proptest::collection::vec(0.0f64..1.0, 5), preds in proptest::collection::vec(-50.0f64..50.0, 5), tau in 0.21f64..1.0) {
            let s: f64 = raw.iter().sum::<f64>() + 1e-9;
            let p = post(&raw.iter().map(|v| (v + 1e-9 / 5.0) / s).collect::<Vec<_>>());
            let y = aggregate(&p, &preds, tau);
            let lo = preds.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = preds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(y >= lo - 1e-9 && y <= hi + 1e-9);
        }
    }

    fn toy(n_per: usize, contexts: usize) -> Vec<Instance> {
        let mut out = Vec::new();
        for c in 0..contexts {
            for k in 0..n_per {
                let x = k as f64 / n_per as f64;
                out.push(Instance {
                    subject: "s".into(),
                    t_center_ms: (c * n_per + k) as i64 * 3000,
                    context: c,
                    imu: vec![c as f64, (k % 3) as f64],
                    ecg: vec![x, ((k * 7) % 5) as f64],
                    br: 10.0 + c as f64 * x,
                    ve: 5.0,
                });
            }
        }
        out
    }

    #[test]
    fn one_bank_per_context() {
        let data = toy(60, 5);
        let refs: Vec<&Instance> = data.iter().collect();
        let ctx: Vec<String> = (0..5).map(|c| format!("c{c}")).collect();
        let g = train_pipeline(&refs, &ctx, &[ModelKind::Glm], Target::Br, 0.8, &RegressorConfig::default(), 1).unwrap();
        assert_eq!(g.banks.len(), 5);
        assert!(g.banks.iter().all(|b| b.models.len() == 1));
        let again = train_pipeline(&refs, &ctx, &[ModelKind::Glm], Target::Br, 0.8, &RegressorConfig::default(), 1).unwrap();
        assert_eq!(serde_json::to_string(&g).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn tiny_context_underflows() {
        let mut data = toy(30, 2);
        data.push(Instance {
            context: 2,
            ..data[0].clone()
        });
        let refs: Vec<&Instance> = data.iter().collect();
        let ctx: Vec<String> = (0..3).map(|c| format!("c{c}")).collect();
        let err = train_pipeline(&refs, &ctx, &[ModelKind::Glm], Target::Br, 0.8, &RegressorConfig::default(), 1).unwrap_err();
        assert!(matches!(err, PipelineError::BankUnderflow { ref context, found: 1, .. } if context == "c2"));
    }

    #[test]
    fn perfect_predictions_score_zero() {
        let (mae, per) = mae_by_context(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &[0, 1, 1], 3).unwrap();
        assert_eq!(mae, 0.0);
        assert_eq!(per, vec![Some(0.0), Some(0.0), None]);
        let cm = classifier_metrics(&[0, 1, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(cm.accuracy, 1.0);
        assert!(mae_by_context(&[], &[], &[], 1).is_err());
    }

    #[test]
    fn constant_predictor_scores_its_mean_absolute_deviation() {
        let y = [3.0, 7.0, 1.0, 9.0, 4.0];
        let mean = y.iter().sum::<f64>() / 5.0;
        let (mae, _) = mae_by_context(&[mean; 5], &y, &[0; 5], 1).unwrap();
        let mut dev = 0.0;
        for v in y {
            dev += if v > mean { v - mean } else { mean - v };
        }
        assert!((mae - dev / 5.0).abs() < 1e-15);
    }

    #[test]
    fn splits_are_disjoint_and_stratified() {
        let data = toy(50, 3);
        for mode in [SplitMode::Instance, SplitMode::Block] {
            for r in SWEEP_RATIOS {
                let (tr, te) = split_indices(&data, 3, r, mode, 9).unwrap();
                assert_eq!(tr.len() + te.len(), data.len());
                assert!(tr.iter().all(|i| te.binary_search(i).is_err()));
                for c in 0..3 {
                    let n = tr.iter().filter(|&&i| data[i].context == c).count();
                    let tol = if mode == SplitMode::Block { BLOCK_LEN } else { 1 };
                    assert!((n as f64 - r * 50.0).abs() <= tol as f64, "{mode:?} {r} {n}");
                }
            }
        }
        assert!(split_indices(&data, 3, 1.0, SplitMode::Instance, 0).is_err());
    }

    #[test]
    fn one_hot_posterior_equals_direct_bank_error() {
        let data = toy(60, 3);
        let refs: Vec<&Instance> = data.iter().collect();
        let ctx: Vec<String> = (0..3).map(|c| format!("c{c}")).collect();
        let g = train_pipeline(&refs, &ctx, &[ModelKind::Glm], Target::Br, 0.8, &RegressorConfig::default(), 1).unwrap();
        let mut via = 0.0;
        let mut direct = 0.0;
        for inst in &data {
            let mut p = vec![0.0; 3];
            p[inst.context] = 1.0;
            via += (g.predict(ModelKind::Glm, post(&p), inst).unwrap().aggregated - inst.br).abs();
            let m = g.banks[inst.context].model(ModelKind::Glm).unwrap();
            direct += (m.predict(&inst.ecg).unwrap() - inst.br).abs();
        }
        assert_eq!(via, direct);
    }

    #[test]
    fn metrics_ignore_test_order() {
        let pred = [1.0, 4.0, 2.5, 7.0];
        let truth = [1.5, 3.0, 2.0, 9.0];
        let ctx = [0, 1, 0, 1];
        let a = mae_by_context(&pred, &truth, &ctx, 2).unwrap();
        let b = mae_by_context(&[7.0, 2.5, 4.0, 1.0], &[9.0, 2.0, 3.0, 1.5], &[1, 0, 1, 0], 2).unwrap();
        assert!((a.0 - b.0).abs() < 1e-15);
    }
}
