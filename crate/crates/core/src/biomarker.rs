//! Feature weights per fitted model, merged into the ten morphology
//! parameters and then clustered into five ECG biomarkers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ecg::{ECG_FEATURE_DIM, MORPHOLOGY_FIELDS};
use crate::pipeline::{Bank, BankGroup, Target};
use crate::regression::{ModelKind, TrainedRegressor};

#[derive(Debug, Error, PartialEq)]
pub enum BiomarkerError {
    #[error("{0} models carry no feature weights")]
    UnsupportedFamily(ModelKind),
    #[error("expected {expected} feature weights, got {found}")]
    LayoutMismatch { expected: usize, found: usize },
    #[error("bank {0} has no model that can be ranked")]
    NoRankableModels(String),
}

pub type Result<T> = std::result::Result<T, BiomarkerError>;

pub const BIOMARKERS: [&str; 5] = ["Rh", "Rw", "Th", "Tw", "RR"];

/// Morphology parameters belonging to each biomarker, by `MORPHOLOGY_FIELDS`
/// name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerMap {
    pub clusters: Vec<(String, Vec<String>)>,
}

impl Default for BiomarkerMap {
    fn default() -> Self {
        let c = |b: &str, m: &[&str]| (b.to_string(), m.iter().map(|s| s.to_string()).collect());
        Self {
            clusters: vec![
                c("Rh", &["r_mag", "r_prom", "r_power"]),
                c("Rw", &["r_width_ms", "qs_dist_ms"]),
                c("Th", &["t_mag", "t_power"]),
                c("Tw", &["t_width_ms", "st_dist_ms"]),
                c("RR", &["bpm"]),
            ],
        }
    }
}

impl BiomarkerMap {
    /// True when every morphology parameter appears in exactly one cluster.
    pub fn is_partition(&self) -> bool {
        let mut seen = vec![0usize; MORPHOLOGY_FIELDS.len()];
        for (_, members) in &self.clusters {
            for m in members {
                match MORPHOLOGY_FIELDS.iter().position(|f| f == m) {
                    Some(i) => seen[i] += 1,
                    None => return false,
                }
            }
        }
        seen.iter().all(|&n| n == 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeights {
    pub source: ModelKind,
    /// Normalized to sum to one.
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerRelevance {
    pub target: Target,
    pub context: String,
    /// Percent per biomarker, in `BIOMARKERS` order.
    pub rel: Vec<f64>,
}

impl BiomarkerRelevance {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.rel.iter().enumerate() {
            if *v > self.rel[best] {
                best = i;
            }
        }
        best
    }
}

fn normalize(mut v: Vec<f64>, total: f64) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x *= total / s);
    } else {
        let n = v.len() as f64;
        v.iter_mut().for_each(|x| *x = total / n);
    }
    v
}

/// Normalized, non-negative weights of a fitted model. A model whose raw
/// weights are all zero gets uniform weights.
pub fn feature_weights(model: &TrainedRegressor) -> Result<FeatureWeights> {
    let raw = model
        .raw_feature_weights()
        .ok_or(BiomarkerError::UnsupportedFamily(model.kind()))?;
    Ok(FeatureWeights {
        source: model.kind(),
        w: normalize(raw.into_iter().map(|v| v.max(0.0)).collect(), 1.0),
    })
}

/// Sums each parameter's `_mean` and `_std` weights.
pub fn merge_stats(w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != ECG_FEATURE_DIM {
        return Err(BiomarkerError::LayoutMismatch {
            expected: ECG_FEATURE_DIM,
            found: w.len(),
        });
    }
    Ok(w.chunks(2).map(|p| p[0] + p[1]).collect())
}

/// Mean member weight per biomarker, renormalized to percent.
pub fn cluster_biomarkers(w_m: &[f64], map: &BiomarkerMap) -> Result<Vec<f64>> {
    if w_m.len() != MORPHOLOGY_FIELDS.len() {
        return Err(BiomarkerError::LayoutMismatch {
            expected: MORPHOLOGY_FIELDS.len(),
            found: w_m.len(),
        });
    }
    let raw: Vec<f64> = map
        .clusters
        .iter()
        .map(|(_, members)| {
            let vals: Vec<f64> = members
                .iter()
                .filter_map(|m| MORPHOLOGY_FIELDS.iter().position(|f| f == m))
                .map(|i| w_m[i])
                .collect();
            if vals.is_empty() {
                0.0
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        })
        .collect();
    Ok(normalize(raw, 100.0))
}

pub fn model_relevance(model: &TrainedRegressor, map: &BiomarkerMap) -> Result<Vec<f64>> {
    let w = feature_weights(model)?;
    cluster_biomarkers(&merge_stats(&w.w)?, map)
}

/// Average over the bank's rankable models, renormalized to percent.
pub fn contextual_relevance(bank: &Bank, target: Target, map: &BiomarkerMap) -> Result<BiomarkerRelevance> {
    let per: Vec<Vec<f64>> = bank
        .models
        .iter()
        .filter(|m| m.kind().is_rankable())
        .map(|m| model_relevance(m, map))
        .collect::<Result<_>>()?;
    if per.is_empty() {
        return Err(BiomarkerError::NoRankableModels(bank.context.clone()));
    }
    let k = map.clusters.len();
    let mean: Vec<f64> = (0..k).map(|b| per.iter().map(|r| r[b]).sum::<f64>() / per.len() as f64).collect();
    Ok(BiomarkerRelevance {
        target,
        context: bank.context.clone(),
        rel: normalize(mean, 100.0),
    })
}

pub fn group_relevance(group: &BankGroup, map: &BiomarkerMap) -> Result<Vec<BiomarkerRelevance>> {
    group.banks.iter().map(|b| contextual_relevance(b, group.target, map)).collect()
}

/// `target,context,<biomarkers...>` with percentages at 6 decimals.
pub fn relevance_csv(rows: &[BiomarkerRelevance], map: &BiomarkerMap) -> String {
    let mut out = String::from("target,context");
    for (name, _) in &map.clusters {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{}", r.target, r.context));
        for v in &r.rel {
            out.push_str(&format!(",{v:.6}"));
        }
        out.push('\n');
    }
    out
}
