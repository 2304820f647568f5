//! The five regression families trained inside each context bank. Every
//! model z-scores its inputs with parameters fitted on its own training data.

pub mod glm;
pub mod gpr;
pub mod nca;
pub mod rf;
pub mod svr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use glm::{GlmConfig, GlmModel};
pub use gpr::{GprConfig, GprModel};
pub use nca::{NcaConfig, NcaModel};
pub use rf::{RfConfig, RfModel};
pub use svr::{SvrConfig, SvrModel};

#[derive(Debug, Error, PartialEq)]
pub enum RegressionError {
    #[error("{kind} needs at least {min} samples, got {found}")]
    TooFewSamples { kind: ModelKind, min: usize, found: usize },
    #[error("input has {found} features, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{rows} rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("kernel matrix stayed indefinite with jitter up to {jitter:e}")]
    IllConditionedKernel { jitter: f64 },
    #[error("non-finite value in the training data")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, RegressionError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Glm,
    Rf,
    Svm,
    Gpr,
    Nca,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::Glm, ModelKind::Rf, ModelKind::Svm, ModelKind::Gpr, ModelKind::Nca];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Glm => "glm",
            ModelKind::Rf => "rf",
            ModelKind::Svm => "svm",
            ModelKind::Gpr => "gpr",
            ModelKind::Nca => "nca",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s.to_ascii_lowercase())
    }

    /// Smallest training set the family accepts.
    pub fn min_samples(self) -> usize {
        match self {
            ModelKind::Glm | ModelKind::Svm => 2,
            ModelKind::Rf => 20,
            ModelKind::Gpr | ModelKind::Nca => 5,
        }
    }

    /// Families whose fitted models yield feature weights.
    pub fn is_rankable(self) -> bool {
        self != ModelKind::Svm
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-feature z-score parameters. Columns whose spread is below the floor
/// are treated as constant and map to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-12;

impl StandardizationParams {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in x {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; d];
        for r in x {
            for ((s, v), m) in std.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        std.iter_mut().for_each(|s| *s = s.sqrt());
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s > STD_FLOOR * (1.0 + m.abs()) { (v - m) / s } else { 0.0 })
            .collect()
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter().map(|r| self.transform_row(r)).collect()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(RegressionError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }
}

pub(crate) fn validate(kind: ModelKind, x: &[Vec<f64>], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(RegressionError::LengthMismatch {
            rows: x.len(),
            targets: y.len(),
        });
    }
    if x.len() < kind.min_samples() {
        return Err(RegressionError::TooFewSamples {
            kind,
            min: kind.min_samples(),
            found: x.len(),
        });
    }
    let d = x[0].len();
    if let Some(r) = x.iter().find(|r| r.len() != d) {
        return Err(RegressionError::DimensionMismatch {
            expected: d,
            found: r.len(),
        });
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(RegressionError::NonFinite);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RegressorConfig {
    pub glm: GlmConfig,
    pub rf: RfConfig,
    pub svr: SvrConfig,
    pub gpr: GprConfig,
    pub nca: NcaConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum TrainedRegressor {
    Glm(GlmModel),
    Rf(RfModel),
    Svm(SvrModel),
    Gpr(GprModel),
    Nca(NcaModel),
}

impl TrainedRegressor {
    pub fn fit(kind: ModelKind, x: &[Vec<f64>], y: &[f64], cfg: &RegressorConfig, seed: u64) -> Result<Self> {
        Ok(match kind {
            ModelKind::Glm => Self::Glm(glm::fit_glm(x, y, &cfg.glm)?),
            ModelKind::Rf => Self::Rf(rf::fit_rf(x, y, &cfg.rf, seed)?),
            ModelKind::Svm => Self::Svm(svr::fit_svr(x, y, &cfg.svr)?),
            ModelKind::Gpr => Self::Gpr(gpr::fit_gpr(x, y, &cfg.gpr, seed)?),
            ModelKind::Nca => Self::Nca(nca::fit_nca(x, y, &cfg.nca)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Glm(_) => ModelKind::Glm,
            Self::Rf(_) => ModelKind::Rf,
            Self::Svm(_) => ModelKind::Svm,
            Self::Gpr(_) => ModelKind::Gpr,
            Self::Nca(_) => ModelKind::Nca,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            Self::Glm(m) => m.predict(x),
            Self::Rf(m) => m.predict(x),
            Self::Svm(m) => m.predict(x),
            Self::Gpr(m) => m.predict(x),
            Self::Nca(m) => m.predict(x),
        }
    }

    /// Raw (unnormalised, non-negative) feature weights; `None` for SVR.
    pub fn raw_feature_weights(&self) -> Option<Vec<f64>> {
        match self {
            Self::Glm(m) => Some(m.beta.iter().map(|b| b.abs()).collect()),
            Self::Rf(m) => Some(m.importance.clone()),
            Self::Svm(_) => None,
            Self::Gpr(m) => Some(m.ard_relevance()),
            Self::Nca(m) => Some(m.w.iter().map(|w| w * w).collect()),
        }
    }
}
