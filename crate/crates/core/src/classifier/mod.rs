//! Context classifier: one-vs-all TotalBoost over shallow trees.

pub mod totalboost;
pub mod tree;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use totalboost::{BinaryBooster, BoostConfig, BoostTrace, IterationTrace};
pub use tree::{ShallowTree, TreeConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("need at least 2 classes with 2 samples each ({detail})")]
    InsufficientData { detail: String },
    #[error("model has not been trained")]
    UntrainedModel,
    #[error("feature vector has {found} entries, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("entropy projection found no feasible distribution")]
    InfeasibleProjection,
    #[error("margin LP failed: {0}")]
    Solver(String),
    #[error("bad model file: {0}")]
    Format(String),
}

/// Scores are clipped this far inside (-1, 1) before taking log-odds.
const SCORE_CLIP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextPosterior {
    pub p: Vec<f64>,
}

impl ContextPosterior {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.p.iter().enumerate() {
            if v > self.p[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.p[self.argmax()]
    }
}

/// One binary run per class, or a single run (positive = class 1) for two
/// classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalBoostEnsemble {
    pub format_version: u32,
    pub classes: Vec<String>,
    pub dim: usize,
    pub runs: Vec<BinaryBooster>,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

impl TotalBoostEnsemble {
    /// Aggregate weighted vote per class, each in [-1, 1].
    pub fn class_scores(&self, x: &[f64]) -> Result<Vec<f64>, ClassifierError> {
        if self.runs.is_empty() {
            return Err(ClassifierError::UntrainedModel);
        }
        if x.len() != self.dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        if self.classes.len() == 2 && self.runs.len() == 1 {
            let f = self.runs[0].score(x);
            return Ok(vec![-f, f]);
        }
        Ok(self.runs.iter().map(|r| r.score(x)).collect())
    }

    /// Softmax (temperature 1) over per-class log-odds `ln((1+f)/(1-f))`.
    pub fn predict_posterior(&self, x: &[f64]) -> Result<ContextPosterior, ClassifierError> {
        let scores = self.class_scores(x)?;
        let logits: Vec<f64> = scores
            .iter()
            .map(|&f| {
                let f = f.clamp(-1.0 + SCORE_CLIP, 1.0 - SCORE_CLIP);
                ((1.0 + f) / (1.0 - f)).ln()
            })
            .collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = e.iter().sum();
        Ok(ContextPosterior {
            p: e.iter().map(|v| v / z).collect(),
        })
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize, ClassifierError> {
        Ok(self.predict_posterior(x)?.argmax())
    }

    pub fn tree_count(&self) -> usize {
        self.runs.iter().map(|r| r.trees.len()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("ensemble serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ClassifierError> {
        let e: Self = serde_json::from_str(s).map_err(|e| ClassifierError::Format(e.to_string()))?;
        if e.format_version != MODEL_FORMAT_VERSION {
            return Err(ClassifierError::Format(format!("unsupported version {}", e.format_version)));
        }
        Ok(e)
    }
}

/// Trains the ensemble on class indices into `classes`. Returns the model and
/// one trace per binary run.
pub fn train_ensemble(
    x: &[Vec<f64>],
    y: &[usize],
    classes: &[String],
    cfg: &BoostConfig,
) -> Result<(TotalBoostEnsemble, Vec<BoostTrace>), ClassifierError> {
    let m = classes.len();
    if x.len() != y.len() {
        return Err(ClassifierError::InsufficientData {
            detail: format!("{} rows but {} labels", x.len(), y.len()),
        });
    }
    let mut counts = vec![0usize; m];
    for &c in y {
        if c >= m {
            return Err(ClassifierError::InsufficientData {
                detail: format!("label {c} outside {m} classes"),
            });
        }
        counts[c] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    if m < 2 || present < 2 || counts.iter().any(|&c| c > 0 && c < 2) {
        return Err(ClassifierError::InsufficientData {
            detail: format!("class counts {counts:?}"),
        });
    }
    let dim = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != dim) {
        return Err(ClassifierError::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    let positives: Vec<usize> = if m == 2 { vec![1] } else { (0..m).collect() };
    let results: Vec<Result<(BinaryBooster, BoostTrace), ClassifierError>> = positives
        .par_iter()
        .map(|&c| {
            let labels: Vec<bool> = y.iter().map(|&v| v == c).collect();
            if labels.iter().all(|&b| !b) {
                // absent class: a constant "no" hypothesis
                let stump = ShallowTree {
                    nodes: vec![tree::Node::Leaf { scores: vec![1.0, 0.0] }],
                    n_classes: 2,
                };
                return Ok((
                    BinaryBooster {
                        trees: vec![stump],
                        weights: vec![1.0],
                    },
                    BoostTrace { iterations: Vec::new() },
                ));
            }
            totalboost::train_binary(x, &labels, cfg)
        })
        .collect();
    let mut runs = Vec::with_capacity(results.len());
    let mut traces = Vec::with_capacity(results.len());
    for r in results {
        let (b, t) = r?;
        runs.push(b);
        traces.push(t);
    }
    Ok((
        TotalBoostEnsemble {
            format_version: MODEL_FORMAT_VERSION,
            classes: classes.to_vec(),
            dim,
            runs,
        },
        traces,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(seed: u64, m: usize, per: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for c in 0..m {
            for _ in 0..per {
                let mut r: Vec<f64> = (0..4).map(|_| rng.random_range(-0.4..0.4)).collect();
                r[c % 4] += 3.0 * (1 + c / 4) as f64;
                x.push(r);
                y.push(c);
            }
        }
        (x, y)
    }

    fn names(m: usize) -> Vec<String> {
        (0..m).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn five_class_blobs_are_confidently_separated() {
        let (x, y) = blobs(1, 5, 30);
        let (ens, _) = train_ensemble(&x, &y, &names(5), &BoostConfig::default()).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            let p = ens.predict_posterior(xi).unwrap();
            assert_eq!(p.argmax(), yi);
            assert!(p.max() >= 0.9);
        }
    }

    #[test]
    fn two_classes_use_one_run() {
        let (x, y) = blobs(2, 2, 20);
        let (ens, _) = train_ensemble(&x, &y, &names(2), &BoostConfig::default()).unwrap();
        assert_eq!(ens.runs.len(), 1);
        assert_eq!(ens.predict_class(&x[0]).unwrap(), 0);
        assert_eq!(ens.predict_class(&x[25]).unwrap(), 1);
    }

    #[test]
    fn single_tree_argmax_follows_leaf() {
        let (x, y) = blobs(3, 2, 20);
        let cfg = BoostConfig {
            max_iter: 1,
            ..BoostConfig::default()
        };
        let (ens, _) = train_ensemble(&x, &y, &names(2), &cfg).unwrap();
        assert_eq!(ens.tree_count(), 1);
        let tree = &ens.runs[0].trees[0];
        for xi in &x {
            assert_eq!(ens.predict_class(xi).unwrap(), tree.predict_class(xi));
        }
    }

    #[test]
    fn insufficient_data() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(matches!(
            train_ensemble(&x, &[0, 0, 1], &names(2), &BoostConfig::default()),
            Err(ClassifierError::InsufficientData { .. })
        ));
        assert!(matches!(
            train_ensemble(&x, &[0, 0, 0], &names(2), &BoostConfig::default()),
            Err(ClassifierError::InsufficientData { .. })
        ));
    }

    #[test]
    fn untrained_and_wrong_dimension() {
        let empty = TotalBoostEnsemble {
            format_version: MODEL_FORMAT_VERSION,
            classes: names(3),
            dim: 2,
            runs: Vec::new(),
        };
        assert_eq!(empty.predict_posterior(&[0.0, 0.0]), Err(ClassifierError::UntrainedModel));
        let (x, y) = blobs(4, 3, 10);
        let (ens, _) = train_ensemble(&x, &y, &names(3), &BoostConfig::default()).unwrap();
        assert!(matches!(ens.predict_posterior(&[0.0]), Err(ClassifierError::DimensionMismatch { .. })));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let (x, y) = blobs(5, 3, 15);
        let (ens, _) = train_ensemble(&x, &y, &names(3), &BoostConfig::default()).unwrap();
        let back = TotalBoostEnsemble::from_json(&ens.to_json()).unwrap();
        assert_eq!(back, ens);
        for xi in &x {
            assert_eq!(ens.predict_posterior(xi).unwrap(), back.predict_posterior(xi).unwrap());
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = blobs(6, 4, 12);
        let a = train_ensemble(&x, &y, &names(4), &BoostConfig::default()).unwrap().0;
        let b = train_ensemble(&x, &y, &names(4), &BoostConfig::default()).unwrap().0;
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn posterior_is_normalized(v in proptest::collection::vec(-20.0f64..20.0, 4)) {
            let (x, y) = blobs(7, 5, 8);
            let (ens, _) = train_ensemble(&x, &y, &names(5), &BoostConfig::default()).unwrap();
            let p = ens.predict_posterior(&v).unwrap();
            prop_assert!((p.p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(p.p.iter().all(|&q| (0.0..=1.0).contains(&q)));
        }
    }
}
