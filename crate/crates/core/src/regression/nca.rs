//! Neighbourhood component analysis for regression: learns per-feature
//! weights of a weighted L1 distance so that soft nearest-neighbour
//! predictions minimise the expected absolute error.

use serde::{Deserialize, Serialize};

use super::{validate, ModelKind, Result, StandardizationParams};
use crate::optim::{self, LbfgsConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcaConfig {
    /// `None` means `1/n`.
    pub lambda: Option<f64>,
    pub max_iter: usize,
    /// Predict with the single most probable neighbour instead of the
    /// expectation over neighbours.
    pub hard_neighbor: bool,
}

impl Default for NcaConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            max_iter: 200,
            hard_neighbor: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcaModel {
    pub standardization: StandardizationParams,
    pub w: Vec<f64>,
    pub lambda: f64,
    pub hard_neighbor: bool,
    pub train: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub loss_trace: Vec<f64>,
}

fn distance(a: &[f64], b: &[f64], w2: &[f64]) -> f64 {
    a.iter().zip(b).zip(w2).map(|((x, y), w)| w * (x - y).abs()).sum()
}

/// Softmax of `-d` with a max shift; entries at `skip` get zero mass.
fn neighbour_probs(d: &[f64], skip: Option<usize>) -> Vec<f64> {
    let lo = d
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != skip)
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);
    let mut p: Vec<f64> = d
        .iter()
        .enumerate()
        .map(|(j, v)| if Some(j) == skip { 0.0 } else { (lo - v).exp() })
        .collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

/// Leave-one-out neighbour probabilities `p_ij` for weights `w`.
pub fn leave_one_out_probs(z: &[Vec<f64>], w: &[f64]) -> Vec<Vec<f64>> {
    let w2: Vec<f64> = w.iter().map(|v| v * v).collect();
    (0..z.len())
        .map(|i| {
            let d: Vec<f64> = z.iter().map(|zj| distance(&z[i], zj, &w2)).collect();
            neighbour_probs(&d, Some(i))
        })
        .collect()
}

/// Regularised leave-one-out absolute loss and its gradient in `w`.
pub fn loss_and_grad(z: &[Vec<f64>], y: &[f64], w: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let n = z.len();
    let d = w.len();
    let nf = n as f64;
    let p = leave_one_out_probs(z, w);
    let mut loss = lambda * w.iter().map(|v| v * v).sum::<f64>();
    let mut grad: Vec<f64> = w.iter().map(|v| 2.0 * lambda * v).collect();
    let mut weighted = vec![0.0; d];
    let mut plain = vec![0.0; d];
    for i in 0..n {
        weighted.iter_mut().for_each(|v| *v = 0.0);
        plain.iter_mut().for_each(|v| *v = 0.0);
        let mut li = 0.0;
        for j in 0..n {
            let pij = p[i][j];
            if pij == 0.0 {
                continue;
            }
            let lij = (y[i] - y[j]).abs();
            li += pij * lij;
            for r in 0..d {
                let a = (z[i][r] - z[j][r]).abs();
                plain[r] += pij * a;
                weighted[r] += pij * lij * a;
            }
        }
        loss += li / nf;
        for r in 0..d {
            grad[r] += 2.0 * w[r] * (li * plain[r] - weighted[r]) / nf;
        }
    }
    (loss, grad)
}

pub fn fit_nca(x: &[Vec<f64>], y: &[f64], cfg: &NcaConfig) -> Result<NcaModel> {
    validate(ModelKind::Nca, x, y)?;
    let standardization = StandardizationParams::fit(x);
    let z = standardization.transform(x);
    let lambda = cfg.lambda.unwrap_or(1.0 / y.len() as f64);
    let d = standardization.dim();
    let lbfgs = LbfgsConfig {
        max_iter: cfg.max_iter,
        ..LbfgsConfig::default()
    };
    let res = optim::minimize(
        |w, g| {
            let (f, gr) = loss_and_grad(&z, y, w, lambda);
            g.copy_from_slice(&gr);
            f
        },
        &vec![1.0; d],
        &lbfgs,
    );
    Ok(NcaModel {
        standardization,
        w: res.x,
        lambda,
        hard_neighbor: cfg.hard_neighbor,
        train: z,
        targets: y.to_vec(),
        loss_trace: res.trace,
    })
}

impl NcaModel {
    /// A model with given weights and no training.
    pub fn with_weights(x: &[Vec<f64>], y: &[f64], w: Vec<f64>, hard_neighbor: bool) -> Result<Self> {
        validate(ModelKind::Nca, x, y)?;
        let standardization = StandardizationParams::fit(x);
        let train = standardization.transform(x);
        Ok(Self {
            standardization,
            w,
            lambda: 0.0,
            hard_neighbor,
            train,
            targets: y.to_vec(),
            loss_trace: Vec::new(),
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.standardization.check(x)?;
        let z = self.standardization.transform_row(x);
        let w2: Vec<f64> = self.w.iter().map(|v| v * v).collect();
        let d: Vec<f64> = self.train.iter().map(|t| distance(&z, t, &w2)).collect();
        if self.hard_neighbor {
            let best = d
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
                .map_or(0, |(i, _)| i);
            return Ok(self.targets[best]);
        }
        let p = neighbour_probs(&d, None);
        Ok(p.iter().zip(&self.targets).map(|(a, b)| a * b).sum())
    }
}
