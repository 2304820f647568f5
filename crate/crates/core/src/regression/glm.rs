//! Elastic-net linear model (identity link, Gaussian deviance) fitted by
//! cyclic coordinate descent on z-scored inputs.

use serde::{Deserialize, Serialize};

use super::{validate, ModelKind, Result, StandardizationParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmConfig {
    pub alpha: f64,
    /// `None` means `1/sqrt(n)`.
    pub lambda: Option<f64>,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for GlmConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            lambda: None,
            tol: 1e-8,
            max_sweeps: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmModel {
    pub standardization: StandardizationParams,
    pub intercept: f64,
    /// Coefficients in standardized space.
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub alpha: f64,
    /// Objective after each sweep.
    pub objective_trace: Vec<f64>,
}

/// `(1/n) RSS + lambda (1 - alpha)/2 |b|^2 + lambda alpha |b|_1`.
pub fn glm_objective(xs: &[Vec<f64>], y: &[f64], b0: f64, beta: &[f64], lambda: f64, alpha: f64) -> f64 {
    let n = y.len() as f64;
    let rss: f64 = xs
        .iter()
        .zip(y)
        .map(|(r, yi)| {
            let f = b0 + r.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
            (yi - f) * (yi - f)
        })
        .sum();
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    rss / n + lambda * (1.0 - alpha) / 2.0 * l2 + lambda * alpha * l1
}

fn soft(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Coordinate descent on already standardized inputs. Returns the intercept,
/// coefficients and per-sweep objective.
pub fn coordinate_descent(
    xs: &[Vec<f64>],
    y: &[f64],
    lambda: f64,
    alpha: f64,
    tol: f64,
    max_sweeps: usize,
) -> (f64, Vec<f64>, Vec<f64>) {
    let n = y.len();
    let nf = n as f64;
    let d = xs.first().map_or(0, Vec::len);
    let col_sq: Vec<f64> = (0..d).map(|j| xs.iter().map(|r| r[j] * r[j]).sum::<f64>() / nf).collect();
    let mut beta = vec![0.0; d];
    let mut b0 = y.iter().sum::<f64>() / nf;
    let mut resid: Vec<f64> = y.iter().map(|v| v - b0).collect();
    let mut trace = vec![glm_objective(xs, y, b0, &beta, lambda, alpha)];
    for _ in 0..max_sweeps {
        let mut max_change = 0.0f64;
        let shift = resid.iter().sum::<f64>() / nf;
        if shift != 0.0 {
            b0 += shift;
            resid.iter_mut().for_each(|r| *r -= shift);
            max_change = max_change.max(shift.abs());
        }
        for j in 0..d {
            if col_sq[j] == 0.0 {
                continue;
            }
            let old = beta[j];
            // z = (1/n) sum x_ij * partial residual
            let z = xs.iter().zip(&resid).map(|(r, e)| r[j] * e).sum::<f64>() / nf + col_sq[j] * old;
            let new = soft(2.0 * z, lambda * alpha) / (2.0 * col_sq[j] + lambda * (1.0 - alpha));
            if new != old {
                let delta = new - old;
                for (r, e) in xs.iter().zip(resid.iter_mut()) {
                    *e -= r[j] * delta;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        trace.push(glm_objective(xs, y, b0, &beta, lambda, alpha));
        if max_change <= tol {
            break;
        }
    }
    (b0, beta, trace)
}

pub fn fit_glm(x: &[Vec<f64>], y: &[f64], cfg: &GlmConfig) -> Result<GlmModel> {
    validate(ModelKind::Glm, x, y)?;
    let standardization = StandardizationParams::fit(x);
    let xs = standardization.transform(x);
    let lambda = cfg.lambda.unwrap_or(1.0 / (y.len() as f64).sqrt());
    let (intercept, beta, objective_trace) = coordinate_descent(&xs, y, lambda, cfg.alpha, cfg.tol, cfg.max_sweeps);
    Ok(GlmModel {
        standardization,
        intercept,
        beta,
        lambda,
        alpha: cfg.alpha,
        objective_trace,
    })
}

impl GlmModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.standardization.check(x)?;
        let z = self.standardization.transform_row(x);
        Ok(self.intercept + z.iter().zip(&self.beta).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn objective(&self, x: &[Vec<f64>], y: &[f64]) -> f64 {
        glm_objective(&self.standardization.transform(x), y, self.intercept, &self.beta, self.lambda, self.alpha)
    }
}
