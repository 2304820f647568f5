//! Epsilon-insensitive support vector regression with a unit-width Gaussian
//! kernel, solved by SMO with maximal-violating-pair working sets.

use serde::{Deserialize, Serialize};

use super::{validate, ModelKind, Result, StandardizationParams};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrConfig {
    /// Stop when the maximal KKT violation falls to this.
    pub tol: f64,
    pub max_iter: usize,
    /// `C` as a multiple of `epsilon`.
    pub c_factor: f64,
}

impl Default for SvrConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 10_000_000,
            c_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub standardization: StandardizationParams,
    /// Standardized support vectors.
    pub support: Vec<Vec<f64>>,
    /// `alpha_i - alpha_i*` for each support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub epsilon: f64,
    pub c: f64,
    /// Maximal KKT violation at exit.
    pub gap: f64,
    pub iterations: usize,
}

pub fn gaussian_kernel(a: &[f64], b: &[f64]) -> f64 {
    (-a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).exp()
}

/// `epsilon = IQR / 13.49`, floored at `1e-3 std + 1e-12` for flat responses.
pub fn epsilon_for(y: &[f64]) -> f64 {
    let e = stats::iqr(y) / 13.49;
    if e > 0.0 {
        e
    } else {
        1e-3 * stats::std_dev(y) + 1e-12
    }
}

/// Dual objective in `theta = alpha - alpha*` (minimised):
/// `1/2 θᵀKθ - yᵀθ + ε Σ|θ|`.
pub fn dual_objective(k: &[Vec<f64>], y: &[f64], eps: f64, theta: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += theta[i] * theta[j] * k[i][j];
        }
    }
    0.5 * quad - y.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() + eps * theta.iter().map(|t| t.abs()).sum::<f64>()
}

/// Solution of the dual on a precomputed kernel matrix: `(theta, bias, gap,
/// iterations)`.
pub fn smo(k: &[Vec<f64>], y: &[f64], eps: f64, c: f64, tol: f64, max_iter: usize) -> (Vec<f64>, f64, f64, usize) {
    let n = y.len();
    let l = 2 * n;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let kern = |s: usize, t: usize| k[s % n][t % n];
    let mut beta = vec![0.0; l];
    let mut grad: Vec<f64> = (0..l).map(|t| if t < n { eps - y[t] } else { eps + y[t - n] }).collect();
    let upper = |b: f64| b >= c;
    let lower = |b: f64| b <= 0.0;
    let mut gap = f64::INFINITY;
    let mut iter = 0;
    while iter < max_iter {
        // maximal violating pair
        let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
        for t in 0..l {
            let yt = sign(t);
            let v = -yt * grad[t];
            let in_up = if yt > 0.0 { !upper(beta[t]) } else { !lower(beta[t]) };
            let in_low = if yt > 0.0 { !lower(beta[t]) } else { !upper(beta[t]) };
            if in_up && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low && v < gmin {
                gmin = v;
                j = t;
            }
        }
        gap = gmax - gmin;
        if i == usize::MAX || j == usize::MAX || gap <= tol {
            break;
        }
        iter += 1;
        let (yi, yj) = (sign(i), sign(j));
        let (old_i, old_j) = (beta[i], beta[j]);
        // curvature along the pair direction is the same for either sign case
        let quad = (kern(i, i) + kern(j, j) - 2.0 * kern(i, j)).max(1e-12);
        if yi != yj {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = old_i - old_j;
            beta[i] += delta;
            beta[j] += delta;
            if diff > 0.0 {
                if beta[j] < 0.0 {
                    beta[j] = 0.0;
                    beta[i] = diff;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = -diff;
            }
            if diff > 0.0 {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = c - diff;
                }
            } else if beta[j] > c {
                beta[j] = c;
                beta[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = old_i + old_j;
            beta[i] -= delta;
            beta[j] += delta;
            if sum > c {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = sum - c;
                }
            } else if beta[j] < 0.0 {
                beta[j] = 0.0;
                beta[i] = sum;
            }
            if sum > c {
                if beta[j] > c {
                    beta[j] = c;
                    beta[i] = sum - c;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = sum;
            }
        }
        let (di, dj) = (beta[i] - old_i, beta[j] - old_j);
        for t in 0..l {
            let yt = sign(t);
            grad[t] += yt * (yi * kern(t, i) * di + yj * kern(t, j) * dj);
        }
    }
    // bias from free variables, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..l {
        let yg = sign(t) * grad[t];
        if upper(beta[t]) {
            if sign(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(beta[t]) {
            if sign(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 { sum_free / free as f64 } else { (ub + lb) / 2.0 };
    let theta: Vec<f64> = (0..n).map(|i| beta[i] - beta[i + n]).collect();
    (theta, -rho, gap, iter)
}

pub fn fit_svr(x: &[Vec<f64>], y: &[f64], cfg: &SvrConfig) -> Result<SvrModel> {
    validate(ModelKind::Svm, x, y)?;
    let standardization = StandardizationParams::fit(x);
    let z = standardization.transform(x);
    let n = z.len();
    let k: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| gaussian_kernel(&z[i], &z[j])).collect()).collect();
    let epsilon = epsilon_for(y);
    let c = cfg.c_factor * epsilon;
    let (theta, bias, gap, iterations) = smo(&k, y, epsilon, c, cfg.tol, cfg.max_iter);
    let (support, coef): (Vec<Vec<f64>>, Vec<f64>) = z
        .into_iter()
        .zip(theta)
        .filter(|(_, t)| *t != 0.0)
        .unzip();
    Ok(SvrModel {
        standardization,
        support,
        coef,
        bias,
        epsilon,
        c,
        gap,
        iterations,
    })
}

impl SvrModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.standardization.check(x)?;
        let z = self.standardization.transform_row(x);
        Ok(self.bias + self.support.iter().zip(&self.coef).map(|(s, c)| c * gaussian_kernel(s, &z)).sum::<f64>())
    }
}
