//! Exact Gaussian process regression with an ARD Matérn-3/2 kernel and a
//! linear explicit basis whose coefficients are profiled out of the
//! marginal likelihood.
//!
//! Hyperparameters live in log space: `theta = [ln s, ln l_1 .. ln l_d, ln e]`
//! where `s` is the signal variance, `l_r` the squared length scale of
//! feature `r` and the noise variance is `floor + e`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{validate, ModelKind, RegressionError, Result, StandardizationParams};
use crate::optim::{self, LbfgsConfig};
use crate::{rng, stats};

const SQRT3: f64 = 1.732_050_807_568_877_2;
/// Keeps the profiled basis solve well posed for collinear features.
const BASIS_RIDGE: f64 = 1e-8;
/// Log-space box outside which the objective is reported as infinite.
const THETA_BOUND: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprConfig {
    pub restarts: usize,
    pub max_iter: usize,
    /// Noise variance floor, relative to the response variance.
    pub noise_floor: f64,
    /// Hyperparameters are fitted on at most this many evenly spaced rows.
    pub max_opt_points: usize,
    /// Largest diagonal jitter tried, relative to the signal variance.
    pub max_jitter: f64,
}

impl Default for GprConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iter: 100,
            noise_floor: 1e-6,
            max_opt_points: 150,
            max_jitter: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprModel {
    pub standardization: StandardizationParams,
    pub y_mean: f64,
    pub y_scale: f64,
    pub train: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    pub noise_floor: f64,
    /// Basis coefficients for `[1, z]` in standardized response units.
    pub beta: Vec<f64>,
    /// `K^-1 (y - H beta)`.
    pub alpha: Vec<f64>,
    pub log_likelihood: f64,
    /// Log marginal likelihood after each accepted optimizer step of the
    /// winning restart.
    pub lml_trace: Vec<f64>,
}

/// Matérn-3/2 covariance and the pieces its derivatives need.
fn matern(a: &[f64], b: &[f64], s: f64, inv_l: &[f64]) -> (f64, f64) {
    let r2: f64 = a.iter().zip(b).zip(inv_l).map(|((x, y), il)| (x - y) * (x - y) * il).sum();
    let rho = r2.sqrt();
    let e = (-SQRT3 * rho).exp();
    (s * (1.0 + SQRT3 * rho) * e, s * e)
}

fn basis(z: &[f64]) -> Vec<f64> {
    std::iter::once(1.0).chain(z.iter().copied()).collect()
}

/// Cholesky of `K + jitter I`, raising jitter geometrically up to
/// `max_jitter * s`.
fn robust_cholesky(k: &DMatrix<f64>, s: f64, max_jitter: f64) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = k.clone().cholesky() {
        return Ok(c);
    }
    let mut jitter = 1e-12 * s;
    let limit = max_jitter * s;
    while jitter <= limit * (1.0 + 1e-9) {
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = kj.cholesky() {
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(RegressionError::IllConditionedKernel { jitter: limit })
}

struct Fit {
    lml: f64,
    grad: Vec<f64>,
    beta: Vec<f64>,
    alpha: Vec<f64>,
}

fn evaluate(z: &[Vec<f64>], y: &[f64], theta: &[f64], floor: f64, max_jitter: f64, want_grad: bool) -> Result<Fit> {
    let n = z.len();
    let d = z[0].len();
    let s = theta[0].exp();
    let lens: Vec<f64> = theta[1..=d].iter().map(|t| t.exp()).collect();
    let inv_l: Vec<f64> = lens.iter().map(|l| 1.0 / l).collect();
    let noise_excess = theta[d + 1].exp();
    let noise = floor + noise_excess;
    let mut k = DMatrix::<f64>::zeros(n, n);
    let mut e_mat = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = s + noise;
        e_mat[(i, i)] = s;
        for j in 0..i {
            let (kv, ev) = matern(&z[i], &z[j], s, &inv_l);
            k[(i, j)] = kv;
            k[(j, i)] = kv;
            e_mat[(i, j)] = ev;
            e_mat[(j, i)] = ev;
        }
    }
    let chol = robust_cholesky(&k, s, max_jitter)?;
    let p = d + 1;
    let h = DMatrix::<f64>::from_fn(n, p, |i, c| if c == 0 { 1.0 } else { z[i][c - 1] });
    let yv = DVector::from_column_slice(y);
    let kinv_h = chol.solve(&h);
    let kinv_y = chol.solve(&yv);
    let mut a = h.transpose() * &kinv_h;
    for c in 0..p {
        a[(c, c)] += BASIS_RIDGE;
    }
    let rhs = h.transpose() * &kinv_y;
    let beta = a
        .cholesky()
        .ok_or(RegressionError::IllConditionedKernel { jitter: BASIS_RIDGE })?
        .solve(&rhs);
    let r = &yv - &h * &beta;
    let alpha = chol.solve(&r);
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let lml = -0.5 * r.dot(&alpha) - 0.5 * BASIS_RIDGE * beta.norm_squared() - 0.5 * log_det
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    let mut grad = vec![0.0; d + 2];
    if want_grad {
        let kinv = chol.inverse();
        // W = alpha alpha^T - K^-1; dL/dp = 1/2 sum_ij W_ij dK_ij
        for i in 0..n {
            let w_ii = alpha[i] * alpha[i] - kinv[(i, i)];
            grad[0] += 0.5 * w_ii * s;
            grad[d + 1] += 0.5 * w_ii * noise_excess;
            for j in 0..i {
                let w = alpha[i] * alpha[j] - kinv[(i, j)];
                grad[0] += w * k[(i, j)];
                let common = w * 1.5 * e_mat[(i, j)];
                for r in 0..d {
                    let diff = z[i][r] - z[j][r];
                    grad[1 + r] += common * diff * diff * inv_l[r];
                }
            }
        }
    }
    Ok(Fit {
        lml,
        grad,
        beta: beta.iter().copied().collect(),
        alpha: alpha.iter().copied().collect(),
    })
}

/// Log marginal likelihood and its gradient in `theta` for standardized
/// inputs `z` and response `y`.
pub fn log_marginal_likelihood(z: &[Vec<f64>], y: &[f64], theta: &[f64], floor: f64) -> Result<(f64, Vec<f64>)> {
    let f = evaluate(z, y, theta, floor, 1e-6, true)?;
    Ok((f.lml, f.grad))
}

fn even_subset(n: usize, m: usize) -> Vec<usize> {
    if n <= m {
        return (0..n).collect();
    }
    (0..m).map(|k| k * n / m).collect()
}

pub fn fit_gpr(x: &[Vec<f64>], y: &[f64], cfg: &GprConfig, seed: u64) -> Result<GprModel> {
    validate(ModelKind::Gpr, x, y)?;
    let standardization = StandardizationParams::fit(x);
    let z = standardization.transform(x);
    let d = z[0].len();
    let y_mean = stats::mean(y);
    let y_scale = {
        let sd = stats::std_dev(y);
        if sd > 0.0 {
            sd
        } else {
            1.0
        }
    };
    let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();
    let floor = cfg.noise_floor;

    let sub = even_subset(z.len(), cfg.max_opt_points);
    let zo: Vec<Vec<f64>> = sub.iter().map(|&i| z[i].clone()).collect();
    let yo: Vec<f64> = sub.iter().map(|&i| ys[i]).collect();
    // response variance for signal and noise, unit length scales
    let var_y = stats::variance(&yo).max(1e-12);
    let mut init = vec![var_y.ln()];
    init.extend((0..d).map(|r| stats::variance(&zo.iter().map(|row| row[r]).collect::<Vec<_>>()).max(1e-6).ln()));
    init.push((var_y - floor).max(floor).ln());

    let lbfgs = LbfgsConfig {
        max_iter: cfg.max_iter,
        grad_tol: 1e-5,
        f_tol: 1e-9,
        ..LbfgsConfig::default()
    };
    let starts: Vec<Vec<f64>> = (0..cfg.restarts.max(1))
        .map(|k| {
            if k == 0 {
                init.clone()
            } else {
                let mut r = rng::substream(seed, &format!("gpr/restart/{k}"));
                init.iter()
                    .map(|v| {
                        let e: f64 = StandardNormal.sample(&mut r);
                        v + e
                    })
                    .collect()
            }
        })
        .collect();
    let runs: Vec<optim::LbfgsResult> = starts
        .par_iter()
        .map(|x0| {
            let objective = |t: &[f64], g: &mut [f64]| {
                if t.iter().any(|v| v.abs() > THETA_BOUND) {
                    return f64::INFINITY;
                }
                match evaluate(&zo, &yo, t, floor, cfg.max_jitter, true) {
                    Ok(f) => {
                        g.iter_mut().zip(&f.grad).for_each(|(a, b)| *a = -b);
                        -f.lml
                    }
                    Err(_) => f64::INFINITY,
                }
            };
            optim::minimize(objective, x0, &lbfgs)
        })
        .collect();
    let best = runs
        .into_iter()
        .filter(|r| r.f.is_finite())
        .min_by(|a, b| a.f.total_cmp(&b.f))
        .ok_or(RegressionError::IllConditionedKernel { jitter: cfg.max_jitter })?;
    let theta = best.x.clone();
    let full = evaluate(&z, &ys, &theta, floor, cfg.max_jitter, false)?;
    Ok(GprModel {
        standardization,
        y_mean,
        y_scale,
        train: z,
        theta,
        noise_floor: floor,
        beta: full.beta,
        alpha: full.alpha,
        log_likelihood: full.lml,
        lml_trace: best.trace.iter().map(|v| -v).collect(),
    })
}

impl GprModel {
    /// Builds the predictor for fixed hyperparameters.
    pub fn with_theta(x: &[Vec<f64>], y: &[f64], theta: &[f64], floor: f64) -> Result<Self> {
        validate(ModelKind::Gpr, x, y)?;
        let standardization = StandardizationParams::fit(x);
        let z = standardization.transform(x);
        let y_mean = stats::mean(y);
        let sd = stats::std_dev(y);
        let y_scale = if sd > 0.0 { sd } else { 1.0 };
        let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();
        let f = evaluate(&z, &ys, theta, floor, 1e-6, false)?;
        Ok(Self {
            standardization,
            y_mean,
            y_scale,
            train: z,
            theta: theta.to_vec(),
            noise_floor: floor,
            beta: f.beta,
            alpha: f.alpha,
            log_likelihood: f.lml,
            lml_trace: vec![f.lml],
        })
    }

    fn dim(&self) -> usize {
        self.standardization.dim()
    }

    pub fn signal_variance(&self) -> f64 {
        self.theta[0].exp()
    }

    /// Squared length scales in standardized units.
    pub fn length_scales(&self) -> Vec<f64> {
        self.theta[1..=self.dim()].iter().map(|t| t.exp()).collect()
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_floor + self.theta[self.dim() + 1].exp()
    }

    /// `exp(-u_r)` where `u_r` is the log length scale min-max scaled into
    /// `[0, 1]`; irrelevant features (long scales) get the smallest values.
    pub fn ard_relevance(&self) -> Vec<f64> {
        let logs = &self.theta[1..=self.dim()];
        let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        logs.iter()
            .map(|v| if span > 0.0 { (-(v - lo) / span).exp() } else { 1.0 })
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.standardization.check(x)?;
        let z = self.standardization.transform_row(x);
        let d = self.dim();
        let s = self.signal_variance();
        let inv_l: Vec<f64> = self.theta[1..=d].iter().map(|t| (-t).exp()).collect();
        let mean: f64 = basis(&z).iter().zip(&self.beta).map(|(a, b)| a * b).sum();
        let kx: f64 = self
            .train
            .iter()
            .zip(&self.alpha)
            .map(|(t, a)| a * matern(t, &z, s, &inv_l).0)
            .sum();
        Ok(self.y_mean + self.y_scale * (mean + kx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = ChaCha8Rng::seed_from_u64(21);
        let z: Vec<Vec<f64>> = (0..8).map(|_| (0..3).map(|_| r.random_range(-1.5..1.5)).collect()).collect();
        let y: Vec<f64> = z.iter().map(|v| v[0].sin() + 0.3 * v[1] + 0.1 * r.random_range(-1.0..1.0)).collect();
        let theta = [0.2, -0.3, 0.5, 1.1, -1.7];
        let (_, g) = log_marginal_likelihood(&z, &y, &theta, 1e-6).unwrap();
        let num = optim::numeric_gradient(|t| log_marginal_likelihood(&z, &y, t, 1e-6).unwrap().0, &theta, 1e-5);
        for (a, b) in g.iter().zip(&num) {
            assert!((a - b).abs() <= 1e-4 * b.abs().max(1e-3), "{a} vs {b}");
        }
    }

    #[test]
    fn interpolates_noiseless_data() {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 * 0.3, ((i * 5) % 7) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|v| (v[0]).cos() + 0.2 * v[1]).collect();
        let theta = [0.0, 0.0, 0.0, (1e-13f64).ln()];
        let m = GprModel::with_theta(&x, &y, &theta, 1e-13).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((m.predict(xi).unwrap() - yi).abs() < 1e-6);
        }
    }

    #[test]
    fn irrelevant_feature_gets_long_length_scale() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<Vec<f64>> = (0..60).map(|_| vec![r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)]).collect();
        let y: Vec<f64> = x.iter().map(|v| (1.5 * v[0]).sin() + 0.05 * r.random_range(-1.0..1.0)).collect();
        let m = fit_gpr(&x, &y, &GprConfig::default(), 3).unwrap();
        let rel = m.ard_relevance();
        assert!(rel[1] < rel[0], "{rel:?}");
        let ls = m.length_scales();
        assert!(ls[1] > 10.0 * ls[0], "{ls:?}");
        assert!(m.lml_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        // near a training point the posterior mean sits close to the data
        let noise_sd = (m.noise_variance()).sqrt() * m.y_scale;
        assert!((m.predict(&x[0]).unwrap() - y[0]).abs() <= 2.0 * noise_sd + 0.05);
    }

    #[test]
    fn affine_rescaling_is_harmless() {
        let mut r = ChaCha8Rng::seed_from_u64(6);
        let x: Vec<Vec<f64>> = (0..20).map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect();
        let y: Vec<f64> = x.iter().map(|v| v[0] * v[1] + v[0]).collect();
        let xt: Vec<Vec<f64>> = x.iter().map(|v| vec![3.0 * v[0] + 1.0, 0.5 * v[1] - 2.0]).collect();
        let a = fit_gpr(&x, &y, &GprConfig::default(), 1).unwrap();
        let b = fit_gpr(&xt, &y, &GprConfig::default(), 1).unwrap();
        for (p, q) in x.iter().zip(&xt) {
            assert!((a.predict(p).unwrap() - b.predict(q).unwrap()).abs() < 1e-6);
        }
    }
}
