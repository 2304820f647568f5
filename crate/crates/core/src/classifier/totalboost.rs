//! Binary TotalBoost: a totally corrective booster whose sample distribution
//! is the relative-entropy projection of the uniform distribution onto the
//! set where every hypothesis so far has edge at most `gamma_hat - nu`.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use super::tree::{train_tree, ShallowTree, TreeConfig};
use super::ClassifierError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub max_iter: usize,
    /// Margin precision.
    pub nu: f64,
    pub tree: TreeConfig,
    pub projection_tol: f64,
    pub projection_passes: usize,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            nu: 0.01,
            tree: TreeConfig::default(),
            projection_tol: 1e-8,
            projection_passes: 10_000,
        }
    }
}

/// Hypothesis output of a two-class tree: `scores[1] - scores[0]`, in [-1, 1].
pub fn tree_output(tree: &ShallowTree, x: &[f64]) -> f64 {
    let s = tree.leaf_scores(x);
    s[1] - s[0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryBooster {
    pub trees: Vec<ShallowTree>,
    pub weights: Vec<f64>,
}

impl BinaryBooster {
    /// Weighted vote in [-1, 1] (weights sum to one).
    pub fn score(&self, x: &[f64]) -> f64 {
        self.trees.iter().zip(&self.weights).map(|(t, w)| w * tree_output(t, x)).sum()
    }
}

/// State recorded after each accepted iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    /// Edge of the new hypothesis under the distribution it was trained on.
    pub edge: f64,
    pub gamma_hat: f64,
    /// Optimal minimum margin over the hypotheses so far.
    pub lp_margin: f64,
    /// Distribution after the update; `None` when the update was infeasible
    /// and training stopped.
    pub d: Option<Vec<f64>>,
    /// `d . u^q` for every stored hypothesis, under the updated `d`.
    pub stored_edges: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostTrace {
    pub iterations: Vec<IterationTrace>,
}

/// Margin-maximising convex combination: `max rho` s.t. `U w >= rho`,
/// `w` on the simplex. `columns[q][i]` is `u_i` of hypothesis `q`.
pub fn max_margin_lp(columns: &[Vec<f64>]) -> Result<(f64, Vec<f64>), ClassifierError> {
    let t = columns.len();
    if t == 1 {
        let rho = columns[0].iter().copied().fold(f64::INFINITY, f64::min);
        return Ok((rho, vec![1.0]));
    }
    let n = columns[0].len();
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let w: Vec<_> = (0..t).map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    let rho = lp.add_var(1.0, (-1.0, 1.0));
    let ones: Vec<_> = w.iter().map(|&v| (v, 1.0)).collect();
    lp.add_constraint(ones.as_slice(), ComparisonOp::Eq, 1.0);
    for i in 0..n {
        let mut row: Vec<_> = w.iter().zip(columns).map(|(&v, c)| (v, c[i])).collect();
        row.push((rho, -1.0));
        lp.add_constraint(row.as_slice(), ComparisonOp::Ge, 0.0);
    }
    let sol = lp
        .solve()
        .map_err(|e| ClassifierError::Solver(e.to_string()))?
        .into_solution()
        .map_err(|_| ClassifierError::Solver("interrupted".into()))?;
    let mut weights: Vec<f64> = w.iter().map(|&v| sol.var_value(v).max(0.0)).collect();
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|v| *v /= s);
    // margin of the cleaned weights, so it is exactly what predictions see
    let margin = (0..n)
        .map(|i| columns.iter().zip(&weights).map(|(c, w)| w * c[i]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    Ok((margin, weights))
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `d ∝ d0 exp(-Σ η_q u^q)` from the log of `d0` and the current exponent.
fn distribution(log_d0: &[f64], expo: &[f64]) -> Vec<f64> {
    let z: Vec<f64> = log_d0.iter().zip(expo).map(|(a, e)| a - e).collect();
    let lse = log_sum_exp(&z);
    z.iter().map(|v| (v - lse).exp()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn exponent(columns: &[Vec<f64>], eta: &[f64], n: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    for (u, &h) in columns.iter().zip(eta) {
        if h != 0.0 {
            for (ei, ui) in e.iter_mut().zip(u) {
                *ei += h * ui;
            }
        }
    }
    e
}

/// KKT residual of the projection: every edge at most `g`, and tight where
/// the multiplier is positive.
fn kkt_residual(d: &[f64], columns: &[Vec<f64>], eta: &[f64], g: f64) -> f64 {
    columns
        .iter()
        .zip(eta)
        .map(|(u, &h)| {
            let r = dot(d, u) - g;
            if h > 0.0 {
                r.abs()
            } else {
                r.max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Cyclic Bregman projections onto each half-space in turn: one exact 1-D
/// solve per constraint per pass. Returns `true` once the KKT residual is
/// within `tol`.
fn cyclic_projections(
    log_d0: &[f64],
    columns: &[Vec<f64>],
    g: f64,
    tol: f64,
    passes: usize,
    eta: &mut [f64],
) -> Result<bool, ClassifierError> {
    let mut expo = exponent(columns, eta, log_d0.len());
    for _ in 0..passes {
        for (q, u) in columns.iter().enumerate() {
            // exponent without this constraint's contribution
            let base: Vec<f64> = expo.iter().zip(u).map(|(e, ui)| e - eta[q] * ui).collect();
            let at = |h: f64| {
                let e: Vec<f64> = base.iter().zip(u).map(|(b, ui)| b + h * ui).collect();
                let d = distribution(log_d0, &e);
                let mu = dot(&d, u);
                let var = d.iter().zip(u).map(|(di, ui)| di * (ui - mu) * (ui - mu)).sum::<f64>();
                (mu, var)
            };
            let new = if at(0.0).0 <= g {
                0.0
            } else {
                // the edge is decreasing in h: bracket, then safeguarded Newton
                let mut hi = eta[q].max(1.0);
                let mut tries = 0;
                while at(hi).0 > g {
                    hi *= 2.0;
                    tries += 1;
                    if tries > 200 {
                        return Err(ClassifierError::InfeasibleProjection);
                    }
                }
                let mut lo = 0.0;
                let mut h = eta[q].clamp(lo, hi);
                for _ in 0..200 {
                    let (mu, var) = at(h);
                    let f = mu - g;
                    if f.abs() <= tol * 0.1 {
                        break;
                    }
                    if f > 0.0 {
                        lo = h;
                    } else {
                        hi = h;
                    }
                    let newton = h + f / var.max(1e-300);
                    h = if var > 0.0 && newton > lo && newton < hi {
                        newton
                    } else {
                        0.5 * (lo + hi)
                    };
                    if hi - lo < 1e-15 * hi.max(1.0) {
                        break;
                    }
                }
                h
            };
            for (e, (b, ui)) in expo.iter_mut().zip(base.iter().zip(u)) {
                *e = b + new * ui;
            }
            eta[q] = new;
        }
        let d = distribution(log_d0, &expo);
        if kkt_residual(&d, columns, eta, g) <= tol {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Dual objective `ln Σ d0 exp(-Uη) + g Σ η`, minimised over `η >= 0`.
fn dual_objective(log_d0: &[f64], columns: &[Vec<f64>], eta: &[f64], g: f64) -> f64 {
    let e = exponent(columns, eta, log_d0.len());
    let z: Vec<f64> = log_d0.iter().zip(&e).map(|(a, b)| a - b).collect();
    log_sum_exp(&z) + g * eta.iter().sum::<f64>()
}

/// Projected Newton on the dual, for when cyclic passes crawl along
/// correlated constraints.
fn projected_newton(
    log_d0: &[f64],
    columns: &[Vec<f64>],
    g: f64,
    tol: f64,
    eta: &mut Vec<f64>,
) -> bool {
    let t = columns.len();
    for _ in 0..500 {
        let d = distribution(log_d0, &exponent(columns, eta, log_d0.len()));
        if kkt_residual(&d, columns, eta, g) <= tol {
            return true;
        }
        let mu: Vec<f64> = columns.iter().map(|u| dot(&d, u)).collect();
        let grad: Vec<f64> = mu.iter().map(|m| g - m).collect();
        let free: Vec<usize> = (0..t).filter(|&q| eta[q] > 1e-12 || grad[q] < 0.0).collect();
        let mut step = vec![0.0; t];
        for q in 0..t {
            if !free.contains(&q) {
                step[q] = -grad[q];
            }
        }
        if !free.is_empty() {
            let k = free.len();
            let mut h = nalgebra::DMatrix::<f64>::zeros(k, k);
            for (a, &qa) in free.iter().enumerate() {
                for (b, &qb) in free.iter().enumerate().skip(a) {
                    let cov: f64 = d
                        .iter()
                        .zip(columns[qa].iter().zip(&columns[qb]))
                        .map(|(di, (ua, ub))| di * (ua - mu[qa]) * (ub - mu[qb]))
                        .sum();
                    h[(a, b)] = cov;
                    h[(b, a)] = cov;
                }
            }
            let ridge = 1e-12 * (h.trace() / k as f64).max(1e-300);
            for a in 0..k {
                h[(a, a)] += ridge;
            }
            let rhs = nalgebra::DVector::from_iterator(k, free.iter().map(|&q| -grad[q]));
            let Some(chol) = h.cholesky() else {
                return false;
            };
            let p = chol.solve(&rhs);
            for (a, &q) in free.iter().enumerate() {
                step[q] = p[a];
            }
        }
        let f0 = dual_objective(log_d0, columns, eta, g);
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial: Vec<f64> = eta.iter().zip(&step).map(|(e, s)| (e + alpha * s).max(0.0)).collect();
            let decrease: f64 = grad.iter().zip(eta.iter().zip(&trial)).map(|(gq, (e, tr))| gq * (e - tr)).sum();
            let f1 = dual_objective(log_d0, columns, &trial, g);
            if f1 <= f0 - 1e-4 * decrease.max(0.0) && f1 <= f0 {
                *eta = trial;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            let d = distribution(log_d0, &exponent(columns, eta, log_d0.len()));
            return kkt_residual(&d, columns, eta, g) <= tol;
        }
    }
    false
}

/// Relative-entropy projection of `d0` onto `{d : d . u^q <= g for all q}`.
/// Cyclic Bregman projections do the bulk of the work; if they have not
/// converged after a short warm-up the multipliers are polished by projected
/// Newton, with the remaining pass budget as a last resort. Returns `d` and
/// the multipliers.
pub fn entropy_projection(
    d0: &[f64],
    columns: &[Vec<f64>],
    g: f64,
    tol: f64,
    max_passes: usize,
) -> Result<(Vec<f64>, Vec<f64>), ClassifierError> {
    let log_d0: Vec<f64> = d0.iter().map(|v| v.ln()).collect();
    let mut eta = vec![0.0; columns.len()];
    let warm = max_passes.min(50);
    let done = cyclic_projections(&log_d0, columns, g, tol, warm, &mut eta)?
        || projected_newton(&log_d0, columns, g, tol, &mut eta)
        || cyclic_projections(&log_d0, columns, g, tol, max_passes - warm, &mut eta)?;
    let d = distribution(&log_d0, &exponent(columns, &eta, d0.len()));
    if done || columns.iter().all(|u| dot(&d, u) <= g + 1e-6) {
        Ok((d, eta))
    } else {
        Err(ClassifierError::InfeasibleProjection)
    }
}

/// Trains a binary booster on labels `y` (`true` is the positive class).
pub fn train_binary(
    x: &[Vec<f64>],
    y: &[bool],
    cfg: &BoostConfig,
) -> Result<(BinaryBooster, BoostTrace), ClassifierError> {
    let n = x.len();
    let labels: Vec<usize> = y.iter().map(|&b| usize::from(b)).collect();
    let sign: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
    let d0 = vec![1.0 / n as f64; n];
    let mut d = d0.clone();
    let mut trees = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut gamma_hat = f64::INFINITY;
    let mut trace = BoostTrace { iterations: Vec::new() };

    for _ in 0..cfg.max_iter {
        let tree = train_tree(x, &labels, 2, &d, &cfg.tree);
        let u: Vec<f64> = x.iter().zip(&sign).map(|(xi, s)| s * tree_output(&tree, xi)).collect();
        let edge = dot(&d, &u);
        if edge < cfg.nu && !trees.is_empty() {
            break;
        }
        trees.push(tree);
        columns.push(u);
        gamma_hat = gamma_hat.min(edge);
        let (rho, _) = max_margin_lp(&columns)?;
        let g = gamma_hat - cfg.nu;
        if rho >= g || edge < cfg.nu {
            trace.iterations.push(IterationTrace {
                edge,
                gamma_hat,
                lp_margin: rho,
                d: None,
                stored_edges: Vec::new(),
            });
            break;
        }
        let next = match entropy_projection(&d0, &columns, g, cfg.projection_tol, cfg.projection_passes) {
            Ok((next, _)) => next,
            // the feasible set is too thin to project onto: treat as infeasible
            Err(ClassifierError::InfeasibleProjection) => {
                trace.iterations.push(IterationTrace {
                    edge,
                    gamma_hat,
                    lp_margin: rho,
                    d: None,
                    stored_edges: Vec::new(),
                });
                break;
            }
            Err(e) => return Err(e),
        };
        d = next;
        trace.iterations.push(IterationTrace {
            edge,
            gamma_hat,
            lp_margin: rho,
            d: Some(d.clone()),
            stored_edges: columns.iter().map(|u| dot(&d, u)).collect(),
        });
    }
    let (_, weights) = max_margin_lp(&columns)?;
    Ok((BinaryBooster { trees, weights }, trace))
}
