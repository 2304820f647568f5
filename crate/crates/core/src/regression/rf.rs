//! Bagged regression trees with interaction-test predictor selection and
//! out-of-bag permutation importance.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{validate, ModelKind, Result, StandardizationParams};
use crate::rng;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfConfig {
    pub n_trees: usize,
    pub min_leaf: usize,
    /// Predictors sampled per split; `None` means a third of them.
    pub mtry: Option<usize>,
    pub pair_pool: usize,
}

impl Default for RfConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            min_leaf: 10,
            mtry: None,
            pair_pool: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegNode {
    Leaf { value: f64, count: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn predict(&self, z: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                RegNode::Leaf { value, .. } => return *value,
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if z[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn min_leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                RegNode::Leaf { count, .. } => Some(*count),
                _ => None,
            })
            .min()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfModel {
    pub standardization: StandardizationParams,
    pub trees: Vec<RegTree>,
    /// Out-of-bag row indices per tree.
    pub oob: Vec<Vec<usize>>,
    /// Mean OOB MSE increase under permutation, clamped at zero.
    pub importance: Vec<f64>,
}

fn mean_of(idx: &[usize], y: &[f64]) -> f64 {
    idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64
}

/// Lowest child sum of squares over thresholds leaving `min_leaf` rows on
/// each side. Returns `(sse, threshold)`.
fn best_mse_split(z: &[Vec<f64>], y: &[f64], idx: &[usize], f: usize, min_leaf: usize) -> Option<(f64, f64)> {
    let mut order = idx.to_vec();
    order.sort_by(|&a, &b| z[a][f].total_cmp(&z[b][f]).then(a.cmp(&b)));
    let n = order.len();
    let tot: f64 = order.iter().map(|&i| y[i]).sum();
    let tot_sq: f64 = order.iter().map(|&i| y[i] * y[i]).sum();
    let (mut s, mut sq) = (0.0, 0.0);
    let mut best: Option<(f64, f64)> = None;
    for p in 0..n - 1 {
        let i = order[p];
        s += y[i];
        sq += y[i] * y[i];
        let nl = p + 1;
        let nr = n - nl;
        if nl < min_leaf || nr < min_leaf {
            continue;
        }
        let (a, b) = (z[i][f], z[order[p + 1]][f]);
        if a == b {
            continue;
        }
        let sse = (sq - s * s / nl as f64) + ((tot_sq - sq) - (tot - s) * (tot - s) / nr as f64);
        if best.is_none_or(|(bs, _)| sse < bs) {
            best = Some((sse, a + (b - a) / 2.0));
        }
    }
    best
}

fn grow_tree<R: Rng>(z: &[Vec<f64>], y: &[f64], rows: Vec<usize>, cfg: &RfConfig, mtry: usize, rng: &mut R) -> RegTree {
    let d = z[0].len();
    let mut nodes = vec![RegNode::Leaf {
        value: mean_of(&rows, y),
        count: rows.len(),
    }];
    let mut stack = vec![(0usize, rows)];
    while let Some((at, idx)) = stack.pop() {
        let n = idx.len();
        if n < 2 * cfg.min_leaf {
            continue;
        }
        let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let (ymin, ymax) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if ymax - ymin <= 1e-12 * (1.0 + ymax.abs()) {
            continue;
        }
        let mut feats: Vec<usize> = index::sample(rng, d, mtry.min(d)).into_vec();
        feats.sort_unstable();
        let live: Vec<usize> = feats
            .into_iter()
            .filter(|&f| idx.iter().any(|&i| z[i][f] != z[idx[0]][f]))
            .collect();
        if live.is_empty() {
            continue;
        }
        let response: Vec<usize> = stats::quartile_bins(&ys).into_iter().map(usize::from).collect();
        let bins: Vec<Vec<u8>> = live
            .iter()
            .map(|&f| stats::quartile_bins(&idx.iter().map(|&i| z[i][f]).collect::<Vec<_>>()))
            .collect();
        let (order, _) = stats::interaction_ranking(&bins, &response, 4, &vec![1.0; n], cfg.pair_pool);
        let parent_sse: f64 = {
            let m = ys.iter().sum::<f64>() / n as f64;
            ys.iter().map(|v| (v - m) * (v - m)).sum()
        };
        let chosen = order.into_iter().find_map(|pos| {
            let f = live[pos];
            best_mse_split(z, y, &idx, f, cfg.min_leaf)
                .filter(|(sse, _)| *sse < parent_sse)
                .map(|(_, t)| (f, t))
        });
        let Some((feature, threshold)) = chosen else {
            continue;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| z[i][feature] <= threshold);
        let l = nodes.len();
        nodes.push(RegNode::Leaf {
            value: mean_of(&left, y),
            count: left.len(),
        });
        nodes.push(RegNode::Leaf {
            value: mean_of(&right, y),
            count: right.len(),
        });
        nodes[at] = RegNode::Split {
            feature,
            threshold,
            left: l,
            right: l + 1,
        };
        stack.push((l + 1, right));
        stack.push((l, left));
    }
    RegTree { nodes }
}

pub fn fit_rf(x: &[Vec<f64>], y: &[f64], cfg: &RfConfig, seed: u64) -> Result<RfModel> {
    validate(ModelKind::Rf, x, y)?;
    let standardization = StandardizationParams::fit(x);
    let z = standardization.transform(x);
    let n = z.len();
    let d = z[0].len();
    let mtry = cfg.mtry.unwrap_or((d / 3).max(1));
    let grown: Vec<(RegTree, Vec<usize>, Option<Vec<f64>>)> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::substream(seed, &format!("rf/tree/{t}"));
            let rows: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
            let mut in_bag = vec![false; n];
            rows.iter().for_each(|&i| in_bag[i] = true);
            let oob: Vec<usize> = (0..n).filter(|&i| !in_bag[i]).collect();
            let tree = grow_tree(&z, y, rows, cfg, mtry, &mut r);
            let deltas = (!oob.is_empty()).then(|| {
                let mut pr = rng::substream(seed, &format!("rf/oob/{t}"));
                let mse = |rows: &[Vec<f64>]| {
                    rows.iter()
                        .zip(&oob)
                        .map(|(zr, &i)| (tree.predict(zr) - y[i]).powi(2))
                        .sum::<f64>()
                        / oob.len() as f64
                };
                let base_rows: Vec<Vec<f64>> = oob.iter().map(|&i| z[i].clone()).collect();
                let base = mse(&base_rows);
                (0..d)
                    .map(|f| {
                        let mut col: Vec<f64> = base_rows.iter().map(|r| r[f]).collect();
                        col.shuffle(&mut pr);
                        let permuted: Vec<Vec<f64>> = base_rows
                            .iter()
                            .zip(&col)
                            .map(|(r, &v)| {
                                let mut r = r.clone();
                                r[f] = v;
                                r
                            })
                            .collect();
                        mse(&permuted) - base
                    })
                    .collect()
            });
            (tree, oob, deltas)
        })
        .collect();
    let mut importance = vec![0.0; d];
    let mut counted = 0usize;
    let mut trees = Vec::with_capacity(grown.len());
    let mut oobs = Vec::with_capacity(grown.len());
    for (tree, oob, deltas) in grown {
        if let Some(dv) = deltas {
            importance.iter_mut().zip(&dv).for_each(|(a, b)| *a += b);
            counted += 1;
        }
        trees.push(tree);
        oobs.push(oob);
    }
    importance
        .iter_mut()
        .for_each(|v| *v = if counted > 0 { (*v / counted as f64).max(0.0) } else { 0.0 });
    Ok(RfModel {
        standardization,
        trees,
        oob: oobs,
        importance,
    })
}

impl RfModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.standardization.check(x)?;
        let z = self.standardization.transform_row(x);
        Ok(self.trees.iter().map(|t| t.predict(&z)).sum::<f64>() / self.trees.len() as f64)
    }
}
