//! Shallow weighted classification trees grown best-first on Gini impurity,
//! with the split predictor chosen by chi-square interaction tests.

use serde::{Deserialize, Serialize};

use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_splits: usize,
    /// Top univariate predictors admitted to the pairwise interaction test.
    pub pair_pool: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_splits: 5,
            pair_pool: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Weighted class fractions of the training samples that reached the leaf.
    Leaf { scores: Vec<f64> },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShallowTree {
    pub nodes: Vec<Node>,
    pub n_classes: usize,
}

impl ShallowTree {
    pub fn leaf_scores(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { scores } => return scores,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Class with the largest leaf score; ties go to the lower index.
    pub fn predict_class(&self, x: &[f64]) -> usize {
        argmax(self.leaf_scores(x))
    }

    pub fn split_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in v.iter().enumerate() {
        if s > v[best] {
            best = i;
        }
    }
    best
}

fn class_weights(idx: &[usize], y: &[usize], d: &[f64], k: usize) -> Vec<f64> {
    let mut w = vec![0.0; k];
    for &i in idx {
        w[y[i]] += d[i];
    }
    w
}

fn gini(w: &[f64]) -> f64 {
    let t: f64 = w.iter().sum();
    if t <= 0.0 {
        return 0.0;
    }
    1.0 - w.iter().map(|v| (v / t) * (v / t)).sum::<f64>()
}

fn leaf_scores(idx: &[usize], y: &[usize], d: &[f64], k: usize) -> Vec<f64> {
    let mut w = class_weights(idx, y, d, k);
    let mut t: f64 = w.iter().sum();
    if t <= 0.0 {
        // all the weight sits elsewhere; fall back to counts
        w = class_weights(idx, y, &vec![1.0; d.len()], k);
        t = w.iter().sum();
    }
    if t <= 0.0 {
        return vec![1.0 / k as f64; k];
    }
    w.iter().map(|v| v / t).collect()
}

#[derive(Debug, Clone)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

/// Best Gini threshold on one feature: the lowest weighted child impurity
/// over midpoints between distinct values. Returns `(impurity, threshold,
/// gap)`, where `gap` is the distance between the two values the threshold
/// sits between, as a fraction of the feature's range in the node.
fn best_threshold(x: &[Vec<f64>], idx: &[usize], y: &[usize], d: &[f64], k: usize, f: usize) -> Option<(f64, f64, f64)> {
    let mut order = idx.to_vec();
    order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
    let total = class_weights(idx, y, d, k);
    let w_total: f64 = total.iter().sum();
    let mut left = vec![0.0; k];
    let range = x[order[order.len() - 1]][f] - x[order[0]][f];
    let mut best: Option<(f64, f64, f64)> = None;
    for p in 0..order.len() - 1 {
        let i = order[p];
        left[y[i]] += d[i];
        let (a, b) = (x[i][f], x[order[p + 1]][f]);
        if a == b {
            continue;
        }
        let right: Vec<f64> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
        let wl: f64 = left.iter().sum();
        let wr = w_total - wl;
        let imp = if w_total > 0.0 {
            (wl * gini(&left) + wr * gini(&right)) / w_total
        } else {
            0.0
        };
        if best.is_none_or(|(bi, _, _)| imp < bi - 1e-15) {
            best = Some((imp, a + (b - a) / 2.0, (b - a) / range));
        }
    }
    best
}

fn node_candidate(
    x: &[Vec<f64>],
    idx: &[usize],
    y: &[usize],
    d: &[f64],
    k: usize,
    cfg: &TreeConfig,
) -> Option<Candidate> {
    let w = class_weights(idx, y, d, k);
    if w.iter().filter(|&&v| v > 0.0).count() < 2 {
        return None;
    }
    let parent = gini(&w);
    let n_feat = x[0].len();
    let live: Vec<usize> = (0..n_feat)
        .filter(|&f| idx.iter().any(|&i| x[i][f] != x[idx[0]][f]))
        .collect();
    if live.is_empty() {
        return None;
    }
    let bins: Vec<Vec<u8>> = live
        .iter()
        .map(|&f| stats::quartile_bins(&idx.iter().map(|&i| x[i][f]).collect::<Vec<_>>()))
        .collect();
    let response: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
    // rescale so the tests see counts summing to the node size
    let w_sum: f64 = idx.iter().map(|&i| d[i]).sum();
    let scale = if w_sum > 0.0 { idx.len() as f64 / w_sum } else { 0.0 };
    let weights: Vec<f64> = idx.iter().map(|&i| d[i] * scale).collect();
    let (order, tied) = stats::interaction_ranking(&bins, &response, k, &weights, cfg.pair_pool);
    // among equally significant predictors take the purest split, then the
    // widest gap around its threshold
    let mut chosen: Option<(usize, f64, f64, f64)> = None;
    for (rank, &pos) in order.iter().enumerate() {
        if rank >= tied.max(1) && chosen.is_some() {
            break;
        }
        let f = live[pos];
        let Some((imp, thr, gap)) = best_threshold(x, idx, y, d, k, f) else { continue };
        let better = chosen.is_none_or(|(_, bi, _, bg)| imp < bi - 1e-12 || (imp <= bi + 1e-12 && gap > bg));
        if better {
            chosen = Some((f, imp, thr, gap));
        }
    }
    let (f, imp, thr, _) = chosen?;
    let (left, right): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][f] <= thr);
    Some(Candidate {
        feature: f,
        threshold: thr,
        gain: w_sum * (parent - imp),
        left,
        right,
    })
}

/// Fits a tree of at most `cfg.max_splits` splits on weighted samples.
/// Leaves are split best-first by weighted Gini gain; pure leaves are final.
pub fn train_tree(x: &[Vec<f64>], y: &[usize], n_classes: usize, d: &[f64], cfg: &TreeConfig) -> ShallowTree {
    let all: Vec<usize> = (0..x.len()).collect();
    let mut nodes = vec![Node::Leaf {
        scores: leaf_scores(&all, y, d, n_classes),
    }];
    // (node index, candidate)
    let mut frontier: Vec<(usize, Candidate)> = Vec::new();
    if !x.is_empty() {
        if let Some(c) = node_candidate(x, &all, y, d, n_classes, cfg) {
            frontier.push((0, c));
        }
    }
    let mut splits = 0;
    while splits < cfg.max_splits && !frontier.is_empty() {
        let best = (0..frontier.len())
            .max_by(|&a, &b| frontier[a].1.gain.total_cmp(&frontier[b].1.gain).then(b.cmp(&a)))
            .expect("non-empty frontier");
        let (at, c) = frontier.remove(best);
        let l = nodes.len();
        nodes.push(Node::Leaf {
            scores: leaf_scores(&c.left, y, d, n_classes),
        });
        nodes.push(Node::Leaf {
            scores: leaf_scores(&c.right, y, d, n_classes),
        });
        nodes[at] = Node::Split {
            feature: c.feature,
            threshold: c.threshold,
            left: l,
            right: l + 1,
        };
        splits += 1;
        for (node, part) in [(l, &c.left), (l + 1, &c.right)] {
            if let Some(cand) = node_candidate(x, part, y, d, n_classes, cfg) {
                frontier.push((node, cand));
            }
        }
    }
    ShallowTree { nodes, n_classes }
}
