//! Small descriptive statistics and the chi-square independence tests shared
//! by the tree learners.

use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population variance (divides by `n`).
pub fn variance(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

/// Linear-interpolated quantile of already sorted data (type 7, as in numpy).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

pub fn sorted_copy(x: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

pub fn median(x: &[f64]) -> f64 {
    quantile_sorted(&sorted_copy(x), 0.5)
}

pub fn iqr(x: &[f64]) -> f64 {
    let s = sorted_copy(x);
    quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25)
}

/// Pearson correlation; zero when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= f64::EPSILON * f64::EPSILON || sbb <= f64::EPSILON * f64::EPSILON {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Assigns each value to one of (at most) four quartile bins computed from the
/// values themselves. Ties collapse bins, so fewer than four may be occupied.
pub fn quartile_bins(x: &[f64]) -> Vec<u8> {
    let s = sorted_copy(x);
    let q1 = quantile_sorted(&s, 0.25);
    let q2 = quantile_sorted(&s, 0.5);
    let q3 = quantile_sorted(&s, 0.75);
    x.iter()
        .map(|&v| {
            if v <= q1 {
                0
            } else if v <= q2 {
                1
            } else if v <= q3 {
                2
            } else {
                3
            }
        })
        .collect()
}

/// Outcome of a chi-square test of independence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
}

impl ChiSquareTest {
    /// Wilson-Hilferty normal score of the statistic. Used to order tests
    /// whose p-values underflow to zero.
    pub fn z_score(&self) -> f64 {
        if self.dof <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let k = self.dof;
        let c = 2.0 / (9.0 * k);
        ((self.statistic / k).powf(1.0 / 3.0) - (1.0 - c)) / c.sqrt()
    }

    /// `true` when `self` is more significant than `other`.
    pub fn beats(&self, other: &ChiSquareTest) -> bool {
        if self.p_value != other.p_value {
            self.p_value < other.p_value
        } else {
            self.z_score() > other.z_score()
        }
    }

    fn null() -> Self {
        Self {
            statistic: 0.0,
            dof: 0.0,
            p_value: 1.0,
        }
    }
}

/// Pearson chi-square test on a weighted contingency table built from row and
/// column category codes. Empty rows and columns are dropped before counting
/// degrees of freedom.
pub fn chi_square_independence(
    rows: &[usize],
    n_rows: usize,
    cols: &[usize],
    n_cols: usize,
    weights: &[f64],
) -> ChiSquareTest {
    let mut table = vec![0.0; n_rows * n_cols];
    for ((&r, &c), &w) in rows.iter().zip(cols).zip(weights) {
        table[r * n_cols + c] += w;
    }
    let row_tot: Vec<f64> = (0..n_rows)
        .map(|r| table[r * n_cols..(r + 1) * n_cols].iter().sum())
        .collect();
    let col_tot: Vec<f64> = (0..n_cols)
        .map(|c| (0..n_rows).map(|r| table[r * n_cols + c]).sum())
        .collect();
    let total: f64 = row_tot.iter().sum();
    let live_rows = row_tot.iter().filter(|&&v| v > 0.0).count();
    let live_cols = col_tot.iter().filter(|&&v| v > 0.0).count();
    if total <= 0.0 || live_rows < 2 || live_cols < 2 {
        return ChiSquareTest::null();
    }
    let mut stat = 0.0;
    for r in 0..n_rows {
        if row_tot[r] <= 0.0 {
            continue;
        }
        for c in 0..n_cols {
            if col_tot[c] <= 0.0 {
                continue;
            }
            let expected = row_tot[r] * col_tot[c] / total;
            let d = table[r * n_cols + c] - expected;
            stat += d * d / expected;
        }
    }
    let dof = ((live_rows - 1) * (live_cols - 1)) as f64;
    let p_value = match ChiSquared::new(dof) {
        Ok(dist) => dist.sf(stat).clamp(0.0, 1.0),
        Err(_) => 1.0,
    };
    ChiSquareTest {
        statistic: stat,
        dof,
        p_value,
    }
}

/// Split-predictor selection by the interaction test: a univariate chi-square
/// test of each candidate against the response, plus a test of every pair's
/// quartile cross-product grid against the response. Returns candidate
/// positions (into `features`) ordered from most to least significant; a pair
/// win promotes both members, more individually significant first. The
/// second value counts the leading positions whose entries are exactly as
/// significant as the best one.
///
/// `pair_pool` bounds how many of the top univariate predictors enter the
/// pairwise stage.
pub fn interaction_ranking(
    features: &[Vec<u8>],
    response: &[usize],
    n_classes: usize,
    weights: &[f64],
    pair_pool: usize,
) -> (Vec<usize>, usize) {
    let m = features.len();
    let rows_of = |f: &[u8]| f.iter().map(|&b| b as usize).collect::<Vec<_>>();
    let uni: Vec<ChiSquareTest> = features
        .iter()
        .map(|f| chi_square_independence(&rows_of(f), 4, response, n_classes, weights))
        .collect();
    let mut by_uni: Vec<usize> = (0..m).collect();
    by_uni.sort_by(|&a, &b| {
        if uni[a].beats(&uni[b]) {
            std::cmp::Ordering::Less
        } else if uni[b].beats(&uni[a]) {
            std::cmp::Ordering::Greater
        } else {
            a.cmp(&b)
        }
    });

    // Each entry: (test, primary, secondary)
    let mut entries: Vec<(ChiSquareTest, usize, Option<usize>)> =
        by_uni.iter().map(|&i| (uni[i], i, None)).collect();
    let pool: Vec<usize> = by_uni.iter().copied().take(pair_pool.min(m)).collect();
    for (ai, &a) in pool.iter().enumerate() {
        for &b in &pool[ai + 1..] {
            let grid: Vec<usize> = features[a]
                .iter()
                .zip(&features[b])
                .map(|(&x, &y)| x as usize * 4 + y as usize)
                .collect();
            let t = chi_square_independence(&grid, 16, response, n_classes, weights);
            // `a` precedes `b` in the univariate order
            entries.push((t, a, Some(b)));
        }
    }
    entries.sort_by(|x, y| {
        if x.0.beats(&y.0) {
            std::cmp::Ordering::Less
        } else if y.0.beats(&x.0) {
            std::cmp::Ordering::Greater
        } else {
            // prefer univariate entries, then earlier univariate rank
            x.2.is_some().cmp(&y.2.is_some()).then(
                by_uni
                    .iter()
                    .position(|&v| v == x.1)
                    .cmp(&by_uni.iter().position(|&v| v == y.1)),
            )
        }
    });
    let top = entries[0].0;
    let mut seen = vec![false; m];
    let mut order = Vec::with_capacity(m);
    let mut tied = 0;
    for (t, a, b) in entries {
        let level = !top.beats(&t);
        for c in std::iter::once(a).chain(b) {
            if !seen[c] {
                seen[c] = true;
                order.push(c);
                if level && tied == order.len() - 1 {
                    tied += 1;
                }
            }
        }
    }
    (order, tied)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_match_numpy_convention() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.25), 1.75);
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(iqr(&[4.0, 1.0, 3.0, 2.0]), 1.5);
    }

    #[test]
    fn pearson_degenerate_is_zero() {
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), 0.0);
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_detects_dependence() {
        let rows: Vec<usize> = (0..200).map(|i| i % 2).collect();
        let dep: Vec<usize> = rows.clone();
        let indep: Vec<usize> = (0..200).map(|i| (i / 2) % 2).collect();
        let w = vec![1.0; 200];
        let a = chi_square_independence(&rows, 2, &dep, 2, &w);
        let b = chi_square_independence(&rows, 2, &indep, 2, &w);
        assert!(a.p_value < 1e-10);
        assert!(b.p_value > 0.5);
        assert!(a.beats(&b));
        assert!((a.statistic - 200.0).abs() < 1e-9);
    }

    #[test]
    fn interaction_ranking_puts_informative_feature_first() {
        let n = 400;
        let y: Vec<usize> = (0..n).map(|i| usize::from(i % 7 < 3)).collect();
        let noise: Vec<f64> = (0..n).map(|i| ((i * 37) % 101) as f64).collect();
        let good: Vec<f64> = y.iter().map(|&c| c as f64 + 0.01 * (c as f64)).collect();
        let feats = vec![quartile_bins(&noise), quartile_bins(&good)];
        let (order, _) = interaction_ranking(&feats, &y, 2, &vec![1.0; n], 8);
        assert_eq!(order[0], 1);
        assert_eq!(order.len(), 2);
    }
}
