//! Cliff's delta and the Wilcoxon rank-sum test.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pooled sample sizes up to this use the exact permutation distribution.
pub const EXACT_LIMIT: usize = 12;

/// `(#{x_i > y_j} - #{x_i < y_j}) / (|x| |y|)`.
pub fn cliffs_delta(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Domain("cliff's delta needs two non-empty samples".into()));
    }
    // Sort y once and count by binary search: O((n + m) log m).
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut dominance: i64 = 0;
    for &xi in x {
        let below = sorted.partition_point(|&v| v < xi) as i64;
        let not_above = sorted.partition_point(|&v| v <= xi) as i64;
        let above = sorted.len() as i64 - not_above;
        dominance += below - above;
    }
    Ok(dominance as f64 / (x.len() * y.len()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumTest {
    /// Sum of the (mid)ranks of the first sample in the pooled ordering.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Whether the p-value comes from the exact permutation distribution.
    pub exact: bool,
}

/// Two-sided Wilcoxon rank-sum test with midranks for ties.
///
/// Pooled samples of at most [`EXACT_LIMIT`] observations use the exact
/// distribution of the rank sum over all splits of the pooled midranks; larger
/// ones use the normal approximation with tie-corrected variance.
pub fn wilcoxon_rank_sum(x: &[f64], y: &[f64]) -> Result<RankSumTest> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Domain("rank-sum test needs two non-empty samples".into()));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Domain("samples contain NaN".into()));
    }
    let n = x.len() + y.len();
    let doubled = doubled_midranks(x, y);
    let observed: u64 = doubled[..x.len()].iter().sum();
    let statistic = observed as f64 / 2.0;
    if n <= EXACT_LIMIT {
        let p_value = exact_p(&doubled, x.len(), observed);
        return Ok(RankSumTest { statistic, p_value, exact: true });
    }

    let (nx, ny, nf) = (x.len() as f64, y.len() as f64, n as f64);
    let mean = nx * (nf + 1.0) / 2.0;
    let mut tie_term = 0.0;
    let mut sorted: Vec<f64> = x.iter().chain(y).copied().collect();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = nx * ny / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return Ok(RankSumTest { statistic, p_value: 1.0, exact: false });
    }
    let z = (statistic - mean) / libm::sqrt(var);
    let p_value = libm::erfc(z.abs() / core::f64::consts::SQRT_2).min(1.0);
    Ok(RankSumTest { statistic, p_value, exact: false })
}

/// Twice the pooled midrank of every observation, `x` first then `y`.
fn doubled_midranks(x: &[f64], y: &[f64]) -> Vec<u64> {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j share (i + 1 + j) / 2; doubled that is i + 1 + j.
        for &k in &order[i..j] {
            ranks[k] = (i + 1 + j) as u64;
        }
        i = j;
    }
    ranks
}

/// Exact two-sided p-value by dynamic programming over subset sums.
fn exact_p(doubled: &[u64], nx: usize, observed: u64) -> f64 {
    let max_sum: u64 = doubled.iter().sum();
    let width = max_sum as usize + 1;
    // ways[k][s]: subsets of size k with doubled rank sum s.
    let mut ways = vec![vec![0u128; width]; nx + 1];
    ways[0][0] = 1;
    for &r in doubled {
        for k in (1..=nx).rev() {
            for s in (r as usize..width).rev() {
                let add = ways[k - 1][s - r as usize];
                if add != 0 {
                    ways[k][s] += add;
                }
            }
        }
    }
    let n = doubled.len() as u64;
    let centre = nx as u64 * (n + 1); // twice the expected rank sum
    let dev = observed.abs_diff(centre);
    let total: u128 = ways[nx].iter().sum();
    let extreme: u128 =
        ways[nx].iter().enumerate().filter(|(s, _)| (*s as u64).abs_diff(centre) >= dev).map(|(_, &w)| w).sum();
    extreme as f64 / total as f64
}
