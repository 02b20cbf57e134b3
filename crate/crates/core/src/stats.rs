//! Rank-sum test, Bland–Altman agreement and Pearson correlation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankSumMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumResult {
    /// Mann–Whitney U of the first sample.
    pub u_statistic: f64,
    pub p_two_sided: f64,
    pub method: RankSumMethod,
}

/// Largest combined size for which the exact null distribution is used.
pub const EXACT_MAX_TOTAL: usize = 20;

/// Midranks (1-based) of `values`, plus the tie group sizes.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        if j > i {
            ties.push(j - i + 1);
        }
        i = j + 1;
    }
    (ranks, ties)
}

/// Number of m-subsets of {1..N} for each value of U (0..=m·n).
fn exact_u_counts(m: usize, n: usize) -> Vec<f64> {
    let total = m + n;
    let max_sum = m * (2 * total - m + 1) / 2;
    // c[k][s]: k-subsets of the ranks seen so far with rank sum s
    let mut c = vec![vec![0.0f64; max_sum + 1]; m + 1];
    c[0][0] = 1.0;
    for r in 1..=total {
        for k in (1..=m.min(r)).rev() {
            for s in (r..=max_sum).rev() {
                c[k][s] += c[k - 1][s - r];
            }
        }
    }
    let offset = m * (m + 1) / 2;
    (0..=m * n).map(|u| c[m][u + offset]).collect()
}

/// Two-sided Wilcoxon rank-sum (Mann–Whitney) test.
///
/// Exact null distribution when the combined size is at most
/// [`EXACT_MAX_TOTAL`] and there are no ties; otherwise the normal
/// approximation with tie-corrected variance and continuity correction.
pub fn wilcoxon_rank_sum(x: &[f64], y: &[f64]) -> Result<RankSumResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptySample);
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (m, n) = (x.len(), y.len());
    let all: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = midranks(&all);
    let w: f64 = ranks[..m].iter().sum();
    let u = w - (m * (m + 1)) as f64 / 2.0;

    if m + n <= EXACT_MAX_TOTAL && ties.is_empty() {
        let counts = exact_u_counts(m, n);
        let total: f64 = counts.iter().sum();
        let k = u.round() as usize;
        let lower: f64 = counts[..=k].iter().sum::<f64>() / total;
        let upper: f64 = counts[k..].iter().sum::<f64>() / total;
        return Ok(RankSumResult {
            u_statistic: u,
            p_two_sided: (2.0 * lower.min(upper)).min(1.0),
            method: RankSumMethod::Exact,
        });
    }

    let (mf, nf) = (m as f64, n as f64);
    let big_n = mf + nf;
    let mu = mf * nf / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = mf * nf / 12.0 * ((big_n + 1.0) - tie_term / (big_n * (big_n - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
        let std = Normal::new(0.0, 1.0).expect("standard normal");
        (2.0 * std.sf(z)).min(1.0)
    };
    Ok(RankSumResult {
        u_statistic: u,
        p_two_sided: p,
        method: RankSumMethod::NormalApprox,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlandAltmanResult {
    pub mean_diff: f64,
    /// Sample standard deviation of the differences.
    pub sd_diff: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Agreement of paired measurements; differences are `x − y`.
pub fn bland_altman(x: &[f64], y: &[f64]) -> Result<BlandAltmanResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: x.len(),
        });
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(BlandAltmanResult {
        mean_diff: mean,
        sd_diff: sd,
        lower: mean - 1.96 * sd,
        upper: mean + 1.96 * sd,
    })
}

/// Sample Pearson correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
