//! Descriptive statistics, correlation and the Wilcoxon signed-rank test.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{math, Error, Result};

/// Largest number of non-zero differences handled by the exact distribution.
pub const WILCOXON_EXACT_MAX: usize = 20;

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation (n − 1 denominator).
pub fn std_dev(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some(math::sqrt(ss / (xs.len() - 1) as f64))
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("samples", "need two equal-length series of at least 2"));
    }
    let (mx, my) = (mean(xs).unwrap_or(0.0), mean(ys).unwrap_or(0.0));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance"));
    }
    Ok((sxy / math::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = alloc::vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    pearson(&average_ranks(xs), &average_ranks(ys))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of the positive differences.
    pub w_plus: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Non-zero differences used.
    pub n: usize,
    pub method: WilcoxonMethod,
}

/// Signed ranks of the non-zero differences, doubled so ties stay integral.
fn doubled_ranks(diffs: &[f64]) -> (Vec<u64>, Vec<bool>, Vec<f64>) {
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let doubled = ranks.iter().map(|r| (2.0 * r) as u64).collect();
    let positive = nz.iter().map(|d| *d > 0.0).collect();
    (doubled, positive, ranks)
}

/// Two-sided exact p-value from the counts of sign patterns with a statistic
/// at most / at least the observed one.
pub fn exact_two_sided(le: u64, ge: u64, total: u64) -> f64 {
    (2.0 * le.min(ge) as f64 / total as f64).min(1.0)
}

/// Wilcoxon signed-rank test on paired differences. Zero differences are
/// dropped; ties share average ranks. Up to [`WILCOXON_EXACT_MAX`] non-zero
/// differences the null distribution is computed exactly (conditional on the
/// tie pattern); beyond it a normal approximation with tie-corrected variance
/// is used.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<WilcoxonResult> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("paired difference"));
    }
    let (doubled, positive, ranks) = doubled_ranks(diffs);
    let n = doubled.len();
    if n == 0 {
        return Err(Error::Degenerate("all differences are zero"));
    }
    let w2: u64 = doubled.iter().zip(&positive).filter(|(_, p)| **p).map(|(r, _)| r).sum();
    let w_plus = w2 as f64 / 2.0;
    if n <= WILCOXON_EXACT_MAX {
        // counts[s]: sign patterns whose doubled positive-rank sum is s.
        let max: u64 = doubled.iter().sum();
        let mut counts = alloc::vec![0u64; max as usize + 1];
        counts[0] = 1;
        let mut reach = 0usize;
        for &r in &doubled {
            let r = r as usize;
            for s in (0..=reach).rev() {
                if counts[s] != 0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let le: u64 = counts[..=w2 as usize].iter().sum();
        let ge: u64 = counts[w2 as usize..].iter().sum();
        return Ok(WilcoxonResult {
            w_plus,
            p_value: exact_two_sided(le, ge, 1u64 << n),
            n,
            method: WilcoxonMethod::Exact,
        });
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
    let mut sorted = ranks.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|r| **r == sorted[i]).count();
        let t = j as f64;
        var -= (t * t * t - t) / 48.0;
        i += j;
    }
    let p_value = if var > 0.0 {
        let z = (w_plus - mean) / math::sqrt(var);
        libm::erfc(z.abs() / core::f64::consts::SQRT_2).min(1.0)
    } else {
        1.0
    };
    Ok(WilcoxonResult {
        w_plus,
        p_value,
        n,
        method: WilcoxonMethod::Normal,
    })
}

/// Paired test on `xs[i] − ys[i]`.
pub fn wilcoxon_paired(xs: &[f64], ys: &[f64]) -> Result<WilcoxonResult> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("samples", "paired series differ in length"));
    }
    let d: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x - y).collect();
    wilcoxon_signed_rank(&d)
}
