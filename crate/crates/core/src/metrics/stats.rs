use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Minimum number of pairs for the signed-rank test to be reported.
pub const MIN_PAIRS: usize = 6;
const EXACT_LIMIT: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Significance {
    PValue(f64),
    InsufficientData { pairs: usize },
}

impl Significance {
    pub fn p_value(&self) -> Option<f64> {
        match *self {
            Significance::PValue(p) => Some(p),
            Significance::InsufficientData { .. } => None,
        }
    }
}

/// Average ranks (1-based) of `values`, ties sharing their mean rank.
fn average_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        tie_sizes.push(j - i + 1);
        i = j + 1;
    }
    (ranks, tie_sizes)
}

/// Exact null distribution of the positive-rank sum for ranks `1..=n`.
fn exact_counts(n: usize) -> Vec<f64> {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0.0; max + 1];
    counts[0] = 1.0;
    for r in 1..=n {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    counts
}

/// Two-sided Wilcoxon signed-rank test on paired values.
///
/// Zero differences are dropped. Small tie-free samples use the exact null
/// distribution, otherwise the tie-corrected normal approximation.
pub fn paired_significance(values_a: &[f64], values_b: &[f64]) -> Result<Significance> {
    if values_a.len() != values_b.len() {
        return Err(Error::arg(format!(
            "paired test needs equal lengths, got {} and {}",
            values_a.len(),
            values_b.len()
        )));
    }
    if values_a.iter().chain(values_b).any(|v| !v.is_finite()) {
        return Err(Error::arg("paired test needs finite values"));
    }
    let pairs = values_a.len();
    if pairs < MIN_PAIRS {
        return Ok(Significance::InsufficientData { pairs });
    }
    let diffs: Vec<f64> = values_a
        .iter()
        .zip(values_b)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(Significance::PValue(1.0));
    }
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = average_ranks(&magnitudes);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();

    let has_ties = ties.iter().any(|&t| t > 1);
    let p = if n <= EXACT_LIMIT && !has_ties {
        let counts = exact_counts(n);
        let total = 2f64.powi(n as i32);
        let w = w_plus.round() as usize;
        let lower: f64 = counts[..=w].iter().sum::<f64>() / total;
        let upper: f64 = counts[w..].iter().sum::<f64>() / total;
        (2.0 * lower.min(upper)).min(1.0)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
        if var <= 0.0 {
            1.0
        } else {
            let z = (w_plus - mean) / var.sqrt();
            let normal = Normal::standard();
            (2.0 * normal.cdf(-z.abs())).min(1.0)
        }
    };
    Ok(Significance::PValue(p))
}
