//! Small statistical toolkit for Monte Carlo validation: Wilson intervals,
//! Pearson chi-square goodness of fit, and one-sample Kolmogorov–Smirnov.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Default confidence level for Monte Carlo intervals.
pub const DEFAULT_CONFIDENCE: f64 = 0.99;

/// Two-sided standard normal quantile for a confidence level in (0, 1).
pub fn normal_quantile(confidence: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.inverse_cdf(0.5 + 0.5 * confidence)
}

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl GofResult {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Minimum expected count per cell; smaller cells are pooled.
pub const MIN_EXPECTED: f64 = 5.0;

/// Pearson chi-square test of `observed` counts against cell probabilities.
///
/// Probabilities need not sum to one; the remainder forms an extra cell with
/// zero observations. Cells with expected count below [`MIN_EXPECTED`] are
/// pooled into one. An observation in a cell of probability zero yields an
/// infinite statistic.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> GofResult {
    assert_eq!(observed.len(), probs.len(), "observed/probability length mismatch");
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let covered: f64 = probs.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::with_capacity(observed.len() + 1);
    let mut pooled = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        if p <= 0.0 {
            if o > 0 {
                return GofResult {
                    statistic: f64::INFINITY,
                    dof: 0,
                    p_value: 0.0,
                };
            }
            continue;
        }
        let e = p * n;
        if e < MIN_EXPECTED {
            pooled.0 += o as f64;
            pooled.1 += e;
        } else {
            cells.push((o as f64, e));
        }
    }
    let remainder = (1.0 - covered).max(0.0) * n;
    pooled.1 += remainder;
    if pooled.1 > 0.0 || pooled.0 > 0.0 {
        if pooled.1 >= MIN_EXPECTED || cells.is_empty() {
            cells.push(pooled);
        } else if let Some(smallest) = cells
            .iter_mut()
            .min_by(|x, y| x.1.total_cmp(&y.1))
        {
            smallest.0 += pooled.0;
            smallest.1 += pooled.1;
        }
    }
    let statistic: f64 = cells
        .iter()
        .filter(|c| c.1 > 0.0)
        .map(|&(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = cells.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
        dist.sf(statistic)
    };
    GofResult {
        statistic,
        dof,
        p_value,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub samples: usize,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test of samples against Uniform(0, 1), with
/// the asymptotic Kolmogorov distribution and Stephens' small-sample factor.
pub fn ks_uniform(samples: &[f64]) -> KsResult {
    let n = samples.len();
    if n == 0 {
        return KsResult {
            statistic: 0.0,
            samples: 0,
            p_value: 1.0,
        };
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let lo = u - i as f64 / nf;
            let hi = (i + 1) as f64 / nf - u;
            lo.max(hi)
        })
        .fold(0.0f64, f64::max);
    let sqrt_n = nf.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * statistic;
    KsResult {
        statistic,
        samples: n,
        p_value: kolmogorov_sf(lambda),
    }
}

/// P(K > λ) for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Empirical quantile by the nearest-rank rule on sorted data.
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let rank = (level * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Distribution-free confidence interval for the `level` quantile from order
/// statistics, using the normal approximation to the binomial rank.
pub fn quantile_interval_sorted(sorted: &[f64], level: f64, z: f64) -> (f64, f64) {
    let n = sorted.len() as f64;
    let center = level * n;
    let half = z * (n * level * (1.0 - level)).sqrt();
    let lo = ((center - half).floor() as isize).clamp(1, sorted.len() as isize) as usize;
    let hi = ((center + half).ceil() as isize).clamp(1, sorted.len() as isize) as usize;
    (sorted[lo - 1], sorted[hi - 1])
}
