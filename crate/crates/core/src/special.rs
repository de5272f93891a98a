//! Log-space helpers: log-gamma tables, log-binomials and log-sum-exp.

pub use statrs::function::gamma::{digamma, ln_gamma};

/// Log values below this are below double-precision representability and are
/// treated as structural zeros.
pub const LN_UNDERFLOW: f64 = -745.0;

/// Maps log values under [`LN_UNDERFLOW`] to `-inf`.
#[inline]
pub fn clamp_ln(x: f64) -> f64 {
    if x < LN_UNDERFLOW {
        f64::NEG_INFINITY
    } else {
        x
    }
}

/// `ln(exp(a) + exp(b))` without overflow.
#[inline]
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(sum_i exp(x_i))`; returns `-inf` for an empty slice or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Streaming sum of `exp(t)` terms held as `sum · e^shift`, so that sums far
/// below the smallest normal double keep full relative precision.
#[derive(Debug, Clone, Copy)]
pub struct ScaledSum {
    shift: f64,
    sum: f64,
}

impl Default for ScaledSum {
    fn default() -> Self {
        Self {
            shift: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl ScaledSum {
    /// A sum holding the single term `exp(t)`.
    pub fn from_ln(t: f64) -> Self {
        let mut s = Self::default();
        s.add_ln(t);
        s
    }

    /// Adds `exp(t)`.
    #[inline]
    pub fn add_ln(&mut self, t: f64) {
        if t <= self.shift {
            self.sum += (t - self.shift).exp();
        } else if t > f64::NEG_INFINITY {
            self.sum = self.sum * (self.shift - t).exp() + 1.0;
            self.shift = t;
        }
    }

    /// `ln` of the sum, `-inf` when empty.
    pub fn ln(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.shift + self.sum.ln()
        }
    }
}

/// `ln B(a, b)` for positive arguments.
#[inline]
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Table of `ln(m!)` for `m = 0..=max`.
#[derive(Debug, Clone)]
pub struct LnFactorials {
    table: Vec<f64>,
}

impl LnFactorials {
    pub fn new(max: usize) -> Self {
        let table = (0..=max).map(|m| ln_gamma(m as f64 + 1.0)).collect();
        Self { table }
    }

    pub fn max(&self) -> usize {
        self.table.len() - 1
    }

    #[inline]
    pub fn ln_factorial(&self, m: usize) -> f64 {
        self.table[m]
    }

    /// `ln C(n, k)`; `-inf` when `k > n`.
    #[inline]
    pub fn ln_binomial(&self, n: usize, k: usize) -> f64 {
        if k > n {
            return f64::NEG_INFINITY;
        }
        self.table[n] - self.table[k] - self.table[n - k]
    }
}

/// `ln(1 - (1 - p)^z)` for `p` in `[0, 1]` and `z > 0`, accurate for small `p`.
#[inline]
pub fn ln_one_minus_pow_complement(p: f64, z: f64) -> f64 {
    if p >= 1.0 {
        return 0.0;
    }
    (-(z * (-p).ln_1p()).exp_m1()).ln()
}

/// `1 - (1 - p)^z`, accurate for small `p`.
#[inline]
pub fn one_minus_pow_complement(p: f64, z: f64) -> f64 {
    if p >= 1.0 {
        return 1.0;
    }
    -(z * (-p).ln_1p()).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_sum_keeps_precision_below_the_normal_range() {
        let mut s = ScaledSum::default();
        assert_eq!(s.ln(), f64::NEG_INFINITY);
        for t in [-800.0, -790.0, -800.0, f64::NEG_INFINITY] {
            s.add_ln(t);
        }
        let expected = -790.0 + (2.0 * (-10.0f64).exp()).ln_1p();
        assert!((s.ln() - expected).abs() < 1e-13);
        let mut d = ScaledSum::from_ln(1.0);
        d.add_ln(1.0);
        assert!((d.ln() - (1.0 + std::f64::consts::LN_2)).abs() < 1e-15);
    }

    #[test]
    fn ln_add_exp_matches_direct_sum() {
        let v = ln_add_exp(2.0f64.ln(), 3.0f64.ln());
        assert!((v.exp() - 5.0).abs() < 1e-14);
        assert_eq!(ln_add_exp(f64::NEG_INFINITY, 1.5), 1.5);
    }

    #[test]
    fn log_sum_exp_handles_large_and_empty() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn binomials_are_exact_for_small_arguments() {
        let t = LnFactorials::new(60);
        assert!((t.ln_binomial(5, 2).exp() - 10.0).abs() < 1e-12);
        assert!((t.ln_binomial(50, 25).exp() / 126_410_606_437_752.0 - 1.0).abs() < 1e-12);
        assert_eq!(t.ln_binomial(3, 4), f64::NEG_INFINITY);
    }

    #[test]
    fn complement_power_small_p() {
        let p = 1e-12;
        let v = one_minus_pow_complement(p, 3.0);
        assert!((v / (3.0 * p) - 1.0).abs() < 1e-9);
        assert_eq!(one_minus_pow_complement(1.0, 2.5), 1.0);
    }

    #[test]
    fn clamp_ln_sends_underflow_to_neg_inf() {
        assert_eq!(clamp_ln(-800.0), f64::NEG_INFINITY);
        assert_eq!(clamp_ln(-10.0), -10.0);
    }
}
