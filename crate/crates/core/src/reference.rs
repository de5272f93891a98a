//! Closed-form limit laws of the last merger size, used as oracles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadConfig};
use crate::special::{ln_beta, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LimitFamily {
    Kingman,
    Beta { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitLaw {
    pub family: LimitFamily,
    /// P(L_∞ = i) for i = 2..=J.
    pub probs: Vec<f64>,
    /// 1 − Σ probs
    pub tail_bound: f64,
}

impl LimitLaw {
    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i - 2]
    }

    pub fn support_cutoff(&self) -> usize {
        self.probs.len() + 1
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::InvalidArgument(format!("α must lie in (0, 2), got {alpha}")));
    }
    Ok(())
}

fn check_cutoff(j: usize) -> Result<()> {
    if j < 2 {
        return Err(Error::InvalidArgument(format!("support cutoff J must be ≥ 2, got {j}")));
    }
    Ok(())
}

/// |1 − (1 − x)^(1−α)| / x, or −log(1 − x)/x when α = 1. Both are evaluated
/// without cancellation and tend to |1 − α| (resp. 1) as x → 0.
fn scaled_denominator(alpha: f64, x: f64) -> f64 {
    if x < 1e-8 {
        // Leading terms of the series in x.
        let c = 1.0 - alpha;
        return if alpha == 1.0 {
            1.0 + 0.5 * x
        } else {
            (c * (1.0 + 0.5 * alpha * x)).abs()
        };
    }
    let l = (-x).ln_1p();
    if alpha == 1.0 {
        -l / x
    } else {
        (-((1.0 - alpha) * l).exp_m1()).abs() / x
    }
}

/// ∫₀¹ x^(i−2) / scaled_denominator(x) dx.
fn limit_integral(alpha: f64, i: usize, cfg: QuadConfig) -> Result<f64> {
    let power = (i - 2) as i32;
    let f = |x: f64| x.powi(power) / scaled_denominator(alpha, x);
    // Split off [1/2, 1], where the logarithmic endpoint behaviour lives.
    let left = integrate(f, 0.0, 0.5, cfg)?;
    let right = integrate(f, 0.5, 1.0, cfg)?;
    Ok(left.value + right.value)
}

/// ln of the positive coefficient in front of the integral:
/// α |1 − α| Γ(i − α) / (Γ(2 − α) Γ(i)) for α ≠ 1, and 1/(i − 1) for α = 1.
fn ln_coefficient(alpha: f64, i: usize) -> f64 {
    if alpha == 1.0 {
        -((i - 1) as f64).ln()
    } else {
        alpha.ln() + (1.0 - alpha).abs().ln() + ln_gamma(i as f64 - alpha) - ln_gamma(2.0 - alpha) - ln_gamma(i as f64)
    }
}

/// P(L_∞ = i), i = 2..=J, for the Beta(2 − α, α) coalescent:
/// (−1)^(i−1) α C(α−1, i−1) ∫₀¹ x^(i−1) / (1 − (1−x)^(1−α)) dx, or
/// −(i−1)⁻¹ ∫₀¹ x^(i−1) / log(1−x) dx when α = 1.
pub fn beta_limit_law(alpha: f64, support_cutoff: usize) -> Result<LimitLaw> {
    check_alpha(alpha)?;
    check_cutoff(support_cutoff)?;
    let cfg = QuadConfig {
        abs_tol: 0.0,
        rel_tol: 1e-12,
        max_intervals: 4000,
    };
    let probs = (2..=support_cutoff)
        .map(|i| Ok((ln_coefficient(alpha, i) + limit_integral(alpha, i, cfg)?.ln()).exp()))
        .collect::<Result<Vec<f64>>>()?;
    let tail_bound = 1.0 - probs.iter().sum::<f64>();
    Ok(LimitLaw {
        family: LimitFamily::Beta { alpha },
        probs,
        tail_bound,
    })
}

/// μ_i = 2/(i(i−1)), i = 2..=J.
pub fn kingman_invariant(support_cutoff: usize) -> Result<Vec<f64>> {
    check_cutoff(support_cutoff)?;
    Ok((2..=support_cutoff).map(|i| 2.0 / (i as f64 * (i - 1) as f64)).collect())
}

/// The Kingman limit law: L_∞ = 2 almost surely.
pub fn kingman_limit_law(support_cutoff: usize) -> Result<LimitLaw> {
    check_cutoff(support_cutoff)?;
    let mut probs = vec![0.0; support_cutoff - 1];
    probs[0] = 1.0;
    Ok(LimitLaw {
        family: LimitFamily::Kingman,
        probs,
        tail_bound: 0.0,
    })
}

/// μ_i = P(L_∞ = i)/λ_{i,i} for Beta(2 − α, α), with
/// λ_{i,i} = B(i − α, α)/B(2 − α, α).
pub fn beta_mu_from_limit(alpha: f64, support_cutoff: usize) -> Result<Vec<f64>> {
    let law = beta_limit_law(alpha, support_cutoff)?;
    let ln_b0 = ln_beta(2.0 - alpha, alpha);
    Ok((2..=support_cutoff)
        .map(|i| (law.prob(i).ln() - (ln_beta(i as f64 - alpha, alpha) - ln_b0)).exp())
        .collect())
}
