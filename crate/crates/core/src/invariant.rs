//! ρ-invariant measures on {2, 3, …}, obtained as limits of the pre-limit
//! profiles μ^(n) along a schedule of initial sizes.
//!
//! A measure μ is ρ-invariant when Σ_{j>i} μ_j ρ_{j,i} = μ_i ρ_i for all i ≥ 2
//! and Σ_i μ_i ρ_{i,1} = 1. Truncating this system at a finite J forces the
//! zero solution, so the estimate is built from the exact profiles μ^(n)
//! instead, which satisfy the balance exactly for 2 ≤ i < n.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{run_dp, AbsorptionProfile, SizeGuard};
use crate::error::{Error, Result};
use crate::measure::LambdaSpec;
use crate::rates::RateEngine;
use crate::special::ScaledSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvariantVerdict {
    Converged,
    NonConvergent,
    DivergingToInfinity,
}

impl std::fmt::Display for InvariantVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Converged => "converged",
            Self::NonConvergent => "non_convergent",
            Self::DivergingToInfinity => "diverging_to_infinity",
        })
    }
}

/// Heuristic thresholds for the verdict. The classification is asymptotic
/// and cannot be decided at finite n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantConfig {
    /// Largest relative change between the two largest profiles accepted as
    /// convergence.
    pub tolerance: f64,
    /// Divergence is declared when max_{i ≤ J} P(L_n = i) at the largest n is
    /// below this and has not increased along the schedule.
    pub divergence_threshold: f64,
    pub size_guard: SizeGuard,
}

impl Default for InvariantConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            divergence_threshold: 1e-3,
            size_guard: SizeGuard::Enforce,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantEstimate {
    pub support_cutoff: usize,
    /// μ_i for i = 2..=J, taken from the profile at the largest n.
    pub mu: Vec<f64>,
    /// μ_i ρ_{i,1} = P(L_n = i) for i = 2..=J at the largest n.
    pub limit_probs: Vec<f64>,
    /// Σ_i μ_i ρ_{i,1} over the whole largest-n profile.
    pub normalization: f64,
    /// Σ_{i > J} μ_i ρ_{i,1} at the largest n.
    pub tail_mass: f64,
    /// Σ_{j > J} μ_j ρ_{j,i} for i = 2..=J: the flow entering i from beyond
    /// the cutoff.
    pub tail_inflow: Vec<f64>,
    pub source_n_values: Vec<usize>,
    /// max_{i ≤ J} relative difference of μ_i between the two largest n.
    pub sup_rel_diff: f64,
    /// max_{i ≤ J} P(L_n = i) for each n in the schedule.
    pub peak_limit_prob: Vec<f64>,
    pub verdict: InvariantVerdict,
}

impl InvariantEstimate {
    pub fn mu_at(&self, i: usize) -> f64 {
        self.mu[i - 2]
    }

    /// Balance residual of the estimate, with the recorded inflow from
    /// beyond the cutoff added to each truncated sum.
    pub fn residual(&self, spec: &LambdaSpec) -> Result<ResidualReport> {
        residual_report(spec, &self.mu, self.support_cutoff, Some(&self.tail_inflow))
    }
}

fn relative_difference(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn profile_with_window(spec: &LambdaSpec, n: usize, j: usize, guard: SizeGuard) -> Result<(AbsorptionProfile, Vec<f64>)> {
    guard.check(n)?;
    let engine = RateEngine::new(spec, n);
    let (profile, inflow) = run_dp(&engine, n, Some(j))?;
    Ok((profile, inflow.expect("window lies inside 2..=n")))
}

/// Estimates the ρ-invariant measure on 2..=J from the profiles μ^(n) for
/// each n in `n_schedule` (strictly increasing, max ≥ 4J).
pub fn invariant_from_profiles(
    spec: &LambdaSpec,
    n_schedule: &[usize],
    support_cutoff: usize,
    config: InvariantConfig,
) -> Result<InvariantEstimate> {
    let j = support_cutoff;
    if j < 2 {
        return Err(Error::InvalidArgument(format!("support cutoff J must be ≥ 2, got {j}")));
    }
    if n_schedule.len() < 2 {
        return Err(Error::InvalidArgument(
            "n schedule needs at least two sizes to assess convergence".into(),
        ));
    }
    if n_schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n schedule must be strictly increasing".into()));
    }
    if n_schedule[0] <= j {
        return Err(Error::InvalidArgument(format!(
            "every n in the schedule must exceed J = {j}, got {}",
            n_schedule[0]
        )));
    }
    let n_max = *n_schedule.last().expect("nonempty");
    if n_max < 4 * j {
        return Err(Error::InvalidArgument(format!(
            "largest n = {n_max} is below 4·J = {}; schedule too short for the cutoff",
            4 * j
        )));
    }
    if !(config.tolerance > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }

    let mut runs = n_schedule
        .par_iter()
        .map(|&n| profile_with_window(spec, n, j, config.size_guard))
        .collect::<Result<Vec<_>>>()?;
    let (last, tail_inflow) = runs.pop().expect("two or more runs");
    let (prev, _) = runs.last().expect("two or more runs");

    let peak_limit_prob: Vec<f64> = runs
        .iter()
        .map(|(p, _)| &p.last_merger_law)
        .chain(std::iter::once(&last.last_merger_law))
        .map(|law| law[..j - 1].iter().copied().fold(0.0, f64::max))
        .collect();

    let mu = last.mu_profile[..j - 1].to_vec();
    let sup_rel_diff = mu
        .iter()
        .zip(&prev.mu_profile[..j - 1])
        .map(|(&a, &b)| relative_difference(a, b))
        .fold(0.0, f64::max);
    let limit_probs = last.last_merger_law[..j - 1].to_vec();
    let normalization: f64 = last.last_merger_law.iter().sum();
    let tail_mass: f64 = last.last_merger_law[j - 1..].iter().sum();

    let final_peak = *peak_limit_prob.last().expect("nonempty");
    let peak_non_increasing = peak_limit_prob.windows(2).all(|w| w[1] <= w[0]);
    let verdict = if final_peak < config.divergence_threshold && peak_non_increasing {
        InvariantVerdict::DivergingToInfinity
    } else if sup_rel_diff <= config.tolerance {
        InvariantVerdict::Converged
    } else {
        InvariantVerdict::NonConvergent
    };

    Ok(InvariantEstimate {
        support_cutoff: j,
        mu,
        limit_probs,
        normalization,
        tail_mass,
        tail_inflow,
        source_n_values: n_schedule.to_vec(),
        sup_rel_diff,
        peak_limit_prob,
        verdict,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// max_{i ≤ J/2} |Σ_{i<j≤J} μ_j ρ_{j,i} − μ_i ρ_i| / (μ_i ρ_i)
    pub max_residual: f64,
    pub worst_state: usize,
    /// Largest share of μ_i ρ_i (i ≤ J/2) supplied by states in the top
    /// quarter (3J/4, J] of the support.
    pub top_window_share: f64,
    /// The top-window share exceeds the residual, so the flow from states
    /// beyond J, which is not seen, may well dominate the residual.
    pub tail_may_dominate: bool,
}

/// Relative balance residual of μ on 2..=J for i ≤ J/2, with flow from
/// states beyond J truncated.
pub fn residual_check(spec: &LambdaSpec, mu: &[f64], support_cutoff: usize) -> Result<ResidualReport> {
    residual_report(spec, mu, support_cutoff, None)
}

fn residual_report(spec: &LambdaSpec, mu: &[f64], j: usize, tail_inflow: Option<&[f64]>) -> Result<ResidualReport> {
    if j < 4 {
        return Err(Error::InvalidArgument(format!("support cutoff J must be ≥ 4, got {j}")));
    }
    if mu.len() != j - 1 {
        return Err(Error::InvalidArgument(format!(
            "μ must have J − 1 = {} entries, got {}",
            j - 1,
            mu.len()
        )));
    }
    if let Some(bad) = mu.iter().position(|&m| !(m > 0.0 && m.is_finite())) {
        return Err(Error::InvalidArgument(format!("μ_{} must be positive and finite", bad + 2)));
    }
    let engine = RateEngine::new(spec, j);
    let half = j / 2;
    let window_start = (3 * j).div_ceil(4).max(half + 1);
    let mut inflow = vec![0.0; half + 1];
    let mut window = vec![0.0; half + 1];
    let mut ln_out = vec![0.0; half + 1];
    let mut buf = Vec::with_capacity(j);
    for src in 3..=j {
        let ln_total = engine.fill_ln_rho(src, &mut buf);
        if src <= half {
            ln_out[src] = ln_total;
        }
        let m = mu[src - 2];
        for i in 2..src.min(half + 1) {
            let f = m * buf[i - 1].exp();
            inflow[i] += f;
            if src >= window_start {
                window[i] += f;
            }
        }
    }
    ln_out[2] = engine.fill_ln_rho(2, &mut buf);
    let mut report = ResidualReport {
        max_residual: 0.0,
        worst_state: 2,
        top_window_share: 0.0,
        tail_may_dominate: false,
    };
    for i in 2..=half {
        let out = mu[i - 2] * ln_out[i].exp();
        let extra = tail_inflow.map_or(0.0, |t| t[i - 2]);
        let r = (inflow[i] + extra - out).abs() / out;
        if r > report.max_residual {
            report.max_residual = r;
            report.worst_state = i;
        }
        report.top_window_share = report.top_window_share.max(window[i] / out);
    }
    report.tail_may_dominate = tail_inflow.is_none() && report.top_window_share > report.max_residual;
    Ok(report)
}

/// Largest relative violation of μ_i ρ_i = Σ_{i<j≤n} μ_j ρ_{j,i} over
/// 2 ≤ i < n for an exact profile, evaluated in log space.
pub fn profile_balance_residual(spec: &LambdaSpec, profile: &AbsorptionProfile) -> f64 {
    let n = profile.n;
    let engine = RateEngine::new(spec, n);
    let mut inflow = vec![ScaledSum::default(); n + 1];
    let mut buf = Vec::with_capacity(n);
    for src in 3..=n {
        engine.fill_ln_rho(src, &mut buf);
        let m = profile.ln_mu(src);
        if m == f64::NEG_INFINITY {
            continue;
        }
        for i in 2..src {
            inflow[i].add_ln(m + buf[i - 1]);
        }
    }
    (2..n)
        .map(|i| {
            let out = profile.ln_mu(i) + profile.ln_rho_total[i - 2];
            let inn = inflow[i].ln();
            if out == f64::NEG_INFINITY && inn == f64::NEG_INFINITY {
                0.0
            } else {
                -(-(out - inn).abs()).exp_m1()
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kingman_is_exact() {
        let s = LambdaSpec::kingman(1.0).unwrap();
        let est = invariant_from_profiles(&s, &[200, 400], 50, InvariantConfig::default()).unwrap();
        assert_eq!(est.verdict, InvariantVerdict::Converged);
        for i in 2..=50 {
            let exact = 2.0 / (i * (i - 1)) as f64;
            assert!((est.mu_at(i) - exact).abs() < 1e-14);
        }
        assert!((est.normalization - 1.0).abs() < 1e-12);
        assert_eq!(est.tail_mass, 0.0);
    }

    #[test]
    fn star_diverges() {
        let s = LambdaSpec::star(1.0).unwrap();
        let est = invariant_from_profiles(&s, &[50, 100, 200], 20, InvariantConfig::default()).unwrap();
        assert_eq!(est.verdict, InvariantVerdict::DivergingToInfinity);
    }

    #[test]
    fn schedule_checks() {
        let s = LambdaSpec::kingman(1.0).unwrap();
        let cfg = InvariantConfig::default();
        assert!(invariant_from_profiles(&s, &[100, 150], 50, cfg).is_err());
        assert!(invariant_from_profiles(&s, &[400], 50, cfg).is_err());
        assert!(invariant_from_profiles(&s, &[400, 300], 50, cfg).is_err());
    }

    #[test]
    fn kingman_residual() {
        let s = LambdaSpec::kingman(1.0).unwrap();
        let mu: Vec<f64> = (2..=500).map(|i| 2.0 / (i * (i - 1)) as f64).collect();
        let r = residual_check(&s, &mu, 500).unwrap();
        assert!(r.max_residual <= 1e-10, "{}", r.max_residual);
        assert!(!r.tail_may_dominate);
        let mut bad = mu.clone();
        bad[8] *= 1.5;
        assert!(residual_check(&s, &bad, 500).unwrap().max_residual > 0.1);
    }

    #[test]
    fn raw_profile_balances() {
        let s = LambdaSpec::beta(1.0, 1.0).unwrap();
        let prof = crate::chain::absorption_profile(&s, 300).unwrap();
        assert!(profile_balance_residual(&s, &prof) < 1e-10);
        let r = residual_check(&s, &prof.mu_profile, 300).unwrap();
        assert!(r.max_residual < 1e-8, "{}", r.max_residual);
    }
}
