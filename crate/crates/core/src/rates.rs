//! Merger rates λ_{b,k}, jump rates ρ_{b,j}, and the drift function f.
//!
//! Everything is evaluated in log space. A [`RateEngine`] precomputes the
//! log-gamma tables up to a maximal block count so that a full row costs O(b)
//! arithmetic and no special-function calls.

use crate::error::{precondition, Error, Result};
use crate::measure::{check_conditions, LambdaSpec};
use crate::quad::{beta_weighted, QuadConfig};
use crate::special::{clamp_ln, ln_add_exp, ln_beta, ln_gamma, log_sum_exp, one_minus_pow_complement, LnFactorials};

#[derive(Debug, Clone, Copy)]
struct AtomLogs {
    ln_mass: f64,
    ln_p: f64,
    /// `ln(1 − p)`, `-inf` for an atom at 1.
    ln_q: f64,
}

#[derive(Debug, Clone)]
struct BetaTables {
    a: f64,
    ln_norm: f64,
    /// lnΓ(k − 2 + a), indexed by k.
    left: Vec<f64>,
    /// lnΓ(m + b), indexed by m.
    right: Vec<f64>,
    /// lnΓ(c − 2 + a + b), indexed by the block count c.
    total: Vec<f64>,
}

/// Precomputed log-space rate evaluator for block counts up to `max_b`.
#[derive(Debug, Clone)]
pub struct RateEngine {
    spec: LambdaSpec,
    max_b: usize,
    factorials: LnFactorials,
    ln_kingman: f64,
    atoms: Vec<AtomLogs>,
    beta: Option<BetaTables>,
}

impl RateEngine {
    pub fn new(spec: &LambdaSpec, max_b: usize) -> Self {
        let max_b = max_b.max(2);
        let atoms = spec
            .atoms()
            .iter()
            .map(|a| AtomLogs {
                ln_mass: a.mass.ln(),
                ln_p: a.position.ln(),
                ln_q: if a.position >= 1.0 {
                    f64::NEG_INFINITY
                } else {
                    (-a.position).ln_1p()
                },
            })
            .collect();
        let beta = spec.beta_component().map(|c| BetaTables {
            a: c.a,
            ln_norm: c.ln_norm(),
            left: (0..=max_b)
                .map(|k| {
                    if k >= 2 {
                        ln_gamma(k as f64 - 2.0 + c.a)
                    } else {
                        f64::NAN
                    }
                })
                .collect(),
            right: (0..=max_b).map(|m| ln_gamma(m as f64 + c.b)).collect(),
            total: (0..=max_b)
                .map(|n| {
                    if n >= 2 {
                        ln_gamma(n as f64 - 2.0 + c.a + c.b)
                    } else {
                        f64::NAN
                    }
                })
                .collect(),
        });
        let ln_kingman = if spec.kingman_mass() > 0.0 {
            spec.kingman_mass().ln()
        } else {
            f64::NEG_INFINITY
        };
        Self {
            spec: spec.clone(),
            max_b,
            factorials: LnFactorials::new(max_b),
            ln_kingman,
            atoms,
            beta,
        }
    }

    pub fn spec(&self) -> &LambdaSpec {
        &self.spec
    }

    pub fn max_b(&self) -> usize {
        self.max_b
    }

    #[inline]
    pub fn ln_binomial(&self, n: usize, k: usize) -> f64 {
        self.factorials.ln_binomial(n, k)
    }

    /// `ln λ_{b,k}` for `2 ≤ k ≤ b ≤ max_b`; `-inf` for structural zeros. Not
    /// clamped: λ_{b,k} may be far below the double range while C(b, k)·λ_{b,k}
    /// is of order one.
    #[inline]
    pub fn ln_lambda(&self, b: usize, k: usize) -> f64 {
        debug_assert!(2 <= k && k <= b && b <= self.max_b);
        let mut acc = if k == 2 { self.ln_kingman } else { f64::NEG_INFINITY };
        let up = (k - 2) as f64;
        let down = b - k;
        for atom in &self.atoms {
            let tail = if down == 0 { 0.0 } else { down as f64 * atom.ln_q };
            acc = ln_add_exp(acc, atom.ln_mass + up * atom.ln_p + tail);
        }
        if let Some(t) = &self.beta {
            acc = ln_add_exp(acc, t.ln_norm + t.left[k] + t.right[down] - t.total[b]);
        }
        acc
    }

    /// `ln ρ_{b,j}` for `1 ≤ j < b`: the rate of a jump from b to j blocks.
    #[inline]
    pub fn ln_rho(&self, b: usize, j: usize) -> f64 {
        let k = b - j + 1;
        clamp_ln(self.ln_binomial(b, k) + self.ln_lambda(b, k))
    }

    /// Fills `out[j - 1] = ln ρ_{b,j}` for `j = 1..b` and returns `ln ρ_b`.
    pub fn fill_ln_rho(&self, b: usize, out: &mut Vec<f64>) -> f64 {
        out.clear();
        out.extend((1..b).map(|j| self.ln_rho(b, j)));
        log_sum_exp(out)
    }

    /// `ln ∫ p⁻¹ (1 − p)^(b−1) Λ(dp)`, `+inf` without dust.
    fn ln_lambda_one(&self, b: usize) -> f64 {
        if self.ln_kingman > f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        let mut acc = f64::NEG_INFINITY;
        for atom in &self.atoms {
            let tail = if b == 1 { 0.0 } else { (b - 1) as f64 * atom.ln_q };
            acc = ln_add_exp(acc, atom.ln_mass - atom.ln_p + tail);
        }
        if let Some(t) = &self.beta {
            if t.a <= 1.0 {
                return f64::INFINITY;
            }
            acc = ln_add_exp(acc, t.ln_norm + ln_gamma(t.a - 1.0) + t.right[b - 1] - t.total[b]);
        }
        acc
    }

    /// `ln ρ(b)` where ρ(b) = ∫ (1 − (1 − p)^b) p⁻² Λ(dp) is the rate of
    /// events that change the block count, or `+inf` when it diverges.
    ///
    /// Expanding the binomial gives ρ(b) = ρ_b + b·∫ p⁻¹(1 − p)^(b−1) Λ(dp).
    pub fn ln_event_rate(&self, b: usize) -> f64 {
        let one = self.ln_lambda_one(b);
        if one == f64::INFINITY {
            return f64::INFINITY;
        }
        let mut buf = Vec::with_capacity(b);
        let total = self.fill_ln_rho(b, &mut buf);
        ln_add_exp(total, (b as f64).ln() + one)
    }

    pub fn rate_row(&self, b: usize) -> RateRow {
        assert!(b >= 2 && b <= self.max_b, "block count {b} outside 2..={}", self.max_b);
        let log_lambda = (2..=b).map(|k| self.ln_lambda(b, k)).collect();
        let mut log_rho = Vec::with_capacity(b - 1);
        let log_rho_total = self.fill_ln_rho(b, &mut log_rho);
        RateRow {
            b,
            log_lambda,
            log_rho,
            log_rho_total,
            log_event_rate: self.ln_event_rate(b),
        }
    }
}

/// Rates out of a state with `b` blocks, in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub b: usize,
    /// `ln λ_{b,k}` for k = 2..=b (index k − 2).
    pub log_lambda: Vec<f64>,
    /// `ln ρ_{b,j}` for j = 1..b (index j − 1).
    pub log_rho: Vec<f64>,
    pub log_rho_total: f64,
    /// `ln ρ(b)`; `+inf` when the event intensity diverges.
    pub log_event_rate: f64,
}

impl RateRow {
    pub fn lambda(&self, k: usize) -> f64 {
        self.log_lambda[k - 2].exp()
    }

    pub fn rho(&self, j: usize) -> f64 {
        self.log_rho[j - 1].exp()
    }

    pub fn rho_total(&self) -> f64 {
        self.log_rho_total.exp()
    }

    /// Jump-chain transition probabilities P_{b,j}, j = 1..b.
    pub fn transition_probs(&self) -> Vec<f64> {
        self.log_rho
            .iter()
            .map(|&l| (l - self.log_rho_total).exp())
            .collect()
    }
}

fn check_pair(b: usize, k: usize) -> Result<()> {
    if k < 2 || k > b {
        return Err(Error::InvalidArgument(format!(
            "merger size k = {k} must satisfy 2 ≤ k ≤ b = {b}"
        )));
    }
    Ok(())
}

/// `ln λ_{b,k} = ln ∫ p^(k−2) (1 − p)^(b−k) Λ(dp)`.
pub fn ln_lambda_bk(spec: &LambdaSpec, b: usize, k: usize) -> Result<f64> {
    check_pair(b, k)?;
    Ok(RateEngine::new(spec, b).ln_lambda(b, k))
}

/// λ_{b,k}, the rate at which a given set of k out of b blocks merges.
pub fn lambda_bk(spec: &LambdaSpec, b: usize, k: usize) -> Result<f64> {
    ln_lambda_bk(spec, b, k).map(f64::exp)
}

pub fn rate_row(spec: &LambdaSpec, b: usize) -> Result<RateRow> {
    if b < 2 {
        return Err(Error::InvalidArgument(format!("block count must be ≥ 2, got {b}")));
    }
    Ok(RateEngine::new(spec, b).rate_row(b))
}

/// Largest relative violation of λ_{b,k} = λ_{b+1,k} + λ_{b+1,k+1} over k,
/// skipping structural zeros.
pub fn consistency_residual(spec: &LambdaSpec, b: usize) -> Result<f64> {
    if b < 2 {
        return Err(Error::InvalidArgument(format!("block count must be ≥ 2, got {b}")));
    }
    let engine = RateEngine::new(spec, b + 1);
    let mut worst = 0.0f64;
    for k in 2..=b {
        let here = engine.ln_lambda(b, k);
        if here == f64::NEG_INFINITY {
            continue;
        }
        let split = ln_add_exp(engine.ln_lambda(b + 1, k), engine.ln_lambda(b + 1, k + 1));
        worst = worst.max((split - here).exp_m1().abs());
    }
    Ok(worst)
}

/// `ln λ_{b,k}` with the Beta part evaluated by adaptive quadrature of the
/// defining integral against the Beta density instead of the closed form.
pub fn ln_lambda_quadrature(spec: &LambdaSpec, b: usize, k: usize) -> Result<f64> {
    check_pair(b, k)?;
    let mut acc = if k == 2 && spec.kingman_mass() > 0.0 {
        spec.kingman_mass().ln()
    } else {
        f64::NEG_INFINITY
    };
    for atom in spec.atoms() {
        let p: f64 = atom.position;
        let tail = if b == k { 0.0 } else { (b - k) as f64 * (-p).ln_1p() };
        acc = ln_add_exp(acc, atom.mass.ln() + (k - 2) as f64 * p.ln() + tail);
    }
    if let Some(c) = spec.beta_component() {
        let up = (k - 2) as f64;
        let down = (b - k) as f64;
        let cfg = QuadConfig {
            abs_tol: 0.0,
            rel_tol: 1e-12,
            max_intervals: 4000,
        };
        let r = beta_weighted(
            |p: f64, q: f64| {
                let lp = if up == 0.0 { 0.0 } else { up * p.ln() };
                let lq = if down == 0.0 { 0.0 } else { down * q.ln() };
                (lp + lq).exp()
            },
            c.a,
            c.b,
            cfg,
        )?;
        acc = ln_add_exp(acc, c.ln_norm() + r.value.ln());
    }
    Ok(acc)
}

/// Rows `ln λ_{b,·}` for b = n, n−1, …, 2, obtained from a single seed row at
/// b = n by the recursion λ_{b,k} = λ_{b+1,k} + λ_{b+1,k+1}. Element `i` of
/// the result is the row for b = n − i, indexed by k − 2.
pub fn top_down_rows(seed_row: Vec<f64>) -> Vec<Vec<f64>> {
    let mut rows = vec![seed_row];
    while rows.last().is_some_and(|r| r.len() > 1) {
        let prev = rows.last().expect("nonempty");
        let next = prev.windows(2).map(|w| ln_add_exp(w[0], w[1])).collect();
        rows.push(next);
    }
    rows
}

/// Seeds [`top_down_rows`] at b = n using quadrature for the Beta part.
pub fn rows_from_quadrature_seed(spec: &LambdaSpec, n: usize) -> Result<Vec<Vec<f64>>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("block count must be ≥ 2, got {n}")));
    }
    let seed = (2..=n)
        .map(|k| ln_lambda_quadrature(spec, n, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(top_down_rows(seed))
}

/// lnΓ(x + d) − lnΓ(x) for x > 0, switching to the Stirling expansion where
/// the direct difference would lose all precision.
fn ln_gamma_shift(x: f64, d: f64) -> f64 {
    if x > 1e7 {
        d * x.ln() + d * (d - 1.0) / (2.0 * x)
    } else {
        ln_gamma(x + d) - ln_gamma(x)
    }
}

/// Drift function f(y) = ∫ (1 − (1 − p)^z) / z · p⁻² Λ(dp) with z = e^y.
///
/// Finite exactly when Λ has dust. Atoms are closed-form; a Beta component
/// with a > 2 uses B(a−2, b) − B(a−2, b+z) for z ≥ 10⁻², otherwise adaptive
/// quadrature.
pub fn drift_f(spec: &LambdaSpec, y: f64) -> Result<f64> {
    let report = check_conditions(spec)?;
    if !report.has_dust {
        return Err(precondition("rates", "drift f(y) requires a dust component (∫ p⁻¹ Λ(dp) < ∞)"));
    }
    let drift = DriftFunction::new(spec)?;
    drift.eval(y)
}

/// Reusable evaluator for f(y).
#[derive(Debug, Clone)]
pub struct DriftFunction {
    atoms: Vec<(f64, f64)>,
    beta: Option<(f64, f64, f64)>,
}

impl DriftFunction {
    pub fn new(spec: &LambdaSpec) -> Result<Self> {
        if spec.kingman_mass() > 0.0 || spec.beta_component().is_some_and(|c| c.a <= 1.0) {
            return Err(precondition("rates", "drift f(y) requires a dust component (∫ p⁻¹ Λ(dp) < ∞)"));
        }
        Ok(Self {
            atoms: spec.atoms().iter().map(|a| (a.position, a.mass)).collect(),
            beta: spec.beta_component().map(|c| (c.a, c.b, c.ln_norm())),
        })
    }

    pub fn eval(&self, y: f64) -> Result<f64> {
        let z = y.exp();
        let mut total = 0.0;
        for &(p, w) in &self.atoms {
            total += w * one_minus_pow_complement(p, z) / (z * p * p);
        }
        if let Some((a, b, ln_norm)) = self.beta {
            // The closed form cancels catastrophically for small z.
            total += if a > 2.0 && z >= 1e-2 {
                // ∫ (1 − (1−p)^z) p^(a−3) (1−p)^(b−1) dp = B(a−2, b)·(1 − R)
                let ln_r = ln_gamma_shift(b, z) - ln_gamma_shift(a - 2.0 + b, z);
                (ln_norm + ln_beta(a - 2.0, b)).exp() * (-ln_r.exp_m1()) / z
            } else {
                let cfg = QuadConfig {
                    abs_tol: 0.0,
                    rel_tol: 1e-12,
                    max_intervals: 4000,
                };
                // h(p) = (1 − (1 − p)^z)/(z p) is bounded with h(0) = 1; the
                // remaining weight is p^(a−2) (1−p)^(b−1).
                let r = beta_weighted(
                    |p: f64, q: f64| {
                        let lq = if p < 0.5 { (-p).ln_1p() } else { q.ln() };
                        -(z * lq).exp_m1() / (z * p)
                    },
                    a - 1.0,
                    b,
                    cfg,
                )?;
                ln_norm.exp() * r.value
            };
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{gauss_legendre, gauss_legendre_integrate};

    fn ew() -> LambdaSpec {
        LambdaSpec::eldon_wakeley((-1.0f64).exp()).unwrap()
    }

    #[test]
    fn kingman_rates() {
        let s = LambdaSpec::kingman(1.0).unwrap();
        for b in [2, 5, 40] {
            assert!((lambda_bk(&s, b, 2).unwrap() - 1.0).abs() < 1e-15);
            for k in 3..=b {
                assert_eq!(lambda_bk(&s, b, k).unwrap(), 0.0);
            }
        }
        let row = rate_row(&s, 5).unwrap();
        assert!((row.rho(4) - 10.0).abs() < 1e-12);
        assert!((row.rho_total() - 10.0).abs() < 1e-12);
        for j in 1..4 {
            assert_eq!(row.rho(j), 0.0);
        }
        assert_eq!(row.log_event_rate, f64::INFINITY);
    }

    #[test]
    fn uniform_lambda_4_3_is_one_sixth() {
        let s = LambdaSpec::beta(1.0, 1.0).unwrap();
        let v = lambda_bk(&s, 4, 3).unwrap();
        assert!((v - 1.0 / 6.0).abs() < 1e-14, "{v}");
        // 64-point Gauss–Legendre of ∫ p (1 − p) dp
        let rule = gauss_legendre(64);
        let q = gauss_legendre_integrate(|p| p * (1.0 - p), 0.0, 1.0, &rule);
        assert!((q - v).abs() < 1e-14);
    }

    #[test]
    fn beta_diagonal_matches_closed_form() {
        // λ_{i,i} = B(i − α, α)/B(2 − α, α) for Beta(2 − α, α)
        for alpha in [0.5, 1.0, 1.5] {
            let s = LambdaSpec::beta_alpha(alpha).unwrap();
            for i in [2usize, 3, 10, 100] {
                let expected = (ln_beta(i as f64 - alpha, alpha) - ln_beta(2.0 - alpha, alpha)).exp();
                let v = lambda_bk(&s, i, i).unwrap();
                assert!((v / expected - 1.0).abs() < 1e-13, "α={alpha} i={i}");
            }
        }
    }

    #[test]
    fn eldon_wakeley_rho_substitution() {
        let s = ew();
        let p = (-1.0f64).exp();
        let b = 7;
        let row = rate_row(&s, b).unwrap();
        let fact = LnFactorials::new(b);
        for j in 1..b {
            let k = b - j + 1;
            let expected = fact.ln_binomial(b, k).exp() * p.powi(k as i32) * (1.0 - p).powi((j - 1) as i32);
            assert!((row.rho(j) / expected - 1.0).abs() < 1e-13);
            let via_lambda = fact.ln_binomial(b, k).exp() * lambda_bk(&s, b, k).unwrap();
            assert!((row.rho(j) / via_lambda - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn two_blocks_rate_is_total_mass() {
        for s in [
            LambdaSpec::kingman(2.5).unwrap(),
            LambdaSpec::beta(0.7, 1.3).unwrap(),
            LambdaSpec::new(
                0.3,
                vec![crate::measure::Atom { position: 0.4, mass: 0.2 }],
                Some(crate::measure::BetaComponent { a: 2.0, b: 3.0, scale: 0.5 }),
            )
            .unwrap(),
        ] {
            let row = rate_row(&s, 2).unwrap();
            assert!((row.rho(1) / s.total_mass() - 1.0).abs() < 1e-13);
            assert!((row.rho_total() / s.total_mass() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn invalid_pairs_rejected() {
        let s = ew();
        assert!(lambda_bk(&s, 5, 1).is_err());
        assert!(lambda_bk(&s, 5, 6).is_err());
        assert!(rate_row(&s, 1).is_err());
    }

    #[test]
    fn consistency_examples() {
        assert_eq!(consistency_residual(&LambdaSpec::kingman(1.0).unwrap(), 17).unwrap(), 0.0);
        assert!(consistency_residual(&LambdaSpec::beta(1.0, 1.0).unwrap(), 10).unwrap() <= 1e-12);
        assert!(consistency_residual(&LambdaSpec::atomic(&[(0.3, 1.0)]).unwrap(), 50).unwrap() <= 1e-12);
    }

    #[test]
    fn drift_examples() {
        let p = (-1.0f64).exp();
        let s = ew();
        for y in [-1.0, 0.0, 0.7, 3.0] {
            let z = f64::exp(y);
            let expected = (1.0 - (1.0 - p).powf(z)) * (-y).exp();
            assert!((drift_f(&s, y).unwrap() / expected - 1.0).abs() < 1e-13);
        }
        let half = LambdaSpec::atomic(&[(0.5, 0.25)]).unwrap();
        assert!((drift_f(&half, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(drift_f(&s, 50.0).unwrap() < drift_f(&s, 0.0).unwrap());
        assert!(drift_f(&LambdaSpec::kingman(1.0).unwrap(), 0.0).is_err());
        assert!(drift_f(&LambdaSpec::beta(1.0, 1.0).unwrap(), 0.0).is_err());
    }

    #[test]
    fn drift_is_finite_for_huge_arguments() {
        let s = LambdaSpec::beta(3.0, 1.0).unwrap();
        let v = drift_f(&s, 50.0).unwrap();
        assert!(v.is_finite() && v >= 0.0 && v < drift_f(&s, 0.0).unwrap());
    }

    #[test]
    fn top_down_matches_closed_form_for_atoms() {
        let s = LambdaSpec::atomic(&[(0.2, 0.3), (0.9, 0.1)]).unwrap();
        let n = 40;
        let rows = rows_from_quadrature_seed(&s, n).unwrap();
        let engine = RateEngine::new(&s, n);
        for (i, row) in rows.iter().enumerate() {
            let b = n - i;
            for k in 2..=b {
                let d = (row[k - 2] - engine.ln_lambda(b, k)).abs();
                assert!(d < 1e-12, "b={b} k={k}: {d}");
            }
        }
    }
}
