mod common;

use coalescent_core::rates::{consistency_residual, ln_lambda_quadrature, rows_from_quadrature_seed};
use coalescent_core::special::ln_beta;
use coalescent_core::{check_conditions, drift_f, LambdaSpec, LatticeVerdict, RateEngine};
use common::battery;

#[test]
fn quadrature_matches_closed_form_across_battery() {
    let mut checked = 0;
    for (name, spec) in battery() {
        if spec.beta_component().is_none() {
            continue;
        }
        let engine = RateEngine::new(&spec, 200);
        for &(b, k) in &[(2, 2), (5, 3), (20, 2), (20, 20), (60, 7), (200, 100), (200, 2), (200, 199)] {
            let exact = engine.ln_lambda(b, k);
            let quad = ln_lambda_quadrature(&spec, b, k).unwrap();
            assert!((quad - exact).abs() < 1e-9, "{name} b={b} k={k}: {quad} vs {exact}");
        }
        checked += 1;
    }
    // Add further Beta shapes so that at least ten distinct specs are swept.
    for (a, b) in [(0.1, 0.1), (0.7, 3.0), (4.0, 0.4), (1.99, 0.01)] {
        let spec = LambdaSpec::beta(a, b).unwrap();
        let engine = RateEngine::new(&spec, 100);
        for &(bb, k) in &[(2, 2), (10, 5), (100, 3), (100, 90)] {
            let exact = engine.ln_lambda(bb, k);
            let quad = ln_lambda_quadrature(&spec, bb, k).unwrap();
            assert!((quad - exact).abs() < 1e-9, "Beta({a},{b}) b={bb} k={k}");
        }
        checked += 1;
    }
    assert!(checked >= 10);
}

#[test]
fn top_down_rows_from_quadrature_seed() {
    for spec in [LambdaSpec::beta(1.0, 1.0).unwrap(), LambdaSpec::beta(0.5, 1.5).unwrap()] {
        let n = 120;
        let rows = rows_from_quadrature_seed(&spec, n).unwrap();
        let engine = RateEngine::new(&spec, n);
        for (idx, row) in rows.iter().enumerate() {
            let b = n - idx;
            for (kk, &v) in row.iter().enumerate() {
                let exact = engine.ln_lambda(b, kk + 2);
                assert!((v - exact).abs() < 1e-9, "b={b} k={}", kk + 2);
            }
        }
    }
}

#[test]
fn consistency_on_closed_form_specs_up_to_a_thousand() {
    for (name, spec) in battery() {
        for b in [2, 3, 10, 100, 500, 999] {
            let r = consistency_residual(&spec, b).unwrap();
            assert!(r <= 1e-10, "{name} b={b}: {r}");
        }
    }
}

#[test]
fn event_rate_equals_scaled_drift() {
    for (name, spec) in battery() {
        if !check_conditions(&spec).unwrap().has_dust {
            continue;
        }
        let engine = RateEngine::new(&spec, 1000);
        for b in [2usize, 3, 7, 50, 333, 1000] {
            let rho = engine.ln_event_rate(b).exp();
            let f = drift_f(&spec, (b as f64).ln()).unwrap();
            let rel = (b as f64 * f / rho - 1.0).abs();
            assert!(rel < 1e-8, "{name} b={b}: {rel}");
        }
    }
}

#[test]
fn drift_is_monotone_and_bounded() {
    // f decreases in y, and f(y) → ∫ −log(1 − p) p⁻² Λ(dp) as y → −∞, which
    // is 12 ∫ −log(u) u du = 3 for Beta(3, 2).
    let spec = LambdaSpec::beta(3.0, 2.0).unwrap();
    let mut last = f64::INFINITY;
    for y in [-20.0, -5.0, 0.0, 2.0, 5.0, 10.0, 30.0] {
        let f = drift_f(&spec, y).unwrap();
        assert!(f > 0.0 && f <= last + 1e-15, "y={y}");
        last = f;
    }
    let f_low = drift_f(&spec, -30.0).unwrap();
    assert!((f_low / 3.0 - 1.0).abs() < 1e-9, "{f_low}");
}

#[test]
fn condition_table() {
    let k = check_conditions(&LambdaSpec::kingman(1.0).unwrap()).unwrap();
    assert!(!k.has_dust && k.log_condition && k.intensity_integral.is_infinite());

    let b = check_conditions(&LambdaSpec::beta(1.5, 0.5).unwrap()).unwrap();
    assert!(b.has_dust && b.log_condition && b.intensity_integral.is_infinite());
    assert_eq!(b.log_nonlattice, LatticeVerdict::Yes);

    let bsc = check_conditions(&LambdaSpec::beta(1.0, 1.0).unwrap()).unwrap();
    assert!(!bsc.has_dust && bsc.log_condition);
    // ∫ −log(1 − p) dp over Uniform(0, 1) is 1.
    assert!((bsc.log_one_minus_p_integral - 1.0).abs() < 1e-12);

    let b3 = check_conditions(&LambdaSpec::beta(3.0, 1.0).unwrap()).unwrap();
    // ∫ p⁻² · 3p² dp = 3
    assert!((b3.intensity_integral - 3.0).abs() < 1e-12);
    let _ = ln_beta(1.0, 1.0);
}

#[test]
fn large_block_counts_stay_finite() {
    for (name, spec) in battery() {
        let engine = RateEngine::new(&spec, 20_000);
        let mut buf = Vec::new();
        for b in [1_000usize, 5_000, 20_000] {
            let total = engine.fill_ln_rho(b, &mut buf);
            assert!(total.is_finite(), "{name} b={b}");
        }
    }
}
