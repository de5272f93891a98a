//! Fixtures shared by the benchmarks.

use coalescent_core::LambdaSpec;

/// Named measures exercised by the benchmarks.
pub fn fixtures() -> Vec<(&'static str, LambdaSpec)> {
    vec![
        ("kingman", LambdaSpec::kingman(1.0).expect("valid")),
        ("bsc", LambdaSpec::beta(1.0, 1.0).expect("valid")),
        ("beta-1.5", LambdaSpec::beta_alpha(1.5).expect("valid")),
        ("dirac", LambdaSpec::eldon_wakeley((-1.0f64).exp()).expect("valid")),
    ]
}
