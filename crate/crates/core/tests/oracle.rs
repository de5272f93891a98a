mod common;

use coalescent_core::{absorption_profile, last_merger_mc, rate_row, LambdaSpec};
use common::{battery, enumerate_paths, oracle_lambda};

#[test]
fn rates_match_linear_space_oracle() {
    for (name, spec) in battery() {
        for b in 2..=30 {
            let row = rate_row(&spec, b).unwrap();
            for k in 2..=b {
                let want = oracle_lambda(&spec, b, k);
                let got = row.lambda(k);
                if want == 0.0 {
                    assert_eq!(got, 0.0, "{name} b={b} k={k}");
                } else {
                    assert!((got / want - 1.0).abs() < 1e-12, "{name} b={b} k={k}: {got} vs {want}");
                }
            }
        }
    }
}

#[test]
fn dp_matches_path_enumeration() {
    for (name, spec) in battery() {
        for n in 2..=6 {
            let prof = absorption_profile(&spec, n).unwrap();
            let (law, hit) = enumerate_paths(&spec, n);
            for i in 2..=n {
                assert!((prof.last_merger(i) - law[i - 2]).abs() < 1e-12, "{name} n={n} i={i}");
                assert!((prof.hit(i) - hit[i - 2]).abs() < 1e-12, "{name} n={n} i={i}");
            }
        }
    }
}

#[test]
fn bolthausen_sznitman_four_blocks_exact() {
    // ρ_4 = (2, 2/3, 1/3) to (3, 2, 1); ρ_3 = (3/2, 1/2) to (2, 1).
    let prof = absorption_profile(&LambdaSpec::beta(1.0, 1.0).unwrap(), 4).unwrap();
    assert!((prof.last_merger(2) - 13.0 / 18.0).abs() < 1e-12);
    assert!((prof.last_merger(3) - 1.0 / 6.0).abs() < 1e-12);
    assert!((prof.last_merger(4) - 1.0 / 9.0).abs() < 1e-12);
}

#[test]
fn dirac_three_blocks_by_hand() {
    let p = (-1.0f64).exp();
    let prof = absorption_profile(&LambdaSpec::eldon_wakeley(p).unwrap(), 3).unwrap();
    // ρ_{3,1} = p³, ρ_{3,2} = 3p²(1 − p)
    assert!((prof.last_merger(3) - p / (3.0 - 2.0 * p)).abs() < 1e-12);
}

#[test]
fn monte_carlo_agrees_with_dp_on_a_sample() {
    let specs = battery();
    let mut passed = 0;
    let picks = [2usize, 8, 12, 15, 19];
    for &idx in &picks {
        let (name, spec) = &specs[idx];
        let prof = absorption_profile(spec, 6).unwrap();
        let est = last_merger_mc(spec, 6, 20_000, 100 + idx as u64).unwrap();
        let gof = est.chi_square_against(&prof.last_merger_law);
        if !gof.rejects(1e-3) {
            passed += 1;
        } else {
            eprintln!("{name}: {gof:?}");
        }
    }
    assert!(passed >= picks.len() - 1);
}
