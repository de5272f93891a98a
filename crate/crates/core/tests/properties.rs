mod common;

use coalescent_core::chain::JumpSampler;
use coalescent_core::rates::consistency_residual;
use coalescent_core::stats::chi_square_gof;
use coalescent_core::{
    absorption_profile, first_passage_stats, profile_balance_residual, Atom, BetaComponent, LambdaSpec, StreamSeed,
};
use proptest::prelude::*;

fn spec_strategy() -> impl Strategy<Value = LambdaSpec> {
    let atoms = prop::collection::vec((0.01f64..=1.0, 0.05f64..3.0), 0..3);
    let beta = prop::option::of((0.2f64..6.0, 0.2f64..6.0, 0.1f64..3.0));
    let kingman = prop_oneof![Just(0.0), 0.1f64..3.0];
    (kingman, atoms, beta)
        .prop_filter_map("valid measure", |(k, atoms, beta)| {
            let mut atoms: Vec<Atom> = atoms
                .into_iter()
                .map(|(position, mass)| Atom { position, mass })
                .collect();
            atoms.sort_by(|a, b| a.position.total_cmp(&b.position));
            atoms.dedup_by(|a, b| (a.position - b.position).abs() < 1e-6);
            LambdaSpec::new(k, atoms, beta.map(|(a, b, scale)| BetaComponent { a, b, scale })).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn consistency_recursion_holds(spec in spec_strategy(), b in 2usize..120) {
        prop_assert!(consistency_residual(&spec, b).unwrap() <= 1e-10);
    }

    #[test]
    fn absorption_profile_invariants(spec in spec_strategy(), n in 2usize..250) {
        let prof = absorption_profile(&spec, n).unwrap();
        prop_assert!((prof.hit(n) - 1.0).abs() == 0.0);
        prop_assert!(prof.hit_prob.iter().all(|&h| (0.0..=1.0).contains(&h)));
        let total: f64 = prof.last_merger_law.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-10, "Σ P(L_n = i) = {}", total);
        prop_assert!(profile_balance_residual(&spec, &prof) < 1e-8);
    }

    #[test]
    fn path_invariants(spec in spec_strategy(), n in 2usize..200, seed in any::<u64>()) {
        let sampler = JumpSampler::new(&spec, n).unwrap();
        let path = sampler.simulate(n, &mut StreamSeed::new(seed).stream(0));
        prop_assert_eq!(path.states[0], n);
        prop_assert_eq!(*path.states.last().unwrap(), 1);
        prop_assert!(path.states.windows(2).all(|w| w[1] < w[0]));
        prop_assert_eq!(path.holding_times.len(), path.states.len() - 1);
        prop_assert!(path.holding_times.iter().all(|&h| h > 0.0));
        prop_assert!(path.last_merger() >= 2);
        let k = 2 + (seed as usize % (n - 1));
        let fp = first_passage_stats(&path, k).unwrap();
        prop_assert!(fp.state < k);
        let idx = path.states.iter().position(|&s| s == fp.state).unwrap();
        let t: f64 = path.holding_times[..idx].iter().sum();
        prop_assert!((fp.time - t).abs() <= 1e-12 * t.max(1.0));
        let again = sampler.simulate(n, &mut StreamSeed::new(seed).stream(0));
        prop_assert_eq!(path, again);
    }

    #[test]
    fn chi_square_p_value_is_a_probability(counts in prop::collection::vec(0u64..500, 2..12)) {
        let total: u64 = counts.iter().sum();
        prop_assume!(total > 0);
        let probs = vec![1.0 / counts.len() as f64; counts.len()];
        let g = chi_square_gof(&counts, &probs);
        prop_assert!((0.0..=1.0).contains(&g.p_value));
        prop_assert!(g.statistic >= 0.0);
    }
}

#[test]
fn distinct_replicas_differ() {
    let spec = LambdaSpec::beta(1.0, 1.0).unwrap();
    let sampler = JumpSampler::new(&spec, 500).unwrap();
    let root = StreamSeed::new(1).with_label("x");
    let a = sampler.simulate(500, &mut root.stream(0));
    let b = sampler.simulate(500, &mut root.stream(1));
    assert_ne!(a, b);
}
