#![allow(dead_code)]

use coalescent_core::{Atom, BetaComponent, LambdaSpec};

fn mixed(kingman: f64, atoms: &[(f64, f64)], beta: Option<(f64, f64, f64)>) -> LambdaSpec {
    LambdaSpec::new(
        kingman,
        atoms.iter().map(|&(position, mass)| Atom { position, mass }).collect(),
        beta.map(|(a, b, scale)| BetaComponent { a, b, scale }),
    )
    .expect("valid battery spec")
}

/// Twenty measures covering every supported shape.
pub fn battery() -> Vec<(&'static str, LambdaSpec)> {
    let e1 = (-1.0f64).exp();
    vec![
        ("kingman", mixed(1.0, &[], None)),
        ("kingman-2.5", mixed(2.5, &[], None)),
        ("bsc", mixed(0.0, &[], Some((1.0, 1.0, 1.0)))),
        ("beta-1.5-0.5", mixed(0.0, &[], Some((1.5, 0.5, 1.0)))),
        ("beta-0.5-1.5", mixed(0.0, &[], Some((0.5, 1.5, 1.0)))),
        ("beta-3-1", mixed(0.0, &[], Some((3.0, 1.0, 1.0)))),
        ("beta-2.5-4", mixed(0.0, &[], Some((2.5, 4.0, 1.0)))),
        ("beta-0.3-0.7", mixed(0.0, &[], Some((0.3, 0.7, 1.0)))),
        ("dirac-e1", mixed(0.0, &[(e1, e1 * e1)], None)),
        ("dirac-half", mixed(0.0, &[(0.5, 0.25)], None)),
        ("star", mixed(0.0, &[(1.0, 1.0)], None)),
        ("two-atoms", mixed(0.0, &[(0.2, 1.0), (0.7, 0.5)], None)),
        ("three-atoms", mixed(0.0, &[(0.1, 0.3), (0.4, 0.2), (0.9, 1.0)], None)),
        ("kingman+atom", mixed(1.0, &[(0.5, 0.25)], None)),
        ("kingman+bsc", mixed(0.5, &[], Some((1.0, 1.0, 1.0)))),
        ("beta-2-2x3+atom", mixed(0.0, &[(0.3, 0.1)], Some((2.0, 2.0, 3.0)))),
        ("star+bsc", mixed(0.0, &[(1.0, 1.0)], Some((1.0, 1.0, 1.0)))),
        ("beta-5-1", mixed(0.0, &[], Some((5.0, 1.0, 1.0)))),
        ("near-star", mixed(0.0, &[(0.999, 1.0)], None)),
        ("everything", mixed(1.0, &[(1.0, 0.5)], Some((0.8, 1.2, 0.5)))),
    ]
}

/// λ_{b,k} in linear space from the defining integral, with the Beta part
/// by rising-factorial products instead of log-gamma.
pub fn oracle_lambda(spec: &LambdaSpec, b: usize, k: usize) -> f64 {
    let mut total = if k == 2 { spec.kingman_mass() } else { 0.0 };
    for atom in spec.atoms() {
        let p = atom.position;
        total += atom.mass * p.powi(k as i32 - 2) * (1.0 - p).powi((b - k) as i32);
    }
    if let Some(c) = spec.beta_component() {
        let mut v = c.scale;
        for i in 0..k - 2 {
            v *= c.a + i as f64;
        }
        for i in 0..b - k {
            v *= c.b + i as f64;
        }
        for i in 0..b - 2 {
            v /= c.a + c.b + i as f64;
        }
        total += v;
    }
    total
}

pub fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// ρ_{b,j} for j = 1..b (index j − 1) in linear space.
pub fn oracle_rho_row(spec: &LambdaSpec, b: usize) -> Vec<f64> {
    (1..b)
        .map(|j| {
            let k = b - j + 1;
            binomial(b, k) * oracle_lambda(spec, b, k)
        })
        .collect()
}

/// Law of L_n and hitting probabilities by enumerating every decreasing
/// path n → … → 1. Index i − 2 for i = 2..=n.
pub fn enumerate_paths(spec: &LambdaSpec, n: usize) -> (Vec<f64>, Vec<f64>) {
    fn walk(spec: &LambdaSpec, state: usize, prob: f64, law: &mut [f64], hit: &mut [f64]) {
        hit[state - 2] += prob;
        let row = oracle_rho_row(spec, state);
        let total: f64 = row.iter().sum();
        for (idx, &r) in row.iter().enumerate() {
            let next = idx + 1;
            let p = prob * r / total;
            if p == 0.0 {
                continue;
            }
            if next == 1 {
                law[state - 2] += p;
            } else {
                walk(spec, next, p, law, hit);
            }
        }
    }
    let mut law = vec![0.0; n - 1];
    let mut hit = vec![0.0; n - 1];
    walk(spec, n, 1.0, &mut law, &mut hit);
    (law, hit)
}
