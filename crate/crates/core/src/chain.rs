//! The block-counting chain N_n: exact absorption profiles by dynamic
//! programming, and Monte Carlo paths in embedded-jump-chain form.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::LambdaSpec;
use crate::rates::RateEngine;
use crate::rng::{StreamRng, StreamSeed};
use crate::special::ScaledSum;
use crate::stats::{chi_square_gof, normal_quantile, wilson_interval, GofResult, DEFAULT_CONFIDENCE};

/// Largest n accepted by the O(n²) dynamic program without an override.
pub const DP_SIZE_LIMIT: usize = 20_000;

/// Largest n for which the sampler precomputes every transition table.
const TABLE_LIMIT: usize = 3_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SizeGuard {
    #[default]
    Enforce,
    Override,
}

impl SizeGuard {
    pub(crate) fn check(self, n: usize) -> Result<()> {
        if self == SizeGuard::Enforce && n > DP_SIZE_LIMIT {
            return Err(Error::SizeGuard {
                n,
                limit: DP_SIZE_LIMIT,
            });
        }
        Ok(())
    }
}

/// One realised trajectory of N_n from n blocks to absorption in 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub initial_n: usize,
    /// Visited states, strictly decreasing from n to 1.
    pub states: Vec<usize>,
    /// Holding time in each state except the final 1.
    pub holding_times: Vec<f64>,
}

impl PathRecord {
    /// T_n, the absorption time.
    pub fn absorption_time(&self) -> f64 {
        self.holding_times.iter().sum()
    }

    /// L_n, the number of blocks involved in the last merger.
    pub fn last_merger(&self) -> usize {
        self.states[self.states.len() - 2]
    }

    pub fn jumps(&self) -> usize {
        self.states.len() - 1
    }
}

#[derive(Debug, Clone)]
struct TransitionTable {
    /// Cumulative P_{b,j}, j = 1..b, normalised so the last entry is 1.
    cdf: Vec<f64>,
    rate: f64,
}

fn transition_table(engine: &RateEngine, b: usize, buf: &mut Vec<f64>) -> Result<TransitionTable> {
    let ln_total = engine.fill_ln_rho(b, buf);
    if !ln_total.is_finite() {
        return Err(Error::InvalidMeasure(format!(
            "total jump rate out of {b} blocks is not positive and finite"
        )));
    }
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = buf
        .iter()
        .map(|&l| {
            acc += (l - ln_total).exp();
            acc
        })
        .collect();
    let last = *cdf.last().expect("b ≥ 2 gives a nonempty row");
    for c in &mut cdf {
        *c /= last;
    }
    *cdf.last_mut().expect("nonempty") = 1.0;
    Ok(TransitionTable {
        cdf,
        rate: ln_total.exp(),
    })
}

/// Samples jump-chain transitions of N_n started from up to `max_n` blocks.
///
/// For moderate sizes all rows are tabulated up front; above that, rows are
/// rebuilt on each visit.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    engine: RateEngine,
    tables: Option<Vec<TransitionTable>>,
}

impl JumpSampler {
    pub fn new(spec: &LambdaSpec, max_n: usize) -> Result<Self> {
        let max_n = max_n.max(2);
        let engine = RateEngine::new(spec, max_n);
        let tables = if max_n <= TABLE_LIMIT {
            let mut buf = Vec::with_capacity(max_n);
            let mut tables = Vec::with_capacity(max_n - 1);
            for b in 2..=max_n {
                tables.push(transition_table(&engine, b, &mut buf)?);
            }
            Some(tables)
        } else {
            None
        };
        Ok(Self { engine, tables })
    }

    pub fn max_n(&self) -> usize {
        self.engine.max_b()
    }

    /// Draws the holding time in `b` and the next state. The holding time is
    /// drawn first, then a uniform for the destination, which is chosen by
    /// inverse CDF over j ascending.
    pub fn step<R: Rng + ?Sized>(&self, b: usize, rng: &mut R) -> (f64, usize) {
        let owned;
        let table = match &self.tables {
            Some(t) => &t[b - 2],
            None => {
                let mut buf = Vec::with_capacity(b);
                owned = transition_table(&self.engine, b, &mut buf).expect("validated spec");
                &owned
            }
        };
        let e: f64 = rng.sample(Exp1);
        let u: f64 = rng.random();
        let idx = table.cdf.partition_point(|&c| c <= u).min(table.cdf.len() - 1);
        (e / table.rate, idx + 1)
    }

    pub fn simulate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PathRecord {
        assert!(n >= 2 && n <= self.max_n(), "initial state {n} outside 2..={}", self.max_n());
        let mut states = vec![n];
        let mut holding_times = Vec::new();
        let mut b = n;
        while b > 1 {
            let (hold, next) = self.step(b, rng);
            holding_times.push(hold);
            states.push(next);
            b = next;
        }
        PathRecord {
            initial_n: n,
            states,
            holding_times,
        }
    }
}

/// Simulates one path of N_n.
pub fn simulate_path(spec: &LambdaSpec, n: usize, rng: &mut StreamRng) -> Result<PathRecord> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("initial block count must be ≥ 2, got {n}")));
    }
    Ok(JumpSampler::new(spec, n)?.simulate(n, rng))
}

/// First passage of a path below level k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstPassage {
    /// τ_{k,n} = inf{t ≥ 0 : N_n(t) < k}
    pub time: f64,
    /// N_n(τ_{k,n})
    pub state: usize,
}

pub fn first_passage_stats(path: &PathRecord, k: usize) -> Result<FirstPassage> {
    if k < 2 || k > path.initial_n {
        return Err(Error::InvalidArgument(format!(
            "level k = {k} must satisfy 2 ≤ k ≤ n = {}",
            path.initial_n
        )));
    }
    let idx = path
        .states
        .iter()
        .position(|&s| s < k)
        .expect("every path ends in state 1 < k");
    Ok(FirstPassage {
        time: path.holding_times[..idx].iter().sum(),
        state: path.states[idx],
    })
}

/// Exact hitting and last-merger probabilities of N_n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionProfile {
    pub n: usize,
    /// h(i) = P(N_n visits i), i = 2..=n (index i − 2).
    pub hit_prob: Vec<f64>,
    /// ln h(i). Exact where h(i) is below the normal double range.
    pub ln_hit_prob: Vec<f64>,
    /// P(L_n = i), i = 2..=n.
    pub last_merger_law: Vec<f64>,
    /// μ_i^(n) = h(i)/ρ_i, i = 2..=n.
    pub mu_profile: Vec<f64>,
    /// ln ρ_i, i = 2..=n.
    pub ln_rho_total: Vec<f64>,
}

impl AbsorptionProfile {
    pub fn hit(&self, i: usize) -> f64 {
        self.hit_prob[i - 2]
    }

    pub fn last_merger(&self, i: usize) -> f64 {
        self.last_merger_law[i - 2]
    }

    pub fn mu(&self, i: usize) -> f64 {
        self.mu_profile[i - 2]
    }

    pub fn ln_mu(&self, i: usize) -> f64 {
        self.ln_hit_prob[i - 2] - self.ln_rho_total[i - 2]
    }

    pub fn rho_total(&self, i: usize) -> f64 {
        self.ln_rho_total[i - 2].exp()
    }
}

/// Runs the backward DP. When `window` is given, also returns for each
/// i = 2..=window the flow Σ_{j > window} h(j) P_{j,i} = Σ_{j > window} μ_j ρ_{j,i}
/// entering i from above the window.
pub(crate) fn run_dp(engine: &RateEngine, n: usize, window: Option<usize>) -> Result<(AbsorptionProfile, Option<Vec<f64>>)> {
    let mut hit = vec![ScaledSum::default(); n + 1];
    hit[n] = ScaledSum::from_ln(0.0);
    let mut ln_hit = vec![f64::NEG_INFINITY; n + 1];
    let mut last = vec![0.0; n + 1];
    let mut ln_total = vec![0.0; n + 1];
    let mut buf = Vec::with_capacity(n);
    let mut inflow = None;
    for j in (2..=n).rev() {
        if window == Some(j) {
            inflow = Some(hit[2..=j].iter().map(|h| h.ln().exp()).collect());
        }
        // Guard against rounding drift above 1.
        let lh = hit[j].ln().min(0.0);
        ln_hit[j] = lh;
        let lt = engine.fill_ln_rho(j, &mut buf);
        if !lt.is_finite() {
            return Err(Error::InvalidMeasure(format!(
                "total jump rate out of {j} blocks is not positive and finite"
            )));
        }
        ln_total[j] = lt;
        if lh == f64::NEG_INFINITY {
            continue;
        }
        let scale = lh - lt;
        // buf[i - 1] = ln ρ_{j,i}
        last[j] = (scale + buf[0]).exp();
        for i in 2..j {
            let l = buf[i - 1];
            if l > f64::NEG_INFINITY {
                hit[i].add_ln(scale + l);
            }
        }
    }
    let profile = AbsorptionProfile {
        n,
        hit_prob: ln_hit[2..=n].iter().map(|l| l.exp()).collect(),
        ln_hit_prob: ln_hit[2..=n].to_vec(),
        last_merger_law: last[2..=n].to_vec(),
        mu_profile: (2..=n).map(|i| (ln_hit[i] - ln_total[i]).exp()).collect(),
        ln_rho_total: ln_total[2..=n].to_vec(),
    };
    Ok((profile, inflow))
}

/// Exact absorption profile of N_n by backward dynamic programming in O(n²)
/// time and O(n) memory.
pub fn absorption_profile(spec: &LambdaSpec, n: usize) -> Result<AbsorptionProfile> {
    absorption_profile_guarded(spec, n, SizeGuard::Enforce)
}

pub fn absorption_profile_guarded(spec: &LambdaSpec, n: usize, guard: SizeGuard) -> Result<AbsorptionProfile> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("initial block count must be ≥ 2, got {n}")));
    }
    guard.check(n)?;
    let engine = RateEngine::new(spec, n);
    run_dp(&engine, n, None).map(|(p, _)| p)
}

/// Monte Carlo law of L_n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LastMergerEstimate {
    pub n: usize,
    pub replicates: u64,
    pub confidence: f64,
    /// Count of L_n = i, i = 2..=n.
    pub counts: Vec<u64>,
    pub freq: Vec<f64>,
    /// Wilson interval bounds per i.
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
}

impl LastMergerEstimate {
    /// Pearson goodness of fit against an exact law indexed like `counts`.
    pub fn chi_square_against(&self, law: &[f64]) -> GofResult {
        chi_square_gof(&self.counts, law)
    }
}

/// Simulates `replicates` independent paths from n and tabulates L_n.
/// Replica r uses substream r of the `"last-merger"` family of `seed`.
pub fn last_merger_mc(spec: &LambdaSpec, n: usize, replicates: u64, seed: u64) -> Result<LastMergerEstimate> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("initial block count must be ≥ 2, got {n}")));
    }
    if replicates == 0 {
        return Err(Error::InsufficientReplicates { got: 0, need: 1 });
    }
    let sampler = JumpSampler::new(spec, n)?;
    let root = StreamSeed::new(seed).with_label("last-merger");
    let counts = (0..replicates)
        .into_par_iter()
        .fold(
            || vec![0u64; n - 1],
            |mut acc, r| {
                let mut rng = root.stream(r);
                let path = sampler.simulate(n, &mut rng);
                acc[path.last_merger() - 2] += 1;
                acc
            },
        )
        .reduce(
            || vec![0u64; n - 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let z = normal_quantile(DEFAULT_CONFIDENCE);
    let total = replicates as f64;
    let freq = counts.iter().map(|&c| c as f64 / total).collect();
    let (ci_lo, ci_hi) = counts.iter().map(|&c| wilson_interval(c, replicates, z)).unzip();
    Ok(LastMergerEstimate {
        n,
        replicates,
        confidence: DEFAULT_CONFIDENCE,
        counts,
        freq,
        ci_lo,
        ci_hi,
    })
}
