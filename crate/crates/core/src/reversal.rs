//! The chain seen backwards from absorption: N̂_n(t) = N_n((T_n − t)−).
//!
//! In the limit this is the upward Markov chain on {2, 3, …} with rates
//! ρ̂_{ij} = μ_j ρ_{j,i} / μ_i, started from the law of L_∞.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::JumpSampler;
use crate::error::{precondition, Error, Result};
use crate::invariant::{InvariantEstimate, InvariantVerdict};
use crate::measure::LambdaSpec;
use crate::rates::RateEngine;
use crate::rng::{StreamRng, StreamSeed};
use crate::stats::{chi_square_gof, ks_uniform, GofResult, KsResult};

/// Reversed chain truncated to 2..=J. Jumps above J are collapsed into a
/// single escape transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversedChainSpec {
    pub support_cutoff: usize,
    /// `rates[i - 2][j - i - 1]` = ρ̂_{ij} for 2 ≤ i < j ≤ J.
    pub rates: Vec<Vec<f64>>,
    /// Σ_{j > J} ρ̂_{ij} for i = 2..=J.
    pub escape: Vec<f64>,
    /// Σ_{j > i} ρ̂_{ij} including escape, for i = 2..=J.
    pub exit: Vec<f64>,
    /// μ_i ρ_{i,1} for i = 2..=J.
    pub initial_law: Vec<f64>,
    /// Mass of the initial law above J.
    pub tail_mass: f64,
}

impl ReversedChainSpec {
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        if j <= i || j > self.support_cutoff {
            0.0
        } else {
            self.rates[i - 2][j - i - 1]
        }
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        self.exit[i - 2]
    }

    pub fn escape_rate(&self, i: usize) -> f64 {
        self.escape[i - 2]
    }

    /// Probability that the embedded chain jumps from i to j; `None` for
    /// escape beyond J.
    pub fn jump_prob(&self, i: usize, j: Option<usize>) -> f64 {
        let r = match j {
            Some(j) => self.rate(i, j),
            None => self.escape_rate(i),
        };
        r / self.exit_rate(i)
    }
}

/// Builds the reversed chain from a converged invariant estimate.
pub fn build_reversed(spec: &LambdaSpec, inv: &InvariantEstimate) -> Result<ReversedChainSpec> {
    if inv.verdict != InvariantVerdict::Converged {
        return Err(precondition(
            "reversal",
            format!(
                "the reversed chain needs a converged invariant estimate, got verdict {}",
                inv.verdict
            ),
        ));
    }
    let j_max = inv.support_cutoff;
    let engine = RateEngine::new(spec, j_max);
    let mut rates: Vec<Vec<f64>> = (2..=j_max).map(|i| vec![0.0; j_max - i]).collect();
    let mut buf = Vec::with_capacity(j_max);
    for j in 3..=j_max {
        engine.fill_ln_rho(j, &mut buf);
        let mu_j = inv.mu_at(j);
        for i in 2..j {
            rates[i - 2][j - i - 1] = mu_j * buf[i - 1].exp() / inv.mu_at(i);
        }
    }
    let escape: Vec<f64> = (2..=j_max).map(|i| inv.tail_inflow[i - 2] / inv.mu_at(i)).collect();
    let exit = rates
        .iter()
        .zip(&escape)
        .map(|(row, &e)| row.iter().sum::<f64>() + e)
        .collect();
    Ok(ReversedChainSpec {
        support_cutoff: j_max,
        rates,
        escape,
        exit,
        initial_law: inv.limit_probs.clone(),
        tail_mass: inv.tail_mass,
    })
}

/// max_{i ≤ J/2} |ρ̂_i − ρ_i| / ρ_i, with ρ_i recomputed from the rates.
pub fn exit_rate_identity_error(spec: &LambdaSpec, rspec: &ReversedChainSpec) -> f64 {
    let half = rspec.support_cutoff / 2;
    let engine = RateEngine::new(spec, half.max(2));
    let mut buf = Vec::new();
    (2..=half)
        .map(|i| {
            let rho = engine.fill_ln_rho(i, &mut buf).exp();
            (rspec.exit_rate(i) - rho).abs() / rho
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReversedEnd {
    /// The horizon was reached inside 2..=J.
    Horizon,
    /// The chain left 2..=J, either at the start or by a jump.
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversedPath {
    /// Visited states in 2..=J, increasing.
    pub states: Vec<usize>,
    /// Completed holding times, one per state left before the horizon.
    pub holding_times: Vec<f64>,
    pub end: ReversedEnd,
}

fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> Option<usize> {
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (idx, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return Some(idx);
        }
    }
    None
}

/// Runs the reversed chain from its initial law up to time `horizon`.
pub fn simulate_reversed<R: Rng + ?Sized>(rspec: &ReversedChainSpec, horizon: f64, rng: &mut R) -> ReversedPath {
    let Some(idx) = sample_categorical(&rspec.initial_law, 1.0, rng) else {
        return ReversedPath {
            states: Vec::new(),
            holding_times: Vec::new(),
            end: ReversedEnd::Truncated,
        };
    };
    let mut state = idx + 2;
    let mut states = vec![state];
    let mut holding_times = Vec::new();
    let mut clock = 0.0;
    loop {
        let exit = rspec.exit_rate(state);
        let e: f64 = rng.sample(Exp1);
        let hold = e / exit;
        if clock + hold > horizon || exit == 0.0 {
            return ReversedPath {
                states,
                holding_times,
                end: ReversedEnd::Horizon,
            };
        }
        clock += hold;
        holding_times.push(hold);
        match sample_categorical(&rspec.rates[state - 2], exit, rng) {
            Some(k) => {
                state += k + 1;
                states.push(state);
            }
            None => {
                return ReversedPath {
                    states,
                    holding_times,
                    end: ReversedEnd::Truncated,
                }
            }
        }
    }
}

/// Largest r accepted by [`empirical_reversal_test`].
pub const MAX_REVERSED_STEPS: usize = 5;

/// Replicates required per reversed step.
pub const REPLICATES_PER_STEP: u64 = 1_000;

/// Marker for a state above the support cutoff.
const ESCAPED: u32 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversalTestReport {
    pub n: usize,
    pub replicates: u64,
    pub steps: usize,
    /// Chi-square on (N̂(0), …, N̂(γ_r)), with states above J merged.
    pub states: GofResult,
    /// KS on the probability transform of each holding time Δ_0, …, Δ_r.
    pub holding: Vec<KsResult>,
    /// Number of distinct state tuples observed.
    pub distinct_tuples: usize,
}

impl ReversalTestReport {
    pub fn min_p_value(&self) -> f64 {
        self.holding.iter().map(|k| k.p_value).fold(self.states.p_value, f64::min)
    }

    pub fn rejects(&self, level: f64) -> bool {
        self.min_p_value() < level
    }
}

/// Enumerates the tuples whose probability times `replicates` reaches the
/// pooling threshold; everything else falls in the remainder.
fn enumerate_cells(rspec: &ReversedChainSpec, steps: usize, min_prob: f64) -> Vec<(Vec<u32>, f64)> {
    fn extend(rspec: &ReversedChainSpec, prefix: &mut Vec<u32>, prob: f64, steps: usize, min_prob: f64, out: &mut Vec<(Vec<u32>, f64)>) {
        if prob < min_prob {
            return;
        }
        if prefix.len() == steps + 1 {
            out.push((prefix.clone(), prob));
            return;
        }
        let last = *prefix.last().expect("prefix is never empty");
        if last == ESCAPED {
            prefix.push(ESCAPED);
            extend(rspec, prefix, prob, steps, min_prob, out);
            prefix.pop();
            return;
        }
        let i = last as usize;
        for j in i + 1..=rspec.support_cutoff {
            let p = rspec.jump_prob(i, Some(j));
            if p > 0.0 {
                prefix.push(j as u32);
                extend(rspec, prefix, prob * p, steps, min_prob, out);
                prefix.pop();
            }
        }
        prefix.push(ESCAPED);
        extend(rspec, prefix, prob * rspec.jump_prob(i, None), steps, min_prob, out);
        prefix.pop();
    }

    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(steps + 1);
    for (idx, &p0) in rspec.initial_law.iter().enumerate() {
        prefix.push((idx + 2) as u32);
        extend(rspec, &mut prefix, p0, steps, min_prob, &mut out);
        prefix.pop();
    }
    prefix.push(ESCAPED);
    extend(rspec, &mut prefix, rspec.tail_mass, steps, min_prob, &mut out);
    out
}

struct ReversedSample {
    tuple: Vec<u32>,
    holds: Vec<Option<f64>>,
}

fn reverse_tail(states: &[usize], holds: &[f64], steps: usize, cutoff: usize) -> ReversedSample {
    // states ends with 1; reversed sequence starts from the second-to-last.
    let m = states.len() - 1;
    let mut tuple = Vec::with_capacity(steps + 1);
    let mut out_holds = Vec::with_capacity(steps + 1);
    let mut escaped = false;
    for k in 0..=steps {
        if !escaped && k < m {
            let s = states[m - 1 - k];
            if s <= cutoff {
                tuple.push(s as u32);
                out_holds.push(Some(holds[m - 1 - k]));
                continue;
            }
        }
        escaped = true;
        tuple.push(ESCAPED);
        out_holds.push(None);
    }
    ReversedSample { tuple, holds: out_holds }
}

/// Simulates forward paths from n, reverses the last r + 1 visited states
/// and compares them with the Markov law of `rspec`: a chi-square test on
/// the state tuple and a KS test on each holding time, transformed by the
/// exponential CDF with rate ρ̂_i.
pub fn empirical_reversal_test(
    spec: &LambdaSpec,
    rspec: &ReversedChainSpec,
    n: usize,
    replicates: u64,
    steps: usize,
    seed: u64,
) -> Result<ReversalTestReport> {
    if steps > MAX_REVERSED_STEPS {
        return Err(Error::InvalidArgument(format!(
            "at most {MAX_REVERSED_STEPS} reversed steps are supported, got {steps}"
        )));
    }
    if n <= rspec.support_cutoff {
        return Err(Error::InvalidArgument(format!(
            "n = {n} must exceed the support cutoff J = {}",
            rspec.support_cutoff
        )));
    }
    let need = REPLICATES_PER_STEP * (steps as u64 + 1);
    if replicates < need {
        return Err(Error::InsufficientReplicates { got: replicates, need });
    }
    let sampler = JumpSampler::new(spec, n)?;
    let root = StreamSeed::new(seed).with_label("reversal");
    let cutoff = rspec.support_cutoff;
    let samples: Vec<ReversedSample> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng: StreamRng = root.stream(r);
            let path = sampler.simulate(n, &mut rng);
            reverse_tail(&path.states, &path.holding_times, steps, cutoff)
        })
        .collect();

    let min_prob = crate::stats::MIN_EXPECTED / replicates as f64;
    let cells = enumerate_cells(rspec, steps, min_prob);
    let index: HashMap<&[u32], usize> = cells.iter().enumerate().map(|(k, c)| (c.0.as_slice(), k)).collect();
    let mut observed = vec![0u64; cells.len() + 1];
    let mut distinct: HashMap<&[u32], ()> = HashMap::new();
    for s in &samples {
        distinct.insert(&s.tuple, ());
        match index.get(s.tuple.as_slice()) {
            Some(&k) => observed[k] += 1,
            None => observed[cells.len()] += 1,
        }
    }
    let mut probs: Vec<f64> = cells.iter().map(|c| c.1).collect();
    let covered: f64 = probs.iter().sum();
    probs.push((1.0 - covered).max(0.0));
    let states = chi_square_gof(&observed, &probs);

    let holding = (0..=steps)
        .map(|k| {
            let u: Vec<f64> = samples
                .iter()
                .filter_map(|s| {
                    let hold = s.holds[k]?;
                    let rate = rspec.exit_rate(s.tuple[k] as usize);
                    Some(-(-rate * hold).exp_m1())
                })
                .collect();
            ks_uniform(&u)
        })
        .collect();

    Ok(ReversalTestReport {
        n,
        replicates,
        steps,
        states,
        holding,
        distinct_tuples: distinct.len(),
    })
}
