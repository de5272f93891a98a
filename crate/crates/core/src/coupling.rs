//! Joint simulation of N_n with the subordinator S driven by the same
//! Poisson events, and the solution Y_n of
//! log n − S(t) = Y_n(t) − ∫₀ᵗ f(Y_n(s)) ds.
//!
//! Between events Y_n follows dY/dt = f(Y) (classical RK4); at an event with
//! participation probability p both S and −Y_n jump by −log(1 − p).

use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::measure::{check_conditions, LambdaSpec};
use crate::quad::gauss_legendre;
use crate::rates::DriftFunction;
use crate::rng::{StreamRng, StreamSeed};
use crate::special::ln_beta;
use crate::stats::{normal_quantile, quantile_interval_sorted, quantile_sorted, DEFAULT_CONFIDENCE};

/// Largest RK4 step between events.
pub const MAX_STEP: f64 = 0.05;
/// Least number of RK4 steps per inter-event gap.
pub const MIN_STEPS_PER_GAP: usize = 8;

#[derive(Debug, Clone)]
enum MarkSource {
    Atom(f64),
    Beta(Beta<f64>),
}

/// Sampler for the normalised intensity measure p⁻² Λ(dp) / I.
#[derive(Debug, Clone)]
struct MarkSampler {
    weights: Vec<f64>,
    sources: Vec<MarkSource>,
    intensity: f64,
}

impl MarkSampler {
    fn new(spec: &LambdaSpec) -> Result<Self> {
        let mut weights = Vec::new();
        let mut sources = Vec::new();
        for atom in spec.atoms() {
            weights.push(atom.mass / (atom.position * atom.position));
            sources.push(MarkSource::Atom(atom.position));
        }
        if let Some(c) = spec.beta_component() {
            // p⁻² · scale · p^(a−1)(1−p)^(b−1)/B(a, b) is a multiple of Beta(a−2, b).
            weights.push((c.ln_norm() + ln_beta(c.a - 2.0, c.b)).exp());
            let dist = Beta::new(c.a - 2.0, c.b)
                .map_err(|e| Error::InvalidMeasure(format!("Beta({}, {}): {e}", c.a - 2.0, c.b)))?;
            sources.push(MarkSource::Beta(dist));
        }
        let intensity = weights.iter().sum();
        Ok(Self {
            weights,
            sources,
            intensity,
        })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>() * self.intensity;
        let mut acc = 0.0;
        let mut pick = self.sources.len() - 1;
        for (k, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = k;
                break;
            }
        }
        match &self.sources[pick] {
            MarkSource::Atom(p) => *p,
            MarkSource::Beta(d) => d.sample(rng),
        }
    }
}

/// Event-driven simulator for one spec.
#[derive(Debug, Clone)]
pub struct Coupler {
    marks: MarkSampler,
    drift: DriftFunction,
    gl3: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingTrace {
    pub initial_n: usize,
    pub k_threshold: usize,
    /// Poisson event times t_m.
    pub event_times: Vec<f64>,
    /// −log(1 − p_m) at each event.
    pub jump_sizes: Vec<f64>,
    /// S(t_m) after each event.
    pub subordinator: Vec<f64>,
    /// N_n(t_m) after each event.
    pub blocks: Vec<usize>,
    /// (t, Y_n(t)) at t = 0, at every RK4 node and at both limits of every
    /// event; the left limit precedes the right limit.
    pub y_samples: Vec<(f64, f64)>,
    /// sup |log N_n(t) − Y_n(t)| over [0, τ_{k,n}] ∩ [0, T_n).
    pub sup_discrepancy: f64,
    /// sup |log N_n(t) − log n + S(t)| over the same interval.
    pub sup_subordinator_discrepancy: f64,
    /// max |log n − S(t) − Y_n(t) + ∫₀ᵗ f(Y_n)| over the samples, with the
    /// integral computed independently of the RK4 update.
    pub max_residual: f64,
    pub stop_time: f64,
    pub stop_state: usize,
}

impl Coupler {
    pub fn new(spec: &LambdaSpec) -> Result<Self> {
        let report = check_conditions(spec)?;
        if !report.intensity_integral.is_finite() {
            return Err(precondition(
                "coupling",
                "the event intensity ∫ p⁻² Λ(dp) is infinite; only atoms and Beta components with a > 2 are supported",
            ));
        }
        if !report.has_dust {
            return Err(precondition("coupling", "the drift f requires a dust component (∫ p⁻¹ Λ(dp) < ∞)"));
        }
        Ok(Self {
            marks: MarkSampler::new(spec)?,
            drift: DriftFunction::new(spec)?,
            gl3: gauss_legendre(3),
        })
    }

    pub fn intensity(&self) -> f64 {
        self.marks.intensity
    }

    fn f(&self, y: f64) -> Result<f64> {
        self.drift.eval(y)
    }

    /// Advances Y by one RK4 step of size h.
    fn rk4(&self, y: f64, h: f64) -> Result<f64> {
        let k1 = self.f(y)?;
        let k2 = self.f(y + 0.5 * h * k1)?;
        let k3 = self.f(y + 0.5 * h * k2)?;
        let k4 = self.f(y + h * k3)?;
        Ok(y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    }

    /// ∫ f(Y) over a step, from the cubic Hermite interpolant of Y through
    /// both endpoints and three-point Gauss–Legendre.
    fn step_integral(&self, y0: f64, y1: f64, f0: f64, f1: f64, h: f64) -> Result<f64> {
        let mut acc = 0.0;
        for &(x, w) in &self.gl3 {
            let s = 0.5 * (x + 1.0);
            let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
            let h10 = s * (1.0 - s) * (1.0 - s);
            let h01 = s * s * (3.0 - 2.0 * s);
            let h11 = s * s * (s - 1.0);
            let y = h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1;
            acc += w * self.f(y)?;
        }
        Ok(0.5 * h * acc)
    }

    /// Integrates dY/dt = f(Y) over `gap` with a fixed RK4 step.
    pub fn flow(&self, y0: f64, gap: f64, steps: usize) -> Result<f64> {
        let h = gap / steps as f64;
        let mut y = y0;
        for _ in 0..steps {
            y = self.rk4(y, h)?;
        }
        Ok(y)
    }

    pub fn simulate<R: Rng + ?Sized>(&self, n: usize, k: usize, rng: &mut R) -> Result<CouplingTrace> {
        if n < 2 || k < 2 || k > n {
            return Err(Error::InvalidArgument(format!("need 2 ≤ k ≤ n, got n = {n}, k = {k}")));
        }
        let ln_n = (n as f64).ln();
        let mut trace = CouplingTrace {
            initial_n: n,
            k_threshold: k,
            event_times: Vec::new(),
            jump_sizes: Vec::new(),
            subordinator: Vec::new(),
            blocks: Vec::new(),
            y_samples: vec![(0.0, ln_n)],
            sup_discrepancy: 0.0,
            sup_subordinator_discrepancy: 0.0,
            max_residual: 0.0,
            stop_time: 0.0,
            stop_state: n,
        };
        let (mut t, mut blocks, mut s, mut y, mut integral) = (0.0f64, n, 0.0f64, ln_n, 0.0f64);
        let rate = self.marks.intensity;
        loop {
            let ln_b = (blocks as f64).ln();
            let e: f64 = rng.sample(Exp1);
            let gap = e / rate;
            let steps = ((gap / MAX_STEP).ceil() as usize).max(MIN_STEPS_PER_GAP);
            let h = gap / steps as f64;
            let mut fy = self.f(y)?;
            for m in 0..steps {
                let y_next = self.rk4(y, h)?;
                let f_next = self.f(y_next)?;
                integral += self.step_integral(y, y_next, fy, f_next, h)?;
                y = y_next;
                fy = f_next;
                let tm = if m + 1 == steps { t + gap } else { t + (m + 1) as f64 * h };
                trace.y_samples.push((tm, y));
                trace.sup_discrepancy = trace.sup_discrepancy.max((ln_b - y).abs());
                trace.max_residual = trace.max_residual.max((ln_n - s - y + integral).abs());
            }
            t += gap;

            let p = self.marks.sample(rng);
            let jump = -(-p).ln_1p();
            let kept: u64 = if p >= 1.0 {
                0
            } else {
                Binomial::new(blocks as u64, 1.0 - p)
                    .map_err(|e| Error::InvalidArgument(format!("binomial draw: {e}")))?
                    .sample(rng)
            };
            let next = kept as usize + usize::from((kept as usize) < blocks);
            s += jump;
            y -= jump;
            blocks = next;
            trace.event_times.push(t);
            trace.jump_sizes.push(jump);
            trace.subordinator.push(s);
            trace.blocks.push(blocks);
            trace.y_samples.push((t, y));
            trace.stop_time = t;
            trace.stop_state = blocks;
            if blocks == 1 {
                // T_n itself lies outside [0, T_n).
                break;
            }
            let ln_b = (blocks as f64).ln();
            trace.sup_discrepancy = trace.sup_discrepancy.max((ln_b - y).abs());
            trace.sup_subordinator_discrepancy = trace.sup_subordinator_discrepancy.max((ln_b - ln_n + s).abs());
            trace.max_residual = trace.max_residual.max((ln_n - s - y + integral).abs());
            if blocks < k {
                break;
            }
        }
        Ok(trace)
    }
}

/// One coupled trace of (N_n, S, Y_n) stopped at min(τ_{k,n}, T_n).
pub fn simulate_coupled(spec: &LambdaSpec, n: usize, k: usize, rng: &mut StreamRng) -> Result<CouplingTrace> {
    Coupler::new(spec)?.simulate(n, k, rng)
}

/// |Y(h) − Y(h/2)| / 15 for the flow started at y0 over `horizon`: the
/// Richardson estimate of the RK4 error with step h = horizon/steps.
pub fn flow_richardson_error(spec: &LambdaSpec, y0: f64, horizon: f64, steps: usize) -> Result<f64> {
    let c = Coupler::new(spec)?;
    let coarse = c.flow(y0, horizon, steps)?;
    let fine = c.flow(y0, horizon, 2 * steps)?;
    Ok((coarse - fine).abs() / 15.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub n: usize,
    pub k: usize,
    pub replicates: u64,
    pub level: f64,
    pub quantile: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub subordinator_quantile: f64,
    pub subordinator_ci_lo: f64,
    pub subordinator_ci_hi: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyTable {
    /// Sorted by n, then k.
    pub rows: Vec<QuantileRow>,
    /// For every n, no later k has a quantile interval entirely above the
    /// interval of an earlier k.
    pub trend_within_ci: bool,
    /// Point estimates are non-increasing in k for every n.
    pub trend_strict: bool,
    pub subordinator_trend_within_ci: bool,
    pub max_residual: f64,
}

fn cell_domain(n: usize, k: usize) -> u64 {
    ((n as u64) << 32) ^ k as u64
}

fn trends(rows: &[QuantileRow], pick: impl Fn(&QuantileRow) -> (f64, f64, f64)) -> (bool, bool) {
    let mut within = true;
    let mut strict = true;
    for w in rows.windows(2) {
        if w[0].n != w[1].n {
            continue;
        }
        let (q0, _, hi0) = pick(&w[0]);
        let (q1, lo1, _) = pick(&w[1]);
        within &= lo1 <= hi0;
        strict &= q1 <= q0;
    }
    (within, strict)
}

/// Empirical `level`-quantiles of the sup discrepancies for each (n, k),
/// with order-statistic confidence intervals. Each cell draws from its own
/// family of substreams.
pub fn discrepancy_quantiles(
    spec: &LambdaSpec,
    n_schedule: &[usize],
    k_schedule: &[usize],
    replicates: u64,
    level: f64,
    seed: u64,
) -> Result<DiscrepancyTable> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile level must lie in (0, 1), got {level}")));
    }
    if replicates == 0 {
        return Err(Error::InsufficientReplicates { got: 0, need: 1 });
    }
    let mut ns = n_schedule.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let mut ks = k_schedule.to_vec();
    ks.sort_unstable();
    ks.dedup();
    for &n in &ns {
        for &k in &ks {
            if k < 2 || k > n {
                return Err(Error::InvalidArgument(format!("need 2 ≤ k ≤ n, got n = {n}, k = {k}")));
            }
        }
    }
    let coupler = Coupler::new(spec)?;
    let root = StreamSeed::new(seed).with_label("coupling");
    let z = normal_quantile(DEFAULT_CONFIDENCE);
    let mut rows = Vec::with_capacity(ns.len() * ks.len());
    for &n in &ns {
        for &k in &ks {
            let cell = root.with_domain(cell_domain(n, k));
            let stats = (0..replicates)
                .into_par_iter()
                .map(|r| {
                    let mut rng = cell.stream(r);
                    let tr = coupler.simulate(n, k, &mut rng)?;
                    Ok((tr.sup_discrepancy, tr.sup_subordinator_discrepancy, tr.max_residual))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut d: Vec<f64> = stats.iter().map(|x| x.0).collect();
            let mut c: Vec<f64> = stats.iter().map(|x| x.1).collect();
            d.sort_by(f64::total_cmp);
            c.sort_by(f64::total_cmp);
            let (ci_lo, ci_hi) = quantile_interval_sorted(&d, level, z);
            let (sub_lo, sub_hi) = quantile_interval_sorted(&c, level, z);
            rows.push(QuantileRow {
                n,
                k,
                replicates,
                level,
                quantile: quantile_sorted(&d, level),
                ci_lo,
                ci_hi,
                subordinator_quantile: quantile_sorted(&c, level),
                subordinator_ci_lo: sub_lo,
                subordinator_ci_hi: sub_hi,
                max_residual: stats.iter().map(|x| x.2).fold(0.0, f64::max),
            });
        }
    }
    let (trend_within_ci, trend_strict) = trends(&rows, |r| (r.quantile, r.ci_lo, r.ci_hi));
    let (subordinator_trend_within_ci, _) =
        trends(&rows, |r| (r.subordinator_quantile, r.subordinator_ci_lo, r.subordinator_ci_hi));
    let max_residual = rows.iter().map(|r| r.max_residual).fold(0.0, f64::max);
    Ok(DiscrepancyTable {
        rows,
        trend_within_ci,
        trend_strict,
        subordinator_trend_within_ci,
        max_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ew() -> LambdaSpec {
        LambdaSpec::eldon_wakeley((-1.0f64).exp()).unwrap()
    }

    #[test]
    fn rejects_unsupported_specs() {
        assert!(Coupler::new(&LambdaSpec::kingman(1.0).unwrap()).is_err());
        assert!(Coupler::new(&LambdaSpec::beta(1.0, 1.0).unwrap()).is_err());
        assert!(Coupler::new(&LambdaSpec::beta(1.5, 0.5).unwrap()).is_err());
        assert!(Coupler::new(&LambdaSpec::beta(3.0, 1.0).unwrap()).is_ok());
    }

    #[test]
    fn eldon_wakeley_trace_structure() {
        let c = Coupler::new(&ew()).unwrap();
        assert!((c.intensity() - 1.0).abs() < 1e-15);
        let mut rng = StreamSeed::new(5).stream(0);
        let tr = c.simulate(1000, 10, &mut rng).unwrap();
        let jump = -(-(-1.0f64).exp()).ln_1p();
        for (m, &s) in tr.subordinator.iter().enumerate() {
            assert!((s - jump * (m + 1) as f64).abs() < 1e-12);
        }
        assert!(tr.blocks.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(tr.event_times.len(), tr.blocks.len());
        assert_eq!(tr.y_samples[0], (0.0, (1000f64).ln()));
        // Y is nondecreasing between events.
        for w in tr.y_samples.windows(2) {
            if w[1].0 > w[0].0 {
                assert!(w[1].1 >= w[0].1 - 1e-15 || tr.event_times.contains(&w[1].0));
            }
        }
        assert!(tr.max_residual < 1e-6, "{}", tr.max_residual);
    }

    #[test]
    fn two_blocks_stop_at_first_merger() {
        let c = Coupler::new(&ew()).unwrap();
        let mut rng = StreamSeed::new(5).stream(1);
        let tr = c.simulate(2, 2, &mut rng).unwrap();
        assert_eq!(tr.stop_state, 1);
        assert_eq!(*tr.blocks.last().unwrap(), 1);
        assert!(tr.blocks[..tr.blocks.len() - 1].iter().all(|&b| b == 2));
    }

    #[test]
    fn richardson_error_is_small() {
        let e = flow_richardson_error(&ew(), 3.0, 1.0, 20).unwrap();
        assert!(e < 1e-9, "{e}");
    }
}
