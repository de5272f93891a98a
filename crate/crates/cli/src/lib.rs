//! Command-line front end: reads a JSON config, runs one experiment and
//! writes CSV tables whose bodies depend only on (config, seed).

pub mod config;
pub mod output;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use coalescent_core::chain::JumpSampler;
use coalescent_core::{
    absorption_profile_guarded, beta_limit_law, beta_mu_from_limit, build_reversed, check_conditions,
    discrepancy_quantiles, empirical_reversal_test, exit_rate_identity_error, invariant_from_profiles,
    kingman_invariant, kingman_limit_law, last_merger_mc, lattice_scan, Coupler, InvariantConfig, RateEngine,
    SizeGuard, StreamSeed,
};

use config::LoadedConfig;
use output::{write_table, Cell, Header, Table};

#[derive(Debug, Parser)]
#[command(name = "coalescent", version, about = "Block-counting experiments for Λ-coalescents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: config `output_dir`, else `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Allow the exact DP above its default size limit.
    #[arg(long, global = true)]
    pub override_size_guard: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Integrability conditions of Λ.
    Check,
    /// Merger and jump rates for b ≤ n.
    Rates,
    /// Simulated paths of N_n.
    Simulate,
    /// Exact and Monte Carlo law of L_n.
    LastMerger,
    /// Invariant measure from pre-limit profiles.
    Invariant,
    /// Time-reversed chain and its empirical test.
    Reverse,
    /// Coupling of N_n with the drift equation.
    Couple,
    /// Closed-form limit laws.
    Reference,
    /// P(L_n = 2) along n = round(e^(λ+m)).
    LatticeScan,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Rates => "rates",
            Command::Simulate => "simulate",
            Command::LastMerger => "last-merger",
            Command::Invariant => "invariant",
            Command::Reverse => "reverse",
            Command::Couple => "couple",
            Command::Reference => "reference",
            Command::LatticeScan => "lattice-scan",
        }
    }

    /// Config keys read by the subcommand.
    fn keys(self) -> &'static [&'static str] {
        match self {
            Command::Check => &["measure"],
            Command::Rates => &["measure", "n"],
            Command::Simulate => &["measure", "n", "replicates"],
            Command::LastMerger => &["measure", "n", "replicates"],
            Command::Invariant => &["measure", "n_schedule", "J", "tolerance"],
            Command::Reverse => &[
                "measure", "n", "n_schedule", "J", "tolerance", "replicates", "steps", "horizon", "paths",
            ],
            Command::Couple => &["measure", "n", "n_schedule", "k", "replicates", "level"],
            Command::Reference => &["measure", "alpha", "J"],
            Command::LatticeScan => &["measure", "lambda_grid", "m_values"],
        }
    }
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Human-readable summary lines.
    pub summary: Vec<String>,
    pub warnings: Vec<String>,
}

struct Ctx {
    cfg: LoadedConfig,
    out_dir: PathBuf,
    header: Header,
    guard: SizeGuard,
    files: Vec<PathBuf>,
    summary: Vec<String>,
}

impl Ctx {
    fn emit(&mut self, name: &str, table: &Table) -> Result<()> {
        let path = write_table(&self.out_dir, name, &self.header, table)?;
        self.files.push(path);
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.header.seed
    }
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let mut cfg = match &cli.config {
        Some(path) => LoadedConfig::from_path(path)?,
        None => LoadedConfig::empty(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    cfg.note_unused(cli.command.keys());
    let warnings: Vec<String> = cfg
        .ignored
        .iter()
        .map(|k| format!("config key `{k}` is not used by `{}` and was ignored", cli.command.name()))
        .collect();
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let header = Header {
        subcommand: cli.command.name().to_string(),
        config_hash: cfg.hash(),
        seed: cfg.config.seed.unwrap_or(0),
    };
    let mut ctx = Ctx {
        cfg,
        out_dir,
        header,
        guard: if cli.override_size_guard {
            SizeGuard::Override
        } else {
            SizeGuard::Enforce
        },
        files: Vec::new(),
        summary: Vec::new(),
    };
    let command = cli.command;
    let body = move |ctx: &mut Ctx| -> Result<()> {
        match command {
            Command::Check => check(ctx),
            Command::Rates => rates(ctx),
            Command::Simulate => simulate(ctx),
            Command::LastMerger => last_merger(ctx),
            Command::Invariant => invariant(ctx),
            Command::Reverse => reverse(ctx),
            Command::Couple => couple(ctx),
            Command::Reference => reference(ctx),
            Command::LatticeScan => scan(ctx),
        }
    };
    match cli.threads {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build()
                .context("building the worker pool")?;
            pool.install(|| body(&mut ctx))?;
        }
        None => body(&mut ctx)?,
    }
    Ok(Outcome {
        files: ctx.files,
        summary: ctx.summary,
        warnings,
    })
}

fn check(ctx: &mut Ctx) -> Result<()> {
    let spec = ctx.cfg.measure()?;
    let r = check_conditions(spec)?;
    let mut t = Table::new(&["property", "value"]);
    let verdict = serde_json::to_value(r.log_nonlattice)?
        .as_str()
        .unwrap_or_default()
        .to_string();
    let rows: Vec<(&str, Cell)> = vec![
        ("has_dust", r.has_dust.into()),
        ("log_condition", r.log_condition.into()),
        ("log_one_minus_p_integral", r.log_one_minus_p_integral.into()),
        ("inverse_p_integral", r.inverse_p_integral.into()),
        ("intensity_integral", r.intensity_integral.into()),
        ("log_nonlattice", verdict.clone().into()),
        ("unit_atom", r.unit_atom.into()),
    ];
    for (k, v) in rows {
        t.push(vec![k.into(), v]);
    }
    ctx.summary.push(format!(
        "has_dust={} log_condition={} intensity_integral={} log_nonlattice={}",
        r.has_dust,
        r.log_condition,
        output::format_real(r.intensity_integral),
        verdict
    ));
    ctx.emit("check.csv", &t)
}

fn rates(ctx: &mut Ctx) -> Result<()> {
    let spec = ctx.cfg.measure()?.clone();
    let n = ctx.cfg.n()?;
    if n < 2 {
        bail!("`n` must be ≥ 2");
    }
    let engine = RateEngine::new(&spec, n);
    let mut t = Table::new(&["b", "k", "j", "log_lambda", "lambda", "log_rho", "rho"]);
    let mut totals = Table::new(&["b", "log_rho_total", "rho_total", "log_event_rate"]);
    for b in 2..=n {
        let row = engine.rate_row(b);
        for k in 2..=b {
            let j = b - k + 1;
            let ll = row.log_lambda[k - 2];
            let lr = row.log_rho[j - 1];
            t.push(vec![b.into(), k.into(), j.into(), ll.into(), ll.exp().into(), lr.into(), lr.exp().into()]);
        }
        totals.push(vec![
            b.into(),
            row.log_rho_total.into(),
            row.log_rho_total.exp().into(),
            row.log_event_rate.into(),
        ]);
    }
    ctx.summary.push(format!("rates for 2 ≤ b ≤ {n}"));
    ctx.emit("rates.csv", &t)?;
    ctx.emit("rate_totals.csv", &totals)
}

fn simulate(ctx: &mut Ctx) -> Result<()> {
    use rayon::prelude::*;
    let spec = ctx.cfg.measure()?.clone();
    let n = ctx.cfg.n()?;
    if n < 2 {
        bail!("`n` must be ≥ 2");
    }
    let replicates = ctx.cfg.config.replicates.unwrap_or(1);
    let sampler = JumpSampler::new(&spec, n)?;
    let root = StreamSeed::new(ctx.seed()).with_label("simulate");
    let paths: Vec<_> = (0..replicates)
        .into_par_iter()
        .map(|r| (r, sampler.simulate(n, &mut root.stream(r))))
        .collect();
    let mut t = Table::new(&["n", "seed", "replica", "L_n", "T_n", "n_jumps"]);
    for (r, p) in &paths {
        t.push(vec![
            n.into(),
            ctx.seed().into(),
            (*r).into(),
            p.last_merger().into(),
            p.absorption_time().into(),
            p.jumps().into(),
        ]);
    }
    ctx.summary.push(format!("{replicates} paths from n = {n}"));
    ctx.emit("simulate.csv", &t)
}

fn last_merger(ctx: &mut Ctx) -> Result<()> {
    let spec = ctx.cfg.measure()?.clone();
    let n = ctx.cfg.n()?;
    let replicates = ctx.cfg.config.replicates.unwrap_or(10_000);
    let prof = absorption_profile_guarded(&spec, n, ctx.guard)?;
    let est = last_merger_mc(&spec, n, replicates, ctx.seed())?;
    let mut t = Table::new(&["i", "exact_prob", "mc_freq", "ci_lo", "ci_hi"]);
    for i in 2..=n {
        let exact = prof.last_merger(i);
        let c = est.counts[i - 2];
        if exact == 0.0 && c == 0 {
            continue;
        }
        t.push(vec![
            i.into(),
            exact.into(),
            est.freq[i - 2].into(),
            est.ci_lo[i - 2].into(),
            est.ci_hi[i - 2].into(),
        ]);
    }
    let gof = est.chi_square_against(&prof.last_merger_law);
    ctx.summary.push(format!(
        "chi_square={} dof={} p_value={}",
        output::format_real(gof.statistic),
        gof.dof,
        output::format_real(gof.p_value)
    ));
    ctx.emit("last_merger.csv", &t)
}

fn invariant_config(ctx: &Ctx) -> InvariantConfig {
    InvariantConfig {
        tolerance: ctx.cfg.config.tolerance.unwrap_or(InvariantConfig::default().tolerance),
        size_guard: ctx.guard,
        ..InvariantConfig::default()
    }
}

fn schedule_and_cutoff(ctx: &Ctx) -> (Vec<usize>, usize) {
    let j = ctx.cfg.config.support_cutoff.unwrap_or(50);
    let schedule = ctx.cfg.config.n_schedule.clone().unwrap_or_else(|| vec![4 * j, 8 * j]);
    (schedule, j)
}

fn invariant(ctx: &mut Ctx) -> Result<()> {
    let spec = ctx.cfg.measure()?.clone();
    let (schedule, j) = schedule_and_cutoff(ctx);
    let est = invariant_from_profiles(&spec, &schedule, j, invariant_config(ctx))?;
    let mut t = Table::new(&["i", "mu_i", "mu_i_rho_i1"]);
    for i in 2..=j {
        t.push(vec![i.into(), est.mu_at(i).into(), est.limit_probs[i - 2].into()]);
    }
    let mut s = Table::new(&["property", "value"]);
    s.push(vec!["verdict".into(), est.verdict.to_string().into()]);
    s.push(vec!["sup_rel_diff".into(), est.sup_rel_diff.into()]);
    s.push(vec!["normalization".into(), est.normalization.into()]);
    s.push(vec!["tail_mass".into(), est.tail_mass.into()]);
    s.push(vec!["J".into(), j.into()]);
    s.push(vec![
        "n_schedule".into(),
        schedule.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" ").into(),
    ]);
    ctx.summary.push(format!(
        "verdict={} sup_rel_diff={}",
        est.verdict,
        output::format_real(est.sup_rel_diff)
    ));
    ctx.emit("invariant.csv", &t)?;
    ctx.emit("invariant_summary.csv", &s)
}

fn reverse(ctx: &mut Ctx) -> Result<()> {
    use coalescent_core::simulate_reversed;
    let spec = ctx.cfg.measure()?.clone();
    let (schedule, j) = schedule_and_cutoff(ctx);
    let est = invariant_from_profiles(&spec, &schedule, j, invariant_config(ctx))?;
    let rspec = build_reversed(&spec, &est)?;
    let n = ctx.cfg.config.n.unwrap_or(*schedule.last().expect("nonempty schedule"));
    let replicates = ctx.cfg.config.replicates.unwrap_or(10_000);
    let steps = ctx.cfg.config.steps.unwrap_or(2);
    let horizon = ctx.cfg.config.horizon.unwrap_or(1.0);
    let paths = ctx.cfg.config.paths.unwrap_or(20);
    let report = empirical_reversal_test(&spec, &rspec, n, replicates, steps, ctx.seed())?;

    let root = StreamSeed::new(ctx.seed()).with_label("reverse-paths");
    let mut t = Table::new(&["replica", "step", "state", "holding_time", "end"]);
    for r in 0..paths {
        let path = simulate_reversed(&rspec, horizon, &mut root.stream(r));
        let end = serde_json::to_value(path.end)?.as_str().unwrap_or_default().to_string();
        for (step, &state) in path.states.iter().enumerate() {
            let hold = path.holding_times.get(step).copied().unwrap_or(f64::NAN);
            t.push(vec![r.into(), step.into(), state.into(), hold.into(), end.clone().into()]);
        }
    }
    let mut s = Table::new(&["statistic", "value", "dof_or_samples", "p_value"]);
    s.push(vec![
        "states_chi_square".into(),
        report.states.statistic.into(),
        report.states.dof.into(),
        report.states.p_value.into(),
    ]);
    for (k, ks) in report.holding.iter().enumerate() {
        s.push(vec![
            format!("holding_ks_{k}").into(),
            ks.statistic.into(),
            ks.samples.into(),
            ks.p_value.into(),
        ]);
    }
    let identity = exit_rate_identity_error(&spec, &rspec);
    s.push(vec!["exit_rate_identity_error".into(), identity.into(), j.into(), f64::NAN.into()]);
    ctx.summary.push(format!(
        "reversal test n={n} r={steps}: min p-value {} (identity error {})",
        output::format_real(report.min_p_value()),
        output::format_real(identity)
    ));
    ctx.emit("reverse_paths.csv", &t)?;
    ctx.emit("reverse_summary.csv", &s)
}

fn couple(ctx: &mut Ctx) -> Result<()> {
    use rayon::prelude::*;
    let spec = ctx.cfg.measure()?.clone();
    let ns = match (&ctx.cfg.config.n_schedule, ctx.cfg.config.n) {
        (Some(s), _) => s.clone(),
        (None, Some(n)) => vec![n],
        (None, None) => bail!("config key `n` or `n_schedule` is required"),
    };
    let ks = ctx.cfg.config.k.as_ref().context("config key `k` is required")?.to_vec();
    let replicates = ctx.cfg.config.replicates.unwrap_or(1_000);
    let level = ctx.cfg.config.level.unwrap_or(0.9);
    let table = discrepancy_quantiles(&spec, &ns, &ks, replicates, level, ctx.seed())?;

    // Per-trace records use the same streams as the quantile table.
    let coupler = Coupler::new(&spec)?;
    let root = StreamSeed::new(ctx.seed()).with_label("coupling");
    let mut traces = Table::new(&[
        "n",
        "k",
        "replica",
        "sup_discrepancy",
        "sup_subordinator_discrepancy",
        "max_residual",
        "stop_time",
        "stop_state",
        "events",
    ]);
    for row in &table.rows {
        let cell = root.with_domain(((row.n as u64) << 32) ^ row.k as u64);
        let recs = (0..replicates)
            .into_par_iter()
            .map(|r| coupler.simulate(row.n, row.k, &mut cell.stream(r)).map(|tr| (r, tr)))
            .collect::<coalescent_core::Result<Vec<_>>>()?;
        for (r, tr) in recs {
            traces.push(vec![
                row.n.into(),
                row.k.into(),
                r.into(),
                tr.sup_discrepancy.into(),
                tr.sup_subordinator_discrepancy.into(),
                tr.max_residual.into(),
                tr.stop_time.into(),
                tr.stop_state.into(),
                tr.event_times.len().into(),
            ]);
        }
    }
    let mut q = Table::new(&[
        "n",
        "k",
        "replicates",
        "level",
        "quantile",
        "ci_lo",
        "ci_hi",
        "subordinator_quantile",
        "subordinator_ci_lo",
        "subordinator_ci_hi",
        "max_residual",
    ]);
    for r in &table.rows {
        q.push(vec![
            r.n.into(),
            r.k.into(),
            r.replicates.into(),
            r.level.into(),
            r.quantile.into(),
            r.ci_lo.into(),
            r.ci_hi.into(),
            r.subordinator_quantile.into(),
            r.subordinator_ci_lo.into(),
            r.subordinator_ci_hi.into(),
            r.max_residual.into(),
        ]);
    }
    ctx.summary.push(format!(
        "trend_within_ci={} trend_strict={} max_residual={}",
        table.trend_within_ci,
        table.trend_strict,
        output::format_real(table.max_residual)
    ));
    ctx.emit("couple_traces.csv", &traces)?;
    ctx.emit("couple_quantiles.csv", &q)
}

fn reference(ctx: &mut Ctx) -> Result<()> {
    let j = ctx.cfg.config.support_cutoff.unwrap_or(100);
    let (law, mu) = match ctx.cfg.config.alpha {
        Some(alpha) => (beta_limit_law(alpha, j)?, beta_mu_from_limit(alpha, j)?),
        None => {
            let spec = ctx
                .cfg
                .measure()
                .context("`reference` needs `alpha`, or a Kingman `measure`")?;
            if !(spec.atoms().is_empty() && spec.beta_component().is_none()) {
                bail!("`reference` without `alpha` supports only the Kingman measure");
            }
            let scale = spec.kingman_mass();
            let mu = kingman_invariant(j)?.into_iter().map(|m| m / scale).collect();
            (kingman_limit_law(j)?, mu)
        }
    };
    let mut t = Table::new(&["i", "prob", "mu_i"]);
    for i in 2..=j {
        t.push(vec![i.into(), law.prob(i).into(), mu[i - 2].into()]);
    }
    ctx.summary.push(format!("tail_bound={}", output::format_real(law.tail_bound)));
    ctx.emit("reference.csv", &t)
}

fn scan(ctx: &mut Ctx) -> Result<()> {
    let spec = ctx.cfg.measure()?.clone();
    let grid = ctx
        .cfg
        .config
        .lambda_grid
        .clone()
        .unwrap_or_else(|| vec![0.0, 0.25, 0.5, 0.75]);
    let ms = ctx.cfg.config.m_values.clone().unwrap_or_else(|| (3..=9).collect());
    let scan = lattice_scan(&spec, &grid, &ms, ctx.guard)?;
    let mut t = Table::new(&["lambda", "m", "n", "p_last_two"]);
    for r in &scan.rows {
        t.push(vec![r.lambda.into(), r.m.into(), r.n.into(), r.p_last_two.into()]);
    }
    let mut s = Table::new(&["m", "spread", "max_drift_from_previous_m"]);
    for (idx, &m) in scan.m_values.iter().enumerate() {
        let drift = if idx == 0 {
            f64::NAN
        } else {
            scan.max_drift(scan.m_values[idx - 1], m).expect("both m present")
        };
        s.push(vec![m.into(), scan.spread(m).expect("m present").into(), drift.into()]);
    }
    let last = *scan.m_values.last().expect("nonempty");
    ctx.summary.push(format!(
        "spread at m={last}: {}",
        output::format_real(scan.spread(last).expect("m present"))
    ));
    ctx.emit("lattice_scan.csv", &t)?;
    ctx.emit("lattice_summary.csv", &s)
}

/// Maps an error to the process exit code: 3 for failed module
/// preconditions, 4 for the size guard, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<coalescent_core::Error>() {
        Some(coalescent_core::Error::Precondition { .. }) => 3,
        Some(coalescent_core::Error::SizeGuard { .. }) => 4,
        _ => 1,
    }
}
