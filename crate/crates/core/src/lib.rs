//! Block-counting dynamics of Λ-coalescents: merger rates, exact absorption
//! profiles, Monte Carlo paths, the invariant measure seen from the
//! absorbing state, the time-reversed chain, and the drift coupling.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod coupling;
pub mod error;
pub mod invariant;
pub mod lattice;
pub mod measure;
pub mod quad;
pub mod rates;
pub mod reference;
pub mod reversal;
pub mod rng;
pub mod special;
pub mod stats;

pub use chain::{
    absorption_profile, absorption_profile_guarded, first_passage_stats, last_merger_mc, simulate_path,
    AbsorptionProfile, FirstPassage, JumpSampler, LastMergerEstimate, PathRecord, SizeGuard, DP_SIZE_LIMIT,
};
pub use coupling::{discrepancy_quantiles, simulate_coupled, Coupler, CouplingTrace, DiscrepancyTable, QuantileRow};
pub use error::{Error, Result};
pub use invariant::{
    invariant_from_profiles, profile_balance_residual, residual_check, InvariantConfig, InvariantEstimate,
    InvariantVerdict, ResidualReport,
};
pub use lattice::{lattice_scan, LatticeScan, LatticeScanRow};
pub use measure::{check_conditions, Atom, BetaComponent, ConditionReport, LambdaSpec, LatticeVerdict};
pub use rates::{drift_f, lambda_bk, ln_lambda_bk, rate_row, DriftFunction, RateEngine, RateRow};
pub use reference::{beta_limit_law, beta_mu_from_limit, kingman_invariant, kingman_limit_law, LimitFamily, LimitLaw};
pub use reversal::{
    build_reversed, empirical_reversal_test, exit_rate_identity_error, simulate_reversed, ReversalTestReport,
    ReversedChainSpec, ReversedEnd, ReversedPath,
};
pub use rng::{StreamRng, StreamSeed};
