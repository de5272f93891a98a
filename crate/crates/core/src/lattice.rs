//! Exact P(L_n = 2) along geometric sequences n = round(e^(λ+m)), which
//! exposes the periodic, non-vanishing oscillation of the law of L_n for
//! measures carried by a geometric lattice.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{absorption_profile_guarded, SizeGuard};
use crate::error::{precondition, Error, Result};
use crate::measure::{check_conditions, LambdaSpec, LatticeVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeScanRow {
    pub lambda: f64,
    pub m: u32,
    pub n: usize,
    pub p_last_two: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeScan {
    pub lambda_grid: Vec<f64>,
    pub m_values: Vec<u32>,
    /// Sorted by m, then by position in the λ grid.
    pub rows: Vec<LatticeScanRow>,
}

impl LatticeScan {
    fn value(&self, lambda_idx: usize, m: u32) -> Option<f64> {
        let mi = self.m_values.iter().position(|&x| x == m)?;
        Some(self.rows[mi * self.lambda_grid.len() + lambda_idx].p_last_two)
    }

    /// max − min of P(L_n = 2) across the λ grid at fixed m.
    pub fn spread(&self, m: u32) -> Option<f64> {
        let vals: Option<Vec<f64>> = (0..self.lambda_grid.len()).map(|l| self.value(l, m)).collect();
        let vals = vals?;
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        Some(hi - lo)
    }

    /// |P(L_n = 2) at m1 − at m0| for each λ.
    pub fn drifts(&self, m0: u32, m1: u32) -> Option<Vec<f64>> {
        (0..self.lambda_grid.len())
            .map(|l| Some((self.value(l, m1)? - self.value(l, m0)?).abs()))
            .collect()
    }

    /// Largest within-λ drift between m0 and m1.
    pub fn max_drift(&self, m0: u32, m1: u32) -> Option<f64> {
        Some(self.drifts(m0, m1)?.into_iter().fold(0.0, f64::max))
    }
}

/// Runs the scan for a purely atomic measure that is not known to be
/// log-nonlattice.
pub fn lattice_scan(spec: &LambdaSpec, lambda_grid: &[f64], m_values: &[u32], guard: SizeGuard) -> Result<LatticeScan> {
    if !spec.is_purely_atomic() {
        return Err(precondition("lattice-scan", "the measure must be purely atomic (no Kingman or Beta part)"));
    }
    if check_conditions(spec)?.log_nonlattice == LatticeVerdict::Yes {
        return Err(precondition("lattice-scan", "the measure is log-nonlattice; there is no oscillation to scan"));
    }
    if lambda_grid.is_empty() || m_values.is_empty() {
        return Err(Error::InvalidArgument("λ grid and m range must be nonempty".into()));
    }
    let mut ms = m_values.to_vec();
    ms.sort_unstable();
    ms.dedup();
    let cells: Vec<(u32, f64)> = ms
        .iter()
        .flat_map(|&m| lambda_grid.iter().map(move |&l| (m, l)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(m, lambda)| {
            let n = (lambda + m as f64).exp().round() as usize;
            if n < 2 {
                return Err(Error::InvalidArgument(format!("n = round(e^({lambda} + {m})) is below 2")));
            }
            let profile = absorption_profile_guarded(spec, n, guard)?;
            Ok(LatticeScanRow {
                lambda,
                m,
                n,
                p_last_two: profile.last_merger(2),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LatticeScan {
        lambda_grid: lambda_grid.to_vec(),
        m_values: ms,
        rows,
    })
}
