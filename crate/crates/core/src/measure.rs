//! The driving measure Λ on [0, 1] and its structural conditions.
//!
//! Supported measures are a Kingman atom at 0, a finite list of atoms in
//! (0, 1], and one scaled Beta(a, b) density. Every integral the rest of the
//! crate needs is either closed-form or a one-dimensional quadrature against
//! the Beta density for this class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{digamma, ln_beta};

/// A point mass of Λ at `position` in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub position: f64,
    pub mass: f64,
}

/// `scale × Beta(a, b)` density on (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaComponent {
    pub a: f64,
    pub b: f64,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl BetaComponent {
    /// `ln(scale / B(a, b))`, the log normalisation of the density.
    pub fn ln_norm(&self) -> f64 {
        self.scale.ln() - ln_beta(self.a, self.b)
    }

    fn is_active(&self) -> bool {
        self.scale > 0.0
    }
}

/// A nonzero finite measure Λ on [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureJson", into = "MeasureJson")]
pub struct LambdaSpec {
    kingman_mass: f64,
    atoms: Vec<Atom>,
    beta: Option<BetaComponent>,
    total_mass: f64,
}

impl LambdaSpec {
    /// Validates and assembles a measure. Atoms are sorted by position;
    /// duplicate positions are rejected.
    pub fn new(kingman_mass: f64, atoms: Vec<Atom>, beta: Option<BetaComponent>) -> Result<Self> {
        if !(kingman_mass.is_finite() && kingman_mass >= 0.0) {
            return Err(Error::InvalidMeasure(format!(
                "Kingman mass must be finite and nonnegative, got {kingman_mass}"
            )));
        }
        let mut atoms = atoms;
        for atom in &atoms {
            if !(atom.position > 0.0 && atom.position <= 1.0) {
                return Err(Error::InvalidMeasure(format!(
                    "atom position {} outside (0, 1]",
                    atom.position
                )));
            }
            if !(atom.mass.is_finite() && atom.mass > 0.0) {
                return Err(Error::InvalidMeasure(format!(
                    "atom at {} has non-positive mass {}",
                    atom.position, atom.mass
                )));
            }
        }
        atoms.sort_by(|x, y| x.position.total_cmp(&y.position));
        if atoms.windows(2).any(|w| w[0].position == w[1].position) {
            return Err(Error::InvalidMeasure("atom positions must be distinct".into()));
        }
        if let Some(beta) = &beta {
            if !(beta.a > 0.0 && beta.b > 0.0 && beta.a.is_finite() && beta.b.is_finite()) {
                return Err(Error::InvalidMeasure(format!(
                    "Beta parameters must be positive, got ({}, {})",
                    beta.a, beta.b
                )));
            }
            if !(beta.scale.is_finite() && beta.scale >= 0.0) {
                return Err(Error::InvalidMeasure(format!(
                    "Beta scale must be finite and nonnegative, got {}",
                    beta.scale
                )));
            }
        }
        let total_mass = kingman_mass
            + atoms.iter().map(|a| a.mass).sum::<f64>()
            + beta.map_or(0.0, |b| b.scale);
        if !(total_mass > 0.0) {
            return Err(Error::InvalidMeasure("Λ must be a nonzero measure".into()));
        }
        Ok(Self {
            kingman_mass,
            atoms,
            beta,
            total_mass,
        })
    }

    /// Λ = m·δ₀.
    pub fn kingman(mass: f64) -> Result<Self> {
        Self::new(mass, Vec::new(), None)
    }

    /// Λ = Beta(a, b) with unit mass.
    pub fn beta(a: f64, b: f64) -> Result<Self> {
        Self::new(0.0, Vec::new(), Some(BetaComponent { a, b, scale: 1.0 }))
    }

    /// Λ = Beta(2 − α, α), α ∈ (0, 2).
    pub fn beta_alpha(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::InvalidArgument(format!("α must lie in (0, 2), got {alpha}")));
        }
        Self::beta(2.0 - alpha, alpha)
    }

    /// Eldon–Wakeley measure Λ = p²·δ_p.
    pub fn eldon_wakeley(p: f64) -> Result<Self> {
        Self::atomic(&[(p, p * p)])
    }

    /// Star coalescent: all mass at p = 1.
    pub fn star(mass: f64) -> Result<Self> {
        Self::atomic(&[(1.0, mass)])
    }

    /// Purely atomic measure from `(position, mass)` pairs.
    pub fn atomic(atoms: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            0.0,
            atoms
                .iter()
                .map(|&(position, mass)| Atom { position, mass })
                .collect(),
            None,
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidMeasure(e.to_string()))
    }

    pub fn kingman_mass(&self) -> f64 {
        self.kingman_mass
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// The Beta component, if present with positive scale.
    pub fn beta_component(&self) -> Option<&BetaComponent> {
        self.beta.as_ref().filter(|b| b.is_active())
    }

    /// Λ([0, 1]).
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Λ((0, 1]).
    pub fn mass_away_from_zero(&self) -> f64 {
        self.total_mass - self.kingman_mass
    }

    /// True when Λ has no Kingman atom and no Beta component.
    pub fn is_purely_atomic(&self) -> bool {
        self.kingman_mass == 0.0 && self.beta_component().is_none() && !self.atoms.is_empty()
    }

    pub fn has_unit_atom(&self) -> bool {
        self.atoms.last().is_some_and(|a| a.position == 1.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureJson {
    #[serde(default)]
    kingman: f64,
    #[serde(default)]
    atoms: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<BetaComponent>,
}

impl TryFrom<MeasureJson> for LambdaSpec {
    type Error = Error;

    fn try_from(raw: MeasureJson) -> Result<Self> {
        LambdaSpec::new(
            raw.kingman,
            raw.atoms
                .into_iter()
                .map(|(position, mass)| Atom { position, mass })
                .collect(),
            raw.beta,
        )
    }
}

impl From<LambdaSpec> for MeasureJson {
    fn from(spec: LambdaSpec) -> Self {
        MeasureJson {
            kingman: spec.kingman_mass,
            atoms: spec.atoms.iter().map(|a| (a.position, a.mass)).collect(),
            beta: spec.beta,
        }
    }
}

/// Outcome of the log-nonlattice test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeVerdict {
    /// Λ is log-nonlattice.
    Yes,
    /// A lattice {1 − e^(−zd)} carries all mass of Λ on (0, 1].
    No,
    /// The numeric commensurability test was inconclusive.
    Undecided,
}

/// Integrability and structure flags of Λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub has_dust: bool,
    pub log_condition: bool,
    /// ∫ |log(1 − p)| Λ(dp)
    pub log_one_minus_p_integral: f64,
    /// ∫ p⁻¹ Λ(dp)
    pub inverse_p_integral: f64,
    /// ∫ p⁻² Λ(dp)
    pub intensity_integral: f64,
    pub log_nonlattice: LatticeVerdict,
    /// Λ has an atom at p = 1.
    pub unit_atom: bool,
}

/// Decides the integrability conditions symbolically for the supported class.
pub fn check_conditions(spec: &LambdaSpec) -> Result<ConditionReport> {
    if !(spec.total_mass() > 0.0) {
        return Err(Error::InvalidMeasure("Λ must be a nonzero measure".into()));
    }
    let beta = spec.beta_component();

    let mut log_integral = 0.0;
    let mut inverse_p = 0.0;
    let mut intensity = 0.0;
    for atom in spec.atoms() {
        log_integral += atom.mass * -(-atom.position).ln_1p();
        inverse_p += atom.mass / atom.position;
        intensity += atom.mass / (atom.position * atom.position);
    }
    if spec.kingman_mass() > 0.0 {
        inverse_p = f64::INFINITY;
        intensity = f64::INFINITY;
    }
    if let Some(b) = beta {
        // E[-log(1 - X)] = ψ(a + b) − ψ(b) for X ~ Beta(a, b)
        log_integral += b.scale * (digamma(b.a + b.b) - digamma(b.b));
        inverse_p += if b.a > 1.0 {
            b.scale * (b.a + b.b - 1.0) / (b.a - 1.0)
        } else {
            f64::INFINITY
        };
        intensity += if b.a > 2.0 {
            b.scale * (b.a + b.b - 1.0) * (b.a + b.b - 2.0) / ((b.a - 1.0) * (b.a - 2.0))
        } else {
            f64::INFINITY
        };
    }

    Ok(ConditionReport {
        has_dust: inverse_p.is_finite(),
        log_condition: log_integral.is_finite(),
        log_one_minus_p_integral: log_integral,
        inverse_p_integral: inverse_p,
        intensity_integral: intensity,
        log_nonlattice: lattice_verdict(spec),
        unit_atom: spec.has_unit_atom(),
    })
}

const LATTICE_TOLERANCE: f64 = 1e-9;
const LATTICE_MAX_DENOMINATOR: u64 = 1_000_000;

fn lattice_verdict(spec: &LambdaSpec) -> LatticeVerdict {
    if spec.mass_away_from_zero() <= 0.0 {
        // Σ Λ({1 − e^(−zd)}) = 0 = Λ((0, 1]) for every d.
        return LatticeVerdict::No;
    }
    // A density or an atom at 1 is never carried by a lattice.
    if spec.beta_component().is_some() || spec.has_unit_atom() {
        return LatticeVerdict::Yes;
    }
    let logs: Vec<f64> = spec
        .atoms()
        .iter()
        .map(|a| -(-a.position).ln_1p())
        .collect();
    let base = logs[0];
    let mut grid = 1u64;
    for &x in &logs[1..] {
        let ratio = x / base;
        let Some((num, den)) = best_rational(ratio, LATTICE_MAX_DENOMINATOR) else {
            return LatticeVerdict::Undecided;
        };
        if (ratio - num as f64 / den as f64).abs() > LATTICE_TOLERANCE {
            return LatticeVerdict::Undecided;
        }
        grid = lcm(grid, den);
        if grid > LATTICE_MAX_DENOMINATOR {
            return LatticeVerdict::Undecided;
        }
    }
    LatticeVerdict::No
}

/// Last continued-fraction convergent of `x > 0` with denominator ≤ `max_den`.
fn best_rational(x: f64, max_den: u64) -> Option<(u64, u64)> {
    if !(x.is_finite() && x > 0.0) {
        return None;
    }
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut rest = x;
    for _ in 0..64 {
        let a = rest.floor();
        if a > u32::MAX as f64 {
            break;
        }
        let a = a as u64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = rest - a as f64;
        if frac < 1e-15 {
            break;
        }
        rest = 1.0 / frac;
    }
    (k1 > 0).then_some((h1, k1))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}
