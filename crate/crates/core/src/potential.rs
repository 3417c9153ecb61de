//! Smoothed uniform norm `V_β(z) = β ln(Σ cosh(z_i/β)) − β ln d` and the
//! gain sequences `(β_ℓ)` that drive sampling bounds and the greedy engine.
//!
//! `V_β` is convex, sandwiched as `‖z‖∞ − β ln(2d) ≤ V_β(z) ≤ ‖z‖∞`,
//! nonincreasing in β, and its gradient is `1/β`-Lipschitz from `‖·‖∞` to
//! `‖·‖₁` with `‖∇V_β‖₁ ≤ 1`.
//!
//! Matrix arguments are flattened row-major, so an `n × n` matrix gives
//! `d = n²` and `ln(2d) = ln(2n²)`.

use serde::{Deserialize, Serialize};

use crate::error::{dim, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialParams {
    pub beta: f64,
    pub d: usize,
}

impl PotentialParams {
    pub fn new(beta: f64, d: usize) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Precondition(format!("beta must be positive, got {beta}")));
        }
        if d == 0 {
            return Err(Error::Precondition("d must be at least 1".into()));
        }
        Ok(Self { beta, d })
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.d {
            return Err(dim(format!("expected length {}, got {}", self.d, z.len())));
        }
        Ok(())
    }
}

pub fn v_beta(z: &[f64], p: PotentialParams) -> Result<f64> {
    p.check(z)?;
    Ok(smooth_max(z, p.beta))
}

pub fn v_beta_grad(z: &[f64], p: PotentialParams) -> Result<Vec<f64>> {
    p.check(z)?;
    let mut g = vec![0.0; z.len()];
    smooth_max_grad(z, p.beta, &mut g);
    Ok(g)
}

/// `V_β(z)` for `d = z.len()`, evaluated as
/// `M + β ln(Σ e^{(|z_i|−M)/β}(1 + e^{−2|z_i|/β})/2) − β ln d` with
/// `M = max |z_i|`, which never overflows.
pub(crate) fn smooth_max(z: &[f64], beta: f64) -> f64 {
    let m = crate::matrix::max_abs(z);
    if m == 0.0 {
        return 0.0;
    }
    let sum: f64 = z
        .iter()
        .map(|&x| {
            let a = x.abs();
            ((a - m) / beta).exp() * 0.5 * (1.0 + (-2.0 * a / beta).exp())
        })
        .sum();
    let v = m + beta * (sum / z.len() as f64).ln();
    v.max(0.0)
}

/// Writes `∇V_β(z)` into `out` and returns `V_β(z)`.
///
/// Component `i` is `sinh(z_i/β) / Σ_j cosh(z_j/β)`, computed with the same
/// shift as [`smooth_max`]; the denominator is at least 1/2 after shifting.
pub(crate) fn smooth_max_grad(z: &[f64], beta: f64, out: &mut [f64]) -> f64 {
    debug_assert_eq!(z.len(), out.len());
    let m = crate::matrix::max_abs(z);
    if m == 0.0 {
        out.iter_mut().for_each(|g| *g = 0.0);
        return 0.0;
    }
    let mut denom = 0.0;
    for (g, &x) in out.iter_mut().zip(z) {
        let a = x.abs();
        let e = ((a - m) / beta).exp();
        let tail = (-2.0 * a / beta).exp();
        denom += e * 0.5 * (1.0 + tail);
        // sinh keeps the sign of x
        *g = e * 0.5 * (1.0 - tail) * x.signum();
    }
    out.iter_mut().for_each(|g| *g /= denom);
    (m + beta * (denom / z.len() as f64).ln()).max(0.0)
}

/// Partial derivative of `β ↦ β·ln(2d) + V_β(z)`.
///
/// Equals `ln(2d) + (V_β(z) − ⟨z, ∇V_β(z)⟩)/β`, which is never negative.
pub(crate) fn joint_beta_derivative(z: &[f64], beta: f64, scratch: &mut [f64]) -> f64 {
    let v = smooth_max_grad(z, beta, scratch);
    let zg: f64 = z.iter().zip(scratch.iter()).map(|(a, b)| a * b).sum();
    (2.0 * z.len() as f64).ln() + (v - zg) / beta
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// `β_ℓ = L√(2k/ln 2d)` for a known horizon `k`.
    Fixed,
    /// `β_0 = 2L²/ln 2d`, `β_ℓ = β_{ℓ−1} + 2L²/(ln(2d) β_{ℓ−1})`.
    Recursive,
    /// `β_ℓ = 2L√((ℓ+1)/ln 2d)`.
    Closed,
    /// β is re-optimized every step; the closed form serves as the
    /// reference and starting value.
    Joint,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "recursive" => Ok(Self::Recursive),
            "closed" => Ok(Self::Closed),
            "joint" => Ok(Self::Joint),
            other => Err(Error::Validation(format!("unknown schedule {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub kind: ScheduleKind,
    pub l: f64,
    pub d: usize,
    pub horizon: Option<usize>,
}

impl BetaSchedule {
    pub fn new(kind: ScheduleKind, l: f64, d: usize, horizon: Option<usize>) -> Result<Self> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::Precondition(format!("L must be positive, got {l}")));
        }
        if d == 0 {
            return Err(Error::Precondition("d must be at least 1".into()));
        }
        if kind == ScheduleKind::Fixed && !matches!(horizon, Some(k) if k > 0) {
            return Err(Error::Precondition("fixed schedule needs a positive horizon".into()));
        }
        Ok(Self { kind, l, d, horizon })
    }

    fn log2d(&self) -> f64 {
        (2.0 * self.d as f64).ln()
    }

    /// Value following `prev = β_{ell−1}`; lets callers walk the recursive
    /// rule in O(1) per step.
    pub fn next_after(&self, prev: f64, ell: usize) -> f64 {
        match self.kind {
            ScheduleKind::Recursive => prev + 2.0 * self.l * self.l / (self.log2d() * prev),
            _ => self.closed_or_fixed(ell),
        }
    }

    fn closed_or_fixed(&self, ell: usize) -> f64 {
        match self.kind {
            ScheduleKind::Fixed => {
                let k = self.horizon.expect("validated at construction") as f64;
                self.l * (2.0 * k / self.log2d()).sqrt()
            }
            _ => 2.0 * self.l * ((ell as f64 + 1.0) / self.log2d()).sqrt(),
        }
    }
}

/// `β_ℓ` of the schedule.
pub fn beta_at(s: &BetaSchedule, ell: usize) -> Result<f64> {
    if s.kind == ScheduleKind::Fixed && s.horizon.is_none() {
        return Err(Error::Precondition("fixed schedule needs a horizon".into()));
    }
    Ok(match s.kind {
        ScheduleKind::Recursive => {
            let mut b = 2.0 * s.l * s.l / s.log2d();
            for e in 1..=ell {
                b = s.next_after(b, e);
            }
            b
        }
        _ => s.closed_or_fixed(ell),
    })
}
