//! Analytic test landscapes and overdamped Langevin dynamics.
//!
//! These low-dimensional potentials have closed-form Gibbs distributions,
//! which makes them the ground truth for validating the exchange machinery:
//! a sampler that claims detailed balance has to reproduce
//! `P(w) ∝ exp(-β L(w))` on them, bin by bin.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Anything with a value and an exact gradient on a flat weight vector.
pub trait Objective {
    /// Dimension of the weight vector.
    fn dim(&self) -> usize;
    /// Loss (energy) at `w`.
    fn value(&self, w: &[f64]) -> f64;
    /// Gradient at `w`, written into `out` (`out.len() == dim()`).
    fn grad_into(&self, w: &[f64], out: &mut [f64]);

    /// Convenience allocation-returning gradient.
    fn grad(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.grad_into(w, &mut out);
        out
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LandscapeError {
    #[error("potential parameter {name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("weight vector has dimension {got}, potential expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("langevin step size must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("langevin temperature must be nonnegative, got {0}")]
    NegativeTemperature(f64),
}

/// A closed-form test potential. The supported shapes:
///
/// * `Quadratic { curvature: a }` — `L(w) = a/2 · w²` in one dimension. Its
///   Gibbs distribution at inverse temperature `β` is a centered Gaussian
///   with variance `1/(aβ)`.
/// * `DoubleWell1d { barrier: h }` — `L(w) = h · (w² − 1)²`, two minima at
///   `w = ±1` separated by a barrier of height `h` at the origin.
/// * `DoubleWell2d { barrier: h, anisotropy }` — the 1-d double well in `x`
///   plus a quadratic confinement `anisotropy/2 · y²` in `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticPotential {
    Quadratic { curvature: f64 },
    DoubleWell1d { barrier: f64 },
    DoubleWell2d { barrier: f64, anisotropy: f64 },
}

impl AnalyticPotential {
    /// Validates the shape parameters.
    pub fn validate(&self) -> Result<(), LandscapeError> {
        let check = |name: &'static str, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(LandscapeError::NonPositiveParameter { name, value })
            }
        };
        match *self {
            AnalyticPotential::Quadratic { curvature } => check("curvature", curvature),
            AnalyticPotential::DoubleWell1d { barrier } => check("barrier", barrier),
            AnalyticPotential::DoubleWell2d { barrier, anisotropy } => {
                check("barrier", barrier)?;
                check("anisotropy", anisotropy)
            }
        }
    }

    /// Checks that `w` has the dimension this potential expects.
    pub fn check_dim(&self, w: &[f64]) -> Result<(), LandscapeError> {
        if w.len() == self.dim() {
            Ok(())
        } else {
            Err(LandscapeError::DimensionMismatch { expected: self.dim(), got: w.len() })
        }
    }
}

impl Objective for AnalyticPotential {
    fn dim(&self) -> usize {
        match self {
            AnalyticPotential::Quadratic { .. } | AnalyticPotential::DoubleWell1d { .. } => 1,
            AnalyticPotential::DoubleWell2d { .. } => 2,
        }
    }

    fn value(&self, w: &[f64]) -> f64 {
        debug_assert_eq!(w.len(), self.dim());
        match *self {
            AnalyticPotential::Quadratic { curvature } => 0.5 * curvature * w[0] * w[0],
            AnalyticPotential::DoubleWell1d { barrier } => {
                let s = w[0] * w[0] - 1.0;
                barrier * s * s
            }
            AnalyticPotential::DoubleWell2d { barrier, anisotropy } => {
                let s = w[0] * w[0] - 1.0;
                barrier * s * s + 0.5 * anisotropy * w[1] * w[1]
            }
        }
    }

    fn grad_into(&self, w: &[f64], out: &mut [f64]) {
        debug_assert_eq!(w.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        match *self {
            AnalyticPotential::Quadratic { curvature } => out[0] = curvature * w[0],
            AnalyticPotential::DoubleWell1d { barrier } => {
                out[0] = 4.0 * barrier * w[0] * (w[0] * w[0] - 1.0);
            }
            AnalyticPotential::DoubleWell2d { barrier, anisotropy } => {
                out[0] = 4.0 * barrier * w[0] * (w[0] * w[0] - 1.0);
                out[1] = anisotropy * w[1];
            }
        }
    }
}

/// Parameters of the Euler–Maruyama discretization of overdamped Langevin
/// dynamics: `w' = w − step·∇L(w) + √(2·temperature·step)·ξ`, `ξ ~ N(0, I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LangevinConfig {
    /// Temperature of the thermal noise; `0` reduces the step to plain
    /// gradient descent.
    pub temperature: f64,
    /// Integration step size.
    pub step: f64,
}

impl LangevinConfig {
    pub fn validate(&self) -> Result<(), LandscapeError> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(LandscapeError::NonPositiveStep(self.step));
        }
        if self.temperature < 0.0 || !self.temperature.is_finite() {
            return Err(LandscapeError::NegativeTemperature(self.temperature));
        }
        Ok(())
    }
}

/// Advances `w` by one Euler–Maruyama step in place. Gaussian noise is drawn
/// per coordinate, in coordinate order, so the consumed RNG stream is a pure
/// function of the dimension. At `temperature == 0` no noise is drawn at all
/// and the update is exactly deterministic gradient descent.
pub fn langevin_step<O, R>(
    w: &mut [f64],
    objective: &O,
    cfg: &LangevinConfig,
    scratch: &mut [f64],
    rng: &mut R,
) -> Result<(), LandscapeError>
where
    O: Objective + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    if w.len() != objective.dim() {
        return Err(LandscapeError::DimensionMismatch { expected: objective.dim(), got: w.len() });
    }
    objective.grad_into(w, scratch);
    let noise_scale = (2.0 * cfg.temperature * cfg.step).sqrt();
    for (wi, gi) in w.iter_mut().zip(scratch.iter()) {
        *wi -= cfg.step * *gi;
        if noise_scale > 0.0 {
            let xi: f64 = rng.sample(StandardNormal);
            *wi += noise_scale * xi;
        }
    }
    Ok(())
}
