//! Ground-truth verification on analytic potentials: exact Gibbs densities
//! on uniform grids, total-variation distance against sampled chains, and
//! mixing diagnostics (well transitions, ladder round trips, integrated
//! autocorrelation of the coldest chain).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landscape::{AnalyticPotential, Objective};
use crate::tempering::{ExchangeEvent, PtOutcome, SlotAssignment, WeightTrace};

/// Fraction of early samples discarded before any distributional check.
pub const DEFAULT_BURN_IN: f64 = 0.2;

#[derive(Debug, Error)]
pub enum GibbsError {
    #[error("β must be positive and finite, got {0}")]
    BadBeta(f64),
    #[error("domain [{lo}, {hi}] is not a finite nonempty interval")]
    BadDomain { lo: f64, hi: f64 },
    #[error("a density grid needs at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("density grids are one-dimensional but the potential has dimension {0}")]
    NotOneDimensional(usize),
    #[error("e^{{−βL}} is not normalizable on this domain")]
    NonNormalizable,
    #[error("no samples accumulated")]
    ZeroSamples,
    #[error("step budgets differ: {pt} vs {baseline}")]
    BudgetMismatch { pt: u64, baseline: u64 },
    #[error("ladder widths differ: {pt} vs {baseline}")]
    LadderWidthMismatch { pt: usize, baseline: usize },
    #[error("the {0} run recorded no weight trace")]
    MissingTrace(&'static str),
    #[error("series too short for autocorrelation analysis ({0} points)")]
    SeriesTooShort(usize),
}

/// A uniform 1-D binning of `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n_bins: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { lo: -3.0, hi: 3.0, n_bins: 200 }
    }
}

impl GridSpec {
    fn validate(&self) -> Result<(), GibbsError> {
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(GibbsError::BadDomain { lo: self.lo, hi: self.hi });
        }
        if self.n_bins < 2 {
            return Err(GibbsError::TooFewBins(self.n_bins));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n_bins as f64
    }

    pub fn center(&self, bin: usize) -> f64 {
        self.lo + (bin as f64 + 0.5) * self.width()
    }
}

/// An exact Gibbs density tabulated per bin plus empirical sample counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub spec: GridSpec,
    /// Normalized density per bin: Σ density·width = 1.
    pub density: Vec<f64>,
    pub counts: Vec<u64>,
}

impl DensityGrid {
    /// Analytic probability mass of one bin.
    pub fn mass(&self, bin: usize) -> f64 {
        self.density[bin] * self.spec.width()
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bins each sample and increments its count; out-of-domain samples are
    /// clamped to the edge bins so totals stay comparable.
    pub fn accumulate<I: IntoIterator<Item = f64>>(&mut self, samples: I) {
        let width = self.spec.width();
        let top = self.spec.n_bins - 1;
        for x in samples {
            let bin = if x.is_nan() {
                top
            } else {
                (((x - self.spec.lo) / width).floor() as i64).clamp(0, top as i64) as usize
            };
            self.counts[bin] += 1;
        }
    }
}

/// Tabulates P(w) = e^{−β·L(w)}/Z over the grid, with Z from composite
/// trapezoid quadrature at the bin edges. The domain is the caller's
/// responsibility: mass outside it is silently truncated, so choose bounds
/// wide enough for the tolerance in play.
pub fn analytic_gibbs(
    potential: &AnalyticPotential,
    beta: f64,
    spec: GridSpec,
) -> Result<DensityGrid, GibbsError> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(GibbsError::BadBeta(beta));
    }
    spec.validate()?;
    if potential.dim() != 1 {
        return Err(GibbsError::NotOneDimensional(potential.dim()));
    }
    let width = spec.width();
    let edge_values: Vec<f64> = (0..=spec.n_bins)
        .map(|j| {
            let x = spec.lo + j as f64 * width;
            (-beta * potential.value(&[x])).exp()
        })
        .collect();
    if edge_values.iter().any(|f| !f.is_finite()) {
        return Err(GibbsError::NonNormalizable);
    }
    let raw_mass: Vec<f64> =
        (0..spec.n_bins).map(|i| 0.5 * (edge_values[i] + edge_values[i + 1]) * width).collect();
    let z: f64 = raw_mass.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(GibbsError::NonNormalizable);
    }
    let density: Vec<f64> = raw_mass.iter().map(|m| m / (z * width)).collect();
    Ok(DensityGrid { spec, density, counts: vec![0; spec.n_bins] })
}

/// Total-variation distance ½ Σ |empirical frequency − analytic mass|.
pub fn tv_distance(grid: &DensityGrid) -> Result<f64, GibbsError> {
    let total = grid.total_count();
    if total == 0 {
        return Err(GibbsError::ZeroSamples);
    }
    let total = total as f64;
    let mut sum = 0.0;
    for (i, &c) in grid.counts.iter().enumerate() {
        sum += (c as f64 / total - grid.mass(i)).abs();
    }
    Ok(0.5 * sum)
}

/// Drops the leading `fraction` of a sample series (burn-in).
pub fn burn_in<T>(samples: &[T], fraction: f64) -> &[T] {
    let cut = ((samples.len() as f64) * fraction.clamp(0.0, 1.0)).floor() as usize;
    &samples[cut.min(samples.len())..]
}

/// Sokal's windowed estimate of the integrated autocorrelation time:
/// τ = 1 + 2 Σ_{k≤W} ρ_k with the window W chosen self-consistently as the
/// first lag where W ≥ 6τ(W), capped at a fifth of the series.
pub fn integrated_autocorrelation(series: &[f64]) -> Result<f64, GibbsError> {
    let n = series.len();
    if n < 10 {
        return Err(GibbsError::SeriesTooShort(n));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let c0 = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return Ok(1.0);
    }
    let max_lag = (n / 5).max(1);
    let mut tau = 1.0;
    let mut lag = 1;
    while lag <= max_lag {
        let mut ck = 0.0;
        for i in 0..n - lag {
            ck += (series[i] - mean) * (series[i + lag] - mean);
        }
        ck /= n as f64;
        tau += 2.0 * ck / c0;
        if (lag as f64) >= 6.0 * tau {
            break;
        }
        lag += 1;
    }
    Ok(tau)
}

/// Counts strict sign changes along a series.
pub fn sign_changes(series: &[f64]) -> u64 {
    series.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count() as u64
}

/// Round trips per replica: one trip is a strict walk of that replica's
/// slot assignment from the coldest rung to the hottest and back to the
/// coldest, counted by replaying the accepted exchanges.
pub fn round_trips_per_replica(m: usize, events: &[ExchangeEvent]) -> Vec<u64> {
    #[derive(Clone, Copy, PartialEq)]
    enum Phase {
        Neutral,
        Outbound,
        Returning,
    }
    let coldest = m - 1;
    let hottest = 0;
    let mut phase = vec![Phase::Neutral; m];
    let mut trips = vec![0u64; m];
    let touch = |replica: usize, slot: usize, phase: &mut Vec<Phase>, trips: &mut Vec<u64>| {
        if slot == coldest {
            if phase[replica] == Phase::Returning {
                trips[replica] += 1;
            }
            phase[replica] = Phase::Outbound;
        } else if slot == hottest && phase[replica] == Phase::Outbound {
            phase[replica] = Phase::Returning;
        }
    };
    let mut assignment = SlotAssignment::identity(m);
    for r in 0..m {
        touch(r, r, &mut phase, &mut trips);
    }
    for e in events.iter().filter(|e| e.accepted) {
        assignment.swap_slots(e.slot_a, e.slot_b);
        touch(e.replica_a, assignment.slot_of(e.replica_a), &mut phase, &mut trips);
        touch(e.replica_b, assignment.slot_of(e.replica_b), &mut phase, &mut trips);
    }
    trips
}

/// Mixing diagnostics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingSide {
    /// Sign changes of coordinate 0 along each replica's own trajectory.
    pub per_replica_transitions: Vec<u64>,
    /// Sign changes of coordinate 0 along each slot's chain (whoever holds
    /// the slot).
    pub per_slot_transitions: Vec<u64>,
    /// Coldest-to-hottest-and-back trips per replica.
    pub round_trips: Vec<u64>,
    /// Integrated autocorrelation time of the coldest slot's energy.
    pub coldest_energy_iat: f64,
}

/// Paired mixing diagnostics: exchanges on vs the matched no-exchange twin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub total_steps: u64,
    pub pt: MixingSide,
    pub baseline: MixingSide,
}

fn sample_weights<'t>(trace: &'t WeightTrace, sample: usize, replica: usize) -> &'t [f64] {
    let base = (sample * trace.n_replicas + replica) * trace.dim;
    &trace.coords[base..base + trace.dim]
}

fn mixing_side(
    run: &PtOutcome,
    potential: &AnalyticPotential,
    label: &'static str,
) -> Result<MixingSide, GibbsError> {
    let trace = run.trace.as_ref().ok_or(GibbsError::MissingTrace(label))?;
    let m = run.ladder.m();
    let per_replica_transitions =
        (0..m).map(|r| sign_changes(&trace.replica_series(r, 0))).collect();
    let per_slot_transitions = (0..m).map(|s| sign_changes(&trace.slot_series(s, 0))).collect();
    let coldest = m - 1;
    let energies: Vec<f64> = (0..trace.n_samples())
        .map(|k| {
            let replica = (0..m)
                .find(|&r| trace.slots[k * trace.n_replicas + r] as usize == coldest)
                .expect("each slot always has an occupant");
            potential.value(sample_weights(trace, k, replica))
        })
        .collect();
    Ok(MixingSide {
        per_replica_transitions,
        per_slot_transitions,
        round_trips: round_trips_per_replica(m, &run.events),
        coldest_energy_iat: integrated_autocorrelation(&energies)?,
    })
}

/// Pairs the mixing diagnostics of a tempered run against its no-exchange
/// twin (same budget, same ladder, matched seeds).
pub fn mixing_report(
    pt: &PtOutcome,
    baseline: &PtOutcome,
    potential: &AnalyticPotential,
) -> Result<MixingReport, GibbsError> {
    if pt.total_steps != baseline.total_steps {
        return Err(GibbsError::BudgetMismatch {
            pt: pt.total_steps,
            baseline: baseline.total_steps,
        });
    }
    if pt.ladder.m() != baseline.ladder.m() {
        return Err(GibbsError::LadderWidthMismatch {
            pt: pt.ladder.m(),
            baseline: baseline.ladder.m(),
        });
    }
    Ok(MixingReport {
        total_steps: pt.total_steps,
        pt: mixing_side(pt, potential, "tempered")?,
        baseline: mixing_side(baseline, potential, "baseline")?,
    })
}
