//! Diffusion experiments: track how far the weight vector wanders from its
//! starting point under different hyperparameter values, then decide whether
//! the hyperparameter behaves like a temperature (noisier settings diffuse
//! farther) or merely confines the weights (L2's plateau).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DynamicsError, DynamicsFactory};
use crate::optimizer::OptimizerState;
use crate::tempering::HyperparameterKind;
use crate::{derive_seed, rng_from_seed};

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("weight vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("a diffusion experiment needs at least two hyperparameter values, got {0}")]
    TooFewValues(usize),
    #[error("at least one seed is required")]
    NoSeeds,
    #[error("classification needs at least {min} seeds per value, got {got}")]
    InsufficientSeeds { min: usize, got: usize },
    #[error("sample_every must be at least 1")]
    BadSampleInterval,
    #[error("total_steps must be at least 1")]
    BadTotalSteps,
    #[error("value {value} (seed index {seed_index}): {source}")]
    Dynamics { value: f64, seed_index: usize, source: DynamicsError },
    #[error("{0:?} has no noise orientation — it is not temperature-like by construction")]
    NoOrientation(HyperparameterKind),
    #[error("series too short for rank correlation ({0} points)")]
    SeriesTooShort(usize),
    #[error("curve for value {0} has too few samples to assess a plateau")]
    CurveTooShort(f64),
}

/// ‖W_t − W_t₀‖₂.
pub fn record_displacement(w_t: &[f64], w_t0: &[f64]) -> Result<f64, DiffusionError> {
    if w_t.len() != w_t0.len() {
        return Err(DiffusionError::LengthMismatch(w_t.len(), w_t0.len()));
    }
    Ok(w_t.iter().zip(w_t0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// Displacement-vs-step record of one run at one hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionCurve {
    /// Index into the seed list (runs with equal `replica_id` share initial
    /// weights across values).
    pub replica_id: usize,
    pub value: f64,
    pub origin_step: u64,
    /// (step, displacement) with strictly increasing steps; the first entry
    /// is (origin_step, 0).
    pub samples: Vec<(u64, f64)>,
    /// True when the run blew up and the curve was truncated at that point.
    pub diverged: bool,
}

/// Step budget and sampling cadence of a diffusion run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    pub total_steps: u64,
    pub sample_every: u64,
}

impl DiffusionSchedule {
    fn validate(&self) -> Result<(), DiffusionError> {
        if self.total_steps == 0 {
            return Err(DiffusionError::BadTotalSteps);
        }
        if self.sample_every == 0 {
            return Err(DiffusionError::BadSampleInterval);
        }
        Ok(())
    }
}

/// Runs one independent trajectory per (value, seed) pair — no exchanges —
/// and records its displacement curve. For a given seed the initial weights
/// are identical across values (the init stream depends on the seed alone)
/// while the training noise stream is derived from both seed and value.
/// Divergence truncates and flags the affected curve; other errors abort.
pub fn run_diffusion_experiment(
    factory: &DynamicsFactory<'_>,
    values: &[f64],
    seeds: &[u64],
    schedule: DiffusionSchedule,
) -> Result<Vec<DiffusionCurve>, DiffusionError> {
    if values.len() < 2 {
        return Err(DiffusionError::TooFewValues(values.len()));
    }
    if seeds.is_empty() {
        return Err(DiffusionError::NoSeeds);
    }
    schedule.validate()?;
    let cells: Vec<(usize, usize)> = (0..values.len())
        .flat_map(|v| (0..seeds.len()).map(move |s| (v, s)))
        .collect();
    let curves: Vec<Result<DiffusionCurve, DiffusionError>> = cells
        .par_iter()
        .map(|&(vi, si)| run_one_curve(factory, values[vi], si, seeds[si], schedule))
        .collect();
    curves.into_iter().collect()
}

fn run_one_curve(
    factory: &DynamicsFactory<'_>,
    value: f64,
    seed_index: usize,
    seed: u64,
    schedule: DiffusionSchedule,
) -> Result<DiffusionCurve, DiffusionError> {
    let wrap = |source| DiffusionError::Dynamics { value, seed_index, source };
    let mut dynamics = factory(seed_index, seed).map_err(wrap)?;
    let mut init_rng = rng_from_seed(seed);
    let mut w = dynamics.init_weights(&mut init_rng);
    let w0 = w.clone();
    let mut run_rng = rng_from_seed(derive_seed(seed, value.to_bits()));
    let mut opt = OptimizerState::new(w.len());
    let mut samples = vec![(0u64, 0.0f64)];
    let mut diverged = false;
    let mut t = 0u64;
    while t < schedule.total_steps && !diverged {
        let next = (t + schedule.sample_every).min(schedule.total_steps);
        while t < next {
            match dynamics.advance(&mut w, &mut opt, value, &mut run_rng) {
                Ok(_) => t += 1,
                Err(e) if e.is_divergence() => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(wrap(e)),
            }
        }
        let displacement = record_displacement(&w, &w0).expect("dimension is fixed");
        if displacement.is_finite() && samples.last().map(|s| s.0) != Some(t) {
            samples.push((t, displacement));
        }
    }
    Ok(DiffusionCurve { replica_id: seed_index, value, origin_step: 0, samples, diverged })
}

/// Which direction of a hyperparameter injects more noise. The paper's
/// directions: larger learning rate, larger dropout, and larger temperature
/// are noisier; larger batches are quieter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseOrientation {
    LargerIsNoisier,
    SmallerIsNoisier,
}

/// The declared orientation per kind; L2 has none (it confines rather than
/// heats, which is exactly what the plateau check detects).
pub fn noise_orientation(kind: HyperparameterKind) -> Option<NoiseOrientation> {
    match kind {
        HyperparameterKind::LearningRate
        | HyperparameterKind::DropoutRate
        | HyperparameterKind::LangevinTemperature => Some(NoiseOrientation::LargerIsNoisier),
        HyperparameterKind::BatchSize => Some(NoiseOrientation::SmallerIsNoisier),
        HyperparameterKind::L2Lambda => None,
    }
}

/// Knobs of [`classify_smoothing`], all defaulted to the documented values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    /// Rank-correlation threshold for declaring temperature-likeness.
    pub threshold: f64,
    /// A curve plateaus when its last-quarter secant slope is at most this
    /// fraction of its first-quarter secant slope.
    pub plateau_fraction: f64,
    /// Fraction of the step range forming the late window read off per
    /// curve (mean displacement over it).
    pub final_window: f64,
    /// Minimum seeds per value for the verdict to be meaningful.
    pub min_seeds: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions { threshold: 0.8, plateau_fraction: 0.1, final_window: 0.1, min_seeds: 3 }
    }
}

/// The diffusion-experiment verdict for one hyperparameter kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessVerdict {
    pub kind: HyperparameterKind,
    /// Spearman rank correlation between the noise-oriented value and the
    /// mean final-window displacement, in [−1, 1].
    pub monotonicity_score: f64,
    pub temperature_like: bool,
    /// Per input curve, in input order.
    pub plateau_detected: Vec<bool>,
    /// (value, mean final-window displacement across seeds), values
    /// ascending.
    pub final_displacements: Vec<(f64, f64)>,
}

/// Scores how consistently noisier settings diffuse farther: Spearman rank
/// correlation between the oriented value and the mean late-window
/// displacement across seeds, plus a per-curve plateau flag.
pub fn classify_smoothing(
    kind: HyperparameterKind,
    orientation: NoiseOrientation,
    curves: &[DiffusionCurve],
    options: &ClassifyOptions,
) -> Result<SmoothnessVerdict, DiffusionError> {
    let mut groups: Vec<(f64, Vec<&DiffusionCurve>)> = Vec::new();
    for curve in curves {
        match groups.iter_mut().find(|(v, _)| *v == curve.value) {
            Some((_, list)) => list.push(curve),
            None => groups.push((curve.value, vec![curve])),
        }
    }
    if groups.len() < 2 {
        return Err(DiffusionError::TooFewValues(groups.len()));
    }
    let fewest = groups.iter().map(|(_, list)| list.len()).min().unwrap_or(0);
    if fewest < options.min_seeds {
        return Err(DiffusionError::InsufficientSeeds { min: options.min_seeds, got: fewest });
    }
    groups.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite hyperparameter values"));

    let mut final_displacements = Vec::with_capacity(groups.len());
    for (value, list) in &groups {
        let mean = list.iter().map(|c| final_window_mean(c, options.final_window)).sum::<f64>()
            / list.len() as f64;
        final_displacements.push((*value, mean));
    }
    let oriented: Vec<f64> = final_displacements
        .iter()
        .map(|(v, _)| match orientation {
            NoiseOrientation::LargerIsNoisier => *v,
            NoiseOrientation::SmallerIsNoisier => -*v,
        })
        .collect();
    let means: Vec<f64> = final_displacements.iter().map(|(_, d)| *d).collect();
    let score = spearman_rank_correlation(&oriented, &means)?;
    let plateau_detected = curves
        .iter()
        .map(|c| curve_plateaus(c, options.plateau_fraction))
        .collect::<Result<Vec<bool>, _>>()?;
    Ok(SmoothnessVerdict {
        kind,
        monotonicity_score: score,
        temperature_like: score >= options.threshold,
        plateau_detected,
        final_displacements,
    })
}

/// Mean displacement over the trailing `window` fraction of a curve's step
/// range (at minimum its final sample).
pub fn final_window_mean(curve: &DiffusionCurve, window: f64) -> f64 {
    let last = curve.samples.last().expect("curves always hold their origin sample");
    let cutoff = (1.0 - window) * last.0 as f64;
    let tail: Vec<f64> = curve
        .samples
        .iter()
        .filter(|(t, _)| *t as f64 >= cutoff)
        .map(|(_, d)| *d)
        .collect();
    if tail.is_empty() {
        last.1
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// A curve plateaus when its late (last-quarter) secant slope has collapsed
/// relative to its early (first-quarter) secant slope.
fn curve_plateaus(curve: &DiffusionCurve, fraction: f64) -> Result<bool, DiffusionError> {
    let samples = &curve.samples;
    if samples.len() < 4 {
        return Err(DiffusionError::CurveTooShort(curve.value));
    }
    let t0 = samples[0].0 as f64;
    let t_end = samples[samples.len() - 1].0 as f64;
    let span = t_end - t0;
    if span <= 0.0 {
        return Err(DiffusionError::CurveTooShort(curve.value));
    }
    let q1_end = samples
        .iter()
        .rev()
        .find(|(t, _)| (*t as f64) <= t0 + 0.25 * span)
        .expect("the origin sample is always within the first quarter");
    let q3_start = samples
        .iter()
        .find(|(t, _)| (*t as f64) >= t0 + 0.75 * span)
        .expect("the final sample is always within the last quarter");
    let early_span = q1_end.0 as f64 - t0;
    let late_span = t_end - q3_start.0 as f64;
    if early_span <= 0.0 || late_span <= 0.0 {
        return Err(DiffusionError::CurveTooShort(curve.value));
    }
    let early_slope = (q1_end.1 - samples[0].1) / early_span;
    let late_slope = (samples[samples.len() - 1].1 - q3_start.1) / late_span;
    Ok(late_slope <= fraction * early_slope)
}

/// Spearman rank correlation: Pearson correlation of average-tie ranks.
/// Returns 0 when either argument has no rank variation.
pub fn spearman_rank_correlation(x: &[f64], y: &[f64]) -> Result<f64, DiffusionError> {
    if x.len() != y.len() {
        return Err(DiffusionError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(DiffusionError::SeriesTooShort(x.len()));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; ties share the average of their positions.
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{LangevinDynamics, ReplicaDynamics, SgdDynamics, BATCH_STREAM_SALT};
    use crate::landscape::AnalyticPotential;
    use crate::nn::{Activation, MlpSpec, OutputLoss, RegularizerConfig};
    use crate::optimizer::SgdConfig;
    use crate::data;
    use rand::Rng;
    use std::sync::Arc;

    fn langevin_factory(
        potential: AnalyticPotential,
        step: f64,
    ) -> impl Fn(usize, u64) -> Result<Box<dyn ReplicaDynamics>, DynamicsError> + Sync {
        move |_i, _seed| {
            Ok(Box::new(LangevinDynamics::new(
                potential.clone(),
                step,
                HyperparameterKind::LangevinTemperature,
            )?) as Box<dyn ReplicaDynamics>)
        }
    }

    #[test]
    fn displacement_trivial_cases() {
        let w = vec![1.0, -2.0, 0.5];
        assert_eq!(record_displacement(&w, &w).unwrap(), 0.0);
        assert_eq!(record_displacement(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 5.0);
        assert!(matches!(
            record_displacement(&[1.0], &[1.0, 2.0]),
            Err(DiffusionError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn displacement_matches_a_naive_oracle_and_ignores_coordinate_order() {
        let mut rng = crate::rng_from_seed(9);
        let a: Vec<f64> = (0..64).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let b: Vec<f64> = (0..64).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        // Oracle: accumulate squared differences smallest-first, an
        // independently ordered summation.
        let mut sq: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).collect();
        sq.sort_by(|p, q| p.partial_cmp(q).unwrap());
        let oracle = sq.iter().sum::<f64>().sqrt();
        let got = record_displacement(&a, &b).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle.max(1.0));
        // Permuting both vectors by the same permutation leaves the
        // distance unchanged (orthogonal-transform invariance).
        let mut perm: Vec<usize> = (0..a.len()).collect();
        for i in (1..perm.len()).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        let pa: Vec<f64> = perm.iter().map(|&i| a[i]).collect();
        let pb: Vec<f64> = perm.iter().map(|&i| b[i]).collect();
        let permuted = record_displacement(&pa, &pb).unwrap();
        assert!((permuted - got).abs() <= 1e-12 * got.max(1.0));
    }

    #[test]
    fn identical_values_and_seed_give_identical_curves() {
        let factory = langevin_factory(AnalyticPotential::DoubleWell1d { barrier: 1.0 }, 1e-2);
        let curves = run_diffusion_experiment(
            &factory,
            &[0.5, 0.5],
            &[17],
            DiffusionSchedule { total_steps: 400, sample_every: 40 },
        )
        .unwrap();
        assert_eq!(curves.len(), 2);
        assert_eq!(curves[0].samples, curves[1].samples);
        assert_eq!(curves[0].samples[0], (0, 0.0));
        assert!(curves[0].samples.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn initial_weights_depend_on_the_seed_but_not_the_value() {
        // The convention under test: init stream from the seed alone, so a
        // seed's starting point is shared across ladder values.
        let factory = langevin_factory(AnalyticPotential::Quadratic { curvature: 1.0 }, 1e-2);
        let mut d1 = factory(0, 5).unwrap();
        let mut d2 = factory(0, 5).unwrap();
        let w1 = d1.init_weights(&mut crate::rng_from_seed(5));
        let w2 = d2.init_weights(&mut crate::rng_from_seed(5));
        assert_eq!(w1, w2);
        // While the run streams differ across values for the same seed:
        assert_ne!(derive_seed(5, 0.5f64.to_bits()), derive_seed(5, 1.0f64.to_bits()));
    }

    #[test]
    fn hotter_langevin_runs_diffuse_farther_on_the_quadratic() {
        let factory = langevin_factory(AnalyticPotential::Quadratic { curvature: 1.0 }, 1e-2);
        let temps = [0.02, 2.0];
        let seeds = [3, 4, 5];
        let curves = run_diffusion_experiment(
            &factory,
            &temps,
            &seeds,
            DiffusionSchedule { total_steps: 20_000, sample_every: 100 },
        )
        .unwrap();
        for si in 0..seeds.len() {
            let cool = final_window_mean(&curves[si], 0.1);
            let hot = final_window_mean(&curves[seeds.len() + si], 0.1);
            assert!(
                hot > cool,
                "seed {si}: hot window mean {hot} must exceed cool {cool}"
            );
        }
    }

    #[test]
    fn free_diffusion_grows_like_sqrt_t() {
        // Near-zero curvature makes the quadratic effectively flat over
        // this horizon, so mean displacement follows √t.
        let factory = langevin_factory(AnalyticPotential::Quadratic { curvature: 1e-9 }, 1e-3);
        let seeds: Vec<u64> = (100..164).collect();
        let curves = run_diffusion_experiment(
            &factory,
            &[1.0, 1.0],
            &seeds,
            DiffusionSchedule { total_steps: 8000, sample_every: 500 },
        )
        .unwrap();
        let mean_at = |t: u64| -> f64 {
            let per_seed: Vec<f64> = curves[..seeds.len()]
                .iter()
                .map(|c| c.samples.iter().find(|s| s.0 == t).unwrap().1)
                .collect();
            per_seed.iter().sum::<f64>() / per_seed.len() as f64
        };
        for (early, late) in [(2000u64, 8000u64), (1000, 4000)] {
            let ratio = mean_at(late) / mean_at(early);
            assert!(
                (ratio - 2.0).abs() < 0.35,
                "√t scaling: mean({late})/mean({early}) = {ratio}, expected ≈ 2"
            );
        }
    }

    #[test]
    fn spearman_matches_hand_computed_values() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [2.0, 1.0, 4.0, 3.0, 5.0];
        // No ties: ρ = 1 − 6Σd²/(n(n²−1)) = 1 − 24/120 = 0.8.
        let rho = spearman_rank_correlation(&x, &y).unwrap();
        assert!((rho - 0.8).abs() < 1e-12);
        // Pearson-on-ranks carries ±1 ulp of rounding, so compare within 1e-12.
        assert!((spearman_rank_correlation(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let rev: Vec<f64> = x.iter().rev().cloned().collect();
        assert!((spearman_rank_correlation(&x, &rev).unwrap() + 1.0).abs() < 1e-12);
        // Constant input has no rank variation.
        assert_eq!(spearman_rank_correlation(&x, &[7.0; 5]).unwrap(), 0.0);
        // Ties share averaged ranks.
        assert_eq!(average_ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
    }

    fn synthetic_curve(value: f64, replica_id: usize, scale: f64, confined: bool) -> DiffusionCurve {
        let samples: Vec<(u64, f64)> = (0..=20)
            .map(|k| {
                let t = k * 50;
                let d = if confined {
                    scale * (1.0 - (-(t as f64) / 100.0).exp())
                } else {
                    scale * (t as f64).sqrt()
                };
                (t, d)
            })
            .collect();
        DiffusionCurve { replica_id, value, origin_step: 0, samples, diverged: false }
    }

    #[test]
    fn perfectly_ordered_curves_classify_as_temperature_like() {
        let mut curves = Vec::new();
        for (vi, &value) in [0.1, 0.2, 0.4].iter().enumerate() {
            for seed in 0..3 {
                curves.push(synthetic_curve(value, seed, (vi + 1) as f64, false));
            }
        }
        let verdict = classify_smoothing(
            HyperparameterKind::LearningRate,
            NoiseOrientation::LargerIsNoisier,
            &curves,
            &ClassifyOptions::default(),
        )
        .unwrap();
        assert!((verdict.monotonicity_score - 1.0).abs() < 1e-12);
        assert!(verdict.temperature_like);
        assert!(verdict.plateau_detected.iter().all(|p| !p), "√t curves are not plateaus");
        // The same data read with the opposite orientation scores −1.
        let flipped = classify_smoothing(
            HyperparameterKind::BatchSize,
            NoiseOrientation::SmallerIsNoisier,
            &curves,
            &ClassifyOptions::default(),
        )
        .unwrap();
        assert!((flipped.monotonicity_score + 1.0).abs() < 1e-12);
        assert!(!flipped.temperature_like);
    }

    #[test]
    fn flat_curves_score_zero_and_confined_curves_plateau() {
        let mut curves = Vec::new();
        for &value in &[1e-4, 1e-3, 1e-2] {
            for seed in 0..3 {
                curves.push(synthetic_curve(value, seed, 2.0, true));
            }
        }
        let verdict = classify_smoothing(
            HyperparameterKind::L2Lambda,
            NoiseOrientation::LargerIsNoisier,
            &curves,
            &ClassifyOptions::default(),
        )
        .unwrap();
        assert!(verdict.monotonicity_score.abs() < 0.5, "no association expected");
        assert!(!verdict.temperature_like);
        assert!(verdict.plateau_detected.iter().all(|p| *p), "saturating curves plateau");
    }

    #[test]
    fn verdict_survives_subsampling_by_two() {
        let mut curves = Vec::new();
        for (vi, &value) in [1.0, 2.0, 3.0].iter().enumerate() {
            for seed in 0..3 {
                curves.push(synthetic_curve(value, seed, 0.5 + vi as f64, false));
            }
        }
        let full = classify_smoothing(
            HyperparameterKind::LangevinTemperature,
            NoiseOrientation::LargerIsNoisier,
            &curves,
            &ClassifyOptions::default(),
        )
        .unwrap();
        let thinned: Vec<DiffusionCurve> = curves
            .iter()
            .map(|c| {
                let n = c.samples.len();
                DiffusionCurve {
                    samples: c
                        .samples
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| i % 2 == 0 || *i == n - 1)
                        .map(|(_, s)| *s)
                        .collect(),
                    ..c.clone()
                }
            })
            .collect();
        let half = classify_smoothing(
            HyperparameterKind::LangevinTemperature,
            NoiseOrientation::LargerIsNoisier,
            &thinned,
            &ClassifyOptions::default(),
        )
        .unwrap();
        assert_eq!(full.temperature_like, half.temperature_like);
        assert_eq!(full.plateau_detected, half.plateau_detected);
        assert!((full.monotonicity_score - half.monotonicity_score).abs() < 1e-9);
    }

    #[test]
    fn classification_preconditions_are_enforced() {
        let curves: Vec<DiffusionCurve> =
            (0..3).map(|s| synthetic_curve(0.5, s, 1.0, false)).collect();
        assert!(matches!(
            classify_smoothing(
                HyperparameterKind::LearningRate,
                NoiseOrientation::LargerIsNoisier,
                &curves,
                &ClassifyOptions::default()
            ),
            Err(DiffusionError::TooFewValues(1))
        ));
        let thin: Vec<DiffusionCurve> = [0.1, 0.2]
            .iter()
            .flat_map(|&v| (0..2).map(move |s| synthetic_curve(v, s, 1.0, false)))
            .collect();
        assert!(matches!(
            classify_smoothing(
                HyperparameterKind::LearningRate,
                NoiseOrientation::LargerIsNoisier,
                &thin,
                &ClassifyOptions::default()
            ),
            Err(DiffusionError::InsufficientSeeds { min: 3, got: 2 })
        ));
        assert!(noise_orientation(HyperparameterKind::L2Lambda).is_none());
        assert_eq!(
            noise_orientation(HyperparameterKind::BatchSize),
            Some(NoiseOrientation::SmallerIsNoisier)
        );
    }

    #[test]
    fn divergent_runs_truncate_and_flag_their_curve() {
        // An unstable Langevin step on the double well explodes fast; the
        // sibling value with a stable step completes.
        let factory = |_i: usize, _seed: u64| {
            Ok(Box::new(LangevinDynamics::new(
                AnalyticPotential::DoubleWell1d { barrier: 1.0 },
                1.0,
                HyperparameterKind::LangevinTemperature,
            )?) as Box<dyn ReplicaDynamics>)
        };
        let curves = run_diffusion_experiment(
            &factory,
            &[1e-6, 1.0],
            &[8],
            DiffusionSchedule { total_steps: 2000, sample_every: 100 },
        )
        .unwrap();
        // With step 1.0 the double-well drift |w'| ≈ 4|w|³ diverges from
        // any |w| > √2 start; both curves flag quickly here.
        assert!(curves.iter().any(|c| c.diverged), "unstable step must blow up");
        for c in curves.iter().filter(|c| c.diverged) {
            assert!(c.samples.last().unwrap().0 < 2000, "curve truncated");
            assert!(c.samples.iter().all(|(_, d)| d.is_finite()));
        }
    }

    fn mlp_factory(
        reg_kind: HyperparameterKind,
        train: Arc<data::Dataset>,
        validation: Arc<data::Dataset>,
    ) -> impl Fn(usize, u64) -> Result<Box<dyn ReplicaDynamics>, DynamicsError> + Sync {
        let spec = MlpSpec {
            layer_sizes: vec![2, 12, 2],
            hidden_activations: vec![Activation::Tanh],
            output: OutputLoss::SoftmaxCrossEntropy,
        };
        move |_i, seed| {
            Ok(Box::new(SgdDynamics::new(
                spec.clone(),
                Arc::clone(&train),
                Arc::clone(&validation),
                SgdConfig { learning_rate: 0.1, momentum: 0.0, batch_size: 16, anneal: vec![] },
                RegularizerConfig::NONE,
                reg_kind,
                derive_seed(seed, BATCH_STREAM_SALT),
            )?) as Box<dyn ReplicaDynamics>)
        }
    }

    fn blob_splits() -> (Arc<data::Dataset>, Arc<data::Dataset>) {
        let ds = data::synth_blobs(240, 2, 0.6, 77).unwrap();
        let (train, val) = data::split(&ds, 0.2, 7).unwrap();
        (Arc::new(train), Arc::new(val))
    }

    #[test]
    fn dropout_ladder_on_a_small_mlp_is_temperature_like() {
        let (train, val) = blob_splits();
        let factory = mlp_factory(HyperparameterKind::DropoutRate, train, val);
        let curves = run_diffusion_experiment(
            &factory,
            &[0.0, 0.25, 0.5],
            &[21, 22, 23, 24, 25],
            DiffusionSchedule { total_steps: 1500, sample_every: 100 },
        )
        .unwrap();
        let verdict = classify_smoothing(
            HyperparameterKind::DropoutRate,
            NoiseOrientation::LargerIsNoisier,
            &curves,
            &ClassifyOptions { min_seeds: 5, ..ClassifyOptions::default() },
        )
        .unwrap();
        assert!(
            verdict.monotonicity_score >= 0.8,
            "dropout should read as temperature-like, score {}",
            verdict.monotonicity_score
        );
        assert!(verdict.temperature_like);
    }

    #[test]
    fn stronger_l2_plateaus_lower() {
        let (train, val) = blob_splits();
        let factory = mlp_factory(HyperparameterKind::L2Lambda, train, val);
        let lambdas = [0.01, 0.1, 0.5];
        let curves = run_diffusion_experiment(
            &factory,
            &lambdas,
            &[31, 32, 33],
            DiffusionSchedule { total_steps: 4000, sample_every: 200 },
        )
        .unwrap();
        let verdict = classify_smoothing(
            HyperparameterKind::L2Lambda,
            NoiseOrientation::LargerIsNoisier,
            &curves,
            &ClassifyOptions::default(),
        )
        .unwrap();
        assert!(
            verdict.plateau_detected.iter().all(|p| *p),
            "every L2 curve should plateau: {:?}",
            verdict.plateau_detected
        );
        let levels: Vec<f64> = verdict.final_displacements.iter().map(|(_, d)| *d).collect();
        assert!(
            levels.windows(2).all(|w| w[0] > w[1]),
            "plateau level should fall as λ grows: {levels:?}"
        );
    }

    #[test]
    fn experiment_preconditions_are_enforced() {
        let factory = langevin_factory(AnalyticPotential::Quadratic { curvature: 1.0 }, 1e-2);
        let schedule = DiffusionSchedule { total_steps: 10, sample_every: 5 };
        assert!(matches!(
            run_diffusion_experiment(&factory, &[1.0], &[1], schedule),
            Err(DiffusionError::TooFewValues(1))
        ));
        assert!(matches!(
            run_diffusion_experiment(&factory, &[1.0, 2.0], &[], schedule),
            Err(DiffusionError::NoSeeds)
        ));
        assert!(run_diffusion_experiment(
            &factory,
            &[1.0, 2.0],
            &[1],
            DiffusionSchedule { total_steps: 0, sample_every: 5 }
        )
        .is_err());
    }
}
