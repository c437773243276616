//! Mini-batch SGD with momentum, a step-indexed learning-rate schedule, an
//! epoch-shuffled batch stream, and a divergence guard.
//!
//! The update is `v' = μ·v + g`, `w' = w − γ_t·v'`, with `γ_t` read from the
//! anneal schedule at the optimizer's current step count. Velocity belongs
//! to the optimizer state, not to the hyperparameters: replica exchanges
//! swap hyperparameter assignments but never touch `v`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landscape::{AnalyticPotential, Objective};
use crate::StreamRng;

/// One point of the anneal schedule: from `step` onward the learning rate
/// becomes `learning_rate` (until a later point overrides it).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealPoint {
    pub step: u64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Momentum coefficient `μ ∈ [0, 1)`.
    pub momentum: f64,
    /// Step-indexed learning-rate overrides, strictly increasing in `step`.
    #[serde(default)]
    pub anneal: Vec<AnnealPoint>,
}

impl SgdConfig {
    pub fn plain(learning_rate: f64, batch_size: usize) -> Self {
        SgdConfig { learning_rate, batch_size, momentum: 0.0, anneal: Vec::new() }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(OptimizerError::NonPositiveLearningRate(self.learning_rate));
        }
        if self.batch_size == 0 {
            return Err(OptimizerError::ZeroBatchSize);
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(OptimizerError::MomentumOutOfRange(self.momentum));
        }
        for pair in self.anneal.windows(2) {
            if pair[1].step <= pair[0].step {
                return Err(OptimizerError::AnnealNotIncreasing {
                    first: pair[0].step,
                    second: pair[1].step,
                });
            }
        }
        if let Some(p) = self.anneal.iter().find(|p| !(p.learning_rate > 0.0)) {
            return Err(OptimizerError::NonPositiveLearningRate(p.learning_rate));
        }
        Ok(())
    }
}

/// Learning rate in effect at step `t`: the latest anneal point with
/// `step ≤ t`, or the base rate if none applies yet.
pub fn effective_lr(cfg: &SgdConfig, t: u64) -> f64 {
    cfg.anneal
        .iter()
        .rev()
        .find(|p| p.step <= t)
        .map(|p| p.learning_rate)
        .unwrap_or(cfg.learning_rate)
}

/// Mutable per-trajectory optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub velocity: Vec<f64>,
    /// Number of completed steps.
    pub step: u64,
    /// Training loss observed on the very first step; the divergence guard
    /// compares later losses against `1e6 ×` this.
    pub initial_loss: Option<f64>,
}

impl OptimizerState {
    pub fn new(dim: usize) -> Self {
        OptimizerState { velocity: vec![0.0; dim], step: 0, initial_loss: None }
    }
}

/// Multiplier over the initial training loss beyond which a trajectory is
/// declared diverged.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Error, PartialEq)]
pub enum OptimizerError {
    #[error("learning rate must be positive, got {0}")]
    NonPositiveLearningRate(f64),
    #[error("batch size must be nonzero")]
    ZeroBatchSize,
    #[error("momentum must lie in [0, 1), got {0}")]
    MomentumOutOfRange(f64),
    #[error("anneal schedule steps must be strictly increasing ({first} then {second})")]
    AnnealNotIncreasing { first: u64, second: u64 },
    #[error("batch size {batch} exceeds dataset size {n}")]
    BatchLargerThanDataset { batch: usize, n: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-finite gradient at step {step} (loss {loss})")]
    NonFiniteGradient { step: u64, loss: f64 },
    #[error("diverged at step {step}: loss {loss} exceeds {factor:.0e} × initial loss {initial}")]
    Diverged { step: u64, loss: f64, initial: f64, factor: f64 },
    #[error("weight/velocity dimension mismatch: weights {weights}, velocity {velocity}")]
    DimensionMismatch { weights: usize, velocity: usize },
}

/// A loss whose gradient can be taken on a mini-batch of example indices.
/// `batch_grad` returns the training loss measured by the same pass together
/// with the gradient; stochastic regularizers draw from `rng`.
pub trait BatchObjective: Send + Sync {
    fn dim(&self) -> usize;
    fn batch_grad(&self, w: &[f64], batch: &[usize], rng: &mut StreamRng) -> (f64, Vec<f64>);
}

/// Analytic potentials ignore the batch: the "training loss" is the exact
/// potential value and the gradient is full.
impl BatchObjective for AnalyticPotential {
    fn dim(&self) -> usize {
        Objective::dim(self)
    }

    fn batch_grad(&self, w: &[f64], _batch: &[usize], _rng: &mut StreamRng) -> (f64, Vec<f64>) {
        (self.value(w), self.grad(w))
    }
}

/// Outcome of one accepted SGD step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Training loss seen by the gradient pass (under the dropout mask, if
    /// any, so it is the loss actually being descended).
    pub loss: f64,
}

/// One SGD step in place. The learning rate is the one in effect at the
/// state's current step count; the step count increments afterwards. Fails
/// on non-finite gradients and when the divergence guard trips; in both
/// cases `w` and `state` are left untouched so diagnostics see the last
/// healthy state.
pub fn sgd_step(
    w: &mut [f64],
    state: &mut OptimizerState,
    objective: &dyn BatchObjective,
    batch: &[usize],
    cfg: &SgdConfig,
    rng: &mut StreamRng,
) -> Result<StepInfo, OptimizerError> {
    if state.velocity.len() != w.len() {
        return Err(OptimizerError::DimensionMismatch {
            weights: w.len(),
            velocity: state.velocity.len(),
        });
    }
    let (loss, grad) = objective.batch_grad(w, batch, rng);
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(OptimizerError::NonFiniteGradient { step: state.step, loss });
    }
    let initial = *state.initial_loss.get_or_insert(loss);
    if loss > DIVERGENCE_FACTOR * initial.max(f64::EPSILON) {
        return Err(OptimizerError::Diverged {
            step: state.step,
            loss,
            initial,
            factor: DIVERGENCE_FACTOR,
        });
    }
    let gamma = effective_lr(cfg, state.step);
    for ((wi, vi), gi) in w.iter_mut().zip(state.velocity.iter_mut()).zip(grad.iter()) {
        *vi = cfg.momentum * *vi + gi;
        *wi -= gamma * *vi;
    }
    state.step += 1;
    Ok(StepInfo { loss })
}

/// Epoch-shuffled sampler over `0..n`: each epoch is a fresh uniform shuffle
/// consumed left to right, every index appears exactly once per epoch, and
/// the final short batch of an epoch is kept. The batch size is a call-time
/// argument so callers whose batch size is itself a hyperparameter can vary
/// it mid-stream without breaking the exactly-once property.
#[derive(Debug, Clone)]
pub struct EpochSampler {
    order: Vec<u32>,
    pos: usize,
    rng: StreamRng,
}

impl EpochSampler {
    pub fn new(n: usize, seed: u64) -> Result<Self, OptimizerError> {
        if n == 0 {
            return Err(OptimizerError::EmptyDataset);
        }
        let mut sampler = EpochSampler {
            order: (0..n as u32).collect(),
            pos: 0,
            rng: crate::rng_from_seed(seed),
        };
        sampler.reshuffle();
        Ok(sampler)
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.pos = 0;
    }

    pub fn dataset_len(&self) -> usize {
        self.order.len()
    }

    /// Next batch of at most `size` indices (shorter at an epoch boundary).
    pub fn next_batch(&mut self, size: usize, out: &mut Vec<usize>) -> Result<(), OptimizerError> {
        let n = self.order.len();
        if size == 0 {
            return Err(OptimizerError::ZeroBatchSize);
        }
        if size > n {
            return Err(OptimizerError::BatchLargerThanDataset { batch: size, n });
        }
        if self.pos >= n {
            self.reshuffle();
        }
        let take = size.min(n - self.pos);
        out.clear();
        out.extend(self.order[self.pos..self.pos + take].iter().map(|&i| i as usize));
        self.pos += take;
        Ok(())
    }
}

/// Fixed-size infinite batch stream over `0..n`, reshuffling each epoch.
pub struct BatchIterator {
    sampler: EpochSampler,
    batch_size: usize,
}

impl BatchIterator {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self, OptimizerError> {
        if batch_size == 0 {
            return Err(OptimizerError::ZeroBatchSize);
        }
        if batch_size > n.max(1) || n == 0 {
            if n == 0 {
                return Err(OptimizerError::EmptyDataset);
            }
            return Err(OptimizerError::BatchLargerThanDataset { batch: batch_size, n });
        }
        Ok(BatchIterator { sampler: EpochSampler::new(n, seed)?, batch_size })
    }
}

impl Iterator for BatchIterator {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let mut out = Vec::with_capacity(self.batch_size);
        self.sampler.next_batch(self.batch_size, &mut out).ok()?;
        Some(out)
    }
}

/// Convenience constructor mirroring `BatchIterator::new`.
pub fn batch_iterator(n: usize, batch_size: usize, seed: u64) -> Result<BatchIterator, OptimizerError> {
    BatchIterator::new(n, batch_size, seed)
}
