//! The per-replica inner dynamics driven by the tempering loop: one trait
//! with two substrates — mini-batch SGD on an MLP over a dataset, and
//! Langevin dynamics on an analytic potential. The replica's current ladder
//! value is passed into every step, so an accepted exchange changes behavior
//! from the very next step without touching weights, velocity, or the RNG
//! stream.

use std::sync::Arc;

use thiserror::Error;

use crate::data::Dataset;
use crate::landscape::{langevin_step, AnalyticPotential, LandscapeError, LangevinConfig, Objective};
use crate::nn::{
    classification_error, init_weights, loss_batch, Mode, MlpSpec, NnError, RegularizerConfig,
};
use crate::optimizer::{sgd_step, BatchObjective, EpochSampler, OptimizerError, OptimizerState, SgdConfig};
use crate::tempering::HyperparameterKind;
use crate::StreamRng;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Landscape(#[from] LandscapeError),
    #[error("weights became non-finite at step {step}")]
    NonFiniteState { step: u64 },
    #[error("network input width {input} does not match dataset feature dimension {features}")]
    InputWidthMismatch { input: usize, features: usize },
    #[error("network output width {output} does not match the {classes} dataset classes")]
    OutputWidthMismatch { output: usize, classes: usize },
    #[error("train and validation sets disagree: {0}")]
    SplitMismatch(String),
    #[error("ladder kind {kind:?} is not usable with {substrate} dynamics")]
    KindNotSupported { kind: HyperparameterKind, substrate: &'static str },
    #[error("a learning-rate ladder cannot be combined with an anneal schedule")]
    LadderVsAnneal,
    #[error("ladder value {0} is not a usable batch size")]
    BadBatchValue(f64),
}

impl DynamicsError {
    /// True for failures that mean "this replica blew up" (freeze it, keep
    /// the run going) as opposed to misconfiguration.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            DynamicsError::NonFiniteState { .. }
                | DynamicsError::Optimizer(OptimizerError::Diverged { .. })
                | DynamicsError::Optimizer(OptimizerError::NonFiniteGradient { .. })
        )
    }
}

/// One replica's stepping rule. `advance` performs exactly one step under
/// the given ladder value and returns the training loss that step descended;
/// the reporting methods are deterministic eval-mode evaluations that never
/// touch the RNG stream (so evaluation cadence cannot perturb trajectories).
pub trait ReplicaDynamics: Send {
    /// Weight-vector length.
    fn dim(&self) -> usize;

    /// Draws initial weights from the replica's stream.
    fn init_weights(&mut self, rng: &mut StreamRng) -> Vec<f64>;

    /// One training step in place under ladder value `value`.
    fn advance(
        &mut self,
        w: &mut [f64],
        state: &mut OptimizerState,
        value: f64,
        rng: &mut StreamRng,
    ) -> Result<f64, DynamicsError>;

    /// Eval-mode loss on the full training set (regularizer penalty excluded).
    fn train_loss(&mut self, w: &[f64]) -> f64;

    /// Eval-mode loss on the full validation set — the quantity exchanges
    /// are decided on. For analytic substrates this is the potential value.
    fn validation_loss(&mut self, w: &[f64]) -> f64;

    /// Validation misclassification rate, when the substrate classifies.
    fn validation_error(&mut self, w: &[f64]) -> Option<f64> {
        let _ = w;
        None
    }
}

/// Factory producing one dynamics instance per replica. Receives the replica
/// index and the replica's base seed (for private sub-streams such as the
/// batch sampler).
pub type DynamicsFactory<'a> =
    dyn Fn(usize, u64) -> Result<Box<dyn ReplicaDynamics>, DynamicsError> + Sync + 'a;

/// Salt for deriving a replica's batch-sampler stream from its seed.
pub const BATCH_STREAM_SALT: u64 = 0xBA7C_57EA;

struct MlpBatchObjective<'a> {
    spec: &'a MlpSpec,
    data: &'a Dataset,
    reg: RegularizerConfig,
}

impl BatchObjective for MlpBatchObjective<'_> {
    fn dim(&self) -> usize {
        self.spec.n_weights()
    }

    fn batch_grad(&self, w: &[f64], batch: &[usize], rng: &mut StreamRng) -> (f64, Vec<f64>) {
        let mut features = Vec::with_capacity(batch.len() * self.data.d);
        let mut labels = Vec::with_capacity(batch.len());
        self.data.gather(batch, &mut features, &mut labels);
        crate::nn::grad_batch(self.spec, w, &features, &labels, &self.reg, Mode::Train, rng)
            .expect("batch gradient on construction-validated network")
    }
}

/// Mini-batch SGD over an MLP. The ladder `kind` decides which knob the
/// per-step `value` drives; everything else comes from the base configs.
pub struct SgdDynamics {
    spec: MlpSpec,
    train: Arc<Dataset>,
    validation: Arc<Dataset>,
    base_cfg: SgdConfig,
    lr_cfg: SgdConfig,
    base_reg: RegularizerConfig,
    kind: HyperparameterKind,
    sampler: EpochSampler,
    batch: Vec<usize>,
}

impl SgdDynamics {
    pub fn new(
        spec: MlpSpec,
        train: Arc<Dataset>,
        validation: Arc<Dataset>,
        cfg: SgdConfig,
        reg: RegularizerConfig,
        kind: HyperparameterKind,
        sampler_seed: u64,
    ) -> Result<Self, DynamicsError> {
        spec.validate()?;
        cfg.validate()?;
        reg.validate()?;
        if kind == HyperparameterKind::LangevinTemperature {
            return Err(DynamicsError::KindNotSupported { kind, substrate: "SGD" });
        }
        if kind == HyperparameterKind::LearningRate && !cfg.anneal.is_empty() {
            return Err(DynamicsError::LadderVsAnneal);
        }
        for ds in [&train, &validation] {
            if spec.input_dim() != ds.d {
                return Err(DynamicsError::InputWidthMismatch {
                    input: spec.input_dim(),
                    features: ds.d,
                });
            }
            if spec.output_dim() != ds.n_classes {
                return Err(DynamicsError::OutputWidthMismatch {
                    output: spec.output_dim(),
                    classes: ds.n_classes,
                });
            }
        }
        if train.d != validation.d || train.n_classes != validation.n_classes {
            return Err(DynamicsError::SplitMismatch(format!(
                "train is {}×{} with {} classes, validation is {}×{} with {}",
                train.n, train.d, train.n_classes, validation.n, validation.d, validation.n_classes
            )));
        }
        let sampler = EpochSampler::new(train.n, sampler_seed)?;
        let lr_cfg = SgdConfig { anneal: Vec::new(), ..cfg.clone() };
        Ok(SgdDynamics {
            spec,
            train,
            validation,
            base_cfg: cfg,
            lr_cfg,
            base_reg: reg,
            kind,
            sampler,
            batch: Vec::new(),
        })
    }

    fn effective_reg(&self, value: f64) -> RegularizerConfig {
        match self.kind {
            HyperparameterKind::DropoutRate => {
                RegularizerConfig { dropout_rate: value, ..self.base_reg }
            }
            HyperparameterKind::L2Lambda => {
                RegularizerConfig { l2_lambda: value, ..self.base_reg }
            }
            _ => self.base_reg,
        }
    }

    fn eval_loss(&self, data: &Dataset, w: &[f64]) -> f64 {
        loss_batch(&self.spec, w, &data.features, &data.labels, &RegularizerConfig::NONE)
            .expect("eval loss on construction-validated network")
    }
}

impl ReplicaDynamics for SgdDynamics {
    fn dim(&self) -> usize {
        self.spec.n_weights()
    }

    fn init_weights(&mut self, rng: &mut StreamRng) -> Vec<f64> {
        init_weights(&self.spec, rng)
    }

    fn advance(
        &mut self,
        w: &mut [f64],
        state: &mut OptimizerState,
        value: f64,
        rng: &mut StreamRng,
    ) -> Result<f64, DynamicsError> {
        let batch_size = if self.kind == HyperparameterKind::BatchSize {
            let rounded = value.round();
            if !(rounded >= 1.0) || rounded > self.train.n as f64 {
                return Err(DynamicsError::BadBatchValue(value));
            }
            rounded as usize
        } else {
            self.base_cfg.batch_size
        };
        let mut batch = std::mem::take(&mut self.batch);
        self.sampler.next_batch(batch_size, &mut batch)?;
        if self.kind == HyperparameterKind::LearningRate {
            self.lr_cfg.learning_rate = value;
        }
        let cfg = if self.kind == HyperparameterKind::LearningRate {
            &self.lr_cfg
        } else {
            &self.base_cfg
        };
        let objective = MlpBatchObjective {
            spec: &self.spec,
            data: &self.train,
            reg: self.effective_reg(value),
        };
        let outcome = sgd_step(w, state, &objective, &batch, cfg, rng);
        self.batch = batch;
        Ok(outcome?.loss)
    }

    fn train_loss(&mut self, w: &[f64]) -> f64 {
        self.eval_loss(&self.train, w)
    }

    fn validation_loss(&mut self, w: &[f64]) -> f64 {
        self.eval_loss(&self.validation, w)
    }

    fn validation_error(&mut self, w: &[f64]) -> Option<f64> {
        Some(
            classification_error(
                &self.spec,
                w,
                &self.validation.features,
                &self.validation.labels,
            )
            .expect("classification error on construction-validated network"),
        )
    }
}

/// Langevin dynamics on an analytic potential. The ladder value is the
/// temperature; the configured step size plays the role of the learning
/// rate. Initial weights are standard normal per coordinate.
pub struct LangevinDynamics {
    potential: AnalyticPotential,
    step_size: f64,
    scratch: Vec<f64>,
}

impl LangevinDynamics {
    pub fn new(
        potential: AnalyticPotential,
        step_size: f64,
        kind: HyperparameterKind,
    ) -> Result<Self, DynamicsError> {
        potential.validate()?;
        LangevinConfig { temperature: 0.0, step: step_size }.validate()?;
        if kind != HyperparameterKind::LangevinTemperature {
            return Err(DynamicsError::KindNotSupported { kind, substrate: "Langevin" });
        }
        let dim = Objective::dim(&potential);
        Ok(LangevinDynamics { potential, step_size, scratch: vec![0.0; dim] })
    }
}

impl ReplicaDynamics for LangevinDynamics {
    fn dim(&self) -> usize {
        Objective::dim(&self.potential)
    }

    fn init_weights(&mut self, rng: &mut StreamRng) -> Vec<f64> {
        use rand::Rng;
        (0..self.dim()).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
    }

    fn advance(
        &mut self,
        w: &mut [f64],
        state: &mut OptimizerState,
        value: f64,
        rng: &mut StreamRng,
    ) -> Result<f64, DynamicsError> {
        let cfg = LangevinConfig { temperature: value, step: self.step_size };
        langevin_step(w, &self.potential, &cfg, &mut self.scratch, rng)?;
        if w.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFiniteState { step: state.step });
        }
        state.step += 1;
        Ok(self.potential.value(w))
    }

    fn train_loss(&mut self, w: &[f64]) -> f64 {
        self.potential.value(w)
    }

    fn validation_loss(&mut self, w: &[f64]) -> f64 {
        self.potential.value(w)
    }
}
