//! The experiment-config schema: a TOML file with one `mode` and a set of
//! sections, parsed strictly (unknown keys are errors, not warnings),
//! defaulted, and validated as a whole before anything runs.
//!
//! Key naming follows the library enums: ladder kinds are
//! `learning_rate | dropout_rate | langevin_temperature | batch_size |
//! l2_lambda`, activations `tanh | relu`, output losses
//! `softmax_cross_entropy | mean_squared_error`, objective kinds
//! `quadratic | double-well-1d | double-well-2d | mlp`, dataset sources
//! `two-moons | blobs | idx`, and modes
//! `grid | pt | diffusion | gibbs-check | calibrate-c`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::landscape::AnalyticPotential;
use crate::nn::{Activation, OutputLoss};
use crate::optimizer::AnnealPoint;
use crate::tempering::{build_ladder, HyperparameterKind, PtSchedule, Seeds};
use crate::derive_seed;

use super::RunnerError;

/// Salt deriving the exchange-decision stream from the base seed, so that
/// replica streams (salts 0..M) and the exchange stream never collide.
pub const EXCHANGE_STREAM_SALT: u64 = 0x45C8_A17E;

fn err(msg: impl Into<String>) -> RunnerError {
    RunnerError::Config(msg.into())
}

/// What a run does with its config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Independent replicas at fixed ladder values — the baseline.
    Grid,
    /// Replica exchange: same replicas plus Metropolis swaps.
    Pt,
    /// Weight-space diffusion curves over a hyperparameter ladder.
    Diffusion,
    /// Sampling-fidelity and mixing verification on an analytic potential.
    GibbsCheck,
    /// Choose the exchange constant C from a no-exchange run.
    CalibrateC,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Grid => "grid",
            Mode::Pt => "pt",
            Mode::Diffusion => "diffusion",
            Mode::GibbsCheck => "gibbs-check",
            Mode::CalibrateC => "calibrate-c",
        }
    }
}

/// `[objective] kind = …` selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveKind {
    #[serde(rename = "quadratic")]
    Quadratic,
    #[serde(rename = "double-well-1d")]
    DoubleWell1d,
    #[serde(rename = "double-well-2d")]
    DoubleWell2d,
    #[serde(rename = "mlp")]
    Mlp,
}

impl ObjectiveKind {
    fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Quadratic => "quadratic",
            ObjectiveKind::DoubleWell1d => "double-well-1d",
            ObjectiveKind::DoubleWell2d => "double-well-2d",
            ObjectiveKind::Mlp => "mlp",
        }
    }
}

/// `[objective]` — the loss surface replicas train on. `kind` selects the
/// substrate; every other key belongs to exactly one substrate and is
/// rejected elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub kind: ObjectiveKind,
    /// Quadratic bowl strength (default 1.0).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub curvature: Option<f64>,
    /// Double-well barrier height (default 1.0).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub barrier: Option<f64>,
    /// Transverse confinement of the 2-D double well (default 4.0).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub anisotropy: Option<f64>,
    /// Hidden layer widths of the MLP (required for kind = "mlp").
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hidden: Option<Vec<usize>>,
    /// Hidden activation (default "tanh").
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub activation: Option<Activation>,
    /// Output layer + loss (default "softmax_cross_entropy").
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub output: Option<OutputLoss>,
}

impl ObjectiveSection {
    pub fn is_mlp(&self) -> bool {
        self.kind == ObjectiveKind::Mlp
    }

    /// The analytic potential this section describes; `None` for MLPs.
    /// Call only after `resolve`/`validate`.
    pub fn potential(&self) -> Option<AnalyticPotential> {
        match self.kind {
            ObjectiveKind::Quadratic => Some(AnalyticPotential::Quadratic {
                curvature: self.curvature.unwrap_or(1.0),
            }),
            ObjectiveKind::DoubleWell1d => Some(AnalyticPotential::DoubleWell1d {
                barrier: self.barrier.unwrap_or(1.0),
            }),
            ObjectiveKind::DoubleWell2d => Some(AnalyticPotential::DoubleWell2d {
                barrier: self.barrier.unwrap_or(1.0),
                anisotropy: self.anisotropy.unwrap_or(4.0),
            }),
            ObjectiveKind::Mlp => None,
        }
    }

    fn resolve(&mut self) {
        match self.kind {
            ObjectiveKind::Quadratic => self.curvature.get_or_insert(1.0),
            ObjectiveKind::DoubleWell1d => self.barrier.get_or_insert(1.0),
            ObjectiveKind::DoubleWell2d => {
                self.barrier.get_or_insert(1.0);
                self.anisotropy.get_or_insert(4.0)
            }
            ObjectiveKind::Mlp => {
                self.activation.get_or_insert(Activation::Tanh);
                self.output.get_or_insert(OutputLoss::SoftmaxCrossEntropy);
                return;
            }
        };
    }

    fn validate(&self) -> Result<(), RunnerError> {
        let forbid = |present: bool, key: &str| {
            if present {
                Err(err(format!(
                    "[objective] key `{key}` does not apply to kind `{}`",
                    self.kind.name()
                )))
            } else {
                Ok(())
            }
        };
        match self.kind {
            ObjectiveKind::Quadratic => {
                forbid(self.barrier.is_some(), "barrier")?;
                forbid(self.anisotropy.is_some(), "anisotropy")?;
            }
            ObjectiveKind::DoubleWell1d => {
                forbid(self.curvature.is_some(), "curvature")?;
                forbid(self.anisotropy.is_some(), "anisotropy")?;
            }
            ObjectiveKind::DoubleWell2d => {
                forbid(self.curvature.is_some(), "curvature")?;
            }
            ObjectiveKind::Mlp => {
                forbid(self.curvature.is_some(), "curvature")?;
                forbid(self.barrier.is_some(), "barrier")?;
                forbid(self.anisotropy.is_some(), "anisotropy")?;
                let hidden = self
                    .hidden
                    .as_ref()
                    .ok_or_else(|| err("[objective] kind `mlp` requires `hidden = [..]`"))?;
                if hidden.is_empty() || hidden.iter().any(|&h| h == 0) {
                    return Err(err("[objective] `hidden` widths must all be ≥ 1"));
                }
            }
        }
        if !self.is_mlp() {
            for (present, key) in [
                (self.hidden.is_some(), "hidden"),
                (self.activation.is_some(), "activation"),
                (self.output.is_some(), "output"),
            ] {
                forbid(present, key)?;
            }
            if let Some(p) = self.potential() {
                p.validate().map_err(|e| err(format!("[objective] {e}")))?;
            }
        }
        Ok(())
    }
}

/// `[dataset] source = …` selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSource {
    TwoMoons,
    Blobs,
    Idx,
}

impl DatasetSource {
    fn name(self) -> &'static str {
        match self {
            DatasetSource::TwoMoons => "two-moons",
            DatasetSource::Blobs => "blobs",
            DatasetSource::Idx => "idx",
        }
    }
}

/// `[dataset]` — where MLP replicas get their examples. Required exactly
/// when the objective is an MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub source: DatasetSource,
    /// Example count for the synthetic sources.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n: Option<usize>,
    /// Gaussian jitter of the two-moons points.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub noise_sd: Option<f64>,
    /// Number of Gaussian blobs (= classes).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub classes: Option<usize>,
    /// Blob standard deviation.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spread: Option<f64>,
    /// Generator seed for the synthetic sources (default 7).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    /// IDX image file path.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub images: Option<PathBuf>,
    /// IDX label file path.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub labels: Option<PathBuf>,
    /// Validation share of the train/validation split (default 0.1).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub validation_fraction: Option<f64>,
    /// Split seed (default derived from `seed`).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub split_seed: Option<u64>,
    /// Subtract the per-feature train mean from both parts (default false).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub normalize: Option<bool>,
}

/// Salt deriving the default split seed from the dataset seed.
const SPLIT_SEED_SALT: u64 = 0x5B17_5EED;

impl DatasetSection {
    fn resolve(&mut self) {
        if self.source != DatasetSource::Idx {
            self.seed.get_or_insert(7);
        }
        self.validation_fraction.get_or_insert(0.1);
        self.normalize.get_or_insert(false);
        // split_seed stays lazy: its derived default can exceed the integer
        // range the config text format can express.
    }

    /// The split seed in effect: explicit, or derived from the dataset seed.
    pub fn resolved_split_seed(&self) -> u64 {
        self.split_seed.unwrap_or_else(|| derive_seed(self.seed.unwrap_or(7), SPLIT_SEED_SALT))
    }

    fn validate(&self) -> Result<(), RunnerError> {
        let require = |present: bool, key: &str| {
            if present {
                Ok(())
            } else {
                Err(err(format!(
                    "[dataset] source `{}` requires `{key}`",
                    self.source.name()
                )))
            }
        };
        let forbid = |present: bool, key: &str| {
            if present {
                Err(err(format!(
                    "[dataset] key `{key}` does not apply to source `{}`",
                    self.source.name()
                )))
            } else {
                Ok(())
            }
        };
        match self.source {
            DatasetSource::TwoMoons => {
                require(self.n.is_some(), "n")?;
                require(self.noise_sd.is_some(), "noise_sd")?;
                forbid(self.classes.is_some(), "classes")?;
                forbid(self.spread.is_some(), "spread")?;
                forbid(self.images.is_some(), "images")?;
                forbid(self.labels.is_some(), "labels")?;
            }
            DatasetSource::Blobs => {
                require(self.n.is_some(), "n")?;
                require(self.classes.is_some(), "classes")?;
                require(self.spread.is_some(), "spread")?;
                forbid(self.noise_sd.is_some(), "noise_sd")?;
                forbid(self.images.is_some(), "images")?;
                forbid(self.labels.is_some(), "labels")?;
            }
            DatasetSource::Idx => {
                require(self.images.is_some(), "images")?;
                require(self.labels.is_some(), "labels")?;
                forbid(self.n.is_some(), "n")?;
                forbid(self.noise_sd.is_some(), "noise_sd")?;
                forbid(self.classes.is_some(), "classes")?;
                forbid(self.spread.is_some(), "spread")?;
                forbid(self.seed.is_some(), "seed")?;
            }
        }
        let f = self.validation_fraction.unwrap_or(0.1);
        if !(f > 0.0 && f < 1.0) {
            return Err(err(format!(
                "[dataset] validation_fraction must lie strictly between 0 and 1, got {f}"
            )));
        }
        Ok(())
    }
}

/// The exchange constant: a fixed positive number, or `"auto"` to calibrate
/// it from a no-exchange preliminary run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CValue {
    Fixed(f64),
    Auto(AutoTag),
}

/// The literal string `"auto"` (the only non-numeric value `c` accepts).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoTag {
    #[serde(rename = "auto")]
    Auto,
}

impl CValue {
    pub const AUTO: CValue = CValue::Auto(AutoTag::Auto);

    pub fn is_auto(&self) -> bool {
        matches!(self, CValue::Auto(_))
    }

    pub fn fixed(&self) -> Option<f64> {
        match self {
            CValue::Fixed(c) => Some(*c),
            CValue::Auto(_) => None,
        }
    }
}

/// `[ladder]` — the hyperparameter being tempered and its rung values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSection {
    pub kind: HyperparameterKind,
    pub values: Vec<f64>,
    /// Exchange constant; defaults to `"auto"` in training modes.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub c: Option<CValue>,
}

/// `[schedule]` — the step budget and cadences of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    /// Steps before the first exchange barrier (default 0).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub init_steps: Option<u64>,
    /// Steps between exchange barriers (default 100).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exchange_every: Option<u64>,
    /// Total training steps per replica.
    pub total_steps: u64,
    /// Steps between metric evaluations (default = exchange_every).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eval_every: Option<u64>,
    /// Steps between weight-trace samples (omit to record no trace).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weight_sample_every: Option<u64>,
}

impl ScheduleSection {
    fn resolve(&mut self) {
        self.init_steps.get_or_insert(0);
        let exchange = *self.exchange_every.get_or_insert(100);
        self.eval_every.get_or_insert(exchange);
    }

    /// The engine schedule this section describes. Call after `resolve`.
    pub fn pt_schedule(&self, exchanges_enabled: bool) -> PtSchedule {
        PtSchedule {
            init_steps: self.init_steps.unwrap_or(0),
            exchange_every: self.exchange_every.unwrap_or(100),
            total_steps: self.total_steps,
            eval_every: self.eval_every.or(self.exchange_every).unwrap_or(100),
            weight_sample_every: self.weight_sample_every,
            exchanges_enabled,
        }
    }
}

/// `[optimizer]` — SGD settings for MLP objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    /// Required unless the ladder tempers the learning rate itself.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub learning_rate: Option<f64>,
    /// Mini-batch size (default 128).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub batch_size: Option<usize>,
    /// Momentum coefficient (default 0).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub momentum: Option<f64>,
    /// Base dropout rate applied when the ladder tempers something else
    /// (default 0).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dropout: Option<f64>,
    /// Base L2 penalty applied when the ladder tempers something else
    /// (default 0).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l2: Option<f64>,
    /// Step-indexed learning-rate anneal points (default none). Must stay
    /// empty when the ladder tempers the learning rate.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub anneal: Option<Vec<AnnealPoint>>,
}

impl OptimizerSection {
    fn resolve(&mut self) {
        self.batch_size.get_or_insert(128);
        self.momentum.get_or_insert(0.0);
        self.dropout.get_or_insert(0.0);
        self.l2.get_or_insert(0.0);
        self.anneal.get_or_insert_with(Vec::new);
    }
}

/// `[langevin]` — step size for analytic objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinSection {
    /// Integrator step size (default 1e-3).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub step: Option<f64>,
}

impl LangevinSection {
    pub fn step_size(&self) -> f64 {
        self.step.unwrap_or(1e-3)
    }
}

/// `[seeds]` — a base seed plus optional explicit streams. By default
/// replica i draws seed `derive(base, i)` and the exchange stream draws
/// `derive(base, EXCHANGE_STREAM_SALT)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SeedsSection {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub base: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub replicas: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exchange: Option<u64>,
}

impl SeedsSection {
    fn resolve(&mut self) {
        self.base.get_or_insert(42);
    }

    pub fn base_seed(&self) -> u64 {
        self.base.unwrap_or(42)
    }
}

/// `[diffusion]` — diffusion-mode step budget and sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSection {
    /// Independent seeds per ladder value (default 5, minimum 3).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_seeds: Option<usize>,
    /// Steps per curve.
    pub total_steps: u64,
    /// Steps between displacement samples.
    pub sample_every: u64,
}

impl DiffusionSection {
    fn resolve(&mut self) {
        self.n_seeds.get_or_insert(5);
    }
}

/// `[calibration]` — how auto-C reads the preliminary run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    /// Target acceptance band (default [0.2, 0.5]).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub band: Option<[f64; 2]>,
    /// Fraction of the post-init step range whose evaluations feed the
    /// loss histograms, taken from the end (default 0.5).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sample_window: Option<f64>,
}

impl CalibrationSection {
    pub const DEFAULT_BAND: (f64, f64) = (0.2, 0.5);

    fn resolve(&mut self) {
        self.band.get_or_insert([Self::DEFAULT_BAND.0, Self::DEFAULT_BAND.1]);
        self.sample_window.get_or_insert(0.5);
    }

    pub fn band_pair(&self) -> (f64, f64) {
        let [lo, hi] = self.band.unwrap_or([Self::DEFAULT_BAND.0, Self::DEFAULT_BAND.1]);
        (lo, hi)
    }

    pub fn window(&self) -> f64 {
        self.sample_window.unwrap_or(0.5)
    }

    fn validate(&self) -> Result<(), RunnerError> {
        let (lo, hi) = self.band_pair();
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(err(format!(
                "[calibration] band must satisfy 0 < lo < hi < 1, got [{lo}, {hi}]"
            )));
        }
        let w = self.window();
        if !(w > 0.0 && w <= 1.0) {
            return Err(err(format!(
                "[calibration] sample_window must lie in (0, 1], got {w}"
            )));
        }
        Ok(())
    }
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection {
            band: Some([Self::DEFAULT_BAND.0, Self::DEFAULT_BAND.1]),
            sample_window: Some(0.5),
        }
    }
}

/// `[gibbs]` — histogram and burn-in settings of gibbs-check mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsSection {
    /// Histogram domain lower edge (default -3).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lo: Option<f64>,
    /// Histogram domain upper edge (default 3).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hi: Option<f64>,
    /// Histogram bin count (default 200).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bins: Option<usize>,
    /// Leading fraction of trace samples discarded (default 0.2).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub burn_in: Option<f64>,
}

impl GibbsSection {
    fn resolve(&mut self) {
        self.lo.get_or_insert(-3.0);
        self.hi.get_or_insert(3.0);
        self.bins.get_or_insert(200);
        self.burn_in.get_or_insert(crate::gibbs::DEFAULT_BURN_IN);
    }

    pub fn grid(&self) -> crate::gibbs::GridSpec {
        crate::gibbs::GridSpec {
            lo: self.lo.unwrap_or(-3.0),
            hi: self.hi.unwrap_or(3.0),
            n_bins: self.bins.unwrap_or(200),
        }
    }

    pub fn burn(&self) -> f64 {
        self.burn_in.unwrap_or(crate::gibbs::DEFAULT_BURN_IN)
    }

    fn validate(&self) -> Result<(), RunnerError> {
        let g = self.grid();
        if !(g.lo.is_finite() && g.hi.is_finite() && g.lo < g.hi) {
            return Err(err(format!("[gibbs] needs lo < hi, got [{}, {}]", g.lo, g.hi)));
        }
        if g.n_bins < 2 {
            return Err(err("[gibbs] bins must be ≥ 2"));
        }
        let b = self.burn();
        if !(0.0..1.0).contains(&b) {
            return Err(err(format!("[gibbs] burn_in must lie in [0, 1), got {b}")));
        }
        Ok(())
    }
}

impl Default for GibbsSection {
    fn default() -> Self {
        let mut g = GibbsSection { lo: None, hi: None, bins: None, burn_in: None };
        g.resolve();
        g
    }
}

/// One fully-specified experiment. Parse with [`ExperimentConfig::parse_file`]
/// or [`ExperimentConfig::parse_str`]; both fill defaults and validate, so a
/// value of this type in hand is always runnable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Output directory; overridable by the CLI and the output-root
    /// environment variable.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub out_dir: Option<PathBuf>,
    pub objective: ObjectiveSection,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dataset: Option<DatasetSection>,
    pub ladder: LadderSection,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub schedule: Option<ScheduleSection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub optimizer: Option<OptimizerSection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub langevin: Option<LangevinSection>,
    #[serde(default)]
    pub seeds: SeedsSection,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diffusion: Option<DiffusionSection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub calibration: Option<CalibrationSection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gibbs: Option<GibbsSection>,
}

impl ExperimentConfig {
    /// Reads, parses, defaults, and validates a config file.
    pub fn parse_file(path: &Path) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path).map_err(RunnerError::io(path))?;
        Self::parse_str(&text)
    }

    /// Parses, defaults, and validates config text.
    pub fn parse_str(text: &str) -> Result<Self, RunnerError> {
        let mut config: ExperimentConfig =
            toml::from_str(text).map_err(|e| err(e.to_string().trim_end().to_string()))?;
        config.resolve();
        config.validate()?;
        Ok(config)
    }

    /// Materializes every documented default in place.
    fn resolve(&mut self) {
        self.objective.resolve();
        if let Some(d) = self.dataset.as_mut() {
            d.resolve();
        }
        if let Some(s) = self.schedule.as_mut() {
            s.resolve();
        }
        if let Some(o) = self.optimizer.as_mut() {
            o.resolve();
        }
        self.seeds.resolve();
        if let Some(d) = self.diffusion.as_mut() {
            d.resolve();
        }
        if let Some(c) = self.calibration.as_mut() {
            c.resolve();
        }
        if let Some(g) = self.gibbs.as_mut() {
            g.resolve();
        }
        // Mode-dependent defaults. Grid runs have no exchanges, so C is
        // never consulted and no calibration section is materialized.
        match self.mode {
            Mode::Pt | Mode::GibbsCheck | Mode::CalibrateC => {
                self.ladder.c.get_or_insert(CValue::AUTO);
                if self.ladder.c == Some(CValue::AUTO) && self.calibration.is_none() {
                    self.calibration = Some(CalibrationSection::default());
                }
            }
            Mode::Grid => {
                self.ladder.c.get_or_insert(CValue::AUTO);
            }
            Mode::Diffusion => {}
        }
        if self.mode == Mode::GibbsCheck && self.gibbs.is_none() {
            self.gibbs = Some(GibbsSection::default());
        }
        if !self.objective.is_mlp() && self.langevin.is_none() && self.mode != Mode::Diffusion {
            self.langevin = Some(LangevinSection { step: Some(1e-3) });
        }
        if !self.objective.is_mlp() {
            if let Some(l) = self.langevin.as_mut() {
                l.step.get_or_insert(1e-3);
            } else {
                self.langevin = Some(LangevinSection { step: Some(1e-3) });
            }
        }
    }

    /// Cross-section consistency. Every rule names the offending key.
    fn validate(&self) -> Result<(), RunnerError> {
        // Substrate coupling.
        if self.objective.is_mlp() {
            if self.dataset.is_none() {
                return Err(err("an mlp objective requires a [dataset] section"));
            }
            if self.optimizer.is_none() {
                return Err(err("an mlp objective requires an [optimizer] section"));
            }
            if self.langevin.is_some() {
                return Err(err("[langevin] applies only to analytic objectives"));
            }
            if self.ladder.kind == HyperparameterKind::LangevinTemperature {
                return Err(err(
                    "a langevin_temperature ladder requires an analytic objective",
                ));
            }
        } else {
            if self.dataset.is_some() {
                return Err(err("[dataset] applies only to mlp objectives"));
            }
            if self.optimizer.is_some() {
                return Err(err("[optimizer] applies only to mlp objectives"));
            }
            if self.ladder.kind != HyperparameterKind::LangevinTemperature {
                return Err(err(format!(
                    "an analytic objective is driven by a langevin_temperature ladder, not {}",
                    ladder_kind_name(self.ladder.kind)
                )));
            }
            if let Some(l) = &self.langevin {
                let s = l.step_size();
                if !(s > 0.0 && s.is_finite()) {
                    return Err(err(format!("[langevin] step must be positive, got {s}")));
                }
            }
        }
        self.objective.validate()?;
        if let Some(d) = &self.dataset {
            d.validate()?;
        }
        self.validate_ladder()?;
        if let Some(o) = &self.optimizer {
            self.validate_optimizer(o)?;
        }
        if let Some(c) = &self.calibration {
            c.validate()?;
        }
        if let Some(g) = &self.gibbs {
            g.validate()?;
        }
        if self.mode == Mode::Diffusion {
            if self.seeds.replicas.is_some() || self.seeds.exchange.is_some() {
                return Err(err(
                    "diffusion derives one stream per seed index from [seeds] base; remove \
                     `replicas`/`exchange`",
                ));
            }
        } else if let Some(replicas) = &self.seeds.replicas {
            let m = self.ladder.values.len();
            if replicas.len() != m {
                return Err(err(format!(
                    "[seeds] replicas lists {} seeds but the ladder has {m} rungs",
                    replicas.len()
                )));
            }
        }
        self.validate_mode_sections()
    }

    fn validate_ladder(&self) -> Result<(), RunnerError> {
        let kind = self.ladder.kind;
        let values = &self.ladder.values;
        if kind == HyperparameterKind::L2Lambda {
            if self.mode != Mode::Diffusion {
                return Err(err(
                    "an l2_lambda ladder has no effective temperature; it is only usable in \
                     diffusion mode",
                ));
            }
            if values.len() < 2 {
                return Err(err("[ladder] needs at least 2 values"));
            }
            for &v in values {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(err(format!("[ladder] l2_lambda values must be positive, got {v}")));
                }
            }
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(err("[ladder] values must be distinct"));
            }
        } else {
            // Probe with a placeholder C so value-domain problems surface at
            // parse time even when C is "auto".
            let probe_c = self.ladder.c.and_then(|c| c.fixed()).unwrap_or(1.0);
            build_ladder(kind, values, probe_c).map_err(|e| err(format!("[ladder] {e}")))?;
        }
        match self.mode {
            Mode::Diffusion => {
                if self.ladder.c.is_some() {
                    return Err(err("[ladder] c is not used in diffusion mode; remove it"));
                }
            }
            Mode::CalibrateC => {
                if matches!(self.ladder.c, Some(CValue::Fixed(_))) {
                    return Err(err("calibrate-c computes C; remove `c` from [ladder]"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn validate_optimizer(&self, o: &OptimizerSection) -> Result<(), RunnerError> {
        let tempering_lr = self.ladder.kind == HyperparameterKind::LearningRate;
        match o.learning_rate {
            None if !tempering_lr => {
                return Err(err("[optimizer] learning_rate is required (the ladder does not set it)"));
            }
            Some(lr) if !(lr > 0.0 && lr.is_finite()) => {
                return Err(err(format!("[optimizer] learning_rate must be positive, got {lr}")));
            }
            _ => {}
        }
        if o.batch_size == Some(0) {
            return Err(err("[optimizer] batch_size must be ≥ 1"));
        }
        let momentum = o.momentum.unwrap_or(0.0);
        if !(0.0..1.0).contains(&momentum) {
            return Err(err(format!("[optimizer] momentum must lie in [0, 1), got {momentum}")));
        }
        let dropout = o.dropout.unwrap_or(0.0);
        if !(0.0..1.0).contains(&dropout) {
            return Err(err(format!("[optimizer] dropout must lie in [0, 1), got {dropout}")));
        }
        let l2 = o.l2.unwrap_or(0.0);
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(err(format!("[optimizer] l2 must be nonnegative, got {l2}")));
        }
        let anneal = o.anneal.as_deref().unwrap_or(&[]);
        if tempering_lr && !anneal.is_empty() {
            return Err(err(
                "[optimizer] anneal cannot be combined with a learning_rate ladder",
            ));
        }
        Ok(())
    }

    fn validate_mode_sections(&self) -> Result<(), RunnerError> {
        let require_schedule = || {
            self.schedule.as_ref().ok_or_else(|| {
                err(format!("mode `{}` requires a [schedule] section", self.mode.name()))
            })
        };
        let forbid = |present: bool, section: &str| {
            if present {
                Err(err(format!(
                    "[{section}] is not used in mode `{}`; remove it",
                    self.mode.name()
                )))
            } else {
                Ok(())
            }
        };
        match self.mode {
            Mode::Pt | Mode::Grid | Mode::CalibrateC => {
                let s = require_schedule()?;
                s.pt_schedule(false).validate().map_err(|e| err(format!("[schedule] {e}")))?;
                forbid(self.diffusion.is_some(), "diffusion")?;
                forbid(self.gibbs.is_some(), "gibbs")?;
                if self.mode == Mode::Grid {
                    forbid(self.calibration.is_some(), "calibration")?;
                }
            }
            Mode::GibbsCheck => {
                let s = require_schedule()?;
                s.pt_schedule(true).validate().map_err(|e| err(format!("[schedule] {e}")))?;
                if s.weight_sample_every.is_none() {
                    return Err(err(
                        "gibbs-check needs [schedule] weight_sample_every to record a trace",
                    ));
                }
                forbid(self.diffusion.is_some(), "diffusion")?;
                if self.objective.is_mlp() {
                    return Err(err("gibbs-check verifies analytic potentials, not MLPs"));
                }
                let dim = match self.objective.kind {
                    ObjectiveKind::Quadratic | ObjectiveKind::DoubleWell1d => 1,
                    ObjectiveKind::DoubleWell2d => 2,
                    ObjectiveKind::Mlp => unreachable!("rejected above"),
                };
                if dim != 1 {
                    return Err(err(
                        "gibbs-check histograms are one-dimensional; use a 1-D potential",
                    ));
                }
            }
            Mode::Diffusion => {
                let d = self
                    .diffusion
                    .as_ref()
                    .ok_or_else(|| err("mode `diffusion` requires a [diffusion] section"))?;
                forbid(self.schedule.is_some(), "schedule")?;
                forbid(self.gibbs.is_some(), "gibbs")?;
                forbid(self.calibration.is_some(), "calibration")?;
                if d.total_steps == 0 {
                    return Err(err("[diffusion] total_steps must be ≥ 1"));
                }
                if d.sample_every == 0 {
                    return Err(err("[diffusion] sample_every must be ≥ 1"));
                }
                if d.n_seeds.unwrap_or(5) < 3 {
                    return Err(err("[diffusion] n_seeds must be ≥ 3 for a meaningful verdict"));
                }
            }
        }
        if self.calibration.is_some()
            && matches!(self.mode, Mode::Pt | Mode::GibbsCheck)
            && matches!(self.ladder.c, Some(CValue::Fixed(_)))
        {
            return Err(err("[calibration] requires ladder c = \"auto\""));
        }
        Ok(())
    }

    /// Canonical serialization used for hashing: field order is fixed by
    /// the struct definitions, so equal configs hash equally.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialization cannot fail")
    }

    /// Hex SHA-256 of the resolved config — the run's identity.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    /// Replaces the entire seed section with streams derived from `base`.
    pub fn apply_seed_override(&mut self, base: u64) {
        self.seeds = SeedsSection { base: Some(base), replicas: None, exchange: None };
    }

    /// The engine seed set for an `m`-rung ladder.
    pub fn resolved_seeds(&self, m: usize) -> Result<Seeds, RunnerError> {
        let base = self.seeds.base_seed();
        let replicas = match &self.seeds.replicas {
            Some(list) => {
                if list.len() != m {
                    return Err(err(format!(
                        "[seeds] replicas lists {} seeds but the ladder has {m} rungs",
                        list.len()
                    )));
                }
                list.clone()
            }
            None => (0..m as u64).map(|i| derive_seed(base, i)).collect(),
        };
        let exchange =
            self.seeds.exchange.unwrap_or_else(|| derive_seed(base, EXCHANGE_STREAM_SALT));
        Ok(Seeds { replicas, exchange })
    }

    /// The training schedule (pt/grid/gibbs-check/calibrate-c modes only).
    pub fn pt_schedule(&self, exchanges_enabled: bool) -> PtSchedule {
        self.schedule
            .as_ref()
            .expect("schedule presence is validated per mode")
            .pt_schedule(exchanges_enabled)
    }
}

fn ladder_kind_name(kind: HyperparameterKind) -> &'static str {
    match kind {
        HyperparameterKind::LearningRate => "learning_rate",
        HyperparameterKind::DropoutRate => "dropout_rate",
        HyperparameterKind::LangevinTemperature => "langevin_temperature",
        HyperparameterKind::BatchSize => "batch_size",
        HyperparameterKind::L2Lambda => "l2_lambda",
    }
}
