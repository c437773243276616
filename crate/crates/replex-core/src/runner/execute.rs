//! Mode dispatch: turns a validated config into an in-memory [`RunRecord`],
//! and persists records to a run directory. Execution is deterministic in
//! the resolved config — the worker count only sizes the rayon pool, never
//! the results — so persisted outputs are byte-stable across reruns.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{normalize_per_feature_mean, read_idx, split, synth_blobs, synth_two_moons, Dataset};
use crate::diffusion::{
    classify_smoothing, noise_orientation, run_diffusion_experiment, ClassifyOptions,
    DiffusionCurve, DiffusionSchedule, NoiseOrientation, SmoothnessVerdict,
};
use crate::dynamics::{
    DynamicsError, LangevinDynamics, ReplicaDynamics, SgdDynamics, BATCH_STREAM_SALT,
};
use crate::gibbs::{analytic_gibbs, burn_in, mixing_report, tv_distance, GridSpec, MixingReport};
use crate::landscape::AnalyticPotential;
use crate::nn::{MlpSpec, RegularizerConfig};
use crate::optimizer::SgdConfig;
use crate::tempering::{
    build_ladder, calibrate_c, run_parallel_tempering, Calibration, HyperparameterKind,
    PtOutcome, PtSchedule, Seeds,
};
use crate::derive_seed;

use super::checkpoint::write_checkpoint;
use super::config::{CValue, DatasetSource, ExperimentConfig, Mode};
use super::metrics::{write_json, write_jsonl, Meta, ReplicaSummary};
use super::RunnerError;

/// Everything one run produced, paired with the config that produced it.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub body: RecordBody,
}

/// The mode-specific payload of a run.
#[derive(Debug, Clone)]
pub enum RecordBody {
    Training(TrainingRecord),
    Diffusion(DiffusionRecord),
    GibbsCheck(GibbsRecord),
    Calibration(CalibrationRecord),
}

/// Output of `grid` and `pt` modes.
#[derive(Debug, Clone)]
pub struct TrainingRecord {
    pub outcome: PtOutcome,
    /// The C the run used; `None` for grid runs with `c = "auto"`, where C
    /// never enters the dynamics.
    pub resolved_c: Option<f64>,
    /// Present when C was auto-calibrated from a no-exchange twin.
    pub calibration: Option<Calibration>,
}

/// Output of `diffusion` mode.
#[derive(Debug, Clone)]
pub struct DiffusionRecord {
    pub curves: Vec<DiffusionCurve>,
    pub verdict: SmoothnessVerdict,
    /// False when the ladder kind declares no noise orientation (L2): the
    /// monotonicity score is then computed under a conventional ascending
    /// orientation and `temperature_like` is structurally false — the
    /// plateau flags carry the signal instead.
    pub oriented: bool,
}

/// Output of `gibbs-check` mode: the tempered run, its no-exchange twin,
/// and the fidelity/mixing report comparing both against the exact density.
#[derive(Debug, Clone)]
pub struct GibbsRecord {
    pub pt: PtOutcome,
    pub baseline: PtOutcome,
    pub report: GibbsReport,
    pub resolved_c: f64,
    pub calibration: Option<Calibration>,
}

/// Output of `calibrate-c` mode.
#[derive(Debug, Clone)]
pub struct CalibrationRecord {
    pub baseline: PtOutcome,
    pub calibration: Calibration,
    pub band: (f64, f64),
    /// Loss samples per slot that fed the calibration.
    pub samples_per_slot: Vec<usize>,
}

/// Per-slot sampling fidelity: TV distance between the slot chain's
/// empirical histogram and the analytic Gibbs density at its β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotGibbs {
    pub slot: usize,
    pub value: f64,
    pub beta: f64,
    pub n_samples: usize,
    pub tv: f64,
}

/// The gibbs-check verdict written to `gibbs_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsReport {
    pub grid: GridSpec,
    pub burn_in: f64,
    pub per_slot: Vec<SlotGibbs>,
    pub mixing: MixingReport,
}

impl RunRecord {
    /// True when any replica (or diffusion curve) diverged; maps to exit
    /// code 3.
    pub fn has_divergence(&self) -> bool {
        match &self.body {
            RecordBody::Training(t) => !t.outcome.divergences.is_empty(),
            RecordBody::Diffusion(d) => d.curves.iter().any(|c| c.diverged),
            RecordBody::GibbsCheck(g) => {
                !g.pt.divergences.is_empty() || !g.baseline.divergences.is_empty()
            }
            RecordBody::Calibration(c) => !c.baseline.divergences.is_empty(),
        }
    }
}

/// Runs `config` to completion. `workers` sizes a dedicated rayon pool for
/// the run; `None` uses the ambient pool. Results are identical either way.
pub fn execute(config: &ExperimentConfig, workers: Option<usize>) -> Result<RunRecord, RunnerError> {
    let body = match workers {
        Some(n) => {
            if n == 0 {
                return Err(RunnerError::Config("worker count must be ≥ 1".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| RunnerError::Config(format!("worker pool: {e}")))?;
            pool.install(|| dispatch(config))?
        }
        None => dispatch(config)?,
    };
    Ok(RunRecord { config: config.clone(), config_hash: config.hash(), body })
}

fn dispatch(config: &ExperimentConfig) -> Result<RecordBody, RunnerError> {
    match config.mode {
        Mode::Grid | Mode::Pt => Ok(RecordBody::Training(training(config)?)),
        Mode::Diffusion => Ok(RecordBody::Diffusion(diffusion(config)?)),
        Mode::GibbsCheck => Ok(RecordBody::GibbsCheck(gibbs_check(config)?)),
        Mode::CalibrateC => Ok(RecordBody::Calibration(calibrate(config)?)),
    }
}

/// The training substrate a config describes: one analytic potential under
/// Langevin dynamics, or one MLP + dataset under SGD.
enum Substrate {
    Analytic { potential: AnalyticPotential, step: f64 },
    Mlp(MlpBundle),
}

struct MlpBundle {
    spec: MlpSpec,
    train: Arc<Dataset>,
    validation: Arc<Dataset>,
    cfg: SgdConfig,
    reg: RegularizerConfig,
}

fn build_substrate(config: &ExperimentConfig) -> Result<Substrate, RunnerError> {
    if let Some(potential) = config.objective.potential() {
        let step = config.langevin.as_ref().map_or(1e-3, |l| l.step_size());
        return Ok(Substrate::Analytic { potential, step });
    }
    let ds = config.dataset.as_ref().expect("validated: mlp has a dataset");
    let full = match ds.source {
        DatasetSource::TwoMoons => synth_two_moons(
            ds.n.expect("validated"),
            ds.noise_sd.expect("validated"),
            ds.seed.expect("resolved"),
        ),
        DatasetSource::Blobs => synth_blobs(
            ds.n.expect("validated"),
            ds.classes.expect("validated"),
            ds.spread.expect("validated"),
            ds.seed.expect("resolved"),
        ),
        DatasetSource::Idx => read_idx(
            ds.images.as_ref().expect("validated"),
            ds.labels.as_ref().expect("validated"),
        ),
    }
    .map_err(|e| RunnerError::Config(format!("[dataset] {e}")))?;
    let (mut train, mut validation) = split(
        &full,
        ds.validation_fraction.expect("resolved"),
        ds.resolved_split_seed(),
    )
    .map_err(|e| RunnerError::Config(format!("[dataset] {e}")))?;
    if ds.normalize == Some(true) {
        normalize_per_feature_mean(&mut train, &mut [&mut validation]);
    }

    let obj = &config.objective;
    let mut layers = Vec::with_capacity(obj.hidden.as_ref().map_or(0, Vec::len) + 2);
    layers.push(train.d);
    layers.extend(obj.hidden.as_ref().expect("validated").iter().copied());
    layers.push(train.n_classes);
    let spec = MlpSpec::uniform(
        layers,
        obj.activation.expect("resolved"),
        obj.output.expect("resolved"),
    );
    spec.validate().map_err(|e| RunnerError::Config(format!("[objective] {e}")))?;

    let opt = config.optimizer.as_ref().expect("validated: mlp has an optimizer");
    let base_lr = match opt.learning_rate {
        Some(lr) => lr,
        // A learning-rate ladder overrides the rate per slot; seed the base
        // config with the first rung so it validates.
        None => config.ladder.values[0],
    };
    let cfg = SgdConfig {
        learning_rate: base_lr,
        batch_size: opt.batch_size.expect("resolved"),
        momentum: opt.momentum.expect("resolved"),
        anneal: opt.anneal.clone().expect("resolved"),
    };
    let reg = RegularizerConfig {
        dropout_rate: opt.dropout.expect("resolved"),
        l2_lambda: opt.l2.expect("resolved"),
    };
    Ok(Substrate::Mlp(MlpBundle { spec, train: Arc::new(train), validation: Arc::new(validation), cfg, reg }))
}

type BoxedFactory<'a> =
    Box<dyn Fn(usize, u64) -> Result<Box<dyn ReplicaDynamics>, DynamicsError> + Sync + 'a>;

fn make_factory(substrate: &Substrate, kind: HyperparameterKind) -> BoxedFactory<'_> {
    match substrate {
        Substrate::Analytic { potential, step } => {
            let (potential, step) = (*potential, *step);
            Box::new(move |_index, _seed| {
                Ok(Box::new(LangevinDynamics::new(potential, step, kind)?)
                    as Box<dyn ReplicaDynamics>)
            })
        }
        Substrate::Mlp(bundle) => Box::new(move |_index, seed| {
            Ok(Box::new(SgdDynamics::new(
                bundle.spec.clone(),
                Arc::clone(&bundle.train),
                Arc::clone(&bundle.validation),
                bundle.cfg.clone(),
                bundle.reg,
                kind,
                derive_seed(seed, BATCH_STREAM_SALT),
            )?) as Box<dyn ReplicaDynamics>)
        }),
    }
}

/// Validation losses per slot over the tail of a run: metric rows with
/// `step ≥ total − window·(total − init)`, grouped by the slot the row was
/// recorded at. Non-finite losses (diverging replicas) are dropped.
fn slot_loss_samples(outcome: &PtOutcome, schedule: &PtSchedule, window: f64) -> Vec<Vec<f64>> {
    let span = (schedule.total_steps - schedule.init_steps) as f64;
    let cutoff = schedule.total_steps as f64 - window * span;
    let mut samples = vec![Vec::new(); outcome.ladder.m()];
    for row in &outcome.metrics {
        if row.step as f64 >= cutoff && row.val_loss.is_finite() {
            samples[row.slot].push(row.val_loss);
        }
    }
    samples
}

/// Runs the no-exchange twin and calibrates C from its tail losses. The
/// twin's trajectories do not depend on C (it only ever enters accepted
/// exchanges), so the probe ladder carries C = 1 as a placeholder.
fn auto_calibrate(
    config: &ExperimentConfig,
    factory: &BoxedFactory<'_>,
    seeds: &Seeds,
) -> Result<(Calibration, PtOutcome), RunnerError> {
    let probe = build_ladder(config.ladder.kind, &config.ladder.values, 1.0)
        .map_err(RunnerError::Engine)?;
    let schedule = config.pt_schedule(false);
    let baseline = run_parallel_tempering(&**factory, &probe, &schedule, seeds)?;
    let section = config.calibration.unwrap_or_default();
    let samples = slot_loss_samples(&baseline, &schedule, section.window());
    let calibration = calibrate_c(&probe.betas, &samples, section.band_pair())?;
    Ok((calibration, baseline))
}

fn training(config: &ExperimentConfig) -> Result<TrainingRecord, RunnerError> {
    let substrate = build_substrate(config)?;
    let kind = config.ladder.kind;
    let factory = make_factory(&substrate, kind);
    let seeds = config.resolved_seeds(config.ladder.values.len())?;
    let exchanges = config.mode == Mode::Pt;

    let (c, resolved_c, calibration) = match config.ladder.c {
        Some(CValue::Fixed(c)) => (c, Some(c), None),
        _ if exchanges => {
            let (calibration, _twin) = auto_calibrate(config, &factory, &seeds)?;
            (calibration.c, Some(calibration.c), Some(calibration))
        }
        // Grid with auto C: no exchanges will ever consult C.
        _ => (1.0, None, None),
    };
    let ladder = build_ladder(kind, &config.ladder.values, c).map_err(RunnerError::Engine)?;
    let outcome =
        run_parallel_tempering(&*factory, &ladder, &config.pt_schedule(exchanges), &seeds)?;
    Ok(TrainingRecord { outcome, resolved_c, calibration })
}

fn diffusion(config: &ExperimentConfig) -> Result<DiffusionRecord, RunnerError> {
    let substrate = build_substrate(config)?;
    let kind = config.ladder.kind;
    let factory = make_factory(&substrate, kind);
    let section = config.diffusion.expect("validated: diffusion mode has its section");
    let base = config.seeds.base_seed();
    let seeds: Vec<u64> =
        (0..section.n_seeds.expect("resolved") as u64).map(|i| derive_seed(base, i)).collect();
    let schedule =
        DiffusionSchedule { total_steps: section.total_steps, sample_every: section.sample_every };
    let curves = run_diffusion_experiment(&*factory, &config.ladder.values, &seeds, schedule)?;
    let orientation = noise_orientation(kind);
    let oriented = orientation.is_some();
    let verdict = classify_smoothing(
        kind,
        orientation.unwrap_or(NoiseOrientation::LargerIsNoisier),
        &curves,
        &ClassifyOptions::default(),
    )?;
    Ok(DiffusionRecord { curves, verdict, oriented })
}

fn gibbs_check(config: &ExperimentConfig) -> Result<GibbsRecord, RunnerError> {
    let substrate = build_substrate(config)?;
    let potential = match &substrate {
        Substrate::Analytic { potential, .. } => *potential,
        Substrate::Mlp(_) => unreachable!("validated: gibbs-check is analytic-only"),
    };
    let kind = config.ladder.kind;
    let factory = make_factory(&substrate, kind);
    let seeds = config.resolved_seeds(config.ladder.values.len())?;

    // The no-exchange twin serves double duty: mixing baseline, and (when C
    // is auto) the calibration sample source.
    let probe = build_ladder(kind, &config.ladder.values, 1.0).map_err(RunnerError::Engine)?;
    let baseline_schedule = config.pt_schedule(false);
    let baseline = run_parallel_tempering(&*factory, &probe, &baseline_schedule, &seeds)?;

    let (c, calibration) = match config.ladder.c {
        Some(CValue::Fixed(c)) => (c, None),
        _ => {
            let section = config.calibration.unwrap_or_default();
            let samples = slot_loss_samples(&baseline, &baseline_schedule, section.window());
            let calibration = calibrate_c(&probe.betas, &samples, section.band_pair())?;
            (calibration.c, Some(calibration))
        }
    };
    let ladder = build_ladder(kind, &config.ladder.values, c).map_err(RunnerError::Engine)?;
    let pt = run_parallel_tempering(&*factory, &ladder, &config.pt_schedule(true), &seeds)?;

    let gibbs = config.gibbs.expect("resolved: gibbs-check has its section");
    let grid_spec = gibbs.grid();
    let burn = gibbs.burn();
    let trace = pt.trace.as_ref().expect("validated: gibbs-check records a trace");
    let mut per_slot = Vec::with_capacity(ladder.m());
    for slot in 0..ladder.m() {
        let series = trace.slot_series(slot, 0);
        let kept = burn_in(&series, burn);
        let mut grid = analytic_gibbs(&potential, ladder.betas[slot], grid_spec)?;
        grid.accumulate(kept.iter().copied());
        per_slot.push(SlotGibbs {
            slot,
            value: ladder.values[slot],
            beta: ladder.betas[slot],
            n_samples: kept.len(),
            tv: tv_distance(&grid)?,
        });
    }
    let mixing = mixing_report(&pt, &baseline, &potential)?;
    let report = GibbsReport { grid: grid_spec, burn_in: burn, per_slot, mixing };
    Ok(GibbsRecord { pt, baseline, report, resolved_c: c, calibration })
}

fn calibrate(config: &ExperimentConfig) -> Result<CalibrationRecord, RunnerError> {
    let substrate = build_substrate(config)?;
    let factory = make_factory(&substrate, config.ladder.kind);
    let seeds = config.resolved_seeds(config.ladder.values.len())?;
    let probe = build_ladder(config.ladder.kind, &config.ladder.values, 1.0)
        .map_err(RunnerError::Engine)?;
    let schedule = config.pt_schedule(false);
    let baseline = run_parallel_tempering(&*factory, &probe, &schedule, &seeds)?;
    let section = config.calibration.unwrap_or_default();
    let samples = slot_loss_samples(&baseline, &schedule, section.window());
    let samples_per_slot = samples.iter().map(Vec::len).collect();
    let calibration = calibrate_c(&probe.betas, &samples, section.band_pair())?;
    Ok(CalibrationRecord { baseline, calibration, band: section.band_pair(), samples_per_slot })
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

fn replica_summaries(outcome: &PtOutcome) -> Vec<ReplicaSummary> {
    outcome
        .replicas
        .iter()
        .map(|r| ReplicaSummary {
            replica: r.id,
            slot: r.final_slot,
            steps: r.steps_completed,
            diverged: r.diverged,
            train_loss: r.final_train_loss,
            val_loss: r.final_val_loss,
            val_error: r.final_val_error,
        })
        .collect()
}

fn write_outcome_files(dir: &Path, outcome: &PtOutcome) -> Result<(), RunnerError> {
    write_jsonl(&dir.join("metrics.jsonl"), &outcome.metrics)?;
    write_jsonl(&dir.join("events.jsonl"), &outcome.events)?;
    write_jsonl(&dir.join("divergences.jsonl"), &outcome.divergences)?;
    write_checkpoint(&dir.join("checkpoint.bin"), outcome)
}

/// Serialized form of `calibration.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CalibrationJson {
    c: f64,
    predicted_acceptance: f64,
    degenerate: bool,
    band: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    samples_per_slot: Option<Vec<usize>>,
}

fn calibration_json(cal: &Calibration, band: (f64, f64), samples: Option<Vec<usize>>) -> CalibrationJson {
    CalibrationJson {
        c: cal.c,
        predicted_acceptance: cal.predicted_acceptance,
        degenerate: cal.degenerate,
        band: [band.0, band.1],
        samples_per_slot: samples,
    }
}

/// Writes every artifact of a completed run into `dir` (created if needed).
/// All files are written atomically and contain nothing beyond the record,
/// so a second `persist` of the same record is byte-identical.
pub fn persist(record: &RunRecord, dir: &Path) -> Result<(), RunnerError> {
    std::fs::create_dir_all(dir).map_err(RunnerError::io(dir))?;
    let band = record.config.calibration.map_or(
        super::config::CalibrationSection::DEFAULT_BAND,
        |c| c.band_pair(),
    );
    let mut meta = Meta {
        config_hash: record.config_hash.clone(),
        mode: record.config.mode.name().to_string(),
        status: "complete".into(),
        error: None,
        ladder: None,
        resolved_c: None,
        schedule: None,
        seeds: None,
        stats: None,
        diverged_replicas: Vec::new(),
        final_state: Vec::new(),
    };
    match &record.body {
        RecordBody::Training(t) => {
            meta.ladder = Some(t.outcome.ladder.values.clone());
            meta.resolved_c = t.resolved_c;
            meta.schedule = Some(record.config.pt_schedule(record.config.mode == Mode::Pt));
            meta.seeds = Some(record.config.resolved_seeds(t.outcome.ladder.m())?);
            meta.stats = Some(t.outcome.stats.clone());
            meta.diverged_replicas = t.outcome.divergences.iter().map(|d| d.replica).collect();
            meta.final_state = replica_summaries(&t.outcome);
            write_outcome_files(dir, &t.outcome)?;
            if let Some(cal) = &t.calibration {
                write_json(&dir.join("calibration.json"), &calibration_json(cal, band, None))?;
            }
        }
        RecordBody::Diffusion(d) => {
            meta.ladder = Some(record.config.ladder.values.clone());
            write_jsonl(&dir.join("diffusion.jsonl"), &d.curves)?;
            #[derive(Serialize)]
            struct VerdictJson<'a> {
                oriented: bool,
                #[serde(flatten)]
                verdict: &'a SmoothnessVerdict,
            }
            write_json(
                &dir.join("verdict.json"),
                &VerdictJson { oriented: d.oriented, verdict: &d.verdict },
            )?;
        }
        RecordBody::GibbsCheck(g) => {
            meta.ladder = Some(g.pt.ladder.values.clone());
            meta.resolved_c = Some(g.resolved_c);
            meta.schedule = Some(record.config.pt_schedule(true));
            meta.seeds = Some(record.config.resolved_seeds(g.pt.ladder.m())?);
            meta.stats = Some(g.pt.stats.clone());
            meta.diverged_replicas = g.pt.divergences.iter().map(|d| d.replica).collect();
            meta.final_state = replica_summaries(&g.pt);
            write_outcome_files(dir, &g.pt)?;
            let baseline_dir = dir.join("baseline");
            std::fs::create_dir_all(&baseline_dir).map_err(RunnerError::io(&baseline_dir))?;
            write_outcome_files(&baseline_dir, &g.baseline)?;
            write_json(&dir.join("gibbs_report.json"), &g.report)?;
            super::metrics::atomic_write(
                &dir.join("report.txt"),
                render_gibbs_report(&g.report).as_bytes(),
            )?;
            if let Some(cal) = &g.calibration {
                write_json(&dir.join("calibration.json"), &calibration_json(cal, band, None))?;
            }
        }
        RecordBody::Calibration(c) => {
            meta.ladder = Some(c.baseline.ladder.values.clone());
            meta.resolved_c = Some(c.calibration.c);
            meta.schedule = Some(record.config.pt_schedule(false));
            meta.seeds = Some(record.config.resolved_seeds(c.baseline.ladder.m())?);
            meta.diverged_replicas = c.baseline.divergences.iter().map(|d| d.replica).collect();
            meta.final_state = replica_summaries(&c.baseline);
            let baseline_dir = dir.join("baseline");
            std::fs::create_dir_all(&baseline_dir).map_err(RunnerError::io(&baseline_dir))?;
            write_outcome_files(&baseline_dir, &c.baseline)?;
            write_json(
                &dir.join("calibration.json"),
                &calibration_json(&c.calibration, c.band, Some(c.samples_per_slot.clone())),
            )?;
        }
    }
    write_json(&dir.join("meta.json"), &meta)
}

/// Marks an aborted run: `meta.json` records status "aborted" and the error,
/// leaving whatever partial outputs exist in place for inspection.
pub fn persist_abort(
    config: &ExperimentConfig,
    dir: &Path,
    error: &RunnerError,
) -> Result<(), RunnerError> {
    std::fs::create_dir_all(dir).map_err(RunnerError::io(dir))?;
    let meta = Meta {
        config_hash: config.hash(),
        mode: config.mode.name().to_string(),
        status: "aborted".into(),
        error: Some(error.to_string()),
        ladder: None,
        resolved_c: None,
        schedule: None,
        seeds: None,
        stats: None,
        diverged_replicas: Vec::new(),
        final_state: Vec::new(),
    };
    write_json(&dir.join("meta.json"), &meta)
}

fn render_gibbs_report(report: &GibbsReport) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "sampling fidelity (tv per slot, burn-in {:.2})", report.burn_in);
    let _ = writeln!(
        out,
        "domain [{}, {}] x {} bins",
        report.grid.lo, report.grid.hi, report.grid.n_bins
    );
    let _ = writeln!(out, "slot  value        beta         n_samples  tv");
    for s in &report.per_slot {
        let _ = writeln!(
            out,
            "{:<4}  {:<11.6}  {:<11.6}  {:<9}  {:.6}",
            s.slot, s.value, s.beta, s.n_samples, s.tv
        );
    }
    let m = &report.mixing;
    let _ = writeln!(out);
    let _ = writeln!(out, "mixing over {} steps (pt vs no-exchange baseline)", m.total_steps);
    let _ = writeln!(out, "per-slot transitions:    {:?} vs {:?}", m.pt.per_slot_transitions, m.baseline.per_slot_transitions);
    let _ = writeln!(out, "per-replica transitions: {:?} vs {:?}", m.pt.per_replica_transitions, m.baseline.per_replica_transitions);
    let _ = writeln!(out, "round trips per replica: {:?} vs {:?}", m.pt.round_trips, m.baseline.round_trips);
    let _ = writeln!(out, "coldest-slot energy iat: {:.3} vs {:.3}", m.pt.coldest_energy_iat, m.baseline.coldest_energy_iat);
    out
}
