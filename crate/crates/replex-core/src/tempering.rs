//! Replica exchange over hyperparameters: β mappings, temperature ladders,
//! the Metropolis swap rule, the coupled training loop, and calibration of
//! the exchange normalization constant C.
//!
//! Replicas keep their weights, momentum, and RNG streams forever; an
//! accepted exchange swaps only the two replicas' ladder-slot assignments
//! (and with them the hyperparameter values and βs). Slot 0 is the hottest
//! rung (smallest β), slot M−1 the coldest.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DynamicsError, DynamicsFactory};
use crate::optimizer::OptimizerState;
use crate::{rng_from_seed, StreamRng};

/// Which hyperparameter a ladder varies. Each kind has a fixed mapping to an
/// effective inverse temperature: more induced noise ⇒ smaller β.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperparameterKind {
    /// β = 1/γ — the step size scales the effective noise variance.
    LearningRate,
    /// β = 1 − d — the retention rate p, since dropout amplifies output
    /// variance by p⁻¹.
    DropoutRate,
    /// β = 1/T — the exact thermal case.
    LangevinTemperature,
    /// β = B — SGD gradient noise variance scales as 1/B.
    BatchSize,
    /// No β mapping: L2 does not change diffusion rates, so it is legal in
    /// diffusion experiments but rejected for exchange ladders.
    L2Lambda,
}

#[derive(Debug, Error)]
pub enum TemperingError {
    #[error("{kind:?} value {value} is outside its legal domain ({reason})")]
    BetaDomain { kind: HyperparameterKind, value: f64, reason: &'static str },
    #[error("{0:?} is not temperature-like and cannot form an exchange ladder")]
    NotTemperatureLike(HyperparameterKind),
    #[error("a ladder needs at least two values, got {0}")]
    TooFewValues(usize),
    #[error("ladder values must be distinct, {0} appears twice")]
    DuplicateValue(f64),
    #[error("exchange normalization C must be positive and finite, got {0}")]
    NonPositiveC(f64),
    #[error("slots {0} and {1} are not adjacent")]
    NotAdjacent(usize, usize),
    #[error("validation loss at slot {slot} is not finite ({loss})")]
    NonFiniteLoss { slot: usize, loss: f64 },
    #[error("ladder has {expected} slots but {got} replica seeds were supplied")]
    SeedCount { expected: usize, got: usize },
    #[error("invalid schedule: {0}")]
    BadSchedule(String),
    #[error("replica {replica}: {source}")]
    Dynamics { replica: usize, source: DynamicsError },
    #[error("replica {replica} has dimension {got}, expected {expected}")]
    DimensionVaries { replica: usize, expected: usize, got: usize },
    #[error("no loss samples recorded for slot {0}")]
    EmptyLossSamples(usize),
    #[error("{expected} slots but {got} loss-sample sets")]
    SampleSetCount { expected: usize, got: usize },
    #[error(
        "acceptance band [{band_lo}, {band_hi}] is unreachable: predicted acceptance \
         ranges over [{achievable_lo:.4}, 1] for any C"
    )]
    BandUnreachable { achievable_lo: f64, band_lo: f64, band_hi: f64 },
}

/// Maps a hyperparameter value to its effective inverse temperature.
pub fn beta_of(kind: HyperparameterKind, value: f64) -> Result<f64, TemperingError> {
    let fail = |reason| Err(TemperingError::BetaDomain { kind, value, reason });
    if !value.is_finite() {
        return fail("must be finite");
    }
    match kind {
        HyperparameterKind::LearningRate => {
            if value > 0.0 {
                Ok(1.0 / value)
            } else {
                fail("learning rate must be positive")
            }
        }
        HyperparameterKind::DropoutRate => {
            if (0.0..1.0).contains(&value) {
                Ok(1.0 - value)
            } else {
                fail("dropout rate must lie in [0, 1)")
            }
        }
        HyperparameterKind::LangevinTemperature => {
            if value > 0.0 {
                Ok(1.0 / value)
            } else {
                fail("temperature must be positive")
            }
        }
        HyperparameterKind::BatchSize => {
            if value >= 1.0 {
                Ok(value)
            } else {
                fail("batch size must be at least 1")
            }
        }
        HyperparameterKind::L2Lambda => Err(TemperingError::NotTemperatureLike(kind)),
    }
}

/// An ordered set of hyperparameter values with their βs, sorted ascending
/// in β, plus the exchange normalization C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    pub kind: HyperparameterKind,
    /// Hyperparameter value per slot, aligned with `betas`.
    pub values: Vec<f64>,
    /// Strictly increasing inverse temperatures; slot 0 is hottest.
    pub betas: Vec<f64>,
    /// Exchange normalization constant.
    pub c: f64,
}

impl Ladder {
    pub fn m(&self) -> usize {
        self.betas.len()
    }
}

/// Builds a ladder from distinct legal values; the input order is
/// irrelevant because slots are sorted by β.
pub fn build_ladder(
    kind: HyperparameterKind,
    values: &[f64],
    c: f64,
) -> Result<Ladder, TemperingError> {
    if values.len() < 2 {
        return Err(TemperingError::TooFewValues(values.len()));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(TemperingError::NonPositiveC(c));
    }
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(values.len());
    for &v in values {
        pairs.push((beta_of(kind, v)?, v));
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("betas are finite"));
    for window in pairs.windows(2) {
        if window[0].0 >= window[1].0 {
            // Distinct values map injectively for every kind, so equal betas
            // mean equal values.
            return Err(TemperingError::DuplicateValue(window[1].1));
        }
    }
    Ok(Ladder {
        kind,
        values: pairs.iter().map(|p| p.1).collect(),
        betas: pairs.iter().map(|p| p.0).collect(),
        c,
    })
}

/// The Metropolis exponent for swapping the configurations currently held
/// at two adjacent slots: Δ = C·(β_a − β_b)·(loss_b − loss_a), where
/// `loss_x` is the validation loss of the replica sitting at slot `x`.
/// Symmetric in the pair labeling; Δ ≤ 0 — the always-accept case — exactly
/// when the hotter slot holds the lower loss, so a good configuration that
/// wandered hot is always rescued toward the cold end.
pub fn exchange_delta(
    ladder: &Ladder,
    slot_a: usize,
    slot_b: usize,
    loss_a: f64,
    loss_b: f64,
) -> Result<f64, TemperingError> {
    if slot_a.abs_diff(slot_b) != 1 || slot_a.max(slot_b) >= ladder.m() {
        return Err(TemperingError::NotAdjacent(slot_a, slot_b));
    }
    if !loss_a.is_finite() {
        return Err(TemperingError::NonFiniteLoss { slot: slot_a, loss: loss_a });
    }
    if !loss_b.is_finite() {
        return Err(TemperingError::NonFiniteLoss { slot: slot_b, loss: loss_b });
    }
    Ok(ladder.c * (ladder.betas[slot_a] - ladder.betas[slot_b]) * (loss_b - loss_a))
}

/// Metropolis decision for a proposed swap. Δ ≤ 0 accepts without touching
/// the RNG; otherwise one uniform draw u ∈ [0, 1) decides (accept iff
/// u < e^{−Δ}) and is returned for the event log.
pub fn metropolis_accept(delta: f64, rng: &mut StreamRng) -> (bool, Option<f64>) {
    if delta <= 0.0 {
        (true, None)
    } else {
        let u: f64 = rng.gen();
        (u < (-delta).exp(), Some(u))
    }
}

/// One logged swap proposal between the replicas at adjacent slots
/// (`slot_a` < `slot_b`); `loss_*` are their full-validation losses at the
/// proposal step, and `draw` is absent exactly when Δ ≤ 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeEvent {
    pub step: u64,
    pub slot_a: usize,
    pub slot_b: usize,
    pub replica_a: usize,
    pub replica_b: usize,
    pub loss_a: f64,
    pub loss_b: f64,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub draw: Option<f64>,
    pub accepted: bool,
}

/// Proposal/accept counts, overall and per adjacent pair (entry k is the
/// pair of slots (k, k+1)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub proposals: u64,
    pub accepts: u64,
    pub per_pair: Vec<PairStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub proposals: u64,
    pub accepts: u64,
}

impl AcceptanceStats {
    fn new(m: usize) -> Self {
        AcceptanceStats {
            proposals: 0,
            accepts: 0,
            per_pair: vec![PairStats { proposals: 0, accepts: 0 }; m.saturating_sub(1)],
        }
    }

    fn record(&mut self, pair: usize, accepted: bool) {
        self.proposals += 1;
        self.per_pair[pair].proposals += 1;
        if accepted {
            self.accepts += 1;
            self.per_pair[pair].accepts += 1;
        }
    }

    /// Overall acceptance ratio α (0 when nothing was proposed).
    pub fn alpha(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepts as f64 / self.proposals as f64
        }
    }
}

/// The replica ↔ slot permutation, maintained in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotAssignment {
    slot_of_replica: Vec<usize>,
    replica_at_slot: Vec<usize>,
}

impl SlotAssignment {
    /// Replica i starts at slot i.
    pub fn identity(m: usize) -> Self {
        SlotAssignment {
            slot_of_replica: (0..m).collect(),
            replica_at_slot: (0..m).collect(),
        }
    }

    pub fn slot_of(&self, replica: usize) -> usize {
        self.slot_of_replica[replica]
    }

    pub fn replica_at(&self, slot: usize) -> usize {
        self.replica_at_slot[slot]
    }

    /// Swaps the occupants of two slots.
    pub fn swap_slots(&mut self, slot_a: usize, slot_b: usize) {
        let ra = self.replica_at_slot[slot_a];
        let rb = self.replica_at_slot[slot_b];
        self.replica_at_slot[slot_a] = rb;
        self.replica_at_slot[slot_b] = ra;
        self.slot_of_replica[ra] = slot_b;
        self.slot_of_replica[rb] = slot_a;
    }

    /// True when the assignment is still a bijection (test instrument).
    pub fn is_permutation(&self) -> bool {
        let m = self.slot_of_replica.len();
        let mut seen = vec![false; m];
        for &s in &self.slot_of_replica {
            if s >= m || seen[s] {
                return false;
            }
            seen[s] = true;
        }
        (0..m).all(|s| self.slot_of_replica[self.replica_at_slot[s]] == s)
    }
}

/// Selects an adjacent pair uniformly from the exchange stream, decides the
/// swap on the supplied per-replica validation losses, and applies it to the
/// assignment. Weights are never moved.
pub fn propose_exchange(
    assignment: &mut SlotAssignment,
    ladder: &Ladder,
    losses_by_replica: &[f64],
    step: u64,
    exchange_rng: &mut StreamRng,
) -> Result<ExchangeEvent, TemperingError> {
    let pair = exchange_rng.gen_range(0..ladder.m() - 1);
    let (slot_a, slot_b) = (pair, pair + 1);
    let replica_a = assignment.replica_at(slot_a);
    let replica_b = assignment.replica_at(slot_b);
    let loss_a = losses_by_replica[replica_a];
    let loss_b = losses_by_replica[replica_b];
    let delta = exchange_delta(ladder, slot_a, slot_b, loss_a, loss_b)?;
    let (accepted, draw) = metropolis_accept(delta, exchange_rng);
    if accepted {
        assignment.swap_slots(slot_a, slot_b);
    }
    Ok(ExchangeEvent {
        step,
        slot_a,
        slot_b,
        replica_a,
        replica_b,
        loss_a,
        loss_b,
        delta,
        draw,
        accepted,
    })
}

/// Step budget and cadences of a coupled run. Exchanges are proposed at
/// t = init_steps + j·exchange_every (j ≥ 1, t ≤ total_steps); metric rows
/// are written at multiples of eval_every, at every exchange point, and at
/// the final step; weights are snapshotted every `weight_sample_every` steps
/// when set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtSchedule {
    pub init_steps: u64,
    pub exchange_every: u64,
    pub total_steps: u64,
    pub eval_every: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weight_sample_every: Option<u64>,
    pub exchanges_enabled: bool,
}

impl PtSchedule {
    pub fn validate(&self) -> Result<(), TemperingError> {
        if self.exchange_every == 0 {
            return Err(TemperingError::BadSchedule("exchange_every must be ≥ 1".into()));
        }
        if self.eval_every == 0 {
            return Err(TemperingError::BadSchedule("eval_every must be ≥ 1".into()));
        }
        if self.total_steps <= self.init_steps {
            return Err(TemperingError::BadSchedule(format!(
                "total_steps ({}) must exceed init_steps ({})",
                self.total_steps, self.init_steps
            )));
        }
        if self.weight_sample_every == Some(0) {
            return Err(TemperingError::BadSchedule("weight_sample_every must be ≥ 1".into()));
        }
        Ok(())
    }

    fn barrier_plan(&self) -> Vec<(u64, Barrier)> {
        let mut plan: std::collections::BTreeMap<u64, Barrier> = std::collections::BTreeMap::new();
        let mut t = self.eval_every;
        while t <= self.total_steps {
            plan.entry(t).or_default().eval = true;
            t += self.eval_every;
        }
        if self.exchanges_enabled {
            let mut t = self.init_steps.saturating_add(self.exchange_every);
            while t <= self.total_steps {
                let b = plan.entry(t).or_default();
                b.eval = true;
                b.exchange = true;
                t += self.exchange_every;
            }
        }
        if let Some(every) = self.weight_sample_every {
            let mut t = every;
            while t <= self.total_steps {
                plan.entry(t).or_default().sample = true;
                t += every;
            }
        }
        plan.entry(self.total_steps).or_default().eval = true;
        plan.into_iter().collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Barrier {
    eval: bool,
    exchange: bool,
    sample: bool,
}

/// One RNG stream per replica plus a dedicated stream for pair selection
/// and accept draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub replicas: Vec<u64>,
    pub exchange: u64,
}

/// Periodic evaluation record for one replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: u64,
    pub replica: usize,
    pub slot: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub val_error: Option<f64>,
    pub displacement: f64,
}

/// A replica that blew up and was frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEvent {
    pub step: u64,
    pub replica: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub last_loss: Option<f64>,
    pub reason: String,
}

/// Weight snapshots along the run: sample k holds every replica's weight
/// vector and slot, recorded after any exchange at that step. Slot chains
/// and replica chains are both recoverable.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTrace {
    pub dim: usize,
    pub n_replicas: usize,
    pub steps: Vec<u64>,
    /// `steps.len() × n_replicas`, the slot each replica held per sample.
    pub slots: Vec<u16>,
    /// `steps.len() × n_replicas × dim`, replica-major per sample.
    pub coords: Vec<f64>,
}

impl WeightTrace {
    pub fn n_samples(&self) -> usize {
        self.steps.len()
    }

    /// Coordinate `coord` of the replica's own weight trajectory.
    pub fn replica_series(&self, replica: usize, coord: usize) -> Vec<f64> {
        (0..self.n_samples())
            .map(|k| self.coords[(k * self.n_replicas + replica) * self.dim + coord])
            .collect()
    }

    /// Slot held by a replica at each sample.
    pub fn replica_slots(&self, replica: usize) -> Vec<u16> {
        (0..self.n_samples()).map(|k| self.slots[k * self.n_replicas + replica]).collect()
    }

    /// Coordinate `coord` of the chain owning `slot`: at each sample, the
    /// weight of whichever replica held that slot.
    pub fn slot_series(&self, slot: usize, coord: usize) -> Vec<f64> {
        (0..self.n_samples())
            .map(|k| {
                let base = k * self.n_replicas;
                let replica = (0..self.n_replicas)
                    .find(|&r| self.slots[base + r] as usize == slot)
                    .expect("every slot is always held by exactly one replica");
                self.coords[(base + replica) * self.dim + coord]
            })
            .collect()
    }
}

/// Final state of one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaOutcome {
    pub id: usize,
    pub final_slot: usize,
    pub steps_completed: u64,
    pub diverged: bool,
    pub weights: Vec<f64>,
    pub final_train_loss: Option<f64>,
    pub final_val_loss: Option<f64>,
    pub final_val_error: Option<f64>,
}

/// Everything a coupled run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct PtOutcome {
    pub ladder: Ladder,
    pub total_steps: u64,
    pub replicas: Vec<ReplicaOutcome>,
    pub events: Vec<ExchangeEvent>,
    pub stats: AcceptanceStats,
    pub metrics: Vec<MetricRow>,
    pub divergences: Vec<DivergenceEvent>,
    pub trace: Option<WeightTrace>,
}

struct ReplicaState {
    id: usize,
    dynamics: Box<dyn crate::dynamics::ReplicaDynamics>,
    rng: StreamRng,
    w: Vec<f64>,
    w0: Vec<f64>,
    opt: OptimizerState,
    value: f64,
    alive: bool,
    steps_completed: u64,
    divergence: Option<DivergenceEvent>,
    divergence_logged: bool,
    fatal: Option<DynamicsError>,
    last_eval: Option<(f64, f64, Option<f64>)>,
}

impl ReplicaState {
    fn advance_to(&mut self, target: u64, need_eval: bool) {
        while self.alive && self.steps_completed < target {
            match self.dynamics.advance(&mut self.w, &mut self.opt, self.value, &mut self.rng) {
                Ok(_) => self.steps_completed += 1,
                Err(e) if e.is_divergence() => {
                    self.alive = false;
                    self.divergence = Some(DivergenceEvent {
                        step: self.steps_completed,
                        replica: self.id,
                        last_loss: match &e {
                            DynamicsError::Optimizer(
                                crate::optimizer::OptimizerError::Diverged { loss, .. },
                            ) => Some(*loss),
                            _ => None,
                        },
                        reason: e.to_string(),
                    });
                }
                Err(e) => {
                    self.alive = false;
                    self.fatal = Some(e);
                }
            }
        }
        if need_eval && self.alive {
            let train = self.dynamics.train_loss(&self.w);
            let val = self.dynamics.validation_loss(&self.w);
            if !train.is_finite() || !val.is_finite() {
                self.alive = false;
                self.divergence = Some(DivergenceEvent {
                    step: self.steps_completed,
                    replica: self.id,
                    last_loss: None,
                    reason: format!(
                        "non-finite evaluation loss (train {train}, validation {val})"
                    ),
                });
                return;
            }
            let err = self.dynamics.validation_error(&self.w);
            self.last_eval = Some((train, val, err));
        }
    }
}

/// Runs M coupled replicas for `schedule.total_steps` steps. Replicas
/// advance independently between barriers (in parallel across the ambient
/// rayon pool); barriers evaluate losses, log metric rows, decide exchanges
/// from the dedicated exchange stream, and snapshot weights. Results are
/// identical for any worker count because every replica owns its stream and
/// all merges happen in replica order.
pub fn run_parallel_tempering(
    factory: &DynamicsFactory<'_>,
    ladder: &Ladder,
    schedule: &PtSchedule,
    seeds: &Seeds,
) -> Result<PtOutcome, TemperingError> {
    schedule.validate()?;
    let m = ladder.m();
    if seeds.replicas.len() != m {
        return Err(TemperingError::SeedCount { expected: m, got: seeds.replicas.len() });
    }
    let mut assignment = SlotAssignment::identity(m);
    let mut replicas: Vec<ReplicaState> = Vec::with_capacity(m);
    let mut dim = 0usize;
    for (i, &seed) in seeds.replicas.iter().enumerate() {
        let mut dynamics =
            factory(i, seed).map_err(|source| TemperingError::Dynamics { replica: i, source })?;
        let mut rng = rng_from_seed(seed);
        let w = dynamics.init_weights(&mut rng);
        if i == 0 {
            dim = w.len();
        } else if w.len() != dim {
            return Err(TemperingError::DimensionVaries { replica: i, expected: dim, got: w.len() });
        }
        replicas.push(ReplicaState {
            id: i,
            opt: OptimizerState::new(w.len()),
            w0: w.clone(),
            w,
            rng,
            value: ladder.values[i],
            alive: true,
            steps_completed: 0,
            divergence: None,
            divergence_logged: false,
            fatal: None,
            last_eval: None,
            dynamics,
        });
    }

    let plan = schedule.barrier_plan();
    let mut events: Vec<ExchangeEvent> = Vec::new();
    let mut stats = AcceptanceStats::new(m);
    let mut metrics: Vec<MetricRow> = Vec::new();
    let mut divergences: Vec<DivergenceEvent> = Vec::new();
    let mut exchange_rng = rng_from_seed(seeds.exchange);
    let mut trace = schedule.weight_sample_every.map(|every| {
        let n_samples = (schedule.total_steps / every) as usize;
        WeightTrace {
            dim,
            n_replicas: m,
            steps: Vec::with_capacity(n_samples),
            slots: Vec::with_capacity(n_samples * m),
            coords: Vec::with_capacity(n_samples * m * dim),
        }
    });

    for &(t, barrier) in &plan {
        replicas
            .par_iter_mut()
            .for_each(|r| r.advance_to(t, barrier.eval));
        for r in replicas.iter_mut() {
            if let Some(fatal) = r.fatal.take() {
                return Err(TemperingError::Dynamics { replica: r.id, source: fatal });
            }
        }
        for r in replicas.iter_mut() {
            if let Some(event) = &r.divergence {
                if !r.divergence_logged {
                    divergences.push(event.clone());
                    r.divergence_logged = true;
                }
            }
        }
        if barrier.eval {
            for r in &replicas {
                if !r.alive {
                    continue;
                }
                let (train_loss, val_loss, val_error) =
                    r.last_eval.expect("eval barrier populates last_eval for live replicas");
                metrics.push(MetricRow {
                    step: t,
                    replica: r.id,
                    slot: assignment.slot_of(r.id),
                    train_loss,
                    val_loss,
                    val_error,
                    displacement: crate::diffusion::record_displacement(&r.w, &r.w0)
                        .expect("w and w0 share a dimension"),
                });
            }
        }
        if barrier.exchange {
            let pair = exchange_rng.gen_range(0..m - 1);
            let (slot_a, slot_b) = (pair, pair + 1);
            let replica_a = assignment.replica_at(slot_a);
            let replica_b = assignment.replica_at(slot_b);
            // A frozen replica cannot be measured, so the proposal is
            // dropped; the pair draw stays consumed to keep the exchange
            // stream aligned across runs.
            if replicas[replica_a].alive && replicas[replica_b].alive {
                let loss_a = replicas[replica_a].last_eval.expect("live replica evaluated").1;
                let loss_b = replicas[replica_b].last_eval.expect("live replica evaluated").1;
                let delta = exchange_delta(ladder, slot_a, slot_b, loss_a, loss_b)?;
                let (accepted, draw) = metropolis_accept(delta, &mut exchange_rng);
                if accepted {
                    assignment.swap_slots(slot_a, slot_b);
                    replicas[replica_a].value = ladder.values[assignment.slot_of(replica_a)];
                    replicas[replica_b].value = ladder.values[assignment.slot_of(replica_b)];
                }
                events.push(ExchangeEvent {
                    step: t,
                    slot_a,
                    slot_b,
                    replica_a,
                    replica_b,
                    loss_a,
                    loss_b,
                    delta,
                    draw,
                    accepted,
                });
                stats.record(pair, accepted);
            }
        }
        if barrier.sample {
            if let Some(trace) = trace.as_mut() {
                trace.steps.push(t);
                for r in &replicas {
                    trace.slots.push(assignment.slot_of(r.id) as u16);
                    trace.coords.extend_from_slice(&r.w);
                }
            }
        }
    }

    let replicas_out = replicas
        .into_iter()
        .map(|r| ReplicaOutcome {
            id: r.id,
            final_slot: assignment.slot_of(r.id),
            steps_completed: r.steps_completed,
            diverged: r.divergence.is_some(),
            weights: r.w,
            final_train_loss: r.last_eval.filter(|_| r.alive).map(|e| e.0),
            final_val_loss: r.last_eval.filter(|_| r.alive).map(|e| e.1),
            final_val_error: r.last_eval.filter(|_| r.alive).and_then(|e| e.2),
        })
        .collect();

    Ok(PtOutcome {
        ladder: ladder.clone(),
        total_steps: schedule.total_steps,
        replicas: replicas_out,
        events,
        stats,
        metrics,
        divergences,
        trace,
    })
}

/// Mean predicted acceptance over adjacent pairs at normalization `c`: the
/// exhaustive cross-product average of min(1, e^{−Δ}) with Δ drawn from the
/// recorded per-slot loss samples.
pub fn predicted_acceptance(betas: &[f64], samples: &[Vec<f64>], c: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..betas.len() - 1 {
        let gap = betas[k] - betas[k + 1];
        let mut pair_sum = 0.0;
        for &hot in &samples[k] {
            for &cold in &samples[k + 1] {
                let delta = c * gap * (cold - hot);
                pair_sum += if delta <= 0.0 { 1.0 } else { (-delta).exp() };
            }
        }
        total += pair_sum / (samples[k].len() * samples[k + 1].len()) as f64;
    }
    total / (betas.len() - 1) as f64
}

/// Result of calibrating C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub c: f64,
    pub predicted_acceptance: f64,
    /// True when the loss histograms overlap so completely that every C
    /// accepts essentially always; C = 1 is returned by convention.
    pub degenerate: bool,
}

/// Chooses C by bisection so the predicted mean acceptance lands in `band`
/// (aiming at its midpoint). `samples[k]` are validation losses recorded at
/// slot k over the tail of a no-exchange preliminary run.
pub fn calibrate_c(
    betas: &[f64],
    samples: &[Vec<f64>],
    band: (f64, f64),
) -> Result<Calibration, TemperingError> {
    if samples.len() != betas.len() {
        return Err(TemperingError::SampleSetCount { expected: betas.len(), got: samples.len() });
    }
    if betas.len() < 2 {
        return Err(TemperingError::TooFewValues(betas.len()));
    }
    for (slot, s) in samples.iter().enumerate() {
        if s.is_empty() {
            return Err(TemperingError::EmptyLossSamples(slot));
        }
        if let Some(&bad) = s.iter().find(|l| !l.is_finite()) {
            return Err(TemperingError::NonFiniteLoss { slot, loss: bad });
        }
    }
    assert!(
        band.0 > 0.0 && band.0 < band.1 && band.1 < 1.0,
        "acceptance band must satisfy 0 < lo < hi < 1"
    );
    const C_LO: f64 = 1e-12;
    const C_HI: f64 = 1e12;
    let acc = |c: f64| predicted_acceptance(betas, samples, c);
    let floor = acc(C_HI);
    if floor >= 0.999 {
        return Ok(Calibration { c: 1.0, predicted_acceptance: acc(1.0), degenerate: true });
    }
    if floor > band.1 {
        return Err(TemperingError::BandUnreachable {
            achievable_lo: floor,
            band_lo: band.0,
            band_hi: band.1,
        });
    }
    // Predicted acceptance is continuous and nonincreasing in C, spanning
    // (floor, ~1]; bisect to a target the span actually contains.
    let midpoint = 0.5 * (band.0 + band.1);
    let target = if floor >= midpoint { 0.5 * (floor + band.1) } else { midpoint };
    let (mut lo, mut hi) = (C_LO, C_HI);
    for _ in 0..200 {
        let mid = (0.5 * (lo.ln() + hi.ln())).exp();
        if acc(mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = (0.5 * (lo.ln() + hi.ln())).exp();
    let achieved = acc(c);
    assert!(
        achieved >= band.0 - 1e-9 && achieved <= band.1 + 1e-9,
        "bisection on a continuous monotone predictor must land in band (got {achieved})"
    );
    Ok(Calibration { c, predicted_acceptance: achieved, degenerate: false })
}
