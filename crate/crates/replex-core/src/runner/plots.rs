//! Plot-ready tabular artifacts rendered from a run record: tab-separated
//! files with one header line, written into a `plots/` subdirectory. The
//! renderers are pure functions of the record's rows, so regenerating from
//! files reloaded off disk is byte-identical to rendering in memory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionCurve;
use crate::tempering::{ExchangeEvent, MetricRow};

use super::execute::{RecordBody, RunRecord};
use super::metrics::atomic_write;
use super::RunnerError;

/// One kind of plot artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    /// Displacement vs step, one curve per (value, seed).
    DiffusionCurves,
    /// Train/validation losses vs step per replica, PT-best path marked.
    ErrorCurves,
    /// Slot held by each replica vs step — the path through the ladder.
    ExchangeTrajectory,
    /// Every exchange proposal with its Δ, decision, and running α.
    AcceptanceTimeline,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [
        PlotKind::DiffusionCurves,
        PlotKind::ErrorCurves,
        PlotKind::ExchangeTrajectory,
        PlotKind::AcceptanceTimeline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::DiffusionCurves => "diffusion-curves",
            PlotKind::ErrorCurves => "error-curves",
            PlotKind::ExchangeTrajectory => "exchange-trajectory",
            PlotKind::AcceptanceTimeline => "acceptance-timeline",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            PlotKind::DiffusionCurves => "diffusion_curves.tsv",
            PlotKind::ErrorCurves => "error_curves.tsv",
            PlotKind::ExchangeTrajectory => "exchange_trajectory.tsv",
            PlotKind::AcceptanceTimeline => "acceptance_timeline.tsv",
        }
    }

    pub fn parse(s: &str) -> Option<PlotKind> {
        PlotKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// The slices a plot needs, decoupled from [`RunRecord`] so the same
/// renderers serve both the in-memory path and files reloaded from a run
/// directory. A `None` field means the source run has no such data.
#[derive(Debug, Clone, Copy, Default)]
pub struct PlotData<'a> {
    pub metrics: Option<&'a [MetricRow]>,
    pub events: Option<&'a [ExchangeEvent]>,
    pub total_steps: u64,
    pub n_replicas: usize,
    pub curves: Option<&'a [DiffusionCurve]>,
}

impl<'a> PlotData<'a> {
    pub fn from_record(record: &'a RunRecord) -> PlotData<'a> {
        match &record.body {
            RecordBody::Training(t) => PlotData {
                metrics: Some(&t.outcome.metrics),
                events: Some(&t.outcome.events),
                total_steps: t.outcome.total_steps,
                n_replicas: t.outcome.replicas.len(),
                curves: None,
            },
            RecordBody::GibbsCheck(g) => PlotData {
                metrics: Some(&g.pt.metrics),
                events: Some(&g.pt.events),
                total_steps: g.pt.total_steps,
                n_replicas: g.pt.replicas.len(),
                curves: None,
            },
            RecordBody::Calibration(c) => PlotData {
                metrics: Some(&c.baseline.metrics),
                events: Some(&c.baseline.events),
                total_steps: c.baseline.total_steps,
                n_replicas: c.baseline.replicas.len(),
                curves: None,
            },
            RecordBody::Diffusion(d) => PlotData {
                metrics: None,
                events: None,
                total_steps: record
                    .config
                    .diffusion
                    .map_or(0, |s| s.total_steps),
                n_replicas: 0,
                curves: Some(&d.curves),
            },
        }
    }

    /// The kinds this data can render.
    pub fn available(&self) -> Vec<PlotKind> {
        let mut kinds = Vec::new();
        if self.curves.is_some() {
            kinds.push(PlotKind::DiffusionCurves);
        }
        if self.metrics.is_some() {
            kinds.push(PlotKind::ErrorCurves);
        }
        if self.events.is_some() {
            kinds.push(PlotKind::ExchangeTrajectory);
            kinds.push(PlotKind::AcceptanceTimeline);
        }
        kinds
    }
}

/// Renders the requested kinds from `record` into `dir/plots/`, returning
/// the written paths. Requesting a kind the record has no data for is an
/// error (exit code 2), not a silent skip.
pub fn emit_plots(
    record: &RunRecord,
    which: &[PlotKind],
    dir: &Path,
) -> Result<Vec<PathBuf>, RunnerError> {
    emit_plots_data(&PlotData::from_record(record), which, dir)
}

/// Same as [`emit_plots`] but from explicit slices — the path used when
/// regenerating plots from a run directory's files.
pub fn emit_plots_data(
    data: &PlotData<'_>,
    which: &[PlotKind],
    dir: &Path,
) -> Result<Vec<PathBuf>, RunnerError> {
    let plots_dir = dir.join("plots");
    std::fs::create_dir_all(&plots_dir).map_err(RunnerError::io(&plots_dir))?;
    let mut written = Vec::with_capacity(which.len());
    for &kind in which {
        let text = match kind {
            PlotKind::DiffusionCurves => render_diffusion_curves(
                data.curves.ok_or(RunnerError::PlotUnavailable(kind.name()))?,
            ),
            PlotKind::ErrorCurves => render_error_curves(
                data.metrics.ok_or(RunnerError::PlotUnavailable(kind.name()))?,
            ),
            PlotKind::ExchangeTrajectory => render_exchange_trajectory(
                data.events.ok_or(RunnerError::PlotUnavailable(kind.name()))?,
                data.n_replicas,
                data.total_steps,
            ),
            PlotKind::AcceptanceTimeline => render_acceptance_timeline(
                data.events.ok_or(RunnerError::PlotUnavailable(kind.name()))?,
            ),
        };
        let path = plots_dir.join(kind.file_name());
        atomic_write(&path, text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

fn opt(x: Option<f64>) -> String {
    match x {
        Some(v) => format!("{v}"),
        None => "nan".into(),
    }
}

/// The replica whose final metric row has the lowest finite validation
/// loss (ties broken toward the lower id): the PT-best path.
pub fn pt_best_replica(metrics: &[MetricRow]) -> Option<usize> {
    let mut last: BTreeMap<usize, &MetricRow> = BTreeMap::new();
    for row in metrics {
        match last.entry(row.replica) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(row);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                if row.step >= o.get().step {
                    o.insert(row);
                }
            }
        }
    }
    last.values()
        .filter(|r| r.val_loss.is_finite())
        .min_by(|a, b| {
            a.val_loss
                .partial_cmp(&b.val_loss)
                .expect("finite losses compare")
                .then(a.replica.cmp(&b.replica))
        })
        .map(|r| r.replica)
}

fn render_error_curves(metrics: &[MetricRow]) -> String {
    let best = pt_best_replica(metrics);
    let mut out = String::from("step\treplica\tslot\ttrain_loss\tval_loss\tval_error\tpt_best\n");
    for row in metrics {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            row.step,
            row.replica,
            row.slot,
            row.train_loss,
            row.val_loss,
            opt(row.val_error),
            (best == Some(row.replica)) as u8,
        );
    }
    out
}

/// Replays accepted swaps over the identity assignment. Rows appear at step
/// 0, after the accepted swap(s) of each step, and at the final step.
fn render_exchange_trajectory(events: &[ExchangeEvent], n_replicas: usize, total_steps: u64) -> String {
    let mut out = String::from("step");
    for r in 0..n_replicas {
        let _ = write!(out, "\tslot_r{r}");
    }
    out.push('\n');
    let mut slot_of: Vec<usize> = (0..n_replicas).collect();
    let emit = |out: &mut String, step: u64, slot_of: &[usize]| {
        let _ = write!(out, "{step}");
        for &s in slot_of {
            let _ = write!(out, "\t{s}");
        }
        out.push('\n');
    };
    emit(&mut out, 0, &slot_of);
    let mut last_step = 0u64;
    let mut i = 0;
    while i < events.len() {
        let step = events[i].step;
        let mut any = false;
        while i < events.len() && events[i].step == step {
            let e = &events[i];
            if e.accepted {
                slot_of[e.replica_a] = e.slot_b;
                slot_of[e.replica_b] = e.slot_a;
                any = true;
            }
            i += 1;
        }
        if any {
            emit(&mut out, step, &slot_of);
            last_step = step;
        }
    }
    if last_step != total_steps {
        emit(&mut out, total_steps, &slot_of);
    }
    out
}

fn render_acceptance_timeline(events: &[ExchangeEvent]) -> String {
    let mut out = String::from("step\tslot_a\tslot_b\tdelta\taccepted\tcumulative_alpha\n");
    let mut proposals = 0u64;
    let mut accepts = 0u64;
    for e in events {
        proposals += 1;
        accepts += e.accepted as u64;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            e.step,
            e.slot_a,
            e.slot_b,
            e.delta,
            e.accepted as u8,
            accepts as f64 / proposals as f64,
        );
    }
    out
}

fn render_diffusion_curves(curves: &[DiffusionCurve]) -> String {
    let mut out = String::from("value\tseed\tstep\tdisplacement\tdiverged\n");
    for curve in curves {
        for &(step, displacement) in &curve.samples {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                curve.value, curve.replica_id, step, displacement, curve.diverged as u8,
            );
        }
    }
    out
}
