//! Python bindings for the replica-exchange training engine.
//!
//! The module mirrors the CLI's vocabulary: a [`Config`](PyConfig) parses
//! the same TOML the `replex` binary accepts, [`run`] executes it (and can
//! persist the standard run directory), and the small helpers expose the
//! pieces worth poking at interactively — β mappings, analytic Gibbs
//! densities, seed derivation, and checkpoint decoding.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use std::path::Path;

use replex_core::gibbs::{analytic_gibbs, GridSpec};
use replex_core::landscape::AnalyticPotential;
use replex_core::runner::{self, ExperimentConfig, RecordBody, RunRecord};
use replex_core::tempering::{self, HyperparameterKind, PtOutcome};

/// Converts any serializable value into the string serde would emit for it
/// (used for enum names so Python sees the exact config vocabulary).
fn serde_name<T: serde::Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => "<unserializable>".to_string(),
    }
}

fn value_error<E: std::fmt::Display>(err: E) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn io_error<E: std::fmt::Display>(err: E) -> PyErr {
    PyIOError::new_err(err.to_string())
}

/// An experiment configuration, parsed and resolved from TOML text.
///
/// The TOML schema is identical to what `replex train --config` accepts;
/// parsing fills every optional field with its documented default and
/// rejects unknown keys.
#[pyclass(name = "Config", module = "replex", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    /// Parses a configuration from TOML text.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyConfig { inner: ExperimentConfig::parse_str(text).map_err(value_error)? })
    }

    /// Reads and parses a configuration file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(io_error)?;
        Ok(PyConfig { inner: ExperimentConfig::parse_str(&text).map_err(value_error)? })
    }

    /// Replaces the base seed, exactly like `--seed-override` on the CLI.
    fn apply_seed_override(&mut self, base: u64) {
        self.inner.apply_seed_override(base);
    }

    /// The run mode: "grid", "pt", "diffusion", "gibbs-check", or
    /// "calibrate-c".
    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode.name()
    }

    /// SHA-256 over the canonical serialization of the resolved config.
    #[getter]
    fn hash(&self) -> String {
        self.inner.hash()
    }

    /// The ladder's hyperparameter kind, in config vocabulary
    /// (e.g. "dropout_rate").
    #[getter]
    fn ladder_kind(&self) -> String {
        serde_name(&self.inner.ladder.kind)
    }

    /// Ladder values exactly as configured.
    #[getter]
    fn ladder_values(&self) -> Vec<f64> {
        self.inner.ladder.values.clone()
    }

    /// The base seed replica streams derive from (None when explicit
    /// per-replica seeds were configured instead).
    #[getter]
    fn base_seed(&self) -> Option<u64> {
        self.inner.seeds.base
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(mode='{}', ladder='{}', values={:?}, hash='{}…')",
            self.inner.mode.name(),
            serde_name(&self.inner.ladder.kind),
            self.inner.ladder.values,
            &self.inner.hash()[..12],
        )
    }
}

fn replica_list<'py>(py: Python<'py>, outcome: &PtOutcome) -> PyResult<Bound<'py, PyList>> {
    let rows = PyList::empty(py);
    for r in &outcome.replicas {
        let d = PyDict::new(py);
        d.set_item("id", r.id)?;
        d.set_item("final_slot", r.final_slot)?;
        d.set_item("steps_completed", r.steps_completed)?;
        d.set_item("diverged", r.diverged)?;
        d.set_item("final_train_loss", r.final_train_loss)?;
        d.set_item("final_val_loss", r.final_val_loss)?;
        d.set_item("final_val_error", r.final_val_error)?;
        rows.append(d)?;
    }
    Ok(rows)
}

fn outcome_dict<'py>(py: Python<'py>, outcome: &PtOutcome) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("ladder_values", outcome.ladder.values.clone())?;
    d.set_item("betas", outcome.ladder.betas.clone())?;
    d.set_item("total_steps", outcome.total_steps)?;
    d.set_item("replicas", replica_list(py, outcome)?)?;
    d.set_item("n_events", outcome.events.len())?;
    d.set_item("n_divergences", outcome.divergences.len())?;
    let stats = PyDict::new(py);
    stats.set_item("proposals", outcome.stats.proposals)?;
    stats.set_item("accepts", outcome.stats.accepts)?;
    let pairs = PyList::empty(py);
    for p in &outcome.stats.per_pair {
        let e = PyDict::new(py);
        e.set_item("proposals", p.proposals)?;
        e.set_item("accepts", p.accepts)?;
        pairs.append(e)?;
    }
    stats.set_item("per_pair", pairs)?;
    d.set_item("acceptance", stats)?;
    Ok(d)
}

fn calibration_dict<'py>(
    py: Python<'py>,
    cal: &tempering::Calibration,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("c", cal.c)?;
    d.set_item("predicted_acceptance", cal.predicted_acceptance)?;
    d.set_item("degenerate", cal.degenerate)?;
    Ok(d)
}

fn record_dict<'py>(py: Python<'py>, record: &RunRecord) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("mode", record.config.mode.name())?;
    out.set_item("config_hash", record.config_hash.clone())?;
    out.set_item("diverged", record.has_divergence())?;
    match &record.body {
        RecordBody::Training(t) => {
            out.set_item("outcome", outcome_dict(py, &t.outcome)?)?;
            out.set_item("resolved_c", t.resolved_c)?;
            match &t.calibration {
                Some(c) => out.set_item("calibration", calibration_dict(py, c)?)?,
                None => out.set_item("calibration", py.None())?,
            }
        }
        RecordBody::Diffusion(d) => {
            let curves = PyList::empty(py);
            for c in &d.curves {
                let e = PyDict::new(py);
                e.set_item("replica_id", c.replica_id)?;
                e.set_item("value", c.value)?;
                e.set_item("origin_step", c.origin_step)?;
                e.set_item("samples", c.samples.clone())?;
                e.set_item("diverged", c.diverged)?;
                curves.append(e)?;
            }
            out.set_item("curves", curves)?;
            let v = PyDict::new(py);
            v.set_item("kind", serde_name(&d.verdict.kind))?;
            v.set_item("monotonicity_score", d.verdict.monotonicity_score)?;
            v.set_item("temperature_like", d.verdict.temperature_like)?;
            v.set_item("plateau_detected", d.verdict.plateau_detected.clone())?;
            v.set_item("final_displacements", d.verdict.final_displacements.clone())?;
            out.set_item("verdict", v)?;
            out.set_item("oriented", d.oriented)?;
        }
        RecordBody::GibbsCheck(g) => {
            out.set_item("pt", outcome_dict(py, &g.pt)?)?;
            out.set_item("baseline", outcome_dict(py, &g.baseline)?)?;
            out.set_item("resolved_c", g.resolved_c)?;
            let rep = PyDict::new(py);
            rep.set_item("burn_in", g.report.burn_in)?;
            let grid = PyDict::new(py);
            grid.set_item("lo", g.report.grid.lo)?;
            grid.set_item("hi", g.report.grid.hi)?;
            grid.set_item("n_bins", g.report.grid.n_bins)?;
            rep.set_item("grid", grid)?;
            let slots = PyList::empty(py);
            for s in &g.report.per_slot {
                let e = PyDict::new(py);
                e.set_item("slot", s.slot)?;
                e.set_item("value", s.value)?;
                e.set_item("beta", s.beta)?;
                e.set_item("n_samples", s.n_samples)?;
                e.set_item("tv", s.tv)?;
                slots.append(e)?;
            }
            rep.set_item("per_slot", slots)?;
            let mixing = PyDict::new(py);
            mixing.set_item("total_steps", g.report.mixing.total_steps)?;
            for (name, side) in
                [("pt", &g.report.mixing.pt), ("baseline", &g.report.mixing.baseline)]
            {
                let m = PyDict::new(py);
                m.set_item("per_replica_transitions", side.per_replica_transitions.clone())?;
                m.set_item("per_slot_transitions", side.per_slot_transitions.clone())?;
                m.set_item("round_trips", side.round_trips.clone())?;
                m.set_item("coldest_energy_iat", side.coldest_energy_iat)?;
                mixing.set_item(name, m)?;
            }
            rep.set_item("mixing", mixing)?;
            out.set_item("report", rep)?;
        }
        RecordBody::Calibration(c) => {
            out.set_item("baseline", outcome_dict(py, &c.baseline)?)?;
            out.set_item("calibration", calibration_dict(py, &c.calibration)?)?;
            out.set_item("band", c.band)?;
            out.set_item("samples_per_slot", c.samples_per_slot.clone())?;
        }
    }
    Ok(out)
}

/// Executes a configuration and returns the run's results as nested dicts.
///
/// `workers` sizes a dedicated thread pool (results are identical for any
/// worker count). When `out_dir` is given, the standard run directory —
/// `meta.json`, `metrics.jsonl`, `events.jsonl`, `divergences.jsonl`,
/// `checkpoint.bin`, `plots/` — is written there as well, exactly as the
/// CLI would.
#[pyfunction]
#[pyo3(signature = (config, workers=None, out_dir=None))]
fn run(
    py: Python<'_>,
    config: &PyConfig,
    workers: Option<usize>,
    out_dir: Option<&str>,
) -> PyResult<Py<PyAny>> {
    let cfg = config.inner.clone();
    let record = py
        .detach(|| runner::execute(&cfg, workers))
        .map_err(value_error)?;
    if let Some(dir) = out_dir {
        let dir = Path::new(dir);
        runner::persist(&record, dir).map_err(io_error)?;
        let data = runner::PlotData::from_record(&record);
        runner::emit_plots_data(&data, &data.available(), dir).map_err(io_error)?;
    }
    Ok(record_dict(py, &record)?.into())
}

/// Maps a hyperparameter value to its effective inverse temperature.
///
/// `kind` uses config vocabulary: "learning_rate", "dropout_rate",
/// "langevin_temperature", or "batch_size" ("l2_lambda" has no β and
/// raises ValueError).
#[pyfunction]
fn beta_of(kind: &str, value: f64) -> PyResult<f64> {
    let kind: HyperparameterKind =
        serde_json::from_value(serde_json::Value::String(kind.to_string()))
            .map_err(|_| PyValueError::new_err(format!("unknown hyperparameter kind '{kind}'")))?;
    tempering::beta_of(kind, value).map_err(value_error)
}

/// Derives a child seed from a base seed and a stream salt (replica `i`
/// uses salt `i`; the exchange stream uses salt 0x45C8_A17E).
#[pyfunction]
fn derive_seed(base: u64, salt: u64) -> u64 {
    replex_core::derive_seed(base, salt)
}

/// Tabulates the analytic Gibbs density e^(−β·L(w))/Z for a 1-D potential.
///
/// `potential` is "double-well-1d" (requires `barrier`) or "quadratic"
/// (requires `curvature`). Returns a dict with bin `centers`, normalized
/// `density` values, per-bin probability `mass`, and the bin `width`.
#[pyfunction]
#[pyo3(signature = (potential, beta, lo=-3.0, hi=3.0, bins=200, barrier=None, curvature=None))]
#[allow(clippy::too_many_arguments)]
fn gibbs_density(
    py: Python<'_>,
    potential: &str,
    beta: f64,
    lo: f64,
    hi: f64,
    bins: usize,
    barrier: Option<f64>,
    curvature: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let pot = match potential {
        "double-well-1d" => AnalyticPotential::DoubleWell1d {
            barrier: barrier
                .ok_or_else(|| PyValueError::new_err("double-well-1d requires barrier="))?,
        },
        "quadratic" => AnalyticPotential::Quadratic {
            curvature: curvature
                .ok_or_else(|| PyValueError::new_err("quadratic requires curvature="))?,
        },
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown 1-D potential '{other}' (use \"double-well-1d\" or \"quadratic\")"
            )))
        }
    };
    pot.validate().map_err(value_error)?;
    let grid = analytic_gibbs(&pot, beta, GridSpec { lo, hi, n_bins: bins }).map_err(value_error)?;
    let centers: Vec<f64> = (0..grid.spec.n_bins).map(|b| grid.spec.center(b)).collect();
    let width = grid.spec.width();
    let mass: Vec<f64> = grid.density.iter().map(|d| d * width).collect();
    let out = PyDict::new(py);
    out.set_item("centers", centers)?;
    out.set_item("density", grid.density.clone())?;
    out.set_item("mass", mass)?;
    out.set_item("width", width)?;
    Ok(out.into())
}

/// Decodes a `checkpoint.bin` written by a run.
///
/// Returns `{"dim": int, "replicas": [{"id", "final_slot",
/// "steps_completed", "diverged", "weights"}, …]}`.
#[pyfunction]
fn read_checkpoint(py: Python<'_>, path: &str) -> PyResult<Py<PyAny>> {
    let file = runner::read_checkpoint(Path::new(path)).map_err(io_error)?;
    let out = PyDict::new(py);
    out.set_item("dim", file.dim)?;
    let rows = PyList::empty(py);
    for r in &file.replicas {
        let d = PyDict::new(py);
        d.set_item("id", r.id)?;
        d.set_item("final_slot", r.final_slot)?;
        d.set_item("steps_completed", r.steps_completed)?;
        d.set_item("diverged", r.diverged)?;
        d.set_item("weights", r.weights.clone())?;
        rows.append(d)?;
    }
    out.set_item("replicas", rows)?;
    Ok(out.into())
}

#[pymodule]
fn _native(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(beta_of, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(gibbs_density, m)?)?;
    m.add_function(wrap_pyfunction!(read_checkpoint, m)?)?;
    m.add("EXCHANGE_STREAM_SALT", replex_core::runner::EXCHANGE_STREAM_SALT)?;
    Ok(())
}
