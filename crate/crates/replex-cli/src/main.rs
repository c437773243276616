//! `replex` — run replica-exchange experiments from config files.
//!
//! Exit codes: 0 success; 2 configuration error (including usage errors);
//! 3 completed with diverged replicas; 4 I/O failure or damaged artifacts.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use replex_core::runner::{
    emit_plots, emit_plots_data, execute, persist, persist_abort, pt_best_replica, read_curves,
    read_events, read_metrics, ExperimentConfig, Meta, Mode, PlotData, PlotKind, RecordBody,
    RunRecord, RunnerError,
};

/// Environment variable naming the default root for run directories.
const OUT_ROOT_ENV: &str = "REPLEX_OUT_ROOT";

#[derive(Parser)]
#[command(
    name = "replex",
    version,
    about = "Replica-exchange hyperparameter experiments",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a training experiment (config mode "grid" or "pt").
    Train(RunArgs),
    /// Run a weight-diffusion experiment (config mode "diffusion").
    Diffusion(RunArgs),
    /// Verify sampling fidelity and mixing (config mode "gibbs-check").
    GibbsCheck(RunArgs),
    /// Calibrate the exchange constant C (config mode "calibrate-c").
    CalibrateC(RunArgs),
    /// Regenerate plot files from an existing run directory.
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Run directory (default: config's out_dir, then $REPLEX_OUT_ROOT/<config stem>, then ./runs/<config stem>).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: one per CPU). Results do not depend on this.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Replace the config's seeds with streams derived from this base seed.
    #[arg(long, value_name = "K")]
    seed_override: Option<u64>,
}

#[derive(Args)]
struct PlotArgs {
    /// Experiment config file of the run to plot.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Run directory holding the outputs (same default chain as for runs).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Comma-separated plot kinds (default: all the run provides). Kinds:
    /// diffusion-curves, error-curves, exchange-trajectory, acceptance-timeline.
    #[arg(long, value_name = "KINDS", value_delimiter = ',')]
    which: Option<Vec<String>>,
}

fn main() -> ExitCode {
    // Clap handles usage errors itself (exit 2), which matches the
    // config-error code.
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("replex: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn run(cli: Cli) -> Result<i32, RunnerError> {
    match cli.cmd {
        Cmd::Train(args) => run_experiment(args, &[Mode::Grid, Mode::Pt], "train"),
        Cmd::Diffusion(args) => run_experiment(args, &[Mode::Diffusion], "diffusion"),
        Cmd::GibbsCheck(args) => run_experiment(args, &[Mode::GibbsCheck], "gibbs-check"),
        Cmd::CalibrateC(args) => run_experiment(args, &[Mode::CalibrateC], "calibrate-c"),
        Cmd::Plot(args) => plot(args),
    }
}

/// --out beats the config's out_dir beats $REPLEX_OUT_ROOT/<stem> beats
/// ./runs/<stem>.
fn resolve_out_dir(
    flag: &Option<PathBuf>,
    config: &ExperimentConfig,
    config_path: &Path,
) -> PathBuf {
    if let Some(dir) = flag {
        return dir.clone();
    }
    if let Some(dir) = &config.out_dir {
        return dir.clone();
    }
    let stem = config_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string());
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) => PathBuf::from(root).join(stem),
        None => PathBuf::from("runs").join(stem),
    }
}

fn load_config(args_config: &Path, seed_override: Option<u64>) -> Result<ExperimentConfig, RunnerError> {
    let mut config = ExperimentConfig::parse_file(args_config)?;
    if let Some(base) = seed_override {
        config.apply_seed_override(base);
    }
    Ok(config)
}

fn check_mode(config: &ExperimentConfig, allowed: &[Mode], subcommand: &str) -> Result<(), RunnerError> {
    if allowed.contains(&config.mode) {
        Ok(())
    } else {
        Err(RunnerError::Config(format!(
            "subcommand `{subcommand}` cannot run a config with mode = \"{}\"",
            config.mode.name()
        )))
    }
}

fn run_experiment(args: RunArgs, allowed: &[Mode], subcommand: &str) -> Result<i32, RunnerError> {
    let config = load_config(&args.config, args.seed_override)?;
    check_mode(&config, allowed, subcommand)?;
    let out_dir = resolve_out_dir(&args.out, &config, &args.config);

    let record = match execute(&config, args.workers) {
        Ok(record) => record,
        Err(e) => {
            // Mark the directory as aborted but report the original failure;
            // a marking failure on top of it only gets logged.
            if let Err(mark) = persist_abort(&config, &out_dir, &e) {
                eprintln!("replex: could not mark {} as aborted: {mark}", out_dir.display());
            } else {
                eprintln!("replex: aborted; partial outputs marked in {}", out_dir.display());
            }
            return Err(e);
        }
    };
    persist(&record, &out_dir)?;
    let plots = emit_plots(&record, &PlotData::from_record(&record).available(), &out_dir)?;
    summarize(&record, &out_dir, &plots);
    Ok(if record.has_divergence() { 3 } else { 0 })
}

fn summarize(record: &RunRecord, out_dir: &Path, plots: &[PathBuf]) {
    println!("mode: {}", record.config.mode.name());
    println!("run directory: {}", out_dir.display());
    println!("config hash: {}", record.config_hash);
    match &record.body {
        RecordBody::Training(t) => {
            let o = &t.outcome;
            println!(
                "replicas: {} over {} steps; ladder values {:?}",
                o.replicas.len(),
                o.total_steps,
                o.ladder.values
            );
            if let Some(c) = t.resolved_c {
                let origin = if t.calibration.is_some() { "auto-calibrated" } else { "fixed" };
                println!("exchange constant C: {c} ({origin})");
            }
            if o.stats.proposals > 0 {
                println!(
                    "exchanges: {}/{} accepted (alpha {:.3})",
                    o.stats.accepts,
                    o.stats.proposals,
                    o.stats.alpha()
                );
            }
            if let Some(best) = pt_best_replica(&o.metrics) {
                let r = &o.replicas[best];
                print!(
                    "best path: replica {best} (final slot {}, value {})",
                    r.final_slot, o.ladder.values[r.final_slot]
                );
                if let Some(l) = r.final_val_loss {
                    print!(", val loss {l:.6}");
                }
                if let Some(e) = r.final_val_error {
                    print!(", val error {e:.4}");
                }
                println!();
            }
            report_divergences(&o.divergences);
        }
        RecordBody::Diffusion(d) => {
            println!(
                "curves: {} across {} ladder values",
                d.curves.len(),
                d.verdict.final_displacements.len()
            );
            if d.oriented {
                println!(
                    "temperature-like: {} (monotonicity {:.3})",
                    d.verdict.temperature_like, d.verdict.monotonicity_score
                );
            } else {
                println!(
                    "kind has no noise orientation; plateaus {:?}, final displacements {:?}",
                    d.verdict.plateau_detected, d.verdict.final_displacements
                );
            }
        }
        RecordBody::GibbsCheck(g) => {
            println!("exchange constant C: {}", g.resolved_c);
            let worst =
                g.report.per_slot.iter().map(|s| s.tv).fold(0.0f64, f64::max);
            println!("sampling fidelity: worst per-slot TV {worst:.4}");
            println!(
                "coldest-slot transitions: {} (pt) vs {} (baseline)",
                g.report.mixing.pt.per_slot_transitions.last().copied().unwrap_or(0),
                g.report.mixing.baseline.per_slot_transitions.last().copied().unwrap_or(0)
            );
            report_divergences(&g.pt.divergences);
        }
        RecordBody::Calibration(c) => {
            println!(
                "calibrated C: {} (predicted acceptance {:.3}, band [{}, {}])",
                c.calibration.c, c.calibration.predicted_acceptance, c.band.0, c.band.1
            );
            if c.calibration.degenerate {
                println!("note: loss histograms overlap fully; C defaulted to 1");
            }
            report_divergences(&c.baseline.divergences);
        }
    }
    for p in plots {
        println!("plot: {}", p.display());
    }
}

fn report_divergences(divergences: &[replex_core::tempering::DivergenceEvent]) {
    for d in divergences {
        eprintln!("replex: replica {} diverged at step {}: {}", d.replica, d.step, d.reason);
    }
}

fn plot(args: PlotArgs) -> Result<i32, RunnerError> {
    let config = load_config(&args.config, None)?;
    let run_dir = resolve_out_dir(&args.out, &config, &args.config);

    let meta_path = run_dir.join("meta.json");
    let meta_text = std::fs::read_to_string(&meta_path).map_err(RunnerError::io(&meta_path))?;
    let meta: Meta = serde_json::from_str(&meta_text).map_err(|e| RunnerError::Malformed {
        path: meta_path.clone(),
        line: 1,
        message: e.to_string(),
    })?;
    if meta.config_hash != config.hash() {
        return Err(RunnerError::Config(format!(
            "config hash {} does not match the run in {} ({})",
            config.hash(),
            run_dir.display(),
            meta.config_hash
        )));
    }
    if meta.status != "complete" {
        return Err(RunnerError::Config(format!(
            "run in {} has status \"{}\"; only complete runs can be plotted",
            run_dir.display(),
            meta.status
        )));
    }

    let which = match &args.which {
        Some(names) => names
            .iter()
            .map(|n| {
                PlotKind::parse(n).ok_or_else(|| {
                    RunnerError::Config(format!(
                        "unknown plot kind `{n}` (expected one of: {})",
                        PlotKind::ALL.map(PlotKind::name).join(", ")
                    ))
                })
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => Vec::new(), // filled from availability below
    };

    // Reload the rows the renderers need from the run directory.
    let written = if config.mode == Mode::Diffusion {
        let curves = read_curves(&run_dir.join("diffusion.jsonl"))?;
        let data = PlotData {
            metrics: None,
            events: None,
            total_steps: config.diffusion.map_or(0, |d| d.total_steps),
            n_replicas: 0,
            curves: Some(&curves),
        };
        let which = if which.is_empty() { data.available() } else { which };
        emit_plots_data(&data, &which, &run_dir)?
    } else {
        // Training-shaped runs; calibrate-c keeps its run under baseline/.
        let files_dir =
            if config.mode == Mode::CalibrateC { run_dir.join("baseline") } else { run_dir.clone() };
        let metrics = read_metrics(&files_dir.join("metrics.jsonl"))?;
        let events = read_events(&files_dir.join("events.jsonl"))?;
        let schedule = meta
            .schedule
            .as_ref()
            .ok_or_else(|| RunnerError::Config("meta.json lacks the run's schedule".into()))?;
        let data = PlotData {
            metrics: Some(&metrics),
            events: Some(&events),
            total_steps: schedule.total_steps,
            n_replicas: meta.final_state.len(),
            curves: None,
        };
        let which = if which.is_empty() { data.available() } else { which };
        emit_plots_data(&data, &which, &run_dir)?
    };
    for p in &written {
        println!("plot: {}", p.display());
    }
    Ok(0)
}
