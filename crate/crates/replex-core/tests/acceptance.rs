//! The acceptance gate: ten end-to-end checks of the contract this library
//! ships under. Each check is one test, so the harness prints one pass/fail
//! line per contract point. Stated wall-clock budgets are asserted where the
//! contract fixes them.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use replex_core::diffusion::final_window_mean;
use replex_core::dynamics::{DynamicsError, LangevinDynamics, ReplicaDynamics};
use replex_core::gibbs::{analytic_gibbs, burn_in, mixing_report, tv_distance, GridSpec};
use replex_core::landscape::AnalyticPotential;
use replex_core::nn::{
    grad_batch, train_loss_batch, Activation, Mode, MlpSpec, OutputLoss, RegularizerConfig,
};
use replex_core::runner::{
    execute, persist, ExperimentConfig, RecordBody, TrainingRecord, EXCHANGE_STREAM_SALT,
};
use replex_core::tempering::{
    build_ladder, exchange_delta, metropolis_accept, run_parallel_tempering, HyperparameterKind,
    PtSchedule, Seeds,
};
use replex_core::{derive_seed, rng_from_seed};

fn seeds_for(m: usize, base: u64) -> Seeds {
    Seeds {
        replicas: (0..m as u64).map(|i| derive_seed(base, i)).collect(),
        exchange: derive_seed(base, EXCHANGE_STREAM_SALT),
    }
}

fn langevin_factory(
    potential: AnalyticPotential,
    step: f64,
) -> impl Fn(usize, u64) -> Result<Box<dyn ReplicaDynamics>, DynamicsError> + Sync {
    move |_slot, _seed| {
        Ok(Box::new(LangevinDynamics::new(
            potential,
            step,
            HyperparameterKind::LangevinTemperature,
        )?) as Box<dyn ReplicaDynamics>)
    }
}

fn training(record: replex_core::runner::RunRecord) -> TrainingRecord {
    match record.body {
        RecordBody::Training(t) => t,
        _ => panic!("expected a training record"),
    }
}

fn sandbox(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("replex-accept-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Four tempered Langevin chains on the unit-barrier double well must each
/// reproduce the analytic Gibbs density of their own rung: total-variation
/// distance at most 0.05 per slot over exactly 200 000 post-burn-in samples,
/// inside a two-minute single-threaded budget.
#[test]
fn tempered_langevin_samples_the_gibbs_density_at_every_rung() {
    let start = Instant::now();
    let potential = AnalyticPotential::DoubleWell1d { barrier: 1.0 };
    let ladder = build_ladder(
        HyperparameterKind::LangevinTemperature,
        &[1.0, 0.5, 0.25, 0.125],
        1.0,
    )
    .unwrap();
    let schedule = PtSchedule {
        init_steps: 0,
        exchange_every: 100,
        total_steps: 12_500_000,
        eval_every: 100,
        weight_sample_every: Some(50),
        exchanges_enabled: true,
    };
    let factory = langevin_factory(potential, 1e-3);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let outcome = pool
        .install(|| run_parallel_tempering(&factory, &ladder, &schedule, &seeds_for(4, 9001)))
        .unwrap();
    assert!(outcome.divergences.is_empty(), "langevin at step 1e-3 must stay finite");

    let trace = outcome.trace.as_ref().expect("weight trace was requested");
    for slot in 0..ladder.m() {
        let series = trace.slot_series(slot, 0);
        let kept = burn_in(&series, 0.2);
        assert_eq!(kept.len(), 200_000, "post-burn-in sample count per slot");
        let mut grid =
            analytic_gibbs(&potential, ladder.betas[slot], GridSpec { lo: -3.0, hi: 3.0, n_bins: 200 })
                .unwrap();
        grid.accumulate(kept.iter().copied());
        let tv = tv_distance(&grid).unwrap();
        assert!(
            tv <= 0.05,
            "slot {slot} (β = {}): TV distance {tv:.4} exceeds 0.05",
            ladder.betas[slot]
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}, budget is two minutes");
}

/// Every logged exchange must replay exactly from its own record: the
/// exponent recomputes from the logged losses to within 1e-12, a uniform
/// draw is present exactly when the exponent is positive, and the logged
/// decision matches the Metropolis rule applied to the logged numbers.
#[test]
fn every_logged_exchange_replays_exactly_from_its_own_record() {
    let potential = AnalyticPotential::DoubleWell1d { barrier: 1.0 };
    let ladder = build_ladder(
        HyperparameterKind::LangevinTemperature,
        &[1.0, 0.5, 0.25, 0.125],
        2.0,
    )
    .unwrap();
    let schedule = PtSchedule {
        init_steps: 0,
        exchange_every: 50,
        total_steps: 2_000_000,
        eval_every: 50,
        weight_sample_every: None,
        exchanges_enabled: true,
    };
    let factory = langevin_factory(potential, 1e-3);
    let outcome =
        run_parallel_tempering(&factory, &ladder, &schedule, &seeds_for(4, 4242)).unwrap();
    assert_eq!(outcome.events.len(), 40_000, "one proposal per exchange point");

    let mut accepted = 0usize;
    let mut free_accepts = 0usize;
    let mut drawn = 0usize;
    for event in &outcome.events {
        let delta =
            exchange_delta(&outcome.ladder, event.slot_a, event.slot_b, event.loss_a, event.loss_b)
                .unwrap();
        assert!(
            (delta - event.delta).abs() <= 1e-12,
            "step {}: recomputed exponent {delta} vs logged {}",
            event.step,
            event.delta
        );
        match event.draw {
            None => {
                assert!(event.delta <= 0.0, "a draw is skipped only when Δ ≤ 0");
                assert!(event.accepted, "Δ ≤ 0 always accepts");
                free_accepts += 1;
            }
            Some(u) => {
                assert!(event.delta > 0.0, "a draw is consumed only when Δ > 0");
                assert!((0.0..1.0).contains(&u), "uniform draw in [0, 1)");
                assert_eq!(
                    event.accepted,
                    u < (-event.delta).exp(),
                    "step {}: decision must equal (u < e^-Δ)",
                    event.step
                );
                drawn += 1;
            }
        }
        accepted += usize::from(event.accepted);
    }
    assert!(free_accepts > 0 && drawn > 0, "both decision branches must be exercised");
    assert!(
        accepted > 0 && accepted < outcome.events.len(),
        "a healthy run accepts some proposals and rejects others"
    );
}

/// On a synthetic two-rung pair with normally distributed losses, the
/// measured acceptance over 10 000 proposals must sit inside the 99%
/// confidence interval of the Monte-Carlo estimate of E[min(1, e^-Δ)].
#[test]
fn measured_acceptance_matches_the_metropolis_expectation_on_a_synthetic_pair() {
    let ladder =
        build_ladder(HyperparameterKind::LangevinTemperature, &[1.0, 0.5], 1.0).unwrap();
    let hot = Normal::new(0.8, 0.6).unwrap(); // loss at the hot rung (β = 1)
    let cold = Normal::new(0.3, 0.6).unwrap(); // loss at the cold rung (β = 2)

    let n = 10_000u32;
    let mut losses = rng_from_seed(31);
    let mut decisions = rng_from_seed(32);
    let mut accepted = 0u32;
    for _ in 0..n {
        let delta =
            exchange_delta(&ladder, 0, 1, hot.sample(&mut losses), cold.sample(&mut losses))
                .unwrap();
        if metropolis_accept(delta, &mut decisions).0 {
            accepted += 1;
        }
    }
    let alpha = f64::from(accepted) / f64::from(n);

    let m = 1_000_000u32;
    let mut reference = rng_from_seed(33);
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    for _ in 0..m {
        let delta = exchange_delta(
            &ladder,
            0,
            1,
            hot.sample(&mut reference),
            cold.sample(&mut reference),
        )
        .unwrap();
        let p = (-delta).exp().min(1.0);
        sum += p;
        sum_sq += p * p;
    }
    let p_hat = sum / f64::from(m);
    let var_min = (sum_sq / f64::from(m) - p_hat * p_hat).max(0.0);
    assert!(p_hat > 0.05 && p_hat < 0.95, "the toy must not be degenerate: E = {p_hat}");

    // Both estimates carry sampling error; the 99% interval combines them.
    let half_width =
        2.576 * (p_hat * (1.0 - p_hat) / f64::from(n) + var_min / f64::from(m)).sqrt();
    assert!(
        (alpha - p_hat).abs() <= half_width,
        "measured acceptance {alpha:.4} vs expectation {p_hat:.4} ± {half_width:.4}"
    );
}

/// On the high-barrier double well with a cold chain at β = 8, exchanges
/// must multiply the cold chain's inter-well crossings at least threefold
/// over the matched no-exchange twin in at least four of five seed pairs,
/// with every replica completing at least one cold-to-hot-and-back round
/// trip, inside a five-minute budget.
#[test]
fn exchanges_multiply_cold_chain_crossings_over_matched_baselines() {
    let start = Instant::now();
    let potential = AnalyticPotential::DoubleWell1d { barrier: 2.0 };
    let ladder = build_ladder(
        HyperparameterKind::LangevinTemperature,
        &[1.0, 0.5, 0.25, 0.125],
        1.0,
    )
    .unwrap();
    let tempered = PtSchedule {
        init_steps: 0,
        exchange_every: 100,
        total_steps: 600_000,
        eval_every: 100,
        weight_sample_every: Some(50),
        exchanges_enabled: true,
    };
    let frozen = PtSchedule { exchanges_enabled: false, ..tempered.clone() };
    let factory = langevin_factory(potential, 1e-3);
    let cold = ladder.m() - 1;

    let mut crossing_wins = 0usize;
    let mut round_trip_wins = 0usize;
    let mut detail = String::new();
    for pair in 0..5u64 {
        let seeds = seeds_for(4, 7100 + pair);
        let pt = run_parallel_tempering(&factory, &ladder, &tempered, &seeds).unwrap();
        let twin = run_parallel_tempering(&factory, &ladder, &frozen, &seeds).unwrap();
        let report = mixing_report(&pt, &twin, &potential).unwrap();
        let pt_crossings = report.pt.per_slot_transitions[cold];
        let twin_crossings = report.baseline.per_slot_transitions[cold];
        if pt_crossings >= 3 * twin_crossings.max(1) {
            crossing_wins += 1;
        }
        if report.pt.round_trips.iter().all(|&trips| trips >= 1) {
            round_trip_wins += 1;
        }
        detail.push_str(&format!(
            "pair {pair}: cold crossings {pt_crossings} vs {twin_crossings}, round trips {:?}\n",
            report.pt.round_trips
        ));
    }
    assert!(crossing_wins >= 4, "cold-chain speedup held in only {crossing_wins}/5 pairs:\n{detail}");
    assert_eq!(round_trip_wins, 5, "every replica must round-trip in every pair:\n{detail}");
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(300), "took {elapsed:?}, budget is five minutes");
}

/// On three-class Gaussian blobs with a two-hidden-layer MLP: dropout and
/// learning-rate ladders must read as temperature-like (rank correlation of
/// oriented value vs late-window displacement at least 0.8 across five
/// seeds), while an L2 ladder must plateau on every curve at a level
/// strictly decreasing in λ — all inside a ten-minute budget.
#[test]
fn dropout_and_learning_rate_diffuse_like_temperature_but_l2_plateaus() {
    let start = Instant::now();
    let run = |ladder: &str, optimizer: &str, diffusion: &str| {
        let text = format!(
            r#"
mode = "diffusion"

[objective]
kind = "mlp"
hidden = [32, 16]

[dataset]
source = "blobs"
n = 300
classes = 3
spread = 1.5
seed = 11

[ladder]
{ladder}

[optimizer]
{optimizer}

[seeds]
base = 4100

[diffusion]
n_seeds = 5
{diffusion}
"#
        );
        let config = ExperimentConfig::parse_str(&text).unwrap();
        match execute(&config, None).unwrap().body {
            RecordBody::Diffusion(d) => d,
            _ => panic!("expected a diffusion record"),
        }
    };

    let dropout = run(
        "kind = \"dropout_rate\"\nvalues = [0.0, 0.25, 0.5]",
        "learning_rate = 0.1\nbatch_size = 16",
        "total_steps = 1500\nsample_every = 100",
    );
    assert!(dropout.oriented, "dropout declares a noise orientation");
    assert!(
        dropout.verdict.temperature_like && dropout.verdict.monotonicity_score >= 0.8,
        "dropout must be temperature-like: score {}",
        dropout.verdict.monotonicity_score
    );

    let lr = run(
        "kind = \"learning_rate\"\nvalues = [0.01, 0.05, 0.1]",
        "batch_size = 16",
        "total_steps = 1500\nsample_every = 100",
    );
    assert!(lr.oriented, "learning rate declares a noise orientation");
    assert!(
        lr.verdict.temperature_like && lr.verdict.monotonicity_score >= 0.8,
        "learning rate must be temperature-like: score {}",
        lr.verdict.monotonicity_score
    );

    let l2 = run(
        "kind = \"l2_lambda\"\nvalues = [0.0001, 0.001, 0.01]",
        "learning_rate = 0.2\nbatch_size = 16",
        "total_steps = 150000\nsample_every = 1000",
    );
    assert!(!l2.oriented, "L2 declares no noise orientation");
    assert!(!l2.verdict.temperature_like, "L2 must not read as temperature-like");
    assert!(
        l2.verdict.plateau_detected.iter().all(|&p| p),
        "every L2 curve must plateau: {:?}",
        l2.verdict.plateau_detected
    );
    let levels: Vec<(f64, f64)> = l2.verdict.final_displacements.clone();
    assert!(
        levels.windows(2).all(|w| w[0].1 > w[1].1),
        "plateau level must fall as λ rises: {levels:?}"
    );
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(600), "took {elapsed:?}, budget is ten minutes");
}

/// Training with batch size 8 must wander farther in weight space than
/// batch size 128: the late-window displacement of the small batch exceeds
/// the large batch's for the same seed in at least four of five seeds.
/// Fixed dropout keeps per-example gradients noisy at the loss floor and a
/// little weight decay pins the optimum, so the late window reads the
/// batch-dependent noise floor rather than the shared drift from
/// initialization.
#[test]
fn small_batches_diffuse_farther_than_large_ones() {
    let text = r#"
mode = "diffusion"

[objective]
kind = "mlp"
hidden = [32, 16]

[dataset]
source = "blobs"
n = 300
classes = 3
spread = 1.5
seed = 11

[ladder]
kind = "batch_size"
values = [8.0, 128.0]

[optimizer]
learning_rate = 0.3
l2 = 0.01
dropout = 0.25

[seeds]
base = 4300

[diffusion]
n_seeds = 5
total_steps = 8000
sample_every = 500
"#;
    let config = ExperimentConfig::parse_str(text).unwrap();
    let record = match execute(&config, None).unwrap().body {
        RecordBody::Diffusion(d) => d,
        _ => panic!("expected a diffusion record"),
    };
    let late = |value: f64, seed: usize| {
        let curve = record
            .curves
            .iter()
            .find(|c| c.value == value && c.replica_id == seed)
            .unwrap_or_else(|| panic!("no curve for value {value}, seed {seed}"));
        assert!(!curve.diverged, "value {value}, seed {seed} diverged");
        final_window_mean(curve, 0.1)
    };
    let mut wins = 0usize;
    let mut detail = String::new();
    for seed in 0..5 {
        let small = late(8.0, seed);
        let large = late(128.0, seed);
        if small > large {
            wins += 1;
        }
        detail.push_str(&format!("seed {seed}: batch 8 moved {small:.4}, batch 128 moved {large:.4}\n"));
    }
    assert!(wins >= 4, "small batches out-diffused large ones in only {wins}/5 seeds:\n{detail}");
}

fn two_moons_config(mode: &str, c_line: &str, base_seed: u64) -> ExperimentConfig {
    let text = format!(
        r#"
mode = "{mode}"

[objective]
kind = "mlp"
hidden = [8]

[dataset]
source = "two-moons"
n = 2000
noise_sd = 0.2
seed = 5
validation_fraction = 0.18

[ladder]
kind = "dropout_rate"
values = [0.0, 0.2, 0.4, 0.6]
{c_line}

[schedule]
init_steps = 500
exchange_every = 100
total_steps = 5000

[optimizer]
learning_rate = 0.3
batch_size = 16
momentum = 0.81
"#
    );
    let mut config = ExperimentConfig::parse_str(&text).unwrap();
    config.apply_seed_override(base_seed);
    config
}

/// The replica at the end of a run holding the lowest validation loss is
/// the run's selected model; this returns its validation error.
fn selected_val_error(outcome: &replex_core::tempering::PtOutcome) -> f64 {
    let best = outcome
        .replicas
        .iter()
        .filter(|r| r.final_val_loss.is_some_and(f64::is_finite))
        .min_by(|a, b| {
            a.final_val_loss
                .partial_cmp(&b.final_val_loss)
                .unwrap()
                .then(a.id.cmp(&b.id))
        })
        .expect("at least one replica finished");
    best.final_val_error.expect("classification run reports an error rate")
}

/// On two-moons with a dropout ladder and an auto-calibrated exchange
/// constant, the tempered run's selected model must match or beat the best
/// of four fixed-dropout runs (same seeds, same budget) in at least seven
/// of ten seeds, and its mean validation error must be strictly lower by a
/// one-sided paired t-test at the 5% level — inside a fifteen-minute budget
/// on four workers.
#[test]
fn tempered_search_beats_the_best_fixed_replica_on_two_moons() {
    let start = Instant::now();
    let mut wins = 0usize;
    let mut diffs = Vec::with_capacity(10);
    let mut detail = String::new();
    for k in 0..10u64 {
        let base = 6200 + 71 * k;
        let pt = training(execute(&two_moons_config("pt", "c = \"auto\"", base), Some(4)).unwrap());
        let grid = training(execute(&two_moons_config("grid", "", base), Some(4)).unwrap());
        let pt_error = selected_val_error(&pt.outcome);
        // Both arms apply the same model-selection rule: pick the replica
        // with the lowest final validation loss, report its validation
        // error. For the fixed arm that replica is the best of four
        // independent fixed-dropout runs.
        let fixed_error = selected_val_error(&grid.outcome);
        if pt_error <= fixed_error {
            wins += 1;
        }
        diffs.push(fixed_error - pt_error);
        detail.push_str(&format!(
            "seed {k}: tempered {pt_error:.4} vs best fixed {fixed_error:.4}\n"
        ));
    }
    assert!(wins >= 7, "tempered matched-or-beat fixed in only {wins}/10 seeds:\n{detail}");

    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    let t = mean / (var / n).sqrt();
    // One-sided critical value at the 5% level with nine degrees of freedom.
    assert!(
        mean > 0.0 && t > 1.833,
        "mean improvement {mean:.5} (t = {t:.3}) is not significantly positive:\n{detail}"
    );
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(900), "took {elapsed:?}, budget is fifteen minutes");
}

/// A tempered run whose first exchange lands beyond the step budget must
/// be indistinguishable from independent fixed runs: with matched seeds,
/// the metric logs agree byte for byte (and so do the final weights).
#[test]
fn a_ladder_that_never_exchanges_matches_independent_runs_byte_for_byte() {
    let make = |mode: &str, exchange_every: u64, c_line: &str| {
        let text = format!(
            r#"
mode = "{mode}"

[objective]
kind = "mlp"
hidden = [8, 8]

[dataset]
source = "two-moons"
n = 500
noise_sd = 0.2
seed = 5

[ladder]
kind = "dropout_rate"
values = [0.0, 0.2, 0.4, 0.6]
{c_line}

[schedule]
exchange_every = {exchange_every}
eval_every = 100
total_steps = 2000

[optimizer]
learning_rate = 0.1
batch_size = 32
"#
        );
        ExperimentConfig::parse_str(&text).unwrap()
    };
    // The tempered run's first exchange point (step 10 000) lies beyond the
    // 2 000-step budget; the grid run proposes no exchanges by construction.
    let pt = execute(&make("pt", 10_000, "c = 2.0"), None).unwrap();
    let grid = execute(&make("grid", 100, ""), None).unwrap();

    let dir = sandbox("never-exchanges");
    let (pt_dir, grid_dir) = (dir.join("pt"), dir.join("grid"));
    persist(&pt, &pt_dir).unwrap();
    persist(&grid, &grid_dir).unwrap();
    for file in ["metrics.jsonl", "events.jsonl", "checkpoint.bin"] {
        let a = std::fs::read(pt_dir.join(file)).unwrap();
        let b = std::fs::read(grid_dir.join(file)).unwrap();
        assert_eq!(a, b, "{file} must agree byte for byte");
    }
    assert!(
        !std::fs::read_to_string(pt_dir.join("metrics.jsonl")).unwrap().is_empty(),
        "the comparison must not be vacuous"
    );
    std::fs::remove_dir_all(&dir).unwrap();
}

/// Exact backprop against central finite differences, for every activation,
/// output head, and regularizer combination, at every weight coordinate:
/// relative error below 1e-5. Dropout masks are frozen by reseeding the
/// mask stream for every evaluation.
#[test]
fn backprop_matches_finite_differences_for_every_head_and_regularizer() {
    let regularizers = [
        RegularizerConfig::NONE,
        RegularizerConfig { dropout_rate: 0.3, l2_lambda: 0.0 },
        RegularizerConfig { dropout_rate: 0.0, l2_lambda: 1e-3 },
        RegularizerConfig { dropout_rate: 0.3, l2_lambda: 1e-3 },
    ];
    let mut rng = rng_from_seed(880);
    for output in [OutputLoss::SoftmaxCrossEntropy, OutputLoss::MeanSquaredError] {
        for activation in [Activation::Tanh, Activation::Relu] {
            let spec = MlpSpec::uniform(vec![4, 6, 5, 3], activation, output);
            let w: Vec<f64> = (0..spec.n_weights()).map(|_| rng.gen_range(-0.7..0.7)).collect();
            let n = 5usize;
            let x: Vec<f64> = (0..n * 4).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            for reg in &regularizers {
                let mask_seed = 9_000 + (reg.dropout_rate * 10.0) as u64;
                let grad = {
                    let mut masks = rng_from_seed(mask_seed);
                    grad_batch(&spec, &w, &x, &labels, reg, Mode::Train, &mut masks).unwrap().1
                };
                let loss_at = |wp: &[f64]| {
                    let mut masks = rng_from_seed(mask_seed);
                    train_loss_batch(&spec, wp, &x, &labels, reg, &mut masks).unwrap()
                };
                for i in 0..w.len() {
                    let h = 1e-5 * (1.0 + w[i].abs());
                    let mut hi = w.clone();
                    let mut lo = w.clone();
                    hi[i] += h;
                    lo[i] -= h;
                    let numeric = (loss_at(&hi) - loss_at(&lo)) / (2.0 * h);
                    let analytic = grad[i];
                    let rel =
                        (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-8);
                    assert!(
                        rel < 1e-5,
                        "{activation:?}/{output:?}/dropout {}/λ {}: coord {i} numeric {numeric} \
                         vs analytic {analytic} (rel {rel:.2e})",
                        reg.dropout_rate,
                        reg.l2_lambda
                    );
                }
            }
        }
    }
}

/// Calibrating the exchange constant on a short no-exchange pre-run and
/// then running the full tempered search with that constant must land the
/// realized exchange acceptance inside [0.15, 0.55].
#[test]
fn a_calibrated_exchange_constant_lands_acceptance_in_the_working_band() {
    let calibration = two_moons_config("calibrate-c", "", 3100);
    let record = execute(&calibration, None).unwrap();
    let found = match record.body {
        RecordBody::Calibration(c) => c,
        _ => panic!("expected a calibration record"),
    };
    assert!(!found.calibration.degenerate, "two-moons losses must spread across rungs");
    let c = found.calibration.c;
    assert!(c.is_finite() && c > 0.0, "calibrated constant must be positive: {c}");

    let tempered = two_moons_config("pt", &format!("c = {c}"), 3100);
    let run = training(execute(&tempered, None).unwrap());
    assert_eq!(run.resolved_c, Some(c), "the run must use the supplied constant");
    let stats = &run.outcome.stats;
    let alpha = stats.alpha();
    assert!(
        (0.15..=0.55).contains(&alpha),
        "realized acceptance {alpha:.3} ({}/{} proposals) outside [0.15, 0.55]",
        stats.accepts,
        stats.proposals
    );
}
