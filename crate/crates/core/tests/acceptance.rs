//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (visible with `--nocapture`).
//!
//! The experiment-level criteria run through the same pipeline as the CLI
//! (config -> run_experiment -> CSV artifacts). Each experiment executes twice
//! into separate directories so the determinism criterion can compare bytes;
//! results are cached so every criterion reads from a single pair of runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use badam::config::ExperimentConfig;
use badam::data::{gen_pattern_images, write_idx_images, write_idx_labels, PatternTask};
use badam::experiment::{run_experiment, wheel_uniform_normalized_expectation};
use badam::nn::{
    backward, loss, LossKind, Mode, Network, OutputHead, TargetsRef, WeightInit,
};
use badam::optim::{MomentState, OptimizerConfig};
use badam::posterior::{extract_posterior, shrinkage, EffectiveN, GaussianPosterior, PriorConfig};

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
}

// ---------------------------------------------------------------------------
// criterion 1: gradient correctness
// ---------------------------------------------------------------------------

/// Central finite differences through forward passes only.
fn finite_difference(
    net: &Network,
    inputs: &Array2<f64>,
    targets: TargetsRef<'_>,
    kind: LossKind,
) -> Vec<f64> {
    let h = 1e-5;
    let base = net.params().clone();
    (0..base.len())
        .map(|i| {
            let eval = |delta: f64| {
                let mut shifted = net.clone();
                let mut params = base.clone();
                params.values_mut()[i] += delta;
                shifted.set_params(params).unwrap();
                loss(shifted.predict(inputs.view()).unwrap().view(), targets, kind).unwrap()
            };
            (eval(h) - eval(-h)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut max_rel = 0.0f64;

    for case in 0..20 {
        // random small architectures, <= 200 parameters
        let (layer_sizes, head): (Vec<usize>, OutputHead) = loop {
            let depth = rng.random_range(2..=4);
            let mut sizes = vec![rng.random_range(1..=6)];
            for _ in 0..depth - 1 {
                sizes.push(rng.random_range(1..=8));
            }
            let params: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
            if params <= 200 {
                let head = if case % 2 == 0 {
                    OutputHead::Linear
                } else {
                    OutputHead::Softmax
                };
                break (sizes, head);
            }
        };
        let mut net = Network::new(layer_sizes.clone(), head, 0.0).unwrap();
        net.initialize(WeightInit::Uniform { limit: 0.7 }, &mut rng);
        let batch = rng.random_range(1..=6);
        let inputs = Array2::from_shape_fn((batch, layer_sizes[0]), |_| {
            rng.random_range(-1.5..1.5)
        });
        let out_dim = *layer_sizes.last().unwrap();
        let classes: Vec<usize> = (0..batch).map(|_| rng.random_range(0..out_dim)).collect();
        let values = Array2::from_shape_fn((batch, out_dim), |_| rng.random_range(-1.0..1.0));
        let (targets, kind) = match head {
            OutputHead::Linear => (TargetsRef::Values(values.view()), LossKind::Mse),
            OutputHead::Softmax => {
                (TargetsRef::Classes(&classes), LossKind::SoftmaxCrossEntropy)
            }
        };

        let (_, cache) = net
            .forward::<ChaCha8Rng>(inputs.view(), Mode::Train, None)
            .unwrap();
        let analytic = backward(&net, &cache, targets, kind).unwrap();
        let reference = finite_difference(&net, &inputs, targets, kind);
        for (a, f) in analytic.values().iter().zip(&reference) {
            let denom = a.abs().max(f.abs()).max(1e-8);
            max_rel = max_rel.max(((a - f) / denom).abs());
        }
    }

    let elapsed = start.elapsed();
    let pass = max_rel < 1e-5 && elapsed < Duration::from_secs(10);
    report(
        "1 gradient-correctness",
        pass,
        &format!("max rel err {max_rel:.3e}, {elapsed:.2?}"),
    );
    assert!(pass, "max rel err {max_rel}, elapsed {elapsed:?}");
}

// ---------------------------------------------------------------------------
// criterion 2: optimizer oracle equivalence
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_optimizer_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut max_adam_rel = 0.0f64;

    for _ in 0..200 {
        let d = rng.random_range(1..=10);
        let t_len = rng.random_range(1..=100);
        let beta1 = rng.random_range(0.0..0.99);
        let beta2 = rng.random_range(0.5..0.9999);
        let history: Vec<Vec<f64>> = (0..t_len)
            .map(|_| (0..d).map(|_| rng.random_range(-10.0..10.0)).collect())
            .collect();

        // adam: recursive state vs the closed-form weighted sums
        let adam = OptimizerConfig {
            beta1,
            beta2,
            ..OptimizerConfig::adam(0.1)
        };
        let mut state = MomentState::new(d);
        for g in &history {
            let g = badam::Gradient::new(g.clone(), vec![(1, d)]).unwrap();
            state.update_moments(&g, &adam).unwrap();
        }
        let (m_hat, v_hat) = state.read_corrected(&adam).unwrap();
        let t = history.len();
        for j in 0..d {
            let mut m_sum = 0.0;
            let mut m_abs = 0.0;
            let mut v_sum = 0.0;
            for (i, g) in history.iter().enumerate() {
                let w1 = beta1.powi((t - 1 - i) as i32);
                let w2 = beta2.powi((t - 1 - i) as i32);
                m_sum += w1 * g[j];
                m_abs += w1 * g[j].abs();
                v_sum += w2 * g[j] * g[j];
            }
            let c1 = (1.0 - beta1) / (1.0 - beta1.powi(t as i32));
            let c2 = (1.0 - beta2) / (1.0 - beta2.powi(t as i32));
            let m_ref = c1 * m_sum;
            let v_ref = c2 * v_sum;
            let m_scale = (c1 * m_abs).max(1e-12);
            max_adam_rel = max_adam_rel.max(((m_hat[j] - m_ref) / m_scale).abs());
            max_adam_rel = max_adam_rel.max(((v_hat[j] - v_ref) / v_ref.max(1e-12)).abs());
        }

        // adagrad: exact average of squared gradients in arrival order
        let adagrad = OptimizerConfig::adagrad(0.1);
        let mut state = MomentState::new(d);
        let mut acc = vec![0.0f64; d];
        for g in &history {
            let grad = badam::Gradient::new(g.clone(), vec![(1, d)]).unwrap();
            state.update_moments(&grad, &adagrad).unwrap();
            for j in 0..d {
                acc[j] += g[j] * g[j];
            }
        }
        let (_, v_hat) = state.read_corrected(&adagrad).unwrap();
        for j in 0..d {
            assert_eq!(v_hat[j], acc[j] / t as f64, "adagrad average must be exact");
        }

        // ogd: step is bit-exactly theta - lr * g
        let ogd = OptimizerConfig::ogd(rng.random_range(0.001..0.5));
        let mut theta =
            badam::ParamVector::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect(), vec![(1, d)])
                .unwrap();
        let mut state = MomentState::new(d);
        for g in &history {
            let grad = badam::Gradient::new(g.clone(), vec![(1, d)]).unwrap();
            state.update_moments(&grad, &ogd).unwrap();
            let expected: Vec<f64> = theta
                .values()
                .iter()
                .zip(g)
                .map(|(&th, &gi)| th - ogd.eta * gi)
                .collect();
            theta = badam::optim::step(&theta, &state, &ogd).unwrap();
            assert_eq!(theta.values(), expected.as_slice(), "ogd step must be bit-exact");
        }
    }

    let elapsed = start.elapsed();
    let pass = max_adam_rel < 1e-12 && elapsed < Duration::from_secs(5);
    report(
        "2 optimizer-oracle-equivalence",
        pass,
        &format!("adam max rel dev {max_adam_rel:.3e}, {elapsed:.2?}"),
    );
    assert!(pass, "adam dev {max_adam_rel}, elapsed {elapsed:?}");
}

// ---------------------------------------------------------------------------
// criterion 3: posterior closed-form suite
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_posterior_closed_form_suite() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut max_identity_rel = 0.0f64;
    let mut failures = Vec::new();

    for _ in 0..500 {
        let d = rng.random_range(1..=8);
        let sigma = rng.random_range(0.01..2.0);
        let n_val = rng.random_range(1.0..1e6);
        let theta_vals: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let v_hat: Vec<f64> = (0..d).map(|_| rng.random_range(1e-8..10.0)).collect();

        // one adam step with g = sqrt(v_hat) reproduces v_hat after correction
        let cfg = OptimizerConfig::adam(0.1);
        let g: Vec<f64> = v_hat.iter().map(|v| v.sqrt()).collect();
        let mut state = MomentState::new(d);
        state
            .update_moments(&badam::Gradient::new(g, vec![(1, d)]).unwrap(), &cfg)
            .unwrap();
        let prior = PriorConfig::new(sigma).unwrap();
        let n = EffectiveN::fixed(n_val).unwrap();
        let theta = badam::ParamVector::new(theta_vals.clone(), vec![(1, d)]).unwrap();
        let post = extract_posterior(&theta, &state, &cfg, &prior, &n).unwrap();

        let (_, v_corr) = state.read_corrected(&cfg).unwrap();
        let sigma_sq = sigma * sigma;
        for i in 0..d {
            let s = v_corr[i].sqrt();
            let ns = n_val * s;
            // completing-the-square identity
            let lhs = post.mean()[i] * (ns + 1.0 / sigma_sq);
            let rhs = ns * theta_vals[i];
            let rel = ((lhs - rhs) / rhs.abs().max(1e-9)).abs();
            max_identity_rel = max_identity_rel.max(rel);
            // variance bounded by the prior
            if post.variance()[i] > sigma_sq {
                failures.push(format!("variance {} > prior {sigma_sq}", post.variance()[i]));
            }
            // shrinkage strictly inside [0, 1)
            let sh = shrinkage(&state, &cfg, &prior, &n, i).unwrap();
            if !(0.0..1.0).contains(&sh) {
                failures.push(format!("shrinkage {sh} outside [0,1)"));
            }
        }
    }

    // prior recovery: zero curvature reproduces the prior exactly
    let cfg = OptimizerConfig::adam(0.1);
    let mut state = MomentState::new(2);
    state
        .update_moments(
            &badam::Gradient::new(vec![0.0, 0.0], vec![(1, 2)]).unwrap(),
            &cfg,
        )
        .unwrap();
    let prior = PriorConfig::new(0.1).unwrap();
    let n = EffectiveN::fixed(1e9).unwrap();
    let theta = badam::ParamVector::new(vec![4.0, -3.0], vec![(1, 2)]).unwrap();
    let post = extract_posterior(&theta, &state, &cfg, &prior, &n).unwrap();
    if post.mean() != [0.0, 0.0] || post.variance() != [0.01, 0.01] {
        failures.push("prior not recovered exactly at s = 0".into());
    }

    // sampling moments at 1e5 draws within 3 standard errors
    let post = GaussianPosterior::new(vec![1.0], vec![0.25], vec![(1, 1)]).unwrap();
    let mut sample_rng = ChaCha8Rng::seed_from_u64(304);
    let n_draws = 100_000;
    let draws: Vec<f64> = post
        .sample_weights(&mut sample_rng, n_draws)
        .into_iter()
        .map(|p| p.values()[0])
        .collect();
    let mean = draws.iter().sum::<f64>() / n_draws as f64;
    let var =
        draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n_draws - 1) as f64;
    let se_mean = 0.5 / (n_draws as f64).sqrt();
    let se_var = 0.25 * (2.0 / (n_draws as f64 - 1.0)).sqrt();
    if (mean - 1.0).abs() > 3.0 * se_mean {
        failures.push(format!("sample mean {mean} outside 3 SE"));
    }
    if (var - 0.25).abs() > 3.0 * se_var {
        failures.push(format!("sample variance {var} outside 3 SE"));
    }

    let elapsed = start.elapsed();
    let pass =
        max_identity_rel < 1e-12 && failures.is_empty() && elapsed < Duration::from_secs(10);
    report(
        "3 posterior-closed-form",
        pass,
        &format!(
            "identity max rel {max_identity_rel:.3e}, {} other failures, {elapsed:.2?}",
            failures.len()
        ),
    );
    assert!(pass, "identity rel {max_identity_rel}, failures {failures:?}");
}

// ---------------------------------------------------------------------------
// experiment runs shared by criteria 4-8
// ---------------------------------------------------------------------------

struct Runs {
    _tmp: tempfile::TempDir,
    first: PathBuf,
    second: PathBuf,
    elapsed_first: Duration,
}

fn run_twice(mut cfg: ExperimentConfig, tmp: tempfile::TempDir) -> Runs {
    // keep the library-level call hermetic
    std::env::remove_var("BADAM_OUTPUT_DIR");
    let first = tmp.path().join("run_a");
    let second = tmp.path().join("run_b");
    cfg.experiment.output_dir = first.to_string_lossy().into_owned();
    let start = Instant::now();
    run_experiment(&cfg).expect("first experiment run");
    let elapsed_first = start.elapsed();
    cfg.experiment.output_dir = second.to_string_lossy().into_owned();
    run_experiment(&cfg).expect("second experiment run");
    Runs {
        _tmp: tmp,
        first,
        second,
        elapsed_first,
    }
}

fn regress_runs() -> &'static Runs {
    static RUNS: OnceLock<Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let tmp = tempfile::tempdir().expect("tempdir");
        let mut cfg = ExperimentConfig::default();
        cfg.experiment.kind = "regress".into();
        cfg.experiment.seeds = vec![1, 2, 3, 4, 5];
        cfg.experiment.workers = 2;
        cfg.network.hidden = vec![100, 100, 100, 100];
        cfg.network.dropout_rate = 0.05;
        cfg.optimizer.eta = 0.01;
        cfg.training.epochs = 200;
        cfg.training.batch_size = 32;
        cfg.training.clip_norm = 5.0;
        cfg.prior.sigma_prior = 0.1;
        cfg.regress.n_train = 2000;
        cfg.regress.n_test = 500;
        cfg.regress.obs_noise = 0.02;
        cfg.regress.predictive_samples = 100;
        run_twice(cfg, tmp)
    })
}

/// Synthetic 10-class 28x28 image set written through the IDX format; the
/// sandbox has no dataset downloads, so the pruning pipeline runs end to end
/// (IDX parsing included) on generated images at the specified scale.
fn pattern_idx_fixture() -> &'static (tempfile::TempDir, [PathBuf; 4]) {
    static FIXTURE: OnceLock<(tempfile::TempDir, [PathBuf; 4])> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let tmp = tempfile::tempdir().expect("tempdir");
        let task = PatternTask::default();
        let mut train_rng = ChaCha8Rng::seed_from_u64(505);
        let (train_images, train_labels) = gen_pattern_images(&task, 10_000, &mut train_rng);
        let mut test_rng = ChaCha8Rng::seed_from_u64(506);
        let (test_images, test_labels) = gen_pattern_images(&task, 2_000, &mut test_rng);

        let paths = [
            tmp.path().join("train-images.idx"),
            tmp.path().join("train-labels.idx"),
            tmp.path().join("test-images.idx"),
            tmp.path().join("test-labels.idx"),
        ];
        write_idx_images(&paths[0], &train_images, task.side, task.side).unwrap();
        write_idx_labels(&paths[1], &train_labels).unwrap();
        write_idx_images(&paths[2], &test_images, task.side, task.side).unwrap();
        write_idx_labels(&paths[3], &test_labels).unwrap();
        (tmp, paths)
    })
}

fn prune_runs() -> &'static Runs {
    static RUNS: OnceLock<Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let (_, idx_paths) = pattern_idx_fixture();
        let tmp = tempfile::tempdir().expect("tempdir");
        let mut cfg = ExperimentConfig::default();
        cfg.experiment.kind = "prune".into();
        cfg.experiment.seeds = vec![1, 2, 3, 4, 5];
        cfg.experiment.workers = 2;
        cfg.network.hidden = vec![400, 400];
        cfg.network.dropout_rate = 0.25;
        cfg.optimizer.eta = 0.001;
        cfg.training.batch_size = 128;
        cfg.training.clip_norm = 5.0;
        cfg.prior.sigma_prior = 0.1;
        cfg.prune.data = "idx".into();
        cfg.prune.train_images = idx_paths[0].to_string_lossy().into_owned();
        cfg.prune.train_labels = idx_paths[1].to_string_lossy().into_owned();
        cfg.prune.test_images = idx_paths[2].to_string_lossy().into_owned();
        cfg.prune.test_labels = idx_paths[3].to_string_lossy().into_owned();
        cfg.prune.train_subset = 10_000;
        cfg.prune.fractions = vec![0.0, 0.25, 0.5, 0.75, 0.9, 0.95, 0.98, 1.0];
        cfg.prune.phase1_epochs = 20;
        cfg.prune.phase2_epochs = 10;
        cfg.prune.phase2_beta2 = 0.9996;
        run_twice(cfg, tmp)
    })
}

fn wheel_config(agents: &[&str]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.kind = "bandit".into();
    cfg.experiment.seeds = (1..=10).collect();
    cfg.experiment.workers = 2;
    cfg.network.hidden = vec![100, 100];
    cfg.optimizer.eta = 0.1;
    cfg.optimizer.lr_schedule = "inverse_decay".into();
    cfg.prior.sigma_prior = 0.2;
    cfg.training.clip_norm = 5.0;
    cfg.bandit.env = "wheel".into();
    cfg.bandit.delta = 0.5;
    cfg.bandit.horizon = 5_000;
    cfg.bandit.agents = agents.iter().map(|s| s.to_string()).collect();
    cfg
}

fn bandit_uniform_runs() -> &'static Runs {
    static RUNS: OnceLock<Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let tmp = tempfile::tempdir().expect("tempdir");
        run_twice(wheel_config(&["uniform"]), tmp)
    })
}

fn bandit_main_runs() -> &'static Runs {
    static RUNS: OnceLock<Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let tmp = tempfile::tempdir().expect("tempdir");
        run_twice(wheel_config(&["badam_thompson", "uniform"]), tmp)
    })
}

// --------------------------------------------------------------------------
// CSV helpers
// --------------------------------------------------------------------------

fn read_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(str::to_string)
        .collect()
}

/// (x, pred_std) pairs from one predictive CSV.
fn predictive_stds(path: &Path) -> Vec<(f64, f64)> {
    read_lines(path)
        .iter()
        .skip(1)
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            (cols[0].parse().unwrap(), cols[2].parse().unwrap())
        })
        .collect()
}

/// metric -> per-seed values, from metrics.csv rows `experiment,seed,step,metric,value`.
fn metric_values(path: &Path, metric: &str) -> Vec<(u64, f64)> {
    read_lines(path)
        .iter()
        .skip(1)
        .filter_map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            (cols[3] == metric).then(|| (cols[1].parse().unwrap(), cols[4].parse().unwrap()))
        })
        .collect()
}

/// rows of bandit_results.csv for one agent: (seed, normalized_reward).
fn bandit_normalized(path: &Path, agent: &str) -> Vec<(u64, f64)> {
    read_lines(path)
        .iter()
        .skip(1)
        .filter_map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            (cols[0] == agent).then(|| (cols[3].parse().unwrap(), cols[5].parse().unwrap()))
        })
        .collect()
}

fn prune_curve_value(path: &Path, criterion: &str, p: &str) -> f64 {
    read_lines(path)
        .iter()
        .skip(1)
        .find_map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            (cols[0] == criterion && cols[1] == p).then(|| cols[2].parse().unwrap())
        })
        .unwrap_or_else(|| panic!("no prune row for ({criterion}, {p})"))
}

// ---------------------------------------------------------------------------
// criterion 4: toy regression uncertainty
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_toy_regression_uncertainty() {
    let runs = regress_runs();
    let mut ratios = Vec::new();
    let mut seeds_passing = 0;
    for seed in 1..=5u64 {
        let stds = predictive_stds(&runs.first.join(format!("predictive_seed{seed}.csv")));
        let outside: Vec<f64> = stds
            .iter()
            .filter(|(x, _)| (-0.5 < *x && *x < 0.0) || (0.7 < *x && *x < 1.2))
            .map(|(_, s)| *s)
            .collect();
        let inside: Vec<f64> = stds
            .iter()
            .filter(|(x, _)| 0.1 < *x && *x < 0.4)
            .map(|(_, s)| *s)
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let ratio = mean(&outside) / mean(&inside);
        if ratio >= 1.5 {
            seeds_passing += 1;
        }
        ratios.push(format!("seed {seed}: {ratio:.2}x"));
    }

    let within_budget = runs.elapsed_first < Duration::from_secs(300);
    let pass = seeds_passing >= 4 && within_budget;
    report(
        "4 toy-regression-uncertainty",
        pass,
        &format!(
            "{seeds_passing}/5 seeds >= 1.5x [{}], run {:.1?}",
            ratios.join(", "),
            runs.elapsed_first
        ),
    );
    assert!(
        pass,
        "{seeds_passing}/5 seeds passed ({ratios:?}), elapsed {:?}",
        runs.elapsed_first
    );
}

// ---------------------------------------------------------------------------
// criterion 5: pruning curve
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_pruning_curve() {
    let runs = prune_runs();
    let curve = runs.first.join("prune_curve.csv");

    let acc_p0 = prune_curve_value(&curve, "snr", "0");
    let acc_p50 = prune_curve_value(&curve, "snr", "0.5");
    let snr_p95 = prune_curve_value(&curve, "snr", "0.95");
    let baseline_p95 = prune_curve_value(&curve, "magnitude_const_var", "0.95");

    // per-seed comparison at p = 0.95
    let metrics = runs.first.join("metrics.csv");
    let snr_seeds = metric_values(&metrics, "accuracy_snr_0.95");
    let base_seeds = metric_values(&metrics, "accuracy_magnitude_const_var_0.95");
    let mut snr_wins = 0;
    for (seed, snr_acc) in &snr_seeds {
        let base_acc = base_seeds
            .iter()
            .find(|(s, _)| s == seed)
            .map(|(_, v)| *v)
            .expect("matching baseline seed");
        if *snr_acc > base_acc {
            snr_wins += 1;
        }
    }

    let check_a = acc_p0 >= 0.95;
    let check_b = acc_p0 - acc_p50 <= 0.02;
    let check_c = snr_p95 >= baseline_p95 - 0.01 && snr_wins >= 3;
    let within_budget = runs.elapsed_first < Duration::from_secs(1800);
    let pass = check_a && check_b && check_c && within_budget;
    report(
        "5 pruning-curve",
        pass,
        &format!(
            "acc(0)={acc_p0:.4}, acc(0.5)={acc_p50:.4}, p95 snr={snr_p95:.4} vs |mean|={baseline_p95:.4}, snr wins {snr_wins}/5, run {:.1?}",
            runs.elapsed_first
        ),
    );
    assert!(
        pass,
        "a={check_a} b={check_b} c={check_c} (wins {snr_wins}), elapsed {:?}",
        runs.elapsed_first
    );
}

// ---------------------------------------------------------------------------
// criterion 6: wheel bandit uniform baseline
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_wheel_uniform_baseline() {
    let runs = bandit_uniform_runs();
    let values = bandit_normalized(&runs.first.join("bandit_results.csv"), "uniform");
    assert_eq!(values.len(), 10, "expected 10 uniform runs");
    let mean = values.iter().map(|(_, v)| v).sum::<f64>() / values.len() as f64;

    let analytic =
        wheel_uniform_normalized_expectation(&badam::bandit::WheelParams::default());
    let near_table = (mean - 0.22).abs() <= 0.05;
    let near_oracle = (mean - analytic).abs() <= 0.02;
    let within_budget = runs.elapsed_first < Duration::from_secs(120);
    let pass = near_table && near_oracle && within_budget;
    report(
        "6 wheel-uniform-baseline",
        pass,
        &format!(
            "mean normalized {mean:.4} vs table 0.22 and oracle {analytic:.4}, run {:.1?}",
            runs.elapsed_first
        ),
    );
    assert!(
        pass,
        "mean {mean}, analytic {analytic}, elapsed {:?}",
        runs.elapsed_first
    );
}

// ---------------------------------------------------------------------------
// criterion 7: wheel bandit posterior agent
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_wheel_badam_directional() {
    let runs = bandit_main_runs();
    let results = runs.first.join("bandit_results.csv");
    let badam_vals = bandit_normalized(&results, "badam_thompson");
    let uniform_vals = bandit_normalized(&results, "uniform");
    assert_eq!(badam_vals.len(), 10);
    assert_eq!(uniform_vals.len(), 10);
    let badam_mean = badam_vals.iter().map(|(_, v)| v).sum::<f64>() / 10.0;
    let uniform_mean = uniform_vals.iter().map(|(_, v)| v).sum::<f64>() / 10.0;

    let absolute = badam_mean >= 0.60;
    let relative = badam_mean >= 2.5 * uniform_mean;
    let within_budget = runs.elapsed_first < Duration::from_secs(1200);
    let pass = absolute && relative && within_budget;
    report(
        "7 wheel-badam-directional",
        pass,
        &format!(
            "badam {badam_mean:.4}, uniform {uniform_mean:.4} ({:.2}x), run {:.1?}",
            badam_mean / uniform_mean,
            runs.elapsed_first
        ),
    );
    assert!(
        pass,
        "badam {badam_mean}, uniform {uniform_mean}, elapsed {:?}",
        runs.elapsed_first
    );
}

// ---------------------------------------------------------------------------
// criterion 8: determinism
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_determinism() {
    let mut mismatches = Vec::new();
    let mut compare = |runs: &Runs, label: &str, files: &[&str]| {
        for file in files {
            let a = fs::read(runs.first.join(file));
            let b = fs::read(runs.second.join(file));
            match (a, b) {
                (Ok(a), Ok(b)) if a == b => {}
                _ => mismatches.push(format!("{label}/{file}")),
            }
        }
    };

    compare(
        regress_runs(),
        "regress",
        &[
            "predictive.csv",
            "metrics.csv",
            "predictive_seed1.csv",
            "predictive_seed2.csv",
            "predictive_seed3.csv",
            "predictive_seed4.csv",
            "predictive_seed5.csv",
        ],
    );
    compare(prune_runs(), "prune", &["prune_curve.csv", "metrics.csv"]);
    compare(
        bandit_uniform_runs(),
        "bandit-uniform",
        &["bandit_results.csv", "metrics.csv"],
    );
    compare(
        bandit_main_runs(),
        "bandit-main",
        &["bandit_results.csv", "metrics.csv"],
    );

    let pass = mismatches.is_empty();
    report(
        "8 determinism",
        pass,
        &format!(
            "byte-compared re-runs of criteria 4-7 artifacts{}",
            if pass {
                String::new()
            } else {
                format!("; mismatches: {mismatches:?}")
            }
        ),
    );
    assert!(pass, "mismatched files: {mismatches:?}");
}
