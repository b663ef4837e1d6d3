//! Experiment execution: seed fan-out, metric collection, artifact writing.
//!
//! Every run writes `config.resolved.json` (the full effective config) and
//! `metrics.csv`, plus experiment-specific CSV/JSON artifacts. All files are
//! written by the coordinator after the parallel per-seed work finishes, with
//! LF line endings and `.` decimal points.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::bandit::{
    run_bandit, AgentConfig, AgentKind, BanditResult, EnvSpec, RunConfig as BanditRunConfig,
};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::data::{
    gen_pattern_dataset, gen_regression, load_csv, load_idx, CsvSchema, CsvSubsample,
    LabeledDataset, Labels, PatternTask, RegressionTask, Split,
};
use crate::error::{Error, Result};
use crate::nn::{LossKind, Network, OutputHead};
use crate::optim::{train_network, MomentState, TrainConfig};
use crate::posterior::{extract_posterior, predictive_sample, EffectiveN, PosteriorExport};
use crate::pruning::{
    classification_accuracy, prune_curve, DualPhaseSchedule, Phase, PruneCurve, PruneSpec,
    PruneTask,
};
use crate::seed::rng_for;

/// Fixed master for shared datasets (the benchmark data is part of the task,
/// not of any one seed's run).
const DATA_MASTER_SEED: u64 = 0xBADA;

#[derive(Debug, Clone)]
struct MetricsRow {
    experiment: &'static str,
    seed: u64,
    step: u64,
    metric: String,
    value: f64,
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content)?;
    Ok(())
}

fn write_csv_rows(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut out = String::with_capacity(rows.len() * 32 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    write_text(path, &out)
}

fn write_metrics(dir: &Path, rows: &[MetricsRow]) -> Result<()> {
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{}",
                r.experiment, r.seed, r.step, r.metric, r.value
            )
        })
        .collect();
    write_csv_rows(&dir.join("metrics.csv"), "experiment,seed,step,metric,value", &lines)
}

fn with_seed_context(seed: u64, err: Error) -> Error {
    match err {
        Error::Numeric(msg) => Error::Numeric(format!("seed {seed}: {msg}")),
        Error::Contract(msg) => Error::Contract(format!("seed {seed}: {msg}")),
        Error::Shape(msg) => Error::Shape(format!("seed {seed}: {msg}")),
        other => other,
    }
}

/// Run the configured experiment, writing all artifacts under the resolved
/// output directory (returned). `BADAM_OUTPUT_DIR` overrides the configured
/// directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    if let Ok(dir) = std::env::var("BADAM_OUTPUT_DIR") {
        if !dir.is_empty() {
            cfg.experiment.output_dir = dir;
        }
    }
    let out_dir = PathBuf::from(&cfg.experiment.output_dir);
    fs::create_dir_all(&out_dir)?;
    write_text(&out_dir.join("config.resolved.json"), &cfg.to_resolved_json())?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.experiment.workers)
        .build()
        .map_err(|e| Error::Contract(format!("worker pool: {e}")))?;
    pool.install(|| match cfg.experiment_kind()? {
        ExperimentKind::Regress => run_regress(&cfg, &out_dir),
        ExperimentKind::Prune => run_prune(&cfg, &out_dir),
        ExperimentKind::Bandit => run_bandit_experiment(&cfg, &out_dir),
        ExperimentKind::Train => run_train(&cfg, &out_dir),
    })?;
    Ok(out_dir)
}

fn network_for(
    cfg: &ExperimentConfig,
    input_dim: usize,
    output_dim: usize,
    head: OutputHead,
    dropout: f64,
    seed: u64,
    labels: &[&str],
) -> Result<Network> {
    let mut layer_sizes = Vec::with_capacity(cfg.network.hidden.len() + 2);
    layer_sizes.push(input_dim);
    layer_sizes.extend(&cfg.network.hidden);
    layer_sizes.push(output_dim);
    let mut net = Network::new(layer_sizes, head, dropout)?;
    let mut rng = rng_for(seed, labels);
    net.initialize(cfg.weight_init()?, &mut rng);
    Ok(net)
}

struct RegressSeedOutput {
    seed: u64,
    losses: Vec<f64>,
    /// (x, pred_mean, pred_std, true_y) per grid point.
    predictive: Vec<(f64, f64, f64, f64)>,
    export: PosteriorExport,
}

fn run_regress(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let task = RegressionTask {
        n_train: cfg.regress.n_train,
        train_range: (cfg.regress.train_lo, cfg.regress.train_hi),
        test_range: (cfg.regress.test_lo, cfg.regress.test_hi),
        noise_std: cfg.regress.noise_std,
        n_test: cfg.regress.n_test,
    };
    let opt = cfg.optimizer_config()?;
    let prior = cfg.prior_config();
    let n_mode = cfg.effective_n_mode()?;
    let tc = TrainConfig {
        epochs: cfg.training.epochs,
        batch_size: cfg.training.batch_size,
        clip_norm: cfg.clip_norm(),
    };

    let outputs: Vec<Result<RegressSeedOutput>> = cfg
        .experiment
        .seeds
        .par_iter()
        .map(|&seed| {
            let run = || -> Result<RegressSeedOutput> {
                let mut data_rng = rng_for(seed, &["regress", "data"]);
                let (train, grid) = gen_regression(&task, &mut data_rng)?;
                let mut net = network_for(
                    cfg,
                    1,
                    1,
                    OutputHead::Linear,
                    cfg.network.dropout_rate,
                    seed,
                    &["regress", "init"],
                )?;
                let mut state = MomentState::new(net.params().len());
                let mut train_rng = rng_for(seed, &["regress", "train"]);
                let losses = train_network(
                    &mut net,
                    &mut state,
                    &opt,
                    &tc,
                    train.features.view(),
                    train.targets_ref(),
                    LossKind::Mse,
                    &mut train_rng,
                )?;

                let n = EffectiveN::resolve(
                    n_mode,
                    cfg.effective_n.fixed_value,
                    state.t(),
                    tc.batch_size,
                )?;
                let post = extract_posterior(net.params(), &state, &opt, &prior, &n)?;
                let mut predict_rng = rng_for(seed, &["regress", "predict"]);
                let (pred_mean, pred_std) = predictive_sample(
                    &net,
                    &post,
                    grid.features.view(),
                    cfg.regress.predictive_samples,
                    cfg.regress.obs_noise,
                    &mut predict_rng,
                )?;

                let true_y = match &grid.labels {
                    Labels::Targets(y) => y,
                    Labels::Classes(_) => unreachable!("regression grid has value targets"),
                };
                let predictive = (0..grid.len())
                    .map(|i| {
                        (
                            grid.features[(i, 0)],
                            pred_mean[(i, 0)],
                            pred_std[(i, 0)],
                            true_y[(i, 0)],
                        )
                    })
                    .collect();
                let export = PosteriorExport::build(&post, &opt, &prior, &n, state.t());
                Ok(RegressSeedOutput {
                    seed,
                    losses,
                    predictive,
                    export,
                })
            };
            run().map_err(|e| with_seed_context(seed, e))
        })
        .collect();

    let mut metrics = Vec::new();
    let mut first = true;
    let multi_seed = cfg.experiment.seeds.len() > 1;
    for output in outputs {
        let output = output?;
        for (epoch, &loss) in output.losses.iter().enumerate() {
            metrics.push(MetricsRow {
                experiment: "regress",
                seed: output.seed,
                step: epoch as u64 + 1,
                metric: "train_loss".into(),
                value: loss,
            });
        }
        let rows: Vec<String> = output
            .predictive
            .iter()
            .map(|(x, m, s, y)| format!("{x},{m},{s},{y}"))
            .collect();
        let header = "x,pred_mean,pred_std,true_y";
        if first {
            write_csv_rows(&out_dir.join("predictive.csv"), header, &rows)?;
            write_text(
                &out_dir.join("posterior.json"),
                &(serde_json::to_string_pretty(&output.export).expect("serializable") + "\n"),
            )?;
            first = false;
        }
        if multi_seed {
            write_csv_rows(
                &out_dir.join(format!("predictive_seed{}.csv", output.seed)),
                header,
                &rows,
            )?;
        }
    }
    write_metrics(out_dir, &metrics)
}

fn classification_sets(
    data: &str,
    idx_paths: [&str; 4],
    subsets: (usize, usize),
    pattern: (usize, usize, f64),
) -> Result<(LabeledDataset, LabeledDataset)> {
    match data {
        "pattern" => {
            let task = PatternTask {
                noise_std: pattern.2,
                ..PatternTask::default()
            };
            let mut train_rng = rng_for(DATA_MASTER_SEED, &["pattern", "train"]);
            let train = gen_pattern_dataset(&task, pattern.0, Split::Train, &mut train_rng);
            let mut test_rng = rng_for(DATA_MASTER_SEED, &["pattern", "test"]);
            let test = gen_pattern_dataset(&task, pattern.1, Split::Test, &mut test_rng);
            Ok((train, test))
        }
        "idx" => {
            let mut train = load_idx(Path::new(idx_paths[0]), Path::new(idx_paths[1]))?;
            train.split = Split::Train;
            let mut test = load_idx(Path::new(idx_paths[2]), Path::new(idx_paths[3]))?;
            test.split = Split::Test;
            Ok((take_rows(train, subsets.0), take_rows(test, subsets.1)))
        }
        other => Err(Error::Config(vec![format!(
            "data source {other:?} not supported here"
        )])),
    }
}

fn take_rows(data: LabeledDataset, n: usize) -> LabeledDataset {
    if n == 0 || n >= data.len() {
        return data;
    }
    let features = data.features.slice(ndarray::s![..n, ..]).to_owned();
    let labels = match data.labels {
        Labels::Classes(c) => Labels::Classes(c[..n].to_vec()),
        Labels::Targets(t) => Labels::Targets(t.slice(ndarray::s![..n, ..]).to_owned()),
    };
    LabeledDataset {
        features,
        labels,
        split: data.split,
    }
}

fn run_prune(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let (train, test) = classification_sets(
        &cfg.prune.data,
        [
            &cfg.prune.train_images,
            &cfg.prune.train_labels,
            &cfg.prune.test_images,
            &cfg.prune.test_labels,
        ],
        (cfg.prune.train_subset, cfg.prune.test_subset),
        (
            cfg.prune.pattern_train,
            cfg.prune.pattern_test,
            cfg.prune.pattern_noise,
        ),
    )?;
    let num_classes = train
        .num_classes()
        .ok_or_else(|| Error::Contract("pruning needs class labels".into()))?;

    let phase1_opt = cfg.optimizer_config()?;
    let mut phase2_opt = phase1_opt;
    phase2_opt.beta2 = cfg.prune.phase2_beta2;
    phase2_opt.bias_correct_lr = false;

    let mut layer_sizes = vec![train.features.ncols()];
    layer_sizes.extend(&cfg.network.hidden);
    layer_sizes.push(num_classes);

    let task = PruneTask {
        layer_sizes,
        dropout_rate: cfg.network.dropout_rate,
        init: cfg.weight_init()?,
        schedule: DualPhaseSchedule {
            phase1: Phase {
                epochs: cfg.prune.phase1_epochs,
                optimizer: phase1_opt,
            },
            phase2: Phase {
                epochs: cfg.prune.phase2_epochs,
                optimizer: phase2_opt,
            },
            batch_size: cfg.training.batch_size,
            clip_norm: cfg.clip_norm(),
        },
        prior: cfg.prior_config(),
        n_mode: cfg.effective_n_mode()?,
        n_fixed: cfg.effective_n.fixed_value,
    };
    let spec = PruneSpec {
        fractions: cfg.prune.fractions.clone(),
        criteria: cfg.prune_criteria()?,
        seeds: cfg.experiment.seeds.clone(),
    };

    let curve: PruneCurve = prune_curve(&task, &train, &test, &spec)?;

    let rows: Vec<String> = curve
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{}",
                r.criterion.name(),
                r.p,
                r.acc_mean,
                r.acc_stderr
            )
        })
        .collect();
    write_csv_rows(
        &out_dir.join("prune_curve.csv"),
        "criterion,p,acc_mean,acc_stderr",
        &rows,
    )?;

    let mut metrics = Vec::new();
    for (seed, losses) in &curve.losses {
        for (epoch, &loss) in losses.iter().enumerate() {
            metrics.push(MetricsRow {
                experiment: "prune",
                seed: *seed,
                step: epoch as u64 + 1,
                metric: "train_loss".into(),
                value: loss,
            });
        }
    }
    for r in &curve.per_seed {
        metrics.push(MetricsRow {
            experiment: "prune",
            seed: r.seed,
            step: 0,
            metric: format!("accuracy_{}_{}", r.criterion.name(), r.p),
            value: r.accuracy,
        });
    }
    write_metrics(out_dir, &metrics)
}

#[derive(Serialize)]
struct BanditSummary {
    env: String,
    delta: Option<f64>,
    horizon: usize,
    runs: usize,
    normalization: &'static str,
    warmup_included: bool,
    agents: Vec<BanditAgentSummary>,
}

#[derive(Serialize)]
struct BanditAgentSummary {
    agent: String,
    mean_normalized: f64,
    stderr_normalized: f64,
    mean_cumulative: f64,
}

fn run_bandit_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let env = match cfg.bandit.env.as_str() {
        "wheel" => EnvSpec::Wheel {
            params: cfg.wheel_params(),
            horizon: cfg.bandit.horizon,
        },
        "csv_dataset" => {
            let schema = CsvSchema {
                categorical: cfg.bandit.csv_categorical.clone(),
                subsample: (cfg.bandit.csv_subsample > 0).then_some(CsvSubsample {
                    n: cfg.bandit.csv_subsample,
                    seed: DATA_MASTER_SEED,
                }),
            };
            let data = load_csv(
                Path::new(&cfg.bandit.csv_path),
                &cfg.bandit.label_column,
                &schema,
            )?;
            EnvSpec::Dataset {
                data,
                horizon: cfg.bandit.horizon,
            }
        }
        other => {
            return Err(Error::Config(vec![format!(
                "bandit.env: unsupported {other:?}"
            )]))
        }
    };

    let optimizer = cfg.optimizer_config()?;
    let prior = cfg.prior_config();
    let init = cfg.weight_init()?;
    let agents: Vec<AgentConfig> = cfg
        .bandit_agents()?
        .into_iter()
        .map(|kind| AgentConfig {
            kind,
            hidden: cfg.network.hidden.clone(),
            optimizer,
            prior,
            dropout_rate: if kind == AgentKind::McDropout {
                cfg.bandit.mc_dropout_rate
            } else {
                0.0
            },
            init,
            clip_norm: cfg.clip_norm(),
        })
        .collect();
    let run_cfg = BanditRunConfig {
        train_every: cfg.bandit.train_every,
        train_batches: cfg.bandit.train_batches,
        batch_size: cfg.bandit.batch_size,
        warmup_pulls: cfg.bandit.warmup_pulls,
    };

    let results = run_bandit(&env, &agents, &run_cfg, &cfg.experiment.seeds)?;

    let is_wheel = matches!(env, EnvSpec::Wheel { .. });
    let delta_field = if is_wheel {
        format!("{}", cfg.bandit.delta)
    } else {
        String::new()
    };
    let rows: Vec<String> = results
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.agent.name(),
                cfg.bandit.env,
                delta_field,
                r.seed,
                r.cumulative_reward,
                r.normalized_reward
            )
        })
        .collect();
    write_csv_rows(
        &out_dir.join("bandit_results.csv"),
        "agent,env,delta,seed,cumulative_reward,normalized_reward",
        &rows,
    )?;

    let summaries = summarize_bandit(&agents, &results);
    let summary = BanditSummary {
        env: cfg.bandit.env.clone(),
        delta: is_wheel.then_some(cfg.bandit.delta),
        horizon: cfg.bandit.horizon,
        runs: cfg.experiment.seeds.len(),
        normalization: "optimal_arm_mean_per_round",
        warmup_included: true,
        agents: summaries,
    };
    write_text(
        &out_dir.join("bandit_summary.json"),
        &(serde_json::to_string_pretty(&summary).expect("serializable") + "\n"),
    )?;

    let metrics: Vec<MetricsRow> = results
        .iter()
        .map(|r| MetricsRow {
            experiment: "bandit",
            seed: r.seed,
            step: cfg.bandit.horizon as u64,
            metric: format!("normalized_reward_{}", r.agent.name()),
            value: r.normalized_reward,
        })
        .collect();
    write_metrics(out_dir, &metrics)
}

fn summarize_bandit(agents: &[AgentConfig], results: &[BanditResult]) -> Vec<BanditAgentSummary> {
    agents
        .iter()
        .map(|cfg| {
            let values: Vec<&BanditResult> =
                results.iter().filter(|r| r.agent == cfg.kind).collect();
            let n = values.len() as f64;
            let mean_norm = values.iter().map(|r| r.normalized_reward).sum::<f64>() / n;
            let stderr = if values.len() > 1 {
                let var = values
                    .iter()
                    .map(|r| (r.normalized_reward - mean_norm).powi(2))
                    .sum::<f64>()
                    / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            let mean_cum = values.iter().map(|r| r.cumulative_reward).sum::<f64>() / n;
            BanditAgentSummary {
                agent: cfg.kind.name().to_string(),
                mean_normalized: mean_norm,
                stderr_normalized: stderr,
                mean_cumulative: mean_cum,
            }
        })
        .collect()
}

fn run_train(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let (train, test) = match cfg.train.data.as_str() {
        "csv" => {
            let schema = CsvSchema {
                categorical: cfg.train.csv_categorical.clone(),
                subsample: None,
            };
            let data = load_csv(
                Path::new(&cfg.train.csv_path),
                &cfg.train.label_column,
                &schema,
            )?;
            let data = take_rows(data, cfg.train.train_subset);
            (data, None)
        }
        source => {
            let (train, test) = classification_sets(
                source,
                [
                    &cfg.train.train_images,
                    &cfg.train.train_labels,
                    &cfg.train.test_images,
                    &cfg.train.test_labels,
                ],
                (cfg.train.train_subset, cfg.train.test_subset),
                (
                    cfg.train.pattern_train,
                    cfg.train.pattern_test,
                    cfg.train.pattern_noise,
                ),
            )?;
            (train, Some(test))
        }
    };
    let num_classes = train
        .num_classes()
        .ok_or_else(|| Error::Contract("train experiment needs class labels".into()))?;

    let opt = cfg.optimizer_config()?;
    let prior = cfg.prior_config();
    let n_mode = cfg.effective_n_mode()?;
    let tc = TrainConfig {
        epochs: cfg.training.epochs,
        batch_size: cfg.training.batch_size,
        clip_norm: cfg.clip_norm(),
    };

    struct TrainSeedOutput {
        seed: u64,
        losses: Vec<f64>,
        accuracy: Option<f64>,
        export: PosteriorExport,
    }

    let outputs: Vec<Result<TrainSeedOutput>> = cfg
        .experiment
        .seeds
        .par_iter()
        .map(|&seed| {
            let run = || -> Result<TrainSeedOutput> {
                let mut net = network_for(
                    cfg,
                    train.features.ncols(),
                    num_classes,
                    OutputHead::Softmax,
                    cfg.network.dropout_rate,
                    seed,
                    &["train", "init"],
                )?;
                let mut state = MomentState::new(net.params().len());
                let mut train_rng = rng_for(seed, &["train", "train"]);
                let losses = train_network(
                    &mut net,
                    &mut state,
                    &opt,
                    &tc,
                    train.features.view(),
                    train.targets_ref(),
                    LossKind::SoftmaxCrossEntropy,
                    &mut train_rng,
                )?;
                let n = EffectiveN::resolve(
                    n_mode,
                    cfg.effective_n.fixed_value,
                    state.t(),
                    tc.batch_size,
                )?;
                let post = extract_posterior(net.params(), &state, &opt, &prior, &n)?;
                let accuracy = match &test {
                    Some(test) => Some(classification_accuracy(&net, test)?),
                    None => None,
                };
                let export = PosteriorExport::build(&post, &opt, &prior, &n, state.t());
                Ok(TrainSeedOutput {
                    seed,
                    losses,
                    accuracy,
                    export,
                })
            };
            run().map_err(|e| with_seed_context(seed, e))
        })
        .collect();

    let mut metrics = Vec::new();
    let mut first = true;
    let multi_seed = cfg.experiment.seeds.len() > 1;
    for output in outputs {
        let output = output?;
        for (epoch, &loss) in output.losses.iter().enumerate() {
            metrics.push(MetricsRow {
                experiment: "train",
                seed: output.seed,
                step: epoch as u64 + 1,
                metric: "train_loss".into(),
                value: loss,
            });
        }
        if let Some(acc) = output.accuracy {
            metrics.push(MetricsRow {
                experiment: "train",
                seed: output.seed,
                step: 0,
                metric: "test_accuracy".into(),
                value: acc,
            });
        }
        let json = serde_json::to_string_pretty(&output.export).expect("serializable") + "\n";
        if first {
            write_text(&out_dir.join("posterior.json"), &json)?;
            first = false;
        }
        if multi_seed {
            write_text(
                &out_dir.join(format!("posterior_seed{}.json", output.seed)),
                &json,
            )?;
        }
    }
    write_metrics(out_dir, &metrics)
}

/// Analytic expected normalized reward of the uniform policy on the wheel:
/// the ratio of disk-averaged uniform-arm reward to disk-averaged optimal
/// reward, integrating over the context distribution.
pub fn wheel_uniform_normalized_expectation(params: &crate::bandit::WheelParams) -> f64 {
    let inside = params.delta * params.delta;
    let outside = 1.0 - inside;
    let arms = crate::bandit::WHEEL_NUM_ACTIONS as f64;
    let uniform_inside = (params.mu_inner + (arms - 1.0) * params.mu_low) / arms;
    let uniform_outside =
        (params.mu_inner + params.mu_high + (arms - 2.0) * params.mu_low) / arms;
    let optimal_inside = params.mu_inner;
    let optimal_outside = params.mu_high;
    (inside * uniform_inside + outside * uniform_outside)
        / (inside * optimal_inside + outside * optimal_outside)
}
