//! Declarative experiment configuration.
//!
//! Configs are TOML with one section per module; every field has a default, so
//! a file only states what it changes. `badam run` resolves the full config
//! (file + `--override k=v` flags + defaults) and writes it back out as
//! `config.resolved.json`, which is itself accepted as a config file, so a
//! resolved config alone re-runs the experiment.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bandit::{AgentKind, WheelParams};
use crate::error::{Error, Result};
use crate::nn::WeightInit;
use crate::optim::{LrSchedule, Method, OptimizerConfig};
use crate::posterior::{EffectiveNMode, PriorConfig};
use crate::pruning::PruneCriterion;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub network: NetworkSection,
    pub optimizer: OptimizerSection,
    pub prior: PriorSection,
    pub effective_n: EffectiveNSection,
    pub training: TrainingSection,
    pub regress: RegressSection,
    pub prune: PruneSection,
    pub bandit: BanditSection,
    pub train: TrainSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentSection::default(),
            network: NetworkSection::default(),
            optimizer: OptimizerSection::default(),
            prior: PriorSection::default(),
            effective_n: EffectiveNSection::default(),
            training: TrainingSection::default(),
            regress: RegressSection::default(),
            prune: PruneSection::default(),
            bandit: BanditSection::default(),
            train: TrainSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// One of `regress`, `prune`, `bandit`, `train`.
    pub kind: String,
    pub seeds: Vec<u64>,
    pub output_dir: String,
    /// Worker pool size for fanning out seeds.
    pub workers: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            kind: String::new(),
            seeds: vec![1, 2, 3, 4, 5],
            output_dir: "out".into(),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
    /// `uniform` or `fan_in`.
    pub init: String,
    /// Half-width of the uniform init.
    pub init_limit: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            hidden: vec![100, 100],
            dropout_rate: 0.0,
            init: "uniform".into(),
            init_limit: 0.3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    /// `ogd`, `adagrad` or `adam`.
    pub method: String,
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub bias_correct_lr: bool,
    /// `constant` or `inverse_decay`.
    pub lr_schedule: String,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            method: "adam".into(),
            eta: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            bias_correct_lr: true,
            lr_schedule: "constant".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub sigma_prior: f64,
    pub improper: bool,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self {
            sigma_prior: 0.1,
            improper: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EffectiveNSection {
    /// `t_times_batch` or `fixed`.
    pub mode: String,
    pub fixed_value: f64,
}

impl Default for EffectiveNSection {
    fn default() -> Self {
        Self {
            mode: "t_times_batch".into(),
            fixed_value: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    /// L2 clip threshold for gradients; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            clip_norm: 5.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RegressSection {
    pub n_train: usize,
    pub n_test: usize,
    pub noise_std: f64,
    pub train_lo: f64,
    pub train_hi: f64,
    pub test_lo: f64,
    pub test_hi: f64,
    /// Aleatoric noise added to the predictive std.
    pub obs_noise: f64,
    pub predictive_samples: usize,
}

impl Default for RegressSection {
    fn default() -> Self {
        Self {
            n_train: 2000,
            n_test: 500,
            noise_std: 0.02,
            train_lo: 0.0,
            train_hi: 0.5,
            test_lo: -0.5,
            test_hi: 1.2,
            obs_noise: 0.02,
            predictive_samples: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PruneSection {
    /// `idx` (user-supplied image files) or `pattern` (built-in synthetic task).
    pub data: String,
    pub train_images: String,
    pub train_labels: String,
    pub test_images: String,
    pub test_labels: String,
    /// Cap on training rows (0 = all).
    pub train_subset: usize,
    pub test_subset: usize,
    /// Pattern-task sizes when `data = "pattern"`.
    pub pattern_train: usize,
    pub pattern_test: usize,
    pub pattern_noise: f64,
    pub fractions: Vec<f64>,
    /// Subset of {`snr`, `magnitude_const_var`}.
    pub criteria: Vec<String>,
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    pub phase2_beta2: f64,
}

impl Default for PruneSection {
    fn default() -> Self {
        Self {
            data: "pattern".into(),
            train_images: String::new(),
            train_labels: String::new(),
            test_images: String::new(),
            test_labels: String::new(),
            train_subset: 10_000,
            test_subset: 0,
            pattern_train: 10_000,
            pattern_test: 2_000,
            pattern_noise: 0.15,
            fractions: vec![0.0, 0.25, 0.5, 0.75, 0.9, 0.95, 0.98, 1.0],
            criteria: vec!["snr".into(), "magnitude_const_var".into()],
            phase1_epochs: 20,
            phase2_epochs: 10,
            phase2_beta2: 0.9996,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BanditSection {
    /// `wheel` or `csv_dataset`.
    pub env: String,
    pub delta: f64,
    pub horizon: usize,
    /// Subset of {`badam_thompson`, `mc_dropout`, `greedy`, `uniform`}.
    pub agents: Vec<String>,
    pub train_every: usize,
    pub train_batches: usize,
    pub batch_size: usize,
    pub warmup_pulls: usize,
    pub mu_inner: f64,
    pub mu_low: f64,
    pub mu_high: f64,
    pub reward_std: f64,
    pub mc_dropout_rate: f64,
    pub csv_path: String,
    pub label_column: String,
    pub csv_categorical: Vec<String>,
    /// Row cap on CSV datasets (0 = all), subsampled deterministically.
    pub csv_subsample: usize,
}

impl Default for BanditSection {
    fn default() -> Self {
        Self {
            env: "wheel".into(),
            delta: 0.5,
            horizon: 5_000,
            agents: vec![
                "badam_thompson".into(),
                "mc_dropout".into(),
                "greedy".into(),
                "uniform".into(),
            ],
            train_every: 20,
            train_batches: 50,
            batch_size: 512,
            warmup_pulls: 3,
            mu_inner: 1.2,
            mu_low: 1.0,
            mu_high: 50.0,
            reward_std: 0.01,
            mc_dropout_rate: 0.5,
            csv_path: String::new(),
            label_column: String::new(),
            csv_categorical: vec![],
            csv_subsample: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// `pattern`, `idx` or `csv`.
    pub data: String,
    pub train_images: String,
    pub train_labels: String,
    pub test_images: String,
    pub test_labels: String,
    pub csv_path: String,
    pub label_column: String,
    pub csv_categorical: Vec<String>,
    pub pattern_train: usize,
    pub pattern_test: usize,
    pub pattern_noise: f64,
    pub train_subset: usize,
    pub test_subset: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            data: "pattern".into(),
            train_images: String::new(),
            train_labels: String::new(),
            test_images: String::new(),
            test_labels: String::new(),
            csv_path: String::new(),
            label_column: String::new(),
            csv_categorical: vec![],
            pattern_train: 2_000,
            pattern_test: 500,
            pattern_noise: 0.15,
            train_subset: 0,
            test_subset: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Regress,
    Prune,
    Bandit,
    Train,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Regress => "regress",
            ExperimentKind::Prune => "prune",
            ExperimentKind::Bandit => "bandit",
            ExperimentKind::Train => "train",
        }
    }
}

impl ExperimentConfig {
    pub fn experiment_kind(&self) -> Result<ExperimentKind> {
        match self.experiment.kind.as_str() {
            "regress" => Ok(ExperimentKind::Regress),
            "prune" => Ok(ExperimentKind::Prune),
            "bandit" => Ok(ExperimentKind::Bandit),
            "train" => Ok(ExperimentKind::Train),
            other => Err(Error::Config(vec![format!(
                "experiment.kind: {other:?} is not one of regress, prune, bandit, train"
            )])),
        }
    }

    pub fn optimizer_config(&self) -> Result<OptimizerConfig> {
        let method = match self.optimizer.method.as_str() {
            "ogd" => Method::Ogd,
            "adagrad" => Method::Adagrad,
            "adam" => Method::Adam,
            other => {
                return Err(Error::Config(vec![format!(
                    "optimizer.method: {other:?} is not one of ogd, adagrad, adam"
                )]))
            }
        };
        let lr_schedule = match self.optimizer.lr_schedule.as_str() {
            "constant" => LrSchedule::Constant,
            "inverse_decay" => LrSchedule::InverseDecay,
            other => {
                return Err(Error::Config(vec![format!(
                    "optimizer.lr_schedule: {other:?} is not one of constant, inverse_decay"
                )]))
            }
        };
        Ok(OptimizerConfig {
            method,
            eta: self.optimizer.eta,
            beta1: self.optimizer.beta1,
            beta2: self.optimizer.beta2,
            epsilon: self.optimizer.epsilon,
            bias_correct_lr: self.optimizer.bias_correct_lr,
            lr_schedule,
        })
    }

    pub fn prior_config(&self) -> PriorConfig {
        PriorConfig {
            sigma_prior: self.prior.sigma_prior,
            improper: self.prior.improper,
        }
    }

    pub fn effective_n_mode(&self) -> Result<EffectiveNMode> {
        match self.effective_n.mode.as_str() {
            "fixed" => Ok(EffectiveNMode::Fixed),
            "t_times_batch" => Ok(EffectiveNMode::TTimesBatch),
            other => Err(Error::Config(vec![format!(
                "effective_n.mode: {other:?} is not one of fixed, t_times_batch"
            )])),
        }
    }

    pub fn weight_init(&self) -> Result<WeightInit> {
        match self.network.init.as_str() {
            "uniform" => Ok(WeightInit::Uniform {
                limit: self.network.init_limit,
            }),
            "fan_in" => Ok(WeightInit::FanIn),
            other => Err(Error::Config(vec![format!(
                "network.init: {other:?} is not one of uniform, fan_in"
            )])),
        }
    }

    pub fn clip_norm(&self) -> Option<f64> {
        if self.training.clip_norm > 0.0 {
            Some(self.training.clip_norm)
        } else {
            None
        }
    }

    pub fn prune_criteria(&self) -> Result<Vec<PruneCriterion>> {
        self.prune
            .criteria
            .iter()
            .map(|c| match c.as_str() {
                "snr" => Ok(PruneCriterion::Snr),
                "magnitude_const_var" => Ok(PruneCriterion::MagnitudeConstVar),
                other => Err(Error::Config(vec![format!(
                    "prune.criteria: {other:?} is not one of snr, magnitude_const_var"
                )])),
            })
            .collect()
    }

    pub fn bandit_agents(&self) -> Result<Vec<AgentKind>> {
        self.bandit
            .agents
            .iter()
            .map(|a| match a.as_str() {
                "badam_thompson" => Ok(AgentKind::BadamThompson),
                "mc_dropout" => Ok(AgentKind::McDropout),
                "greedy" => Ok(AgentKind::Greedy),
                "uniform" => Ok(AgentKind::Uniform),
                other => Err(Error::Config(vec![format!(
                    "bandit.agents: {other:?} is not one of badam_thompson, mc_dropout, greedy, uniform"
                )])),
            })
            .collect()
    }

    pub fn wheel_params(&self) -> WheelParams {
        WheelParams {
            delta: self.bandit.delta,
            mu_inner: self.bandit.mu_inner,
            mu_low: self.bandit.mu_low,
            mu_high: self.bandit.mu_high,
            reward_std: self.bandit.reward_std,
        }
    }

    /// Field-level validation; collects every problem before failing.
    pub fn validate(&self) -> Result<()> {
        let mut diags = Vec::new();
        let kind = self.experiment_kind();
        if let Err(Error::Config(d)) = &kind {
            diags.extend(d.clone());
        }
        if self.experiment.seeds.is_empty() {
            diags.push("experiment.seeds: must not be empty".into());
        }
        if self.experiment.workers == 0 {
            diags.push("experiment.workers: must be >= 1".into());
        }
        if self.experiment.output_dir.is_empty() {
            diags.push("experiment.output_dir: must not be empty".into());
        }

        if self.network.hidden.is_empty() {
            diags.push("network.hidden: at least one hidden layer required".into());
        }
        if self.network.hidden.iter().any(|&h| h == 0) {
            diags.push("network.hidden: layer sizes must be positive".into());
        }
        if !(0.0..1.0).contains(&self.network.dropout_rate) {
            diags.push(format!(
                "network.dropout_rate: {} outside [0, 1)",
                self.network.dropout_rate
            ));
        }
        if let Err(Error::Config(d)) = self.weight_init() {
            diags.extend(d);
        } else if self.network.init == "uniform" && self.network.init_limit <= 0.0 {
            diags.push("network.init_limit: must be > 0".into());
        }

        match self.optimizer_config() {
            Ok(opt) => {
                if let Err(e) = opt.validate() {
                    diags.push(format!("optimizer: {e}"));
                }
            }
            Err(Error::Config(d)) => diags.extend(d),
            Err(_) => unreachable!(),
        }

        if self.prior.sigma_prior <= 0.0 {
            diags.push(format!(
                "prior.sigma_prior: {} must be > 0",
                self.prior.sigma_prior
            ));
        }
        match self.effective_n_mode() {
            Ok(EffectiveNMode::Fixed) if self.effective_n.fixed_value <= 0.0 => {
                diags.push(format!(
                    "effective_n.fixed_value: {} must be > 0",
                    self.effective_n.fixed_value
                ));
            }
            Err(Error::Config(d)) => diags.extend(d),
            _ => {}
        }

        if self.training.epochs == 0 {
            diags.push("training.epochs: must be >= 1".into());
        }
        if self.training.batch_size == 0 {
            diags.push("training.batch_size: must be >= 1".into());
        }

        match kind {
            Ok(ExperimentKind::Regress) => {
                if self.regress.n_train == 0 || self.regress.n_test == 0 {
                    diags.push("regress.n_train / regress.n_test: must be >= 1".into());
                }
                if self.regress.train_lo >= self.regress.train_hi {
                    diags.push("regress.train_lo/train_hi: range must be ordered".into());
                }
                if self.regress.test_lo >= self.regress.test_hi {
                    diags.push("regress.test_lo/test_hi: range must be ordered".into());
                }
                if self.regress.predictive_samples < 2 {
                    diags.push("regress.predictive_samples: must be >= 2".into());
                }
            }
            Ok(ExperimentKind::Prune) => {
                match self.prune.data.as_str() {
                    "pattern" => {
                        if self.prune.pattern_train == 0 || self.prune.pattern_test == 0 {
                            diags.push(
                                "prune.pattern_train / prune.pattern_test: must be >= 1".into(),
                            );
                        }
                    }
                    "idx" => {
                        for (field, value) in [
                            ("prune.train_images", &self.prune.train_images),
                            ("prune.train_labels", &self.prune.train_labels),
                            ("prune.test_images", &self.prune.test_images),
                            ("prune.test_labels", &self.prune.test_labels),
                        ] {
                            if value.is_empty() {
                                diags.push(format!("{field}: required when prune.data = \"idx\""));
                            } else if !Path::new(value).exists() {
                                diags.push(format!("{field}: path {value:?} does not exist"));
                            }
                        }
                    }
                    other => diags.push(format!(
                        "prune.data: {other:?} is not one of pattern, idx"
                    )),
                }
                if self.prune.fractions.is_empty() {
                    diags.push("prune.fractions: must not be empty".into());
                } else {
                    if self
                        .prune
                        .fractions
                        .windows(2)
                        .any(|w| w[0] >= w[1])
                    {
                        diags.push("prune.fractions: must be strictly ascending".into());
                    }
                    if self
                        .prune
                        .fractions
                        .iter()
                        .any(|p| !(0.0..=1.0).contains(p))
                    {
                        diags.push("prune.fractions: values must lie in [0, 1]".into());
                    }
                }
                if let Err(Error::Config(d)) = self.prune_criteria() {
                    diags.extend(d);
                }
                if self.prune.phase1_epochs == 0 {
                    diags.push("prune.phase1_epochs: must be >= 1".into());
                }
                if !(0.0..1.0).contains(&self.prune.phase2_beta2) {
                    diags.push(format!(
                        "prune.phase2_beta2: {} outside [0, 1)",
                        self.prune.phase2_beta2
                    ));
                }
            }
            Ok(ExperimentKind::Bandit) => {
                match self.bandit.env.as_str() {
                    "wheel" => {
                        if let Err(e) = self.wheel_params().validate() {
                            diags.push(format!("bandit: {e}"));
                        }
                    }
                    "csv_dataset" => {
                        if self.bandit.csv_path.is_empty() {
                            diags.push(
                                "bandit.csv_path: required when bandit.env = \"csv_dataset\""
                                    .into(),
                            );
                        } else if !Path::new(&self.bandit.csv_path).exists() {
                            diags.push(format!(
                                "bandit.csv_path: path {:?} does not exist",
                                self.bandit.csv_path
                            ));
                        }
                        if self.bandit.label_column.is_empty() {
                            diags.push(
                                "bandit.label_column: required when bandit.env = \"csv_dataset\""
                                    .into(),
                            );
                        }
                    }
                    other => diags.push(format!(
                        "bandit.env: {other:?} is not one of wheel, csv_dataset"
                    )),
                }
                match self.bandit_agents() {
                    Ok(agents) if agents.is_empty() => {
                        diags.push("bandit.agents: must not be empty".into())
                    }
                    Err(Error::Config(d)) => diags.extend(d),
                    _ => {}
                }
                if self.bandit.train_every == 0 || self.bandit.train_batches == 0 {
                    diags.push(
                        "bandit.train_every / bandit.train_batches: must be >= 1".into(),
                    );
                }
                if self.bandit.batch_size == 0 {
                    diags.push("bandit.batch_size: must be >= 1".into());
                }
                if self.bandit.env == "wheel"
                    && self.bandit.horizon < self.bandit.warmup_pulls * 5
                {
                    diags.push(format!(
                        "bandit.horizon: {} shorter than warmup ({} pulls x 5 arms)",
                        self.bandit.horizon, self.bandit.warmup_pulls
                    ));
                }
                if self.prior.improper {
                    diags.push(
                        "prior.improper: the bandit posterior agent needs a proper prior".into(),
                    );
                }
                if !(0.0..1.0).contains(&self.bandit.mc_dropout_rate) {
                    diags.push(format!(
                        "bandit.mc_dropout_rate: {} outside [0, 1)",
                        self.bandit.mc_dropout_rate
                    ));
                }
            }
            Ok(ExperimentKind::Train) => match self.train.data.as_str() {
                "pattern" => {
                    if self.train.pattern_train == 0 {
                        diags.push("train.pattern_train: must be >= 1".into());
                    }
                }
                "idx" => {
                    for (field, value) in [
                        ("train.train_images", &self.train.train_images),
                        ("train.train_labels", &self.train.train_labels),
                    ] {
                        if value.is_empty() {
                            diags.push(format!("{field}: required when train.data = \"idx\""));
                        } else if !Path::new(value).exists() {
                            diags.push(format!("{field}: path {value:?} does not exist"));
                        }
                    }
                }
                "csv" => {
                    if self.train.csv_path.is_empty() {
                        diags.push("train.csv_path: required when train.data = \"csv\"".into());
                    } else if !Path::new(&self.train.csv_path).exists() {
                        diags.push(format!(
                            "train.csv_path: path {:?} does not exist",
                            self.train.csv_path
                        ));
                    }
                    if self.train.label_column.is_empty() {
                        diags.push("train.label_column: required when train.data = \"csv\"".into());
                    }
                }
                other => diags.push(format!(
                    "train.data: {other:?} is not one of pattern, idx, csv"
                )),
            },
            Err(_) => {}
        }

        if diags.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(diags))
        }
    }

    pub fn to_resolved_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

/// Parse a config file (TOML, or JSON for resolved configs) and apply
/// `key=value` overrides. Override keys may be dotted (`optimizer.eta`) or
/// bare when unambiguous (`seeds`); scalar values coerce onto list fields.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    let cfg: ExperimentConfig = if is_json {
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?
    } else {
        toml::from_str(&text)
            .map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?
    };
    if overrides.is_empty() {
        return Ok(cfg);
    }

    // normalize to a full value tree so overrides can target defaulted keys too
    let mut doc = toml::Value::try_from(&cfg)
        .map_err(|e| Error::Config(vec![format!("internal: {e}")]))?;
    for entry in overrides {
        apply_override(&mut doc, entry)?;
    }
    doc.try_into()
        .map_err(|e| Error::Config(vec![format!("after overrides: {e}")]))
}

fn apply_override(doc: &mut toml::Value, entry: &str) -> Result<()> {
    let (key, raw_value) = entry.split_once('=').ok_or_else(|| {
        Error::Config(vec![format!(
            "override {entry:?}: expected key=value"
        )])
    })?;
    let key = key.trim();
    let path: Vec<&str> = if key.contains('.') {
        key.split('.').collect()
    } else {
        // bare key: find the unique section containing it
        let table = doc.as_table().expect("config root is a table");
        let mut hits: Vec<&str> = Vec::new();
        for (section, value) in table {
            if value
                .as_table()
                .is_some_and(|t| t.contains_key(key))
            {
                hits.push(section.as_str());
            }
        }
        match hits.len() {
            0 => {
                return Err(Error::Config(vec![format!(
                    "override {key:?}: no such config key"
                )]))
            }
            1 => vec![hits[0], key],
            _ => {
                return Err(Error::Config(vec![format!(
                    "override {key:?}: ambiguous, present in sections {hits:?}; use section.key"
                )]))
            }
        }
    };
    let path: Vec<String> = path.into_iter().map(str::to_string).collect();

    let mut current = &mut *doc;
    for part in &path[..path.len() - 1] {
        current = current
            .as_table_mut()
            .and_then(|t| t.get_mut(part.as_str()))
            .ok_or_else(|| {
                Error::Config(vec![format!("override {key:?}: no such config key")])
            })?;
    }
    let last = &path[path.len() - 1];
    let table = current.as_table_mut().ok_or_else(|| {
        Error::Config(vec![format!("override {key:?}: no such config key")])
    })?;
    let existing = table.get(last.as_str()).ok_or_else(|| {
        Error::Config(vec![format!("override {key:?}: no such config key")])
    })?;

    let parsed = parse_toml_value(raw_value);
    let coerced = coerce_value(parsed, existing).map_err(|msg| {
        Error::Config(vec![format!("override {key:?}: {msg}")])
    })?;
    table.insert(last.clone(), coerced);
    Ok(())
}

fn parse_toml_value(raw: &str) -> toml::Value {
    let fragment = format!("x = {raw}");
    if let Ok(table) = fragment.parse::<toml::Table>() {
        if let Some(v) = table.get("x") {
            return v.clone();
        }
    }
    toml::Value::String(raw.trim().to_string())
}

/// Shape the parsed value like the existing one: integers promote to floats,
/// scalars wrap into single-element lists.
fn coerce_value(
    parsed: toml::Value,
    existing: &toml::Value,
) -> std::result::Result<toml::Value, String> {
    use toml::Value;
    Ok(match (parsed, existing) {
        (Value::Integer(i), Value::Float(_)) => Value::Float(i as f64),
        (v @ Value::Array(_), Value::Array(_)) => {
            if let (Value::Array(items), Some(Value::Float(_))) =
                (&v, existing.as_array().and_then(|a| a.first()))
            {
                Value::Array(
                    items
                        .iter()
                        .map(|item| match item {
                            Value::Integer(i) => Value::Float(*i as f64),
                            other => other.clone(),
                        })
                        .collect(),
                )
            } else {
                v
            }
        }
        (scalar, Value::Array(_)) => {
            let inner = match existing.as_array().and_then(|a| a.first()) {
                Some(Value::Float(_)) => match scalar {
                    Value::Integer(i) => Value::Float(i as f64),
                    other => other,
                },
                _ => scalar,
            };
            Value::Array(vec![inner])
        }
        (v, _) => v,
    })
}
