//! Thompson-sampling contextual bandits.
//!
//! Agents regress contexts to per-action reward estimates with a small MLP and
//! differ only in how they select actions: sampling weights from the Gaussian
//! posterior, a stochastic dropout pass, a deterministic greedy pass, or
//! uniformly at random. All agents within one run see the same context stream
//! (paired comparison) with independent reward-noise streams.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::{LabeledDataset, Labels};
use crate::error::{Error, Result};
use crate::nn::{
    argmax_rows, backward, clip_gradient, Mode, Network, OutputHead, TargetsRef, WeightInit,
};
use crate::optim::{step, MomentState, OptimizerConfig};
use crate::posterior::{extract_posterior, EffectiveN, GaussianPosterior, PriorConfig};
use crate::seed::rng_for;

pub const WHEEL_CONTEXT_DIM: usize = 2;
pub const WHEEL_NUM_ACTIONS: usize = 5;

/// Wheel-bandit parameters. The inner-disk radius `delta` controls how rare
/// the high-reward region is; the reward constants are the de-facto standard
/// values for this benchmark and live in config, not code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelParams {
    pub delta: f64,
    pub mu_inner: f64,
    pub mu_low: f64,
    pub mu_high: f64,
    pub reward_std: f64,
}

impl Default for WheelParams {
    fn default() -> Self {
        Self {
            delta: 0.5,
            mu_inner: 1.2,
            mu_low: 1.0,
            mu_high: 50.0,
            reward_std: 0.01,
        }
    }
}

impl WheelParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.delta && self.delta < 1.0) {
            return Err(Error::Contract(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.mu_high > self.mu_inner && self.mu_inner > self.mu_low) {
            return Err(Error::Contract(
                "wheel rewards must order mu_high > mu_inner > mu_low".into(),
            ));
        }
        if self.reward_std < 0.0 {
            return Err(Error::Contract("reward_std must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One bandit round: the context every agent sees, the per-action mean
/// rewards, and the optimal action under those means.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub context: Vec<f64>,
    pub mean_rewards: Vec<f64>,
    pub optimal_action: usize,
}

/// Draw one wheel round: a context uniform on the unit disk and the five arm
/// means it induces. Inside radius `delta` only arm 0 beats the low arms;
/// outside, the quadrant-matching arm pays `mu_high`.
pub fn wheel_draw<R: Rng>(params: &WheelParams, rng: &mut R) -> Round {
    let radius = rng.random::<f64>().sqrt();
    let angle = rng.random::<f64>() * std::f64::consts::TAU;
    let x = radius * angle.cos();
    let y = radius * angle.sin();

    let mut mean_rewards = vec![params.mu_low; WHEEL_NUM_ACTIONS];
    mean_rewards[0] = params.mu_inner;
    if radius > params.delta {
        let arm = match (x >= 0.0, y >= 0.0) {
            (true, true) => 1,
            (true, false) => 2,
            (false, true) => 3,
            (false, false) => 4,
        };
        mean_rewards[arm] = params.mu_high;
    }
    let optimal_action = mean_rewards
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    Round {
        context: vec![x, y],
        mean_rewards,
        optimal_action,
    }
}

/// A full context stream for one run.
pub fn wheel_rounds<R: Rng>(params: &WheelParams, horizon: usize, rng: &mut R) -> Vec<Round> {
    (0..horizon).map(|_| wheel_draw(params, rng)).collect()
}

/// A labeled dataset as a bandit: one pass through rows in order, reward 1 for
/// choosing the true class, 0 otherwise.
pub fn dataset_rounds(data: &LabeledDataset, horizon: usize) -> Result<Vec<Round>> {
    let labels = match &data.labels {
        Labels::Classes(c) => c,
        Labels::Targets(_) => {
            return Err(Error::Contract("bandit datasets need class labels".into()))
        }
    };
    let num_actions = data
        .num_classes()
        .ok_or_else(|| Error::Contract("dataset has no class labels".into()))?;
    let n = horizon.min(data.len());
    Ok((0..n)
        .map(|i| {
            let mut mean_rewards = vec![0.0; num_actions];
            mean_rewards[labels[i]] = 1.0;
            Round {
                context: data.features.row(i).to_vec(),
                mean_rewards,
                optimal_action: labels[i],
            }
        })
        .collect())
}

/// Append-only store of observed (context, action, reward) triples.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    contexts: Vec<f64>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    context_dim: usize,
}

impl ReplayBuffer {
    pub fn new(context_dim: usize) -> Self {
        Self {
            contexts: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            context_dim,
        }
    }

    pub fn push(&mut self, context: &[f64], action: usize, reward: f64) {
        debug_assert_eq!(context.len(), self.context_dim);
        self.contexts.extend_from_slice(context);
        self.actions.push(action);
        self.rewards.push(reward);
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn action_counts(&self, num_actions: usize) -> Vec<usize> {
        let mut counts = vec![0; num_actions];
        for &a in &self.actions {
            counts[a] += 1;
        }
        counts
    }

    /// Sample a batch with replacement.
    pub fn sample_batch<R: Rng>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> (Array2<f64>, Vec<usize>, Vec<f64>) {
        assert!(!self.is_empty(), "cannot sample from an empty buffer");
        let mut inputs = Array2::<f64>::zeros((batch_size, self.context_dim));
        let mut actions = Vec::with_capacity(batch_size);
        let mut rewards = Vec::with_capacity(batch_size);
        for b in 0..batch_size {
            let i = rng.random_range(0..self.len());
            for j in 0..self.context_dim {
                inputs[(b, j)] = self.contexts[i * self.context_dim + j];
            }
            actions.push(self.actions[i]);
            rewards.push(self.rewards[i]);
        }
        (inputs, actions, rewards)
    }
}

/// Targets for the masked regression loss: equal to the outputs everywhere
/// except the chosen action, so non-chosen outputs contribute an exactly zero
/// gradient under mse.
pub fn masked_targets(
    outputs: ArrayView2<'_, f64>,
    actions: &[usize],
    rewards: &[f64],
) -> Array2<f64> {
    let mut targets = outputs.to_owned();
    for (i, (&a, &r)) in actions.iter().zip(rewards).enumerate() {
        targets[(i, a)] = r;
    }
    targets
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    BadamThompson,
    McDropout,
    Greedy,
    Uniform,
}

impl AgentKind {
    pub fn name(&self) -> &'static str {
        match self {
            AgentKind::BadamThompson => "badam_thompson",
            AgentKind::McDropout => "mc_dropout",
            AgentKind::Greedy => "greedy",
            AgentKind::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub kind: AgentKind,
    pub hidden: Vec<usize>,
    pub optimizer: OptimizerConfig,
    pub prior: PriorConfig,
    pub dropout_rate: f64,
    pub init: WeightInit,
    pub clip_norm: Option<f64>,
}

impl AgentConfig {
    /// Reference settings: 2x100 ReLU regression net, learning rate 0.1 with
    /// inverse decay, `U[-0.3, 0.3]` init, clip norm 5; the dropout agent uses
    /// rate 0.5, the posterior agent a `N(0, 0.2^2)` prior.
    pub fn reference(kind: AgentKind) -> Self {
        Self {
            kind,
            hidden: vec![100, 100],
            optimizer: OptimizerConfig {
                eta: 0.1,
                lr_schedule: crate::optim::LrSchedule::InverseDecay,
                ..OptimizerConfig::default()
            },
            prior: PriorConfig {
                sigma_prior: 0.2,
                improper: false,
            },
            dropout_rate: if kind == AgentKind::McDropout { 0.5 } else { 0.0 },
            init: WeightInit::Uniform { limit: 0.3 },
            clip_norm: Some(5.0),
        }
    }
}

/// How often and how much to train inside the run loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    /// Train every `train_every` rounds.
    pub train_every: usize,
    /// Minibatches per training event.
    pub train_batches: usize,
    pub batch_size: usize,
    /// Initial round-robin pulls per arm.
    pub warmup_pulls: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train_every: 20,
            train_batches: 50,
            batch_size: 512,
            warmup_pulls: 3,
        }
    }
}

/// Anything that can play the bandit loop.
pub trait Policy {
    fn select(&mut self, context: &[f64]) -> Result<usize>;
    fn train(&mut self, buffer: &ReplayBuffer, run: &RunConfig) -> Result<()>;
}

/// A neural bandit agent (or the uniform baseline, which carries no network).
pub struct BanditAgent {
    pub kind: AgentKind,
    cfg: AgentConfig,
    num_actions: usize,
    net: Option<Network>,
    scratch: Option<Network>,
    state: Option<MomentState>,
    posterior: Option<GaussianPosterior>,
    rng: ChaCha8Rng,
}

impl BanditAgent {
    pub fn new(
        cfg: AgentConfig,
        context_dim: usize,
        num_actions: usize,
        mut rng: ChaCha8Rng,
    ) -> Result<Self> {
        cfg.optimizer.validate()?;
        let (net, scratch, state, posterior) = if cfg.kind == AgentKind::Uniform {
            (None, None, None, None)
        } else {
            let mut layer_sizes = vec![context_dim];
            layer_sizes.extend(&cfg.hidden);
            layer_sizes.push(num_actions);
            let mut net = Network::new(layer_sizes, OutputHead::Linear, cfg.dropout_rate)?;
            net.initialize(cfg.init, &mut rng);
            let state = MomentState::new(net.params().len());
            // the posterior agent samples from the prior until first trained
            let posterior = if cfg.kind == AgentKind::BadamThompson {
                Some(GaussianPosterior::from_prior(
                    &cfg.prior,
                    net.params().shapes().to_vec(),
                )?)
            } else {
                None
            };
            (Some(net.clone()), Some(net), Some(state), posterior)
        };
        Ok(Self {
            kind: cfg.kind,
            cfg,
            num_actions,
            net,
            scratch,
            state,
            posterior,
            rng,
        })
    }

    pub fn posterior(&self) -> Option<&GaussianPosterior> {
        self.posterior.as_ref()
    }

    pub fn optimizer_steps(&self) -> u64 {
        self.state.as_ref().map_or(0, MomentState::t)
    }

    /// Force the posterior used for Thompson draws (tests and diagnostics).
    pub fn set_posterior(&mut self, post: GaussianPosterior) -> Result<()> {
        let net = self
            .net
            .as_ref()
            .ok_or_else(|| Error::Contract("agent has no network".into()))?;
        if post.shapes() != net.params().shapes() {
            return Err(Error::Shape("posterior does not match agent network".into()));
        }
        self.posterior = Some(post);
        Ok(())
    }

    fn context_array(&self, context: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((1, context.len()), context.to_vec())
            .expect("1-row context is always well-formed")
    }

    fn argmax_output(&self, outputs: ArrayView2<'_, f64>) -> usize {
        argmax_rows(outputs)[0]
    }
}

impl Policy for BanditAgent {
    fn select(&mut self, context: &[f64]) -> Result<usize> {
        match self.kind {
            AgentKind::Uniform => Ok(self.rng.random_range(0..self.num_actions)),
            AgentKind::Greedy => {
                let net = self.net.as_ref().expect("neural agent has a network");
                let out = net.predict(self.context_array(context).view())?;
                Ok(self.argmax_output(out.view()))
            }
            AgentKind::McDropout => {
                let net = self.net.as_ref().expect("neural agent has a network");
                let inputs = self.context_array(context);
                let (out, _) = net.forward(inputs.view(), Mode::Train, Some(&mut self.rng))?;
                Ok(self.argmax_output(out.view()))
            }
            AgentKind::BadamThompson => {
                let inputs = self.context_array(context);
                let post = self.posterior.as_ref().expect("posterior agent has one");
                let weights = post
                    .sample_weights(&mut self.rng, 1)
                    .pop()
                    .expect("count is 1");
                let scratch = self.scratch.as_mut().expect("neural agent has a scratch net");
                scratch.set_params(weights)?;
                let out = scratch.predict(inputs.view())?;
                Ok(self.argmax_output(out.view()))
            }
        }
    }

    /// Replay-buffer training: `train_batches` minibatches of masked-mse
    /// regression on the chosen actions' rewards. The posterior agent
    /// refreshes its weight distribution afterwards with `N = t * batch_size`.
    fn train(&mut self, buffer: &ReplayBuffer, run: &RunConfig) -> Result<()> {
        if self.kind == AgentKind::Uniform {
            return Ok(());
        }
        if buffer.is_empty() {
            return Err(Error::Contract("cannot train on an empty buffer".into()));
        }
        let net = self.net.as_mut().expect("neural agent has a network");
        let state = self.state.as_mut().expect("neural agent has state");
        for _ in 0..run.train_batches {
            let (inputs, actions, rewards) =
                buffer.sample_batch(run.batch_size, &mut self.rng);
            let (outputs, cache) = net.forward(inputs.view(), Mode::Train, Some(&mut self.rng))?;
            let targets = masked_targets(outputs.view(), &actions, &rewards);
            let mut grad = backward(
                net,
                &cache,
                TargetsRef::Values(targets.view()),
                crate::nn::LossKind::Mse,
            )?;
            if let Some(max_norm) = self.cfg.clip_norm {
                grad = clip_gradient(&grad, max_norm);
            }
            state.update_moments(&grad, &self.cfg.optimizer)?;
            let updated = step(net.params(), state, &self.cfg.optimizer)?;
            net.set_params(updated)?;
        }
        if self.kind == AgentKind::BadamThompson {
            let n = EffectiveN::t_times_batch(state.t(), run.batch_size)?;
            self.posterior = Some(extract_posterior(
                net.params(),
                state,
                &self.cfg.optimizer,
                &self.cfg.prior,
                &n,
            )?);
        }
        Ok(())
    }
}

/// Always plays the wheel's optimal arm; pairs with `reward_std = 0` to pin
/// the normalization at exactly 1.
pub struct WheelOracle {
    pub delta: f64,
}

impl Policy for WheelOracle {
    fn select(&mut self, context: &[f64]) -> Result<usize> {
        let norm = (context[0] * context[0] + context[1] * context[1]).sqrt();
        if norm <= self.delta {
            return Ok(0);
        }
        Ok(match (context[0] >= 0.0, context[1] >= 0.0) {
            (true, true) => 1,
            (true, false) => 2,
            (false, true) => 3,
            (false, false) => 4,
        })
    }

    fn train(&mut self, _buffer: &ReplayBuffer, _run: &RunConfig) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub cumulative_reward: f64,
    /// Cumulative reward divided by the optimal arm's mean reward summed over
    /// the same rounds.
    pub normalized_reward: f64,
    pub action_counts: Vec<usize>,
}

/// Drive one policy through the round stream: round-robin warmup, then policy
/// selections, training every `run.train_every` rounds. Warmup rewards count
/// toward the cumulative total.
pub fn run_policy<P: Policy>(
    rounds: &[Round],
    num_actions: usize,
    policy: &mut P,
    run: &RunConfig,
    reward_std: f64,
    noise_rng: &mut ChaCha8Rng,
) -> Result<RunOutcome> {
    let warmup = run.warmup_pulls * num_actions;
    if rounds.len() < warmup {
        return Err(Error::Contract(format!(
            "horizon {} shorter than warmup {warmup}",
            rounds.len()
        )));
    }
    let context_dim = rounds.first().map_or(0, |r| r.context.len());
    let mut buffer = ReplayBuffer::new(context_dim);
    let mut cumulative = 0.0;
    let mut optimal_total = 0.0;
    let mut action_counts = vec![0usize; num_actions];
    let normal = StandardNormal;

    for (t, round) in rounds.iter().enumerate() {
        let action = if t < warmup {
            t % num_actions
        } else {
            policy.select(&round.context)?
        };
        let mut reward = round.mean_rewards[action];
        if reward_std > 0.0 {
            let z: f64 = normal.sample(noise_rng);
            reward += reward_std * z;
        }
        action_counts[action] += 1;
        cumulative += reward;
        optimal_total += round.mean_rewards[round.optimal_action];
        buffer.push(&round.context, action, reward);
        debug_assert_eq!(buffer.len(), t + 1);

        if (t + 1) % run.train_every == 0 {
            policy.train(&buffer, run)?;
        }
    }

    Ok(RunOutcome {
        cumulative_reward: cumulative,
        normalized_reward: cumulative / optimal_total,
        action_counts,
    })
}

/// The environment side of a bandit experiment.
#[derive(Debug, Clone)]
pub enum EnvSpec {
    Wheel { params: WheelParams, horizon: usize },
    Dataset { data: LabeledDataset, horizon: usize },
}

impl EnvSpec {
    pub fn num_actions(&self) -> Result<usize> {
        match self {
            EnvSpec::Wheel { .. } => Ok(WHEEL_NUM_ACTIONS),
            EnvSpec::Dataset { data, .. } => data
                .num_classes()
                .ok_or_else(|| Error::Contract("dataset has no class labels".into())),
        }
    }

    pub fn context_dim(&self) -> usize {
        match self {
            EnvSpec::Wheel { .. } => WHEEL_CONTEXT_DIM,
            EnvSpec::Dataset { data, .. } => data.features.ncols(),
        }
    }

    pub fn reward_std(&self) -> f64 {
        match self {
            EnvSpec::Wheel { params, .. } => params.reward_std,
            EnvSpec::Dataset { .. } => 0.0,
        }
    }

    pub fn rounds(&self, seed: u64) -> Result<Vec<Round>> {
        match self {
            EnvSpec::Wheel { params, horizon } => {
                params.validate()?;
                let mut rng = rng_for(seed, &["bandit", "context"]);
                Ok(wheel_rounds(params, *horizon, &mut rng))
            }
            EnvSpec::Dataset { data, horizon } => dataset_rounds(data, *horizon),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditResult {
    pub agent: AgentKind,
    pub seed: u64,
    pub cumulative_reward: f64,
    pub normalized_reward: f64,
}

/// Run every agent over every seed. Within a seed all agents share the context
/// stream; each (seed, agent) pair gets its own derived rng streams.
pub fn run_bandit(
    env: &EnvSpec,
    agents: &[AgentConfig],
    run: &RunConfig,
    seeds: &[u64],
) -> Result<Vec<BanditResult>> {
    let num_actions = env.num_actions()?;
    let context_dim = env.context_dim();
    let reward_std = env.reward_std();

    let per_seed: Vec<Result<Vec<BanditResult>>> = seeds
        .par_iter()
        .map(|&seed| {
            let rounds = env.rounds(seed)?;
            let mut results = Vec::with_capacity(agents.len());
            for (agent_idx, cfg) in agents.iter().enumerate() {
                let idx_label = agent_idx.to_string();
                let agent_rng =
                    rng_for(seed, &["bandit", "agent", cfg.kind.name(), &idx_label]);
                let mut noise_rng =
                    rng_for(seed, &["bandit", "noise", cfg.kind.name(), &idx_label]);
                let mut agent =
                    BanditAgent::new(cfg.clone(), context_dim, num_actions, agent_rng)?;
                let outcome =
                    run_policy(&rounds, num_actions, &mut agent, run, reward_std, &mut noise_rng)?;
                results.push(BanditResult {
                    agent: cfg.kind,
                    seed,
                    cumulative_reward: outcome.cumulative_reward,
                    normalized_reward: outcome.normalized_reward,
                });
            }
            Ok(results)
        })
        .collect();

    let mut results = Vec::with_capacity(seeds.len() * agents.len());
    for seed_results in per_seed {
        results.extend(seed_results?);
    }
    Ok(results)
}
