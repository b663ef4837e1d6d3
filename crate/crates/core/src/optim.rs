//! Adaptive subgradient methods behind a single update rule.
//!
//! Every method fits the template `theta <- theta - lr * V^{-1/2} m` with a
//! diagonal `V`: OGD uses the raw gradient and the identity, AdaGrad the running
//! mean of squared gradients, Adam exponentially weighted moving averages of
//! both moments. Moment state is stored UNCORRECTED; bias correction happens at
//! read time (or is absorbed into the learning rate), never inside the
//! recursion, so corrections cannot compound.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    backward, clip_gradient, loss, Gradient, LossKind, Mode, Network, ParamVector, TargetsRef,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ogd,
    Adagrad,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    /// `eta / sqrt(t)`.
    InverseDecay,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub method: Method,
    /// Global learning rate.
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Absorb the `(1-beta^t)` initialization-bias factors into the learning
    /// rate (the usual Adam implementation); when false, the corrected moments
    /// are used directly.
    pub bias_correct_lr: bool,
    pub lr_schedule: LrSchedule,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::Adam,
            eta: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            bias_correct_lr: true,
            lr_schedule: LrSchedule::Constant,
        }
    }
}

impl OptimizerConfig {
    pub fn adam(eta: f64) -> Self {
        Self {
            eta,
            ..Self::default()
        }
    }

    pub fn adagrad(eta: f64) -> Self {
        Self {
            method: Method::Adagrad,
            eta,
            ..Self::default()
        }
    }

    pub fn ogd(eta: f64) -> Self {
        Self {
            method: Method::Ogd,
            eta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::Contract(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::Contract(format!(
                "beta1 must lie in [0, 1), got {}",
                self.beta1
            )));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Contract(format!(
                "beta2 must lie in [0, 1), got {}",
                self.beta2
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Contract(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Learning rate at step `t >= 1` under the configured schedule.
pub fn lr_at(cfg: &OptimizerConfig, t: u64) -> f64 {
    assert!(t >= 1, "schedules are defined for t >= 1");
    match cfg.lr_schedule {
        LrSchedule::Constant => cfg.eta,
        LrSchedule::InverseDecay => cfg.eta / (t as f64).sqrt(),
    }
}

/// The absorbed bias-correction factor `sqrt(1 - beta2^t) / (1 - beta1^t)`.
pub fn lr_bias_correction(cfg: &OptimizerConfig, t: u64) -> f64 {
    (1.0 - cfg.beta2.powi(t as i32)).sqrt() / (1.0 - cfg.beta1.powi(t as i32))
}

/// The optimizer's sufficient statistics.
///
/// `m` holds the current (sub)gradient estimate: the uncorrected EWMA for Adam
/// and the raw last gradient for OGD/AdaGrad. `v` is Adam's uncorrected second
/// moment; `accumulated_sq` is AdaGrad's running sum of squared gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    m: Vec<f64>,
    v: Vec<f64>,
    accumulated_sq: Vec<f64>,
    t: u64,
}

impl MomentState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            accumulated_sq: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn accumulated_sq(&self) -> &[f64] {
        &self.accumulated_sq
    }

    /// Fold one observed gradient into the state and advance the step counter.
    pub fn update_moments(&mut self, g: &Gradient, cfg: &OptimizerConfig) -> Result<()> {
        if g.len() != self.dim() {
            return Err(Error::Shape(format!(
                "gradient dimension {} does not match state dimension {}",
                g.len(),
                self.dim()
            )));
        }
        match cfg.method {
            Method::Adam => {
                for (m, &gi) in self.m.iter_mut().zip(g.values()) {
                    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
                }
                for (v, &gi) in self.v.iter_mut().zip(g.values()) {
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
                }
            }
            Method::Adagrad => {
                self.m.copy_from_slice(g.values());
                for (acc, &gi) in self.accumulated_sq.iter_mut().zip(g.values()) {
                    *acc += gi * gi;
                }
            }
            Method::Ogd => {
                self.m.copy_from_slice(g.values());
            }
        }
        self.t += 1;
        Ok(())
    }

    /// Bias-corrected moment estimates `(m_hat, v_hat)` at the current step.
    ///
    /// Adam divides out the initialization bias; AdaGrad averages the squared
    /// gradient sum; OGD reports the raw gradient against an identity `V`.
    pub fn read_corrected(&self, cfg: &OptimizerConfig) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.t == 0 {
            return Err(Error::Contract(
                "read_corrected requires at least one observed gradient".into(),
            ));
        }
        match cfg.method {
            Method::Adam => {
                let c1 = 1.0 - cfg.beta1.powi(self.t as i32);
                let c2 = 1.0 - cfg.beta2.powi(self.t as i32);
                let m_hat = self.m.iter().map(|m| m / c1).collect();
                let v_hat = self.v.iter().map(|v| v / c2).collect();
                Ok((m_hat, v_hat))
            }
            Method::Adagrad => {
                let t = self.t as f64;
                let v_hat = self.accumulated_sq.iter().map(|a| a / t).collect();
                Ok((self.m.clone(), v_hat))
            }
            Method::Ogd => Ok((self.m.clone(), vec![1.0; self.dim()])),
        }
    }
}

/// One parameter update from the current moment state.
///
/// OGD reduces bit-exactly to `theta - lr * g`. Adam either absorbs the bias
/// correction into the learning rate (acting on raw moments) or applies the
/// schedule rate to the corrected moments, matching `bias_correct_lr`.
pub fn step(theta: &ParamVector, state: &MomentState, cfg: &OptimizerConfig) -> Result<ParamVector> {
    if theta.len() != state.dim() {
        return Err(Error::Shape(format!(
            "parameter dimension {} does not match state dimension {}",
            theta.len(),
            state.dim()
        )));
    }
    if state.t == 0 {
        return Err(Error::Contract("step requires updated moments (t >= 1)".into()));
    }
    let lr = lr_at(cfg, state.t);
    let mut values = Vec::with_capacity(theta.len());
    match cfg.method {
        Method::Ogd => {
            for (&th, &g) in theta.values().iter().zip(&state.m) {
                values.push(th - lr * g);
            }
        }
        Method::Adagrad => {
            let (m_hat, v_hat) = state.read_corrected(cfg)?;
            for ((&th, &m), &v) in theta.values().iter().zip(&m_hat).zip(&v_hat) {
                values.push(th - lr * m / (v.sqrt() + cfg.epsilon));
            }
        }
        Method::Adam => {
            if cfg.bias_correct_lr {
                let lr_eff = lr * lr_bias_correction(cfg, state.t);
                for ((&th, &m), &v) in theta.values().iter().zip(&state.m).zip(&state.v) {
                    values.push(th - lr_eff * m / (v.sqrt() + cfg.epsilon));
                }
            } else {
                let (m_hat, v_hat) = state.read_corrected(cfg)?;
                for ((&th, &m), &v) in theta.values().iter().zip(&m_hat).zip(&v_hat) {
                    values.push(th - lr * m / (v.sqrt() + cfg.epsilon));
                }
            }
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "update produced a non-finite parameter at step {}; update rejected",
            state.t
        )));
    }
    ParamVector::new(values, theta.shapes().to_vec())
}

/// Minibatch training schedule shared by the experiments.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: Option<f64>,
}

/// Train in place for `tc.epochs` epochs; returns the mean training loss per epoch.
pub fn train_network<R: Rng>(
    net: &mut Network,
    state: &mut MomentState,
    opt: &OptimizerConfig,
    tc: &TrainConfig,
    features: ndarray::ArrayView2<'_, f64>,
    targets: TargetsRef<'_>,
    kind: LossKind,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = features.nrows();
    if n == 0 {
        return Err(Error::Shape("training set is empty".into()));
    }
    if targets.batch_len() != n {
        return Err(Error::Shape(format!(
            "{} targets for {} training rows",
            targets.batch_len(),
            n
        )));
    }
    let batch_size = tc.batch_size.max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(tc.epochs);

    for _ in 0..tc.epochs {
        order.shuffle(rng);
        let mut weighted_loss = 0.0;
        for chunk in order.chunks(batch_size) {
            let inputs = features.select(ndarray::Axis(0), chunk);
            let batch_targets = select_targets(targets, chunk);
            let (outputs, cache) = net.forward(inputs.view(), Mode::Train, Some(rng))?;
            let batch_loss = loss(outputs.view(), batch_targets.as_ref(), kind)?;
            weighted_loss += batch_loss * chunk.len() as f64;

            let mut grad = backward(net, &cache, batch_targets.as_ref(), kind)?;
            if let Some(max_norm) = tc.clip_norm {
                grad = clip_gradient(&grad, max_norm);
            }
            state.update_moments(&grad, opt)?;
            let updated = step(net.params(), state, opt)?;
            net.set_params(updated)?;
        }
        epoch_losses.push(weighted_loss / n as f64);
    }
    Ok(epoch_losses)
}

fn select_targets(targets: TargetsRef<'_>, idx: &[usize]) -> crate::nn::BatchTargets {
    match targets {
        TargetsRef::Values(v) => {
            crate::nn::BatchTargets::Values(v.select(ndarray::Axis(0), idx))
        }
        TargetsRef::Classes(c) => {
            crate::nn::BatchTargets::Classes(idx.iter().map(|&i| c[i]).collect())
        }
    }
}
