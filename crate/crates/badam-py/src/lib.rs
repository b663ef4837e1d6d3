//! Python bindings: networks, adaptive optimizers, and the Gaussian weight
//! posterior, with list-based matrices so no numpy dependency is required.

use ndarray::Array2;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use badam::data::{gen_regression, Labels, RegressionTask};
use badam::nn::{LossKind, OutputHead, TargetsRef, WeightInit};
use badam::optim::{train_network, LrSchedule, Method, MomentState, TrainConfig};
use badam::posterior::{
    extract_posterior, predictive_sample, EffectiveN, EffectiveNMode, GaussianPosterior,
    PriorConfig,
};
use badam::pruning::PruneCriterion;

fn value_err(e: badam::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: &[Vec<f64>], what: &str) -> PyResult<Array2<f64>> {
    if rows.is_empty() {
        return Err(PyValueError::new_err(format!("{what}: empty matrix")));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err(format!("{what}: ragged rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), width), flat)
        .map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

fn from_matrix(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Dense ReLU network with a linear or softmax head.
#[pyclass(name = "Network")]
struct PyNetwork {
    inner: badam::Network,
}

#[pymethods]
impl PyNetwork {
    #[new]
    #[pyo3(signature = (layer_sizes, output_head="linear", dropout_rate=0.0, init="uniform", init_limit=0.3, seed=0))]
    fn new(
        layer_sizes: Vec<usize>,
        output_head: &str,
        dropout_rate: f64,
        init: &str,
        init_limit: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let head = match output_head {
            "linear" => OutputHead::Linear,
            "softmax" => OutputHead::Softmax,
            other => {
                return Err(PyValueError::new_err(format!(
                    "output_head must be linear or softmax, got {other:?}"
                )))
            }
        };
        let init = match init {
            "uniform" => WeightInit::Uniform { limit: init_limit },
            "fan_in" => WeightInit::FanIn,
            other => {
                return Err(PyValueError::new_err(format!(
                    "init must be uniform or fan_in, got {other:?}"
                )))
            }
        };
        let mut net = badam::Network::new(layer_sizes, head, dropout_rate).map_err(value_err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        net.initialize(init, &mut rng);
        Ok(Self { inner: net })
    }

    /// Deterministic eval-mode forward pass.
    fn forward(&self, inputs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let inputs = to_matrix(&inputs, "inputs")?;
        let out = self.inner.predict(inputs.view()).map_err(value_err)?;
        Ok(from_matrix(&out))
    }

    fn num_params(&self) -> usize {
        self.inner.params().len()
    }

    fn params(&self) -> Vec<f64> {
        self.inner.params().values().to_vec()
    }

    fn set_params(&mut self, values: Vec<f64>) -> PyResult<()> {
        let shapes = self.inner.params().shapes().to_vec();
        let params = badam::ParamVector::new(values, shapes).map_err(value_err)?;
        self.inner.set_params(params).map_err(value_err)
    }

    fn layer_sizes(&self) -> Vec<usize> {
        self.inner.layer_sizes().to_vec()
    }
}

/// Adaptive subgradient optimizer (ogd, adagrad or adam) plus its moment state.
#[pyclass(name = "Optimizer")]
struct PyOptimizer {
    cfg: badam::OptimizerConfig,
    state: Option<MomentState>,
    batch_size: usize,
}

#[pymethods]
impl PyOptimizer {
    #[new]
    #[pyo3(signature = (method="adam", eta=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8, bias_correct_lr=true, lr_schedule="constant"))]
    fn new(
        method: &str,
        eta: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        bias_correct_lr: bool,
        lr_schedule: &str,
    ) -> PyResult<Self> {
        let method = match method {
            "ogd" => Method::Ogd,
            "adagrad" => Method::Adagrad,
            "adam" => Method::Adam,
            other => {
                return Err(PyValueError::new_err(format!(
                    "method must be ogd, adagrad or adam, got {other:?}"
                )))
            }
        };
        let lr_schedule = match lr_schedule {
            "constant" => LrSchedule::Constant,
            "inverse_decay" => LrSchedule::InverseDecay,
            other => {
                return Err(PyValueError::new_err(format!(
                    "lr_schedule must be constant or inverse_decay, got {other:?}"
                )))
            }
        };
        let cfg = badam::OptimizerConfig {
            method,
            eta,
            beta1,
            beta2,
            epsilon,
            bias_correct_lr,
            lr_schedule,
        };
        cfg.validate().map_err(value_err)?;
        Ok(Self {
            cfg,
            state: None,
            batch_size: 0,
        })
    }

    /// Minibatch mse training; returns the mean training loss per epoch.
    /// Moment state accumulates across calls.
    #[pyo3(signature = (net, inputs, targets, epochs, batch_size=32, clip_norm=0.0, seed=0))]
    fn fit_mse(
        &mut self,
        net: &mut PyNetwork,
        inputs: Vec<Vec<f64>>,
        targets: Vec<Vec<f64>>,
        epochs: usize,
        batch_size: usize,
        clip_norm: f64,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let inputs = to_matrix(&inputs, "inputs")?;
        let targets = to_matrix(&targets, "targets")?;
        self.fit(
            net,
            inputs,
            TargetsRef::Values(targets.view()),
            LossKind::Mse,
            epochs,
            batch_size,
            clip_norm,
            seed,
        )
    }

    /// Minibatch softmax cross-entropy training on integer class labels.
    #[pyo3(signature = (net, inputs, labels, epochs, batch_size=32, clip_norm=0.0, seed=0))]
    fn fit_classes(
        &mut self,
        net: &mut PyNetwork,
        inputs: Vec<Vec<f64>>,
        labels: Vec<usize>,
        epochs: usize,
        batch_size: usize,
        clip_norm: f64,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let inputs = to_matrix(&inputs, "inputs")?;
        self.fit(
            net,
            inputs,
            TargetsRef::Classes(&labels),
            LossKind::SoftmaxCrossEntropy,
            epochs,
            batch_size,
            clip_norm,
            seed,
        )
    }

    /// Optimizer steps taken so far.
    fn steps(&self) -> u64 {
        self.state.as_ref().map_or(0, MomentState::t)
    }

    /// Extract the Gaussian weight posterior from the current state.
    /// `effective_n = 0` selects the `t * batch_size` heuristic.
    #[pyo3(signature = (net, sigma_prior=0.1, improper=false, effective_n=0.0))]
    fn posterior(
        &self,
        net: &PyNetwork,
        sigma_prior: f64,
        improper: bool,
        effective_n: f64,
    ) -> PyResult<PyPosterior> {
        let state = self
            .state
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("no training steps taken yet"))?;
        let prior = PriorConfig {
            sigma_prior,
            improper,
        };
        let n = if effective_n > 0.0 {
            EffectiveN::fixed(effective_n)
        } else {
            EffectiveN::resolve(
                EffectiveNMode::TTimesBatch,
                0.0,
                state.t(),
                self.batch_size,
            )
        }
        .map_err(value_err)?;
        let post = extract_posterior(net.inner.params(), state, &self.cfg, &prior, &n)
            .map_err(value_err)?;
        Ok(PyPosterior { inner: post })
    }
}

impl PyOptimizer {
    #[allow(clippy::too_many_arguments)]
    fn fit(
        &mut self,
        net: &mut PyNetwork,
        inputs: Array2<f64>,
        targets: TargetsRef<'_>,
        kind: LossKind,
        epochs: usize,
        batch_size: usize,
        clip_norm: f64,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let dim = net.inner.params().len();
        let state = self.state.get_or_insert_with(|| MomentState::new(dim));
        if state.dim() != dim {
            return Err(PyValueError::new_err(
                "optimizer state belongs to a different network",
            ));
        }
        self.batch_size = batch_size;
        let tc = TrainConfig {
            epochs,
            batch_size,
            clip_norm: (clip_norm > 0.0).then_some(clip_norm),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        train_network(
            &mut net.inner,
            state,
            &self.cfg,
            &tc,
            inputs.view(),
            targets,
            kind,
            &mut rng,
        )
        .map_err(value_err)
    }
}

/// Diagonal Gaussian posterior over the flat weight vector.
#[pyclass(name = "Posterior")]
struct PyPosterior {
    inner: GaussianPosterior,
}

#[pymethods]
impl PyPosterior {
    fn mean(&self) -> Vec<f64> {
        self.inner.mean().to_vec()
    }

    fn variance(&self) -> Vec<f64> {
        self.inner.variance().to_vec()
    }

    fn signal_to_noise(&self) -> Vec<f64> {
        self.inner.signal_to_noise()
    }

    #[pyo3(signature = (count=1, seed=0))]
    fn sample(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.inner
            .sample_weights(&mut rng, count)
            .into_iter()
            .map(|p| p.values().to_vec())
            .collect()
    }

    /// Posterior mean with the lowest-ranked fraction `p` of weights zeroed.
    #[pyo3(signature = (p, criterion="snr"))]
    fn prune(&self, p: f64, criterion: &str) -> PyResult<Vec<f64>> {
        let criterion = match criterion {
            "snr" => PruneCriterion::Snr,
            "magnitude_const_var" => PruneCriterion::MagnitudeConstVar,
            other => {
                return Err(PyValueError::new_err(format!(
                    "criterion must be snr or magnitude_const_var, got {other:?}"
                )))
            }
        };
        badam::pruning::prune(&self.inner, p, criterion)
            .map(|p| p.values().to_vec())
            .map_err(value_err)
    }

    /// Predictive mean and std from sampled-weight forward passes.
    #[pyo3(signature = (net, inputs, samples=100, obs_noise=0.0, seed=0))]
    fn predictive(
        &self,
        net: &PyNetwork,
        inputs: Vec<Vec<f64>>,
        samples: usize,
        obs_noise: f64,
        seed: u64,
    ) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let inputs = to_matrix(&inputs, "inputs")?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mean, std) =
            predictive_sample(&net.inner, &self.inner, inputs.view(), samples, obs_noise, &mut rng)
                .map_err(value_err)?;
        Ok((from_matrix(&mean), from_matrix(&std)))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Synthetic regression data: returns (train_x, train_y, grid_x, grid_true_y).
#[pyfunction]
#[pyo3(signature = (n_train=2000, n_test=500, noise_std=0.02, seed=0))]
fn make_regression(
    n_train: usize,
    n_test: usize,
    noise_std: f64,
    seed: u64,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let task = RegressionTask {
        n_train,
        n_test,
        noise_std,
        ..RegressionTask::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train, grid) = gen_regression(&task, &mut rng).map_err(value_err)?;
    let col = |m: &Array2<f64>| m.column(0).to_vec();
    let train_y = match &train.labels {
        Labels::Targets(y) => col(y),
        Labels::Classes(_) => unreachable!(),
    };
    let grid_y = match &grid.labels {
        Labels::Targets(y) => col(y),
        Labels::Classes(_) => unreachable!(),
    };
    Ok((col(&train.features), train_y, col(&grid.features), grid_y))
}

/// Deterministic collision-resistant sub-seed derivation.
#[pyfunction]
fn seed_derive(master: u64, labels: Vec<String>) -> u64 {
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    badam::seed::seed_derive(master, &refs)
}

#[pymodule]
fn badam_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyOptimizer>()?;
    m.add_class::<PyPosterior>()?;
    m.add_function(wrap_pyfunction!(make_regression, m)?)?;
    m.add_function(wrap_pyfunction!(seed_derive, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
