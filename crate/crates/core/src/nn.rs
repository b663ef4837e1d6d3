//! Minimal dense feedforward engine.
//!
//! Parameter storage is a flat `f64` vector with per-layer shape metadata, so
//! the optimizer and posterior code can treat the whole network as one vector.
//! The forward pass caches exactly what reverse mode needs; dropout is the
//! inverted variant (surviving activations scaled by `1/(1-rate)` at train
//! time), applied to hidden activations only. All math is 64-bit.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Flat network parameters with layer-shape metadata.
///
/// Shapes alternate weight matrix `(in_dim, out_dim)` and bias row
/// `(1, out_dim)` per layer; `values.len()` equals the sum of shape products.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    shapes: Vec<(usize, usize)>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, shapes: Vec<(usize, usize)>) -> Result<Self> {
        let expected: usize = shapes.iter().map(|(r, c)| r * c).sum();
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "param vector has {} values but shapes require {expected}",
                values.len()
            )));
        }
        Ok(Self { values, shapes })
    }

    pub fn zeros(shapes: Vec<(usize, usize)>) -> Self {
        let len = shapes.iter().map(|(r, c)| r * c).sum();
        Self {
            values: vec![0.0; len],
            shapes,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Start offset of the k-th shaped block within `values`.
    pub fn offset(&self, block: usize) -> usize {
        self.shapes[..block].iter().map(|(r, c)| r * c).sum()
    }
}

/// Loss gradient with respect to every parameter; mirrors the layout of the
/// paired [`ParamVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    values: Vec<f64>,
    shapes: Vec<(usize, usize)>,
}

impl Gradient {
    pub fn new(values: Vec<f64>, shapes: Vec<(usize, usize)>) -> Result<Self> {
        let expected: usize = shapes.iter().map(|(r, c)| r * c).sum();
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "gradient has {} values but shapes require {expected}",
                values.len()
            )));
        }
        Ok(Self { values, shapes })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Scale `g` so its L2 norm does not exceed `max_norm`; direction is preserved.
///
/// Gradients already inside the ball are returned unchanged, which makes the
/// operation exactly idempotent. The rescale loop guards against the rare case
/// where rounding leaves the norm a few ulps above the threshold.
pub fn clip_gradient(g: &Gradient, max_norm: f64) -> Gradient {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let mut out = g.clone();
    loop {
        let norm = out.l2_norm();
        if norm <= max_norm || norm == 0.0 {
            break;
        }
        let scale = max_norm / norm;
        if scale >= 1.0 {
            break;
        }
        for v in &mut out.values {
            *v *= scale;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputHead {
    Linear,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightInit {
    /// `U[-limit, limit]` on every weight; biases start at zero.
    Uniform { limit: f64 },
    /// `U[-sqrt(6/fan_in), sqrt(6/fan_in)]`; biases start at zero.
    FanIn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    SoftmaxCrossEntropy,
}

/// Borrowed view of regression targets or class indices.
#[derive(Debug, Clone, Copy)]
pub enum TargetsRef<'a> {
    Values(ArrayView2<'a, f64>),
    Classes(&'a [usize]),
}

impl TargetsRef<'_> {
    pub fn batch_len(&self) -> usize {
        match self {
            TargetsRef::Values(v) => v.nrows(),
            TargetsRef::Classes(c) => c.len(),
        }
    }
}

/// One training batch.
#[derive(Debug, Clone)]
pub struct Minibatch {
    pub inputs: Array2<f64>,
    pub targets: BatchTargets,
}

#[derive(Debug, Clone)]
pub enum BatchTargets {
    Values(Array2<f64>),
    Classes(Vec<usize>),
}

impl BatchTargets {
    pub fn as_ref(&self) -> TargetsRef<'_> {
        match self {
            BatchTargets::Values(v) => TargetsRef::Values(v.view()),
            BatchTargets::Classes(c) => TargetsRef::Classes(c),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            BatchTargets::Values(v) => v.nrows(),
            BatchTargets::Classes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Minibatch {
    pub fn new(inputs: Array2<f64>, targets: BatchTargets) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::Shape("minibatch must contain at least one row".into()));
        }
        if inputs.nrows() != targets.len() {
            return Err(Error::Shape(format!(
                "minibatch has {} input rows but {} targets",
                inputs.nrows(),
                targets.len()
            )));
        }
        Ok(Self { inputs, targets })
    }
}

/// Dense ReLU multilayer perceptron.
#[derive(Debug, Clone)]
pub struct Network {
    layer_sizes: Vec<usize>,
    activation: Activation,
    output_head: OutputHead,
    dropout_rate: f64,
    params: ParamVector,
}

/// Shape metadata for a network with the given layer sizes: weight matrix then
/// bias row per layer.
pub fn param_layout(layer_sizes: &[usize]) -> Vec<(usize, usize)> {
    let mut shapes = Vec::with_capacity(2 * (layer_sizes.len() - 1));
    for w in layer_sizes.windows(2) {
        shapes.push((w[0], w[1]));
        shapes.push((1, w[1]));
    }
    shapes
}

impl Network {
    /// Build a zero-initialized network; call [`Network::initialize`] before training.
    pub fn new(layer_sizes: Vec<usize>, output_head: OutputHead, dropout_rate: f64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Contract(
                "layer_sizes must list at least input and output dims".into(),
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Contract("layer sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Contract(format!(
                "dropout_rate must lie in [0, 1), got {dropout_rate}"
            )));
        }
        let params = ParamVector::zeros(param_layout(&layer_sizes));
        Ok(Self {
            layer_sizes,
            activation: Activation::Relu,
            output_head,
            dropout_rate,
            params,
        })
    }

    pub fn initialize<R: Rng>(&mut self, init: WeightInit, rng: &mut R) {
        let num_layers = self.num_layers();
        for layer in 0..num_layers {
            let (rows, cols) = self.params.shapes[2 * layer];
            let limit = match init {
                WeightInit::Uniform { limit } => limit,
                WeightInit::FanIn => (6.0 / rows as f64).sqrt(),
            };
            let off = self.params.offset(2 * layer);
            for w in &mut self.params.values[off..off + rows * cols] {
                *w = rng.random_range(-limit..limit);
            }
            // biases stay zero
        }
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn output_head(&self) -> OutputHead {
        self.output_head
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn set_params(&mut self, params: ParamVector) -> Result<()> {
        if params.shapes() != self.params.shapes() {
            return Err(Error::Shape("parameter shapes do not match network".into()));
        }
        self.params = params;
        Ok(())
    }

    fn weight(&self, layer: usize) -> ArrayView2<'_, f64> {
        let (rows, cols) = self.params.shapes[2 * layer];
        let off = self.params.offset(2 * layer);
        ArrayView2::from_shape((rows, cols), &self.params.values[off..off + rows * cols])
            .expect("layout is consistent by construction")
    }

    fn bias(&self, layer: usize) -> ArrayView2<'_, f64> {
        let (rows, cols) = self.params.shapes[2 * layer + 1];
        let off = self.params.offset(2 * layer + 1);
        ArrayView2::from_shape((rows, cols), &self.params.values[off..off + rows * cols])
            .expect("layout is consistent by construction")
    }

    /// Run the network. Train mode applies dropout (rng required when the rate
    /// is nonzero) and fills the cache needed by [`backward`]; eval mode is
    /// deterministic.
    pub fn forward<R: Rng>(
        &self,
        inputs: ArrayView2<'_, f64>,
        mode: Mode,
        mut rng: Option<&mut R>,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "inputs have {} columns, network expects {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        let use_dropout = mode == Mode::Train && self.dropout_rate > 0.0;
        if use_dropout && rng.is_none() {
            return Err(Error::Contract(
                "train-mode forward with dropout requires a random source".into(),
            ));
        }

        let num_layers = self.num_layers();
        let mut layer_inputs: Vec<Array2<f64>> = Vec::with_capacity(num_layers);
        let mut gates: Vec<Array2<f64>> = Vec::with_capacity(num_layers.saturating_sub(1));
        let mut activ = inputs.to_owned();

        for layer in 0..num_layers {
            let mut z = activ.dot(&self.weight(layer)) + self.bias(layer);
            if mode == Mode::Train {
                layer_inputs.push(activ);
            }
            if layer + 1 < num_layers {
                let mut gate = Array2::<f64>::zeros(z.raw_dim());
                relu_with_gate(&mut z, &mut gate);
                if use_dropout {
                    let keep_scale = 1.0 / (1.0 - self.dropout_rate);
                    let rng = rng.as_deref_mut().expect("checked above");
                    for i in 0..z.nrows() {
                        for j in 0..z.ncols() {
                            if rng.random::<f64>() < self.dropout_rate {
                                z[(i, j)] = 0.0;
                                gate[(i, j)] = 0.0;
                            } else {
                                z[(i, j)] *= keep_scale;
                                gate[(i, j)] *= keep_scale;
                            }
                        }
                    }
                }
                if mode == Mode::Train {
                    gates.push(gate);
                }
                activ = z;
            } else {
                if self.output_head == OutputHead::Softmax {
                    softmax_rows(&mut z);
                }
                activ = z;
            }
        }

        let cache = ForwardCache {
            mode,
            layer_sizes: self.layer_sizes.clone(),
            layer_inputs,
            gates,
            outputs: activ.clone(),
        };
        Ok((activ, cache))
    }

    /// Deterministic eval-mode outputs.
    pub fn predict(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let (outputs, _) = self.forward::<ChaCha8Rng>(inputs, Mode::Eval, None)?;
        Ok(outputs)
    }
}

fn relu_with_gate(z: &mut Array2<f64>, gate: &mut Array2<f64>) {
    ndarray::Zip::from(z).and(gate).for_each(|zv, gv| {
        if *zv > 0.0 {
            *gv = 1.0;
        } else {
            *zv = 0.0;
        }
    });
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Intermediate state captured by a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: Mode,
    layer_sizes: Vec<usize>,
    /// Input to each layer's affine transform (post-dropout for hidden layers).
    layer_inputs: Vec<Array2<f64>>,
    /// Per hidden layer, d(activation)/d(pre-activation) including the dropout scale.
    gates: Vec<Array2<f64>>,
    outputs: Array2<f64>,
}

impl ForwardCache {
    pub fn outputs(&self) -> ArrayView2<'_, f64> {
        self.outputs.view()
    }

    pub fn batch_len(&self) -> usize {
        self.outputs.nrows()
    }
}

/// Batch loss. `mse` is the squared error averaged over batch and output dims;
/// cross-entropy expects the softmax probabilities produced by the forward pass.
pub fn loss(outputs: ArrayView2<'_, f64>, targets: TargetsRef<'_>, kind: LossKind) -> Result<f64> {
    match kind {
        LossKind::Mse => {
            let values = match targets {
                TargetsRef::Values(v) => v,
                TargetsRef::Classes(_) => {
                    return Err(Error::Shape("mse requires value targets".into()))
                }
            };
            if values.dim() != outputs.dim() {
                return Err(Error::Shape(format!(
                    "mse targets {:?} do not match outputs {:?}",
                    values.dim(),
                    outputs.dim()
                )));
            }
            let n = (outputs.nrows() * outputs.ncols()) as f64;
            let sum: f64 = outputs
                .iter()
                .zip(values.iter())
                .map(|(o, y)| (o - y) * (o - y))
                .sum();
            Ok(sum / n)
        }
        LossKind::SoftmaxCrossEntropy => {
            let batch = outputs.nrows() as f64;
            match targets {
                TargetsRef::Classes(classes) => {
                    if classes.len() != outputs.nrows() {
                        return Err(Error::Shape(format!(
                            "{} class labels for {} output rows",
                            classes.len(),
                            outputs.nrows()
                        )));
                    }
                    if let Some(&c) = classes.iter().find(|&&c| c >= outputs.ncols()) {
                        return Err(Error::Shape(format!(
                            "class index {c} out of range for {} outputs",
                            outputs.ncols()
                        )));
                    }
                    let sum: f64 = classes
                        .iter()
                        .enumerate()
                        .map(|(i, &c)| -outputs[(i, c)].max(1e-300).ln())
                        .sum();
                    Ok(sum / batch)
                }
                TargetsRef::Values(onehot) => {
                    if onehot.dim() != outputs.dim() {
                        return Err(Error::Shape(format!(
                            "cross-entropy targets {:?} do not match outputs {:?}",
                            onehot.dim(),
                            outputs.dim()
                        )));
                    }
                    let sum: f64 = outputs
                        .iter()
                        .zip(onehot.iter())
                        .map(|(p, y)| -y * p.max(1e-300).ln())
                        .sum();
                    Ok(sum / batch)
                }
            }
        }
    }
}

/// Exact reverse-mode gradient of the batch loss with respect to every parameter.
///
/// The cache must come from a train-mode forward on this network, and `kind`
/// must match the output head (`mse` with a linear head, cross-entropy with a
/// softmax head); dropout masks recorded at forward time are respected.
pub fn backward(
    net: &Network,
    cache: &ForwardCache,
    targets: TargetsRef<'_>,
    kind: LossKind,
) -> Result<Gradient> {
    if cache.mode != Mode::Train {
        return Err(Error::Contract(
            "backward requires a cache from a train-mode forward".into(),
        ));
    }
    if cache.layer_sizes != net.layer_sizes {
        return Err(Error::Contract(
            "forward cache belongs to a different network architecture".into(),
        ));
    }
    if targets.batch_len() != cache.batch_len() {
        return Err(Error::Shape(format!(
            "{} targets for a cached batch of {}",
            targets.batch_len(),
            cache.batch_len()
        )));
    }
    match (kind, net.output_head) {
        (LossKind::Mse, OutputHead::Linear) | (LossKind::SoftmaxCrossEntropy, OutputHead::Softmax) => {}
        _ => {
            return Err(Error::Contract(
                "loss kind does not match the network's output head".into(),
            ))
        }
    }

    let batch = cache.batch_len() as f64;
    let outputs = &cache.outputs;

    // dL/d(pre-activation) at the head
    let mut delta = match kind {
        LossKind::Mse => {
            let values = match targets {
                TargetsRef::Values(v) => v,
                TargetsRef::Classes(_) => {
                    return Err(Error::Shape("mse requires value targets".into()))
                }
            };
            if values.dim() != outputs.dim() {
                return Err(Error::Shape(format!(
                    "mse targets {:?} do not match outputs {:?}",
                    values.dim(),
                    outputs.dim()
                )));
            }
            let scale = 2.0 / (batch * outputs.ncols() as f64);
            (outputs - &values) * scale
        }
        LossKind::SoftmaxCrossEntropy => {
            let mut d = outputs.clone();
            match targets {
                TargetsRef::Classes(classes) => {
                    if let Some(&c) = classes.iter().find(|&&c| c >= outputs.ncols()) {
                        return Err(Error::Shape(format!(
                            "class index {c} out of range for {} outputs",
                            outputs.ncols()
                        )));
                    }
                    for (i, &c) in classes.iter().enumerate() {
                        d[(i, c)] -= 1.0;
                    }
                }
                TargetsRef::Values(onehot) => {
                    if onehot.dim() != outputs.dim() {
                        return Err(Error::Shape(format!(
                            "cross-entropy targets {:?} do not match outputs {:?}",
                            onehot.dim(),
                            outputs.dim()
                        )));
                    }
                    d -= &onehot;
                }
            }
            d / batch
        }
    };

    let num_layers = net.num_layers();
    let mut grads_rev: Vec<(Array2<f64>, Array2<f64>)> = Vec::with_capacity(num_layers);
    for layer in (0..num_layers).rev() {
        let grad_w = cache.layer_inputs[layer].t().dot(&delta);
        let grad_b = delta
            .sum_axis(Axis(0))
            .insert_axis(Axis(0))
            .into_owned();
        if layer > 0 {
            delta = delta.dot(&net.weight(layer).t()) * &cache.gates[layer - 1];
        }
        grads_rev.push((grad_w, grad_b));
    }

    let mut values = Vec::with_capacity(net.params.len());
    for (grad_w, grad_b) in grads_rev.into_iter().rev() {
        values.extend(grad_w.iter());
        values.extend(grad_b.iter());
    }
    Gradient::new(values, net.params.shapes().to_vec())
}

/// Row-wise argmax, used for classification accuracy.
pub fn argmax_rows(outputs: ArrayView2<'_, f64>) -> Vec<usize> {
    outputs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            let mut best_val = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if v > best_val {
                    best = j;
                    best_val = v;
                }
            }
            best
        })
        .collect()
}
