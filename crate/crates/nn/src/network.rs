use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::layer::{self, ConvGeom, LayerSpec, Shape};
use crate::loss::{log_softmax_nll, nll_loss};
use crate::presets::Preset;
use crate::tensor::Tensor;

/// Identifies the random draws of one training step. Together with the layer
/// index it seeds the generator of every stochastic layer, so masks depend
/// only on these values and not on execution order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StochasticKey {
    pub seed: u64,
    pub epoch: u64,
    pub batch: u64,
}

impl StochasticKey {
    pub fn new(seed: u64, epoch: u64, batch: u64) -> Self {
        StochasticKey { seed, epoch, batch }
    }

    fn rng(&self, layer: usize) -> ChaCha8Rng {
        let mut bytes = [0u8; 32];
        for (i, v) in [self.seed, self.epoch, self.batch, layer as u64].iter().enumerate() {
            bytes[i * 8..(i + 1) * 8].copy_from_slice(&v.to_le_bytes());
        }
        ChaCha8Rng::from_seed(bytes)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug)]
pub struct Param<F> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub value: Vec<F>,
    pub grad: Vec<F>,
    /// Momentum buffer; empty until the first optimizer step.
    pub velocity: Vec<F>,
    pub decay: bool,
}

#[derive(Clone, Debug)]
enum Cache<F> {
    Input(Vec<F>),
    Argmax(Vec<u32>),
    Mask(Vec<F>),
    Flips(Vec<bool>),
    Output(Vec<F>),
    Norm { xhat: Vec<F>, inv_std: Vec<F> },
    Passthrough,
}

#[derive(Clone, Debug)]
pub struct Layer<F> {
    spec: LayerSpec,
    input: Shape,
    output: Shape,
    params: Vec<Param<F>>,
    running: Vec<F>,
    cache: Option<(usize, Cache<F>)>,
}

impl<F: Float> Layer<F> {
    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn output_shape(&self) -> Shape {
        self.output
    }

    pub fn params(&self) -> &[Param<F>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<F>] {
        &mut self.params
    }

    /// Batch-norm running mean followed by running variance.
    pub fn running(&self) -> &[F] {
        &self.running
    }

    pub fn running_mut(&mut self) -> &mut [F] {
        &mut self.running
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

#[derive(Clone, Debug)]
pub struct Network<F> {
    preset: Option<Preset>,
    input: Shape,
    layers: Vec<Layer<F>>,
    iteration: u64,
    frozen: Option<StochasticKey>,
}

impl<F: Float> Network<F> {
    /// Builds a network, checking every layer against the shape propagated
    /// from `input`, and initializes parameters from `seed`: weights and
    /// biases uniform in ±1/√fan_in, batch-norm scale 1 and shift 0.
    pub fn new(input: Shape, specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Argument("a network needs at least one layer".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input;
        for (i, spec) in specs.into_iter().enumerate() {
            let output = spec.output_shape(shape).map_err(|msg| Error::Shape {
                layer: i,
                layer_name: spec.to_string(),
                msg,
            })?;
            let params = spec
                .params()
                .into_iter()
                .map(|info| {
                    let len: usize = info.shape.iter().product();
                    let value = match info.name {
                        "gamma" => vec![F::one(); len],
                        "beta" => vec![F::zero(); len],
                        _ => {
                            let bound = 1.0 / (info.fan_in as f64).sqrt();
                            (0..len).map(|_| F::lit(rng.gen_range(-bound..bound))).collect()
                        }
                    };
                    Param {
                        name: info.name,
                        shape: info.shape,
                        value,
                        grad: vec![F::zero(); len],
                        velocity: Vec::new(),
                        decay: info.decay,
                    }
                })
                .collect();
            let mut running = vec![F::zero(); spec.running_len()];
            let half = running.len() / 2;
            running[half..].fill(F::one());
            layers.push(Layer {
                spec,
                input: shape,
                output,
                params,
                running,
                cache: None,
            });
            shape = output;
        }
        Ok(Network {
            preset: None,
            input,
            layers,
            iteration: 0,
            frozen: None,
        })
    }

    pub fn with_preset(mut self, preset: Preset) -> Self {
        self.preset = Some(preset);
        self
    }

    pub fn preset(&self) -> Option<Preset> {
        self.preset
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn output_shape(&self) -> Shape {
        self.layers.last().expect("non-empty").output
    }

    pub fn class_count(&self) -> usize {
        self.output_shape().len()
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<F>] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn set_iteration(&mut self, t: u64) {
        self.iteration = t;
    }

    /// Whether the final layer already produces log-probabilities.
    pub fn outputs_log_probs(&self) -> bool {
        matches!(self.layers.last().map(|l| l.spec), Some(LayerSpec::LogSoftMax))
    }

    /// Pins every stochastic layer to the masks drawn from `key`, whatever key
    /// later forward calls pass. Needed for finite-difference checks.
    pub fn freeze_stochastic(&mut self, key: StochasticKey) {
        self.frozen = Some(key);
    }

    pub fn unfreeze_stochastic(&mut self) {
        self.frozen = None;
    }

    pub fn frozen_key(&self) -> Option<StochasticKey> {
        self.frozen
    }

    pub fn has_stochastic_layers(&self) -> bool {
        self.layers.iter().any(|l| l.spec.is_stochastic())
    }

    fn check_input(&self, x: &Tensor<F>) -> Result<usize> {
        let n = x.batch();
        if n == 0 || x.shape() != self.input.with_batch(n).as_slice() {
            return Err(Error::Shape {
                layer: 0,
                layer_name: self.layers[0].spec.to_string(),
                msg: format!("input {:?} does not match {}", x.shape(), self.input),
            });
        }
        Ok(n)
    }

    pub fn forward(&mut self, x: &Tensor<F>, mode: Mode, key: StochasticKey) -> Result<Tensor<F>> {
        match mode {
            Mode::Train => self.forward_train(x, key),
            Mode::Eval => self.infer(x),
        }
    }

    /// Read-only evaluation: dropout and flips are the identity, batch norm
    /// uses running statistics.
    pub fn infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let n = self.check_input(x)?;
        let mut cur = x.data().to_vec();
        for layer in &self.layers {
            cur = match layer.spec {
                LayerSpec::Dropout { .. } | LayerSpec::BatchFlip { .. } | LayerSpec::Reshape { .. } => cur,
                LayerSpec::BatchNorm2d { features } | LayerSpec::BatchNorm1d { features } => {
                    let spatial = layer.input.len() / features;
                    let mut out = vec![F::zero(); cur.len()];
                    layer::batchnorm_eval(
                        &cur,
                        features,
                        spatial,
                        &layer.params[0].value,
                        &layer.params[1].value,
                        &layer.running,
                        &mut out,
                    );
                    out
                }
                _ => deterministic_forward(layer, &cur, n).0,
            };
        }
        Tensor::new(self.output_shape().with_batch(n), cur)
    }

    /// Training forward pass; caches what [`Network::backward`] needs and
    /// updates batch-norm running statistics.
    pub fn forward_train(&mut self, x: &Tensor<F>, key: StochasticKey) -> Result<Tensor<F>> {
        let n = self.check_input(x)?;
        let key = self.frozen.unwrap_or(key);
        let mut cur = x.data().to_vec();
        for (idx, layer) in self.layers.iter_mut().enumerate() {
            let (out, cache) = match layer.spec {
                LayerSpec::Dropout { p } => {
                    if p == 0.0 {
                        (std::mem::take(&mut cur), Cache::Passthrough)
                    } else {
                        let mut rng = key.rng(idx);
                        let keep = F::lit(1.0 / (1.0 - p));
                        let mask: Vec<F> = (0..cur.len())
                            .map(|_| if rng.gen::<f64>() < p { F::zero() } else { keep })
                            .collect();
                        let out = cur.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                        (out, Cache::Mask(mask))
                    }
                }
                LayerSpec::BatchFlip { p } => {
                    let mut rng = key.rng(idx);
                    let flips: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() < p).collect();
                    let out = flip_items(std::mem::take(&mut cur), layer.input, &flips);
                    (out, Cache::Flips(flips))
                }
                LayerSpec::BatchNorm2d { features } | LayerSpec::BatchNorm1d { features } => {
                    let spatial = layer.input.len() / features;
                    let mut out = vec![F::zero(); cur.len()];
                    let (gamma, beta) = (&layer.params[0].value, &layer.params[1].value);
                    let (xhat, inv_std) = layer::batchnorm_train(
                        &cur,
                        n,
                        features,
                        spatial,
                        gamma,
                        beta,
                        &mut layer.running,
                        &mut out,
                    );
                    (out, Cache::Norm { xhat, inv_std })
                }
                _ => deterministic_forward(layer, &cur, n),
            };
            let cache = match cache {
                Cache::Input(_) => Cache::Input(std::mem::take(&mut cur)),
                other => other,
            };
            layer.cache = Some((n, cache));
            cur = out;
        }
        Tensor::new(self.output_shape().with_batch(n), cur)
    }

    /// Back-propagates `dy` (gradient of the loss w.r.t. the network output)
    /// through the cached forward pass, overwriting every parameter gradient.
    /// Returns the gradient w.r.t. the network input.
    pub fn backward(&mut self, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let (n, grad) = self.backward_impl(dy, true)?;
        Tensor::new(self.input.with_batch(n), grad)
    }

    /// Like [`Network::backward`] but skips the input gradient of the first
    /// layer where that saves work; returns the batch size.
    fn backward_params(&mut self, dy: &Tensor<F>) -> Result<usize> {
        self.backward_impl(dy, false).map(|(n, _)| n)
    }

    fn backward_impl(&mut self, dy: &Tensor<F>, input_grad: bool) -> Result<(usize, Vec<F>)> {
        let n = match self.layers.last().and_then(|l| l.cache.as_ref()) {
            Some((n, _)) => *n,
            None => {
                return Err(Error::State(
                    "backward called without a preceding training forward pass".into(),
                ))
            }
        };
        if dy.shape() != self.output_shape().with_batch(n).as_slice() {
            return Err(Error::Argument(format!(
                "output gradient {:?} does not match output {} × {n}",
                dy.shape(),
                self.output_shape()
            )));
        }
        let mut grad = dy.data().to_vec();
        for (idx, layer) in self.layers.iter_mut().enumerate().rev() {
            let (cn, cache) = layer.cache.take().ok_or_else(|| {
                Error::State(format!("layer {idx} has no cached forward pass"))
            })?;
            debug_assert_eq!(cn, n);
            grad = layer_backward(layer, cache, grad, n, input_grad || idx > 0)?;
        }
        Ok((n, grad))
    }

    /// Forward, loss and backward on one batch; returns the mean loss.
    pub fn loss_and_grad(&mut self, x: &Tensor<F>, labels: &[usize], key: StochasticKey) -> Result<f64> {
        let out = self.forward_train(x, key)?;
        let (loss, grad) = self.loss(&out, labels)?;
        self.backward_params(&grad)?;
        Ok(loss)
    }

    /// Mean negative log-likelihood of `outputs`, applying log-softmax first
    /// when the network ends in raw scores.
    pub fn loss(&self, outputs: &Tensor<F>, labels: &[usize]) -> Result<(f64, Tensor<F>)> {
        if self.outputs_log_probs() {
            nll_loss(outputs, labels)
        } else {
            log_softmax_nll(outputs, labels)
        }
    }

    /// Converts every parameter and running statistic to another precision.
    pub fn cast<G: Float>(&self) -> Network<G> {
        let conv = |v: &[F]| v.iter().map(|x| G::lit(x.as_f64())).collect::<Vec<G>>();
        Network {
            preset: self.preset,
            input: self.input,
            iteration: self.iteration,
            frozen: self.frozen,
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    spec: l.spec,
                    input: l.input,
                    output: l.output,
                    running: conv(&l.running),
                    cache: None,
                    params: l
                        .params
                        .iter()
                        .map(|p| Param {
                            name: p.name,
                            shape: p.shape.clone(),
                            value: conv(&p.value),
                            grad: conv(&p.grad),
                            velocity: conv(&p.velocity),
                            decay: p.decay,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Fingerprint of the piecewise-linear regime selected by the last
    /// training forward pass: the sign of every rectifier input and the
    /// winner of every pooling window. Within one regime the network is
    /// smooth in its parameters. `None` without a cached pass.
    pub fn activation_pattern(&self) -> Option<u64> {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for layer in &self.layers {
            match (&layer.spec, &layer.cache.as_ref()?.1) {
                (LayerSpec::Relu | LayerSpec::LeakyRelu { .. }, Cache::Input(x)) => {
                    for chunk in x.chunks(64) {
                        let bits = chunk
                            .iter()
                            .enumerate()
                            .fold(0u64, |acc, (i, &v)| acc | (((v > F::zero()) as u64) << i));
                        bits.hash(&mut h);
                    }
                }
                (LayerSpec::MaxPool { .. }, Cache::Argmax(a)) => a.hash(&mut h),
                _ => {}
            }
        }
        Some(h.finish())
    }

    /// Drops cached activations (e.g. after an aborted step).
    pub fn clear_cache(&mut self) {
        for l in &mut self.layers {
            l.cache = None;
        }
    }
}

/// Forward of the layers whose output does not depend on the mode.
/// The returned cache variant is a tag; `Input` is filled in by the caller.
fn deterministic_forward<F: Float>(layer: &Layer<F>, x: &[F], n: usize) -> (Vec<F>, Cache<F>) {
    match layer.spec {
        LayerSpec::Conv { .. } => {
            let g = ConvGeom::from_spec(&layer.spec, layer.input, layer.output);
            let mut out = vec![F::zero(); n * layer.output.len()];
            layer::conv_forward(&g, x, n, &layer.params[0].value, &layer.params[1].value, &mut out);
            (out, Cache::Input(Vec::new()))
        }
        LayerSpec::MaxPool { k, stride } => {
            let Shape::Image {
                channels,
                height,
                width,
            } = layer.input
            else {
                unreachable!("validated at construction")
            };
            let len = n * layer.output.len();
            let (mut out, mut arg) = (vec![F::zero(); len], vec![0u32; len]);
            layer::maxpool_forward(x, n * channels, height, width, k, stride, &mut out, &mut arg);
            (out, Cache::Argmax(arg))
        }
        LayerSpec::LeakyRelu { slope } => {
            let s = F::lit(slope);
            let out = x.iter().map(|&v| if v > F::zero() { v } else { v * s }).collect();
            (out, Cache::Input(Vec::new()))
        }
        LayerSpec::Relu => {
            let out = x.iter().map(|&v| if v > F::zero() { v } else { F::zero() }).collect();
            (out, Cache::Input(Vec::new()))
        }
        LayerSpec::Linear { inputs, outputs } => {
            let mut out = vec![F::zero(); n * outputs];
            layer::linear_forward(
                x,
                n,
                inputs,
                outputs,
                &layer.params[0].value,
                &layer.params[1].value,
                &mut out,
            );
            (out, Cache::Input(Vec::new()))
        }
        LayerSpec::Reshape { .. } => (x.to_vec(), Cache::Passthrough),
        LayerSpec::LogSoftMax => {
            let classes = layer.input.len();
            let mut out = vec![F::zero(); x.len()];
            layer::log_softmax_rows(x, classes, &mut out);
            (out.clone(), Cache::Output(out))
        }
        LayerSpec::Dropout { .. }
        | LayerSpec::BatchFlip { .. }
        | LayerSpec::BatchNorm2d { .. }
        | LayerSpec::BatchNorm1d { .. } => unreachable!("mode-dependent layer"),
    }
}

fn flip_items<F: Float>(mut data: Vec<F>, shape: Shape, flips: &[bool]) -> Vec<F> {
    let Shape::Image {
        channels,
        height,
        width,
    } = shape
    else {
        unreachable!("flip requires images")
    };
    let item = channels * height * width;
    for (i, _) in flips.iter().enumerate().filter(|(_, &f)| f) {
        for row in data[i * item..(i + 1) * item].chunks_exact_mut(width) {
            row.reverse();
        }
    }
    data
}

/// With `need_dx == false` a convolution skips its input gradient and
/// returns an empty vector.
fn layer_backward<F: Float>(
    layer: &mut Layer<F>,
    cache: Cache<F>,
    dy: Vec<F>,
    n: usize,
    need_dx: bool,
) -> Result<Vec<F>> {
    let stale = || Error::State(format!("cache does not match layer {}", layer.spec));
    Ok(match (layer.spec, cache) {
        (LayerSpec::Conv { .. }, Cache::Input(x)) => {
            let g = ConvGeom::from_spec(&layer.spec, layer.input, layer.output);
            let mut dx = if need_dx { vec![F::zero(); x.len()] } else { Vec::new() };
            let (w, b) = layer.params.split_at_mut(1);
            let dx_arg = if need_dx { Some(dx.as_mut_slice()) } else { None };
            layer::conv_backward(&g, &x, n, &w[0].value, &dy, &mut w[0].grad, &mut b[0].grad, dx_arg);
            dx
        }
        (LayerSpec::MaxPool { .. }, Cache::Argmax(arg)) => {
            let mut dx = vec![F::zero(); n * layer.input.len()];
            layer::maxpool_backward(&dy, &arg, &mut dx);
            dx
        }
        (LayerSpec::LeakyRelu { slope }, Cache::Input(x)) => {
            let s = F::lit(slope);
            x.iter()
                .zip(&dy)
                .map(|(&v, &g)| if v > F::zero() { g } else { g * s })
                .collect()
        }
        (LayerSpec::Relu, Cache::Input(x)) => x
            .iter()
            .zip(&dy)
            .map(|(&v, &g)| if v > F::zero() { g } else { F::zero() })
            .collect(),
        (LayerSpec::Linear { inputs, outputs }, Cache::Input(x)) => {
            let mut dx = vec![F::zero(); n * inputs];
            let (w, b) = layer.params.split_at_mut(1);
            layer::linear_backward(
                &x,
                n,
                inputs,
                outputs,
                &w[0].value,
                &dy,
                &mut w[0].grad,
                &mut b[0].grad,
                Some(&mut dx),
            );
            dx
        }
        (LayerSpec::Dropout { .. }, Cache::Mask(mask)) => {
            dy.iter().zip(&mask).map(|(&g, &m)| g * m).collect()
        }
        (LayerSpec::Dropout { .. } | LayerSpec::Reshape { .. }, Cache::Passthrough) => dy,
        (LayerSpec::BatchFlip { .. }, Cache::Flips(flips)) => flip_items(dy, layer.input, &flips),
        (LayerSpec::LogSoftMax, Cache::Output(y)) => {
            let mut dx = vec![F::zero(); dy.len()];
            layer::log_softmax_backward(&y, &dy, layer.input.len(), &mut dx);
            dx
        }
        (
            LayerSpec::BatchNorm2d { features } | LayerSpec::BatchNorm1d { features },
            Cache::Norm { xhat, inv_std },
        ) => {
            let spatial = layer.input.len() / features;
            let mut dx = vec![F::zero(); dy.len()];
            let (g, b) = layer.params.split_at_mut(1);
            layer::batchnorm_backward(
                &dy,
                n,
                features,
                spatial,
                &g[0].value,
                &xhat,
                &inv_std,
                &mut g[0].grad,
                &mut b[0].grad,
                Some(&mut dx),
            );
            dx
        }
        _ => return Err(stale()),
    })
}
