use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::layer::Shape;
use crate::network::Network;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub samples_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            epsilon: 1e-5,
            samples_per_tensor: 4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorCheck {
    pub layer: usize,
    pub layer_name: String,
    pub param: &'static str,
    pub samples: usize,
    /// Samples whose gradients are below [`RESOLUTION`]; compared by
    /// absolute error only.
    pub below_resolution: usize,
    /// Samples where no step down to [`MIN_EPSILON`] avoided a change of
    /// activation regime; excluded from the error maxima.
    pub nondifferentiable: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    /// Over every sample with a gradient above [`RESOLUTION`].
    pub max_rel_error: f64,
    pub below_resolution: usize,
    /// Largest `|analytic − numeric|` among below-resolution samples.
    pub max_abs_error_below_resolution: f64,
    pub nondifferentiable: usize,
    /// Samples whose step had to shrink to stay inside one regime.
    pub reduced_epsilon: usize,
    pub samples: usize,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    /// Relative error below `rel_tolerance` where it is meaningful, absolute
    /// error below [`ABS_TOLERANCE`] elsewhere, and at most a tenth of the
    /// samples lost to non-differentiable points.
    pub fn passes(&self, rel_tolerance: f64) -> bool {
        self.max_rel_error < rel_tolerance
            && self.max_abs_error_below_resolution < ABS_TOLERANCE
            && self.nondifferentiable * 10 <= self.samples
    }
}

/// In 64-bit arithmetic a central difference at `ε = 1e-5` resolves a
/// gradient to roughly `1e-11` absolute (the loss carries about one ulp of
/// noise), so a relative error of 1e-4 is only attainable above ~1e-7.
pub const RESOLUTION: f64 = 1e-7;
pub const ABS_TOLERANCE: f64 = 1e-9;
pub const MIN_EPSILON: f64 = 1e-8;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn loss_at(net: &mut Network<f64>, x: &Tensor<f64>, labels: &[usize]) -> Result<(f64, u64)> {
    let key = net.frozen_key().unwrap_or_default();
    let out = net.forward_train(x, key)?;
    let pattern = net.activation_pattern().expect("cached forward");
    net.clear_cache();
    Ok((net.loss(&out, labels)?.0, pattern))
}

/// Compares back-propagated gradients with central differences
/// `(L(θ+ε) − L(θ−ε)) / 2ε` on a sample of every parameter tensor.
/// Stochastic layers must be frozen first. When `θ ± ε` lands in a different
/// rectifier/pooling regime than `θ` the difference straddles a kink, so the
/// step is divided by ten until it does not.
pub fn gradient_check(
    net: &mut Network<f64>,
    x: &Tensor<f64>,
    labels: &[usize],
    config: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if net.has_stochastic_layers() && net.frozen_key().is_none() {
        return Err(Error::State(
            "gradient check needs frozen stochastic layers (call freeze_stochastic)".into(),
        ));
    }
    if !(config.epsilon > 0.0) {
        return Err(Error::Argument("epsilon must be positive".into()));
    }
    let key = net.frozen_key().unwrap_or_default();
    let out = net.forward_train(x, key)?;
    let base_pattern = net.activation_pattern().expect("cached forward");
    let (_, grad) = net.loss(&out, labels)?;
    net.backward(&grad)?;
    let analytic: Vec<Vec<Vec<f64>>> = net
        .layers()
        .iter()
        .map(|l| l.params().iter().map(|p| p.grad.clone()).collect())
        .collect();
    let specs = net.specs();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        below_resolution: 0,
        max_abs_error_below_resolution: 0.0,
        nondifferentiable: 0,
        reduced_epsilon: 0,
        samples: 0,
        tensors: Vec::new(),
    };
    for (li, layer_grads) in analytic.iter().enumerate() {
        for (pi, grads) in layer_grads.iter().enumerate() {
            let name = net.layers()[li].params()[pi].name;
            let k = config.samples_per_tensor.min(grads.len());
            let mut check = TensorCheck {
                layer: li,
                layer_name: specs[li].to_string(),
                param: name,
                samples: k,
                below_resolution: 0,
                nondifferentiable: 0,
                max_rel_error: 0.0,
                max_abs_error: 0.0,
            };
            for j in sample(&mut rng, grads.len(), k) {
                let orig = net.layers()[li].params()[pi].value[j];
                let mut eps = config.epsilon;
                let numeric = loop {
                    net.layers_mut()[li].params_mut()[pi].value[j] = orig + eps;
                    let (plus, p1) = loss_at(net, x, labels)?;
                    net.layers_mut()[li].params_mut()[pi].value[j] = orig - eps;
                    let (minus, p2) = loss_at(net, x, labels)?;
                    net.layers_mut()[li].params_mut()[pi].value[j] = orig;
                    if p1 == base_pattern && p2 == base_pattern {
                        break Some((plus - minus) / (2.0 * eps));
                    }
                    eps /= 10.0;
                    if eps < MIN_EPSILON {
                        break None;
                    }
                };
                if eps < config.epsilon {
                    report.reduced_epsilon += 1;
                }
                let Some(numeric) = numeric else {
                    check.nondifferentiable += 1;
                    continue;
                };
                let abs = (grads[j] - numeric).abs();
                check.max_abs_error = check.max_abs_error.max(abs);
                if grads[j].abs().max(numeric.abs()) < RESOLUTION {
                    check.below_resolution += 1;
                    report.max_abs_error_below_resolution = report.max_abs_error_below_resolution.max(abs);
                } else {
                    check.max_rel_error = check.max_rel_error.max(relative_error(grads[j], numeric));
                }
            }
            report.max_rel_error = report.max_rel_error.max(check.max_rel_error);
            report.below_resolution += check.below_resolution;
            report.nondifferentiable += check.nondifferentiable;
            report.samples += k;
            report.tensors.push(check);
        }
    }
    Ok(report)
}

/// Uniform `[0, 1)` inputs and uniform labels for checking a network.
pub fn random_batch(input: Shape, classes: usize, n: usize, seed: u64) -> (Tensor<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..n * input.len()).map(|_| rng.gen()).collect();
    let labels = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    (Tensor::new(input.with_batch(n), data).expect("shape matches"), labels)
}
