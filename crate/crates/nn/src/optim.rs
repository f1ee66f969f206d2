use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::network::Network;

/// Momentum SGD with inverse-time learning-rate decay and L2 weight decay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.01,
            lr_decay: 1e-7,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

impl SgdConfig {
    /// Settings used for the cifar10 preset, whose base rate is halved every 25 epochs.
    pub fn cifar() -> Self {
        SgdConfig {
            learning_rate: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.lr_decay >= 0.0
            && self.momentum >= 0.0
            && self.weight_decay >= 0.0
            && [self.learning_rate, self.lr_decay, self.momentum, self.weight_decay]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!("invalid SGD settings {self:?}")))
        }
    }

    pub fn effective_lr(&self, t: u64) -> f64 {
        self.learning_rate / (1.0 + t as f64 * self.lr_decay)
    }
}

/// `lr_t = lr / (1 + t·decay)`; `g = grad + wd·param` (weights only);
/// `v = momentum·v + g`; `param -= lr_t·v`.
pub fn sgd_step<F: Float>(net: &mut Network<F>, config: &SgdConfig, t: u64) {
    let lr = F::lit(config.effective_lr(t));
    let mom = F::lit(config.momentum);
    let wd = F::lit(config.weight_decay);
    for layer in net.layers_mut() {
        for p in layer.params_mut() {
            if p.velocity.len() != p.value.len() {
                p.velocity = vec![F::zero(); p.value.len()];
            }
            let decay = if p.decay { wd } else { F::zero() };
            for ((w, &g), v) in p.value.iter_mut().zip(&p.grad).zip(p.velocity.iter_mut()) {
                let g = g + decay * *w;
                *v = mom * *v + g;
                *w -= lr * *v;
            }
        }
    }
}

/// Base rate halved every 25 epochs.
pub fn lr_schedule_cifar(epoch: u64, base_lr: f64) -> f64 {
    base_lr * 0.5f64.powi((epoch / 25) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::{LayerSpec, Shape};

    fn scalar_net(w: f64, grad: f64) -> Network<f64> {
        let mut net = Network::new(Shape::Flat(1), vec![LayerSpec::Linear { inputs: 1, outputs: 1 }], 0).unwrap();
        let p = &mut net.layers_mut()[0].params_mut()[0];
        p.value[0] = w;
        p.grad[0] = grad;
        net.layers_mut()[0].params_mut()[1].grad[0] = 0.0;
        net
    }

    #[test]
    fn scalar_reference_step() {
        let mut net = scalar_net(1.0, 0.1);
        let cfg = SgdConfig {
            learning_rate: 0.01,
            lr_decay: 1e-7,
            momentum: 0.0,
            weight_decay: 5e-4,
        };
        sgd_step(&mut net, &cfg, 0);
        // 1 − 0.01 · (0.1 + 5e-4 · 1)
        let w = net.layers()[0].params()[0].value[0];
        assert!((w - 0.998995).abs() < 1e-12, "{w}");
        assert_eq!(cfg.effective_lr(0), cfg.learning_rate);
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut net = scalar_net(0.4, 0.0);
        let before = net.layers()[0].params()[1].value.clone();
        let cfg = SgdConfig {
            weight_decay: 0.0,
            ..SgdConfig::default()
        };
        sgd_step(&mut net, &cfg, 5);
        assert_eq!(net.layers()[0].params()[0].value[0], 0.4);
        assert_eq!(net.layers()[0].params()[1].value, before);
    }

    #[test]
    fn momentum_accumulates() {
        let mut net = scalar_net(0.0, 1.0);
        let cfg = SgdConfig {
            learning_rate: 1.0,
            lr_decay: 0.0,
            momentum: 0.9,
            weight_decay: 0.0,
        };
        sgd_step(&mut net, &cfg, 0);
        sgd_step(&mut net, &cfg, 1);
        // v1 = 1, v2 = 1.9 → w = −2.9
        assert!((net.layers()[0].params()[0].value[0] + 2.9).abs() < 1e-12);
    }

    #[test]
    fn cifar_schedule() {
        assert_eq!(lr_schedule_cifar(0, 1.0), 1.0);
        assert_eq!(lr_schedule_cifar(24, 1.0), 1.0);
        assert_eq!(lr_schedule_cifar(25, 1.0), 0.5);
        assert_eq!(lr_schedule_cifar(100, 1.0), 0.0625);
    }

    #[test]
    fn validation() {
        assert!(SgdConfig::default().validate().is_ok());
        assert!(SgdConfig { learning_rate: 0.0, ..SgdConfig::default() }.validate().is_err());
        assert!(SgdConfig { momentum: -0.1, ..SgdConfig::default() }.validate().is_err());
    }
}
