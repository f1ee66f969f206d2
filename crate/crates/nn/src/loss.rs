use crate::error::{Error, Result};
use crate::float::Float;
use crate::layer::log_softmax_rows;
use crate::tensor::Tensor;

fn check_labels<F: Float>(t: &Tensor<F>, labels: &[usize]) -> Result<(usize, usize)> {
    if t.shape().len() != 2 {
        return Err(Error::Argument(format!("expected batch × classes, got {:?}", t.shape())));
    }
    let (n, classes) = (t.shape()[0], t.shape()[1]);
    if labels.len() != n {
        return Err(Error::Argument(format!("{} labels for a batch of {n}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Argument(format!("label {bad} out of range for {classes} classes")));
    }
    Ok((n, classes))
}

/// Mean negative log-likelihood of log-probabilities, with its gradient
/// (`−1/n` at each true class, zero elsewhere).
pub fn nll_loss<F: Float>(log_probs: &Tensor<F>, labels: &[usize]) -> Result<(f64, Tensor<F>)> {
    let (n, classes) = check_labels(log_probs, labels)?;
    let mut grad = Tensor::zeros(vec![n, classes]);
    let scale = F::lit(-1.0 / n as f64);
    let mut loss = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        loss -= log_probs.data()[i * classes + l].as_f64();
        grad.data_mut()[i * classes + l] = scale;
    }
    Ok((loss / n as f64, grad))
}

/// NLL of `log_softmax(logits)`; the gradient is `(softmax − onehot) / n`.
pub fn log_softmax_nll<F: Float>(logits: &Tensor<F>, labels: &[usize]) -> Result<(f64, Tensor<F>)> {
    let (n, classes) = check_labels(logits, labels)?;
    let mut lp = vec![F::zero(); logits.len()];
    log_softmax_rows(logits.data(), classes, &mut lp);
    let inv_n = F::lit(1.0 / n as f64);
    let mut loss = 0.0;
    let mut grad: Vec<F> = lp.iter().map(|v| v.exp() * inv_n).collect();
    for (i, &l) in labels.iter().enumerate() {
        loss -= lp[i * classes + l].as_f64();
        grad[i * classes + l] -= inv_n;
    }
    Ok((loss / n as f64, Tensor::new(vec![n, classes], grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_cases() {
        let perfect = Tensor::<f64>::from_f64(vec![2, 3], &[0.0, -50.0, -50.0, -50.0, -50.0, 0.0]).unwrap();
        assert_eq!(nll_loss(&perfect, &[0, 2]).unwrap().0, 0.0);
        let u = -(10f64).ln();
        let uniform = Tensor::<f64>::from_f64(vec![1, 10], &[u; 10]).unwrap();
        let (loss, grad) = nll_loss(&uniform, &[4]).unwrap();
        assert!((loss - 2.302585).abs() < 1e-6);
        assert_eq!(grad.data()[4], -1.0);
        assert_eq!(grad.data().iter().filter(|&&g| g != 0.0).count(), 1);
        assert!(nll_loss(&uniform, &[10]).is_err());
        assert!(nll_loss(&uniform, &[1, 2]).is_err());
    }

    fn central_difference(
        f: impl Fn(&Tensor<f64>) -> f64,
        x: &Tensor<f64>,
        eps: f64,
    ) -> Vec<f64> {
        (0..x.len())
            .map(|j| {
                let mut p = x.clone();
                p.data_mut()[j] += eps;
                let mut m = x.clone();
                m.data_mut()[j] -= eps;
                (f(&p) - f(&m)) / (2.0 * eps)
            })
            .collect()
    }

    #[test]
    fn gradients_match_central_differences() {
        let x = Tensor::<f64>::from_f64(vec![3, 4], &[0.3, -1.2, 2.0, 0.1, -0.5, 0.7, 0.2, -2.2, 1.5, 1.4, -0.1, 0.0])
            .unwrap();
        let labels = [2, 0, 3];
        let (_, g) = log_softmax_nll(&x, &labels).unwrap();
        let num = central_difference(|t| log_softmax_nll(t, &labels).unwrap().0, &x, 1e-5);
        for (a, n) in g.data().iter().zip(&num) {
            assert!((a - n).abs() < 1e-6, "{a} vs {n}");
        }
        let (_, g) = nll_loss(&x, &labels).unwrap();
        let num = central_difference(|t| nll_loss(t, &labels).unwrap().0, &x, 1e-5);
        for (a, n) in g.data().iter().zip(&num) {
            assert!((a - n).abs() < 1e-6, "{a} vs {n}");
        }
    }
}
