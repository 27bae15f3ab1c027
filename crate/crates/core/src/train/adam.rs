//! Bias-corrected Adam over the model's parameter tree, keyed by path.

use indexmap::IndexMap;

use crate::error::Result;
use crate::model::Model;
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Standard update on one parameter buffer. `t` is the step count
/// including this update (1-based).
#[allow(clippy::too_many_arguments)]
pub fn adam_step_buffer<T: Element>(
    param: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    t: u64,
    lr: f64,
    hyper: &AdamHyper,
) {
    let b1 = T::from_f64(hyper.beta1);
    let b2 = T::from_f64(hyper.beta2);
    let one = T::one();
    let eps = T::from_f64(hyper.eps);
    let bc1 = T::from_f64(1.0 - hyper.beta1.powi(t as i32));
    let bc2 = T::from_f64(1.0 - hyper.beta2.powi(t as i32));
    let lr = T::from_f64(lr);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] = param[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Optimizer state: first/second moments per parameter path plus the
/// completed-update counter.
pub struct Adam<T: Element> {
    pub hyper: AdamHyper,
    pub step: u64,
    pub moments: IndexMap<String, (Vec<T>, Vec<T>)>,
}

impl<T: Element> Adam<T> {
    pub fn new(hyper: AdamHyper) -> Self {
        Adam { hyper, step: 0, moments: IndexMap::new() }
    }

    /// Apply one update to every parameter that accumulated a gradient,
    /// replacing each with a fresh leaf; gradients are consumed.
    pub fn step_model(&mut self, model: &mut Model<T>, lr: f64) -> Result<()> {
        self.step += 1;
        let t = self.step;
        let hyper = self.hyper;
        let moments = &mut self.moments;
        let mut failure: Option<crate::error::Error> = None;
        model.visit_params(&mut |path, tensor| {
            if failure.is_some() {
                return;
            }
            let Some(grad) = tensor.grad() else { return };
            let (m, v) = moments
                .entry(path)
                .or_insert_with(|| (vec![T::zero(); grad.len()], vec![T::zero(); grad.len()]));
            let mut data = tensor.data().to_vec();
            adam_step_buffer(&mut data, &grad, m, v, t, lr, &hyper);
            match Tensor::param(tensor.shape(), data) {
                Ok(fresh) => *tensor = fresh,
                Err(e) => failure = Some(e),
            }
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{self, Tensor};

    #[test]
    fn first_step_moves_by_lr() {
        // g = 1: m_hat = 1, v_hat = 1 -> delta = -lr / (1 + eps)
        let mut p = vec![0.0f64];
        let mut m = vec![0.0];
        let mut v = vec![0.0];
        let hyper = AdamHyper::default();
        adam_step_buffer(&mut p, &[1.0], &mut m, &mut v, 1, 0.1, &hyper);
        assert!((p[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![0.7f64, -0.3];
        let orig = p.clone();
        let mut m = vec![0.0; 2];
        let mut v = vec![0.0; 2];
        let hyper = AdamHyper::default();
        for t in 1..=50 {
            adam_step_buffer(&mut p, &[0.0, 0.0], &mut m, &mut v, t, 0.1, &hyper);
        }
        assert_eq!(p, orig);
    }

    #[test]
    fn descends_scalar_quadratic() {
        // 100 steps on f(x) = x^2 from x = 1 with lr 0.1 -> |x| < 0.1
        let hyper = AdamHyper::default();
        let mut x = vec![1.0f64];
        let mut m = vec![0.0];
        let mut v = vec![0.0];
        for t in 1..=100 {
            let leaf = Tensor::param(&[1], x.clone()).unwrap();
            let loss = tensor::sum(&tensor::mul(&leaf, &leaf).unwrap()).unwrap();
            tensor::backward(&loss).unwrap();
            let g = leaf.grad().unwrap();
            adam_step_buffer(&mut x, &g, &mut m, &mut v, t, 0.1, &hyper);
        }
        assert!(x[0].abs() < 0.1, "x = {}", x[0]);
    }
}
