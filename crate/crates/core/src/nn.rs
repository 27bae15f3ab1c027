//! Parameterized layers and their deterministic initialization.
//!
//! Every layer exposes `visit_params`, which walks its tensors in a
//! fixed order under hierarchical dot-separated paths. Checkpointing,
//! parameter counting, and the optimizer all rely on that order being
//! identical across constructions with the same configuration.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::tensor::{self, Element, Tensor};

/// Callback receiving every parameter with its full path.
pub type ParamVisitor<'a, T> = &'a mut dyn FnMut(String, &mut Tensor<T>);

/// Deterministic weight initializer.
///
/// Conv weights draw from a truncated normal (resampled beyond two
/// sigma) rescaled so the realized standard deviation matches
/// `gain / sqrt(fan_in)`; biases start at zero, layer-norm gains at one.
pub struct Initializer {
    rng: ChaCha8Rng,
    gain: f64,
}

/// Standard deviation of a unit normal truncated to [-2, 2].
const TRUNC_STD: f64 = 0.8796256610342398;

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Initializer { rng: ChaCha8Rng::seed_from_u64(seed), gain: 1.0 }
    }

    fn trunc_normal<T: Element>(&mut self, n: usize, std: f64) -> Vec<T> {
        let scale = std / TRUNC_STD;
        (0..n)
            .map(|_| {
                loop {
                    let z: f64 = self.rng.sample(StandardNormal);
                    if z.abs() <= 2.0 {
                        return T::from_f64(z * scale);
                    }
                }
            })
            .collect()
    }

    pub fn conv_weight<T: Element>(&mut self, shape: &[usize]) -> Result<Tensor<T>> {
        let fan_in: usize = shape[1..].iter().product();
        let std = self.gain / (fan_in as f64).sqrt();
        let n = shape.iter().product();
        Tensor::param(shape, self.trunc_normal(n, std))
    }

    pub fn zeros<T: Element>(&mut self, shape: &[usize]) -> Result<Tensor<T>> {
        let n = shape.iter().product();
        Tensor::param(shape, vec![T::zero(); n])
    }

    pub fn ones<T: Element>(&mut self, shape: &[usize]) -> Result<Tensor<T>> {
        let n = shape.iter().product();
        Tensor::param(shape, vec![T::one(); n])
    }
}

/// Standard 2D convolution layer.
pub struct Conv2d<T: Element> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Element> Conv2d<T> {
    pub fn new(
        init: &mut Initializer,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        Ok(Conv2d {
            weight: init.conv_weight(&[c_out, c_in, k, k])?,
            bias: init.zeros(&[c_out])?,
            stride,
            pad,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        tensor::conv2d(x, &self.weight, &self.bias, self.stride, self.pad)
    }

    pub fn visit_params(&mut self, prefix: &str, f: ParamVisitor<T>) {
        f(format!("{prefix}.weight"), &mut self.weight);
        f(format!("{prefix}.bias"), &mut self.bias);
    }
}

/// Depthwise 3x3-style convolution (one kernel per channel).
pub struct DwConv2d<T: Element> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Element> DwConv2d<T> {
    pub fn new(
        init: &mut Initializer,
        channels: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        Ok(DwConv2d {
            weight: init.conv_weight(&[channels, 1, k, k])?,
            bias: init.zeros(&[channels])?,
            stride,
            pad,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        tensor::depthwise_conv2d(x, &self.weight, &self.bias, self.stride, self.pad)
    }

    pub fn visit_params(&mut self, prefix: &str, f: ParamVisitor<T>) {
        f(format!("{prefix}.weight"), &mut self.weight);
        f(format!("{prefix}.bias"), &mut self.bias);
    }
}

/// Channel-axis layer normalization for `[C, H, W]` maps.
pub struct LayerNorm2d<T: Element> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub eps: f64,
}

impl<T: Element> LayerNorm2d<T> {
    pub fn new(init: &mut Initializer, channels: usize) -> Result<Self> {
        Ok(LayerNorm2d {
            gamma: init.ones(&[channels])?,
            beta: init.zeros(&[channels])?,
            eps: 1e-6,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        tensor::layer_norm(x, &self.gamma, &self.beta, self.eps)
    }

    pub fn visit_params(&mut self, prefix: &str, f: ParamVisitor<T>) {
        f(format!("{prefix}.gamma"), &mut self.gamma);
        f(format!("{prefix}.beta"), &mut self.beta);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_weights() {
        let mut a = Initializer::new(7);
        let mut b = Initializer::new(7);
        let wa: Tensor<f32> = a.conv_weight(&[8, 4, 3, 3]).unwrap();
        let wb: Tensor<f32> = b.conv_weight(&[8, 4, 3, 3]).unwrap();
        assert_eq!(wa.data(), wb.data());
    }

    #[test]
    fn trunc_normal_std_matches_target() {
        let mut init = Initializer::new(11);
        // fan_in = 64*3*3 = 576 -> std = 1/24
        let w: Tensor<f64> = init.conv_weight(&[32, 64, 3, 3]).unwrap();
        assert!(w.len() >= 10_000);
        let mean: f64 = w.data().iter().sum::<f64>() / w.len() as f64;
        let var: f64 = w.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w.len() as f64;
        let target = 1.0 / 24.0;
        let ratio = var.sqrt() / target;
        assert!((0.9..=1.1).contains(&ratio), "std ratio {ratio}");
        // truncation bound after rescale
        let bound = 2.0 * target / TRUNC_STD + 1e-12;
        assert!(w.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn layer_norm_initializes_gamma_to_one() {
        let mut init = Initializer::new(0);
        let ln: LayerNorm2d<f32> = LayerNorm2d::new(&mut init, 16).unwrap();
        assert!(ln.gamma.data().iter().all(|&v| v == 1.0));
        assert!(ln.beta.data().iter().all(|&v| v == 0.0));
    }
}
