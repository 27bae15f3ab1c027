//! Spatial and frequency reconstruction losses. Both are mean-reduced so
//! the trade-off weight keeps its meaning across patch sizes.

use crate::error::{Error, Result};
use crate::tensor::{self, Element, Tensor};

/// Mean absolute error over all elements.
pub fn spatial_loss<T: Element>(pred: &Tensor<T>, gt: &Tensor<T>) -> Result<Tensor<T>> {
    if pred.shape() != gt.shape() {
        return Err(Error::shape(format!(
            "spatial_loss: {:?} vs {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    tensor::mean(&tensor::abs(&tensor::sub(pred, gt)?)?)
}

pub fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

/// Per-channel 2D FFT of both images (zero-padded to powers of two),
/// L1 over the concatenated real and imaginary parts, mean-reduced.
pub fn frequency_loss<T: Element>(pred: &Tensor<T>, gt: &Tensor<T>) -> Result<Tensor<T>> {
    if pred.shape() != gt.shape() {
        return Err(Error::shape(format!(
            "frequency_loss: {:?} vs {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    if pred.rank() != 3 {
        return Err(Error::shape(format!(
            "frequency_loss: expected [C, H, W], got {:?}",
            pred.shape()
        )));
    }
    let (c, h, w) = (pred.shape()[0], pred.shape()[1], pred.shape()[2]);
    let (ph, pw) = (next_pow2(h), next_pow2(w));

    let mut diffs = Vec::with_capacity(c);
    for ch in 0..c {
        let spectrum = |t: &Tensor<T>| -> Result<Tensor<T>> {
            let plane = tensor::slice(t, 0, ch, 1)?.reshape(&[h, w])?;
            let padded = tensor::pad(&plane, &[(0, ph - h), (0, pw - w)])?;
            tensor::fft2(&padded)
        };
        diffs.push(tensor::abs(&tensor::sub(&spectrum(pred)?, &spectrum(gt)?)?)?);
    }
    tensor::mean(&tensor::concat(&diffs, 0)?)
}

/// `L = L_sr + lambda * L_fr`.
pub fn total_loss<T: Element>(pred: &Tensor<T>, gt: &Tensor<T>, lambda: f64) -> Result<Tensor<T>> {
    let sr = spatial_loss(pred, gt)?;
    if lambda == 0.0 {
        return Ok(sr);
    }
    let fr = frequency_loss(pred, gt)?;
    tensor::add(&sr, &tensor::mul_scalar(&fr, lambda)?)
}

/// The (L, L_sr, L_fr) triple sharing one graph, for loop logging.
pub fn total_loss_parts<T: Element>(
    pred_losses_sr: &[Tensor<T>],
    pred_losses_fr: &[Tensor<T>],
    lambda: f64,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let stack_mean = |parts: &[Tensor<T>]| -> Result<Tensor<T>> {
        let cat = tensor::concat(parts, 0)?;
        tensor::mean(&cat)
    };
    let sr = stack_mean(pred_losses_sr)?;
    let fr = stack_mean(pred_losses_fr)?;
    let total = tensor::add(&sr, &tensor::mul_scalar(&fr, lambda)?)?;
    Ok((total, sr, fr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::probe_tensor;

    #[test]
    fn identical_inputs_give_zero() {
        let x = probe_tensor(&[3, 6, 6], 1);
        assert_eq!(spatial_loss(&x, &x).unwrap().item().unwrap(), 0.0);
        assert_eq!(frequency_loss(&x, &x).unwrap().item().unwrap(), 0.0);
        assert_eq!(total_loss(&x, &x, 0.01).unwrap().item().unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_spatial_loss() {
        let x = probe_tensor(&[2, 4, 4], 2);
        let y = x.add_scalar(0.5).unwrap();
        let l = spatial_loss(&y, &x).unwrap().item().unwrap();
        assert!((l - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spatial_loss_matches_direct_summation() {
        let a = probe_tensor(&[3, 5, 7], 3);
        let b = probe_tensor(&[3, 5, 7], 4);
        let l = spatial_loss(&a, &b).unwrap().item().unwrap();
        let direct: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / a.len() as f64;
        assert!((l - direct).abs() < 1e-7);
    }

    #[test]
    fn delta_against_zero_frequency_loss() {
        // single 2x2 channel, pred = delta at origin, gt = 0:
        // F(delta) is all-ones, so mean L1 over 8 real+imag entries = 0.5
        let mut delta = vec![0.0f64; 4];
        delta[0] = 1.0;
        let pred = Tensor::new(&[1, 2, 2], delta).unwrap();
        let gt = Tensor::zeros(&[1, 2, 2]);
        let l = frequency_loss(&pred, &gt).unwrap().item().unwrap();
        assert!((l - 0.5).abs() < 1e-12);
    }

    #[test]
    fn frequency_loss_symmetric() {
        let a = probe_tensor(&[2, 3, 5], 5);
        let b = probe_tensor(&[2, 3, 5], 6);
        let ab = frequency_loss(&a, &b).unwrap().item().unwrap();
        let ba = frequency_loss(&b, &a).unwrap().item().unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn lambda_composition() {
        let a = probe_tensor(&[1, 4, 4], 7);
        let b = probe_tensor(&[1, 4, 4], 8);
        let sr = spatial_loss(&a, &b).unwrap().item().unwrap();
        let fr = frequency_loss(&a, &b).unwrap().item().unwrap();
        let t = total_loss(&a, &b, 0.01).unwrap().item().unwrap();
        assert!((t - (sr + 0.01 * fr)).abs() < 1e-12);
        let t0 = total_loss(&a, &b, 0.0).unwrap().item().unwrap();
        assert_eq!(t0, sr);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = probe_tensor(&[1, 4, 4], 9);
        let b = probe_tensor(&[1, 4, 8], 10);
        assert!(spatial_loss(&a, &b).is_err());
        assert!(frequency_loss(&a, &b).is_err());
    }

    use crate::tensor::Tensor;
}
