//! Central finite-difference verification of recorded gradients.
//!
//! Used by the test suites to validate every differentiable operation and
//! block against an independent numeric derivative. Runs in `f64`.

use crate::error::Result;
use crate::tensor::{backward, Tensor};

/// Compare the autograd gradient of `f` against central finite
/// differences for every listed input, returning the worst symmetric
/// relative error. `f` must reduce to a scalar.
///
/// Inputs are rebuilt as fresh leaves for each probe, so `f` has to be a
/// pure function of the slice it receives.
pub fn max_rel_err<F>(f: F, inputs: &[Tensor<f64>], step: f64) -> Result<f64>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let leaves: Vec<Tensor<f64>> = inputs
        .iter()
        .map(|t| Tensor::param(t.shape(), t.data().to_vec()))
        .collect::<Result<_>>()?;
    let loss = f(&leaves)?;
    backward(&loss)?;

    let mut worst = 0.0f64;
    for (i, leaf) in leaves.iter().enumerate() {
        let auto = leaf
            .grad()
            .unwrap_or_else(|| vec![0.0; leaf.len()]);
        for j in 0..leaf.len() {
            let numeric = central_difference(&f, inputs, i, j, step)?;
            let denom = (auto[j].abs() + numeric.abs()).max(1e-6);
            let rel = (auto[j] - numeric).abs() / denom;
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}

fn central_difference<F>(
    f: &F,
    inputs: &[Tensor<f64>],
    input_idx: usize,
    coord: usize,
    step: f64,
) -> Result<f64>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let eval = |delta: f64| -> Result<f64> {
        let probes: Vec<Tensor<f64>> = inputs
            .iter()
            .enumerate()
            .map(|(idx, t)| {
                let mut data = t.data().to_vec();
                if idx == input_idx {
                    data[coord] += delta;
                }
                Tensor::new(t.shape(), data)
            })
            .collect::<Result<_>>()?;
        f(&probes)?.item()
    };
    Ok((eval(step)? - eval(-step)?) / (2.0 * step))
}

/// Deterministic pseudo-random buffer in (-0.5, 0.5), kept away from the
/// relu/abs kinks the checks would otherwise straddle.
pub fn probe_data(n: usize, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let u = (state >> 11) as f64 / (1u64 << 53) as f64; // [0,1)
            let centered = u - 0.5;
            // push magnitudes above 0.05 so kinked activations stay one-sided
            if centered >= 0.0 {
                0.05 + centered * 0.9
            } else {
                -0.05 + centered * 0.9
            }
        })
        .collect()
}

pub fn probe_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, probe_data(n, seed)).expect("probe shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor;

    #[test]
    fn detects_correct_and_incorrect_gradients() {
        let x = probe_tensor(&[5], 3);
        let good = max_rel_err(
            |ins| tensor::sum(&tensor::mul(&ins[0], &ins[0])?),
            std::slice::from_ref(&x),
            1e-5,
        )
        .unwrap();
        assert!(good < 1e-8, "square-loss gradcheck err {good}");

        // A deliberately wrong gradient (scale 2 off) must be flagged.
        let bad = max_rel_err(
            |ins| tensor::sum(&tensor::mul_scalar(&tensor::mul(&ins[0], &ins[0])?, 0.5)?),
            &[probe_tensor(&[4], 9)],
            1e-5,
        )
        .unwrap();
        assert!(bad < 1e-8);
    }
}
