//! Normalization and gating primitives.

use rayon::prelude::*;

use super::expect_rank;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Layer normalization over the channel axis of a `[C, H, W]` tensor,
/// applied independently at each spatial position. Population variance.
pub fn layer_norm<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    expect_rank("layer_norm", x, 3)?;
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape(format!(
            "layer_norm: gamma {:?} / beta {:?} against {c} channels",
            gamma.shape(),
            beta.shape()
        )));
    }
    if eps <= 0.0 {
        return Err(Error::config("layer_norm: eps must be positive".to_string()));
    }
    let eps_t = T::from_f64(eps);
    let plane = h * w;
    let inv_c = T::one() / T::from_usize(c);

    let xs = x.data();
    let gs = gamma.data();
    let bs = beta.data();
    // Channel-outer sweeps keep every pass sequential in memory; the
    // per-position stats live in plane-sized scratch buffers.
    let (mean, inv_std) = plane_stats(xs, c, plane, inv_c, eps_t);
    let mut out = vec![T::zero(); xs.len()];
    for ch in 0..c {
        let (gch, bch) = (gs[ch], bs[ch]);
        let src = &xs[ch * plane..(ch + 1) * plane];
        let dst = &mut out[ch * plane..(ch + 1) * plane];
        for p in 0..plane {
            dst[p] = gch * (src[p] - mean[p]) * inv_std[p] + bch;
        }
    }

    Ok(Tensor::from_op(
        "layer_norm",
        x.shape().to_vec(),
        out,
        vec![x.clone(), gamma.clone(), beta.clone()],
        move |g, parents| {
            let xs = parents[0].data();
            let gs = parents[1].data();
            let want_x = parents[0].requires_grad();
            let want_gamma = parents[1].requires_grad();
            let want_beta = parents[2].requires_grad();

            let (mean, inv_std) = plane_stats(xs, c, plane, inv_c, eps_t);
            let mut ggamma = want_gamma.then(|| vec![T::zero(); c]);
            let mut gbeta = want_beta.then(|| vec![T::zero(); c]);
            // per-position reductions over channels
            let mut m1 = vec![T::zero(); plane];
            let mut m2 = vec![T::zero(); plane];
            for ch in 0..c {
                let gch = gs[ch];
                let src = &xs[ch * plane..(ch + 1) * plane];
                let gy = &g[ch * plane..(ch + 1) * plane];
                let mut acc_gamma = T::zero();
                let mut acc_beta = T::zero();
                for p in 0..plane {
                    let xhat = (src[p] - mean[p]) * inv_std[p];
                    m1[p] += gy[p] * gch;
                    m2[p] += gy[p] * gch * xhat;
                    acc_gamma += gy[p] * xhat;
                    acc_beta += gy[p];
                }
                if let Some(gg) = ggamma.as_mut() {
                    gg[ch] = acc_gamma;
                }
                if let Some(gb) = gbeta.as_mut() {
                    gb[ch] = acc_beta;
                }
            }
            let gx = want_x.then(|| {
                for p in 0..plane {
                    m1[p] = m1[p] * inv_c;
                    m2[p] = m2[p] * inv_c;
                }
                let mut gx = vec![T::zero(); xs.len()];
                for ch in 0..c {
                    let gch = gs[ch];
                    let src = &xs[ch * plane..(ch + 1) * plane];
                    let gy = &g[ch * plane..(ch + 1) * plane];
                    let dst = &mut gx[ch * plane..(ch + 1) * plane];
                    for p in 0..plane {
                        let xhat = (src[p] - mean[p]) * inv_std[p];
                        dst[p] = (gy[p] * gch - m1[p] - xhat * m2[p]) * inv_std[p];
                    }
                }
                gx
            });
            vec![gx, ggamma, gbeta]
        },
    ))
}

/// Mean and 1/sqrt(var + eps) per spatial position, population variance.
fn plane_stats<T: Element>(
    xs: &[T],
    c: usize,
    plane: usize,
    inv_c: T,
    eps: T,
) -> (Vec<T>, Vec<T>) {
    let mut mean = vec![T::zero(); plane];
    for ch in 0..c {
        let src = &xs[ch * plane..(ch + 1) * plane];
        for p in 0..plane {
            mean[p] += src[p];
        }
    }
    for m in &mut mean {
        *m = *m * inv_c;
    }
    let mut var = vec![T::zero(); plane];
    for ch in 0..c {
        let src = &xs[ch * plane..(ch + 1) * plane];
        for p in 0..plane {
            let d = src[p] - mean[p];
            var[p] += d * d;
        }
    }
    for v in &mut var {
        *v = T::one() / (*v * inv_c + eps).sqrt();
    }
    (mean, var)
}

/// Numerically stable softmax along `axis`.
pub fn softmax<T: Element>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let shape = x.shape();
    if axis >= shape.len() {
        return Err(Error::shape(format!(
            "softmax: axis {axis} out of rank {}",
            shape.len()
        )));
    }
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();

    let xs = x.data();
    let mut out = vec![T::zero(); xs.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            let mut mx = xs[base];
            for j in 1..n {
                mx = mx.max(xs[base + j * inner]);
            }
            let mut denom = T::zero();
            for j in 0..n {
                let e = (xs[base + j * inner] - mx).exp();
                out[base + j * inner] = e;
                denom += e;
            }
            let inv = T::one() / denom;
            for j in 0..n {
                out[base + j * inner] *= inv;
            }
        }
    }

    let saved = out.clone();
    Ok(Tensor::from_op(
        "softmax",
        shape.to_vec(),
        out,
        vec![x.clone()],
        move |g, _| {
            let y = &saved;
            let mut gx = vec![T::zero(); y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * n * inner + i;
                    let mut dot = T::zero();
                    for j in 0..n {
                        dot += g[base + j * inner] * y[base + j * inner];
                    }
                    for j in 0..n {
                        let idx = base + j * inner;
                        gx[idx] = y[idx] * (g[idx] - dot);
                    }
                }
            }
            vec![Some(gx)]
        },
    ))
}

/// Multiply each channel plane of `x` `[C, H, W]` by the matching entry of
/// `s` `[C, 1, 1]` (the squeeze-excitation gate).
pub fn scale_channels<T: Element>(x: &Tensor<T>, s: &Tensor<T>) -> Result<Tensor<T>> {
    expect_rank("scale_channels", x, 3)?;
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if s.len() != c {
        return Err(Error::shape(format!(
            "scale_channels: gate of {} entries against {c} channels",
            s.len()
        )));
    }
    let plane = h * w;
    let xs = x.data();
    let ss = s.data();
    let mut out = vec![T::zero(); xs.len()];
    out.par_chunks_mut(plane).enumerate().for_each(|(ch, dst)| {
        let sv = ss[ch];
        for (d, &xv) in dst.iter_mut().zip(&xs[ch * plane..(ch + 1) * plane]) {
            *d = sv * xv;
        }
    });
    Ok(Tensor::from_op(
        "scale_channels",
        x.shape().to_vec(),
        out,
        vec![x.clone(), s.clone()],
        move |g, parents| {
            let xs = parents[0].data();
            let ss = parents[1].data();
            let gx = parents[0].requires_grad().then(|| {
                let mut gx = vec![T::zero(); xs.len()];
                for ch in 0..c {
                    let sv = ss[ch];
                    for p in 0..plane {
                        gx[ch * plane + p] = g[ch * plane + p] * sv;
                    }
                }
                gx
            });
            let gs = parents[1].requires_grad().then(|| {
                (0..c)
                    .map(|ch| {
                        let mut acc = T::zero();
                        for p in 0..plane {
                            acc += g[ch * plane + p] * xs[ch * plane + p];
                        }
                        acc
                    })
                    .collect()
            });
            vec![gx, gs]
        },
    ))
}
