//! Convolutions (cross-correlation convention) and matrix product.

use rayon::prelude::*;

use super::expect_rank;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub fn matmul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    expect_rank("matmul", a, 2)?;
    expect_rank("matmul", b, 2)?;
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let (k2, n) = (b.shape()[0], b.shape()[1]);
    if k != k2 {
        return Err(Error::shape(format!("matmul: [{m},{k}] x [{k2},{n}]")));
    }
    let data = matmul_raw(a.data(), b.data(), m, k, n);
    Ok(Tensor::from_op(
        "matmul",
        vec![m, n],
        data,
        vec![a.clone(), b.clone()],
        move |g, parents| {
            let a = parents[0].data();
            let b = parents[1].data();
            let ga = parents[0].requires_grad().then(|| {
                // g [m,n] * b^T [n,k]
                let bt = transpose_raw(b, k, n);
                matmul_raw(g, &bt, m, n, k)
            });
            let gb = parents[1].requires_grad().then(|| {
                let at = transpose_raw(a, m, k);
                matmul_raw(&at, g, k, m, n)
            });
            vec![ga, gb]
        },
    ))
}

fn matmul_raw<T: Element>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    });
    out
}

fn transpose_raw<T: Element>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

fn conv_out_extent(in_extent: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if in_extent + 2 * pad < k {
        return Err(Error::size(format!(
            "convolution: input extent {in_extent} with pad {pad} is smaller than kernel {k}"
        )));
    }
    Ok((in_extent + 2 * pad - k) / stride + 1)
}

/// 2D cross-correlation with zero padding.
///
/// `x` is `[C_in, H, W]`, `weight` is `[C_out, C_in, kh, kw]`, `bias` is
/// `[C_out]`. Output extent is `(H + 2 pad - kh) / stride + 1` (floor).
pub fn conv2d<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    expect_rank("conv2d", x, 3)?;
    expect_rank("conv2d", weight, 4)?;
    let (c_in, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (c_out, wc_in, kh, kw) = (
        weight.shape()[0],
        weight.shape()[1],
        weight.shape()[2],
        weight.shape()[3],
    );
    if wc_in != c_in {
        return Err(Error::config(format!(
            "conv2d: input has {c_in} channels, weight expects {wc_in}"
        )));
    }
    if bias.shape() != [c_out] {
        return Err(Error::config(format!(
            "conv2d: bias shape {:?}, expected [{c_out}]",
            bias.shape()
        )));
    }
    if stride == 0 {
        return Err(Error::config("conv2d: stride must be positive".to_string()));
    }
    let oh = conv_out_extent(h, kh, stride, pad)?;
    let ow = conv_out_extent(w, kw, stride, pad)?;

    let xs = x.data();
    let ws = weight.data();
    let bs = bias.data();
    let mut out = vec![T::zero(); c_out * oh * ow];
    out.par_chunks_mut(oh * ow).enumerate().for_each(|(co, plane)| {
        plane.fill(bs[co]);
        for ci in 0..c_in {
            let xplane = &xs[ci * h * w..(ci + 1) * h * w];
            let wbase = ((co * c_in + ci) * kh) * kw;
            accumulate_correlation(plane, xplane, &ws[wbase..wbase + kh * kw], h, w, kh, kw, oh, ow, stride, pad);
        }
    });

    let dims = ConvDims { c_in, h, w, c_out, kh, kw, oh, ow, stride, pad };
    Ok(Tensor::from_op(
        "conv2d",
        vec![c_out, oh, ow],
        out,
        vec![x.clone(), weight.clone(), bias.clone()],
        move |g, parents| conv2d_backward(g, parents, &dims),
    ))
}

#[derive(Clone, Copy)]
struct ConvDims {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

/// plane[oy, ox] += sum_{ky,kx} kernel[ky,kx] * xplane[oy*s+ky-p, ox*s+kx-p]
#[allow(clippy::too_many_arguments)]
fn accumulate_correlation<T: Element>(
    plane: &mut [T],
    xplane: &[T],
    kernel: &[T],
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
) {
    for ky in 0..kh {
        for kx in 0..kw {
            let kv = kernel[ky * kw + kx];
            if kv == T::zero() {
                continue;
            }
            let (oy0, oy1) = valid_range(ky, pad, stride, h, oh);
            let (ox0, ox1) = valid_range(kx, pad, stride, w, ow);
            for oy in oy0..oy1 {
                let iy = oy * stride + ky - pad;
                let row = &xplane[iy * w..(iy + 1) * w];
                let dst = &mut plane[oy * ow..(oy + 1) * ow];
                if stride == 1 {
                    let ix0 = ox0 + kx - pad;
                    for (d, &xv) in dst[ox0..ox1].iter_mut().zip(&row[ix0..ix0 + (ox1 - ox0)]) {
                        *d += kv * xv;
                    }
                } else {
                    for ox in ox0..ox1 {
                        dst[ox] += kv * row[ox * stride + kx - pad];
                    }
                }
            }
        }
    }
}

/// Output positions whose tap `k` lands inside an input extent of `n`.
fn valid_range(k: usize, pad: usize, stride: usize, n: usize, out_n: usize) -> (usize, usize) {
    let start = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    // o*stride + k - pad <= n - 1
    let end = if n + pad > k {
        ((n - 1 + pad - k) / stride + 1).min(out_n)
    } else {
        0
    };
    (start.min(end), end)
}

fn conv2d_backward<T: Element>(
    g: &[T],
    parents: &[Tensor<T>],
    d: &ConvDims,
) -> Vec<Option<Vec<T>>> {
    let xs = parents[0].data();
    let ws = parents[1].data();

    let gx = parents[0].requires_grad().then(|| {
        let mut gx = vec![T::zero(); d.c_in * d.h * d.w];
        gx.par_chunks_mut(d.h * d.w).enumerate().for_each(|(ci, xplane)| {
            for co in 0..d.c_out {
                let gplane = &g[co * d.oh * d.ow..(co + 1) * d.oh * d.ow];
                let wbase = ((co * d.c_in + ci) * d.kh) * d.kw;
                scatter_input_grad(xplane, gplane, &ws[wbase..wbase + d.kh * d.kw], d);
            }
        });
        gx
    });

    let gw = parents[1].requires_grad().then(|| {
        let mut gw = vec![T::zero(); d.c_out * d.c_in * d.kh * d.kw];
        gw.par_chunks_mut(d.c_in * d.kh * d.kw)
            .enumerate()
            .for_each(|(co, wslab)| {
                let gplane = &g[co * d.oh * d.ow..(co + 1) * d.oh * d.ow];
                for ci in 0..d.c_in {
                    let xplane = &xs[ci * d.h * d.w..(ci + 1) * d.h * d.w];
                    kernel_grad(&mut wslab[ci * d.kh * d.kw..(ci + 1) * d.kh * d.kw], xplane, gplane, d);
                }
            });
        gw
    });

    let gb = parents[2].requires_grad().then(|| {
        (0..d.c_out)
            .map(|co| {
                let mut acc = T::zero();
                for &v in &g[co * d.oh * d.ow..(co + 1) * d.oh * d.ow] {
                    acc += v;
                }
                acc
            })
            .collect()
    });

    vec![gx, gw, gb]
}

fn scatter_input_grad<T: Element>(xgrad: &mut [T], gplane: &[T], kernel: &[T], d: &ConvDims) {
    for ky in 0..d.kh {
        for kx in 0..d.kw {
            let kv = kernel[ky * d.kw + kx];
            if kv == T::zero() {
                continue;
            }
            let (oy0, oy1) = valid_range(ky, d.pad, d.stride, d.h, d.oh);
            let (ox0, ox1) = valid_range(kx, d.pad, d.stride, d.w, d.ow);
            for oy in oy0..oy1 {
                let iy = oy * d.stride + ky - d.pad;
                let grow = &gplane[oy * d.ow..(oy + 1) * d.ow];
                let xrow = &mut xgrad[iy * d.w..(iy + 1) * d.w];
                if d.stride == 1 {
                    let ix0 = ox0 + kx - d.pad;
                    for (xv, &gv) in xrow[ix0..ix0 + (ox1 - ox0)].iter_mut().zip(&grow[ox0..ox1]) {
                        *xv += kv * gv;
                    }
                } else {
                    for ox in ox0..ox1 {
                        xrow[ox * d.stride + kx - d.pad] += kv * grow[ox];
                    }
                }
            }
        }
    }
}

fn kernel_grad<T: Element>(kgrad: &mut [T], xplane: &[T], gplane: &[T], d: &ConvDims) {
    for ky in 0..d.kh {
        for kx in 0..d.kw {
            let (oy0, oy1) = valid_range(ky, d.pad, d.stride, d.h, d.oh);
            let (ox0, ox1) = valid_range(kx, d.pad, d.stride, d.w, d.ow);
            let mut acc = T::zero();
            for oy in oy0..oy1 {
                let iy = oy * d.stride + ky - d.pad;
                let grow = &gplane[oy * d.ow..(oy + 1) * d.ow];
                let xrow = &xplane[iy * d.w..(iy + 1) * d.w];
                if d.stride == 1 {
                    let ix0 = ox0 + kx - d.pad;
                    for (&gv, &xv) in grow[ox0..ox1].iter().zip(&xrow[ix0..ix0 + (ox1 - ox0)]) {
                        acc += gv * xv;
                    }
                } else {
                    for ox in ox0..ox1 {
                        acc += grow[ox] * xrow[ox * d.stride + kx - d.pad];
                    }
                }
            }
            kgrad[ky * d.kw + kx] += acc;
        }
    }
}

/// Per-channel convolution: `weight` is `[C, 1, kh, kw]` and output
/// channel `c` depends only on input channel `c`.
pub fn depthwise_conv2d<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    expect_rank("depthwise_conv2d", x, 3)?;
    expect_rank("depthwise_conv2d", weight, 4)?;
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if weight.shape()[0] != c || weight.shape()[1] != 1 {
        return Err(Error::config(format!(
            "depthwise_conv2d: weight {:?} does not match {c} input channels",
            weight.shape()
        )));
    }
    if bias.shape() != [c] {
        return Err(Error::config(format!(
            "depthwise_conv2d: bias shape {:?}, expected [{c}]",
            bias.shape()
        )));
    }
    let (kh, kw) = (weight.shape()[2], weight.shape()[3]);
    let oh = conv_out_extent(h, kh, stride, pad)?;
    let ow = conv_out_extent(w, kw, stride, pad)?;

    let xs = x.data();
    let ws = weight.data();
    let bs = bias.data();
    let mut out = vec![T::zero(); c * oh * ow];
    out.par_chunks_mut(oh * ow).enumerate().for_each(|(ci, plane)| {
        plane.fill(bs[ci]);
        let xplane = &xs[ci * h * w..(ci + 1) * h * w];
        accumulate_correlation(plane, xplane, &ws[ci * kh * kw..(ci + 1) * kh * kw], h, w, kh, kw, oh, ow, stride, pad);
    });

    let dims = ConvDims { c_in: 1, h, w, c_out: 1, kh, kw, oh, ow, stride, pad };
    Ok(Tensor::from_op(
        "depthwise_conv2d",
        vec![c, oh, ow],
        out,
        vec![x.clone(), weight.clone(), bias.clone()],
        move |g, parents| {
            let xs = parents[0].data();
            let ws = parents[1].data();
            let d = &dims;
            let gx = parents[0].requires_grad().then(|| {
                let mut gx = vec![T::zero(); c * d.h * d.w];
                gx.par_chunks_mut(d.h * d.w).enumerate().for_each(|(ci, xplane)| {
                    let gplane = &g[ci * d.oh * d.ow..(ci + 1) * d.oh * d.ow];
                    scatter_input_grad(xplane, gplane, &ws[ci * d.kh * d.kw..(ci + 1) * d.kh * d.kw], d);
                });
                gx
            });
            let gw = parents[1].requires_grad().then(|| {
                let mut gw = vec![T::zero(); c * d.kh * d.kw];
                gw.par_chunks_mut(d.kh * d.kw).enumerate().for_each(|(ci, kgrad)| {
                    let gplane = &g[ci * d.oh * d.ow..(ci + 1) * d.oh * d.ow];
                    let xplane = &xs[ci * d.h * d.w..(ci + 1) * d.h * d.w];
                    kernel_grad(kgrad, xplane, gplane, d);
                });
                gw
            });
            let gb = parents[2].requires_grad().then(|| {
                (0..c)
                    .map(|ci| {
                        let mut acc = T::zero();
                        for &v in &g[ci * d.oh * d.ow..(ci + 1) * d.oh * d.ow] {
                            acc += v;
                        }
                        acc
                    })
                    .collect()
            });
            vec![gx, gw, gb]
        },
    ))
}
