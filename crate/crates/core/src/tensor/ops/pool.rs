//! Pooling and resampling over `[C, H, W]` tensors.

use super::expect_rank;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Average pooling to an arbitrary output grid; window `i` covers input
/// rows `[floor(i*H/oh), ceil((i+1)*H/oh))`.
pub fn adaptive_avg_pool2d<T: Element>(x: &Tensor<T>, oh: usize, ow: usize) -> Result<Tensor<T>> {
    expect_rank("adaptive_avg_pool2d", x, 3)?;
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if oh == 0 || ow == 0 || oh > h || ow > w {
        return Err(Error::size(format!(
            "adaptive_avg_pool2d: output {oh}x{ow} from input {h}x{w}"
        )));
    }
    let ybounds = window_bounds(h, oh);
    let xbounds = window_bounds(w, ow);

    let xs = x.data();
    let mut out = vec![T::zero(); c * oh * ow];
    for ch in 0..c {
        let plane = &xs[ch * h * w..(ch + 1) * h * w];
        for (oy, &(y0, y1)) in ybounds.iter().enumerate() {
            for (ox, &(x0, x1)) in xbounds.iter().enumerate() {
                let mut acc = T::zero();
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        acc += plane[iy * w + ix];
                    }
                }
                let count = T::from_usize((y1 - y0) * (x1 - x0));
                out[(ch * oh + oy) * ow + ox] = acc / count;
            }
        }
    }

    let yb = ybounds.clone();
    let xb = xbounds.clone();
    Ok(Tensor::from_op(
        "adaptive_avg_pool2d",
        vec![c, oh, ow],
        out,
        vec![x.clone()],
        move |g, parents| {
            let mut gx = vec![T::zero(); parents[0].len()];
            for ch in 0..c {
                for (oy, &(y0, y1)) in yb.iter().enumerate() {
                    for (ox, &(x0, x1)) in xb.iter().enumerate() {
                        let share = g[(ch * oh + oy) * ow + ox]
                            / T::from_usize((y1 - y0) * (x1 - x0));
                        for iy in y0..y1 {
                            for ix in x0..x1 {
                                gx[(ch * h + iy) * w + ix] += share;
                            }
                        }
                    }
                }
            }
            vec![Some(gx)]
        },
    ))
}

fn window_bounds(n: usize, out_n: usize) -> Vec<(usize, usize)> {
    (0..out_n)
        .map(|i| (i * n / out_n, ((i + 1) * n).div_ceil(out_n)))
        .collect()
}

/// Max pooling with explicit kernel and stride, no padding. Ties resolve
/// to the first element in scan order.
pub fn max_pool2d<T: Element>(x: &Tensor<T>, k: usize, stride: usize) -> Result<Tensor<T>> {
    expect_rank("max_pool2d", x, 3)?;
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if k == 0 || stride == 0 {
        return Err(Error::config("max_pool2d: kernel and stride must be positive".to_string()));
    }
    if h < k || w < k {
        return Err(Error::size(format!(
            "max_pool2d: input {h}x{w} smaller than {k}x{k} window"
        )));
    }
    let oh = (h - k) / stride + 1;
    let ow = (w - k) / stride + 1;

    let xs = x.data();
    let mut out = vec![T::zero(); c * oh * ow];
    let mut argmax = vec![0usize; c * oh * ow];
    for ch in 0..c {
        let plane = &xs[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = plane[oy * stride * w + ox * stride];
                let mut best_idx = oy * stride * w + ox * stride;
                for ky in 0..k {
                    for kx in 0..k {
                        let idx = (oy * stride + ky) * w + ox * stride + kx;
                        if plane[idx] > best {
                            best = plane[idx];
                            best_idx = idx;
                        }
                    }
                }
                out[(ch * oh + oy) * ow + ox] = best;
                argmax[(ch * oh + oy) * ow + ox] = ch * h * w + best_idx;
            }
        }
    }

    Ok(Tensor::from_op(
        "max_pool2d",
        vec![c, oh, ow],
        out,
        vec![x.clone()],
        move |g, parents| {
            let mut gx = vec![T::zero(); parents[0].len()];
            for (i, &src) in argmax.iter().enumerate() {
                gx[src] += g[i];
            }
            vec![Some(gx)]
        },
    ))
}

/// Nearest-neighbour resize: output pixel `(y, x)` reads input
/// `(floor(y*H/oh), floor(x*W/ow))`.
pub fn upsample_nearest<T: Element>(x: &Tensor<T>, oh: usize, ow: usize) -> Result<Tensor<T>> {
    expect_rank("upsample_nearest", x, 3)?;
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if oh == 0 || ow == 0 {
        return Err(Error::size("upsample_nearest: empty output".to_string()));
    }
    let ymap: Vec<usize> = (0..oh).map(|y| y * h / oh).collect();
    let xmap: Vec<usize> = (0..ow).map(|x| x * w / ow).collect();

    let xs = x.data();
    let mut out = vec![T::zero(); c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                out[(ch * oh + oy) * ow + ox] = xs[(ch * h + ymap[oy]) * w + xmap[ox]];
            }
        }
    }
    let (ym, xm) = (ymap, xmap);
    Ok(Tensor::from_op(
        "upsample_nearest",
        vec![c, oh, ow],
        out,
        vec![x.clone()],
        move |g, parents| {
            let mut gx = vec![T::zero(); parents[0].len()];
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        gx[(ch * h + ym[oy]) * w + xm[ox]] += g[(ch * oh + oy) * ow + ox];
                    }
                }
            }
            vec![Some(gx)]
        },
    ))
}

/// Bilinear resize with half-pixel centres (`align_corners = false`).
pub fn upsample_bilinear<T: Element>(x: &Tensor<T>, oh: usize, ow: usize) -> Result<Tensor<T>> {
    expect_rank("upsample_bilinear", x, 3)?;
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if oh == 0 || ow == 0 {
        return Err(Error::size("upsample_bilinear: empty output".to_string()));
    }
    let ytaps = bilinear_taps(h, oh);
    let xtaps = bilinear_taps(w, ow);

    let xs = x.data();
    let mut out = vec![T::zero(); c * oh * ow];
    for ch in 0..c {
        let plane = &xs[ch * h * w..(ch + 1) * h * w];
        for (oy, &(y0, y1, wy)) in ytaps.iter().enumerate() {
            for (ox, &(x0, x1, wx)) in xtaps.iter().enumerate() {
                let wy1 = T::from_f64(wy);
                let wy0 = T::one() - wy1;
                let wx1 = T::from_f64(wx);
                let wx0 = T::one() - wx1;
                let v = wy0 * (wx0 * plane[y0 * w + x0] + wx1 * plane[y0 * w + x1])
                    + wy1 * (wx0 * plane[y1 * w + x0] + wx1 * plane[y1 * w + x1]);
                out[(ch * oh + oy) * ow + ox] = v;
            }
        }
    }
    let (yt, xt) = (ytaps, xtaps);
    Ok(Tensor::from_op(
        "upsample_bilinear",
        vec![c, oh, ow],
        out,
        vec![x.clone()],
        move |g, parents| {
            let mut gx = vec![T::zero(); parents[0].len()];
            for ch in 0..c {
                let base = ch * h * w;
                for (oy, &(y0, y1, wy)) in yt.iter().enumerate() {
                    for (ox, &(x0, x1, wx)) in xt.iter().enumerate() {
                        let gv = g[(ch * oh + oy) * ow + ox];
                        let wy1 = T::from_f64(wy);
                        let wy0 = T::one() - wy1;
                        let wx1 = T::from_f64(wx);
                        let wx0 = T::one() - wx1;
                        gx[base + y0 * w + x0] += gv * wy0 * wx0;
                        gx[base + y0 * w + x1] += gv * wy0 * wx1;
                        gx[base + y1 * w + x0] += gv * wy1 * wx0;
                        gx[base + y1 * w + x1] += gv * wy1 * wx1;
                    }
                }
            }
            vec![Some(gx)]
        },
    ))
}

/// (low index, high index, weight of high) per output coordinate.
fn bilinear_taps(n: usize, out_n: usize) -> Vec<(usize, usize, f64)> {
    (0..out_n)
        .map(|i| {
            let src = ((i as f64 + 0.5) * n as f64 / out_n as f64 - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(n - 1);
            let hi = (lo + 1).min(n - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use crate::tensor::{self, Tensor};

    #[test]
    fn adaptive_pool_to_one_is_mean() {
        let x = Tensor::<f64>::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        let y = tensor::adaptive_avg_pool2d(&x, 1, 1).unwrap();
        assert_eq!(y.data(), &[3.0]);
    }

    #[test]
    fn max_pool_picks_maximum() {
        let x = Tensor::<f64>::new(&[1, 2, 2], vec![1.0, 5.0, 3.0, 2.0]).unwrap();
        let y = tensor::max_pool2d(&x, 2, 1).unwrap();
        assert_eq!(y.data(), &[5.0]);
    }

    #[test]
    fn max_pool_too_small_errors() {
        let x = Tensor::<f64>::zeros(&[1, 3, 3]);
        assert!(tensor::max_pool2d(&x, 7, 3).is_err());
    }

    #[test]
    fn bilinear_constant_preserved() {
        let x = Tensor::<f64>::full(&[2, 3, 3], 4.5);
        let y = tensor::upsample_bilinear(&x, 7, 5).unwrap();
        for &v in y.data() {
            assert!((v - 4.5).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_integer_factor() {
        let x = Tensor::<f64>::new(&[1, 1, 2], vec![1.0, 2.0]).unwrap();
        let y = tensor::upsample_nearest(&x, 1, 4).unwrap();
        assert_eq!(y.data(), &[1.0, 1.0, 2.0, 2.0]);
    }
}
