//! 2D fast Fourier transform on power-of-two grids.
//!
//! `fft2` maps a real `[H, W]` tensor to a `[2, H, W]` stack holding the
//! real and imaginary planes of the unnormalized forward DFT. The
//! transform is linear, so the backward pass is the conjugate-transpose
//! transform applied to the output gradient.

use super::{Element, Tensor};
use crate::error::{Error, Result};

fn is_pow2(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// In-place radix-2 Cooley-Tukey, unnormalized. `sign = -1` forward.
fn fft1d(re: &mut [f64], im: &mut [f64], sign: f64) {
    let n = re.len();
    if n <= 1 {
        return;
    }
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * std::f64::consts::PI / len as f64;
        let (wr, wi) = (ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let mut cr = 1.0;
            let mut ci = 0.0;
            for k in 0..len / 2 {
                let (ur, ui) = (re[i + k], im[i + k]);
                let (vr, vi) = (
                    re[i + k + len / 2] * cr - im[i + k + len / 2] * ci,
                    re[i + k + len / 2] * ci + im[i + k + len / 2] * cr,
                );
                re[i + k] = ur + vr;
                im[i + k] = ui + vi;
                re[i + k + len / 2] = ur - vr;
                im[i + k + len / 2] = ui - vi;
                let ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
            i += len;
        }
        len <<= 1;
    }
}

/// Full 2D transform: rows, then columns. Unnormalized.
fn fft2_raw(re: &mut [f64], im: &mut [f64], h: usize, w: usize, sign: f64) {
    for y in 0..h {
        fft1d(&mut re[y * w..(y + 1) * w], &mut im[y * w..(y + 1) * w], sign);
    }
    let mut col_re = vec![0.0; h];
    let mut col_im = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col_re[y] = re[y * w + x];
            col_im[y] = im[y * w + x];
        }
        fft1d(&mut col_re, &mut col_im, sign);
        for y in 0..h {
            re[y * w + x] = col_re[y];
            im[y * w + x] = col_im[y];
        }
    }
}

fn check_pow2(h: usize, w: usize) -> Result<()> {
    if !is_pow2(h) || !is_pow2(w) {
        return Err(Error::size(format!(
            "fft2 requires power-of-two extents, got {h}x{w}"
        )));
    }
    Ok(())
}

/// Forward 2D DFT of a real `[H, W]` tensor, returned as `[2, H, W]`
/// (real plane, imaginary plane). Differentiable.
pub fn fft2<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 2 {
        return Err(Error::shape(format!("fft2: expected [H, W], got {:?}", x.shape())));
    }
    let (h, w) = (x.shape()[0], x.shape()[1]);
    check_pow2(h, w)?;

    let mut re: Vec<f64> = x.data().iter().map(|v| v.as_f64()).collect();
    let mut im = vec![0.0; h * w];
    fft2_raw(&mut re, &mut im, h, w, -1.0);

    let mut data = Vec::with_capacity(2 * h * w);
    data.extend(re.iter().map(|&v| T::from_f64(v)));
    data.extend(im.iter().map(|&v| T::from_f64(v)));

    Ok(Tensor::from_op(
        "fft2",
        vec![2, h, w],
        data,
        vec![x.clone()],
        move |g, _| {
            // dx = Re( sum_uv (g_re + i g_im) e^{+2 pi i (.)} )
            let mut re: Vec<f64> = g[..h * w].iter().map(|v| v.as_f64()).collect();
            let mut im: Vec<f64> = g[h * w..].iter().map(|v| v.as_f64()).collect();
            fft2_raw(&mut re, &mut im, h, w, 1.0);
            vec![Some(re.iter().map(|&v| T::from_f64(v)).collect())]
        },
    ))
}

/// Inverse of [`fft2`] including the `1/(HW)` normalization. Takes and
/// returns a `[2, H, W]` complex stack; not graph-recorded (verification
/// use).
pub fn ifft2<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 3 || x.shape()[0] != 2 {
        return Err(Error::shape(format!("ifft2: expected [2, H, W], got {:?}", x.shape())));
    }
    let (h, w) = (x.shape()[1], x.shape()[2]);
    check_pow2(h, w)?;
    let mut re: Vec<f64> = x.data()[..h * w].iter().map(|v| v.as_f64()).collect();
    let mut im: Vec<f64> = x.data()[h * w..].iter().map(|v| v.as_f64()).collect();
    fft2_raw(&mut re, &mut im, h, w, 1.0);
    let scale = 1.0 / (h * w) as f64;
    let mut data = Vec::with_capacity(2 * h * w);
    data.extend(re.iter().map(|&v| T::from_f64(v * scale)));
    data.extend(im.iter().map(|&v| T::from_f64(v * scale)));
    Tensor::new(&[2, h, w], data)
}
