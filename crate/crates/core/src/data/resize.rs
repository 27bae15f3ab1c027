//! Separable bicubic resampling with the Keys kernel (a = -0.5),
//! antialias widening of the kernel when downscaling, and clamped
//! source coordinates at the edges.

use super::{ImageBuffer, Plane};
use crate::error::{Error, Result};

/// Keys cubic convolution kernel, a = -0.5.
pub fn keys_kernel(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * x * x * x - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

/// Tap indices and normalized weights for resampling an axis of length
/// `n` to `out_n` with half-pixel centres.
fn axis_taps(n: usize, out_n: usize) -> Vec<(Vec<usize>, Vec<f64>)> {
    let scale = n as f64 / out_n as f64;
    // Antialias: stretch the kernel by the scale factor when shrinking.
    let filter = scale.max(1.0);
    let support = 2.0 * filter;
    (0..out_n)
        .map(|o| {
            let src = (o as f64 + 0.5) * scale - 0.5;
            let lo = (src - support).ceil() as isize;
            let hi = (src + support).floor() as isize;
            let mut idx = Vec::with_capacity((hi - lo + 1) as usize);
            let mut wts = Vec::with_capacity(idx.capacity());
            let mut total = 0.0;
            for t in lo..=hi {
                let w = keys_kernel((t as f64 - src) / filter) / filter;
                if w != 0.0 {
                    idx.push(t.clamp(0, n as isize - 1) as usize);
                    wts.push(w);
                    total += w;
                }
            }
            for w in &mut wts {
                *w /= total;
            }
            (idx, wts)
        })
        .collect()
}

fn resample_rows(src: &[f32], h: usize, w: usize, taps: &[(Vec<usize>, Vec<f64>)]) -> Vec<f32> {
    let out_w = taps.len();
    let mut out = vec![0.0f32; h * out_w];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (ox, (idx, wts)) in taps.iter().enumerate() {
            let mut acc = 0.0f64;
            for (&i, &wt) in idx.iter().zip(wts) {
                acc += row[i] as f64 * wt;
            }
            out[y * out_w + ox] = acc as f32;
        }
    }
    out
}

fn resample_cols(src: &[f32], _h: usize, w: usize, taps: &[(Vec<usize>, Vec<f64>)]) -> Vec<f32> {
    let out_h = taps.len();
    let mut out = vec![0.0f32; out_h * w];
    for (oy, (idx, wts)) in taps.iter().enumerate() {
        for x in 0..w {
            let mut acc = 0.0f64;
            for (&i, &wt) in idx.iter().zip(wts) {
                acc += src[i * w + x] as f64 * wt;
            }
            out[oy * w + x] = acc as f32;
        }
    }
    out
}

fn resize_channel(src: &[f32], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f32> {
    let row_taps = axis_taps(w, out_w);
    let col_taps = axis_taps(h, out_h);
    let horizontal = resample_rows(src, h, w, &row_taps);
    resample_cols(&horizontal, h, out_w, &col_taps)
}

pub fn bicubic_resize(img: &ImageBuffer, out_h: usize, out_w: usize) -> Result<ImageBuffer> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::size("bicubic_resize: empty output".to_string()));
    }
    let plane = img.height * img.width;
    let mut data = Vec::with_capacity(3 * out_h * out_w);
    for c in 0..3 {
        data.extend(resize_channel(
            &img.data()[c * plane..(c + 1) * plane],
            img.height,
            img.width,
            out_h,
            out_w,
        ));
    }
    ImageBuffer::from_planar(out_h, out_w, img.colorspace, data)
}

pub fn resize_plane(p: &Plane, out_h: usize, out_w: usize) -> Result<Plane> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::size("resize_plane: empty output".to_string()));
    }
    let data = resize_channel(&p.data, p.height, p.width, out_h, out_w);
    Ok(Plane { height: out_h, width: out_w, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColorSpace;

    #[test]
    fn kernel_reference_value() {
        // (a+2)|x|^3 - (a+3)|x|^2 + 1 at x = 0.5, a = -0.5
        assert!((keys_kernel(0.5) - 0.5625).abs() < 1e-12);
        assert_eq!(keys_kernel(0.0), 1.0);
        assert_eq!(keys_kernel(2.0), 0.0);
    }

    #[test]
    fn kernel_partition_of_unity() {
        for phase in [0.0, 0.1, 0.25, 0.5, 0.77, 0.99] {
            let total: f64 = (-3..=3).map(|i| keys_kernel(phase - i as f64)).sum();
            assert!((total - 1.0).abs() < 1e-6, "phase {phase}: {total}");
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        let mut img = ImageBuffer::new(9, 13, ColorSpace::Rgb);
        for c in 0..3 {
            for y in 0..9 {
                for x in 0..13 {
                    img.set(c, y, x, 0.4);
                }
            }
        }
        for (oh, ow) in [(4, 6), (18, 27), (9, 13)] {
            let out = bicubic_resize(&img, oh, ow).unwrap();
            for &v in out.data() {
                assert!((v - 0.4).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn down_then_up_recovers_smooth_gradient() {
        let (h, w) = (32, 32);
        let mut img = ImageBuffer::new(h, w, ColorSpace::Rgb);
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    img.set(c, y, x, 0.2 + 0.6 * (x as f32 + y as f32) / (h + w) as f32);
                }
            }
        }
        let down = bicubic_resize(&img, h / 2, w / 2).unwrap();
        let up = bicubic_resize(&down, h, w).unwrap();
        let mad: f64 = img
            .data()
            .iter()
            .zip(up.data())
            .map(|(a, b)| (a - b).abs() as f64)
            .sum::<f64>()
            / img.data().len() as f64;
        assert!(mad < 1e-2, "mean abs diff {mad}");
    }
}
