//! Y-channel evaluation metrics: PSNR with a 100 dB zero-MSE cap and
//! single-scale SSIM (11x11 Gaussian window, sigma 1.5, K1 = 0.01,
//! K2 = 0.03, valid window positions only).

use serde::Serialize;

use crate::data::{rgb_to_y, ImageBuffer, Plane};
use crate::error::{Error, Result};

/// Reported instead of infinity when the images are identical.
pub const PSNR_CAP_DB: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

pub fn psnr(a: &Plane, b: &Plane, peak: f64) -> Result<f64> {
    if a.height != b.height || a.width != b.width {
        return Err(Error::shape(format!(
            "psnr: {}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    let mut mse = 0.0f64;
    for (&x, &y) in a.data.iter().zip(&b.data) {
        let d = x as f64 - y as f64;
        mse += d * d;
    }
    mse /= a.data.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

/// Normalized 11-tap Gaussian, sigma 1.5.
fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut total = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        total += *v;
    }
    for v in &mut w {
        *v /= total;
    }
    w
}

pub fn ssim(a: &Plane, b: &Plane) -> Result<f64> {
    if a.height != b.height || a.width != b.width {
        return Err(Error::shape(format!(
            "ssim: {}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    if a.height < SSIM_WINDOW || a.width < SSIM_WINDOW {
        return Err(Error::size(format!(
            "ssim: image {}x{} smaller than the {SSIM_WINDOW}px window",
            a.height, a.width
        )));
    }
    let w = gaussian_window();
    let (h, width) = (a.height, a.width);

    // separable Gaussian filtering of the five moment maps, valid region
    let filter = |src: &[f64]| -> Vec<f64> {
        let mut rows = vec![0.0; h * (width - SSIM_WINDOW + 1)];
        let out_w = width - SSIM_WINDOW + 1;
        for y in 0..h {
            for x in 0..out_w {
                let mut acc = 0.0;
                for (k, &wk) in w.iter().enumerate() {
                    acc += wk * src[y * width + x + k];
                }
                rows[y * out_w + x] = acc;
            }
        }
        let out_h = h - SSIM_WINDOW + 1;
        let mut out = vec![0.0; out_h * out_w];
        for y in 0..out_h {
            for x in 0..out_w {
                let mut acc = 0.0;
                for (k, &wk) in w.iter().enumerate() {
                    acc += wk * rows[(y + k) * out_w + x];
                }
                out[y * out_w + x] = acc;
            }
        }
        out
    };

    let af: Vec<f64> = a.data.iter().map(|&v| v as f64).collect();
    let bf: Vec<f64> = b.data.iter().map(|&v| v as f64).collect();
    let aa: Vec<f64> = af.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = bf.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = af.iter().zip(&bf).map(|(x, y)| x * y).collect();

    let mu_a = filter(&af);
    let mu_b = filter(&bf);
    let e_aa = filter(&aa);
    let e_bb = filter(&bb);
    let e_ab = filter(&ab);

    const C1: f64 = 0.01 * 0.01;
    const C2: f64 = 0.03 * 0.03;
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let s = ((2.0 * ma * mb + C1) * (2.0 * cov + C2))
            / ((ma * ma + mb * mb + C1) * (va + vb + C2));
        total += s;
    }
    Ok(total / mu_a.len() as f64)
}

/// Convert both RGB images to BT.601 studio-range Y, crop `scale` pixels
/// from every border, and report (PSNR, SSIM).
pub fn evaluate(output: &ImageBuffer, gt: &ImageBuffer, scale: usize) -> Result<(f64, f64)> {
    if output.height != gt.height || output.width != gt.width {
        return Err(Error::shape(format!(
            "evaluate: {}x{} vs {}x{}",
            output.height, output.width, gt.height, gt.width
        )));
    }
    let ya = rgb_to_y(output)?.crop_border(scale)?;
    let yb = rgb_to_y(gt)?.crop_border(scale)?;
    Ok((psnr(&ya, &yb, 1.0)?, ssim(&ya, &yb)?))
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalRow {
    pub name: String,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Per-image rows plus aggregate means and the evaluation metadata.
#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub scale: usize,
    pub border_crop: usize,
    pub checkpoint: String,
    pub rows: Vec<EvalRow>,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
}

impl EvalReport {
    pub fn new(scale: usize, checkpoint: String, rows: Vec<EvalRow>) -> Self {
        let n = rows.len().max(1) as f64;
        let mean_psnr_db = rows.iter().map(|r| r.psnr_db).sum::<f64>() / n;
        let mean_ssim = rows.iter().map(|r| r.ssim).sum::<f64>() / n;
        EvalReport { scale, border_crop: scale, checkpoint, rows, mean_psnr_db, mean_ssim }
    }

    /// Human-readable table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "scale x{}  border crop {}px  checkpoint {}\n",
            self.scale, self.border_crop, self.checkpoint
        ));
        out.push_str(&format!("{:<28} {:>10} {:>8}\n", "image", "PSNR(dB)", "SSIM"));
        for r in &self.rows {
            out.push_str(&format!("{:<28} {:>10.4} {:>8.4}\n", r.name, r.psnr_db, r.ssim));
        }
        out.push_str(&format!(
            "{:<28} {:>10.4} {:>8.4}\n",
            "mean", self.mean_psnr_db, self.mean_ssim
        ));
        out
    }

    /// One JSON record per row plus a summary record.
    pub fn jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&serde_json::to_string(r).expect("row json"));
            out.push('\n');
        }
        let summary = serde_json::json!({
            "name": "mean",
            "psnr_db": self.mean_psnr_db,
            "ssim": self.mean_ssim,
            "scale": self.scale,
            "border_crop": self.border_crop,
            "checkpoint": self.checkpoint,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColorSpace;

    fn plane_from(h: usize, w: usize, f: impl Fn(usize, usize) -> f32) -> Plane {
        let mut data = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                data.push(f(y, x));
            }
        }
        Plane { height: h, width: w, data }
    }

    #[test]
    fn identical_images_hit_the_cap() {
        let p = plane_from(16, 16, |y, x| ((y * 16 + x) % 200) as f32 / 255.0);
        assert_eq!(psnr(&p, &p, 1.0).unwrap(), 100.0);
        assert!((ssim(&p, &p).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_error_closed_form() {
        // error magnitudes chosen exactly representable in f32 so the
        // closed forms hold to f64 precision: e and e/2 around zero
        let e = 1.0f32 / 255.0;
        let a = plane_from(8, 8, |_, _| 0.0);
        let b = plane_from(8, 8, |_, _| e);
        let p = psnr(&a, &b, 1.0).unwrap();
        // 20*log10(255) dB
        assert!((p - 48.130803608679344).abs() < 1e-5, "{p}");
        // halving the error adds 20*log10(2) dB
        let c = plane_from(8, 8, |_, _| e * 0.5);
        let p2 = psnr(&a, &c, 1.0).unwrap();
        assert!((p2 - p - 6.020599913279624).abs() < 1e-9, "{}", p2 - p);
    }

    #[test]
    fn psnr_decreases_with_noise_amplitude() {
        let a = plane_from(12, 12, |y, x| ((y * 13 + x * 7) % 128) as f32 / 255.0);
        let noisy = |amp: f32| {
            plane_from(12, 12, |y, x| {
                let n = (((y * 31 + x * 17) % 7) as f32 / 7.0 - 0.5) * amp;
                (a.data[y * 12 + x] + n).clamp(0.0, 1.0)
            })
        };
        let p1 = psnr(&a, &noisy(0.02), 1.0).unwrap();
        let p2 = psnr(&a, &noisy(0.08), 1.0).unwrap();
        let p3 = psnr(&a, &noisy(0.3), 1.0).unwrap();
        assert!(p1 > p2 && p2 > p3, "{p1} {p2} {p3}");
    }

    #[test]
    fn ssim_checkerboard_inversion_is_negative() {
        let a = plane_from(16, 16, |y, x| ((y + x) % 2) as f32);
        let b = plane_from(16, 16, |y, x| 1.0 - ((y + x) % 2) as f32);
        assert!(ssim(&a, &b).unwrap() < 0.0);
    }

    #[test]
    fn ssim_symmetry() {
        let a = plane_from(14, 14, |y, x| ((y * 5 + x * 3) % 97) as f32 / 97.0);
        let b = plane_from(14, 14, |y, x| ((y * 7 + x * 11) % 89) as f32 / 89.0);
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-9);
    }

    #[test]
    fn ssim_mean_shift_tolerance() {
        let a = plane_from(20, 20, |y, x| 0.2 + 0.5 * ((y * 3 + x) % 50) as f32 / 50.0);
        let shifted = Plane {
            height: 20,
            width: 20,
            data: a.data.iter().map(|v| v + 0.1).collect(),
        };
        let drift = (ssim(&a, &a).unwrap() - ssim(&shifted, &shifted).unwrap()).abs();
        assert!(drift < 1e-3, "{drift}");
    }

    #[test]
    fn ssim_window_size_guard() {
        let a = plane_from(8, 8, |_, _| 0.5);
        assert!(matches!(ssim(&a, &a), Err(Error::Size(_))));
    }

    #[test]
    fn border_crop_hides_border_corruption() {
        let mut clean = ImageBuffer::new(24, 24, ColorSpace::Rgb);
        for c in 0..3 {
            for y in 0..24 {
                for x in 0..24 {
                    clean.set(c, y, x, ((c + y * 3 + x * 5) % 200) as f32 / 255.0);
                }
            }
        }
        let mut corrupted = clean.clone();
        for c in 0..3 {
            for i in 0..24 {
                corrupted.set(c, 0, i, 1.0);
                corrupted.set(c, 23, i, 0.0);
                corrupted.set(c, i, 0, 1.0);
                corrupted.set(c, i, 23, 0.0);
            }
        }
        let (p, s) = evaluate(&corrupted, &clean, 2).unwrap();
        assert_eq!(p, 100.0);
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_mean_is_arithmetic_mean() {
        let rows = vec![
            EvalRow { name: "a".into(), psnr_db: 30.0, ssim: 0.9 },
            EvalRow { name: "b".into(), psnr_db: 34.0, ssim: 0.7 },
        ];
        let rep = EvalReport::new(2, "none".into(), rows);
        assert_eq!(rep.mean_psnr_db, 32.0);
        assert!((rep.mean_ssim - 0.8).abs() < 1e-12);
        assert!(rep.table().contains("mean"));
    }
}
