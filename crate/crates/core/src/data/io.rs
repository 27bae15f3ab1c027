//! PNG reading and writing. 8- and 16-bit inputs map to [0, 1] by
//! `/255` and `/65535`; grayscale promotes to three identical channels;
//! saving quantizes to 8 bits rounding half up.

use std::path::Path;

use image::{DynamicImage, ImageReader};

use super::{ColorSpace, ImageBuffer};
use crate::error::{Error, Result};

pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let img = reader.decode().map_err(|e| Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = ImageBuffer::new(h, w, ColorSpace::Rgb);

    match img {
        DynamicImage::ImageLuma8(g) => {
            for (y, x, p) in pixels(h, w) {
                let v = g.get_pixel(x as u32, y as u32)[0] as f32 / 255.0;
                for c in 0..3 {
                    out.set(c, y, x, v);
                }
                let _ = p;
            }
        }
        DynamicImage::ImageLuma16(g) => {
            for (y, x, _) in pixels(h, w) {
                let v = g.get_pixel(x as u32, y as u32)[0] as f32 / 65535.0;
                for c in 0..3 {
                    out.set(c, y, x, v);
                }
            }
        }
        DynamicImage::ImageRgb8(rgb) => {
            for (y, x, _) in pixels(h, w) {
                let p = rgb.get_pixel(x as u32, y as u32);
                for c in 0..3 {
                    out.set(c, y, x, p[c] as f32 / 255.0);
                }
            }
        }
        DynamicImage::ImageRgba8(rgba) => {
            for (y, x, _) in pixels(h, w) {
                let p = rgba.get_pixel(x as u32, y as u32);
                for c in 0..3 {
                    out.set(c, y, x, p[c] as f32 / 255.0);
                }
            }
        }
        DynamicImage::ImageRgb16(rgb) => {
            for (y, x, _) in pixels(h, w) {
                let p = rgb.get_pixel(x as u32, y as u32);
                for c in 0..3 {
                    out.set(c, y, x, p[c] as f32 / 65535.0);
                }
            }
        }
        DynamicImage::ImageRgba16(rgba) => {
            for (y, x, _) in pixels(h, w) {
                let p = rgba.get_pixel(x as u32, y as u32);
                for c in 0..3 {
                    out.set(c, y, x, p[c] as f32 / 65535.0);
                }
            }
        }
        other => {
            return Err(Error::Image {
                path: path.to_path_buf(),
                reason: format!("unsupported pixel format {:?}", other.color()),
            })
        }
    }
    Ok(out)
}

fn pixels(h: usize, w: usize) -> impl Iterator<Item = (usize, usize, ())> {
    (0..h).flat_map(move |y| (0..w).map(move |x| (y, x, ())))
}

/// Quantize a [0, 1] value to u8 rounding half up.
pub(crate) fn quantize8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn save_image(img: &ImageBuffer, path: &Path) -> Result<()> {
    let (h, w) = (img.height, img.width);
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [
                quantize8(img.get(0, y, x)),
                quantize8(img.get(1, y, x)),
                quantize8(img.get(2, y, x)),
            ];
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    buf.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Round-trip through the 8-bit quantizer without touching disk; keeps
/// synthesized LR images identical to their cached PNG copies.
pub(crate) fn quantize_buffer(img: &ImageBuffer) -> ImageBuffer {
    let mut out = img.clone();
    for c in 0..3 {
        for y in 0..img.height {
            for x in 0..img.width {
                out.set(c, y, x, quantize8(img.get(c, y, x)) as f32 / 255.0);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_rounds_up() {
        // 0.5 * 255 = 127.5 -> 128
        assert_eq!(quantize8(0.5), 128);
        assert_eq!(quantize8(0.0), 0);
        assert_eq!(quantize8(1.0), 255);
    }

    #[test]
    fn save_load_roundtrip_exact_for_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let mut img = ImageBuffer::new(5, 7, ColorSpace::Rgb);
        for c in 0..3 {
            for y in 0..5 {
                for x in 0..7 {
                    img.set(c, y, x, ((c * 35 + y * 7 + x) % 256) as f32 / 255.0);
                }
            }
        }
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.data(), img.data());
    }

    #[test]
    fn grayscale_promotes_to_three_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let mut g = image::GrayImage::new(3, 2);
        for (i, p) in g.pixels_mut().enumerate() {
            p[0] = (i * 40) as u8;
        }
        g.save(&path).unwrap();
        let img = load_image(&path).unwrap();
        for y in 0..2 {
            for x in 0..3 {
                let v = img.get(0, y, x);
                assert_eq!(img.get(1, y, x), v);
                assert_eq!(img.get(2, y, x), v);
            }
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_image(Path::new("/nonexistent/zz.png")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/zz.png"));
    }
}
