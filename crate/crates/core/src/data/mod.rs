//! Data pipeline: image buffers, PNG I/O, bicubic degradation,
//! augmentation, and deterministic patch sampling.

mod augment;
mod dataset;
mod io;
mod resize;

pub use augment::{apply_augment, augment, draw_augment, AugmentDraws, Rotation};
pub use dataset::{sample_patch, DatasetIndex, PairPaths};
pub use io::{load_image, save_image};
pub use resize::{bicubic_resize, keys_kernel, resize_plane};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorSpace {
    Rgb,
    YCbCr,
}

/// H x W x 3 image, planar channel-major storage, values in [0, 1].
#[derive(Clone, Debug)]
pub struct ImageBuffer {
    pub height: usize,
    pub width: usize,
    pub colorspace: ColorSpace,
    data: Vec<f32>,
}

/// A single-channel float plane (the Y channel, metric inputs).
#[derive(Clone, Debug)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, colorspace: ColorSpace) -> Self {
        ImageBuffer { height, width, colorspace, data: vec![0.0; 3 * height * width] }
    }

    /// Wrap planar `[3, H, W]` data; clamps to [0, 1].
    pub fn from_planar(height: usize, width: usize, colorspace: ColorSpace, mut data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * height * width {
            return Err(Error::shape(format!(
                "image buffer: {} values for {height}x{width}x3",
                data.len()
            )));
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(ImageBuffer { height, width, colorspace, data })
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v.clamp(0.0, 1.0);
    }

    /// Copy into a `[3, H, W]` tensor.
    pub fn to_tensor<T: Element>(&self) -> Tensor<T> {
        let data = self.data.iter().map(|&v| T::from_f64(v as f64)).collect();
        Tensor::new(&[3, self.height, self.width], data).expect("image buffer shape")
    }

    /// Build from a `[3, H, W]` tensor, clamping into [0, 1].
    pub fn from_tensor<T: Element>(t: &Tensor<T>, colorspace: ColorSpace) -> Result<Self> {
        if t.rank() != 3 || t.shape()[0] != 3 {
            return Err(Error::shape(format!(
                "image from tensor: expected [3, H, W], got {:?}",
                t.shape()
            )));
        }
        let data = t.data().iter().map(|&v| v.as_f64() as f32).collect();
        Self::from_planar(t.shape()[1], t.shape()[2], colorspace, data)
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<ImageBuffer> {
        if y0 + h > self.height || x0 + w > self.width {
            return Err(Error::size(format!(
                "crop {h}x{w}+{y0}+{x0} exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut out = ImageBuffer::new(h, w, self.colorspace);
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    out.set(c, y, x, self.get(c, y0 + y, x0 + x));
                }
            }
        }
        Ok(out)
    }
}

/// BT.601 studio-range luma: `Y = (16 + 65.481 R + 128.553 G + 24.966 B) / 255`.
pub fn rgb_to_y(img: &ImageBuffer) -> Result<Plane> {
    if img.colorspace != ColorSpace::Rgb {
        return Err(Error::usage("rgb_to_y expects an RGB-tagged buffer".to_string()));
    }
    let n = img.height * img.width;
    let mut data = Vec::with_capacity(n);
    for p in 0..n {
        let r = img.data[p];
        let g = img.data[n + p];
        let b = img.data[2 * n + p];
        data.push((16.0 + 65.481 * r + 128.553 * g + 24.966 * b) / 255.0);
    }
    Ok(Plane { height: img.height, width: img.width, data })
}

impl Plane {
    pub fn crop_border(&self, border: usize) -> Result<Plane> {
        if 2 * border >= self.height || 2 * border >= self.width {
            return Err(Error::size(format!(
                "border crop {border} leaves no pixels in {}x{}",
                self.height, self.width
            )));
        }
        let (h, w) = (self.height - 2 * border, self.width - 2 * border);
        let mut data = Vec::with_capacity(h * w);
        for y in 0..h {
            let base = (y + border) * self.width + border;
            data.extend_from_slice(&self.data[base..base + w]);
        }
        Ok(Plane { height: h, width: w, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn y_channel_reference_points() {
        let mut img = ImageBuffer::new(1, 3, ColorSpace::Rgb);
        // black, white, pure green
        for c in 0..3 {
            img.set(c, 0, 1, 1.0);
        }
        img.set(1, 0, 2, 1.0);
        let y = rgb_to_y(&img).unwrap();
        assert!((y.data[0] - 16.0 / 255.0).abs() < 1e-6);
        assert!((y.data[1] - 235.0 / 255.0).abs() < 1e-6);
        assert!((y.data[2] - (16.0 + 128.553) / 255.0).abs() < 1e-6);
    }

    #[test]
    fn wrong_colorspace_rejected() {
        let mut img = ImageBuffer::new(2, 2, ColorSpace::Rgb);
        img.colorspace = ColorSpace::YCbCr;
        assert!(matches!(rgb_to_y(&img), Err(Error::Usage(_))));
    }

    #[test]
    fn from_planar_clamps() {
        let img = ImageBuffer::from_planar(1, 1, ColorSpace::Rgb, vec![-0.5, 0.5, 1.5]).unwrap();
        assert_eq!(img.data(), &[0.0, 0.5, 1.0]);
    }
}
