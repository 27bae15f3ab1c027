//! Whole-image inference with automatic reflect padding.

use crate::data::{ColorSpace, ImageBuffer};
use crate::error::Result;
use crate::model::Model;

/// Mirror-pad the bottom/right edges to the target extents.
pub fn reflect_pad_to(img: &ImageBuffer, ph: usize, pw: usize) -> ImageBuffer {
    let mut out = ImageBuffer::new(ph, pw, img.colorspace);
    for c in 0..3 {
        for y in 0..ph {
            let sy = mirror(y, img.height);
            for x in 0..pw {
                let sx = mirror(x, img.width);
                out.set(c, y, x, img.get(c, sy, sx));
            }
        }
    }
    out
}

fn mirror(i: usize, n: usize) -> usize {
    if i < n {
        i
    } else {
        n.saturating_sub(i - n + 2).min(n - 1)
    }
}

/// Super-resolve an RGB image of any size: reflect-pad the input up to
/// the cube-layout multiple, run the model, crop the output back to
/// `scale` times the original extents.
pub fn super_resolve(model: &Model<f32>, lr: &ImageBuffer) -> Result<ImageBuffer> {
    let s = model.config.scale;
    let (mh, mw) = model.config.required_multiple();
    let (h, w) = (lr.height, lr.width);
    let (ph, pw) = (h.div_ceil(mh) * mh, w.div_ceil(mw) * mw);
    let padded = if (ph, pw) == (h, w) { lr.clone() } else { reflect_pad_to(lr, ph, pw) };
    let output = model.forward(&padded.to_tensor::<f32>())?;
    let full = ImageBuffer::from_tensor(&output, ColorSpace::Rgb)?;
    if (ph, pw) == (h, w) {
        Ok(full)
    } else {
        full.crop(0, 0, h * s, w * s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, ModelConfig};

    #[test]
    fn non_multiple_input_pads_and_crops() {
        let cfg = ModelConfig { n_groups: 1, channels: 16, heads: 2, ..ModelConfig::default() };
        let model: Model<f32> = Model::new(&cfg, 3).unwrap();
        let mut img = ImageBuffer::new(17, 19, ColorSpace::Rgb);
        for c in 0..3 {
            for y in 0..17 {
                for x in 0..19 {
                    img.set(c, y, x, ((c * 7 + y * 3 + x) % 97) as f32 / 97.0);
                }
            }
        }
        let out = super_resolve(&model, &img).unwrap();
        assert_eq!((out.height, out.width), (34, 38));
    }

    #[test]
    fn mirror_indexing() {
        // n = 4: indices 4,5,6 reflect to 2,1,0
        assert_eq!(mirror(3, 4), 3);
        assert_eq!(mirror(4, 4), 2);
        assert_eq!(mirror(5, 4), 1);
        assert_eq!(mirror(6, 4), 0);
        assert_eq!(mirror(9, 4), 0); // clamped far past the edge
    }
}
