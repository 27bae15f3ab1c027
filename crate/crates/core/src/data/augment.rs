//! Paired augmentation: horizontal flip, 90/270-degree rotation, and RGB
//! channel shuffling, with one shared draw applied to both patches.

use rand::Rng;

use super::ImageBuffer;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rotation {
    None,
    Deg90,
    Deg270,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentDraws {
    pub flip: bool,
    pub rotation: Rotation,
    pub channel_perm: [usize; 3],
}

impl AugmentDraws {
    pub const IDENTITY: AugmentDraws =
        AugmentDraws { flip: false, rotation: Rotation::None, channel_perm: [0, 1, 2] };
}

const PERMS: [[usize; 3]; 6] =
    [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Independent draws: 50% flip, uniform over {none, 90, 270}, uniform
/// channel permutation.
pub fn draw_augment<R: Rng>(rng: &mut R) -> AugmentDraws {
    let flip = rng.gen_range(0..2u8) == 1;
    let rotation = match rng.gen_range(0..3u8) {
        0 => Rotation::None,
        1 => Rotation::Deg90,
        _ => Rotation::Deg270,
    };
    let channel_perm = PERMS[rng.gen_range(0..PERMS.len())];
    AugmentDraws { flip, rotation, channel_perm }
}

pub fn apply_augment(img: &ImageBuffer, draws: &AugmentDraws) -> ImageBuffer {
    let mut out = img.clone();
    if draws.flip {
        out = flip_horizontal(&out);
    }
    out = match draws.rotation {
        Rotation::None => out,
        Rotation::Deg90 => rotate90(&out),
        Rotation::Deg270 => rotate270(&out),
    };
    permute_channels(&out, &draws.channel_perm)
}

/// Draw once, apply to both members of an aligned HR/LR pair.
pub fn augment<R: Rng>(
    hr: &ImageBuffer,
    lr: &ImageBuffer,
    rng: &mut R,
) -> Result<(ImageBuffer, ImageBuffer)> {
    if lr.height == 0
        || lr.width == 0
        || hr.height % lr.height != 0
        || hr.width % lr.width != 0
        || hr.height / lr.height != hr.width / lr.width
    {
        return Err(Error::usage(format!(
            "augment: misaligned pair {}x{} vs {}x{}",
            hr.height, hr.width, lr.height, lr.width
        )));
    }
    let draws = draw_augment(rng);
    Ok((apply_augment(hr, &draws), apply_augment(lr, &draws)))
}

fn flip_horizontal(img: &ImageBuffer) -> ImageBuffer {
    let mut out = ImageBuffer::new(img.height, img.width, img.colorspace);
    for c in 0..3 {
        for y in 0..img.height {
            for x in 0..img.width {
                out.set(c, y, x, img.get(c, y, img.width - 1 - x));
            }
        }
    }
    out
}

/// Clockwise quarter turn: output (y, x) reads input (H-1-x, y).
fn rotate90(img: &ImageBuffer) -> ImageBuffer {
    let (h, w) = (img.height, img.width);
    let mut out = ImageBuffer::new(w, h, img.colorspace);
    for c in 0..3 {
        for y in 0..w {
            for x in 0..h {
                out.set(c, y, x, img.get(c, h - 1 - x, y));
            }
        }
    }
    out
}

fn rotate270(img: &ImageBuffer) -> ImageBuffer {
    let (h, w) = (img.height, img.width);
    let mut out = ImageBuffer::new(w, h, img.colorspace);
    for c in 0..3 {
        for y in 0..w {
            for x in 0..h {
                out.set(c, y, x, img.get(c, x, w - 1 - y));
            }
        }
    }
    out
}

fn permute_channels(img: &ImageBuffer, perm: &[usize; 3]) -> ImageBuffer {
    let mut out = ImageBuffer::new(img.height, img.width, img.colorspace);
    for (dst, &src) in perm.iter().enumerate() {
        for y in 0..img.height {
            for x in 0..img.width {
                out.set(dst, y, x, img.get(src, y, x));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColorSpace;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_image(h: usize, w: usize) -> ImageBuffer {
        let mut img = ImageBuffer::new(h, w, ColorSpace::Rgb);
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    img.set(c, y, x, ((c * 91 + y * 13 + x * 7) % 200) as f32 / 255.0);
                }
            }
        }
        img
    }

    #[test]
    fn identity_draws_change_nothing() {
        let img = sample_image(6, 6);
        let out = apply_augment(&img, &AugmentDraws::IDENTITY);
        assert_eq!(out.data(), img.data());
    }

    #[test]
    fn double_flip_is_identity() {
        let img = sample_image(5, 8);
        let flip = AugmentDraws { flip: true, ..AugmentDraws::IDENTITY };
        let once = apply_augment(&img, &flip);
        let twice = apply_augment(&once, &flip);
        assert_eq!(twice.data(), img.data());
    }

    #[test]
    fn rotations_invert_each_other() {
        let img = sample_image(4, 7);
        let r90 = apply_augment(&img, &AugmentDraws { rotation: Rotation::Deg90, ..AugmentDraws::IDENTITY });
        let back = apply_augment(&r90, &AugmentDraws { rotation: Rotation::Deg270, ..AugmentDraws::IDENTITY });
        assert_eq!(back.data(), img.data());
    }

    #[test]
    fn shared_draw_applies_same_permutation() {
        // channel means stay paired between HR and LR under the shared draw
        let hr = sample_image(8, 8);
        let lr = sample_image(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..16 {
            let (ahr, alr) = augment(&hr, &lr, &mut rng).unwrap();
            let mean = |img: &ImageBuffer, c: usize| -> f32 {
                let n = img.height * img.width;
                img.data()[c * n..(c + 1) * n].iter().sum::<f32>() / n as f32
            };
            // find which source channel landed in slot 0 for each image:
            // they must match because the permutation is shared
            let find = |img: &ImageBuffer, src_means: &[f32; 3], c: usize| -> usize {
                let m = mean(img, c);
                (0..3).min_by_key(|&i| ((src_means[i] - m).abs() * 1e6) as i64).unwrap()
            };
            let hr_means = [mean(&hr, 0), mean(&hr, 1), mean(&hr, 2)];
            let lr_means = [mean(&lr, 0), mean(&lr, 1), mean(&lr, 2)];
            for c in 0..3 {
                assert_eq!(find(&ahr, &hr_means, c), find(&alr, &lr_means, c));
            }
        }
    }

    #[test]
    fn misaligned_pair_rejected() {
        let hr = sample_image(9, 8);
        let lr = sample_image(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(augment(&hr, &lr, &mut rng).is_err());
    }

    #[test]
    fn augment_preserves_pixel_multiset_per_draw() {
        let img = sample_image(6, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..8 {
            let draws = draw_augment(&mut rng);
            let out = apply_augment(&img, &draws);
            let mut a: Vec<u32> = img.data().iter().map(|v| v.to_bits()).collect();
            let mut b: Vec<u32> = out.data().iter().map(|v| v.to_bits()).collect();
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(a, b);
        }
    }
}
