//! Dataset layout and patch sampling.
//!
//! Layout: `root/HR/*.png` with optional pre-degraded `root/LR_x{s}/*.png`
//! matched by stem. A missing LR image is synthesized by bicubic
//! downscaling (after cropping the HR to a multiple of the scale),
//! quantized to 8 bits, and cached beside the HR file as `stem_x{s}.png`.

use std::path::{Path, PathBuf};

use rand::Rng;

use super::{bicubic_resize, io, load_image, save_image, ImageBuffer};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct PairPaths {
    pub stem: String,
    pub hr: PathBuf,
    pub lr: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub scale: usize,
    pub pairs: Vec<PairPaths>,
}

/// Stems ending in a `_x{n}` suffix are LR caches, not HR sources.
fn is_cache_stem(stem: &str) -> bool {
    let bytes = stem.as_bytes();
    bytes.len() >= 3
        && bytes[bytes.len() - 3] == b'_'
        && bytes[bytes.len() - 2] == b'x'
        && bytes[bytes.len() - 1].is_ascii_digit()
}

impl DatasetIndex {
    /// Enumerate pairs in deterministic (sorted-by-stem) order.
    pub fn scan(root: &Path, scale: usize) -> Result<Self> {
        let hr_dir = root.join("HR");
        let lr_dir = root.join(format!("LR_x{scale}"));
        let entries = std::fs::read_dir(&hr_dir).map_err(|e| Error::io(&hr_dir, e))?;
        let mut pairs = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&hr_dir, e))?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("png") {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
            if is_cache_stem(stem) {
                continue;
            }
            let lr_path = lr_dir.join(format!("{stem}.png"));
            pairs.push(PairPaths {
                stem: stem.to_string(),
                hr: path.clone(),
                lr: lr_path.exists().then_some(lr_path),
            });
        }
        pairs.sort_by(|a, b| a.stem.cmp(&b.stem));
        if pairs.is_empty() {
            return Err(Error::usage(format!(
                "no HR png files found under {}",
                hr_dir.display()
            )));
        }
        Ok(DatasetIndex { root: root.to_path_buf(), scale, pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Load (HR, LR). The HR is cropped to a multiple of the scale so the
    /// pair aligns exactly; a synthesized LR goes through the 8-bit
    /// quantizer whether or not the cache write succeeds, keeping runs
    /// identical before and after caching.
    pub fn load_pair(&self, idx: usize) -> Result<(ImageBuffer, ImageBuffer)> {
        let pair = &self.pairs[idx];
        let s = self.scale;
        let hr_full = load_image(&pair.hr)?;
        let hr = hr_full.crop(0, 0, hr_full.height - hr_full.height % s, hr_full.width - hr_full.width % s)?;
        let lr = match &pair.lr {
            Some(path) => {
                let lr = load_image(path)?;
                if lr.height != hr.height / s || lr.width != hr.width / s {
                    return Err(Error::shape(format!(
                        "LR {} is {}x{}, expected {}x{} for scale {s}",
                        path.display(),
                        lr.height,
                        lr.width,
                        hr.height / s,
                        hr.width / s
                    )));
                }
                lr
            }
            None => {
                let synth = bicubic_resize(&hr, hr.height / s, hr.width / s)?;
                let quantized = io::quantize_buffer(&synth);
                let cache = pair.hr.with_file_name(format!("{}_x{s}.png", pair.stem));
                let _ = save_image(&quantized, &cache); // best effort
                quantized
            }
        };
        Ok((hr, lr))
    }
}

/// Crop an aligned random patch pair: LR top-left uniform over valid
/// positions, HR at `scale` times the same coordinates. Returns `None`
/// when the LR image is smaller than the patch (caller skips with a
/// warning).
pub fn sample_patch<R: Rng>(
    hr: &ImageBuffer,
    lr: &ImageBuffer,
    lr_size: usize,
    scale: usize,
    rng: &mut R,
) -> Result<Option<(ImageBuffer, ImageBuffer)>> {
    if hr.height != lr.height * scale || hr.width != lr.width * scale {
        return Err(Error::usage(format!(
            "sample_patch: pair {}x{} / {}x{} does not align at scale {scale}",
            hr.height, hr.width, lr.height, lr.width
        )));
    }
    if lr.height < lr_size || lr.width < lr_size {
        return Ok(None);
    }
    let y = rng.gen_range(0..=lr.height - lr_size);
    let x = rng.gen_range(0..=lr.width - lr_size);
    let lr_patch = lr.crop(y, x, lr_size, lr_size)?;
    let hr_patch = hr.crop(y * scale, x * scale, lr_size * scale, lr_size * scale)?;
    Ok(Some((hr_patch, lr_patch)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColorSpace;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gradient_image(h: usize, w: usize) -> ImageBuffer {
        let mut img = ImageBuffer::new(h, w, ColorSpace::Rgb);
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    img.set(c, y, x, ((x * 31 + y * 17 + c * 5) % 251) as f32 / 255.0);
                }
            }
        }
        img
    }

    #[test]
    fn scan_is_sorted_and_skips_caches() {
        let dir = tempfile::tempdir().unwrap();
        let hr = dir.path().join("HR");
        std::fs::create_dir_all(&hr).unwrap();
        for name in ["b.png", "a.png", "a_x2.png"] {
            save_image(&gradient_image(8, 8), &hr.join(name)).unwrap();
        }
        let index = DatasetIndex::scan(dir.path(), 2).unwrap();
        let stems: Vec<&str> = index.pairs.iter().map(|p| p.stem.as_str()).collect();
        assert_eq!(stems, ["a", "b"]);
    }

    #[test]
    fn synthesized_lr_matches_cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let hr_dir = dir.path().join("HR");
        std::fs::create_dir_all(&hr_dir).unwrap();
        save_image(&gradient_image(16, 16), &hr_dir.join("img.png")).unwrap();
        let index = DatasetIndex::scan(dir.path(), 2).unwrap();
        let (_, lr_first) = index.load_pair(0).unwrap();
        assert!(hr_dir.join("img_x2.png").exists());
        // second load reads the cache; must be identical
        let (_, lr_second) = index.load_pair(0).unwrap();
        assert_eq!(lr_first.data(), lr_second.data());
    }

    #[test]
    fn on_disk_lr_preferred() {
        let dir = tempfile::tempdir().unwrap();
        let hr_dir = dir.path().join("HR");
        let lr_dir = dir.path().join("LR_x2");
        std::fs::create_dir_all(&hr_dir).unwrap();
        std::fs::create_dir_all(&lr_dir).unwrap();
        save_image(&gradient_image(16, 16), &hr_dir.join("img.png")).unwrap();
        let custom = gradient_image(8, 8);
        save_image(&custom, &lr_dir.join("img.png")).unwrap();
        let index = DatasetIndex::scan(dir.path(), 2).unwrap();
        assert!(index.pairs[0].lr.is_some());
        let (_, lr) = index.load_pair(0).unwrap();
        assert_eq!(lr.data(), custom.data());
    }

    #[test]
    fn exact_size_patch_is_whole_image() {
        let hr = gradient_image(16, 16);
        let lr = gradient_image(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (hp, lp) = sample_patch(&hr, &lr, 8, 2, &mut rng).unwrap().unwrap();
        assert_eq!(lp.data(), lr.data());
        assert_eq!(hp.data(), hr.data());
    }

    #[test]
    fn patch_alignment_law() {
        let hr = gradient_image(32, 32);
        let lr = bicubic_resize(&hr, 16, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let (hp, lp) = sample_patch(&hr, &lr, 8, 2, &mut rng).unwrap().unwrap();
            assert_eq!(hp.height, 16);
            assert_eq!(lp.height, 8);
            // locate the LR patch in the source to recover (y, x)
            let mut found = false;
            'outer: for y in 0..=8 {
                for x in 0..=8 {
                    if (0..8).all(|yy| (0..8).all(|xx| lp.get(0, yy, xx) == lr.get(0, y + yy, x + xx))) {
                        assert_eq!(hp.get(0, 0, 0), hr.get(0, 2 * y, 2 * x));
                        found = true;
                        break 'outer;
                    }
                }
            }
            assert!(found);
        }
    }

    #[test]
    fn corner_coverage_under_uniform_draws() {
        let _hr = gradient_image(48, 48);
        let lr = gradient_image(24, 24);
        let _ = &lr;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen00 = false;
        let mut seen_max = false;
        for _ in 0..2000 {
            let y = rng.gen_range(0..=24 - 8);
            let x = rng.gen_range(0..=24 - 8);
            seen00 |= y == 0 && x == 0;
            seen_max |= y == 16 && x == 16;
        }
        assert!(seen00 && seen_max);
        // too-small image yields the skip signal
        let tiny = gradient_image(4, 4);
        let tiny_hr = gradient_image(8, 8);
        assert!(sample_patch(&tiny_hr, &tiny, 8, 2, &mut rng).unwrap().is_none());
    }
}
