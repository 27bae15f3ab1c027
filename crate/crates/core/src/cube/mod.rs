//! 3D cube partitioning of feature volumes and per-cube affinity
//! attention. Block sampling groups contiguous neighbourhoods; grid
//! sampling strides across the whole volume so every cube is a sparse
//! global slice.

mod attention;

pub use attention::{cube_affinity_attention, cube_attention_batch, multi_head_cube_attention};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{gather_permutation, Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SampleMode {
    Block,
    Grid,
}

/// Cube geometry for one head volume `[C, H, W]`.
///
/// In block mode `(h, w, c)` are the cube extents. In grid mode they
/// count cubes per axis; each cube then has extent
/// `(H/h, W/w, C/c)` and its voxels sit `h` (resp. `w`, `c`) apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CubeSpec {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub mode: SampleMode,
}

impl CubeSpec {
    pub fn block(h: usize, w: usize, c: usize) -> Self {
        CubeSpec { h, w, c, mode: SampleMode::Block }
    }

    pub fn grid(h: usize, w: usize, c: usize) -> Self {
        CubeSpec { h, w, c, mode: SampleMode::Grid }
    }

    /// Divisibility requirements against a `[C, H, W]` volume; the error
    /// names the failing axis.
    pub fn validate(&self, c: usize, h: usize, w: usize) -> Result<()> {
        let role = match self.mode {
            SampleMode::Block => "cube extent",
            SampleMode::Grid => "grid count",
        };
        if self.h == 0 || h % self.h != 0 {
            return Err(Error::config(format!(
                "{role} h={} does not divide volume H={h}",
                self.h
            )));
        }
        if self.w == 0 || w % self.w != 0 {
            return Err(Error::config(format!(
                "{role} w={} does not divide volume W={w}",
                self.w
            )));
        }
        if self.c == 0 || c % self.c != 0 {
            return Err(Error::config(format!(
                "{role} c={} does not divide volume C={c}",
                self.c
            )));
        }
        Ok(())
    }

    /// Voxels per cube.
    pub fn cube_len(&self, c: usize, h: usize, w: usize) -> usize {
        match self.mode {
            SampleMode::Block => self.h * self.w * self.c,
            SampleMode::Grid => (h / self.h) * (w / self.w) * (c / self.c),
        }
    }

    /// Number of cubes in the volume.
    pub fn cube_count(&self, c: usize, h: usize, w: usize) -> usize {
        c * h * w / self.cube_len(c, h, w)
    }
}

/// Flat gather map: entry `i` of the `[n_cubes * cube_len]` layout reads
/// source element `map[i]` of the `[C, H, W]` volume. Cubes are
/// enumerated channel-block-major, voxels row-major in `(c, y, x)`.
pub fn cube_index_map(c: usize, h: usize, w: usize, spec: &CubeSpec) -> Result<Vec<usize>> {
    spec.validate(c, h, w)?;
    let mut map = Vec::with_capacity(c * h * w);
    match spec.mode {
        SampleMode::Block => {
            let (bc, by, bx) = (c / spec.c, h / spec.h, w / spec.w);
            for cb in 0..bc {
                for yb in 0..by {
                    for xb in 0..bx {
                        for dc in 0..spec.c {
                            let sc = cb * spec.c + dc;
                            for dy in 0..spec.h {
                                let sy = yb * spec.h + dy;
                                for dx in 0..spec.w {
                                    map.push((sc * h + sy) * w + xb * spec.w + dx);
                                }
                            }
                        }
                    }
                }
            }
        }
        SampleMode::Grid => {
            let (ec, ey, ex) = (c / spec.c, h / spec.h, w / spec.w);
            for ac in 0..spec.c {
                for ay in 0..spec.h {
                    for ax in 0..spec.w {
                        for kc in 0..ec {
                            let sc = kc * spec.c + ac;
                            for ky in 0..ey {
                                let sy = ky * spec.h + ay;
                                for kx in 0..ex {
                                    map.push((sc * h + sy) * w + kx * spec.w + ax);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(map)
}

/// A volume viewed as `[n_cubes, cube_len]` plus what is needed to put
/// every voxel back.
#[derive(Debug)]
pub struct CubePartition<T: Element> {
    pub cubes: Tensor<T>,
    src_shape: [usize; 3],
    map: Arc<Vec<usize>>,
}

/// Split `x` `[C, H, W]` into non-overlapping cubes.
pub fn partition<T: Element>(x: &Tensor<T>, spec: &CubeSpec) -> Result<CubePartition<T>> {
    if x.rank() != 3 {
        return Err(Error::shape(format!("partition: expected [C,H,W], got {:?}", x.shape())));
    }
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let map = Arc::new(cube_index_map(c, h, w, spec)?);
    let n_cubes = spec.cube_count(c, h, w);
    let cube_len = spec.cube_len(c, h, w);
    let cubes = gather_permutation("cube_partition", x, Arc::clone(&map), vec![n_cubes, cube_len])?;
    Ok(CubePartition { cubes, src_shape: [c, h, w], map })
}

impl<T: Element> CubePartition<T> {
    pub fn n_cubes(&self) -> usize {
        self.cubes.shape()[0]
    }

    pub fn cube_len(&self) -> usize {
        self.cubes.shape()[1]
    }

    /// Invert the partition. `cubes` may be a transformed tensor of the
    /// same `[n_cubes, cube_len]` shape (the attention output).
    pub fn merge_with(&self, cubes: &Tensor<T>) -> Result<Tensor<T>> {
        if cubes.shape() != self.cubes.shape() {
            return Err(Error::shape(format!(
                "merge: cube tensor {:?} does not match partition {:?}",
                cubes.shape(),
                self.cubes.shape()
            )));
        }
        let mut inverse = vec![0usize; self.map.len()];
        for (dst, &src) in self.map.iter().enumerate() {
            inverse[src] = dst;
        }
        gather_permutation("cube_merge", cubes, Arc::new(inverse), self.src_shape.to_vec())
    }

    /// Round-trip back to `[C, H, W]`.
    pub fn merge(&self) -> Result<Tensor<T>> {
        self.merge_with(&self.cubes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::element_multiset;

    fn seq(n: usize) -> Vec<f64> {
        (0..n).map(|v| v as f64).collect()
    }

    #[test]
    fn block_partition_counts() {
        // (8,16,16) volume, block 8x8x4 -> 2*2*2 cubes of 256 voxels
        let x = Tensor::new(&[8, 16, 16], seq(8 * 16 * 16)).unwrap();
        let p = partition(&x, &CubeSpec::block(8, 8, 4)).unwrap();
        assert_eq!(p.n_cubes(), 8);
        assert_eq!(p.cube_len(), 256);
        assert_eq!(element_multiset(&p.cubes), element_multiset(&x));
    }

    #[test]
    fn grid_cube_zero_is_even_indices() {
        let x = Tensor::new(&[4, 4, 4], seq(64)).unwrap();
        let p = partition(&x, &CubeSpec::grid(2, 2, 2)).unwrap();
        assert_eq!(p.n_cubes(), 8);
        assert_eq!(p.cube_len(), 8);
        let cube0: Vec<f64> = p.cubes.data()[..8].to_vec();
        let mut expect = Vec::new();
        for c in [0usize, 2] {
            for y in [0usize, 2] {
                for xx in [0usize, 2] {
                    expect.push(((c * 4 + y) * 4 + xx) as f64);
                }
            }
        }
        assert_eq!(cube0, expect);
    }

    #[test]
    fn merge_is_exact_inverse_both_modes() {
        let x = Tensor::new(&[8, 8, 8], seq(512)).unwrap();
        for spec in [CubeSpec::block(4, 2, 2), CubeSpec::grid(2, 4, 4)] {
            let p = partition(&x, &spec).unwrap();
            let back = p.merge().unwrap();
            assert_eq!(back.shape(), x.shape());
            assert_eq!(back.data(), x.data());
        }
    }

    #[test]
    fn divisibility_error_names_axis() {
        let x = Tensor::<f64>::zeros(&[8, 15, 16]);
        let err = partition(&x, &CubeSpec::block(8, 8, 4)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("h=8") && msg.contains("H=15"), "{msg}");
    }

    #[test]
    fn tampered_cube_shape_rejected() {
        let x = Tensor::new(&[4, 4, 4], seq(64)).unwrap();
        let p = partition(&x, &CubeSpec::block(2, 2, 2)).unwrap();
        let wrong = Tensor::<f64>::zeros(&[4, 8]);
        assert!(matches!(p.merge_with(&wrong), Err(_)));
    }

    #[test]
    fn grid_equals_block_after_interleave_permutation() {
        // Permute the volume so that grid cubes become contiguous blocks:
        // the two index maps must then agree.
        let (c, h, w) = (4usize, 4usize, 4usize);
        let grid = CubeSpec::grid(2, 2, 2);
        let block = CubeSpec::block(h / 2, w / 2, c / 2);
        let gmap = cube_index_map(c, h, w, &grid).unwrap();
        let bmap = cube_index_map(c, h, w, &block).unwrap();

        // interleave: source coordinate (kc*gc+ac, ky*gy+ay, kx*gx+ax)
        // -> blocked coordinate (ac*ec+kc, ay*ey+ky, ax*ex+kx)
        let to_block = |idx: usize| -> usize {
            let sc = idx / (h * w);
            let sy = (idx / w) % h;
            let sx = idx % w;
            let (ac, kc) = (sc % 2, sc / 2);
            let (ay, ky) = (sy % 2, sy / 2);
            let (ax, kx) = (sx % 2, sx / 2);
            ((ac * 2 + kc) * h + (ay * 2 + ky)) * w + (ax * 2 + kx)
        };
        let composed: Vec<usize> = gmap.iter().map(|&i| to_block(i)).collect();
        assert_eq!(composed, bmap);
    }
}
