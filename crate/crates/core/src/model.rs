//! End-to-end model: shallow conv, cascaded cube transformer groups with
//! a global residual, pixel-shuffle restoration head.

use serde::{Deserialize, Serialize};

use crate::blocks::{BlockSettings, Ctg, CtgLite, SE_REDUCTION};
use crate::cube::CubeSpec;
use crate::error::{Error, Result};
use crate::nn::{Conv2d, Initializer, ParamVisitor};
use crate::tensor::{self, Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Full,
    Lite,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Full => write!(f, "full"),
            Variant::Lite => write!(f, "lite"),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "lite" => Ok(Variant::Lite),
            other => Err(Error::usage(format!("unknown variant '{other}'"))),
        }
    }
}

/// Full architecture description; parameter count is a pure function of
/// this struct.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub n_groups: usize,
    pub channels: usize,
    pub heads: usize,
    pub intra_spec: CubeSpec,
    pub inter_spec: CubeSpec,
    pub scale: usize,
    pub ffn_expansion: f64,
    pub mbconv_expansion: f64,
    /// Kernel size of the Q/K/V projections (1 keeps them pointwise).
    pub qkv_kernel: usize,
    /// Apply the affinity matrix in its transposed, row-vector reading.
    pub transposed_affinity: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Full,
            n_groups: 6,
            channels: 64,
            heads: 4,
            intra_spec: CubeSpec::block(8, 8, 4),
            inter_spec: CubeSpec::grid(8, 8, 4),
            scale: 2,
            ffn_expansion: 3.0,
            mbconv_expansion: 2.0,
            qkv_kernel: 1,
            transposed_affinity: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.scale, 2 | 3 | 4) {
            return Err(Error::config(format!("scale {} not in {{2,3,4}}", self.scale)));
        }
        if self.n_groups == 0 {
            return Err(Error::config("n_groups must be positive"));
        }
        if self.heads == 0 || self.channels % self.heads != 0 {
            return Err(Error::config(format!(
                "channels {} not divisible into {} heads",
                self.channels, self.heads
            )));
        }
        let attn_channels = match self.variant {
            Variant::Full => self.channels,
            Variant::Lite => {
                if self.channels % 2 != 0 {
                    return Err(Error::config("lite variant needs an even channel count"));
                }
                self.channels / 2
            }
        };
        if attn_channels % self.heads != 0 {
            return Err(Error::config(format!(
                "attention width {attn_channels} not divisible into {} heads",
                self.heads
            )));
        }
        let per_head = attn_channels / self.heads;
        for (name, spec) in [("intra", &self.intra_spec), ("inter", &self.inter_spec)] {
            if spec.c == 0 || per_head % spec.c != 0 {
                return Err(Error::config(format!(
                    "{name} cube channel extent {} does not divide per-head width {per_head}",
                    spec.c
                )));
            }
        }
        if self.qkv_kernel == 0 || self.qkv_kernel % 2 == 0 {
            return Err(Error::config("qkv kernel must be odd"));
        }
        if self.ffn_expansion <= 0.0 || self.mbconv_expansion <= 0.0 {
            return Err(Error::config("expansion ratios must be positive"));
        }
        Ok(())
    }

    /// Spatial extents the input must be a multiple of (H, W).
    pub fn required_multiple(&self) -> (usize, usize) {
        let h = lcm(self.intra_spec.h, self.inter_spec.h);
        let w = lcm(self.intra_spec.w, self.inter_spec.w);
        (h, w)
    }

    fn block_settings(&self) -> BlockSettings {
        let channels = self.channels;
        BlockSettings {
            channels,
            heads: self.heads,
            intra_spec: self.intra_spec,
            inter_spec: self.inter_spec,
            ffn_expansion: self.ffn_expansion,
            mbconv_expansion: self.mbconv_expansion,
            qkv_kernel: self.qkv_kernel,
            transposed_affinity: self.transposed_affinity,
        }
    }
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

enum Group<T: Element> {
    Full(Ctg<T>),
    Lite(CtgLite<T>),
}

impl<T: Element> Group<T> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Group::Full(g) => g.forward(x),
            Group::Lite(g) => g.forward(x),
        }
    }

    fn visit_params(&mut self, prefix: &str, f: ParamVisitor<T>) {
        match self {
            Group::Full(g) => g.visit_params(prefix, f),
            Group::Lite(g) => g.visit_params(prefix, f),
        }
    }
}

pub struct Model<T: Element> {
    pub config: ModelConfig,
    pub init_seed: u64,
    shallow: Conv2d<T>,
    groups: Vec<Group<T>>,
    head: Conv2d<T>,
}

/// Build a model with freshly initialized parameters; construction order
/// (and therefore parameter paths and values) is fully determined by the
/// config and seed.
pub fn init_parameters<T: Element>(config: &ModelConfig, seed: u64) -> Result<Model<T>> {
    config.validate()?;
    let mut init = Initializer::new(seed);
    let settings = config.block_settings();
    let shallow = Conv2d::new(&mut init, 3, config.channels, 3, 1, 1)?;
    let groups = (0..config.n_groups)
        .map(|_| -> Result<Group<T>> {
            Ok(match config.variant {
                Variant::Full => Group::Full(Ctg::new(&mut init, &settings)?),
                Variant::Lite => Group::Lite(CtgLite::new(&mut init, &settings)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let head = Conv2d::new(
        &mut init,
        config.channels,
        3 * config.scale * config.scale,
        3,
        1,
        1,
    )?;
    Ok(Model { config: *config, init_seed: seed, shallow, groups, head })
}

impl<T: Element> Model<T> {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        init_parameters(config, seed)
    }

    /// Super-resolve a `[3, H, W]` image tensor to `[3, sH, sW]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.rank() != 3 || x.shape()[0] != 3 {
            return Err(Error::shape(format!(
                "model input must be [3, H, W], got {:?}",
                x.shape()
            )));
        }
        let (h, w) = (x.shape()[1], x.shape()[2]);
        let (mh, mw) = self.config.required_multiple();
        if h % mh != 0 || w % mw != 0 {
            return Err(Error::size(format!(
                "input {h}x{w} incompatible with cube layout: spatial extents must be multiples of {mh}x{mw}"
            )));
        }
        let shallow = self.shallow.forward(x)?;
        let mut deep = shallow.clone();
        for g in &self.groups {
            deep = g.forward(&deep)?;
        }
        let deep = deep.add(&shallow)?;
        let restored = self.head.forward(&deep)?;
        tensor::pixel_shuffle(&restored, self.config.scale)
    }

    pub fn visit_params(&mut self, f: ParamVisitor<T>) {
        self.shallow.visit_params("shallow", f);
        for (i, g) in self.groups.iter_mut().enumerate() {
            g.visit_params(&format!("ctg.{i}"), f);
        }
        self.head.visit_params("head", f);
    }

    /// Total parameter element count.
    pub fn param_count(&mut self) -> usize {
        let mut total = 0;
        self.visit_params(&mut |_, t| total += t.len());
        total
    }

    /// (path, element count) per parameter tensor, in path order.
    pub fn param_breakdown(&mut self) -> Vec<(String, usize)> {
        let mut rows = Vec::new();
        self.visit_params(&mut |path, t| rows.push((path, t.len())));
        rows
    }

    /// Analytic FLOPs estimate (multiply-accumulates x 2, plus bias and
    /// gating element ops) for one forward pass at the given input size.
    pub fn flops_estimate(&self, h: usize, w: usize) -> u64 {
        flops_estimate(&self.config, h, w)
    }
}

fn conv_flops(c_in: u64, c_out: u64, k: u64, oh: u64, ow: u64) -> u64 {
    2 * k * k * c_in * c_out * oh * ow + c_out * oh * ow
}

fn expanded(channels: usize, ratio: f64) -> u64 {
    ((channels as f64 * ratio).round() as u64).max(1)
}

/// Per-layer analytic cost of a forward pass; attention contributes the
/// n^2 affinity products of every cube.
pub fn flops_estimate(config: &ModelConfig, h: usize, w: usize) -> u64 {
    let (h, w) = (h as u64, w as u64);
    let c = config.channels as u64;
    let mut total = conv_flops(3, c, 3, h, w); // shallow

    let attn_channels = match config.variant {
        Variant::Full => config.channels,
        Variant::Lite => config.channels / 2,
    };
    let per_group = mbconv_flops(config, h, w)
        + ctb_flops(config, &config.intra_spec, attn_channels, h, w)
        + ctb_flops(config, &config.inter_spec, attn_channels, h, w)
        + esa_flops(config, h, w);
    total += per_group * config.n_groups as u64;

    let s = config.scale as u64;
    total += conv_flops(c, 3 * s * s, 3, h, w); // restoration head
    total
}

fn mbconv_flops(config: &ModelConfig, h: u64, w: u64) -> u64 {
    let c = config.channels as u64;
    let e = expanded(config.channels, config.mbconv_expansion);
    let se_hidden = (e / SE_REDUCTION as u64).max(1);
    let mut total = conv_flops(c, e, 1, h, w);
    total += conv_flops(1, 1, 3, h, w) * e; // depthwise 3x3
    total += e * h * w; // global average pool
    total += conv_flops(e, se_hidden, 1, 1, 1) + conv_flops(se_hidden, e, 1, 1, 1);
    total += e * h * w; // channel gate multiply
    total += conv_flops(e, c, 1, h, w);
    total += c * h * w; // residual add
    total
}

fn esa_flops(config: &ModelConfig, h: u64, w: u64) -> u64 {
    let c = config.channels as u64;
    let f = (c / 4).max(1);
    let mut total = conv_flops(c, f, 1, h, w);
    let (h2, w2) = ((h - 3) / 2 + 1, (w - 3) / 2 + 1);
    total += conv_flops(f, f, 3, h2, w2);
    let (h3, w3) = ((h2 - 7) / 3 + 1, (w2 - 7) / 3 + 1);
    total += 3 * conv_flops(f, f, 3, h3, w3);
    total += 4 * f * h * w; // bilinear upsample taps
    total += f * h * w; // skip add
    total += conv_flops(f, c, 1, h, w);
    total += c * h * w; // sigmoid gate multiply
    total
}

fn ctb_flops(config: &ModelConfig, spec: &CubeSpec, attn_channels: usize, h: u64, w: u64) -> u64 {
    let c = attn_channels as u64;
    let k = config.qkv_kernel as u64;
    let mut total = 3 * conv_flops(c, c, k, h, w) + conv_flops(c, c, 1, h, w);

    // attention core: two n^2 MAC passes per cube
    let per_head = c / config.heads as u64;
    let n = spec.cube_len(per_head as usize, h as usize, w as usize) as u64;
    let cubes_per_head = spec.cube_count(per_head as usize, h as usize, w as usize) as u64;
    total += config.heads as u64 * cubes_per_head * 4 * n * n;

    // FFN
    let hidden = expanded(attn_channels, config.ffn_expansion);
    total += conv_flops(c, hidden, 1, h, w);
    total += conv_flops(1, 1, 3, h, w) * hidden; // depthwise 3x3
    total += conv_flops(hidden, c, 1, h, w);
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::probe_tensor;
    use crate::tensor::Tensor;

    pub(crate) fn tiny_config() -> ModelConfig {
        ModelConfig {
            n_groups: 1,
            channels: 16,
            heads: 2,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn shape_law() {
        let cfg = tiny_config();
        let model: Model<f32> = Model::new(&cfg, 1).unwrap();
        let x = probe_tensor(&[3, 16, 16], 2).cast::<f32>();
        let y = model.forward(&x).unwrap();
        assert_eq!(y.shape(), &[3, 32, 32]);
    }

    #[test]
    fn incompatible_size_names_required_multiple() {
        let cfg = tiny_config();
        let model: Model<f32> = Model::new(&cfg, 1).unwrap();
        let x = Tensor::<f32>::zeros(&[3, 20, 16]);
        let err = model.forward(&x).unwrap_err();
        assert!(err.to_string().contains("multiples of 8x8"), "{err}");
    }

    #[test]
    fn same_seed_bit_identical_parameters_and_forward() {
        let cfg = tiny_config();
        let mut a: Model<f32> = Model::new(&cfg, 42).unwrap();
        let mut b: Model<f32> = Model::new(&cfg, 42).unwrap();
        let mut pa = Vec::new();
        a.visit_params(&mut |path, t| pa.push((path, t.data().to_vec())));
        let mut pb = Vec::new();
        b.visit_params(&mut |path, t| pb.push((path, t.data().to_vec())));
        assert_eq!(pa, pb);

        let x = probe_tensor(&[3, 16, 16], 3).cast::<f32>();
        let ya = a.forward(&x).unwrap();
        let yb = b.forward(&x).unwrap();
        assert_eq!(ya.data(), yb.data());
    }

    #[test]
    fn zeroed_backbone_reduces_to_head_of_shallow() {
        let cfg = tiny_config();
        let mut model: Model<f64> = Model::new(&cfg, 5).unwrap();
        // Zero every backbone parameter and drive the ESA gates shut so
        // the group transfer function is exactly zero.
        model.visit_params(&mut |path, t| {
            if path.starts_with("ctg.") {
                let v = if path.ends_with("esa.restore.bias") { -60.0 } else { 0.0 };
                *t = Tensor::param(t.shape(), vec![v; t.len()]).unwrap();
            }
        });
        let x = probe_tensor(&[3, 16, 16], 6);
        let full = model.forward(&x).unwrap();
        // groups now map any input to ~0, so X_d = X_s and the output is
        // head(shallow(x)); the shut gate is sigmoid(-60), not exactly 0
        let shallow = model.shallow.forward(&x).unwrap();
        let reference =
            crate::tensor::pixel_shuffle(&model.head.forward(&shallow).unwrap(), cfg.scale)
                .unwrap();
        for (a, b) in full.data().iter().zip(reference.data()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn first_conv_param_count() {
        let mut model: Model<f32> = Model::new(&ModelConfig::default(), 0).unwrap();
        let rows = model.param_breakdown();
        assert_eq!(rows[0], ("shallow.weight".to_string(), 1728));
        assert_eq!(rows[1], ("shallow.bias".to_string(), 64));
    }

    #[test]
    fn default_param_counts_near_published_totals() {
        for (variant, scale, target) in [
            (Variant::Full, 2usize, 778_000f64),
            (Variant::Full, 3, 787_000.0),
            (Variant::Full, 4, 799_000.0),
            (Variant::Lite, 2, 349_000.0),
            (Variant::Lite, 3, 358_000.0),
            (Variant::Lite, 4, 370_000.0),
        ] {
            let cfg = ModelConfig { variant, scale, ..ModelConfig::default() };
            let mut model: Model<f32> = Model::new(&cfg, 0).unwrap();
            let count = model.param_count() as f64;
            let dev = (count - target).abs() / target;
            assert!(dev <= 0.10, "{variant} x{scale}: {count} vs {target} ({:.1}%)", dev * 100.0);
        }
    }

    #[test]
    fn lite_is_smaller_than_full() {
        let full_cfg = ModelConfig::default();
        let lite_cfg = ModelConfig { variant: Variant::Lite, ..ModelConfig::default() };
        let mut full: Model<f32> = Model::new(&full_cfg, 0).unwrap();
        let mut lite: Model<f32> = Model::new(&lite_cfg, 0).unwrap();
        assert!(lite.param_count() < full.param_count());
    }

    #[test]
    fn flops_monotone_in_area() {
        let cfg = ModelConfig::default();
        let a = flops_estimate(&cfg, 64, 64);
        let b = flops_estimate(&cfg, 64, 128);
        let c = flops_estimate(&cfg, 128, 128);
        assert!(a < b && b < c);
    }

    #[test]
    fn single_conv_flops_closed_form() {
        // 3x3 conv 3->64 on 64x64: 2*(3*3*3*64)*64*64 MAC-flops + bias adds
        assert_eq!(conv_flops(3, 64, 3, 64, 64), 14_155_776 + 64 * 64 * 64);
    }
}
