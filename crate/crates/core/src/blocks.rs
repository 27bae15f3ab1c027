//! Composite network blocks: cube transformer blocks, MBConv, enhanced
//! spatial attention, and their assembly into the full and lite groups.

use crate::cube::{multi_head_cube_attention, CubeSpec};
use crate::error::{Error, Result};
use crate::nn::{Conv2d, DwConv2d, Initializer, LayerNorm2d, ParamVisitor};
use crate::tensor::{self, Element, Tensor};

/// Everything a group needs to know about its width and attention
/// geometry; derived from the model configuration.
#[derive(Clone, Copy, Debug)]
pub struct BlockSettings {
    pub channels: usize,
    pub heads: usize,
    pub intra_spec: CubeSpec,
    pub inter_spec: CubeSpec,
    pub ffn_expansion: f64,
    pub mbconv_expansion: f64,
    pub qkv_kernel: usize,
    pub transposed_affinity: bool,
}

pub const SE_REDUCTION: usize = 4;
pub const SHUFFLE_GROUPS: usize = 2;

fn expanded(channels: usize, ratio: f64) -> usize {
    ((channels as f64 * ratio).round() as usize).max(1)
}

/// Q/K/V projection, multi-head cube attention, output projection.
pub struct CubeAttentionLayer<T: Element> {
    q: Conv2d<T>,
    k: Conv2d<T>,
    v: Conv2d<T>,
    proj: Conv2d<T>,
    heads: usize,
    spec: CubeSpec,
    transposed: bool,
}

impl<T: Element> CubeAttentionLayer<T> {
    pub fn new(
        init: &mut Initializer,
        channels: usize,
        heads: usize,
        spec: CubeSpec,
        qkv_kernel: usize,
        transposed: bool,
    ) -> Result<Self> {
        if heads == 0 || channels % heads != 0 {
            return Err(Error::config(format!(
                "attention: {channels} channels not divisible into {heads} heads"
            )));
        }
        let pad = qkv_kernel / 2;
        Ok(CubeAttentionLayer {
            q: Conv2d::new(init, channels, channels, qkv_kernel, 1, pad)?,
            k: Conv2d::new(init, channels, channels, qkv_kernel, 1, pad)?,
            v: Conv2d::new(init, channels, channels, qkv_kernel, 1, pad)?,
            proj: Conv2d::new(init, channels, channels, 1, 1, 0)?,
            heads,
            spec,
            transposed,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let q = self.q.forward(x)?;
        let k = self.k.forward(x)?;
        let v = self.v.forward(x)?;
        let core = multi_head_cube_attention(&q, &k, &v, self.heads, &self.spec, self.transposed)?;
        self.proj.forward(&core)
    }

    pub fn visit_params(&mut self, prefix: &str, f: ParamVisitor<T>) {
        self.q.visit_params(&format!("{prefix}.q"), f);
        self.k.visit_params(&format!("{prefix}.k"), f);
        self.v.visit_params(&format!("{prefix}.v"), f);
        self.proj.visit_params(&format!("{prefix}.proj"), f);
    }
}

/// Feed-forward network: 1x1 expand, GELU, 3x3 depthwise, GELU, 1x1
/// project.
pub struct Ffn<T: Element> {
    conv1: Conv2d<T>,
    dw: DwConv2d<T>,
    conv2: Conv2d<T>,
}

impl<T: Element> Ffn<T> {
    pub fn new(init: &mut Initializer, channels: usize, expansion: f64) -> Result<Self> {
        let hidden = expanded(channels, expansion);
        Ok(Ffn {
            conv1: Conv2d::new(init, channels, hidden, 1, 1, 0)?,
            dw: DwConv2d::new(init, hidden, 3, 1, 1)?,
            conv2: Conv2d::new(init, hidden, channels, 1, 1, 0)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let t = tensor::gelu(&self.conv1.forward(x)?)?;
        let t = tensor::gelu(&self.dw.forward(&t)?)?;
        self.conv2.forward(&t)
    }

    pub fn visit_params(&mut self, prefix: &str, f: ParamVisitor<T>) {
        self.conv1.visit_params(&format!("{prefix}.conv1"), f);
        self.dw.visit_params(&format!("{prefix}.dw"), f);
        self.conv2.visit_params(&format!("{prefix}.conv2"), f);
    }
}

/// Cube transformer block: `mid = x + Attn(LN(x))`, `out = mid + FFN(LN(mid))`.
pub struct Ctb<T: Element> {
    ln1: LayerNorm2d<T>,
    attn: CubeAttentionLayer<T>,
    ln2: LayerNorm2d<T>,
    ffn: Ffn<T>,
}

impl<T: Element> Ctb<T> {
    pub fn new(
        init: &mut Initializer,
        channels: usize,
        heads: usize,
        spec: CubeSpec,
        ffn_expansion: f64,
        qkv_kernel: usize,
        transposed: bool,
    ) -> Result<Self> {
        Ok(Ctb {
            ln1: LayerNorm2d::new(init, channels)?,
            attn: CubeAttentionLayer::new(init, channels, heads, spec, qkv_kernel, transposed)?,
            ln2: LayerNorm2d::new(init, channels)?,
            ffn: Ffn::new(init, channels, ffn_expansion)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mid = x.add(&self.attn.forward(&self.ln1.forward(x)?)?)?;
        mid.add(&self.ffn.forward(&self.ln2.forward(&mid)?)?)
    }

    pub fn visit_params(&mut self, prefix: &str, f: ParamVisitor<T>) {
        self.ln1.visit_params(&format!("{prefix}.ln1"), f);
        self.attn.visit_params(&format!("{prefix}.attn"), f);
        self.ln2.visit_params(&format!("{prefix}.ln2"), f);
        self.ffn.visit_params(&format!("{prefix}.ffn"), f);
    }
}

/// Channel gate from globally pooled statistics.
pub struct SqueezeExcite<T: Element> {
    fc1: Conv2d<T>,
    fc2: Conv2d<T>,
}

impl<T: Element> SqueezeExcite<T> {
    pub fn new(init: &mut Initializer, channels: usize, reduction: usize) -> Result<Self> {
        let hidden = (channels / reduction).max(1);
        Ok(SqueezeExcite {
            fc1: Conv2d::new(init, channels, hidden, 1, 1, 0)?,
            fc2: Conv2d::new(init, hidden, channels, 1, 1, 0)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let pooled = tensor::adaptive_avg_pool2d(x, 1, 1)?;
        let s = tensor::relu(&self.fc1.forward(&pooled)?)?;
        let s = tensor::sigmoid(&self.fc2.forward(&s)?)?;
        tensor::scale_channels(x, &s)
    }

    pub fn visit_params(&mut self, prefix: &str, f: ParamVisitor<T>) {
        self.fc1.visit_params(&format!("{prefix}.fc1"), f);
        self.fc2.visit_params(&format!("{prefix}.fc2"), f);
    }
}

/// Mobile inverted bottleneck with squeeze-excitation and residual.
pub struct MbConv<T: Element> {
    expand: Conv2d<T>,
    dw: DwConv2d<T>,
    se: SqueezeExcite<T>,
    project: Conv2d<T>,
}

impl<T: Element> MbConv<T> {
    pub fn new(init: &mut Initializer, channels: usize, expansion: f64) -> Result<Self> {
        let hidden = expanded(channels, expansion);
        Ok(MbConv {
            expand: Conv2d::new(init, channels, hidden, 1, 1, 0)?,
            dw: DwConv2d::new(init, hidden, 3, 1, 1)?,
            se: SqueezeExcite::new(init, hidden, SE_REDUCTION)?,
            project: Conv2d::new(init, hidden, channels, 1, 1, 0)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let e = tensor::gelu(&self.expand.forward(x)?)?;
        let e = tensor::gelu(&self.dw.forward(&e)?)?;
        let e = self.se.forward(&e)?;
        x.add(&self.project.forward(&e)?)
    }

    pub fn visit_params(&mut self, prefix: &str, f: ParamVisitor<T>) {
        self.expand.visit_params(&format!("{prefix}.expand"), f);
        self.dw.visit_params(&format!("{prefix}.dw"), f);
        self.se.visit_params(&format!("{prefix}.se"), f);
        self.project.visit_params(&format!("{prefix}.project"), f);
    }
}

/// Enhanced spatial attention: a downsample/upsample pyramid producing a
/// sigmoid gate that multiplies the input.
pub struct Esa<T: Element> {
    reduce: Conv2d<T>,
    down: Conv2d<T>,
    group: Vec<Conv2d<T>>,
    restore: Conv2d<T>,
}

/// Minimum spatial extent the stride-2 conv plus 7x7/3 max-pool accepts.
pub const ESA_MIN_EXTENT: usize = 15;

impl<T: Element> Esa<T> {
    pub fn new(init: &mut Initializer, channels: usize) -> Result<Self> {
        let f = (channels / 4).max(1);
        Ok(Esa {
            reduce: Conv2d::new(init, channels, f, 1, 1, 0)?,
            down: Conv2d::new(init, f, f, 3, 2, 0)?,
            group: (0..3)
                .map(|_| Conv2d::new(init, f, f, 3, 1, 1))
                .collect::<Result<_>>()?,
            restore: Conv2d::new(init, f, channels, 1, 1, 0)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w) = (x.shape()[1], x.shape()[2]);
        if h < ESA_MIN_EXTENT || w < ESA_MIN_EXTENT {
            return Err(Error::config(format!(
                "esa: spatial extent {h}x{w} too small for the pooling pyramid (needs {ESA_MIN_EXTENT}x{ESA_MIN_EXTENT})"
            )));
        }
        let c1 = self.reduce.forward(x)?;
        let t = self.down.forward(&c1)?;
        let t = tensor::max_pool2d(&t, 7, 3)?;
        let t = tensor::relu(&self.group[0].forward(&t)?)?;
        let t = tensor::relu(&self.group[1].forward(&t)?)?;
        let t = self.group[2].forward(&t)?;
        let t = tensor::upsample_bilinear(&t, h, w)?;
        let t = t.add(&c1)?;
        let gate = tensor::sigmoid(&self.restore.forward(&t)?)?;
        x.mul(&gate)
    }

    pub fn visit_params(&mut self, prefix: &str, f: ParamVisitor<T>) {
        self.reduce.visit_params(&format!("{prefix}.reduce"), f);
        self.down.visit_params(&format!("{prefix}.down"), f);
        for (i, conv) in self.group.iter_mut().enumerate() {
            conv.visit_params(&format!("{prefix}.group{i}"), f);
        }
        self.restore.visit_params(&format!("{prefix}.restore"), f);
    }
}

/// Cube transformer group: MBConv, channel shuffle, Intra-CTB,
/// Inter-CTB, ESA.
pub struct Ctg<T: Element> {
    mbconv: MbConv<T>,
    intra: Ctb<T>,
    inter: Ctb<T>,
    esa: Esa<T>,
}

impl<T: Element> Ctg<T> {
    pub fn new(init: &mut Initializer, s: &BlockSettings) -> Result<Self> {
        Ok(Ctg {
            mbconv: MbConv::new(init, s.channels, s.mbconv_expansion)?,
            intra: Ctb::new(
                init,
                s.channels,
                s.heads,
                s.intra_spec,
                s.ffn_expansion,
                s.qkv_kernel,
                s.transposed_affinity,
            )?,
            inter: Ctb::new(
                init,
                s.channels,
                s.heads,
                s.inter_spec,
                s.ffn_expansion,
                s.qkv_kernel,
                s.transposed_affinity,
            )?,
            esa: Esa::new(init, s.channels)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let t = self.mbconv.forward(x)?;
        let t = tensor::channel_shuffle(&t, SHUFFLE_GROUPS)?;
        let t = self.intra.forward(&t)?;
        let t = self.inter.forward(&t)?;
        self.esa.forward(&t)
    }

    pub fn visit_params(&mut self, prefix: &str, f: ParamVisitor<T>) {
        self.mbconv.visit_params(&format!("{prefix}.mbconv"), f);
        self.intra.visit_params(&format!("{prefix}.intra"), f);
        self.inter.visit_params(&format!("{prefix}.inter"), f);
        self.esa.visit_params(&format!("{prefix}.esa"), f);
    }
}

/// Lite group: after shuffle the channels split in half, only the first
/// half runs through the transformer blocks, and the merged features add
/// the group input back before ESA.
pub struct CtgLite<T: Element> {
    mbconv: MbConv<T>,
    intra: Ctb<T>,
    inter: Ctb<T>,
    esa: Esa<T>,
}

impl<T: Element> CtgLite<T> {
    pub fn new(init: &mut Initializer, s: &BlockSettings) -> Result<Self> {
        if s.channels % 2 != 0 {
            return Err(Error::config(format!(
                "ctg-lite: channel count {} must be even for the split",
                s.channels
            )));
        }
        let half = s.channels / 2;
        if half % s.heads != 0 {
            return Err(Error::config(format!(
                "ctg-lite: half width {half} not divisible into {} heads",
                s.heads
            )));
        }
        Ok(CtgLite {
            mbconv: MbConv::new(init, s.channels, s.mbconv_expansion)?,
            intra: Ctb::new(
                init,
                half,
                s.heads,
                s.intra_spec,
                s.ffn_expansion,
                s.qkv_kernel,
                s.transposed_affinity,
            )?,
            inter: Ctb::new(
                init,
                half,
                s.heads,
                s.inter_spec,
                s.ffn_expansion,
                s.qkv_kernel,
                s.transposed_affinity,
            )?,
            esa: Esa::new(init, s.channels)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let t = self.mbconv.forward(x)?;
        let t = tensor::channel_shuffle(&t, SHUFFLE_GROUPS)?;
        let halves = tensor::split(&t, 0, 2)?;
        let x1 = self.inter.forward(&self.intra.forward(&halves[0])?)?;
        let merged = tensor::concat(&[x1, halves[1].clone()], 0)?;
        self.esa.forward(&merged.add(x)?)
    }

    pub fn visit_params(&mut self, prefix: &str, f: ParamVisitor<T>) {
        self.mbconv.visit_params(&format!("{prefix}.mbconv"), f);
        self.intra.visit_params(&format!("{prefix}.intra"), f);
        self.inter.visit_params(&format!("{prefix}.inter"), f);
        self.esa.visit_params(&format!("{prefix}.esa"), f);
    }
}

/// Split a feature map into its two channel halves.
pub fn channel_split<T: Element>(x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let halves = tensor::split(x, 0, 2)?;
    Ok((halves[0].clone(), halves[1].clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::probe_tensor;
    use crate::tensor::element_multiset;

    fn settings(channels: usize, heads: usize) -> BlockSettings {
        BlockSettings {
            channels,
            heads,
            intra_spec: CubeSpec::block(4, 4, 2),
            inter_spec: CubeSpec::grid(4, 4, 2),
            ffn_expansion: 2.0,
            mbconv_expansion: 2.0,
            qkv_kernel: 1,
            transposed_affinity: false,
        }
    }

    fn zero_params<V: Element>(visit: impl FnOnce(ParamVisitor<V>)) {
        visit(&mut |path: String, t: &mut Tensor<V>| {
            if !path.ends_with(".gamma") {
                *t = Tensor::param(t.shape(), vec![V::zero(); t.len()]).unwrap();
            }
        });
    }

    #[test]
    fn ctb_zeroed_params_is_identity() {
        let mut init = Initializer::new(3);
        let mut ctb: Ctb<f64> =
            Ctb::new(&mut init, 8, 2, CubeSpec::block(4, 4, 2), 2.0, 1, false).unwrap();
        zero_params(|f| ctb.visit_params("ctb", f));
        let x = probe_tensor(&[8, 8, 8], 5);
        let y = ctb.forward(&x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn ctb_preserves_shape() {
        let mut init = Initializer::new(4);
        let ctb: Ctb<f32> =
            Ctb::new(&mut init, 8, 2, CubeSpec::block(4, 4, 2), 2.0, 1, false).unwrap();
        let x = probe_tensor(&[8, 16, 16], 6).cast::<f32>();
        let y = ctb.forward(&x).unwrap();
        assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn mbconv_zeroed_params_is_identity() {
        let mut init = Initializer::new(5);
        let mut mb: MbConv<f64> = MbConv::new(&mut init, 8, 2.0).unwrap();
        zero_params(|f| mb.visit_params("mb", f));
        let x = probe_tensor(&[8, 6, 6], 7);
        let y = mb.forward(&x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn se_gate_is_constant_over_space() {
        let mut init = Initializer::new(6);
        let se: SqueezeExcite<f64> = SqueezeExcite::new(&mut init, 8, 4).unwrap();
        let x = Tensor::full(&[8, 4, 4], 1.0);
        let y = se.forward(&x).unwrap();
        for ch in 0..8 {
            let plane = &y.data()[ch * 16..(ch + 1) * 16];
            for &v in plane {
                assert_eq!(v, plane[0]);
            }
        }
    }

    #[test]
    fn esa_saturated_gate_passes_input() {
        let mut init = Initializer::new(7);
        let mut esa: Esa<f64> = Esa::new(&mut init, 8).unwrap();
        // zero everything, then push the restore bias far positive
        zero_params(|f| esa.visit_params("esa", f));
        esa.visit_params("esa", &mut |path: String, t: &mut Tensor<f64>| {
            if path == "esa.restore.bias" {
                *t = Tensor::param(t.shape(), vec![40.0; t.len()]).unwrap();
            }
        });
        let x = probe_tensor(&[8, 16, 16], 8);
        let y = esa.forward(&x).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn esa_zero_gate_zeroes_output() {
        let mut init = Initializer::new(8);
        let mut esa: Esa<f64> = Esa::new(&mut init, 8).unwrap();
        zero_params(|f| esa.visit_params("esa", f));
        esa.visit_params("esa", &mut |path: String, t: &mut Tensor<f64>| {
            if path == "esa.restore.bias" {
                *t = Tensor::param(t.shape(), vec![-40.0; t.len()]).unwrap();
            }
        });
        let x = probe_tensor(&[8, 16, 16], 9);
        let y = esa.forward(&x).unwrap();
        for &v in y.data() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn esa_too_small_input_is_config_error() {
        let mut init = Initializer::new(9);
        let esa: Esa<f64> = Esa::new(&mut init, 8).unwrap();
        let x = Tensor::zeros(&[8, 8, 8]);
        assert!(matches!(esa.forward(&x), Err(Error::Config(_))));
    }

    #[test]
    fn ctg_shape_and_determinism() {
        let mut init = Initializer::new(10);
        let ctg: Ctg<f32> = Ctg::new(&mut init, &settings(8, 2)).unwrap();
        let x = probe_tensor(&[8, 16, 16], 10).cast::<f32>();
        let a = ctg.forward(&x).unwrap();
        let b = ctg.forward(&x).unwrap();
        assert_eq!(a.shape(), x.shape());
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn ctg_lite_bypass_half_unchanged() {
        let mut init = Initializer::new(11);
        let mut lite: CtgLite<f64> = CtgLite::new(&mut init, &settings(8, 2)).unwrap();
        // Zero only the CTB parameters; MBConv/ESA keep their weights.
        lite.visit_params("g", &mut |path: String, t: &mut Tensor<f64>| {
            if (path.contains(".intra.") || path.contains(".inter.")) && !path.ends_with(".gamma") {
                *t = Tensor::param(t.shape(), vec![0.0; t.len()]).unwrap();
            }
        });
        let x = probe_tensor(&[8, 16, 16], 12);
        // With zeroed CTBs the first half is also untouched, so the merged
        // tensor equals shuffle(mbconv(x)) exactly.
        let mb = lite.mbconv.forward(&x).unwrap();
        let shuffled = tensor::channel_shuffle(&mb, SHUFFLE_GROUPS).unwrap();
        let merged = lite.forward(&x).unwrap();
        // invert the final ESA+residual by recomputing it from the expected
        // merged tensor: outputs must agree bit for bit
        let expect = lite.esa.forward(&shuffled.add(&x).unwrap()).unwrap();
        assert_eq!(merged.data(), expect.data());
    }

    #[test]
    fn channel_split_halves_and_roundtrip() {
        let x = probe_tensor(&[4, 2, 2], 13);
        let (a, b) = channel_split(&x).unwrap();
        assert_eq!(a.shape(), &[2, 2, 2]);
        assert_eq!(&x.data()[..8], a.data());
        assert_eq!(&x.data()[8..], b.data());
        let back = tensor::concat(&[a, b], 0).unwrap();
        assert_eq!(back.data(), x.data());
        assert_eq!(element_multiset(&back), element_multiset(&x));
    }

    #[test]
    fn split_after_shuffle_composed_index_map() {
        // shuffle(g=2) interleaves the two original channel groups, so the
        // split halves each mix them: half A position p holds original
        // channel (p%2)*(C/2) + p/2, half B the same offset by C/4.
        let c = 8usize;
        let data: Vec<f64> = (0..c).flat_map(|ch| vec![ch as f64; 4]).collect();
        let x = Tensor::new(&[c, 2, 2], data).unwrap();
        let (a, b) = channel_split(&tensor::channel_shuffle(&x, 2).unwrap()).unwrap();
        let expect_a: Vec<f64> = (0..c / 2)
            .flat_map(|p| vec![((p % 2) * (c / 2) + p / 2) as f64; 4])
            .collect();
        let expect_b: Vec<f64> = (0..c / 2)
            .flat_map(|p| vec![((p % 2) * (c / 2) + p / 2 + c / 4) as f64; 4])
            .collect();
        assert_eq!(a.data(), expect_a.as_slice());
        assert_eq!(b.data(), expect_b.as_slice());
    }
}
