//! Checkpoint container: format version, config as key-value text,
//! parameter blobs (little-endian f32, row-major, keyed by path),
//! optimizer moments, iteration counter, and the master RNG seed.
//! Round trips are byte-exact.

use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;

use super::adam::{Adam, AdamHyper};
use crate::cube::{CubeSpec, SampleMode};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, Variant};

const MAGIC: &[u8; 8] = b"CUBEFCK1";

pub struct Checkpoint {
    pub config: ModelConfig,
    pub iteration: u64,
    pub seed: u64,
    pub params: Vec<(String, Vec<usize>, Vec<f32>)>,
    pub adam_step: u64,
    pub moments: Vec<(String, Vec<f32>, Vec<f32>)>,
}

fn spec_to_string(spec: &CubeSpec) -> String {
    let mode = match spec.mode {
        SampleMode::Block => "block",
        SampleMode::Grid => "grid",
    };
    format!("{mode}:{}x{}x{}", spec.h, spec.w, spec.c)
}

fn spec_from_string(s: &str) -> Option<CubeSpec> {
    let (mode, dims) = s.split_once(':')?;
    let parts: Vec<usize> = dims.split('x').map(|p| p.parse().ok()).collect::<Option<_>>()?;
    if parts.len() != 3 {
        return None;
    }
    Some(match mode {
        "block" => CubeSpec::block(parts[0], parts[1], parts[2]),
        "grid" => CubeSpec::grid(parts[0], parts[1], parts[2]),
        _ => return None,
    })
}

pub fn config_to_kv(config: &ModelConfig) -> String {
    let mut s = String::new();
    s.push_str(&format!("variant={}\n", config.variant));
    s.push_str(&format!("n_groups={}\n", config.n_groups));
    s.push_str(&format!("channels={}\n", config.channels));
    s.push_str(&format!("heads={}\n", config.heads));
    s.push_str(&format!("intra_spec={}\n", spec_to_string(&config.intra_spec)));
    s.push_str(&format!("inter_spec={}\n", spec_to_string(&config.inter_spec)));
    s.push_str(&format!("scale={}\n", config.scale));
    s.push_str(&format!("ffn_expansion={}\n", config.ffn_expansion));
    s.push_str(&format!("mbconv_expansion={}\n", config.mbconv_expansion));
    s.push_str(&format!("qkv_kernel={}\n", config.qkv_kernel));
    s.push_str(&format!("transposed_affinity={}\n", config.transposed_affinity));
    s
}

pub fn config_from_kv(text: &str) -> Result<ModelConfig> {
    let mut map = IndexMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| -> Result<&String> {
        map.get(k).ok_or_else(|| Error::config(format!("checkpoint config missing key '{k}'")))
    };
    let parse_usize = |k: &str| -> Result<usize> {
        get(k)?.parse().map_err(|_| Error::config(format!("bad integer for '{k}'")))
    };
    let parse_f64 = |k: &str| -> Result<f64> {
        get(k)?.parse().map_err(|_| Error::config(format!("bad float for '{k}'")))
    };
    Ok(ModelConfig {
        variant: get("variant")?.parse::<Variant>()?,
        n_groups: parse_usize("n_groups")?,
        channels: parse_usize("channels")?,
        heads: parse_usize("heads")?,
        intra_spec: spec_from_string(get("intra_spec")?)
            .ok_or_else(|| Error::config("bad intra_spec"))?,
        inter_spec: spec_from_string(get("inter_spec")?)
            .ok_or_else(|| Error::config("bad inter_spec"))?,
        scale: parse_usize("scale")?,
        ffn_expansion: parse_f64("ffn_expansion")?,
        mbconv_expansion: parse_f64("mbconv_expansion")?,
        qkv_kernel: parse_usize("qkv_kernel")?,
        transposed_affinity: get("transposed_affinity")? == "true",
    })
}

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn bytes(&mut self, b: &[u8]) -> std::io::Result<()> {
        self.u32(b.len() as u32)?;
        self.0.write_all(b)
    }
    fn f32s(&mut self, vs: &[f32]) -> std::io::Result<()> {
        self.u32(vs.len() as u32)?;
        for v in vs {
            self.0.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn u32(&mut self) -> std::io::Result<u32> {
        let mut b = [0u8; 4];
        self.0.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn u64(&mut self) -> std::io::Result<u64> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    fn bytes(&mut self) -> std::io::Result<Vec<u8>> {
        let n = self.u32()? as usize;
        let mut b = vec![0u8; n];
        self.0.read_exact(&mut b)?;
        Ok(b)
    }
    fn f32s(&mut self) -> std::io::Result<Vec<f32>> {
        let n = self.u32()? as usize;
        let mut out = Vec::with_capacity(n);
        let mut b = [0u8; 4];
        for _ in 0..n {
            self.0.read_exact(&mut b)?;
            out.push(f32::from_le_bytes(b));
        }
        Ok(out)
    }
}

impl Checkpoint {
    /// Snapshot a model plus optimizer at an iteration boundary.
    pub fn capture(model: &mut Model<f32>, adam: &Adam<f32>, iteration: u64, seed: u64) -> Self {
        let mut params = Vec::new();
        model.visit_params(&mut |path, t| {
            params.push((path, t.shape().to_vec(), t.data().to_vec()));
        });
        let moments = adam
            .moments
            .iter()
            .map(|(path, (m, v))| (path.clone(), m.clone(), v.clone()))
            .collect();
        Checkpoint {
            config: model.config,
            iteration,
            seed,
            params,
            adam_step: adam.step,
            moments,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = Writer(std::io::BufWriter::new(file));
        let mut run = || -> std::io::Result<()> {
            w.0.write_all(MAGIC)?;
            w.bytes(config_to_kv(&self.config).as_bytes())?;
            w.u64(self.iteration)?;
            w.u64(self.seed)?;
            w.u32(self.params.len() as u32)?;
            for (p, dims, data) in &self.params {
                w.bytes(p.as_bytes())?;
                w.u32(dims.len() as u32)?;
                for &d in dims {
                    w.u32(d as u32)?;
                }
                w.f32s(data)?;
            }
            w.u64(self.adam_step)?;
            w.u32(self.moments.len() as u32)?;
            for (p, m, v) in &self.moments {
                w.bytes(p.as_bytes())?;
                w.f32s(m)?;
                w.f32s(v)?;
            }
            w.0.flush()
        };
        run().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = Reader(std::io::BufReader::new(file));
        let corrupt = |reason: &str| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut magic = [0u8; 8];
        r.0.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != MAGIC {
            return Err(corrupt("bad magic (not a checkpoint or unknown version)"));
        }
        let mut run = || -> std::io::Result<(String, u64, u64, Vec<(String, Vec<usize>, Vec<f32>)>, u64, Vec<(String, Vec<f32>, Vec<f32>)>)> {
            let kv = String::from_utf8_lossy(&r.bytes()?).to_string();
            let iteration = r.u64()?;
            let seed = r.u64()?;
            let n_params = r.u32()? as usize;
            let mut params = Vec::with_capacity(n_params);
            for _ in 0..n_params {
                let path_s = String::from_utf8_lossy(&r.bytes()?).to_string();
                let rank = r.u32()? as usize;
                let mut dims = Vec::with_capacity(rank);
                for _ in 0..rank {
                    dims.push(r.u32()? as usize);
                }
                let data = r.f32s()?;
                params.push((path_s, dims, data));
            }
            let adam_step = r.u64()?;
            let n_moments = r.u32()? as usize;
            let mut moments = Vec::with_capacity(n_moments);
            for _ in 0..n_moments {
                let path_s = String::from_utf8_lossy(&r.bytes()?).to_string();
                let m = r.f32s()?;
                let v = r.f32s()?;
                moments.push((path_s, m, v));
            }
            Ok((kv, iteration, seed, params, adam_step, moments))
        };
        let (kv, iteration, seed, params, adam_step, moments) =
            run().map_err(|_| corrupt("truncated or malformed payload"))?;
        let config = config_from_kv(&kv)
            .map_err(|e| corrupt(&format!("bad config block: {e}")))?;
        Ok(Checkpoint { config, iteration, seed, params, adam_step, moments })
    }

    /// Rebuild the model: construct from config + seed, then overwrite
    /// every parameter from the stored blobs.
    pub fn restore_model(&self) -> Result<Model<f32>> {
        let mut model: Model<f32> = Model::new(&self.config, self.seed)?;
        let mut blobs: IndexMap<&str, (&Vec<usize>, &Vec<f32>)> = self
            .params
            .iter()
            .map(|(p, d, v)| (p.as_str(), (d, v)))
            .collect();
        let mut missing = Vec::new();
        model.visit_params(&mut |path, t| {
            match blobs.swap_remove(path.as_str()) {
                Some((dims, data)) if dims == t.shape() && data.len() == t.len() => {
                    *t = crate::tensor::Tensor::param(t.shape(), data.clone()).expect("shape");
                }
                _ => missing.push(path),
            }
        });
        if !missing.is_empty() || !blobs.is_empty() {
            return Err(Error::config(format!(
                "checkpoint does not match config: missing {missing:?}, extra {:?}",
                blobs.keys().collect::<Vec<_>>()
            )));
        }
        Ok(model)
    }

    pub fn restore_adam(&self, hyper: AdamHyper) -> Adam<f32> {
        let mut adam = Adam::new(hyper);
        adam.step = self.adam_step;
        for (p, m, v) in &self.moments {
            adam.moments.insert(p.clone(), (m.clone(), v.clone()));
        }
        adam
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny_config() -> ModelConfig {
        ModelConfig { n_groups: 1, channels: 16, heads: 2, ..ModelConfig::default() }
    }

    #[test]
    fn config_kv_roundtrip() {
        let cfg = tiny_config();
        let kv = config_to_kv(&cfg);
        let back = config_from_kv(&kv).unwrap();
        assert_eq!(config_to_kv(&back), kv);
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut model: Model<f32> = Model::new(&tiny_config(), 9).unwrap();
        let adam = Adam::new(AdamHyper::default());
        let ck = Checkpoint::capture(&mut model, &adam, 123, 9);
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        ck.save(&p1).unwrap();
        let loaded = Checkpoint::load(&p1).unwrap();
        loaded.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn restore_reproduces_forward() {
        let dir = tempfile::tempdir().unwrap();
        let mut model: Model<f32> = Model::new(&tiny_config(), 17).unwrap();
        let adam = Adam::new(AdamHyper::default());
        let path = dir.path().join("m.ckpt");
        Checkpoint::capture(&mut model, &adam, 0, 17).save(&path).unwrap();
        let restored = Checkpoint::load(&path).unwrap().restore_model().unwrap();
        let x = crate::gradcheck::probe_tensor(&[3, 16, 16], 4).cast::<f32>();
        assert_eq!(
            model.forward(&x).unwrap().data(),
            restored.forward(&x).unwrap().data()
        );
    }

    #[test]
    fn corrupt_file_reports_checkpoint_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(matches!(
            Checkpoint::load(&path),
            Err(Error::Checkpoint { .. })
        ));
    }
}
