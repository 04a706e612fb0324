//! Decoder parameter bundles: one GDT3 tensor per matrix plus a JSON
//! manifest naming each tensor and its shape.
//!
//! Tensors hold 32-bit floats, so a saved decoder is the f32-rounded version
//! of the in-memory one. Loading is exact: `load(save(load(b))) == load(b)`.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::attention::MultiHeadAttention;
use super::decoder::{Decoder, DecoderConfig, DecoderLayer, DetectionHeads};
use super::graph::{ObjectQuery, QuerySet, SceneBounds};
use super::mlp::{Activation, Dense, Mlp};
use crate::error::{Error, Result};
use crate::featcore::tensor::Tensor;

pub const MANIFEST_NAME: &str = "params.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleConfig {
    pub channels: usize,
    pub heads: usize,
    pub neighbors: usize,
    pub offset_scale: f64,
    pub num_classes: usize,
    pub num_layers: usize,
}

impl From<&DecoderConfig> for BundleConfig {
    fn from(c: &DecoderConfig) -> Self {
        Self {
            channels: c.channels,
            heads: c.heads,
            neighbors: c.neighbors,
            offset_scale: c.offset_scale,
            num_classes: c.num_classes,
            num_layers: c.num_layers,
        }
    }
}

impl From<&BundleConfig> for DecoderConfig {
    fn from(c: &BundleConfig) -> Self {
        Self {
            channels: c.channels,
            heads: c.heads,
            neighbors: c.neighbors,
            offset_scale: c.offset_scale,
            num_classes: c.num_classes,
            num_layers: c.num_layers,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub path: String,
    pub shape: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub config: BundleConfig,
    pub bounds: [[f64; 3]; 2],
    pub parameters: Vec<ParamEntry>,
}

/// Decoder plus its initial queries.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBundle {
    pub decoder: Decoder,
    pub queries: QuerySet,
}

struct Writer<'a> {
    dir: &'a Path,
    entries: Vec<ParamEntry>,
}

impl Writer<'_> {
    fn put(&mut self, name: String, shape: Vec<u64>, data: &[f64]) -> Result<()> {
        let file = format!("{name}.gdt3");
        let tensor = Tensor::new(shape.clone(), data.iter().map(|v| *v as f32).collect())?;
        tensor.write(&self.dir.join(&file))?;
        self.entries.push(ParamEntry { name, path: file, shape });
        Ok(())
    }

    fn mlp(&mut self, prefix: &str, mlp: &Mlp) -> Result<()> {
        for (i, layer) in mlp.layers().iter().enumerate() {
            self.dense(&format!("{prefix}.{i}"), layer)?;
        }
        Ok(())
    }

    fn dense(&mut self, prefix: &str, d: &Dense) -> Result<()> {
        let (o, i) = (d.out_dim() as u64, d.in_dim() as u64);
        self.put(format!("{prefix}.weight"), vec![o, i], d.weight())?;
        self.put(format!("{prefix}.bias"), vec![o], d.bias())
    }
}

pub fn save_bundle(bundle: &ParamBundle, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = Writer {
        dir,
        entries: Vec::new(),
    };
    let dec = &bundle.decoder;
    for (l, layer) in dec.layers.iter().enumerate() {
        w.mlp(&format!("layer{l}.ref_net"), &layer.ref_net)?;
        w.mlp(&format!("layer{l}.offset_net"), &layer.offset_net)?;
        w.mlp(&format!("layer{l}.weight_net"), &layer.weight_net)?;
        let a = &layer.attention;
        w.dense(&format!("layer{l}.attention.query"), &a.query_proj)?;
        w.dense(&format!("layer{l}.attention.key"), &a.key_proj)?;
        w.dense(&format!("layer{l}.attention.value"), &a.value_proj)?;
        w.dense(&format!("layer{l}.attention.output"), &a.output_proj)?;
        w.mlp(&format!("layer{l}.ffn"), &layer.ffn)?;
    }
    w.mlp("heads.cls", &dec.heads.cls)?;
    w.mlp("heads.reg", &dec.heads.reg)?;
    let qs = &bundle.queries;
    let flat: Vec<f64> = qs.queries.iter().flat_map(|q| q.embedding.iter().copied()).collect();
    w.put("queries".into(), vec![qs.len() as u64, qs.dim() as u64], &flat)?;

    let b = &qs.bounds;
    let manifest = BundleManifest {
        config: BundleConfig::from(&dec.config),
        bounds: [[b.min.x, b.min.y, b.min.z], [b.max.x, b.max.y, b.max.z]],
        parameters: w.entries,
    };
    let path = dir.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

struct Reader<'a> {
    dir: &'a Path,
    manifest: &'a BundleManifest,
}

impl Reader<'_> {
    fn get(&self, name: &str) -> Result<(Vec<u64>, Vec<f64>)> {
        let entry = self
            .manifest
            .parameters
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Config(format!("parameter bundle lacks {name:?}")))?;
        let path = self.dir.join(&entry.path);
        let t = Tensor::read(&path)?;
        if t.dims != entry.shape {
            return Err(Error::Tensor {
                path,
                reason: format!("shape {:?} does not match manifest {:?}", t.dims, entry.shape),
            });
        }
        Ok((t.dims, t.data.into_iter().map(f64::from).collect()))
    }

    fn has(&self, name: &str) -> bool {
        self.manifest.parameters.iter().any(|e| e.name == name)
    }

    fn dense(&self, prefix: &str, activation: Activation) -> Result<Dense> {
        let (shape, weight) = self.get(&format!("{prefix}.weight"))?;
        let (_, bias) = self.get(&format!("{prefix}.bias"))?;
        if shape.len() != 2 {
            return Err(Error::Config(format!("{prefix}.weight must be a matrix")));
        }
        Dense::new(shape[1] as usize, shape[0] as usize, weight, bias, activation)
    }

    /// Hidden layers use ReLU, the last layer is linear.
    fn mlp(&self, prefix: &str) -> Result<Mlp> {
        let mut count = 0;
        while self.has(&format!("{prefix}.{count}.weight")) {
            count += 1;
        }
        if count == 0 {
            return Err(Error::Config(format!("parameter bundle lacks {prefix}")));
        }
        let layers = (0..count)
            .map(|i| {
                let act = if i + 1 == count { Activation::Identity } else { Activation::Relu };
                self.dense(&format!("{prefix}.{i}"), act)
            })
            .collect::<Result<Vec<_>>>()?;
        Mlp::new(layers)
    }
}

pub fn load_bundle(manifest_path: &Path) -> Result<ParamBundle> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: BundleManifest = serde_json::from_str(&text)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let r = Reader {
        dir,
        manifest: &manifest,
    };
    let config = DecoderConfig::from(&manifest.config);
    config.validate()?;
    let layers = (0..config.num_layers)
        .map(|l| {
            let attention = MultiHeadAttention::new(
                config.heads,
                r.dense(&format!("layer{l}.attention.query"), Activation::Identity)?,
                r.dense(&format!("layer{l}.attention.key"), Activation::Identity)?,
                r.dense(&format!("layer{l}.attention.value"), Activation::Identity)?,
                r.dense(&format!("layer{l}.attention.output"), Activation::Identity)?,
            )?;
            Ok(DecoderLayer {
                ref_net: r.mlp(&format!("layer{l}.ref_net"))?,
                offset_net: r.mlp(&format!("layer{l}.offset_net"))?,
                weight_net: r.mlp(&format!("layer{l}.weight_net"))?,
                attention,
                ffn: r.mlp(&format!("layer{l}.ffn"))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let heads = DetectionHeads {
        cls: r.mlp("heads.cls")?,
        reg: r.mlp("heads.reg")?,
    };
    let decoder = Decoder::new(config, layers, heads)?;

    let (shape, flat) = r.get("queries")?;
    if shape.len() != 2 || shape[0] == 0 {
        return Err(Error::Config("queries must be a non-empty (M, C) matrix".into()));
    }
    let queries = flat
        .chunks_exact(shape[1] as usize)
        .map(|row| ObjectQuery::new(row.to_vec()))
        .collect();
    let [lo, hi] = manifest.bounds;
    let bounds = SceneBounds::new(Vector3::from(lo), Vector3::from(hi))?;
    Ok(ParamBundle {
        decoder,
        queries: QuerySet::new(queries, bounds)?,
    })
}
