//! Weight files: a JSON manifest naming raw little-endian `f32` tensors.
//!
//! Layers are numbered encoders first, then decoders. Names follow
//! `layer{i}.head{j}.wq|wk|wv|bq|bk|bv`, `layer{i}.wo|bo|w1|b1|w2|b2` and
//! `layer{i}.ln1|ln2.gamma|beta`. Decoder layers also carry
//! `layer{i}.cross.head{j}.*`, `layer{i}.cross.wo|bo` and
//! `layer{i}.ln3.gamma|beta` for cross-attention.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ModelConfig;
use crate::datapath::weights::{
    AttentionWeights, CrossAttention, FeedForwardWeights, HeadWeights, LayerNormParams,
    LayerWeights, ModelWeights, DEFAULT_LN_EPS,
};
use crate::datapath::{DatapathError, Tensor};

pub const F32LE: &str = "f32le";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported tensor format `{0}` (only f32le)")]
    Format(String),
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("tensor `{0}` listed twice")]
    DuplicateName(String),
    #[error("tensor `{name}`: file holds {got} bytes, expected {expected}")]
    ByteLength {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("tensor `{name}` is {rows}x{cols}, expected {want_rows}x{want_cols}")]
    Shape {
        name: String,
        rows: usize,
        cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error(transparent)]
    Datapath(#[from] DatapathError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ManifestError + '_ {
    move |source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Relative to the manifest's directory.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorManifest {
    pub format: String,
    pub tensors: Vec<TensorEntry>,
    /// Layer-norm stabilizer applied to every normalization.
    #[serde(default = "default_eps")]
    pub ln_eps: f64,
}

fn default_eps() -> f64 {
    DEFAULT_LN_EPS
}

/// Reads a raw `f32le` tensor of the given shape.
pub fn read_f32le(path: &Path, rows: usize, cols: usize) -> Result<Tensor<f64>, ManifestError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let expected = 4 * rows * cols;
    if bytes.len() != expected {
        return Err(ManifestError::ByteLength {
            name: path.display().to_string(),
            expected,
            got: bytes.len(),
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(Tensor::from_vec(rows, cols, data)?)
}

/// Little-endian `f32` bytes of `t`, row-major.
pub fn f32le_bytes(t: &Tensor<f64>) -> Vec<u8> {
    t.data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

pub fn write_f32le(path: &Path, t: &Tensor<f64>) -> Result<(), ManifestError> {
    fs::write(path, f32le_bytes(t)).map_err(io_err(path))
}

impl TensorManifest {
    pub fn from_json(s: &str) -> Result<Self, ManifestError> {
        let m: TensorManifest = serde_json::from_str(s)?;
        m.check()?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self, ManifestError> {
        Self::from_json(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    fn check(&self) -> Result<(), ManifestError> {
        if self.format != F32LE {
            return Err(ManifestError::Format(self.format.clone()));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &self.tensors {
            if !seen.insert(t.name.as_str()) {
                return Err(ManifestError::DuplicateName(t.name.clone()));
            }
        }
        Ok(())
    }

    /// Loads every listed tensor, resolving files against `base`.
    pub fn load_all(&self, base: &Path) -> Result<TensorStore, ManifestError> {
        let mut tensors = HashMap::new();
        for e in &self.tensors {
            let path = base.join(&e.file);
            let t = read_f32le(&path, e.rows, e.cols).map_err(|err| match err {
                ManifestError::ByteLength { expected, got, .. } => ManifestError::ByteLength {
                    name: e.name.clone(),
                    expected,
                    got,
                },
                other => other,
            })?;
            tensors.insert(e.name.clone(), t);
        }
        Ok(TensorStore {
            tensors,
            ln_eps: self.ln_eps,
        })
    }

    /// Reads the manifest at `path` and assembles model weights for `cfg`.
    pub fn load_weights(path: &Path, cfg: &ModelConfig) -> Result<ModelWeights<f64>, ManifestError> {
        let m = Self::read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.load_all(base)?.model_weights(cfg)
    }
}

/// Named tensors held in memory.
#[derive(Debug, Clone, Default)]
pub struct TensorStore {
    tensors: HashMap<String, Tensor<f64>>,
    ln_eps: f64,
}

impl TensorStore {
    fn matrix(&self, name: &str, rows: usize, cols: usize) -> Result<Tensor<f64>, ManifestError> {
        let t = self
            .tensors
            .get(name)
            .ok_or_else(|| ManifestError::MissingTensor(name.to_string()))?;
        if t.shape() != (rows, cols) {
            return Err(ManifestError::Shape {
                name: name.to_string(),
                rows: t.rows(),
                cols: t.cols(),
                want_rows: rows,
                want_cols: cols,
            });
        }
        Ok(t.clone())
    }

    /// A vector may be stored as `1×n` or `n×1`.
    fn vector(&self, name: &str, len: usize) -> Result<Vec<f64>, ManifestError> {
        let t = self
            .tensors
            .get(name)
            .ok_or_else(|| ManifestError::MissingTensor(name.to_string()))?;
        if t.rows() * t.cols() != len || (t.rows() != 1 && t.cols() != 1) {
            return Err(ManifestError::Shape {
                name: name.to_string(),
                rows: t.rows(),
                cols: t.cols(),
                want_rows: 1,
                want_cols: len,
            });
        }
        Ok(t.data().to_vec())
    }

    fn attention(&self, prefix: &str, cfg: &ModelConfig) -> Result<AttentionWeights<f64>, ManifestError> {
        let d = cfg.d_model;
        let dk = cfg.head_dim().ok_or_else(|| {
            DatapathError::Indivisible(format!("d_model {d} is not divisible by {} heads", cfg.heads))
        })?;
        let mut heads = Vec::with_capacity(cfg.heads);
        for j in 0..cfg.heads {
            let p = format!("{prefix}head{j}");
            heads.push(HeadWeights {
                wq: self.matrix(&format!("{p}.wq"), d, dk)?,
                wk: self.matrix(&format!("{p}.wk"), d, dk)?,
                wv: self.matrix(&format!("{p}.wv"), d, dk)?,
                bq: self.vector(&format!("{p}.bq"), dk)?,
                bk: self.vector(&format!("{p}.bk"), dk)?,
                bv: self.vector(&format!("{p}.bv"), dk)?,
            });
        }
        Ok(AttentionWeights {
            heads,
            wo: self.matrix(&format!("{prefix}wo"), d, d)?,
            bo: self.vector(&format!("{prefix}bo"), d)?,
        })
    }

    fn ln(&self, prefix: &str, d: usize) -> Result<LayerNormParams<f64>, ManifestError> {
        Ok(LayerNormParams {
            gamma: self.vector(&format!("{prefix}.gamma"), d)?,
            beta: self.vector(&format!("{prefix}.beta"), d)?,
            eps: self.ln_eps,
        })
    }

    /// Weights of layer `i`; decoders also read the cross-attention set.
    pub fn layer(&self, i: usize, cfg: &ModelConfig, decoder: bool) -> Result<LayerWeights<f64>, ManifestError> {
        let d = cfg.d_model;
        let dh = cfg.d_hidden;
        let p = format!("layer{i}.");
        let cross = if decoder {
            Some(CrossAttention {
                attn: self.attention(&format!("{p}cross."), cfg)?,
                ln: self.ln(&format!("{p}ln3"), d)?,
            })
        } else {
            None
        };
        Ok(LayerWeights {
            attn: self.attention(&p, cfg)?,
            ln1: self.ln(&format!("{p}ln1"), d)?,
            ffn: FeedForwardWeights {
                w1: self.matrix(&format!("{p}w1"), d, dh)?,
                b1: self.vector(&format!("{p}b1"), dh)?,
                w2: self.matrix(&format!("{p}w2"), dh, d)?,
                b2: self.vector(&format!("{p}b2"), d)?,
            },
            ln2: self.ln(&format!("{p}ln2"), d)?,
            cross,
        })
    }

    pub fn model_weights(&self, cfg: &ModelConfig) -> Result<ModelWeights<f64>, ManifestError> {
        let encoders = (0..cfg.n_enc)
            .map(|i| self.layer(i, cfg, false))
            .collect::<Result<_, _>>()?;
        let decoders = (0..cfg.n_dec)
            .map(|i| self.layer(cfg.n_enc + i, cfg, true))
            .collect::<Result<_, _>>()?;
        Ok(ModelWeights { encoders, decoders })
    }
}

/// Every tensor of `weights` under its manifest name.
pub fn named_tensors(weights: &ModelWeights<f64>) -> Vec<(String, Tensor<f64>)> {
    fn row(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(1, v.len(), v.to_vec()).expect("vector shape")
    }
    fn attention(out: &mut Vec<(String, Tensor<f64>)>, p: &str, a: &AttentionWeights<f64>) {
        for (j, h) in a.heads.iter().enumerate() {
            let hp = format!("{p}head{j}");
            out.push((format!("{hp}.wq"), h.wq.clone()));
            out.push((format!("{hp}.wk"), h.wk.clone()));
            out.push((format!("{hp}.wv"), h.wv.clone()));
            out.push((format!("{hp}.bq"), row(&h.bq)));
            out.push((format!("{hp}.bk"), row(&h.bk)));
            out.push((format!("{hp}.bv"), row(&h.bv)));
        }
        out.push((format!("{p}wo"), a.wo.clone()));
        out.push((format!("{p}bo"), row(&a.bo)));
    }
    fn ln(out: &mut Vec<(String, Tensor<f64>)>, p: &str, l: &LayerNormParams<f64>) {
        out.push((format!("{p}.gamma"), row(&l.gamma)));
        out.push((format!("{p}.beta"), row(&l.beta)));
    }

    let mut out = Vec::new();
    for (i, l) in weights.encoders.iter().chain(&weights.decoders).enumerate() {
        let p = format!("layer{i}.");
        attention(&mut out, &p, &l.attn);
        ln(&mut out, &format!("{p}ln1"), &l.ln1);
        out.push((format!("{p}w1"), l.ffn.w1.clone()));
        out.push((format!("{p}b1"), row(&l.ffn.b1)));
        out.push((format!("{p}w2"), l.ffn.w2.clone()));
        out.push((format!("{p}b2"), row(&l.ffn.b2)));
        ln(&mut out, &format!("{p}ln2"), &l.ln2);
        if let Some(c) = &l.cross {
            attention(&mut out, &format!("{p}cross."), &c.attn);
            ln(&mut out, &format!("{p}ln3"), &c.ln);
        }
    }
    out
}

/// Writes one `.bin` file per tensor into `dir` plus `manifest.json`, and
/// returns the manifest path.
pub fn write_weights(weights: &ModelWeights<f64>, dir: &Path) -> Result<PathBuf, ManifestError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::new();
    for (name, t) in named_tensors(weights) {
        let file = format!("{name}.bin");
        write_f32le(&dir.join(&file), &t)?;
        entries.push(TensorEntry {
            name,
            rows: t.rows(),
            cols: t.cols(),
            file,
        });
    }
    let eps = weights
        .encoders
        .iter()
        .chain(&weights.decoders)
        .next()
        .map_or(DEFAULT_LN_EPS, |l| l.ln1.eps);
    let manifest = TensorManifest {
        format: F32LE.to_string(),
        tensors: entries,
        ln_eps: eps,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, manifest.to_json()).map_err(io_err(&path))?;
    Ok(path)
}
