use rand::Rng;

use super::{DatapathError, Tensor};
use crate::config::ModelConfig;

pub const DEFAULT_LN_EPS: f64 = 1e-5;

/// Projection weights of one attention head. `wq/wk/wv` are `d_model × d_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights<V> {
    pub wq: Tensor<V>,
    pub wk: Tensor<V>,
    pub wv: Tensor<V>,
    pub bq: Vec<V>,
    pub bk: Vec<V>,
    pub bv: Vec<V>,
}

/// All heads plus the output projection (`d_model × d_model`).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights<V> {
    pub heads: Vec<HeadWeights<V>>,
    pub wo: Tensor<V>,
    pub bo: Vec<V>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams<V> {
    pub gamma: Vec<V>,
    pub beta: Vec<V>,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardWeights<V> {
    /// `d_model × d_hidden`
    pub w1: Tensor<V>,
    pub b1: Vec<V>,
    /// `d_hidden × d_model`
    pub w2: Tensor<V>,
    pub b2: Vec<V>,
}

/// Cross-attention sublayer carried only by decoder layers.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossAttention<V> {
    pub attn: AttentionWeights<V>,
    pub ln: LayerNormParams<V>,
}

/// Weights of one encoder or decoder layer. For decoders `attn` is the
/// masked self-attention.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<V> {
    pub attn: AttentionWeights<V>,
    pub ln1: LayerNormParams<V>,
    pub ffn: FeedForwardWeights<V>,
    pub ln2: LayerNormParams<V>,
    pub cross: Option<CrossAttention<V>>,
}

/// Encoder layers first, then decoder layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<V> {
    pub encoders: Vec<LayerWeights<V>>,
    pub decoders: Vec<LayerWeights<V>>,
}

impl<V: Copy> HeadWeights<V> {
    pub fn map<U: Copy>(&self, f: &impl Fn(V) -> U) -> HeadWeights<U> {
        HeadWeights {
            wq: self.wq.map(f),
            wk: self.wk.map(f),
            wv: self.wv.map(f),
            bq: self.bq.iter().copied().map(f).collect(),
            bk: self.bk.iter().copied().map(f).collect(),
            bv: self.bv.iter().copied().map(f).collect(),
        }
    }
}

impl<V: Copy> AttentionWeights<V> {
    pub fn map<U: Copy>(&self, f: &impl Fn(V) -> U) -> AttentionWeights<U> {
        AttentionWeights {
            heads: self.heads.iter().map(|h| h.map(f)).collect(),
            wo: self.wo.map(f),
            bo: self.bo.iter().copied().map(f).collect(),
        }
    }

    fn check(&self, d_model: usize, heads: usize, what: &str) -> Result<(), DatapathError> {
        if self.heads.len() != heads {
            return Err(DatapathError::ShapeMismatch(format!(
                "{what}: {} heads, expected {heads}",
                self.heads.len()
            )));
        }
        let dk = d_model / heads;
        for h in &self.heads {
            for w in [&h.wq, &h.wk, &h.wv] {
                w.expect_shape(d_model, dk, what)?;
            }
            for b in [&h.bq, &h.bk, &h.bv] {
                check_len(b, dk, what)?;
            }
        }
        self.wo.expect_shape(d_model, d_model, what)?;
        check_len(&self.bo, d_model, what)
    }
}

impl<V: Copy> LayerNormParams<V> {
    pub fn map<U: Copy>(&self, f: &impl Fn(V) -> U) -> LayerNormParams<U> {
        LayerNormParams {
            gamma: self.gamma.iter().copied().map(f).collect(),
            beta: self.beta.iter().copied().map(f).collect(),
            eps: self.eps,
        }
    }

    fn check(&self, d_model: usize, what: &str) -> Result<(), DatapathError> {
        check_len(&self.gamma, d_model, what)?;
        check_len(&self.beta, d_model, what)?;
        if !(self.eps > 0.0) {
            return Err(DatapathError::ShapeMismatch(format!(
                "{what}: layer-norm epsilon must be > 0"
            )));
        }
        Ok(())
    }
}

impl<V: Copy> LayerWeights<V> {
    pub fn map<U: Copy>(&self, f: &impl Fn(V) -> U) -> LayerWeights<U> {
        LayerWeights {
            attn: self.attn.map(f),
            ln1: self.ln1.map(f),
            ffn: FeedForwardWeights {
                w1: self.ffn.w1.map(f),
                b1: self.ffn.b1.iter().copied().map(f).collect(),
                w2: self.ffn.w2.map(f),
                b2: self.ffn.b2.iter().copied().map(f).collect(),
            },
            ln2: self.ln2.map(f),
            cross: self.cross.as_ref().map(|c| CrossAttention {
                attn: c.attn.map(f),
                ln: c.ln.map(f),
            }),
        }
    }

    pub fn is_decoder(&self) -> bool {
        self.cross.is_some()
    }

    /// Checks every tensor against the topology.
    pub fn check(&self, cfg: &ModelConfig, what: &str) -> Result<(), DatapathError> {
        let d = cfg.d_model;
        self.attn.check(d, cfg.heads, what)?;
        self.ln1.check(d, what)?;
        self.ffn.w1.expect_shape(d, cfg.d_hidden, what)?;
        check_len(&self.ffn.b1, cfg.d_hidden, what)?;
        self.ffn.w2.expect_shape(cfg.d_hidden, d, what)?;
        check_len(&self.ffn.b2, d, what)?;
        self.ln2.check(d, what)?;
        if let Some(c) = &self.cross {
            c.attn.check(d, cfg.heads, what)?;
            c.ln.check(d, what)?;
        }
        Ok(())
    }
}

impl<V: Copy> ModelWeights<V> {
    pub fn map<U: Copy>(&self, f: impl Fn(V) -> U) -> ModelWeights<U> {
        ModelWeights {
            encoders: self.encoders.iter().map(|l| l.map(&f)).collect(),
            decoders: self.decoders.iter().map(|l| l.map(&f)).collect(),
        }
    }

    pub fn check(&self, cfg: &ModelConfig) -> Result<(), DatapathError> {
        if self.encoders.len() < cfg.n_enc || self.decoders.len() < cfg.n_dec {
            return Err(DatapathError::MissingLayerWeights {
                needed_enc: cfg.n_enc,
                needed_dec: cfg.n_dec,
                have_enc: self.encoders.len(),
                have_dec: self.decoders.len(),
            });
        }
        for (i, l) in self.encoders.iter().take(cfg.n_enc).enumerate() {
            l.check(cfg, &format!("encoder {i}"))?;
        }
        for (i, l) in self.decoders.iter().take(cfg.n_dec).enumerate() {
            if !l.is_decoder() {
                return Err(DatapathError::ShapeMismatch(format!(
                    "decoder {i} has no cross-attention weights"
                )));
            }
            l.check(cfg, &format!("decoder {i}"))?;
        }
        Ok(())
    }
}

fn check_len<V>(v: &[V], len: usize, what: &str) -> Result<(), DatapathError> {
    if v.len() != len {
        return Err(DatapathError::ShapeMismatch(format!(
            "{what}: vector of length {}, expected {len}",
            v.len()
        )));
    }
    Ok(())
}

impl AttentionWeights<f64> {
    pub fn random(rng: &mut impl Rng, d_model: usize, heads: usize, scale: f64) -> Self {
        let dk = d_model / heads;
        let mut t = |r, c| Tensor::from_fn(r, c, |_, _| rng.gen_range(-scale..=scale));
        let heads = (0..heads)
            .map(|_| HeadWeights {
                wq: t(d_model, dk),
                wk: t(d_model, dk),
                wv: t(d_model, dk),
                bq: t(1, dk).into_data(),
                bk: t(1, dk).into_data(),
                bv: t(1, dk).into_data(),
            })
            .collect();
        AttentionWeights {
            heads,
            wo: t(d_model, d_model),
            bo: t(1, d_model).into_data(),
        }
    }

    pub fn constant(d_model: usize, heads: usize, w: f64, b: f64) -> Self {
        let dk = d_model / heads;
        let head = HeadWeights {
            wq: Tensor::filled(d_model, dk, w),
            wk: Tensor::filled(d_model, dk, w),
            wv: Tensor::filled(d_model, dk, w),
            bq: vec![b; dk],
            bk: vec![b; dk],
            bv: vec![b; dk],
        };
        AttentionWeights {
            heads: vec![head; heads],
            wo: Tensor::filled(d_model, d_model, w),
            bo: vec![b; d_model],
        }
    }
}

impl LayerNormParams<f64> {
    pub fn identity(d_model: usize) -> Self {
        LayerNormParams {
            gamma: vec![1.0; d_model],
            beta: vec![0.0; d_model],
            eps: DEFAULT_LN_EPS,
        }
    }

    pub fn random(rng: &mut impl Rng, d_model: usize, scale: f64) -> Self {
        LayerNormParams {
            gamma: (0..d_model).map(|_| rng.gen_range(-scale..=scale)).collect(),
            beta: (0..d_model).map(|_| rng.gen_range(-scale..=scale)).collect(),
            eps: DEFAULT_LN_EPS,
        }
    }
}

impl LayerWeights<f64> {
    /// Uniform `[-scale, scale]` weights and biases; LN parameters likewise.
    pub fn random(rng: &mut impl Rng, cfg: &ModelConfig, decoder: bool, scale: f64) -> Self {
        let d = cfg.d_model;
        let attn = AttentionWeights::random(rng, d, cfg.heads, scale);
        let ln1 = LayerNormParams::random(rng, d, scale);
        let mut t = |r, c| Tensor::from_fn(r, c, |_, _| rng.gen_range(-scale..=scale));
        let ffn = FeedForwardWeights {
            w1: t(d, cfg.d_hidden),
            b1: t(1, cfg.d_hidden).into_data(),
            w2: t(cfg.d_hidden, d),
            b2: t(1, d).into_data(),
        };
        let ln2 = LayerNormParams::random(rng, d, scale);
        let cross = decoder.then(|| CrossAttention {
            attn: AttentionWeights::random(rng, d, cfg.heads, scale),
            ln: LayerNormParams::random(rng, d, scale),
        });
        LayerWeights {
            attn,
            ln1,
            ffn,
            ln2,
            cross,
        }
    }

    /// Every weight `w`, every bias `b`, LN with γ = 1 and β = 0.
    pub fn constant(cfg: &ModelConfig, decoder: bool, w: f64, b: f64) -> Self {
        let d = cfg.d_model;
        LayerWeights {
            attn: AttentionWeights::constant(d, cfg.heads, w, b),
            ln1: LayerNormParams::identity(d),
            ffn: FeedForwardWeights {
                w1: Tensor::filled(d, cfg.d_hidden, w),
                b1: vec![b; cfg.d_hidden],
                w2: Tensor::filled(cfg.d_hidden, d, w),
                b2: vec![b; d],
            },
            ln2: LayerNormParams::identity(d),
            cross: decoder.then(|| CrossAttention {
                attn: AttentionWeights::constant(d, cfg.heads, w, b),
                ln: LayerNormParams::identity(d),
            }),
        }
    }
}

impl ModelWeights<f64> {
    pub fn random(rng: &mut impl Rng, cfg: &ModelConfig, scale: f64) -> Self {
        ModelWeights {
            encoders: (0..cfg.n_enc)
                .map(|_| LayerWeights::random(rng, cfg, false, scale))
                .collect(),
            decoders: (0..cfg.n_dec)
                .map(|_| LayerWeights::random(rng, cfg, true, scale))
                .collect(),
        }
    }

    pub fn constant(cfg: &ModelConfig, w: f64, b: f64) -> Self {
        ModelWeights {
            encoders: vec![LayerWeights::constant(cfg, false, w, b); cfg.n_enc],
            decoders: vec![LayerWeights::constant(cfg, true, w, b); cfg.n_dec],
        }
    }
}
