//! Encoder and decoder layers assembled from the processing modules.

use super::arith::Arithmetic;
use super::ops::{
    attention_apply, attention_scores, concat_heads, ffn1_forward, ffn2_forward, ffn3_forward,
    layer_norm, qkv_project, softmax_rows,
};
use super::schedule::LayerSchedules;
use super::weights::{AttentionWeights, LayerWeights, ModelWeights};
use super::{DatapathError, Tensor};
use crate::config::ModelConfig;

/// Named intermediate tensors of one layer, in the order they are produced.
pub type Trace<V> = Vec<(String, Tensor<V>)>;

fn record<V: Copy>(trace: &mut Option<&mut Trace<V>>, name: impl Into<String>, t: &Tensor<V>) {
    if let Some(tr) = trace.as_deref_mut() {
        tr.push((name.into(), t.clone()));
    }
}

/// Multi-head attention followed by the output projection.
#[allow(clippy::too_many_arguments)]
pub fn attention_block<A: Arithmetic>(
    ar: &A,
    cfg: &ModelConfig,
    sched: &LayerSchedules,
    w: &AttentionWeights<A::Value>,
    x_q: &Tensor<A::Value>,
    x_kv: &Tensor<A::Value>,
    causal: bool,
    prefix: &str,
    mut trace: Option<&mut Trace<A::Value>>,
) -> Result<Tensor<A::Value>, DatapathError> {
    let mut outs = Vec::with_capacity(w.heads.len());
    for (j, head) in w.heads.iter().enumerate() {
        let (q, k, v) = qkv_project(ar, x_q, x_kv, head, &sched.qkv)?;
        let s = attention_scores(ar, &q, &k, cfg.scale_mode, cfg.d_model, causal)?;
        let p = softmax_rows(ar, &s);
        let o = attention_apply(ar, &p, &v)?;
        record(&mut trace, format!("{prefix}.head{j}.q"), &q);
        record(&mut trace, format!("{prefix}.head{j}.k"), &k);
        record(&mut trace, format!("{prefix}.head{j}.v"), &v);
        record(&mut trace, format!("{prefix}.head{j}.scores"), &s);
        record(&mut trace, format!("{prefix}.head{j}.softmax"), &p);
        record(&mut trace, format!("{prefix}.head{j}.out"), &o);
        outs.push(o);
    }
    let cat = concat_heads(&outs)?;
    record(&mut trace, format!("{prefix}.concat"), &cat);
    let proj = ffn1_forward(ar, &cat, &w.wo, &w.bo, &sched.ffn1)?;
    record(&mut trace, format!("{prefix}.proj"), &proj);
    Ok(proj)
}

fn feed_forward<A: Arithmetic>(
    ar: &A,
    sched: &LayerSchedules,
    lw: &LayerWeights<A::Value>,
    x: &Tensor<A::Value>,
    trace: &mut Option<&mut Trace<A::Value>>,
) -> Result<Tensor<A::Value>, DatapathError> {
    let h = ffn2_forward(ar, x, &lw.ffn.w1, &lw.ffn.b1, &sched.ffn2)?;
    record(trace, "ffn.hidden", &h);
    let f = ffn3_forward(ar, &h, &lw.ffn.w2, &lw.ffn.b2, &sched.ffn3)?;
    record(trace, "ffn.out", &f);
    Ok(f)
}

/// Self-attention, add & norm, feed-forward, add & norm.
pub fn encoder_layer<A: Arithmetic>(
    ar: &A,
    cfg: &ModelConfig,
    sched: &LayerSchedules,
    lw: &LayerWeights<A::Value>,
    x: &Tensor<A::Value>,
    mut trace: Option<&mut Trace<A::Value>>,
) -> Result<Tensor<A::Value>, DatapathError> {
    let a = attention_block(ar, cfg, sched, &lw.attn, x, x, false, "attn", trace.as_deref_mut())?;
    let y1 = layer_norm(ar, &a, x, &lw.ln1)?;
    record(&mut trace, "ln1", &y1);
    let f = feed_forward(ar, sched, lw, &y1, &mut trace)?;
    let y2 = layer_norm(ar, &f, &y1, &lw.ln2)?;
    record(&mut trace, "ln2", &y2);
    Ok(y2)
}

/// Masked self-attention, cross-attention over `memory`, feed-forward, each
/// followed by add & norm.
pub fn decoder_layer<A: Arithmetic>(
    ar: &A,
    cfg: &ModelConfig,
    sched: &LayerSchedules,
    lw: &LayerWeights<A::Value>,
    x: &Tensor<A::Value>,
    memory: &Tensor<A::Value>,
    mut trace: Option<&mut Trace<A::Value>>,
) -> Result<Tensor<A::Value>, DatapathError> {
    let cross = lw
        .cross
        .as_ref()
        .ok_or_else(|| DatapathError::ShapeMismatch("decoder layer has no cross-attention".into()))?;
    let a = attention_block(ar, cfg, sched, &lw.attn, x, x, true, "self", trace.as_deref_mut())?;
    let y1 = layer_norm(ar, &a, x, &lw.ln1)?;
    record(&mut trace, "ln1", &y1);
    let c = attention_block(ar, cfg, sched, &cross.attn, &y1, memory, false, "cross", trace.as_deref_mut())?;
    let y2 = layer_norm(ar, &c, &y1, &cross.ln)?;
    record(&mut trace, "ln3", &y2);
    let f = feed_forward(ar, sched, lw, &y2, &mut trace)?;
    let y3 = layer_norm(ar, &f, &y2, &lw.ln2)?;
    record(&mut trace, "ln2", &y3);
    Ok(y3)
}

/// Outputs of a full forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput<V> {
    /// Output of the last encoder layer (the input when there are none).
    pub encoder: Tensor<V>,
    /// Output of the last decoder layer, if the model has decoders.
    pub decoder: Option<Tensor<V>>,
}

impl<V: Copy> ModelOutput<V> {
    /// The tensor the accelerator hands back: decoder output if present.
    pub fn last(&self) -> &Tensor<V> {
        self.decoder.as_ref().unwrap_or(&self.encoder)
    }
}

/// Runs `n_enc` encoder layers on `x`, then `n_dec` decoder layers on
/// `dec_input` (the encoder output when `None`) attending to the encoder
/// output.
pub fn model_forward<A: Arithmetic>(
    ar: &A,
    cfg: &ModelConfig,
    sched: &LayerSchedules,
    weights: &ModelWeights<A::Value>,
    x: &Tensor<A::Value>,
    dec_input: Option<&Tensor<A::Value>>,
) -> Result<ModelOutput<A::Value>, DatapathError> {
    weights.check(cfg)?;
    x.expect_shape(cfg.seq_len, cfg.d_model, "input")?;
    if let Some(d) = dec_input {
        d.expect_shape(cfg.seq_len, cfg.d_model, "decoder input")?;
    }
    let mut enc = x.clone();
    for lw in weights.encoders.iter().take(cfg.n_enc) {
        enc = encoder_layer(ar, cfg, sched, lw, &enc, None)?;
    }
    let decoder = if cfg.n_dec > 0 {
        let mut y = dec_input.unwrap_or(&enc).clone();
        for lw in weights.decoders.iter().take(cfg.n_dec) {
            y = decoder_layer(ar, cfg, sched, lw, &y, &enc, None)?;
        }
        Some(y)
    } else {
        None
    };
    Ok(ModelOutput { encoder: enc, decoder })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TileConfig;
    use crate::datapath::arith::{FixedArith, RealArith};
    use crate::fixedpoint::FixedFormat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn encoder_trace_names_every_stage() {
        let cfg = ModelConfig::new(4, 8, 2, 1, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = LayerWeights::random(&mut rng, &cfg, false, 0.5);
        let x = Tensor::from_fn(4, 8, |_, _| rng.gen_range(-1.0..1.0));
        let sched = LayerSchedules::new(&cfg, &TileConfig::new(2, 2)).unwrap();
        let mut trace = Trace::new();
        let y = encoder_layer(&RealArith, &cfg, &sched, &w, &x, Some(&mut trace)).unwrap();
        let names: Vec<&str> = trace.iter().map(|(n, _)| n.as_str()).collect();
        assert!(names.contains(&"attn.head1.softmax"));
        assert_eq!(names.last(), Some(&"ln2"));
        assert_eq!(&trace.last().unwrap().1, &y);
    }

    #[test]
    fn tiled_encoder_matches_untiled_in_fixed_point() {
        let cfg = ModelConfig::new(4, 16, 2, 1, 1);
        let ar = FixedArith::new(FixedFormat::new(16, 10).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = ModelWeights::random(&mut rng, &cfg, 0.5).map(|v| ar.from_real(v));
        let x = Tensor::from_fn(4, 16, |_, _| ar.from_real(rng.gen_range(-1.0..1.0)));
        let base = model_forward(&ar, &cfg, &LayerSchedules::untiled(&cfg).unwrap(), &w, &x, None).unwrap();
        let tiled =
            model_forward(&ar, &cfg, &LayerSchedules::new(&cfg, &TileConfig::new(4, 2)).unwrap(), &w, &x, None)
                .unwrap();
        assert_eq!(base, tiled);
    }

    #[test]
    fn missing_weights_are_reported() {
        let cfg = ModelConfig::new(4, 8, 2, 2, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut w = ModelWeights::random(&mut rng, &cfg, 0.5);
        w.encoders.pop();
        let err = model_forward(
            &RealArith,
            &cfg,
            &LayerSchedules::untiled(&cfg).unwrap(),
            &w,
            &Tensor::filled(4, 8, 0.0),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, DatapathError::MissingLayerWeights { have_enc: 1, .. }));
    }

    #[test]
    fn decoder_is_causal() {
        let cfg = ModelConfig::new(6, 8, 2, 0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let lw = LayerWeights::random(&mut rng, &cfg, true, 0.5);
        let sched = LayerSchedules::untiled(&cfg).unwrap();
        let x = Tensor::from_fn(6, 8, |_, _| rng.gen_range(-1.0..1.0));
        let mem = Tensor::from_fn(6, 8, |_, _| rng.gen_range(-1.0..1.0));
        let base = decoder_layer(&RealArith, &cfg, &sched, &lw, &x, &mem, None).unwrap();
        let mut x2 = x.clone();
        for c in 0..8 {
            x2.set(5, c, 3.0);
        }
        let other = decoder_layer(&RealArith, &cfg, &sched, &lw, &x2, &mem, None).unwrap();
        for r in 0..5 {
            assert_eq!(base.row(r), other.row(r));
        }
    }
}
