//! The accelerator's processing modules, one function per unit.
//!
//! Matrix products run tile by tile in the module's schedule order and fold
//! each tile's partial sums into a wide accumulator; biases are added at
//! accumulator scale and the result is rounded once. Nonlinear units
//! (scaling, softmax, normalization) work on dequantized values in `f64` and
//! round on output.

use super::arith::Arithmetic;
use super::schedule::TileSchedule;
use super::weights::{HeadWeights, LayerNormParams};
use super::{DatapathError, Tensor};
use crate::config::ScaleMode;

/// `x · w (+ bias)` following `schedule`, optionally passed through ReLU.
pub fn tiled_matmul<A: Arithmetic>(
    ar: &A,
    x: &Tensor<A::Value>,
    w: &Tensor<A::Value>,
    bias: Option<&[A::Value]>,
    schedule: &TileSchedule,
    relu: bool,
) -> Result<Tensor<A::Value>, DatapathError> {
    let (k_dim, n_dim) = schedule.dims();
    if x.cols() != k_dim || w.shape() != (k_dim, n_dim) {
        return Err(DatapathError::ShapeMismatch(format!(
            "matmul: {}x{} · {}x{} against a {k_dim}x{n_dim} schedule",
            x.rows(),
            x.cols(),
            w.rows(),
            w.cols()
        )));
    }
    if let Some(b) = bias {
        if b.len() != n_dim {
            return Err(DatapathError::ShapeMismatch(format!(
                "bias of length {} for {n_dim} outputs",
                b.len()
            )));
        }
    }

    let rows = x.rows();
    let mut acc = vec![ar.zero_acc(); rows * n_dim];
    for tile in schedule.tiles() {
        for i in 0..rows {
            let xr = x.row(i);
            for n in tile.n.clone() {
                let mut partial = ar.zero_acc();
                for k in tile.k.clone() {
                    partial = ar.mac(partial, xr[k], w.get(k, n));
                }
                let slot = &mut acc[i * n_dim + n];
                *slot = ar.merge(*slot, partial);
            }
        }
    }

    let data = acc
        .into_iter()
        .enumerate()
        .map(|(idx, a)| {
            let a = match bias {
                Some(b) => ar.merge(a, ar.lift(b[idx % n_dim])),
                None => a,
            };
            let v = ar.round(a);
            if relu {
                ar.relu(v)
            } else {
                v
            }
        })
        .collect();
    Tensor::from_vec(rows, n_dim, data)
}

/// Per-head `(Q, K, V)` for one head. `x_q` feeds the query projection,
/// `x_kv` the key/value projections (the same tensor for self-attention).
pub fn qkv_project<A: Arithmetic>(
    ar: &A,
    x_q: &Tensor<A::Value>,
    x_kv: &Tensor<A::Value>,
    head: &HeadWeights<A::Value>,
    schedule: &TileSchedule,
) -> Result<(Tensor<A::Value>, Tensor<A::Value>, Tensor<A::Value>), DatapathError> {
    let q = tiled_matmul(ar, x_q, &head.wq, Some(&head.bq), schedule, false)?;
    let k = tiled_matmul(ar, x_kv, &head.wk, Some(&head.bk), schedule, false)?;
    let v = tiled_matmul(ar, x_kv, &head.wv, Some(&head.bv), schedule, false)?;
    Ok((q, k, v))
}

/// Scaled scores `S = Q·Kᵀ · scale`. With `causal`, entries above the
/// diagonal hold the backend's most negative value.
pub fn attention_scores<A: Arithmetic>(
    ar: &A,
    q: &Tensor<A::Value>,
    k: &Tensor<A::Value>,
    scale_mode: ScaleMode,
    d_model: usize,
    causal: bool,
) -> Result<Tensor<A::Value>, DatapathError> {
    if q.cols() != k.cols() {
        return Err(DatapathError::ShapeMismatch(format!(
            "scores: Q has width {}, K has width {}",
            q.cols(),
            k.cols()
        )));
    }
    let scale = scale_mode.factor(q.cols() as f64, d_model as f64);
    let mut s = Tensor::filled(q.rows(), k.rows(), ar.zero());
    for i in 0..q.rows() {
        for j in 0..k.rows() {
            let v = if causal && j > i {
                ar.lowest()
            } else {
                let dot = q
                    .row(i)
                    .iter()
                    .zip(k.row(j))
                    .fold(ar.zero_acc(), |acc, (&a, &b)| ar.mac(acc, a, b));
                ar.from_real(ar.acc_to_real(dot) * scale)
            };
            s.set(i, j, v);
        }
    }
    Ok(s)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<A: Arithmetic>(ar: &A, s: &Tensor<A::Value>) -> Tensor<A::Value> {
    let mut out = s.clone();
    let mut buf = vec![0.0; s.cols()];
    for i in 0..s.rows() {
        for (b, &v) in buf.iter_mut().zip(s.row(i)) {
            *b = ar.to_real(v);
        }
        let max = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for b in buf.iter_mut() {
            *b = (*b - max).exp();
            sum += *b;
        }
        for (o, b) in out.row_mut(i).iter_mut().zip(&buf) {
            *o = ar.from_real(b / sum);
        }
    }
    out
}

/// Softmax with a single max and sum over the whole matrix. Kept for
/// comparison with the row-wise form; not used by the layers.
pub fn softmax_global<A: Arithmetic>(ar: &A, s: &Tensor<A::Value>) -> Tensor<A::Value> {
    let max = s
        .data()
        .iter()
        .map(|&v| ar.to_real(v))
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = s.data().iter().map(|&v| (ar.to_real(v) - max).exp()).sum();
    s.map(|v| ar.from_real((ar.to_real(v) - max).exp() / sum))
}

/// `S_soft · V`, untiled.
pub fn attention_apply<A: Arithmetic>(
    ar: &A,
    s: &Tensor<A::Value>,
    v: &Tensor<A::Value>,
) -> Result<Tensor<A::Value>, DatapathError> {
    if s.cols() != v.rows() {
        return Err(DatapathError::ShapeMismatch(format!(
            "S·V: S is {}x{}, V is {}x{}",
            s.rows(),
            s.cols(),
            v.rows(),
            v.cols()
        )));
    }
    tiled_matmul(ar, s, v, None, &TileSchedule::untiled(v.rows(), v.cols()), false)
}

/// Column-wise concatenation in head order.
pub fn concat_heads<V: Copy>(heads: &[Tensor<V>]) -> Result<Tensor<V>, DatapathError> {
    let first = heads
        .first()
        .ok_or_else(|| DatapathError::ShapeMismatch("no heads to concatenate".into()))?;
    let rows = first.rows();
    if heads.iter().any(|h| h.rows() != rows) {
        return Err(DatapathError::ShapeMismatch(
            "heads disagree on sequence length".into(),
        ));
    }
    let cols: usize = heads.iter().map(|h| h.cols()).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for h in heads {
            data.extend_from_slice(h.row(r));
        }
    }
    Tensor::from_vec(rows, cols, data)
}

/// Attention output projection `A·W_O + b_O` over the FFN1 tile grid.
pub fn ffn1_forward<A: Arithmetic>(
    ar: &A,
    a: &Tensor<A::Value>,
    wo: &Tensor<A::Value>,
    bo: &[A::Value],
    schedule: &TileSchedule,
) -> Result<Tensor<A::Value>, DatapathError> {
    tiled_matmul(ar, a, wo, Some(bo), schedule, false)
}

/// `ReLU(X·W1 + b1)`.
pub fn ffn2_forward<A: Arithmetic>(
    ar: &A,
    x: &Tensor<A::Value>,
    w1: &Tensor<A::Value>,
    b1: &[A::Value],
    schedule: &TileSchedule,
) -> Result<Tensor<A::Value>, DatapathError> {
    tiled_matmul(ar, x, w1, Some(b1), schedule, true)
}

/// `H·W2 + b2`.
pub fn ffn3_forward<A: Arithmetic>(
    ar: &A,
    h: &Tensor<A::Value>,
    w2: &Tensor<A::Value>,
    b2: &[A::Value],
    schedule: &TileSchedule,
) -> Result<Tensor<A::Value>, DatapathError> {
    tiled_matmul(ar, h, w2, Some(b2), schedule, false)
}

/// Residual add followed by per-row normalization with population variance.
pub fn layer_norm<A: Arithmetic>(
    ar: &A,
    x: &Tensor<A::Value>,
    residual: &Tensor<A::Value>,
    params: &LayerNormParams<A::Value>,
) -> Result<Tensor<A::Value>, DatapathError> {
    if x.shape() != residual.shape() {
        return Err(DatapathError::ShapeMismatch(format!(
            "residual {}x{} does not match {}x{}",
            residual.rows(),
            residual.cols(),
            x.rows(),
            x.cols()
        )));
    }
    let d = x.cols();
    if params.gamma.len() != d || params.beta.len() != d {
        return Err(DatapathError::ShapeMismatch(format!(
            "layer norm parameters do not match width {d}"
        )));
    }
    let mut out = x.clone();
    let mut y = vec![0.0; d];
    for i in 0..x.rows() {
        for (j, yj) in y.iter_mut().enumerate() {
            *yj = ar.to_real(ar.add(x.get(i, j), residual.get(i, j)));
        }
        let mean = y.iter().sum::<f64>() / d as f64;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + params.eps).sqrt();
        for (j, o) in out.row_mut(i).iter_mut().enumerate() {
            let g = ar.to_real(params.gamma[j]);
            let b = ar.to_real(params.beta[j]);
            *o = ar.from_real(g * (y[j] - mean) * inv + b);
        }
    }
    Ok(out)
}

/// `x·Φ(x)` via the error function.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}
