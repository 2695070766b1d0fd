//! DSP and BRAM estimates, on-chip memory bandwidth, and the roofline.
//!
//! BRAM terms are computed in 36 kb blocks, where an array too small to fill
//! one still occupies an 18 kb half (the `max(0.5, ·)` floors), and reported
//! in 18 kb units.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{validate_model, ModelConfig, PlatformConfig, TileConfig, ValidationReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResourceError {
    #[error("compute peak and bandwidth must be positive (peak {peak_gops} GOP/s, bandwidth {bandwidth} B/s)")]
    InvalidPeak { peak_gops: f64, bandwidth: f64 },
    #[error("invalid configuration: {0}")]
    Invalid(ValidationReport),
    #[error("bit width must be >= 1")]
    ZeroBitWidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resource {
    Dsp,
    Bram18k,
}

/// One additive contribution to an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceTerm {
    pub label: String,
    pub resource: Resource,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResourceEstimate {
    pub dsps: f64,
    /// In 18 kb units.
    pub bram18k: f64,
    pub terms: Vec<ResourceTerm>,
}

impl ResourceEstimate {
    fn push(&mut self, resource: Resource, label: &str, value: f64) {
        match resource {
            Resource::Dsp => self.dsps += value,
            Resource::Bram18k => self.bram18k += value,
        }
        self.terms.push(ResourceTerm {
            label: label.to_string(),
            resource,
            value,
        });
    }

    /// BRAM in 36 kb blocks.
    pub fn bram36k(&self) -> f64 {
        self.bram18k / 2.0
    }

    /// Terms of `other` appended, totals summed.
    pub fn merge(mut self, other: ResourceEstimate) -> Self {
        for t in other.terms {
            self.push(t.resource, &t.label, t.value);
        }
        self
    }

    pub fn fits(&self, platform: &PlatformConfig) -> bool {
        self.dsps <= platform.dsp_budget as f64 && self.bram18k <= platform.bram18k_budget as f64
    }
}

fn checked(cfg: &ModelConfig, tiles: &TileConfig) -> Result<(), ResourceError> {
    let report = validate_model(cfg, tiles);
    if report.is_analytically_ok() {
        Ok(())
    } else {
        Err(ResourceError::Invalid(report))
    }
}

/// Multipliers instantiated by the processing modules.
pub fn dsp_estimate(cfg: &ModelConfig, tiles: &TileConfig) -> Result<ResourceEstimate, ResourceError> {
    checked(cfg, tiles)?;
    let h = cfg.heads as f64;
    let d = cfg.d_model as f64;
    let sl = cfg.seq_len as f64;
    let mut est = ResourceEstimate::default();
    est.push(Resource::Dsp, "qkv_pe", 3.0 * h * tiles.mha_span(cfg.d_model));
    est.push(Resource::Dsp, "score_and_sv", h * (d / h + sl));
    est.push(Resource::Dsp, "ffn_pe", 6.0 * tiles.ffn_span(cfg.d_model));
    est.push(Resource::Dsp, "layer_norm", d);
    Ok(est)
}

/// On-chip buffers, one term per array declared by the design.
pub fn bram_estimate(
    cfg: &ModelConfig,
    tiles: &TileConfig,
    bitw: u32,
    platform: &PlatformConfig,
) -> Result<ResourceEstimate, ResourceError> {
    checked(cfg, tiles)?;
    if bitw == 0 {
        return Err(ResourceError::ZeroBitWidth);
    }
    let sl = cfg.seq_len as f64;
    let d = cfg.d_model as f64;
    let h = cfg.heads as f64;
    let tm = tiles.tiles_mha as f64;
    let tf = tiles.tiles_ffn as f64;
    let block = (platform.bram_width_bits * platform.bram_depth) as f64;
    let blocks = |elems: f64| elems * bitw as f64 / block;
    let floor = |elems: f64| blocks(elems).max(0.5);

    let terms36 = [
        ("activation_buffers", blocks(10.0 * sl * d)),
        ("score_rows", sl * floor(sl)),
        ("input_buffer", floor(sl * d)),
        ("head_outputs", blocks(h * sl * d)),
        ("ln_params", floor(d)),
        ("tile_inputs", blocks(sl * tm)),
        ("head_columns", tm * h * floor(sl)),
        ("ffn_weights", blocks(8.0 * d * d) / tf),
        ("head_weights", tm * h * floor(d)),
        ("ffn_columns", d / tf * floor(sl)),
        ("ffn_outputs", 4.0 * d * floor(sl)),
    ];
    let mut est = ResourceEstimate::default();
    for (label, v) in terms36 {
        est.push(Resource::Bram18k, label, 2.0 * v);
    }
    Ok(est)
}

/// DSP and BRAM estimates together.
pub fn estimate_resources(
    cfg: &ModelConfig,
    tiles: &TileConfig,
    bitw: u32,
    platform: &PlatformConfig,
) -> Result<ResourceEstimate, ResourceError> {
    Ok(dsp_estimate(cfg, tiles)?.merge(bram_estimate(cfg, tiles, bitw, platform)?))
}

/// Aggregate on-chip memory bandwidth in bytes per second. Widths are bits
/// per access.
pub fn memory_bandwidth(
    brams: u64,
    bram_width_bits: u64,
    lutrams: u64,
    lutram_width_bits: u64,
    freq_mhz: f64,
) -> f64 {
    let bits_per_cycle = (brams * bram_width_bits + lutrams * lutram_width_bits) as f64;
    bits_per_cycle * freq_mhz * 1e6 / 8.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bound {
    ComputeBound,
    MemoryBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RooflinePoint {
    /// Two per multiply-accumulate.
    pub ops: f64,
    pub bytes: f64,
    /// ops / byte
    pub intensity: f64,
    pub attainable_gops: f64,
    pub bound: Bound,
}

/// Multiply-accumulates of one attention block with its output projection.
fn attention_macs(cfg: &ModelConfig) -> f64 {
    let (h, sl, d) = (cfg.heads as f64, cfg.seq_len as f64, cfg.d_model as f64);
    let dk = cfg.head_width();
    h * sl * d * dk * 3.0 + h * sl * sl * dk * 2.0 + sl * d * d
}

fn ffn_macs(cfg: &ModelConfig) -> f64 {
    let (sl, d, dh) = (cfg.seq_len as f64, cfg.d_model as f64, cfg.d_hidden as f64);
    2.0 * sl * d * dh
}

/// Total operations of the model.
pub fn model_ops(cfg: &ModelConfig) -> f64 {
    let enc = attention_macs(cfg) + ffn_macs(cfg);
    let dec = 2.0 * attention_macs(cfg) + ffn_macs(cfg);
    2.0 * (cfg.n_enc as f64 * enc + cfg.n_dec as f64 * dec)
}

/// Elements moved off chip by an attention block and its projection. The
/// projection input is re-read once per column tile.
fn attention_traffic(cfg: &ModelConfig, tiles: &TileConfig) -> f64 {
    let (sl, d) = (cfg.seq_len as f64, cfg.d_model as f64);
    let t = tiles.tiles_ffn as f64;
    sl * d + 3.0 * d * d + 3.0 * d + t * sl * d + d * d + d
}

fn ffn_traffic(cfg: &ModelConfig, tiles: &TileConfig) -> f64 {
    let (sl, d, dh) = (cfg.seq_len as f64, cfg.d_model as f64, cfg.d_hidden as f64);
    let t = tiles.tiles_ffn as f64;
    4.0 * t * sl * d + d * dh + dh + t * sl * dh + dh * d + d
}

/// Off-chip bytes for the whole model at `bitw` bits per element.
pub fn model_bytes(cfg: &ModelConfig, tiles: &TileConfig, bitw: u32) -> f64 {
    let (sl, d) = (cfg.seq_len as f64, cfg.d_model as f64);
    let ln = 2.0 * d;
    let enc = attention_traffic(cfg, tiles) + ffn_traffic(cfg, tiles) + 2.0 * ln + sl * d;
    let dec = 2.0 * attention_traffic(cfg, tiles) + ffn_traffic(cfg, tiles) + 3.0 * ln + sl * d;
    let elems = cfg.n_enc as f64 * enc + cfg.n_dec as f64 * dec;
    elems * bitw as f64 / 8.0
}

/// Attainable performance of `ops` over `bytes` under a compute peak (GOP/s)
/// and a bandwidth (bytes/s). Ties count as compute bound.
pub fn roofline_point(
    ops: f64,
    bytes: f64,
    peak_gops: f64,
    bandwidth: f64,
) -> Result<RooflinePoint, ResourceError> {
    if !(peak_gops > 0.0) || !(bandwidth > 0.0) {
        return Err(ResourceError::InvalidPeak {
            peak_gops,
            bandwidth,
        });
    }
    let bytes = bytes.max(1.0);
    let intensity = ops / bytes;
    let memory_gops = intensity * bandwidth / 1e9;
    let (attainable_gops, bound) = if peak_gops <= memory_gops {
        (peak_gops, Bound::ComputeBound)
    } else {
        (memory_gops, Bound::MemoryBound)
    };
    Ok(RooflinePoint {
        ops,
        bytes,
        intensity,
        attainable_gops,
        bound,
    })
}

/// Roofline placement of a model on the accelerator.
pub fn roofline(
    cfg: &ModelConfig,
    tiles: &TileConfig,
    bitw: u32,
    peak_gops: f64,
    bandwidth: f64,
) -> Result<RooflinePoint, ResourceError> {
    checked(cfg, tiles)?;
    roofline_point(model_ops(cfg), model_bytes(cfg, tiles, bitw), peak_gops, bandwidth)
}

/// Everything the `resources` report prints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub dsps: f64,
    pub bram18k: f64,
    pub terms: Vec<ResourceTerm>,
    pub bandwidth_bytes_per_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roofline: Option<RooflinePoint>,
}

impl ResourceReport {
    pub fn new(est: ResourceEstimate, bandwidth_bytes_per_s: f64, roofline: Option<RooflinePoint>) -> Self {
        ResourceReport {
            dsps: est.dsps,
            bram18k: est.bram18k,
            terms: est.terms,
            bandwidth_bytes_per_s,
            roofline,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
