//! Model topology, build-time tile shape, platform budgets and the runtime
//! register file that ties them together.
//!
//! The tile *counts* are fixed when the hardware is built; the per-tile spans
//! follow from whatever `d_model` the registers currently hold.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Attention score scaling applied after `Q·Kᵀ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// `1/√d_k`.
    #[default]
    SqrtDk,
    /// `1/d_model`, the divisor used by the score unit's loop body.
    EmbeddingDim,
}

impl ScaleMode {
    pub fn factor(self, head_dim: f64, d_model: f64) -> f64 {
        match self {
            ScaleMode::SqrtDk => 1.0 / head_dim.sqrt(),
            ScaleMode::EmbeddingDim => 1.0 / d_model,
        }
    }
}

/// Runtime transformer topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub seq_len: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_hidden: usize,
    pub n_enc: usize,
    pub n_dec: usize,
    pub out_dim: usize,
    pub scale_mode: ScaleMode,
}

impl ModelConfig {
    /// Encoder/decoder stack with `d_hidden = 4·d_model` and `out_dim = d_model`.
    pub fn new(seq_len: usize, d_model: usize, heads: usize, n_enc: usize, n_dec: usize) -> Self {
        ModelConfig {
            seq_len,
            d_model,
            heads,
            d_hidden: 4 * d_model,
            n_enc,
            n_dec,
            out_dim: d_model,
            scale_mode: ScaleMode::SqrtDk,
        }
    }

    pub fn with_hidden(mut self, d_hidden: usize) -> Self {
        self.d_hidden = d_hidden;
        self
    }

    pub fn with_scale_mode(mut self, mode: ScaleMode) -> Self {
        self.scale_mode = mode;
        self
    }

    /// Integral head width `d_model / heads`, if it exists.
    pub fn head_dim(&self) -> Option<usize> {
        (self.heads > 0 && self.d_model.is_multiple_of(self.heads)).then(|| self.d_model / self.heads)
    }

    /// Head width as a real number (the analytical model tolerates fractions).
    pub fn head_width(&self) -> f64 {
        self.d_model as f64 / self.heads as f64
    }

    pub fn layers(&self) -> usize {
        self.n_enc + self.n_dec
    }
}

/// Build-time hardware shape: tile counts plus the register capacities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileConfig {
    pub tiles_mha: usize,
    pub tiles_ffn: usize,
    pub max_d_model: usize,
    pub max_seq_len: usize,
    pub max_heads: usize,
    pub max_d_hidden: usize,
    pub max_layers: usize,
    pub max_out: usize,
}

impl TileConfig {
    /// Tile counts with the default capacities (BERT-base sized buffers).
    pub fn new(tiles_mha: usize, tiles_ffn: usize) -> Self {
        TileConfig {
            tiles_mha,
            tiles_ffn,
            max_d_model: 768,
            max_seq_len: 128,
            max_heads: 16,
            max_d_hidden: 3072,
            max_layers: 12,
            max_out: 768,
        }
    }

    /// Same tiles, capacities raised to hold at least `cfg`.
    pub fn fitting(tiles_mha: usize, tiles_ffn: usize, cfg: &ModelConfig) -> Self {
        let base = TileConfig::new(tiles_mha, tiles_ffn);
        TileConfig {
            max_d_model: base.max_d_model.max(cfg.d_model),
            max_seq_len: base.max_seq_len.max(cfg.seq_len),
            max_heads: base.max_heads.max(cfg.heads),
            max_d_hidden: base.max_d_hidden.max(cfg.d_hidden),
            max_layers: base.max_layers.max(cfg.n_enc).max(cfg.n_dec),
            max_out: base.max_out.max(cfg.out_dim),
            ..base
        }
    }

    /// `TS_MHA` for the given embedding width.
    pub fn mha_span(&self, d_model: usize) -> f64 {
        d_model as f64 / self.tiles_mha as f64
    }

    /// `TS_FFN` for the given embedding width.
    pub fn ffn_span(&self, d_model: usize) -> f64 {
        d_model as f64 / self.tiles_ffn as f64
    }

    /// Width of one hidden-axis block; the hidden axis is cut into `4·tiles_ffn` blocks.
    pub fn hidden_block(&self, d_hidden: usize) -> f64 {
        d_hidden as f64 / (4 * self.tiles_ffn) as f64
    }
}

/// FPGA resource budgets and clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformConfig {
    pub name: String,
    pub dsp_budget: u64,
    pub lut_budget: u64,
    pub bram18k_budget: u64,
    pub bram_width_bits: u32,
    pub bram_depth: u32,
    pub lutram_count: u64,
    pub lutram_width_bits: u32,
    pub freq_mhz: f64,
}

impl PlatformConfig {
    // Budgets below are vendor datasheet totals; clocks are typical achieved
    // values for this class of design, not predictions.

    /// Alveo U55C (xcu55c, HBM).
    pub fn u55c() -> Self {
        PlatformConfig {
            name: "u55c".into(),
            dsp_budget: 9024,
            lut_budget: 1_303_680,
            bram18k_budget: 4032,
            bram_width_bits: 36,
            bram_depth: 1024,
            lutram_count: 600_000,
            lutram_width_bits: 32,
            freq_mhz: 200.0,
        }
    }

    /// ZCU102 (xczu9eg).
    pub fn zcu102() -> Self {
        PlatformConfig {
            name: "zcu102".into(),
            dsp_budget: 2520,
            lut_budget: 274_080,
            bram18k_budget: 1824,
            bram_width_bits: 36,
            bram_depth: 1024,
            lutram_count: 144_000,
            lutram_width_bits: 32,
            freq_mhz: 150.0,
        }
    }

    /// VC707 (xc7vx485t).
    pub fn vc707() -> Self {
        PlatformConfig {
            name: "vc707".into(),
            dsp_budget: 2800,
            lut_budget: 303_600,
            bram18k_budget: 2060,
            bram_width_bits: 36,
            bram_depth: 1024,
            lutram_count: 130_800,
            lutram_width_bits: 32,
            freq_mhz: 150.0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "u55c" => Some(Self::u55c()),
            "zcu102" => Some(Self::zcu102()),
            "vc707" => Some(Self::vc707()),
            _ => None,
        }
    }

    pub fn presets() -> Vec<Self> {
        vec![Self::u55c(), Self::zcu102(), Self::vc707()]
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if !(self.freq_mhz > 0.0) {
            return Err(ConfigError::InvalidPlatform(format!(
                "freq_mhz must be > 0, got {}",
                self.freq_mhz
            )));
        }
        if self.bram_width_bits == 0 || self.bram_depth == 0 {
            return Err(ConfigError::InvalidPlatform(
                "BRAM width and depth must be non-zero".into(),
            ));
        }
        Ok(())
    }
}

/// Whether a violated constraint blocks every use or only bit-exact simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    /// The configuration is meaningless (zero sizes, capacity overflow).
    Structural,
    /// Fine for the analytical model (fractional spans), rejected by the simulator.
    Functional,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    ZeroDimension { field: &'static str },
    NoLayers,
    HeadsNotDivisor { d_model: usize, heads: usize },
    CapacityExceeded { field: &'static str, value: usize, max: usize },
    ZeroTiles { field: &'static str },
    TileSpanBelowOne { field: &'static str, dim: usize, tiles: usize },
    InexactSpan { field: &'static str, dim: usize, tiles: usize },
}

impl Violation {
    pub fn severity(&self) -> Severity {
        match self {
            Violation::HeadsNotDivisor { .. } | Violation::InexactSpan { .. } => Severity::Functional,
            _ => Severity::Structural,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroDimension { field } => write!(f, "{field} must be >= 1"),
            Violation::NoLayers => write!(f, "n_enc + n_dec must be >= 1"),
            Violation::HeadsNotDivisor { d_model, heads } => {
                write!(f, "d_model mod heads != 0 ({d_model} mod {heads})")
            }
            Violation::CapacityExceeded { field, value, max } => {
                write!(f, "capacity exceeded: {field} = {value} > {max}")
            }
            Violation::ZeroTiles { field } => write!(f, "{field} must be >= 1"),
            Violation::TileSpanBelowOne { field, dim, tiles } => {
                write!(f, "{field}: {dim} / {tiles} tiles gives a span below 1")
            }
            Violation::InexactSpan { field, dim, tiles } => {
                write!(f, "{field}: {dim} is not divisible into {tiles} tiles")
            }
        }
    }
}

/// Outcome of [`validate_model`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// `TS_MHA` (possibly fractional).
    pub mha_span: f64,
    /// `TS_FFN` (possibly fractional).
    pub ffn_span: f64,
}

impl ValidationReport {
    /// No violations of any kind: the functional simulator accepts the pair.
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    /// Only functional-severity violations (if any): the analytical model accepts it.
    pub fn is_analytically_ok(&self) -> bool {
        self.violations
            .iter()
            .all(|v| v.severity() == Severity::Functional)
    }

    /// Integral `TS_MHA` when the span divides exactly.
    pub fn exact_mha_span(&self) -> Option<usize> {
        exact(self.mha_span)
    }

    pub fn exact_ffn_span(&self) -> Option<usize> {
        exact(self.ffn_span)
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(|v| v.to_string()).collect()
    }
}

fn exact(x: f64) -> Option<usize> {
    (x >= 1.0 && x.fract() == 0.0).then_some(x as usize)
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        write!(f, "{}", self.messages().join("; "))
    }
}

/// Checks a topology against a hardware shape. Pure; never fails, the report
/// carries every violated constraint.
pub fn validate_model(cfg: &ModelConfig, tiles: &TileConfig) -> ValidationReport {
    let mut violations = Vec::new();

    for (field, value) in [
        ("seq_len", cfg.seq_len),
        ("d_model", cfg.d_model),
        ("heads", cfg.heads),
        ("d_hidden", cfg.d_hidden),
        ("out_dim", cfg.out_dim),
    ] {
        if value == 0 {
            violations.push(Violation::ZeroDimension { field });
        }
    }
    if cfg.n_enc + cfg.n_dec == 0 {
        violations.push(Violation::NoLayers);
    }
    if cfg.heads > 0 && !cfg.d_model.is_multiple_of(cfg.heads) {
        violations.push(Violation::HeadsNotDivisor {
            d_model: cfg.d_model,
            heads: cfg.heads,
        });
    }

    for (field, value, max) in [
        ("seq_len", cfg.seq_len, tiles.max_seq_len),
        ("d_model", cfg.d_model, tiles.max_d_model),
        ("heads", cfg.heads, tiles.max_heads),
        ("d_hidden", cfg.d_hidden, tiles.max_d_hidden),
        ("n_enc", cfg.n_enc, tiles.max_layers),
        ("n_dec", cfg.n_dec, tiles.max_layers),
        ("out_dim", cfg.out_dim, tiles.max_out),
    ] {
        if value > max {
            violations.push(Violation::CapacityExceeded { field, value, max });
        }
    }

    let mut span_check = |field: &'static str, dim: usize, count: usize| {
        if count == 0 {
            violations.push(Violation::ZeroTiles { field });
        } else if dim > 0 && dim < count {
            violations.push(Violation::TileSpanBelowOne {
                field,
                dim,
                tiles: count,
            });
        } else if dim > 0 && !dim.is_multiple_of(count) {
            violations.push(Violation::InexactSpan {
                field,
                dim,
                tiles: count,
            });
        }
    };
    span_check("tiles_mha", cfg.d_model, tiles.tiles_mha);
    span_check("tiles_ffn", cfg.d_model, tiles.tiles_ffn);
    span_check("tiles_ffn (hidden)", cfg.d_hidden, 4 * tiles.tiles_ffn);

    ValidationReport {
        violations,
        mha_span: if tiles.tiles_mha > 0 {
            tiles.mha_span(cfg.d_model)
        } else {
            0.0
        },
        ffn_span: if tiles.tiles_ffn > 0 {
            tiles.ffn_span(cfg.d_model)
        } else {
            0.0
        },
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown register `{0}`")]
    UnknownRegister(String),
    #[error("register {register} cannot hold {value}: build-time maximum is {max}")]
    ValueExceedsCapacity {
        register: Register,
        value: u64,
        max: u64,
    },
    #[error("invalid model configuration: {0}")]
    Invalid(ValidationReport),
    #[error("invalid platform: {0}")]
    InvalidPlatform(String),
    #[error("malformed configuration: {0}")]
    Parse(#[from] serde_json::Error),
}

/// The seven runtime-writable topology registers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Register {
    Sequence,
    Heads,
    LayersEnc,
    LayersDec,
    Embeddings,
    Hidden,
    Out,
}

impl Register {
    pub const ALL: [Register; 7] = [
        Register::Sequence,
        Register::Heads,
        Register::LayersEnc,
        Register::LayersDec,
        Register::Embeddings,
        Register::Hidden,
        Register::Out,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Register::Sequence => "Sequence",
            Register::Heads => "Heads",
            Register::LayersEnc => "Layers_enc",
            Register::LayersDec => "Layers_dec",
            Register::Embeddings => "Embeddings",
            Register::Hidden => "Hidden",
            Register::Out => "Out",
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    fn capacity(self, tiles: &TileConfig) -> u64 {
        (match self {
            Register::Sequence => tiles.max_seq_len,
            Register::Heads => tiles.max_heads,
            Register::LayersEnc | Register::LayersDec => tiles.max_layers,
            Register::Embeddings => tiles.max_d_model,
            Register::Hidden => tiles.max_d_hidden,
            Register::Out => tiles.max_out,
        }) as u64
    }
}

impl fmt::Display for Register {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Register {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Register::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ConfigError::UnknownRegister(s.to_string()))
    }
}

/// Register file written by the host before each run. Capacities are frozen
/// from the [`TileConfig`] at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterFile {
    tiles: TileConfig,
    values: [u64; 7],
    scale_mode: ScaleMode,
}

impl RegisterFile {
    /// All registers zero.
    pub fn new(tiles: TileConfig) -> Self {
        RegisterFile {
            tiles,
            values: [0; 7],
            scale_mode: ScaleMode::SqrtDk,
        }
    }

    /// Registers preloaded from `cfg`, subject to the usual capacity checks.
    pub fn from_config(tiles: TileConfig, cfg: &ModelConfig) -> Result<Self, ConfigError> {
        let mut rf = RegisterFile::new(tiles);
        rf.load(cfg)?;
        Ok(rf)
    }

    pub fn tiles(&self) -> &TileConfig {
        &self.tiles
    }

    pub fn write(&mut self, name: &str, value: u64) -> Result<(), ConfigError> {
        self.write_reg(name.parse()?, value)
    }

    pub fn write_reg(&mut self, reg: Register, value: u64) -> Result<(), ConfigError> {
        let max = reg.capacity(&self.tiles);
        if value > max {
            return Err(ConfigError::ValueExceedsCapacity {
                register: reg,
                value,
                max,
            });
        }
        self.values[reg.index()] = value;
        Ok(())
    }

    pub fn read(&self, name: &str) -> Result<u64, ConfigError> {
        Ok(self.read_reg(name.parse()?))
    }

    pub fn read_reg(&self, reg: Register) -> u64 {
        self.values[reg.index()]
    }

    pub fn set_scale_mode(&mut self, mode: ScaleMode) {
        self.scale_mode = mode;
    }

    /// Writes every register from `cfg`. Stops at the first capacity error,
    /// leaving earlier registers written.
    pub fn load(&mut self, cfg: &ModelConfig) -> Result<(), ConfigError> {
        for (reg, v) in [
            (Register::Sequence, cfg.seq_len),
            (Register::Heads, cfg.heads),
            (Register::LayersEnc, cfg.n_enc),
            (Register::LayersDec, cfg.n_dec),
            (Register::Embeddings, cfg.d_model),
            (Register::Hidden, cfg.d_hidden),
            (Register::Out, cfg.out_dim),
        ] {
            self.write_reg(reg, v as u64)?;
        }
        self.scale_mode = cfg.scale_mode;
        Ok(())
    }

    /// Register contents as a topology, without validation.
    pub fn raw_config(&self) -> ModelConfig {
        let r = |reg| self.read_reg(reg) as usize;
        ModelConfig {
            seq_len: r(Register::Sequence),
            d_model: r(Register::Embeddings),
            heads: r(Register::Heads),
            d_hidden: r(Register::Hidden),
            n_enc: r(Register::LayersEnc),
            n_dec: r(Register::LayersDec),
            out_dim: r(Register::Out),
            scale_mode: self.scale_mode,
        }
    }

    /// The topology held by the registers. Fails on structural violations;
    /// functional ones (inexact spans) are left to the simulator to reject.
    pub fn model_config(&self) -> Result<ModelConfig, ConfigError> {
        let cfg = self.raw_config();
        let report = validate_model(&cfg, &self.tiles);
        if report.is_analytically_ok() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(report))
        }
    }

    pub fn dump(&self) -> Vec<(Register, u64)> {
        Register::ALL.iter().map(|&r| (r, self.read_reg(r))).collect()
    }
}

/// On-disk model configuration (`{sequence, heads, ...}`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfigFile {
    pub sequence: usize,
    pub heads: usize,
    pub layers_enc: usize,
    pub layers_dec: usize,
    pub embeddings: usize,
    #[serde(default)]
    pub hidden: Option<usize>,
    #[serde(default)]
    pub out: Option<usize>,
    #[serde(default)]
    pub scale_mode: ScaleMode,
}

impl From<ModelConfigFile> for ModelConfig {
    fn from(f: ModelConfigFile) -> Self {
        ModelConfig {
            seq_len: f.sequence,
            d_model: f.embeddings,
            heads: f.heads,
            d_hidden: f.hidden.unwrap_or(4 * f.embeddings),
            n_enc: f.layers_enc,
            n_dec: f.layers_dec,
            out_dim: f.out.unwrap_or(f.embeddings),
            scale_mode: f.scale_mode,
        }
    }
}

impl From<ModelConfig> for ModelConfigFile {
    fn from(c: ModelConfig) -> Self {
        ModelConfigFile {
            sequence: c.seq_len,
            heads: c.heads,
            layers_enc: c.n_enc,
            layers_dec: c.n_dec,
            embeddings: c.d_model,
            hidden: Some(c.d_hidden),
            out: Some(c.out_dim),
            scale_mode: c.scale_mode,
        }
    }
}

impl ModelConfig {
    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        let file: ModelConfigFile = serde_json::from_str(s)?;
        Ok(file.into())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelConfigFile::from(*self)).expect("config serializes")
    }
}
