//! Analytical latency model.
//!
//! Every unit is a pipelined loop `depth + ii·(trips − 1)` repeated over an
//! un-pipelined outer loop. Spans may be fractional (`d_model` not divisible
//! by the tile count); the arithmetic is done in `f64` throughout and is
//! exact for integral inputs. [`oracle`] recomputes the same numbers by
//! walking the loop nests one iteration at a time.

pub mod oracle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{validate_model, ModelConfig, TileConfig, ValidationReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerfError {
    #[error("pipelined loop needs a trip count >= 1, got {0}")]
    ZeroTripCount(f64),
    #[error("pipelined loop latency must be positive, got {0}")]
    NonPositiveLatency(f64),
    #[error("unknown composition mode `{0}` (expected overlapped or sequential)")]
    UnknownMode(String),
    #[error("invalid configuration: {0}")]
    Invalid(ValidationReport),
    #[error("invalid pipeline constants: {0}")]
    InvalidConstants(String),
    #[error("breakdown lacks unit {0}")]
    MissingUnit(Unit),
    #[error("clock frequency must be positive, got {0} MHz")]
    InvalidFrequency(f64),
    #[error("loop-nest walk needs integral spans: {0}")]
    NonIntegral(String),
}

/// Cycle costs of the primitive operations inside each unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConstants {
    /// Off-chip read pipeline depth (`PD_L`): 7 AXI + 1 + 1 + 1 + 3.
    pub pd_load: u32,
    /// Per-iteration margin on top of the MAC span in compute units (`ε`).
    pub op_overhead: u32,
    /// Bias-add pipeline depth (`PD_BA` = load + add + store).
    pub pd_bias_add: u32,
    pub exp_cycles: u32,
    pub div_cycles: u32,
    pub float_fix_cycles: u32,
    /// Initiation interval of the streaming loops.
    pub ii: u32,
    pub load_cycles: u32,
    pub store_cycles: u32,
    pub add_cycles: u32,
    /// Also used for squaring.
    pub mul_cycles: u32,
    /// Initiation interval of loops carrying an accumulation dependency.
    pub accum_ii: u32,
}

impl Default for PipelineConstants {
    fn default() -> Self {
        PipelineConstants {
            pd_load: 13,
            op_overhead: 2,
            pd_bias_add: 3,
            exp_cycles: 4,
            div_cycles: 14,
            float_fix_cycles: 3,
            ii: 1,
            load_cycles: 1,
            store_cycles: 1,
            add_cycles: 1,
            mul_cycles: 2,
            accum_ii: 2,
        }
    }
}

impl PipelineConstants {
    pub fn check(&self) -> Result<(), PerfError> {
        if self.ii == 0 || self.accum_ii == 0 {
            return Err(PerfError::InvalidConstants(
                "initiation intervals must be >= 1".into(),
            ));
        }
        if self.pd_load == 0 || self.pd_bias_add == 0 {
            return Err(PerfError::InvalidConstants(
                "pipeline depths must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Depth of the three softmax passes: max, exp-and-sum, divide.
    pub fn softmax_depths(&self) -> [u32; 3] {
        let ls = self.load_cycles + self.store_cycles;
        [ls, ls + self.add_cycles + self.exp_cycles, ls + self.div_cycles]
    }

    /// Initiation intervals of the softmax passes.
    pub fn softmax_iis(&self) -> [u32; 3] {
        [self.ii, self.ii, self.accum_ii]
    }

    /// Depth of the four normalization passes: mean, variance, scale, shift.
    pub fn layer_norm_depths(&self) -> [u32; 4] {
        let (l, s, a, m) = (
            self.load_cycles,
            self.store_cycles,
            self.add_cycles,
            self.mul_cycles,
        );
        [
            l + a + s,
            l + m + a + s,
            l + m + m + a + s + self.div_cycles + self.float_fix_cycles,
            l + a + s,
        ]
    }

    pub fn layer_norm_iis(&self) -> [u32; 4] {
        [self.accum_ii, self.accum_ii, self.ii, self.ii]
    }
}

/// Pipelined loop latency `pd + ii·(tc − 1)`.
pub fn pll(pd: f64, ii: f64, tc: f64) -> Result<f64, PerfError> {
    if !(tc >= 1.0) {
        return Err(PerfError::ZeroTripCount(tc));
    }
    Ok(pd + ii * (tc - 1.0))
}

/// A pipelined loop repeated `outer_tc` times.
pub fn total_latency(pll: f64, outer_tc: f64) -> Result<f64, PerfError> {
    if !(pll > 0.0) {
        return Err(PerfError::NonPositiveLatency(pll));
    }
    if !(outer_tc >= 1.0) {
        return Err(PerfError::ZeroTripCount(outer_tc));
    }
    Ok(pll * outer_tc)
}

macro_rules! units {
    ($($v:ident => $label:literal),* $(,)?) => {
        /// Every latency-modelled unit of the accelerator.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum Unit { $(#[serde(rename = $label)] $v),* }

        impl Unit {
            pub const ALL: &'static [Unit] = &[$(Unit::$v),*];

            pub fn label(self) -> &'static str {
                match self { $(Unit::$v => $label),* }
            }
        }
    };
}

units! {
    Li => "LI", Lba => "LBA", Lwa => "LWA", Lia => "LIA", Sa => "SA", Ba => "BA",
    Score => "Score", Sv => "SV", Sm => "SM",
    Lif1 => "LIF1", Lwf1 => "LWF1", Lbf1 => "LBF1", Ffn1 => "FFN1", Baf1 => "BAF1",
    Lwn => "LWN", Lbn => "LBN", Rc => "RC", Ln => "LN",
    Lif2 => "LIF2", Lwf2 => "LWF2", Lbf2 => "LBF2", Ffn2 => "FFN2", Baf2 => "BAF2",
    Lif3 => "LIF3", Lwf3 => "LWF3", Lbf3 => "LBF3", Ffn3 => "FFN3", Baf3 => "BAF3",
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Unit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Unit::ALL
            .iter()
            .copied()
            .find(|u| u.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown unit `{s}`"))
    }
}

impl Unit {
    /// How many times the unit runs per layer pass.
    pub fn accesses(self, tiles: &TileConfig) -> f64 {
        let t = tiles.tiles_ffn as f64;
        match self {
            Unit::Lia | Unit::Lwa | Unit::Sa => tiles.tiles_mha as f64,
            Unit::Lif1 | Unit::Lwf1 | Unit::Ffn1 => t * t,
            Unit::Lif2 | Unit::Lwf2 | Unit::Ffn2 | Unit::Lif3 | Unit::Lwf3 | Unit::Ffn3 => {
                4.0 * t * t
            }
            _ => 1.0,
        }
    }
}

/// Cycle count of one unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitLatency {
    pub unit: Unit,
    /// Cycles for one access.
    pub cycles: f64,
    pub accesses: f64,
}

impl UnitLatency {
    pub fn total_cycles(&self) -> f64 {
        self.cycles * self.accesses
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositionMode {
    /// Tile loads double-buffered behind compute.
    #[default]
    Overlapped,
    /// Every load finishes before its compute starts.
    Sequential,
}

impl FromStr for CompositionMode {
    type Err = PerfError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "overlapped" => Ok(CompositionMode::Overlapped),
            "sequential" => Ok(CompositionMode::Sequential),
            _ => Err(PerfError::UnknownMode(s.to_string())),
        }
    }
}

impl fmt::Display for CompositionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompositionMode::Overlapped => "overlapped",
            CompositionMode::Sequential => "sequential",
        })
    }
}

/// Per-phase and whole-model cycle totals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyTotals {
    pub mode: CompositionMode,
    pub attention: f64,
    pub ffn1: f64,
    pub layer_norm: f64,
    pub ffn2: f64,
    pub ffn3: f64,
    pub encoder_layer: f64,
    pub decoder_layer: f64,
    pub model: f64,
}

/// Per-unit cycle counts, optionally composed into layer and model totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub units: Vec<UnitLatency>,
    pub totals: Option<LatencyTotals>,
    pub freq_mhz: Option<f64>,
}

/// Cycles to milliseconds.
pub fn cycles_to_ms(cycles: f64, freq_mhz: f64) -> f64 {
    cycles / (freq_mhz * 1000.0)
}

impl LatencyBreakdown {
    fn from_units(units: Vec<UnitLatency>) -> Self {
        LatencyBreakdown {
            units,
            totals: None,
            freq_mhz: None,
        }
    }

    pub fn get(&self, unit: Unit) -> Option<&UnitLatency> {
        self.units.iter().find(|u| u.unit == unit)
    }

    /// Per-access cycles of `unit`.
    pub fn cycles(&self, unit: Unit) -> Result<f64, PerfError> {
        self.get(unit).map(|u| u.cycles).ok_or(PerfError::MissingUnit(unit))
    }

    /// Per-access milliseconds of `unit`; needs a frequency.
    pub fn ms(&self, unit: Unit) -> Option<f64> {
        Some(cycles_to_ms(self.get(unit)?.cycles, self.freq_mhz?))
    }

    pub fn model_ms(&self) -> Option<f64> {
        Some(cycles_to_ms(self.totals?.model, self.freq_mhz?))
    }

    /// Appends `other`'s units; units already present are replaced.
    pub fn merge(mut self, other: LatencyBreakdown) -> Self {
        for u in other.units {
            match self.units.iter_mut().find(|x| x.unit == u.unit) {
                Some(slot) => *slot = u,
                None => self.units.push(u),
            }
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("breakdown serializes")
    }

    /// `unit,cycles,ms,accesses,total_cycles,total_ms`, followed by the
    /// phase and model totals when composed. `ms` columns are empty without a
    /// frequency.
    pub fn to_csv(&self) -> String {
        let ms = |c: f64| {
            self.freq_mhz
                .map(|f| format!("{}", cycles_to_ms(c, f)))
                .unwrap_or_default()
        };
        let mut out = String::from("unit,cycles,ms,accesses,total_cycles,total_ms\n");
        for u in &self.units {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                u.unit,
                u.cycles,
                ms(u.cycles),
                u.accesses,
                u.total_cycles(),
                ms(u.total_cycles())
            ));
        }
        if let Some(t) = &self.totals {
            for (name, c) in [
                ("attention", t.attention),
                ("ffn1", t.ffn1),
                ("layer_norm", t.layer_norm),
                ("ffn2", t.ffn2),
                ("ffn3", t.ffn3),
                ("encoder_layer", t.encoder_layer),
                ("decoder_layer", t.decoder_layer),
                ("model", t.model),
            ] {
                out.push_str(&format!("{name},{c},{},1,{c},{}\n", ms(c), ms(c)));
            }
        }
        out
    }
}

fn checked(cfg: &ModelConfig, tiles: &TileConfig, k: &PipelineConstants) -> Result<(), PerfError> {
    k.check()?;
    let report = validate_model(cfg, tiles);
    if !report.is_analytically_ok() {
        return Err(PerfError::Invalid(report));
    }
    Ok(())
}

fn unit(u: Unit, cycles: f64, tiles: &TileConfig) -> UnitLatency {
    UnitLatency {
        unit: u,
        cycles,
        accesses: u.accesses(tiles),
    }
}

/// Input loading, the QKV processing module, and the score/softmax/value units.
pub fn attention_latency(
    cfg: &ModelConfig,
    tiles: &TileConfig,
    k: &PipelineConstants,
) -> Result<LatencyBreakdown, PerfError> {
    checked(cfg, tiles, k)?;
    let sl = cfg.seq_len as f64;
    let d = cfg.d_model as f64;
    let dk = cfg.head_width();
    let span = tiles.mha_span(cfg.d_model);
    let ii = k.ii as f64;
    let pd_l = k.pd_load as f64;
    let eps = k.op_overhead as f64;

    let mut sm = 0.0;
    for (depth, pass_ii) in k.softmax_depths().into_iter().zip(k.softmax_iis()) {
        sm += pll(depth as f64, pass_ii as f64, sl)?;
    }

    let units = vec![
        unit(Unit::Li, total_latency(pll(pd_l, ii, d)?, sl)?, tiles),
        unit(Unit::Lia, total_latency(pll(pd_l, ii, span)?, sl)?, tiles),
        unit(Unit::Lwa, total_latency(pll(pd_l, ii, span)?, dk)?, tiles),
        unit(Unit::Lba, pll(pd_l, ii, dk)?, tiles),
        unit(Unit::Sa, total_latency(pll(span + eps, ii, dk)?, sl)?, tiles),
        unit(
            Unit::Ba,
            total_latency(pll(k.pd_bias_add as f64, ii, dk)?, sl)?,
            tiles,
        ),
        unit(Unit::Score, total_latency(pll(dk, ii, sl)?, sl)?, tiles),
        unit(Unit::Sv, total_latency(pll(sl, ii, dk)?, sl)?, tiles),
        unit(Unit::Sm, total_latency(sm, sl)?, tiles),
    ];
    Ok(LatencyBreakdown::from_units(units))
}

/// The three feed-forward clusters: output projection, expansion, contraction.
pub fn ffn_latencies(
    cfg: &ModelConfig,
    tiles: &TileConfig,
    k: &PipelineConstants,
) -> Result<LatencyBreakdown, PerfError> {
    checked(cfg, tiles, k)?;
    let sl = cfg.seq_len as f64;
    let d = cfg.d_model as f64;
    let dh = cfg.d_hidden as f64;
    let span = tiles.ffn_span(cfg.d_model);
    let hspan = dh / tiles.tiles_ffn as f64;
    let ii = k.ii as f64;
    let pd_l = k.pd_load as f64;
    let pd_ba = k.pd_bias_add as f64;
    let eps = k.op_overhead as f64;

    let units = vec![
        unit(Unit::Lif1, total_latency(pll(pd_l, ii, span)?, sl)?, tiles),
        unit(Unit::Lwf1, total_latency(pll(pd_l, ii, span)?, span)?, tiles),
        unit(Unit::Lbf1, pll(pd_l, ii, d)?, tiles),
        unit(Unit::Ffn1, total_latency(pll(span + eps, ii, span)?, sl)?, tiles),
        unit(Unit::Baf1, total_latency(pll(pd_ba, ii, d)?, sl)?, tiles),
        unit(Unit::Lif2, total_latency(pll(pd_l, ii, span)?, sl)?, tiles),
        unit(Unit::Lwf2, total_latency(pll(pd_l, ii, span)?, span)?, tiles),
        unit(Unit::Lbf2, pll(pd_l, ii, d)?, tiles),
        unit(Unit::Ffn2, total_latency(pll(span + eps, ii, hspan)?, sl)?, tiles),
        unit(Unit::Baf2, total_latency(pll(pd_ba, ii, dh)?, sl)?, tiles),
        unit(Unit::Lif3, total_latency(pll(pd_l, ii, hspan)?, sl)?, tiles),
        unit(Unit::Lwf3, total_latency(pll(pd_l, ii, hspan)?, span)?, tiles),
        unit(Unit::Lbf3, pll(pd_l, ii, d)?, tiles),
        unit(Unit::Ffn3, total_latency(pll(hspan + eps, ii, span)?, sl)?, tiles),
        unit(Unit::Baf3, total_latency(pll(pd_ba, ii, d)?, sl)?, tiles),
    ];
    Ok(LatencyBreakdown::from_units(units))
}

/// Residual add and layer normalization, plus its parameter loaders.
pub fn ln_latency(cfg: &ModelConfig, k: &PipelineConstants) -> Result<LatencyBreakdown, PerfError> {
    k.check()?;
    if cfg.seq_len == 0 || cfg.d_model == 0 {
        return Err(PerfError::ZeroTripCount(0.0));
    }
    let sl = cfg.seq_len as f64;
    let d = cfg.d_model as f64;
    let ii = k.ii as f64;
    let mut ln = 0.0;
    for (depth, pass_ii) in k.layer_norm_depths().into_iter().zip(k.layer_norm_iis()) {
        ln += pll(depth as f64, pass_ii as f64, d)?;
    }
    let tiles = TileConfig::new(1, 1);
    let units = vec![
        unit(Unit::Lwn, pll(k.pd_load as f64, ii, d)?, &tiles),
        unit(Unit::Lbn, pll(k.pd_load as f64, ii, d)?, &tiles),
        unit(
            Unit::Rc,
            total_latency(pll(k.pd_bias_add as f64, ii, d)?, sl)?,
            &tiles,
        ),
        unit(Unit::Ln, total_latency(ln, sl)?, &tiles),
    ];
    Ok(LatencyBreakdown::from_units(units))
}

/// All 28 units.
pub fn unit_latencies(
    cfg: &ModelConfig,
    tiles: &TileConfig,
    k: &PipelineConstants,
) -> Result<LatencyBreakdown, PerfError> {
    Ok(attention_latency(cfg, tiles, k)?
        .merge(ffn_latencies(cfg, tiles, k)?)
        .merge(ln_latency(cfg, k)?))
}

/// `n` tile accesses of `load` followed by `compute`, with a one-off
/// `prefetch` (bias loading) that may hide behind the computation.
pub fn tiled_phase(load: f64, compute: f64, n: f64, prefetch: f64, mode: CompositionMode) -> f64 {
    match mode {
        CompositionMode::Sequential => n * (load + compute) + prefetch,
        CompositionMode::Overlapped => {
            load + (n - 1.0) * load.max(compute) + compute + (prefetch - n * compute).max(0.0)
        }
    }
}

/// Folds per-unit cycles into phase, layer and model totals.
pub fn compose_model_latency(
    breakdown: &LatencyBreakdown,
    cfg: &ModelConfig,
    tiles: &TileConfig,
    mode: CompositionMode,
    freq_mhz: f64,
) -> Result<LatencyBreakdown, PerfError> {
    if !(freq_mhz > 0.0) {
        return Err(PerfError::InvalidFrequency(freq_mhz));
    }
    let c = |u: Unit| breakdown.cycles(u);
    let tm = tiles.tiles_mha as f64;
    let t = tiles.tiles_ffn as f64;

    let attention = tiled_phase(c(Unit::Lia)? + c(Unit::Lwa)?, c(Unit::Sa)?, tm, c(Unit::Lba)?, mode)
        + c(Unit::Ba)?
        + c(Unit::Score)?
        + c(Unit::Sm)?
        + c(Unit::Sv)?;
    let ffn1 = tiled_phase(
        c(Unit::Lif1)? + c(Unit::Lwf1)?,
        c(Unit::Ffn1)?,
        t * t,
        c(Unit::Lbf1)?,
        mode,
    ) + c(Unit::Baf1)?;
    let mut layer_norm = c(Unit::Rc)? + c(Unit::Ln)?;
    if mode == CompositionMode::Sequential {
        layer_norm += c(Unit::Lwn)? + c(Unit::Lbn)?;
    }
    let ffn2 = tiled_phase(
        c(Unit::Lif2)? + c(Unit::Lwf2)?,
        c(Unit::Ffn2)?,
        4.0 * t * t,
        c(Unit::Lbf2)?,
        mode,
    ) + c(Unit::Baf2)?;
    let ffn3 = tiled_phase(
        c(Unit::Lif3)? + c(Unit::Lwf3)?,
        c(Unit::Ffn3)?,
        4.0 * t * t,
        c(Unit::Lbf3)?,
        mode,
    ) + c(Unit::Baf3)?;

    let encoder_layer = attention + ffn1 + layer_norm + ffn2 + ffn3 + layer_norm;
    let decoder_layer = 2.0 * (attention + ffn1 + layer_norm) + ffn2 + ffn3 + layer_norm;
    let model =
        c(Unit::Li)? + cfg.n_enc as f64 * encoder_layer + cfg.n_dec as f64 * decoder_layer;

    let mut out = breakdown.clone();
    out.freq_mhz = Some(freq_mhz);
    out.totals = Some(LatencyTotals {
        mode,
        attention,
        ffn1,
        layer_norm,
        ffn2,
        ffn3,
        encoder_layer,
        decoder_layer,
        model,
    });
    Ok(out)
}

/// Unit latencies composed into model totals in one call.
pub fn estimate(
    cfg: &ModelConfig,
    tiles: &TileConfig,
    k: &PipelineConstants,
    mode: CompositionMode,
    freq_mhz: f64,
) -> Result<LatencyBreakdown, PerfError> {
    compose_model_latency(&unit_latencies(cfg, tiles, k)?, cfg, tiles, mode, freq_mhz)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row1() -> (ModelConfig, TileConfig) {
        (ModelConfig::new(64, 768, 8, 1, 0), TileConfig::new(12, 6))
    }

    #[test]
    fn pll_examples() {
        assert_eq!(pll(13.0, 1.0, 768.0).unwrap(), 780.0);
        assert_eq!(pll(7.0, 1.0, 1.0).unwrap(), 7.0);
        assert_eq!(pll(5.0, 2.0, 4.0).unwrap(), 11.0);
        assert!(matches!(pll(5.0, 1.0, 0.0), Err(PerfError::ZeroTripCount(_))));
        assert_eq!(total_latency(780.0, 64.0).unwrap(), 49920.0);
        assert_eq!(total_latency(42.0, 1.0).unwrap(), 42.0);
        assert!(matches!(total_latency(0.0, 3.0), Err(PerfError::NonPositiveLatency(_))));
    }

    #[test]
    fn row1_hand_values() {
        let (cfg, tiles) = row1();
        let b = unit_latencies(&cfg, &tiles, &PipelineConstants::default()).unwrap();
        assert_eq!(b.cycles(Unit::Sa).unwrap(), (95.0 + 64.0 + 2.0) * 64.0);
        assert_eq!(b.cycles(Unit::Lwa).unwrap(), (63.0 + 13.0) * 96.0);
        assert_eq!(b.cycles(Unit::Ffn1).unwrap(), (127.0 + 130.0) * 64.0);
        assert_eq!(b.cycles(Unit::Rc).unwrap(), 49280.0);
        assert_eq!(b.cycles(Unit::Li).unwrap(), 780.0 * 64.0);
        assert_eq!(b.get(Unit::Ffn2).unwrap().accesses, 144.0);
        assert_eq!(b.units.len(), Unit::ALL.len());
    }

    #[test]
    fn degenerate_layer_norm() {
        let cfg = ModelConfig::new(5, 1, 1, 1, 0);
        let k = PipelineConstants::default();
        let b = ln_latency(&cfg, &k).unwrap();
        let depth: u32 = k.layer_norm_depths().iter().sum();
        assert_eq!(b.cycles(Unit::Ln).unwrap(), depth as f64 * 5.0);
        assert_eq!(b.cycles(Unit::Rc).unwrap(), 3.0 * 5.0);
    }

    #[test]
    fn ms_conversion() {
        let (cfg, tiles) = row1();
        let b = estimate(&cfg, &tiles, &PipelineConstants::default(), CompositionMode::Overlapped, 200.0)
            .unwrap();
        assert_eq!(b.ms(Unit::Sa).unwrap(), 10304.0 / 200_000.0);
    }

    #[test]
    fn sequential_not_faster() {
        let (cfg, tiles) = row1();
        let k = PipelineConstants::default();
        let o = estimate(&cfg, &tiles, &k, CompositionMode::Overlapped, 200.0).unwrap();
        let s = estimate(&cfg, &tiles, &k, CompositionMode::Sequential, 200.0).unwrap();
        assert!(s.totals.unwrap().model >= o.totals.unwrap().model);
    }

    #[test]
    fn overlapped_phase_dominated_by_compute() {
        let t = tiled_phase(1.0, 1000.0, 10.0, 5.0, CompositionMode::Overlapped);
        assert_eq!(t, 1.0 + 10.0 * 1000.0);
        let t = tiled_phase(1000.0, 1.0, 10.0, 0.0, CompositionMode::Overlapped);
        assert_eq!(t, 10.0 * 1000.0 + 1.0);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("Sequential".parse::<CompositionMode>().unwrap(), CompositionMode::Sequential);
        assert!(matches!("eager".parse::<CompositionMode>(), Err(PerfError::UnknownMode(_))));
    }

    #[test]
    fn decoder_counts_two_attention_passes() {
        let k = PipelineConstants::default();
        let tiles = TileConfig::new(2, 2);
        let enc = estimate(&ModelConfig::new(8, 32, 2, 1, 0), &tiles, &k, CompositionMode::Overlapped, 100.0)
            .unwrap()
            .totals
            .unwrap();
        let dec = estimate(&ModelConfig::new(8, 32, 2, 0, 1), &tiles, &k, CompositionMode::Overlapped, 100.0)
            .unwrap()
            .totals
            .unwrap();
        assert_eq!(dec.decoder_layer - enc.encoder_layer, enc.attention + enc.ffn1 + enc.layer_norm);
    }

    #[test]
    fn csv_has_units_and_totals() {
        let (cfg, tiles) = row1();
        let b = estimate(&cfg, &tiles, &PipelineConstants::default(), CompositionMode::Overlapped, 200.0)
            .unwrap();
        let csv = b.to_csv();
        assert!(csv.starts_with("unit,cycles,ms,"));
        assert!(csv.contains("\nSA,10304,0.05152,12,"));
        assert!(csv.lines().last().unwrap().starts_with("model,"));
        let back: LatencyBreakdown = serde_json::from_str(&b.to_json()).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn fractional_spans_accepted() {
        let cfg = ModelConfig::new(64, 512, 8, 1, 0);
        let b = unit_latencies(&cfg, &TileConfig::new(8, 6), &PipelineConstants::default()).unwrap();
        let span = 512.0 / 6.0;
        assert!((b.cycles(Unit::Ffn1).unwrap() - (2.0 * span + 1.0) * 64.0).abs() < 1e-9);
    }
}
