//! Tile-count exploration under platform budgets.
//!
//! Every `(tiles_mha, tiles_ffn)` pair is run through the latency model and
//! the resource estimators. Clock frequency is an input: per point from a
//! user table when given, otherwise the platform's.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{validate_model, ModelConfig, PlatformConfig, TileConfig};
use crate::perfmodel::{self, CompositionMode, PerfError, PipelineConstants};
use crate::resources::{self, ResourceError, ResourceEstimate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DseError {
    #[error("candidate tile lists must be non-empty")]
    EmptyCandidates,
    #[error("no candidate fits the platform budgets")]
    NoFeasiblePoint,
    #[error(transparent)]
    Perf(#[from] PerfError),
    #[error(transparent)]
    Resource(#[from] ResourceError),
}

/// Default sweep ranges.
pub const DEFAULT_MHA_TILES: std::ops::RangeInclusive<usize> = 6..=48;
pub const DEFAULT_FFN_TILES: std::ops::RangeInclusive<usize> = 2..=6;

/// Measured clock frequency per tile pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FreqTable(BTreeMap<(usize, usize), f64>);

impl FreqTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, tiles_mha: usize, tiles_ffn: usize, freq_mhz: f64) {
        self.0.insert((tiles_mha, tiles_ffn), freq_mhz);
    }

    pub fn get(&self, tiles_mha: usize, tiles_ffn: usize) -> Option<f64> {
        self.0.get(&(tiles_mha, tiles_ffn)).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<((usize, usize), f64)> for FreqTable {
    fn from_iter<I: IntoIterator<Item = ((usize, usize), f64)>>(iter: I) -> Self {
        FreqTable(iter.into_iter().collect())
    }
}

/// Knobs shared by every point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DseOptions {
    pub bitw: u32,
    pub constants: PipelineConstants,
    pub mode: CompositionMode,
}

impl Default for DseOptions {
    fn default() -> Self {
        DseOptions {
            bitw: 16,
            constants: PipelineConstants::default(),
            mode: CompositionMode::Overlapped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsePoint {
    pub tiles_mha: usize,
    pub tiles_ffn: usize,
    pub resources: ResourceEstimate,
    pub cycles: f64,
    pub freq_mhz: f64,
    pub latency_ms: f64,
    pub feasible: bool,
    /// Some feasible point is at least as good on latency and DSPs and
    /// strictly better on one. Infeasible points are always dominated.
    pub dominated: bool,
    /// Spans divide exactly, so the functional simulator can run this point.
    pub exact: bool,
}

impl DsePoint {
    pub fn key(&self) -> (usize, usize) {
        (self.tiles_mha, self.tiles_ffn)
    }

    pub fn is_pareto(&self) -> bool {
        self.feasible && !self.dominated
    }

    /// Strictly better on one of (latency, DSPs) and no worse on the other.
    pub fn dominates(&self, other: &DsePoint) -> bool {
        self.latency_ms <= other.latency_ms
            && self.resources.dsps <= other.resources.dsps
            && (self.latency_ms < other.latency_ms || self.resources.dsps < other.resources.dsps)
    }
}

fn evaluate(
    cfg: &ModelConfig,
    platform: &PlatformConfig,
    tm: usize,
    tf: usize,
    freq_table: Option<&FreqTable>,
    opts: &DseOptions,
) -> Result<Option<DsePoint>, DseError> {
    let tiles = TileConfig::fitting(tm, tf, cfg);
    let report = validate_model(cfg, &tiles);
    if !report.is_analytically_ok() {
        return Ok(None);
    }
    let freq_mhz = freq_table
        .and_then(|t| t.get(tm, tf))
        .unwrap_or(platform.freq_mhz);
    let latency = perfmodel::estimate(cfg, &tiles, &opts.constants, opts.mode, freq_mhz)?;
    let cycles = latency.totals.expect("composed").model;
    let res = resources::estimate_resources(cfg, &tiles, opts.bitw, platform)?;
    Ok(Some(DsePoint {
        tiles_mha: tm,
        tiles_ffn: tf,
        feasible: res.fits(platform),
        resources: res,
        cycles,
        freq_mhz,
        latency_ms: perfmodel::cycles_to_ms(cycles, freq_mhz),
        dominated: false,
        exact: report.is_ok(),
    }))
}

/// Evaluates the Cartesian product of the candidates, sorted by
/// `(tiles_mha, tiles_ffn)`. Pairs the analytical model rejects (a span
/// below one element, capacity overflow) are left out.
pub fn enumerate(
    cfg: &ModelConfig,
    platform: &PlatformConfig,
    mha_candidates: &[usize],
    ffn_candidates: &[usize],
    freq_table: Option<&FreqTable>,
    opts: &DseOptions,
) -> Result<Vec<DsePoint>, DseError> {
    if mha_candidates.is_empty() || ffn_candidates.is_empty() {
        return Err(DseError::EmptyCandidates);
    }
    let mut mha = mha_candidates.to_vec();
    mha.sort_unstable();
    mha.dedup();
    let mut ffn = ffn_candidates.to_vec();
    ffn.sort_unstable();
    ffn.dedup();

    let pairs: Vec<(usize, usize)> = mha
        .iter()
        .flat_map(|&m| ffn.iter().map(move |&f| (m, f)))
        .collect();
    let evaluated: Result<Vec<Option<DsePoint>>, DseError> = pairs
        .par_iter()
        .map(|&(m, f)| evaluate(cfg, platform, m, f, freq_table, opts))
        .collect();
    let mut points: Vec<DsePoint> = evaluated?.into_iter().flatten().collect();
    points.sort_by_key(|p| p.key());
    mark_dominated(&mut points);
    Ok(points)
}

fn mark_dominated(points: &mut [DsePoint]) {
    let flags: Vec<bool> = points
        .iter()
        .map(|p| !p.feasible || points.iter().any(|q| q.feasible && q.dominates(p)))
        .collect();
    for (p, d) in points.iter_mut().zip(flags) {
        p.dominated = d;
    }
}

/// Fastest feasible point; ties go to fewer DSPs, then fewer BRAMs, then the
/// smaller `(tiles_mha, tiles_ffn)`.
pub fn select_optimum(points: &[DsePoint]) -> Result<&DsePoint, DseError> {
    points
        .iter()
        .filter(|p| p.feasible)
        .min_by(|a, b| {
            a.latency_ms
                .total_cmp(&b.latency_ms)
                .then(a.resources.dsps.total_cmp(&b.resources.dsps))
                .then(a.resources.bram18k.total_cmp(&b.resources.bram18k))
                .then(a.key().cmp(&b.key()))
        })
        .ok_or(DseError::NoFeasiblePoint)
}

/// Feasible points no other feasible point dominates, ordered by latency.
pub fn pareto(points: &[DsePoint]) -> Vec<DsePoint> {
    let mut front: Vec<DsePoint> = points
        .iter()
        .filter(|p| p.feasible && !points.iter().any(|q| q.feasible && q.dominates(p)))
        .cloned()
        .collect();
    front.sort_by(|a, b| a.latency_ms.total_cmp(&b.latency_ms));
    front
}

pub const CSV_HEADER: &str =
    "tiles_mha,tiles_ffn,dsps,bram18k,cycles,freq_mhz,latency_ms,feasible,pareto";

/// One row per point under [`CSV_HEADER`].
pub fn to_csv(points: &[DsePoint]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            p.tiles_mha,
            p.tiles_ffn,
            p.resources.dsps,
            p.resources.bram18k,
            p.cycles,
            p.freq_mhz,
            p.latency_ms,
            p.feasible,
            p.is_pareto()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bert() -> ModelConfig {
        ModelConfig::new(64, 768, 8, 1, 0)
    }

    /// Fits the u55c budgets for most tile pairs.
    fn small() -> ModelConfig {
        ModelConfig::new(64, 384, 6, 2, 0)
    }

    fn default_grid() -> (Vec<usize>, Vec<usize>) {
        (DEFAULT_MHA_TILES.collect(), DEFAULT_FFN_TILES.collect())
    }

    #[test]
    fn default_grid_size() {
        let (m, f) = default_grid();
        let pts = enumerate(&bert(), &PlatformConfig::u55c(), &m, &f, None, &DseOptions::default()).unwrap();
        assert_eq!(pts.len(), 43 * 5);
        assert!(pts.windows(2).all(|w| w[0].key() < w[1].key()));
    }

    #[test]
    fn zero_budget_is_infeasible() {
        let mut p = PlatformConfig::u55c();
        p.dsp_budget = 0;
        let pts = enumerate(&bert(), &p, &[12], &[6], None, &DseOptions::default()).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(!pts[0].feasible);
        assert!(matches!(select_optimum(&pts), Err(DseError::NoFeasiblePoint)));
    }

    #[test]
    fn empty_candidates() {
        let r = enumerate(&bert(), &PlatformConfig::u55c(), &[], &[2], None, &DseOptions::default());
        assert!(matches!(r, Err(DseError::EmptyCandidates)));
    }

    #[test]
    fn order_independent() {
        let opts = DseOptions::default();
        let a = enumerate(&bert(), &PlatformConfig::u55c(), &[6, 12, 24], &[2, 6], None, &opts).unwrap();
        let b = enumerate(&bert(), &PlatformConfig::u55c(), &[24, 6, 12, 6], &[6, 2], None, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_frequency_prefers_fewest_tiles() {
        let (m, f) = default_grid();
        let pts = enumerate(&small(), &PlatformConfig::u55c(), &m, &f, None, &DseOptions::default()).unwrap();
        let best = select_optimum(&pts).unwrap();
        let feasible: Vec<_> = pts.iter().filter(|p| p.feasible).collect();
        let min_m = feasible.iter().map(|p| p.tiles_mha).min().unwrap();
        let min_f = feasible.iter().map(|p| p.tiles_ffn).min().unwrap();
        assert_eq!(best.key(), (min_m, min_f));
    }

    #[test]
    fn frequency_table_moves_the_optimum() {
        let (m, f) = default_grid();
        let plat = PlatformConfig::u55c();
        let opts = DseOptions::default();
        // clock degrades sharply as tiles grow in size (fewer tiles)
        let table: FreqTable = m
            .iter()
            .flat_map(|&tm| f.iter().map(move |&tf| ((tm, tf), if tm < 24 { 60.0 } else { 200.0 })))
            .collect();
        let flat = enumerate(&small(), &plat, &m, &f, None, &opts).unwrap();
        let shaped = enumerate(&small(), &plat, &m, &f, Some(&table), &opts).unwrap();
        let a = select_optimum(&flat).unwrap();
        let b = select_optimum(&shaped).unwrap();
        assert!(b.tiles_mha > a.tiles_mha);
        // exhaustive check against the table-driven latencies
        let min = shaped.iter().filter(|p| p.feasible).map(|p| p.latency_ms).fold(f64::INFINITY, f64::min);
        assert_eq!(b.latency_ms, min);
    }

    #[test]
    fn pareto_single_and_dominated() {
        let pts = enumerate(&small(), &PlatformConfig::u55c(), &[12], &[6], None, &DseOptions::default()).unwrap();
        assert_eq!(pareto(&pts).len(), 1);

        let mut a = pts[0].clone();
        let mut b = pts[0].clone();
        b.tiles_mha = 13;
        b.latency_ms += 1.0;
        b.resources.dsps += 1.0;
        a.dominated = false;
        let front = pareto(&[a.clone(), b]);
        assert_eq!(front, vec![a]);
    }

    #[test]
    fn csv_columns() {
        let pts = enumerate(&bert(), &PlatformConfig::u55c(), &[12], &[6], None, &DseOptions::default()).unwrap();
        let csv = to_csv(&pts);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert!(lines.next().unwrap().starts_with("12,6,4352,"));
    }
}
