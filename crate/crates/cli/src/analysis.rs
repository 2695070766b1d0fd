//! Analytical commands: `estimate`, `resources`, `roofline` and `dse`.

use std::fmt::Write as _;
use std::fs;

use anyhow::{anyhow, Context, Result};
use tnn_accel::config::{ModelConfig, PlatformConfig, TileConfig};
use tnn_accel::dse::{self, DseOptions};
use tnn_accel::perfmodel::{self, oracle, CompositionMode};
use tnn_accel::resources::{self, ResourceEstimate, ResourceReport};

use crate::args::{load_constants, load_freq_table, load_model, load_platform};
use crate::error::InputError;
use crate::{DseArgs, EstimateArgs, ResourcesArgs, RooflineArgs};

pub fn estimate(a: EstimateArgs) -> Result<()> {
    let cfg = load_model(&a.model)?;
    let k = load_constants(a.constants.as_deref())?;
    let mode: CompositionMode = a.mode.parse().map_err(|e: perfmodel::PerfError| InputError::wrap(e.into()))?;
    let tiles = TileConfig::fitting(a.tiles.mha, a.tiles.ffn, &cfg);
    let breakdown = perfmodel::estimate(&cfg, &tiles, &k, mode, a.freq)?;

    if a.validate {
        let walked = oracle::loopnest_oracle(&cfg, &tiles, &k)?;
        let mut mismatches = Vec::new();
        for u in &breakdown.units {
            let w = walked.cycles(u.unit)?;
            if w != u.cycles {
                mismatches.push(format!("{}: closed form {} vs loop nest {}", u.unit.label(), u.cycles, w));
            }
        }
        if !mismatches.is_empty() {
            return Err(anyhow!("loop-nest validation failed:\n  {}", mismatches.join("\n  ")));
        }
        eprintln!("validated {} units against the loop-nest walk", breakdown.units.len());
    }

    if a.csv {
        crate::emit(format_args!("{}", breakdown.to_csv()))?;
    } else {
        crate::emit(format_args!("{}\n", breakdown.to_json()))?;
    }
    Ok(())
}

/// Bandwidth of the on-chip memories the design occupies: the estimated
/// 36 kb BRAM count plus the platform's LUTRAM.
fn design_bandwidth(est: &ResourceEstimate, platform: &PlatformConfig) -> f64 {
    resources::memory_bandwidth(
        est.bram36k().ceil() as u64,
        platform.bram_width_bits as u64,
        platform.lutram_count,
        platform.lutram_width_bits as u64,
        platform.freq_mhz,
    )
}

pub fn resources(a: ResourcesArgs) -> Result<()> {
    let cfg = load_model(&a.model)?;
    let platform = load_platform(&a.platform)?;
    let tiles = TileConfig::fitting(a.tiles.mha, a.tiles.ffn, &cfg);
    let est = resources::estimate_resources(&cfg, &tiles, a.bitw, &platform)?;
    if est.dsps > platform.dsp_budget as f64 {
        eprintln!(
            "warning: {} DSPs exceed the {} budget of {}",
            est.dsps, platform.name, platform.dsp_budget
        );
    }
    if est.bram18k > platform.bram18k_budget as f64 {
        eprintln!(
            "warning: {} BRAM18K exceed the {} budget of {}",
            est.bram18k, platform.name, platform.bram18k_budget
        );
    }
    let bw = design_bandwidth(&est, &platform);
    crate::emit(format_args!("{}\n", ResourceReport::new(est, bw, None).to_json()))?;
    Ok(())
}

pub const ROOFLINE_HEADER: &str =
    "tiles_mha,tiles_ffn,layers,ops,bytes,intensity,attainable_gops,bound";

pub fn roofline(a: RooflineArgs) -> Result<()> {
    let cfg = load_model(&a.model)?;
    let platform = load_platform(&a.platform)?;
    let layers = a.layers.clone().map_or_else(|| vec![cfg.n_enc], |l| l.0);
    if let Some(bw) = a.bandwidth {
        if !(bw > 0.0) {
            return Err(InputError::msg("--bandwidth must be positive"));
        }
    }

    let mut out = String::from(ROOFLINE_HEADER);
    out.push('\n');
    for t in &a.tiles {
        for &n in &layers {
            let c = ModelConfig { n_enc: n, ..cfg };
            if c.n_enc + c.n_dec == 0 {
                return Err(InputError::msg("roofline needs at least one layer"));
            }
            let tiles = TileConfig::fitting(t.mha, t.ffn, &c);
            let bw = match a.bandwidth {
                Some(bw) => bw,
                None => design_bandwidth(
                    &resources::bram_estimate(&c, &tiles, a.bitw, &platform)?,
                    &platform,
                ),
            };
            let p = resources::roofline(&c, &tiles, a.bitw, a.peak_gops, bw)?;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{:?}",
                t.mha, t.ffn, n, p.ops, p.bytes, p.intensity, p.attainable_gops, p.bound
            )?;
        }
    }
    crate::emit(format_args!("{out}"))?;
    Ok(())
}

pub fn dse(a: DseArgs) -> Result<()> {
    let cfg = load_model(&a.model)?;
    let platform = load_platform(&a.platform)?;
    let table = a.freq_table.as_deref().map(load_freq_table).transpose()?;
    let opts = DseOptions {
        bitw: a.bitw,
        constants: load_constants(a.constants.as_deref())?,
        ..DseOptions::default()
    };
    let points = dse::enumerate(&cfg, &platform, &a.mha_tiles.0, &a.ffn_tiles.0, table.as_ref(), &opts)?;
    let csv = dse::to_csv(&points);
    match &a.out {
        Some(path) => {
            fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?
        }
        None => crate::emit(format_args!("{csv}"))?,
    }
    let best = dse::select_optimum(&points)?;
    eprintln!(
        "optimum on {}: tiles {},{}  latency {:.6} ms  dsps {}  bram18k {}",
        platform.name,
        best.tiles_mha,
        best.tiles_ffn,
        best.latency_ms,
        best.resources.dsps,
        best.resources.bram18k
    );
    Ok(())
}
