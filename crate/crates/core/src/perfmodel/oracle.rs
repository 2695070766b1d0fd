//! Cycle counting by walking each unit's loop nest.
//!
//! Outer loops are not pipelined, the loops inside them are pipelined at a
//! fixed initiation interval, and innermost reductions are fully unrolled
//! into the body's depth. Each iteration is issued `ii` cycles after the
//! previous one; a pipelined loop finishes when its last iteration drains.
//! Nothing here reuses the closed forms.

use super::{LatencyBreakdown, PerfError, PipelineConstants, Unit, UnitLatency};
use crate::config::{ModelConfig, TileConfig};

/// One pipelined loop: `trips` iterations of a `depth`-cycle body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelinedLoop {
    pub trips: u64,
    pub depth: u64,
    pub ii: u64,
}

impl PipelinedLoop {
    pub fn new(trips: u64, depth: u64, ii: u64) -> Self {
        PipelinedLoop { trips, depth, ii }
    }

    /// Cycle at which the last iteration completes, starting from cycle 0.
    pub fn walk(&self) -> u64 {
        let mut issue = 0u64;
        let mut done = 0u64;
        for t in 0..self.trips {
            if t > 0 {
                issue += self.ii;
            }
            done = done.max(issue + self.depth);
        }
        done
    }
}

/// An un-pipelined outer loop whose body runs pipelined loops back to back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopNest {
    pub outer: u64,
    pub body: Vec<PipelinedLoop>,
}

impl LoopNest {
    fn single(outer: u64, inner: PipelinedLoop) -> Self {
        LoopNest {
            outer,
            body: vec![inner],
        }
    }

    pub fn walk(&self) -> u64 {
        let mut cycles = 0;
        for _ in 0..self.outer {
            for l in &self.body {
                cycles += l.walk();
            }
        }
        cycles
    }
}

fn exact_div(num: usize, den: usize, what: &str) -> Result<u64, PerfError> {
    if den == 0 || !num.is_multiple_of(den) || num < den {
        return Err(PerfError::NonIntegral(format!("{what}: {num} / {den}")));
    }
    Ok((num / den) as u64)
}

/// The loop nest of `unit` for the given configuration.
pub fn unit_nest(
    unit: Unit,
    cfg: &ModelConfig,
    tiles: &TileConfig,
    k: &PipelineConstants,
) -> Result<LoopNest, PerfError> {
    k.check()?;
    let sl = cfg.seq_len as u64;
    let d = cfg.d_model as u64;
    let dh = cfg.d_hidden as u64;
    let dk = exact_div(cfg.d_model, cfg.heads, "head width")?;
    let mspan = exact_div(cfg.d_model, tiles.tiles_mha, "attention tile span")?;
    let fspan = exact_div(cfg.d_model, tiles.tiles_ffn, "ffn tile span")?;
    let hspan = exact_div(cfg.d_hidden, tiles.tiles_ffn, "ffn hidden span")?;
    if sl == 0 || d == 0 {
        return Err(PerfError::NonIntegral("empty sequence or embedding".into()));
    }
    let ii = k.ii as u64;
    let load = k.pd_load as u64;
    let bias = k.pd_bias_add as u64;
    let eps = k.op_overhead as u64;
    // compute bodies unroll a reduction of `width` MACs into the depth
    let mac_body = |width: u64| width + eps;

    let nest = match unit {
        Unit::Li => LoopNest::single(sl, PipelinedLoop::new(d, load, ii)),
        Unit::Lia => LoopNest::single(sl, PipelinedLoop::new(mspan, load, ii)),
        Unit::Lwa => LoopNest::single(dk, PipelinedLoop::new(mspan, load, ii)),
        Unit::Lba => LoopNest::single(1, PipelinedLoop::new(dk, load, ii)),
        Unit::Sa => LoopNest::single(sl, PipelinedLoop::new(dk, mac_body(mspan), ii)),
        Unit::Ba => LoopNest::single(sl, PipelinedLoop::new(dk, bias, ii)),
        Unit::Score => LoopNest::single(sl, PipelinedLoop::new(sl, dk, ii)),
        Unit::Sv => LoopNest::single(sl, PipelinedLoop::new(dk, sl, ii)),
        Unit::Sm => LoopNest {
            outer: sl,
            body: k
                .softmax_depths()
                .iter()
                .zip(k.softmax_iis())
                .map(|(&depth, pass_ii)| PipelinedLoop::new(sl, depth as u64, pass_ii as u64))
                .collect(),
        },
        Unit::Lif1 | Unit::Lif2 => LoopNest::single(sl, PipelinedLoop::new(fspan, load, ii)),
        Unit::Lwf1 | Unit::Lwf2 => LoopNest::single(fspan, PipelinedLoop::new(fspan, load, ii)),
        Unit::Lbf1 | Unit::Lbf2 | Unit::Lbf3 | Unit::Lwn | Unit::Lbn => {
            LoopNest::single(1, PipelinedLoop::new(d, load, ii))
        }
        Unit::Ffn1 => LoopNest::single(sl, PipelinedLoop::new(fspan, mac_body(fspan), ii)),
        Unit::Baf1 | Unit::Baf3 | Unit::Rc => LoopNest::single(sl, PipelinedLoop::new(d, bias, ii)),
        Unit::Ffn2 => LoopNest::single(sl, PipelinedLoop::new(hspan, mac_body(fspan), ii)),
        Unit::Baf2 => LoopNest::single(sl, PipelinedLoop::new(dh, bias, ii)),
        Unit::Lif3 => LoopNest::single(sl, PipelinedLoop::new(hspan, load, ii)),
        Unit::Lwf3 => LoopNest::single(fspan, PipelinedLoop::new(hspan, load, ii)),
        Unit::Ffn3 => LoopNest::single(sl, PipelinedLoop::new(fspan, mac_body(hspan), ii)),
        Unit::Ln => LoopNest {
            outer: sl,
            body: k
                .layer_norm_depths()
                .iter()
                .zip(k.layer_norm_iis())
                .map(|(&depth, pass_ii)| PipelinedLoop::new(d, depth as u64, pass_ii as u64))
                .collect(),
        },
    };
    Ok(nest)
}

/// Per-unit cycle counts from the loop-nest walk. Needs integral spans.
pub fn loopnest_oracle(
    cfg: &ModelConfig,
    tiles: &TileConfig,
    k: &PipelineConstants,
) -> Result<LatencyBreakdown, PerfError> {
    let mut units = Vec::with_capacity(Unit::ALL.len());
    for &u in Unit::ALL {
        let cycles = unit_nest(u, cfg, tiles, k)?.walk() as f64;
        units.push(UnitLatency {
            unit: u,
            cycles,
            accesses: u.accesses(tiles),
        });
    }
    Ok(LatencyBreakdown {
        units,
        totals: None,
        freq_mhz: None,
    })
}
