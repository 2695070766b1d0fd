use std::ops::Range;

use super::DatapathError;
use crate::config::{ModelConfig, TileConfig};

/// One module access: a block of the reduction axis (`k`, rows of the weight
/// matrix) crossed with a block of output columns (`n`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tile {
    pub k: Range<usize>,
    pub n: Range<usize>,
}

/// Ordered tile visits over a `k_dim × n_dim` weight matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileSchedule {
    k_dim: usize,
    n_dim: usize,
    tiles: Vec<Tile>,
}

fn split(dim: usize, parts: usize, what: &str) -> Result<Vec<Range<usize>>, DatapathError> {
    if parts == 0 || dim == 0 || !dim.is_multiple_of(parts) {
        return Err(DatapathError::Indivisible(format!(
            "{what}: {dim} cannot be split into {parts} equal tiles"
        )));
    }
    let span = dim / parts;
    Ok((0..parts).map(|i| i * span..(i + 1) * span).collect())
}

impl TileSchedule {
    /// Single tile covering everything.
    pub fn untiled(k_dim: usize, n_dim: usize) -> Self {
        TileSchedule {
            k_dim,
            n_dim,
            tiles: vec![Tile {
                k: 0..k_dim,
                n: 0..n_dim,
            }],
        }
    }

    /// `k_tiles × n_tiles` grid. Column partials of one row block are
    /// produced first, then the next row block is accumulated on top.
    pub fn grid(
        k_dim: usize,
        n_dim: usize,
        k_tiles: usize,
        n_tiles: usize,
    ) -> Result<Self, DatapathError> {
        let ks = split(k_dim, k_tiles, "reduction axis")?;
        let ns = split(n_dim, n_tiles, "output axis")?;
        let tiles = ks
            .iter()
            .flat_map(|k| ns.iter().map(move |n| Tile { k: k.clone(), n: n.clone() }))
            .collect();
        Ok(TileSchedule { k_dim, n_dim, tiles })
    }

    /// QKV projection: the `d_model` reduction axis is cut into `tiles_mha`
    /// column slices of the input; each head's output width stays whole.
    pub fn mha(d_model: usize, head_dim: usize, tiles_mha: usize) -> Result<Self, DatapathError> {
        Self::grid(d_model, head_dim, tiles_mha, 1)
    }

    /// Output projection, `tiles_ffn²` square blocks.
    pub fn ffn1(d_model: usize, tiles_ffn: usize) -> Result<Self, DatapathError> {
        Self::grid(d_model, d_model, tiles_ffn, tiles_ffn)
    }

    /// Expansion, `tiles_ffn × 4·tiles_ffn` blocks.
    pub fn ffn2(d_model: usize, d_hidden: usize, tiles_ffn: usize) -> Result<Self, DatapathError> {
        Self::grid(d_model, d_hidden, tiles_ffn, 4 * tiles_ffn)
    }

    /// Contraction, `4·tiles_ffn × tiles_ffn` blocks.
    pub fn ffn3(d_hidden: usize, d_model: usize, tiles_ffn: usize) -> Result<Self, DatapathError> {
        Self::grid(d_hidden, d_model, 4 * tiles_ffn, tiles_ffn)
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.k_dim, self.n_dim)
    }

    /// True when every `(k, n)` cell is visited exactly once.
    pub fn is_partition(&self) -> bool {
        let mut hits = vec![0u32; self.k_dim * self.n_dim];
        for t in &self.tiles {
            if t.k.end > self.k_dim || t.n.end > self.n_dim {
                return false;
            }
            for k in t.k.clone() {
                for n in t.n.clone() {
                    hits[k * self.n_dim + n] += 1;
                }
            }
        }
        hits.iter().all(|&h| h == 1)
    }
}

/// Every schedule one layer needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSchedules {
    pub qkv: TileSchedule,
    pub ffn1: TileSchedule,
    pub ffn2: TileSchedule,
    pub ffn3: TileSchedule,
}

impl LayerSchedules {
    pub fn new(cfg: &ModelConfig, tiles: &TileConfig) -> Result<Self, DatapathError> {
        let head_dim = cfg.head_dim().ok_or_else(|| {
            DatapathError::Indivisible(format!(
                "d_model {} is not divisible by {} heads",
                cfg.d_model, cfg.heads
            ))
        })?;
        Ok(LayerSchedules {
            qkv: TileSchedule::mha(cfg.d_model, head_dim, tiles.tiles_mha)?,
            ffn1: TileSchedule::ffn1(cfg.d_model, tiles.tiles_ffn)?,
            ffn2: TileSchedule::ffn2(cfg.d_model, cfg.d_hidden, tiles.tiles_ffn)?,
            ffn3: TileSchedule::ffn3(cfg.d_hidden, cfg.d_model, tiles.tiles_ffn)?,
        })
    }

    /// Reference schedules with a single tile each.
    pub fn untiled(cfg: &ModelConfig) -> Result<Self, DatapathError> {
        let head_dim = cfg.head_dim().ok_or_else(|| {
            DatapathError::Indivisible(format!(
                "d_model {} is not divisible by {} heads",
                cfg.d_model, cfg.heads
            ))
        })?;
        Ok(LayerSchedules {
            qkv: TileSchedule::untiled(cfg.d_model, head_dim),
            ffn1: TileSchedule::untiled(cfg.d_model, cfg.d_model),
            ffn2: TileSchedule::untiled(cfg.d_model, cfg.d_hidden),
            ffn3: TileSchedule::untiled(cfg.d_hidden, cfg.d_model),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tile_counts() {
        let cfg = ModelConfig::new(4, 24, 2, 1, 0);
        let s = LayerSchedules::new(&cfg, &TileConfig::new(3, 2)).unwrap();
        assert_eq!(s.qkv.len(), 3);
        assert_eq!(s.ffn1.len(), 4);
        assert_eq!(s.ffn2.len(), 16);
        assert_eq!(s.ffn3.len(), 16);
        for sched in [&s.qkv, &s.ffn1, &s.ffn2, &s.ffn3] {
            assert!(sched.is_partition());
        }
        // FFN2 blocks are TS_FFN square when d_hidden = 4 d_model
        assert_eq!(s.ffn2.tiles()[0].k, 0..12);
        assert_eq!(s.ffn2.tiles()[0].n, 0..12);
    }

    #[test]
    fn indivisible_is_rejected() {
        assert!(matches!(
            TileSchedule::mha(10, 5, 3),
            Err(DatapathError::Indivisible(_))
        ));
        assert!(TileSchedule::grid(4, 4, 0, 1).is_err());
    }

    #[test]
    fn overlapping_schedule_is_not_a_partition() {
        let mut s = TileSchedule::grid(4, 4, 2, 2).unwrap();
        s.tiles.push(Tile { k: 0..1, n: 0..1 });
        assert!(!s.is_partition());
    }
}
