//! Argument parsing and input loading shared by the subcommands.

use std::fs;
use std::io::Read;
use std::path::Path;

use anyhow::{Context, Result};
use tnn_accel::config::{ModelConfig, PlatformConfig, TileConfig};
use tnn_accel::dse::FreqTable;
use tnn_accel::perfmodel::PipelineConstants;

use crate::error::InputError;

/// `M,F` tile counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TilePair {
    pub mha: usize,
    pub ffn: usize,
}

impl TilePair {
    pub fn config(self) -> TileConfig {
        TileConfig::new(self.mha, self.ffn)
    }
}

pub fn parse_tiles(s: &str) -> Result<TilePair, String> {
    let (m, f) = s
        .split_once(',')
        .ok_or_else(|| format!("expected M,F tile counts, got `{s}`"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| format!("tile count must be a positive integer, got `{v}`"))
    };
    Ok(TilePair {
        mha: parse(m)?,
        ffn: parse(f)?,
    })
}

/// A parsed candidate list; one clap value rather than many.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountList(pub Vec<usize>);

/// Comma-separated list; each item may be a single value or an inclusive
/// range `a..b`.
pub fn parse_count_list(s: &str) -> Result<CountList, String> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
        if let Some((a, b)) = item.split_once("..") {
            let a: usize = a.parse().map_err(|_| format!("bad range start in `{item}`"))?;
            let b: usize = b
                .trim_start_matches('=')
                .parse()
                .map_err(|_| format!("bad range end in `{item}`"))?;
            if a > b {
                return Err(format!("empty range `{item}`"));
            }
            out.extend(a..=b);
        } else {
            out.push(item.parse().map_err(|_| format!("bad count `{item}`"))?);
        }
    }
    if out.is_empty() {
        return Err("candidate list is empty".into());
    }
    if out.contains(&0) {
        return Err("tile counts must be >= 1".into());
    }
    Ok(CountList(out))
}

pub fn parse_layer_list(s: &str) -> Result<CountList, String> {
    s.split(',')
        .map(|v| v.trim().parse::<usize>().map_err(|_| format!("bad layer count `{v}`")))
        .collect::<Result<_, _>>()
        .map(CountList)
}

pub fn parse_positive_freq(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(f) if f > 0.0 && f.is_finite() => Ok(f),
        _ => Err(format!("frequency must be a positive number of MHz, got `{s}`")),
    }
}

/// Reads a file, or stdin for `-`.
pub fn read_text(path: &str) -> Result<String> {
    if path == "-" {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .context("reading stdin")?;
        Ok(s)
    } else {
        fs::read_to_string(path).with_context(|| format!("reading {path}"))
    }
}

pub fn load_model(path: &str) -> Result<ModelConfig> {
    let text = read_text(path).map_err(InputError::wrap)?;
    ModelConfig::from_json(&text)
        .map_err(|e| InputError::wrap(anyhow::anyhow!("{path}: {e}")))
}

/// A preset name or a platform JSON file.
pub fn load_platform(name: &str) -> Result<PlatformConfig> {
    let platform = match PlatformConfig::preset(name) {
        Some(p) => p,
        None if Path::new(name).exists() => {
            let text = fs::read_to_string(name).with_context(|| format!("reading {name}"))?;
            serde_json::from_str(&text)
                .with_context(|| format!("{name}: malformed platform"))
                .map_err(InputError::wrap)?
        }
        None => {
            let names: Vec<String> = PlatformConfig::presets().into_iter().map(|p| p.name).collect();
            return Err(InputError::wrap(anyhow::anyhow!(
                "unknown platform `{name}` (presets: {}; or a JSON file)",
                names.join(", ")
            )));
        }
    };
    platform.check().map_err(|e| InputError::wrap(e.into()))?;
    Ok(platform)
}

pub fn load_constants(path: Option<&str>) -> Result<PipelineConstants> {
    let Some(path) = path else {
        return Ok(PipelineConstants::default());
    };
    let text = read_text(path).map_err(InputError::wrap)?;
    let k: PipelineConstants = serde_json::from_str(&text)
        .with_context(|| format!("{path}: malformed pipeline constants"))
        .map_err(InputError::wrap)?;
    k.check().map_err(|e| InputError::wrap(e.into()))?;
    Ok(k)
}

/// CSV with columns `tiles_mha,tiles_ffn,freq_mhz`.
pub fn load_freq_table(path: &str) -> Result<FreqTable> {
    let mut rdr = csv::Reader::from_path(path)
        .with_context(|| format!("reading {path}"))
        .map_err(InputError::wrap)?;
    let mut table = FreqTable::new();
    for (i, rec) in rdr.deserialize::<(usize, usize, f64)>().enumerate() {
        let (m, f, freq) = rec
            .with_context(|| format!("{path}: row {}", i + 1))
            .map_err(InputError::wrap)?;
        if !(freq > 0.0) {
            return Err(InputError::msg(format!(
                "{path}: row {}: frequency must be positive",
                i + 1
            )));
        }
        table.insert(m, f, freq);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiles_and_lists() {
        assert_eq!(parse_tiles("12,6").unwrap(), TilePair { mha: 12, ffn: 6 });
        assert!(parse_tiles("12").is_err());
        assert!(parse_tiles("0,1").is_err());
        assert_eq!(parse_count_list("1,2,4..6").unwrap().0, vec![1, 2, 4, 5, 6]);
        assert_eq!(parse_count_list("6..=8").unwrap().0, vec![6, 7, 8]);
        assert!(parse_count_list("").is_err());
        assert!(parse_count_list("5..2").is_err());
        assert!(parse_positive_freq("0").is_err());
        assert!(parse_positive_freq("-3").is_err());
        assert_eq!(parse_positive_freq("135").unwrap(), 135.0);
    }
}
