//! `simulate` and `generate`.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use tnn_accel::config::ModelConfig;
use tnn_accel::datapath::{ModelWeights, Tensor};
use tnn_accel::engine::Accelerator;
use tnn_accel::fixedpoint::FixedFormat;
use tnn_accel::manifest::{self, TensorManifest};

use crate::args::load_model;
use crate::error::InputError;
use crate::{GenerateArgs, SimulateArgs};

#[derive(Debug, Serialize)]
struct Summary {
    output: String,
    /// SHA-256 of the output file.
    checksum: String,
    /// Host time spent in the forward pass of this simulator, not device time.
    simulator_wall_time_s: f64,
    mode: &'static str,
    format: String,
    tiles: [usize; 2],
    config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_abs_diff: Option<f64>,
}

pub fn run(a: SimulateArgs) -> Result<()> {
    let cfg = load_model(&a.model)?;
    let format: FixedFormat = a
        .format
        .parse()
        .with_context(|| format!("--format {}", a.format))?;

    let mut acc = Accelerator::new(a.tiles.config(), format);
    acc.configure(&cfg)?;

    let weights = TensorManifest::load_weights(&a.weights, &cfg)?;
    let x = manifest::read_f32le(&a.input, cfg.seq_len, cfg.d_model)?;
    let dec = a
        .decoder_input
        .as_deref()
        .map(|p| manifest::read_f32le(p, cfg.seq_len, cfg.d_model))
        .transpose()?;

    let start = Instant::now();
    let fixed = acc.run(&weights, &x, dec.as_ref())?;
    let (out, mode, diff) = if a.reference {
        let real = acc.run_reference(&weights, &x, dec.as_ref())?;
        let diff = fixed.max_abs_diff(&real);
        (real, "reference", Some(diff))
    } else {
        (fixed, "fixed", None)
    };
    let wall = start.elapsed().as_secs_f64();

    let bytes = manifest::f32le_bytes(&out);
    fs::write(&a.output, &bytes).with_context(|| format!("writing {}", a.output.display()))?;

    let summary = Summary {
        output: a.output.display().to_string(),
        checksum: hex::encode(Sha256::digest(&bytes)),
        simulator_wall_time_s: wall,
        mode,
        format: format!("Q{}.{}", format.total_bits() - format.frac_bits(), format.frac_bits()),
        tiles: [a.tiles.mha, a.tiles.ffn],
        config: serde_json::from_str(&cfg.to_json())?,
        max_abs_diff: diff,
    };
    crate::emit(format_args!("{}\n", serde_json::to_string_pretty(&summary)?))?;
    Ok(())
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let cfg = load_model(&a.model)?;
    if !(a.scale >= 0.0) {
        return Err(InputError::msg("--scale must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let weights = if a.zero {
        ModelWeights::constant(&cfg, 0.0, 0.0)
    } else {
        ModelWeights::random(&mut rng, &cfg, a.scale)
    };
    let path = manifest::write_weights(&weights, &a.out)?;
    let x = random_input(&mut rng, &cfg, a.scale);
    manifest::write_f32le(&a.out.join("x.bin"), &x)?;
    save_model(&cfg, &a.out.join("model.json"))?;
    crate::emit(format_args!("{}\n", path.display()))?;
    Ok(())
}

fn random_input(rng: &mut ChaCha8Rng, cfg: &ModelConfig, scale: f64) -> Tensor<f64> {
    use rand::Rng;
    Tensor::from_fn(cfg.seq_len, cfg.d_model, |_, _| rng.gen_range(-scale..=scale))
}

fn save_model(cfg: &ModelConfig, path: &Path) -> Result<()> {
    fs::write(path, cfg.to_json()).with_context(|| format!("writing {}", path.display()))
}
