//! `tnn-accel`: simulate, estimate and explore the transformer accelerator.

mod analysis;
mod args;
mod error;
mod registers;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use args::{parse_count_list, parse_layer_list, parse_positive_freq, parse_tiles, CountList, TilePair};

#[derive(Debug, Parser)]
#[command(name = "tnn-accel", version, about = "Transformer accelerator simulator and design-space explorer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a model through the bit-accurate datapath.
    Simulate(SimulateArgs),
    /// Write random (or zero) weights, a manifest and an input tensor for a model.
    Generate(GenerateArgs),
    /// Analytical latency per unit and per model.
    Estimate(EstimateArgs),
    /// DSP and BRAM estimates with per-term breakdown.
    Resources(ResourcesArgs),
    /// Roofline placement for one or more tile/layer combinations.
    Roofline(RooflineArgs),
    /// Sweep tile counts under a platform's budgets.
    Dse(DseArgs),
    /// Apply register writes and print the register file.
    Registers(RegistersArgs),
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Model configuration JSON (`-` for stdin).
    #[arg(long)]
    pub model: String,
    /// Tensor manifest JSON.
    #[arg(long)]
    pub weights: PathBuf,
    /// Input tensor, f32le, seq_len × d_model.
    #[arg(long)]
    pub input: PathBuf,
    /// Decoder input tensor; defaults to the encoder output.
    #[arg(long)]
    pub decoder_input: Option<PathBuf>,
    /// Tile counts `MHA,FFN`.
    #[arg(long, value_parser = parse_tiles, default_value = "1,1")]
    pub tiles: TilePair,
    /// Fixed-point format `Qm.n`.
    #[arg(long, default_value = "Q8.8")]
    pub format: String,
    /// Run in double precision and report the difference to fixed point.
    #[arg(long)]
    pub reference: bool,
    /// Output tensor path (f32le).
    #[arg(long, default_value = "y.bin")]
    pub output: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: String,
    /// Directory for the tensors and manifest.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Weights and inputs are drawn from [-scale, scale].
    #[arg(long, default_value_t = 0.5)]
    pub scale: f64,
    /// All weights and biases zero, LN gamma one.
    #[arg(long)]
    pub zero: bool,
}

#[derive(Debug, clap::Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, value_parser = parse_tiles)]
    pub tiles: TilePair,
    /// Clock in MHz.
    #[arg(long, value_parser = parse_positive_freq, default_value = "200")]
    pub freq: f64,
    /// Pipeline constants JSON; missing fields keep their defaults.
    #[arg(long)]
    pub constants: Option<String>,
    /// `overlapped` or `sequential`.
    #[arg(long, default_value = "overlapped")]
    pub mode: String,
    /// Print CSV instead of JSON.
    #[arg(long)]
    pub csv: bool,
    /// Also walk the loop nests and fail on any disagreement.
    #[arg(long)]
    pub validate: bool,
}

#[derive(Debug, clap::Args)]
pub struct ResourcesArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, value_parser = parse_tiles)]
    pub tiles: TilePair,
    /// Data width in bits.
    #[arg(long, default_value_t = 16)]
    pub bitw: u32,
    /// Preset name or platform JSON.
    #[arg(long, default_value = "u55c")]
    pub platform: String,
}

#[derive(Debug, clap::Args)]
pub struct RooflineArgs {
    #[arg(long)]
    pub model: String,
    /// Tile counts `MHA,FFN`; repeatable.
    #[arg(long, value_parser = parse_tiles, required = true)]
    pub tiles: Vec<TilePair>,
    /// Encoder layer counts to evaluate (defaults to the model's).
    #[arg(long, value_parser = parse_layer_list)]
    pub layers: Option<CountList>,
    #[arg(long)]
    pub peak_gops: f64,
    #[arg(long, default_value = "u55c")]
    pub platform: String,
    #[arg(long, default_value_t = 16)]
    pub bitw: u32,
    /// Bandwidth in bytes/s; defaults to the platform's on-chip memories.
    #[arg(long)]
    pub bandwidth: Option<f64>,
}

#[derive(Debug, clap::Args)]
pub struct DseArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value = "u55c")]
    pub platform: String,
    /// MHA tile candidates, e.g. `6..48` or `6,12,24`.
    #[arg(long, value_parser = parse_count_list, default_value = "6..48")]
    pub mha_tiles: CountList,
    #[arg(long, value_parser = parse_count_list, default_value = "2..6")]
    pub ffn_tiles: CountList,
    /// CSV `tiles_mha,tiles_ffn,freq_mhz` of measured clocks.
    #[arg(long)]
    pub freq_table: Option<String>,
    #[arg(long, default_value_t = 16)]
    pub bitw: u32,
    #[arg(long)]
    pub constants: Option<String>,
    /// Write the grid CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct RegistersArgs {
    /// Build-time tile counts `MHA,FFN`.
    #[arg(long, value_parser = parse_tiles, default_value = "12,6")]
    pub tiles: TilePair,
    /// Preload registers from a model configuration.
    #[arg(long)]
    pub model: Option<String>,
    /// `Name=value`, applied in order; repeatable.
    #[arg(long = "write", value_name = "NAME=VALUE")]
    pub writes: Vec<String>,
    /// Print the register dump (default when `--emit-model` is absent).
    #[arg(long)]
    pub show: bool,
    /// Print the resulting model configuration JSON on stdout.
    #[arg(long)]
    pub emit_model: bool,
}

/// Writes to stdout, surfacing a closed pipe as an error instead of a panic.
pub(crate) fn emit(text: std::fmt::Arguments<'_>) -> std::io::Result<()> {
    use std::io::Write;
    std::io::stdout().lock().write_fmt(text)
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.downcast_ref::<std::io::Error>()
        .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Generate(a) => simulate::generate(a),
        Command::Estimate(a) => analysis::estimate(a),
        Command::Resources(a) => analysis::resources(a),
        Command::Roofline(a) => analysis::roofline(a),
        Command::Dse(a) => analysis::dse(a),
        Command::Registers(a) => registers::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // The reader went away (e.g. `| head`); nothing left to report.
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error::exit_code(&e))
        }
    }
}
