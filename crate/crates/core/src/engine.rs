//! A single accelerator instance whose topology is set through registers.
//!
//! The tile configuration and number format are fixed when the instance is
//! built; everything else is read from the register file on each run, so a
//! new model only takes register writes.

use thiserror::Error;

use crate::config::{ConfigError, ModelConfig, RegisterFile, TileConfig};
use crate::datapath::{
    model_forward, DatapathError, FixedArith, LayerSchedules, ModelOutput, ModelWeights, RealArith,
    Tensor,
};
use crate::fixedpoint::FixedFormat;
use crate::perfmodel::{self, CompositionMode, LatencyBreakdown, PerfError, PipelineConstants};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Datapath(#[from] DatapathError),
    #[error(transparent)]
    Perf(#[from] PerfError),
}

#[derive(Debug, Clone)]
pub struct Accelerator {
    registers: RegisterFile,
    format: FixedFormat,
}

impl Accelerator {
    pub fn new(tiles: TileConfig, format: FixedFormat) -> Self {
        Accelerator {
            registers: RegisterFile::new(tiles),
            format,
        }
    }

    pub fn tiles(&self) -> &TileConfig {
        self.registers.tiles()
    }

    pub fn format(&self) -> FixedFormat {
        self.format
    }

    pub fn registers(&self) -> &RegisterFile {
        &self.registers
    }

    pub fn write_register(&mut self, name: &str, value: u64) -> Result<(), ConfigError> {
        self.registers.write(name, value)
    }

    /// Writes all seven registers from `cfg`.
    pub fn configure(&mut self, cfg: &ModelConfig) -> Result<(), ConfigError> {
        self.registers.load(cfg)
    }

    /// The topology currently programmed.
    pub fn model_config(&self) -> Result<ModelConfig, ConfigError> {
        self.registers.model_config()
    }

    fn schedules(&self) -> Result<(ModelConfig, LayerSchedules), EngineError> {
        let cfg = self.model_config()?;
        let sched = LayerSchedules::new(&cfg, self.tiles())?;
        Ok((cfg, sched))
    }

    /// Forward pass on already-quantized operands.
    pub fn run_quantized(
        &self,
        weights: &ModelWeights<i32>,
        x: &Tensor<i32>,
        dec_input: Option<&Tensor<i32>>,
    ) -> Result<ModelOutput<i32>, EngineError> {
        let (cfg, sched) = self.schedules()?;
        let ar = FixedArith::new(self.format);
        Ok(model_forward(&ar, &cfg, &sched, weights, x, dec_input)?)
    }

    /// Quantizes weights and inputs, runs in fixed point, and returns the
    /// dequantized final output.
    pub fn run(
        &self,
        weights: &ModelWeights<f64>,
        x: &Tensor<f64>,
        dec_input: Option<&Tensor<f64>>,
    ) -> Result<Tensor<f64>, EngineError> {
        let fmt = self.format;
        let q = |v: f64| fmt.quantize_raw(v);
        let wq = weights.map(q);
        let xq = x.map(q);
        let dq = dec_input.map(|d| d.map(q));
        let out = self.run_quantized(&wq, &xq, dq.as_ref())?;
        Ok(out.last().map(|v| fmt.dequantize(v)))
    }

    /// Double-precision reference with the same schedules.
    pub fn run_reference(
        &self,
        weights: &ModelWeights<f64>,
        x: &Tensor<f64>,
        dec_input: Option<&Tensor<f64>>,
    ) -> Result<Tensor<f64>, EngineError> {
        let (cfg, sched) = self.schedules()?;
        let out = model_forward(&RealArith, &cfg, &sched, weights, x, dec_input)?;
        Ok(out.last().clone())
    }

    /// Analytical latency of the programmed topology.
    pub fn estimate(
        &self,
        k: &PipelineConstants,
        mode: CompositionMode,
        freq_mhz: f64,
    ) -> Result<LatencyBreakdown, EngineError> {
        let cfg = self.model_config()?;
        Ok(perfmodel::estimate(&cfg, self.tiles(), k, mode, freq_mhz)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reprogram_without_rebuilding() {
        let tiles = TileConfig::new(2, 2);
        let mut acc = Accelerator::new(tiles, FixedFormat::new(16, 10).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for cfg in [ModelConfig::new(4, 16, 2, 1, 0), ModelConfig::new(8, 32, 4, 1, 1)] {
            acc.configure(&cfg).unwrap();
            let w = ModelWeights::random(&mut rng, &cfg, 0.3);
            let x = Tensor::filled(cfg.seq_len, cfg.d_model, 0.25);
            let y = acc.run(&w, &x, None).unwrap();
            assert_eq!(y.shape(), (cfg.seq_len, cfg.d_model));
            let r = acc.run_reference(&w, &x, None).unwrap();
            assert!(y.max_abs_diff(&r) < 0.1);
        }
        assert!(matches!(
            acc.write_register("Embeddings", 4096),
            Err(ConfigError::ValueExceedsCapacity { .. })
        ));
    }

    #[test]
    fn unprogrammed_engine_refuses_to_run() {
        let acc = Accelerator::new(TileConfig::new(1, 1), FixedFormat::default());
        let cfg = ModelConfig::new(2, 4, 1, 1, 0);
        let w = ModelWeights::constant(&cfg, 0.0, 0.0);
        assert!(matches!(
            acc.run(&w, &Tensor::filled(2, 4, 0.0), None),
            Err(EngineError::Config(ConfigError::Invalid(_)))
        ));
    }
}
