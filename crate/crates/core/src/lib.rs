//! Simulation and design-space exploration for a runtime-configurable FPGA
//! transformer accelerator.
//!
//! - [`config`]: model topology, tiling, platform presets and the runtime
//!   register file.
//! - [`fixedpoint`]: signed fixed-point formats with round-to-nearest-even.
//! - [`datapath`]: bit-accurate functional simulation of every module.
//! - [`perfmodel`]: analytical latency model and its loop-nest oracle.
//! - [`resources`]: DSP/BRAM estimates, memory bandwidth and roofline.
//! - [`dse`]: tile-size exploration under platform budgets.
//! - [`engine`]: one accelerator instance reprogrammed through registers.

pub mod config;
pub mod datapath;
pub mod dse;
pub mod engine;
pub mod fixedpoint;
pub mod manifest;
pub mod perfmodel;
pub mod resources;

pub use config::{ModelConfig, PlatformConfig, RegisterFile, TileConfig};
pub use fixedpoint::FixedFormat;
