//! Functional simulation of the accelerator datapath.
//!
//! Every operation is generic over an [`Arithmetic`] backend, so the same
//! code produces fixed-point results and the double-precision reference.

pub mod arith;
pub mod layers;
pub mod ops;
pub mod schedule;
pub mod tensor;
pub mod weights;

use thiserror::Error;

pub use arith::{Arithmetic, FixedArith, RealArith};
pub use layers::{decoder_layer, encoder_layer, model_forward, ModelOutput, Trace};
pub use schedule::{LayerSchedules, Tile, TileSchedule};
pub use tensor::Tensor;
pub use weights::{LayerNormParams, LayerWeights, ModelWeights};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DatapathError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("indivisible tiling: {0}")]
    Indivisible(String),
    #[error(
        "model needs {needed_enc} encoder and {needed_dec} decoder layers, \
         weights provide {have_enc} and {have_dec}"
    )]
    MissingLayerWeights {
        needed_enc: usize,
        needed_dec: usize,
        have_enc: usize,
        have_dec: usize,
    },
}
