//! Exit-code classification.
//!
//! 0 success, 1 internal error, 2 input or shape error, 3 capacity or
//! feasibility error.

use std::fmt;

use tnn_accel::config::{ConfigError, Violation};
use tnn_accel::datapath::DatapathError;
use tnn_accel::dse::DseError;
use tnn_accel::engine::EngineError;
use tnn_accel::fixedpoint::FormatError;
use tnn_accel::manifest::ManifestError;
use tnn_accel::perfmodel::PerfError;
use tnn_accel::resources::ResourceError;

pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_CAPACITY: u8 = 3;

/// Marks an error as caused by user input.
#[derive(Debug)]
pub struct InputError(anyhow::Error);

impl InputError {
    pub fn wrap(e: anyhow::Error) -> anyhow::Error {
        anyhow::Error::new(InputError(e))
    }

    pub fn msg(s: impl Into<String>) -> anyhow::Error {
        Self::wrap(anyhow::anyhow!(s.into()))
    }
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for InputError {}

/// Marks an error as a capacity or feasibility failure.
#[derive(Debug)]
pub struct CapacityError(pub String);

impl fmt::Display for CapacityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CapacityError {}

fn config_code(e: &ConfigError) -> u8 {
    match e {
        ConfigError::ValueExceedsCapacity { .. } => EXIT_CAPACITY,
        ConfigError::Invalid(report)
            if report
                .violations
                .iter()
                .any(|v| matches!(v, Violation::CapacityExceeded { .. })) =>
        {
            EXIT_CAPACITY
        }
        _ => EXIT_INPUT,
    }
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<InputError>()
            || cause.is::<ManifestError>()
            || cause.is::<DatapathError>()
            || cause.is::<FormatError>()
            || cause.is::<ResourceError>()
            || cause.is::<std::io::Error>()
            || cause.is::<serde_json::Error>()
        {
            return EXIT_INPUT;
        }
        if cause.is::<CapacityError>() {
            return EXIT_CAPACITY;
        }
        if let Some(e) = cause.downcast_ref::<ConfigError>() {
            return config_code(e);
        }
        if let Some(e) = cause.downcast_ref::<EngineError>() {
            return match e {
                EngineError::Config(c) => config_code(c),
                EngineError::Datapath(_) | EngineError::Perf(_) => EXIT_INPUT,
            };
        }
        if let Some(e) = cause.downcast_ref::<DseError>() {
            return match e {
                DseError::NoFeasiblePoint => EXIT_CAPACITY,
                _ => EXIT_INPUT,
            };
        }
        if let Some(e) = cause.downcast_ref::<PerfError>() {
            return match e {
                PerfError::Invalid(report)
                    if report
                        .violations
                        .iter()
                        .any(|v| matches!(v, Violation::CapacityExceeded { .. })) =>
                {
                    EXIT_CAPACITY
                }
                _ => EXIT_INPUT,
            };
        }
    }
    EXIT_INTERNAL
}
