//! Linear-compressing skip-connection networks (LCSCNet) for single-image
//! super-resolution, built on a small dense-tensor and reverse-mode
//! differentiation core.

pub mod arch;
pub mod data;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod refarch;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{CheckpointError, Error, Result};
