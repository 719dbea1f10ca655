//! Multi-channel time-domain speech separation toolkit.
//!
//! The crate is layered bottom-up:
//! - [`tensor`], [`graph`], [`check`]: dense tensors, reverse-mode autodiff,
//!   and finite-difference gradient verification.
//! - [`signal`]: waveform segmentation and overlap-add.

pub mod check;
pub mod error;
pub mod graph;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod signal;
pub mod spatial;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use tensor::{Real, Tensor};
