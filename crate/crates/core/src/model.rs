//! Separator model: configuration, canonical parameter layout, forward pass.

pub mod config;
pub mod forward;
pub mod params;

pub use config::{ModelConfig, Variant};
pub use forward::{
    encode, forward_graph, mask_decode, separate, separate_ef, separate_lf, separate_single,
    ModelForward, GLN_EPS,
};
pub use params::{shape_table, ParameterSet};
