//! Room spatialization: scene sampling, image-source impulse responses,
//! SNR-controlled mixing, and corpus generation.

pub mod corpus;
pub mod geometry;
pub mod ism;
pub mod mixer;

pub use corpus::{
    child_seed, generate_corpus, generate_sample, CorpusConfig, SourceProvider, SyntheticSpeech,
    WavFolder,
};
pub use geometry::{sample_geometry, Scene};
pub use ism::{sabine_absorption, schroeder_t60, simulate_rir, wall_reflectivity, Rirs, SOUND_SPEED};
pub use mixer::{convolve, mix, MixtureSample};
