//! On-disk formats: WAV audio, parameter checkpoints, corpus manifests.

pub mod checkpoint;
pub mod manifest;
pub mod wav;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, MAGIC,
};
pub use manifest::{
    manifest_from_str, manifest_to_string, read_manifest, write_manifest, ManifestRow,
};
pub use wav::{read_wav, write_wav, SAMPLE_RATE};
