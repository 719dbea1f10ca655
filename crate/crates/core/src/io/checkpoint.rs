//! Checkpoint files for trained parameter sets.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! bytes 0..6   magic "MCSEP1"
//! u32          config length, then that many bytes of TOML-encoded ModelConfig
//! u32          tensor count
//! per tensor   u32 name length + UTF-8 name
//!              u8  dtype code (1 = f32, the only defined code)
//!              u8  rank, then rank x u32 dimensions
//! payloads     for each tensor in manifest order, numel x 4 bytes of IEEE-754
//!              binary32
//! ```
//!
//! Tensors are stored in the model's canonical parameter order and validated
//! against the embedded config on load, so a checkpoint is always a coherent
//! (config, parameters) pair. Values are quantized to f32 regardless of the
//! in-memory element type.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ParameterSet};
use crate::tensor::Real;
use crate::tensor::Tensor;

/// File signature.
pub const MAGIC: &[u8; 6] = b"MCSEP1";

const DTYPE_F32: u8 = 1;

/// Serialize a config + parameter pair to the checkpoint byte format.
pub fn encode_checkpoint<T: Real>(cfg: &ModelConfig, params: &ParameterSet<T>) -> Result<Vec<u8>> {
    params.matches_config(cfg)?;
    let config_text = toml::to_string(cfg)
        .map_err(|e| Error::format(format!("config serialization failed: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    write_bytes(&mut out, config_text.as_bytes())?;
    out.extend_from_slice(&u32::try_from(params.len()).unwrap().to_le_bytes());
    for (name, tensor) in params.iter() {
        write_bytes(&mut out, name.as_bytes())?;
        out.push(DTYPE_F32);
        let rank = u8::try_from(tensor.ndim())
            .map_err(|_| Error::format(format!("tensor {name} has rank > 255")))?;
        out.push(rank);
        for &dim in tensor.shape() {
            let dim = u32::try_from(dim)
                .map_err(|_| Error::format(format!("tensor {name} dimension exceeds u32")))?;
            out.extend_from_slice(&dim.to_le_bytes());
        }
    }
    for (_, tensor) in params.iter() {
        for &v in tensor.data() {
            out.extend_from_slice(&(v.to_f64_() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Parse checkpoint bytes back into the config and its parameters.
pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<(ModelConfig, ParameterSet<T>)> {
    let mut r = Cursor { bytes, pos: 0 };
    let magic = r.take(MAGIC.len())?;
    if magic != MAGIC {
        return Err(Error::format(format!(
            "bad checkpoint magic {:02x?}, expected {:?}",
            magic,
            std::str::from_utf8(MAGIC).unwrap()
        )));
    }
    let config_text = std::str::from_utf8(r.take_prefixed()?)
        .map_err(|_| Error::format("checkpoint config block is not UTF-8"))?;
    let cfg: ModelConfig = toml::from_str(config_text)
        .map_err(|e| Error::format(format!("checkpoint config: {e}")))?;
    let count = r.u32()? as usize;
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let name = std::str::from_utf8(r.take_prefixed()?)
            .map_err(|_| Error::format("tensor name is not UTF-8"))?
            .to_string();
        let dtype = r.u8()?;
        if dtype != DTYPE_F32 {
            return Err(Error::format(format!("tensor {name}: unknown dtype code {dtype}")));
        }
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        manifest.push((name, shape));
    }
    let mut entries = Vec::with_capacity(count);
    for (name, shape) in manifest {
        let numel: usize = shape.iter().product();
        let payload = r.take(numel * 4)?;
        let data: Vec<T> = payload
            .chunks_exact(4)
            .map(|c| T::from_f64_(f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))))
            .collect();
        entries.push((name, Tensor::new(shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::format(format!(
            "checkpoint has {} trailing bytes after payloads",
            bytes.len() - r.pos
        )));
    }
    let params = ParameterSet::from_entries(entries)?;
    params.matches_config(&cfg)?;
    Ok((cfg, params))
}

/// [`encode_checkpoint`] straight to a file.
pub fn save_checkpoint<T: Real>(
    path: impl AsRef<Path>,
    cfg: &ModelConfig,
    params: &ParameterSet<T>,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(cfg, params)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// [`decode_checkpoint`] straight from a file.
pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<(ModelConfig, ParameterSet<T>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

fn write_bytes(out: &mut Vec<u8>, bytes: &[u8]) -> Result<()> {
    let len = u32::try_from(bytes.len())
        .map_err(|_| Error::format("length-prefixed block exceeds u32"))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(bytes);
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(format!(
                "checkpoint truncated: need {n} bytes at offset {}, have {}",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn take_prefixed(&mut self) -> Result<&'a [u8]> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{shape_table, Variant};

    fn sample_pair() -> (ModelConfig, ParameterSet<f32>) {
        let cfg = ModelConfig {
            variant: Variant::EarlyFusion,
            m: 2,
            k: 2,
            l: 8,
            n: 12,
            b: 6,
            h: 10,
            p: 3,
            x: 2,
            r: 1,
        };
        let params = ParameterSet::init(&cfg, 3).unwrap();
        (cfg, params)
    }

    #[test]
    fn round_trip_is_bit_exact_for_f32() {
        let (cfg, params) = sample_pair();
        let bytes = encode_checkpoint(&cfg, &params).unwrap();
        let (cfg2, params2) = decode_checkpoint::<f32>(&bytes).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(params.names(), params2.names());
        for (a, b) in params.tensors().iter().zip(params2.tensors()) {
            assert_eq!(a.shape(), b.shape());
            for (&x, &y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn f64_values_round_trip_through_the_f32_payload() {
        let cfg = ModelConfig {
            variant: Variant::Single,
            m: 1,
            k: 2,
            l: 4,
            n: 6,
            b: 4,
            h: 6,
            p: 3,
            x: 1,
            r: 1,
        };
        let params: ParameterSet<f64> = ParameterSet::init(&cfg, 9).unwrap();
        let bytes = encode_checkpoint(&cfg, &params).unwrap();
        let (_, loaded) = decode_checkpoint::<f64>(&bytes).unwrap();
        for (a, b) in params.tensors().iter().zip(loaded.tensors()) {
            for (&x, &y) in a.data().iter().zip(b.data()) {
                assert_eq!(f64::from(x as f32).to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn header_layout_matches_the_documented_format() {
        let (cfg, params) = sample_pair();
        let bytes = encode_checkpoint(&cfg, &params).unwrap();
        assert_eq!(&bytes[..6], MAGIC);
        let cfg_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let cfg_text = std::str::from_utf8(&bytes[10..10 + cfg_len]).unwrap();
        let embedded: ModelConfig = toml::from_str(cfg_text).unwrap();
        assert_eq!(embedded, cfg);
        let mut at = 10 + cfg_len;
        let count = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        at += 4;
        assert_eq!(count, shape_table(&cfg).len());
        let name_len = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        at += 4;
        let first_name = std::str::from_utf8(&bytes[at..at + name_len]).unwrap();
        assert_eq!(first_name, shape_table(&cfg)[0].0);
        assert_eq!(bytes[at + name_len], 1, "dtype code for f32");
    }

    #[test]
    fn payload_bytes_sit_in_manifest_order() {
        let (cfg, mut params) = sample_pair();
        let marker = 0.40625f32; // exactly representable
        params.tensors_mut()[0].data_mut()[0] = marker;
        let bytes = encode_checkpoint(&cfg, &params).unwrap();
        let total: usize = params.tensors().iter().map(|t| t.numel()).sum();
        let payload_start = bytes.len() - 4 * total;
        let first =
            f32::from_le_bytes(bytes[payload_start..payload_start + 4].try_into().unwrap());
        assert_eq!(first, marker);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let (cfg, params) = sample_pair();
        let mut bytes = encode_checkpoint(&cfg, &params).unwrap();
        bytes[0] = b'X';
        let err = decode_checkpoint::<f32>(&bytes).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let (cfg, params) = sample_pair();
        let bytes = encode_checkpoint(&cfg, &params).unwrap();
        let err = decode_checkpoint::<f32>(&bytes[..bytes.len() - 5]).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let (cfg, params) = sample_pair();
        let mut bytes = encode_checkpoint(&cfg, &params).unwrap();
        bytes.extend_from_slice(&[0, 1, 2]);
        let err = decode_checkpoint::<f32>(&bytes).unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");
    }

    #[test]
    fn tampered_shape_fails_config_validation() {
        let (cfg, params) = sample_pair();
        let bytes = encode_checkpoint(&cfg, &params).unwrap();
        // First dimension of the first tensor lives right after its name and
        // the dtype/rank bytes.
        let cfg_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let mut at = 10 + cfg_len + 4;
        let name_len = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        at += 4 + name_len + 2;
        let mut tampered = bytes.clone();
        let dim = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        tampered[at..at + 4].copy_from_slice(&(dim + 1).to_le_bytes());
        assert!(decode_checkpoint::<f32>(&tampered).is_err());
    }

    #[test]
    fn file_round_trip_via_save_and_load() {
        let (cfg, params) = sample_pair();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &cfg, &params).unwrap();
        let (cfg2, params2) = load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(params.tensors()[3].data(), params2.tensors()[3].data());
    }

    #[test]
    fn config_parameter_mismatch_is_rejected_on_encode() {
        let (cfg, params) = sample_pair();
        let other = ModelConfig { n: 16, ..cfg };
        assert!(encode_checkpoint(&other, &params).is_err());
    }
}
