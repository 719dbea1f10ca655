//! WAV audio files: RIFF containers with 16-bit little-endian integer PCM,
//! channels interleaved per frame.
//!
//! Float scaling convention: on write, samples are clamped to [-1, 1] and
//! quantized as `round(x * 32767)`; on read, integers are divided by 32767.
//! With this symmetric scale, re-encoding a decoded file is byte-identical
//! (every i16 survives the divide/multiply round trip). The only exception
//! is the PCM floor -32768, which this writer never emits: external files
//! containing it decode slightly below -1 and saturate to -32767 on rewrite.

use std::path::Path;

use crate::error::{Error, Result};

/// Corpus-wide sampling rate in Hz.
pub const SAMPLE_RATE: u32 = 8_000;

const SCALE: f64 = 32_767.0;

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::format(format!("{}: {other}", path.display())),
    }
}

/// Quantize one sample to PCM16 under the documented clamp-and-scale rule.
pub fn quantize(x: f64) -> i16 {
    (x.clamp(-1.0, 1.0) * SCALE).round() as i16
}

/// Inverse of [`quantize`] up to the quantization step of 1/32767.
pub fn dequantize(v: i16) -> f64 {
    f64::from(v) / SCALE
}

/// Write `channels` (equal-length, non-empty) to `path` as interleaved PCM16.
pub fn write_wav(path: impl AsRef<Path>, sample_rate: u32, channels: &[Vec<f64>]) -> Result<()> {
    let path = path.as_ref();
    if channels.is_empty() {
        return Err(Error::invalid("write_wav requires at least one channel"));
    }
    if channels.len() > usize::from(u16::MAX) {
        return Err(Error::invalid(format!("too many channels for WAV: {}", channels.len())));
    }
    let len = channels[0].len();
    if len == 0 {
        return Err(Error::invalid("write_wav requires non-empty channels"));
    }
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::invalid("write_wav requires equal-length channels"));
    }
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for t in 0..len {
        for channel in channels {
            writer.write_sample(quantize(channel[t])).map_err(|e| map_hound(path, e))?;
        }
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

/// Read a PCM16 WAV back into per-channel float vectors.
pub fn read_wav(path: impl AsRef<Path>) -> Result<(u32, Vec<Vec<f64>>)> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::format(format!(
            "{}: expected 16-bit integer PCM, got {}-bit {:?}",
            path.display(),
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    let m = usize::from(spec.channels);
    if m == 0 {
        return Err(Error::format(format!("{}: zero channels", path.display())));
    }
    let mut channels = vec![Vec::new(); m];
    for (i, sample) in reader.samples::<i16>().enumerate() {
        let v = sample.map_err(|e| map_hound(path, e))?;
        channels[i % m].push(dequantize(v));
    }
    let len = channels[0].len();
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::format(format!(
            "{}: sample count not divisible by channel count",
            path.display()
        )));
    }
    Ok((spec.sample_rate, channels))
}
