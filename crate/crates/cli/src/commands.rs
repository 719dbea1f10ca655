//! Subcommand implementations. Shared here: loading a corpus manifest into
//! memory with path resolution and per-file channel/rate validation.

pub mod evaluate;
pub mod separate;
pub mod spatialize;
pub mod train;

use std::path::Path;

use mcsep_core::io::{read_manifest, read_wav, ManifestRow, SAMPLE_RATE};
use mcsep_core::metrics::EvalSample;
use mcsep_core::{Error, Result};

/// Reads a corpus manifest and every WAV it references. Relative paths
/// resolve against the manifest's directory; all audio must be 8 kHz.
pub fn load_corpus(manifest_path: &Path) -> Result<Vec<EvalSample>> {
    let rows = read_manifest(manifest_path)?;
    if rows.is_empty() {
        return Err(Error::invalid(format!(
            "{}: manifest lists no samples",
            manifest_path.display()
        )));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    rows.iter().map(|row| load_row(&row.resolved_against(base))).collect()
}

fn load_row(row: &ManifestRow) -> Result<EvalSample> {
    let mixture = read_channels(&row.mixture, None)?;
    let mut references = Vec::with_capacity(row.references.len());
    for path in &row.references {
        let mut chans = read_channels(path, Some(1))?;
        references.push(chans.pop().unwrap());
    }
    let id = row
        .mixture
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| row.mixture.display().to_string());
    Ok(EvalSample { id, mixture, references, angle_difference_deg: row.angle_difference_deg })
}

fn read_channels(path: &Path, want: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let (rate, channels) = read_wav(path)?;
    if rate != SAMPLE_RATE {
        return Err(Error::invalid(format!(
            "{}: sample rate {rate} Hz, the pipeline runs at {SAMPLE_RATE} Hz",
            path.display()
        )));
    }
    if let Some(n) = want {
        if channels.len() != n {
            return Err(Error::invalid(format!(
                "{}: expected {n} channel(s), found {}",
                path.display(),
                channels.len()
            )));
        }
    }
    Ok(channels)
}

/// First `m` channels of a mixture, or an error naming the shortfall.
pub fn take_mics(mixture: &[Vec<f64>], m: usize, what: &str) -> Result<Vec<Vec<f64>>> {
    if mixture.len() < m {
        return Err(Error::invalid(format!(
            "{what} has {} channel(s) but the model expects M={m}",
            mixture.len()
        )));
    }
    Ok(mixture[..m].to_vec())
}
