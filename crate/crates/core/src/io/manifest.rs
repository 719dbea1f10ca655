//! Corpus manifests: one tab-separated row per sample.
//!
//! Columns: mixture path, reference paths (comma-joined, one per speaker),
//! SNR in dB, T60 in seconds, angle difference in degrees, child seed.
//! Floats are printed with Rust's shortest round-trip formatting, so parsing
//! a manifest back yields bit-identical values and regeneration is
//! byte-stable. Paths are stored as written (normally relative to the
//! manifest's directory); [`ManifestRow::resolved_against`] rebases them.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// One spatialized sample: where its audio lives and the metadata needed for
/// bucketed evaluation and exact regeneration.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub mixture: PathBuf,
    pub references: Vec<PathBuf>,
    pub snr_db: f64,
    pub t60_s: f64,
    pub angle_difference_deg: f64,
    pub seed: u64,
}

impl ManifestRow {
    /// Rebase relative paths onto `base` (the manifest's directory);
    /// absolute paths pass through.
    pub fn resolved_against(&self, base: &Path) -> ManifestRow {
        let fix = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        ManifestRow {
            mixture: fix(&self.mixture),
            references: self.references.iter().map(fix).collect(),
            ..self.clone()
        }
    }
}

fn path_field(p: &Path) -> Result<&str> {
    let s = p
        .to_str()
        .ok_or_else(|| Error::invalid(format!("path {} is not UTF-8", p.display())))?;
    if s.contains('\t') || s.contains(',') || s.contains('\n') {
        return Err(Error::invalid(format!("path {s:?} contains a manifest delimiter")));
    }
    if s.is_empty() {
        return Err(Error::invalid("empty path in manifest row"));
    }
    Ok(s)
}

/// Render rows as tab-separated text, one line per sample.
pub fn manifest_to_string(rows: &[ManifestRow]) -> Result<String> {
    let mut out = String::new();
    for row in rows {
        if row.references.is_empty() {
            return Err(Error::invalid("manifest row needs at least one reference path"));
        }
        let refs: Vec<&str> =
            row.references.iter().map(|p| path_field(p)).collect::<Result<_>>()?;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            path_field(&row.mixture)?,
            refs.join(","),
            row.snr_db,
            row.t60_s,
            row.angle_difference_deg,
            row.seed
        ));
    }
    Ok(out)
}

/// Parse tab-separated manifest text; blank lines are ignored.
pub fn manifest_from_str(text: &str) -> Result<Vec<ManifestRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(Error::format(format!(
                "manifest line {}: expected 6 tab-separated fields, got {}",
                i + 1,
                fields.len()
            )));
        }
        let num = |what: &str, s: &str| -> Result<f64> {
            s.parse().map_err(|_| {
                Error::format(format!("manifest line {}: bad {what} {s:?}", i + 1))
            })
        };
        let references: Vec<PathBuf> =
            fields[1].split(',').filter(|s| !s.is_empty()).map(PathBuf::from).collect();
        if fields[0].is_empty() || references.is_empty() {
            return Err(Error::format(format!("manifest line {}: missing paths", i + 1)));
        }
        rows.push(ManifestRow {
            mixture: PathBuf::from(fields[0]),
            references,
            snr_db: num("SNR", fields[2])?,
            t60_s: num("T60", fields[3])?,
            angle_difference_deg: num("angle difference", fields[4])?,
            seed: fields[5].parse().map_err(|_| {
                Error::format(format!("manifest line {}: bad seed {:?}", i + 1, fields[5]))
            })?,
        });
    }
    Ok(rows)
}

/// Write a manifest file.
pub fn write_manifest(path: impl AsRef<Path>, rows: &[ManifestRow]) -> Result<()> {
    let path = path.as_ref();
    let text = manifest_to_string(rows)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read a manifest file.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    manifest_from_str(&text).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}
