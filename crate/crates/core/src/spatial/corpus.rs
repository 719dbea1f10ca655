//! Corpus generation: dry utterances spatialized into on-disk multichannel
//! mixtures plus a manifest.
//!
//! Every sample is synthesized from a child seed derived from (master seed,
//! sample index) alone, so regeneration is byte-identical, a sample's content
//! does not depend on the corpus size, and samples could be produced in any
//! order or in parallel without changing the output.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::manifest::{write_manifest, ManifestRow};
use crate::io::wav::{read_wav, write_wav};
use crate::spatial::geometry::sample_geometry;
use crate::spatial::ism::simulate_rir;
use crate::spatial::mixer::{mix, MixtureSample, SNR_MAX_DB, SNR_MIN_DB};

/// The sample-index state of a splitmix64 stream seeded at `master`: cheap,
/// well-mixed, and independent of every other index.
pub fn child_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic supply of mono dry utterances at the corpus sampling rate.
///
/// A provider owns one split's speaker pool; keeping train/test pools
/// disjoint is what makes the splits speaker-disjoint.
pub trait SourceProvider {
    /// Speaker identities this provider may draw from.
    fn speakers(&self) -> &[u32];

    /// Dry utterance for `speaker`, fully determined by (speaker, seed).
    fn utterance(&self, speaker: u32, seed: u64, samples: usize) -> Result<Vec<f64>>;
}

/// Speech-like synthetic sources: Gaussian noise shaped by two per-speaker
/// resonances (fixed formants per identity) under a syllable-rate amplitude
/// envelope that dips toward silence between bursts.
pub struct SyntheticSpeech {
    speakers: Vec<u32>,
}

const TEST_POOL_BASE: u32 = 10_000;
const DRY_RMS: f64 = 0.15;

impl SyntheticSpeech {
    pub fn with_speakers(speakers: Vec<u32>) -> Self {
        SyntheticSpeech { speakers }
    }

    /// Training identities 0..n.
    pub fn train_pool(n: usize) -> Self {
        Self::with_speakers((0..n as u32).collect())
    }

    /// Held-out identities, disjoint from every [`SyntheticSpeech::train_pool`].
    pub fn test_pool(n: usize) -> Self {
        Self::with_speakers((0..n as u32).map(|i| TEST_POOL_BASE + i).collect())
    }

    /// Formant centers in Hz, a stable function of the identity. Public so
    /// pools can be curated by voice similarity (e.g. spectrally close
    /// speakers to stress spatial cues).
    pub fn formants(speaker: u32) -> (f64, f64) {
        let h = child_seed(0xF0F0, u64::from(speaker));
        let f1 = 300.0 + (h % 512) as f64;
        let f2 = 1000.0 + ((h >> 16) % 1400) as f64;
        (f1, f2)
    }
}

/// RBJ band-pass biquad (constant peak gain) applied in place of a formant
/// resonance.
fn bandpass(x: &[f64], fs: f64, f0: f64, bandwidth_hz: f64) -> Vec<f64> {
    let w0 = 2.0 * std::f64::consts::PI * f0 / fs;
    let q = f0 / bandwidth_hz;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let (b0, b1, b2) = (alpha / a0, 0.0, -alpha / a0);
    let (a1, a2) = (-2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
    let mut out = Vec::with_capacity(x.len());
    let (mut z1, mut z2) = (0.0, 0.0);
    for &v in x {
        let y = b0 * v + z1;
        z1 = b1 * v - a1 * y + z2;
        z2 = b2 * v - a2 * y;
        out.push(y);
    }
    out
}

impl SourceProvider for SyntheticSpeech {
    fn speakers(&self) -> &[u32] {
        &self.speakers
    }

    fn utterance(&self, speaker: u32, seed: u64, samples: usize) -> Result<Vec<f64>> {
        if samples == 0 {
            return Err(Error::invalid("utterance length must be positive"));
        }
        let fs = f64::from(crate::io::wav::SAMPLE_RATE);
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed ^ 0x5EED_5EED, u64::from(speaker)));
        let noise: Vec<f64> = (0..samples)
            .map(|_| {
                // Box-Muller; the pair's second half is discarded for simplicity.
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                (-2.0 * u1.ln()).sqrt() * u2.cos()
            })
            .collect();
        let (f1, f2) = Self::formants(speaker);
        let voiced = bandpass(&noise, fs, f1, 120.0)
            .iter()
            .zip(bandpass(&noise, fs, f2, 180.0))
            .map(|(&a, b)| a + 0.7 * b)
            .collect::<Vec<f64>>();
        let syllable_hz = rng.gen_range(2.0..4.5);
        let flutter_hz = rng.gen_range(5.0..8.0);
        let phi1 = rng.gen_range(0.0..std::f64::consts::TAU);
        let phi2 = rng.gen_range(0.0..std::f64::consts::TAU);
        let mut out: Vec<f64> = voiced
            .iter()
            .enumerate()
            .map(|(t, &v)| {
                let ts = t as f64 / fs;
                let burst = 0.5 + 0.5 * (std::f64::consts::TAU * syllable_hz * ts + phi1).sin();
                let flutter = 0.5 + 0.5 * (std::f64::consts::TAU * flutter_hz * ts + phi2).sin();
                v * (0.1 + 0.9 * burst * flutter)
            })
            .collect();
        let rms = (out.iter().map(|v| v * v).sum::<f64>() / out.len() as f64).sqrt();
        if rms <= 0.0 {
            return Err(Error::invalid("synthetic utterance collapsed to silence"));
        }
        for v in &mut out {
            *v *= DRY_RMS / rms;
        }
        Ok(out)
    }
}

/// Dry sources from a directory of mono PCM16 WAVs: each file is one speaker,
/// utterances are seeded crops (files shorter than the request are tiled).
pub struct WavFolder {
    speakers: Vec<u32>,
    files: Vec<PathBuf>,
}

impl WavFolder {
    /// Scan `dir` for `.wav` files, sorted by name for determinism.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        files.sort();
        if files.len() < 2 {
            return Err(Error::invalid(format!(
                "{}: need at least 2 WAV files for two-speaker mixing, found {}",
                dir.display(),
                files.len()
            )));
        }
        let speakers = (0..files.len() as u32).collect();
        Ok(WavFolder { speakers, files })
    }
}

impl SourceProvider for WavFolder {
    fn speakers(&self) -> &[u32] {
        &self.speakers
    }

    fn utterance(&self, speaker: u32, seed: u64, samples: usize) -> Result<Vec<f64>> {
        let path = self
            .files
            .get(speaker as usize)
            .ok_or_else(|| Error::invalid(format!("unknown speaker id {speaker}")))?;
        let (_, channels) = read_wav(path)?;
        if channels.len() != 1 {
            return Err(Error::invalid(format!(
                "{}: dry sources must be mono, got {} channels",
                path.display(),
                channels.len()
            )));
        }
        let data = &channels[0];
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, u64::from(speaker)));
        let start = rng.gen_range(0..data.len());
        Ok((0..samples).map(|t| data[(start + t) % data.len()]).collect())
    }
}

/// What to generate: sizes, acoustic condition, and the master seed.
#[derive(Debug, Clone)]
pub struct CorpusConfig {
    pub count: usize,
    pub mics: usize,
    pub speakers: usize,
    pub reverberant: bool,
    pub duration_seconds: f64,
    pub sample_rate: u32,
    pub master_seed: u64,
}

impl CorpusConfig {
    pub fn new(count: usize, mics: usize, reverberant: bool, master_seed: u64) -> Self {
        CorpusConfig {
            count,
            mics,
            speakers: 2,
            reverberant,
            duration_seconds: 4.0,
            sample_rate: crate::io::wav::SAMPLE_RATE,
            master_seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("corpus count must be positive"));
        }
        if self.mics == 0 {
            return Err(Error::invalid("corpus needs at least one microphone"));
        }
        if self.speakers != 2 {
            return Err(Error::invalid(format!(
                "mixing is defined for exactly 2 speakers, got {}",
                self.speakers
            )));
        }
        if !(self.duration_seconds > 0.0) || self.sample_rate == 0 {
            return Err(Error::invalid("corpus duration and sample rate must be positive"));
        }
        Ok(())
    }

    fn samples_per_utterance(&self) -> usize {
        (self.duration_seconds * f64::from(self.sample_rate)).round() as usize
    }
}

/// Synthesize one sample from its child seed alone.
pub fn generate_sample(
    cfg: &CorpusConfig,
    provider: &dyn SourceProvider,
    seed: u64,
) -> Result<MixtureSample> {
    let pool = provider.speakers();
    if pool.len() < 2 {
        return Err(Error::invalid(format!(
            "source pool has {} speakers, need at least 2",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = sample_geometry(&mut rng, cfg.mics, cfg.speakers, cfg.reverberant)?;
    let rirs = simulate_rir(&scene, cfg.sample_rate as usize)?;
    let first = rng.gen_range(0..pool.len());
    let mut second = rng.gen_range(0..pool.len() - 1);
    if second >= first {
        second += 1;
    }
    let n = cfg.samples_per_utterance();
    let dry = vec![
        provider.utterance(pool[first], rng.gen(), n)?,
        provider.utterance(pool[second], rng.gen(), n)?,
    ];
    let snr_db = rng.gen_range(SNR_MIN_DB..SNR_MAX_DB);
    let out = mix(&dry, &scene, &rirs, snr_db)?;
    // Headroom guard for PCM16: if any channel would clip, scale the dry
    // sources down and mix again. Re-mixing (rather than rescaling outputs)
    // keeps the mixture exactly equal to the sum of convolved images, and a
    // uniform dry gain leaves the SNR and every scale-invariant metric alone.
    let peak = out
        .mixture
        .iter()
        .chain(&out.references)
        .flat_map(|c| c.iter())
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if peak <= 0.99 {
        return Ok(out);
    }
    let gain = 0.99 / peak;
    let quiet: Vec<Vec<f64>> = out
        .dry
        .iter()
        .map(|d| d.iter().map(|v| v * gain).collect())
        .collect();
    mix(&quiet, &scene, &rirs, snr_db)
}

/// Generate `cfg.count` samples under `out_dir` (`mix/`, `refs/`,
/// `manifest.tsv`) and return the manifest rows. Paths in the rows are
/// relative to `out_dir`.
pub fn generate_corpus(
    cfg: &CorpusConfig,
    provider: &dyn SourceProvider,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<ManifestRow>> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    let mix_dir = out_dir.join("mix");
    let ref_dir = out_dir.join("refs");
    std::fs::create_dir_all(&mix_dir).map_err(|e| Error::io(&mix_dir, e))?;
    std::fs::create_dir_all(&ref_dir).map_err(|e| Error::io(&ref_dir, e))?;
    let mut rows = Vec::with_capacity(cfg.count);
    for index in 0..cfg.count {
        let seed = child_seed(cfg.master_seed, index as u64);
        let sample = generate_sample(cfg, provider, seed)?;
        let mixture_rel = PathBuf::from(format!("mix/{index:06}.wav"));
        write_wav(out_dir.join(&mixture_rel), cfg.sample_rate, &sample.mixture)?;
        let mut references_rel = Vec::with_capacity(sample.references.len());
        for (k, image) in sample.references.iter().enumerate() {
            let rel = PathBuf::from(format!("refs/{index:06}_k{k}.wav"));
            write_wav(out_dir.join(&rel), cfg.sample_rate, std::slice::from_ref(image))?;
            references_rel.push(rel);
        }
        rows.push(ManifestRow {
            mixture: mixture_rel,
            references: references_rel,
            snr_db: sample.snr_db,
            t60_s: sample.t60,
            angle_difference_deg: sample.angle_difference_deg,
            seed,
        });
    }
    write_manifest(out_dir.join("manifest.tsv"), &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walk_files(dir: &Path) -> Vec<PathBuf> {
        let mut out = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push(p);
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn child_seeds_are_distinct_and_stable() {
        assert_eq!(child_seed(7, 3), child_seed(7, 3));
        assert_ne!(child_seed(7, 0), child_seed(7, 1));
        assert_ne!(child_seed(7, 0), child_seed(8, 0));
    }

    #[test]
    fn corpus_writes_one_row_per_sample_and_files_decode() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CorpusConfig::new(10, 2, false, 42);
        let provider = SyntheticSpeech::train_pool(8);
        let rows = generate_corpus(&cfg, &provider, dir.path()).unwrap();
        assert_eq!(rows.len(), 10);
        for row in &rows {
            let resolved = row.resolved_against(dir.path());
            let (fs, mixture) = read_wav(&resolved.mixture).unwrap();
            assert_eq!(fs, cfg.sample_rate);
            assert_eq!(mixture.len(), 2);
            assert_eq!(resolved.references.len(), 2);
            for r in &resolved.references {
                let (_, image) = read_wav(r).unwrap();
                assert_eq!(image.len(), 1);
                assert_eq!(image[0].len(), mixture[0].len());
            }
            assert!(row.t60_s == 0.0);
            assert!((SNR_MIN_DB..SNR_MAX_DB).contains(&row.snr_db));
        }
        let reread = crate::io::manifest::read_manifest(dir.path().join("manifest.tsv")).unwrap();
        assert_eq!(reread, rows);
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = CorpusConfig::new(3, 2, true, 1234);
        let provider = SyntheticSpeech::train_pool(5);
        generate_corpus(&cfg, &provider, a.path()).unwrap();
        generate_corpus(&cfg, &provider, b.path()).unwrap();
        let fa = walk_files(a.path());
        let fb = walk_files(b.path());
        assert_eq!(fa.len(), fb.len());
        assert!(fa.len() >= 3 * 3 + 1);
        for (pa, pb) in fa.iter().zip(&fb) {
            assert_eq!(pa.strip_prefix(a.path()).unwrap(), pb.strip_prefix(b.path()).unwrap());
            assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap(), "{pa:?}");
        }
    }

    #[test]
    fn sample_content_does_not_depend_on_corpus_size() {
        let small = tempfile::tempdir().unwrap();
        let large = tempfile::tempdir().unwrap();
        let provider = SyntheticSpeech::train_pool(5);
        generate_corpus(&CorpusConfig::new(2, 1, false, 9), &provider, small.path()).unwrap();
        generate_corpus(&CorpusConfig::new(4, 1, false, 9), &provider, large.path()).unwrap();
        for rel in ["mix/000000.wav", "mix/000001.wav", "refs/000001_k1.wav"] {
            assert_eq!(
                std::fs::read(small.path().join(rel)).unwrap(),
                std::fs::read(large.path().join(rel)).unwrap(),
                "{rel}"
            );
        }
    }

    #[test]
    fn train_and_test_pools_are_disjoint() {
        let train = SyntheticSpeech::train_pool(200);
        let test = SyntheticSpeech::test_pool(50);
        let train_ids: std::collections::HashSet<u32> = train.speakers().iter().copied().collect();
        assert!(test.speakers().iter().all(|id| !train_ids.contains(id)));
        assert_eq!(train.speakers().len(), 200);
        assert_eq!(test.speakers().len(), 50);
    }

    #[test]
    fn synthetic_utterances_are_deterministic_and_speaker_dependent() {
        let p = SyntheticSpeech::train_pool(4);
        let a = p.utterance(1, 99, 4000).unwrap();
        let b = p.utterance(1, 99, 4000).unwrap();
        let c = p.utterance(2, 99, 4000).unwrap();
        let d = p.utterance(1, 100, 4000).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn synthetic_speech_is_bandlimited_and_modulated() {
        let p = SyntheticSpeech::train_pool(4);
        let x = p.utterance(0, 7, 32_000).unwrap();
        let fs = 8000.0;
        // Goertzel-style band powers.
        let band_power = |lo: f64, hi: f64| -> f64 {
            let n = x.len();
            let mut total = 0.0;
            let mut f = lo;
            while f < hi {
                let w = std::f64::consts::TAU * f / fs;
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &v) in x.iter().enumerate() {
                    re += v * (w * t as f64).cos();
                    im += v * (w * t as f64).sin();
                }
                total += (re * re + im * im) / (n as f64 * n as f64);
                f += 50.0;
            }
            total
        };
        let speech_band = band_power(250.0, 2600.0);
        let top_band = band_power(3300.0, 3950.0);
        assert!(
            speech_band > 10.0 * top_band,
            "speech {speech_band:.3e} vs top {top_band:.3e}"
        );
        // Syllabic modulation: 100 ms window RMS must swing by > 3x.
        let win = 800;
        let rms: Vec<f64> = x
            .chunks(win)
            .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64).sqrt())
            .collect();
        let hi = rms.iter().cloned().fold(0.0, f64::max);
        let lo = rms.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(hi > 3.0 * lo, "envelope swing {hi:.4} / {lo:.4}");
        let total_rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
        assert!((total_rms - DRY_RMS).abs() < 1e-9);
    }

    #[test]
    fn hot_sources_are_scaled_back_into_pcm_range() {
        struct Loud;
        impl SourceProvider for Loud {
            fn speakers(&self) -> &[u32] {
                &[0, 1]
            }
            fn utterance(&self, speaker: u32, _seed: u64, samples: usize) -> Result<Vec<f64>> {
                let f = if speaker == 0 { 0.03 } else { 0.05 };
                Ok((0..samples).map(|t| 40.0 * (f * t as f64).sin()).collect())
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let cfg = CorpusConfig::new(1, 2, false, 5);
        let rows = generate_corpus(&cfg, &Loud, dir.path()).unwrap();
        let (_, mixture) = read_wav(dir.path().join(&rows[0].mixture)).unwrap();
        let peak = mixture.iter().flatten().fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!(peak <= 0.9901, "peak {peak}");
        assert!(peak > 0.5, "guard should only trim, not crush");
    }

    #[test]
    fn wav_folder_provider_tiles_and_crops_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let long: Vec<f64> = (0..12_000).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let short: Vec<f64> = (0..3_000).map(|_| rng.gen_range(-0.5..0.5)).collect();
        write_wav(dir.path().join("a_long.wav"), 8000, &[long]).unwrap();
        write_wav(dir.path().join("b_short.wav"), 8000, &[short.clone()]).unwrap();
        let folder = WavFolder::open(dir.path()).unwrap();
        assert_eq!(folder.speakers(), &[0, 1]);
        let u1 = folder.utterance(1, 11, 8000).unwrap();
        assert_eq!(u1.len(), 8000);
        assert_eq!(u1, folder.utterance(1, 11, 8000).unwrap());
        // Tiling wraps the short file: some 3000-sample period must repeat.
        assert_eq!(u1[..8000 - 3000], u1[3000..]);
        let out = tempfile::tempdir().unwrap();
        let rows =
            generate_corpus(&CorpusConfig::new(2, 1, false, 77), &folder, out.path()).unwrap();
        assert_eq!(rows.len(), 2);
    }

    #[test]
    fn degenerate_configs_are_rejected() {
        let p = SyntheticSpeech::train_pool(4);
        let dir = tempfile::tempdir().unwrap();
        assert!(generate_corpus(&CorpusConfig::new(0, 2, false, 1), &p, dir.path()).is_err());
        assert!(generate_corpus(&CorpusConfig::new(1, 0, false, 1), &p, dir.path()).is_err());
        let one = SyntheticSpeech::train_pool(1);
        assert!(generate_corpus(&CorpusConfig::new(1, 1, false, 1), &one, dir.path()).is_err());
    }
}
