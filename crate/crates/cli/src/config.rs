//! Layered run configuration: defaults, then an optional TOML file, then
//! command-line flags, highest last. Unknown file keys are rejected by name
//! so a typo cannot silently fall back to a default.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use mcsep_core::model::{ModelConfig, Variant};
use mcsep_core::spatial::geometry::{T60_MAX, T60_MIN};
use mcsep_core::train::TrainConfig;
use mcsep_core::{Error, Result};

/// Every recognized file key; all optional so a file only has to state what
/// it changes. Model keys mirror the checkpoint header, training keys the
/// optimizer, corpus keys the spatialization protocol.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    // model
    pub variant: Option<String>,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub l: Option<usize>,
    pub n: Option<usize>,
    pub b: Option<usize>,
    pub h: Option<usize>,
    pub p: Option<usize>,
    pub x: Option<usize>,
    pub r: Option<usize>,
    // training
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub max_epochs: Option<usize>,
    pub segment_seconds: Option<f64>,
    pub seed: Option<u64>,
    pub zero_mean: Option<bool>,
    pub clamp_db: Option<f64>,
    // corpus
    pub count: Option<usize>,
    pub duration_seconds: Option<f64>,
    pub sample_rate: Option<u32>,
    pub t60_min: Option<f64>,
    pub t60_max: Option<f64>,
    pub wav_dir: Option<String>,
    pub pool: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved settings shared by the subcommands; serialized verbatim
/// into each run manifest.
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub variant: Variant,
    pub m: usize,
    pub k: usize,
    pub l: usize,
    pub n: usize,
    pub b: usize,
    pub h: usize,
    pub p: usize,
    pub x: usize,
    pub r: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub segment_seconds: f64,
    pub seed: u64,
    pub zero_mean: bool,
    pub clamp_db: f64,
    pub count: usize,
    pub duration_seconds: f64,
    pub sample_rate: u32,
    pub t60_min: f64,
    pub t60_max: f64,
    pub wav_dir: Option<String>,
    pub pool: usize,
}

/// Flag-level overrides; `None` defers to the file, the file to the default.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub variant: Option<Variant>,
    pub mics: Option<usize>,
    pub speakers: Option<usize>,
    pub seed: Option<u64>,
    pub zero_mean: Option<bool>,
    pub count: Option<usize>,
}

impl Settings {
    pub fn resolve(file: &FileConfig, flags: &Overrides) -> Result<Settings> {
        let desk = ModelConfig::desk_scale(Variant::Single, 1);
        let train = TrainConfig::default();
        let variant = match (&flags.variant, &file.variant) {
            (Some(v), _) => *v,
            (None, Some(s)) => s.parse()?,
            (None, None) => Variant::Single,
        };
        let m = flags.mics.or(file.m).unwrap_or(if variant == Variant::Single { 1 } else { 2 });
        let settings = Settings {
            variant,
            m,
            k: flags.speakers.or(file.k).unwrap_or(desk.k),
            l: file.l.unwrap_or(desk.l),
            n: file.n.unwrap_or(desk.n),
            b: file.b.unwrap_or(desk.b),
            h: file.h.unwrap_or(desk.h),
            p: file.p.unwrap_or(desk.p),
            x: file.x.unwrap_or(desk.x),
            r: file.r.unwrap_or(desk.r),
            lr: file.lr.unwrap_or(train.learning_rate),
            batch_size: file.batch_size.unwrap_or(train.batch_size),
            patience: file.patience.unwrap_or(train.patience_epochs),
            max_epochs: file.max_epochs.unwrap_or(train.max_epochs),
            segment_seconds: file.segment_seconds.unwrap_or(train.segment_seconds),
            seed: flags.seed.or(file.seed).unwrap_or(train.seed),
            zero_mean: flags.zero_mean.or(file.zero_mean).unwrap_or(train.zero_mean),
            clamp_db: file.clamp_db.unwrap_or(train.clamp_db),
            count: flags.count.or(file.count).unwrap_or(10),
            duration_seconds: file.duration_seconds.unwrap_or(4.0),
            sample_rate: file.sample_rate.unwrap_or(mcsep_core::io::SAMPLE_RATE),
            t60_min: file.t60_min.unwrap_or(T60_MIN),
            t60_max: file.t60_max.unwrap_or(T60_MAX),
            wav_dir: file.wav_dir.clone(),
            pool: file.pool.unwrap_or(32),
        };
        Ok(settings)
    }

    /// Validated model architecture; only the commands that instantiate a
    /// model call this, so e.g. `spatialize --mics 3` never trips the
    /// single-variant M=1 rule.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            variant: self.variant,
            m: self.m,
            k: self.k,
            l: self.l,
            n: self.n,
            b: self.b,
            h: self.h,
            p: self.p,
            x: self.x,
            r: self.r,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience_epochs: self.patience,
            segment_seconds: self.segment_seconds,
            sample_rate: self.sample_rate as usize,
            seed: self.seed,
            zero_mean: self.zero_mean,
            clamp_db: self.clamp_db,
            ..TrainConfig::default()
        }
    }

    /// Whether the corpus is reverberant, after validating the declared T60
    /// range. The protocol draws T60 from {0} ∪ [0.2, 0.6] s, so the range
    /// must be exactly (0, 0) for anechoic or the full interval; narrower or
    /// shifted ranges are rejected rather than silently widened.
    pub fn reverberant(&self) -> Result<bool> {
        if self.t60_min == 0.0 && self.t60_max == 0.0 {
            return Ok(false);
        }
        if self.t60_min == T60_MIN && self.t60_max == T60_MAX {
            return Ok(true);
        }
        Err(Error::Config(format!(
            "t60_min/t60_max [{}, {}] unsupported: use (0, 0) for anechoic or ({T60_MIN}, {T60_MAX})",
            self.t60_min, self.t60_max
        )))
    }
}

pub fn load_settings(config: Option<&Path>, flags: &Overrides) -> Result<Settings> {
    let file = match config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    Settings::resolve(&file, flags)
}
