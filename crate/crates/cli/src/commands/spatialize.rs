//! `mcsep spatialize`: generate a corpus of room-simulated mixtures.

use std::path::Path;

use mcsep_core::spatial::corpus::{generate_corpus, CorpusConfig, SyntheticSpeech, WavFolder};
use mcsep_core::Result;

use crate::config::Settings;
use crate::run::Run;

pub fn cmd_spatialize(settings: &Settings, out_dir: &Path) -> Result<()> {
    let mut run = Run::new("spatialize");
    match generate(settings, out_dir, &mut run) {
        Ok(count) => {
            run.finish(settings, &out_dir.join("run.json"))?;
            println!("wrote {count} samples to {}", out_dir.display());
            Ok(())
        }
        Err(e) => {
            run.discard();
            Err(e)
        }
    }
}

fn generate(settings: &Settings, out_dir: &Path, run: &mut Run) -> Result<usize> {
    let cfg = CorpusConfig {
        count: settings.count,
        mics: settings.m,
        speakers: settings.k,
        reverberant: settings.reverberant()?,
        duration_seconds: settings.duration_seconds,
        sample_rate: settings.sample_rate,
        master_seed: settings.seed,
    };
    run.ensure_dir(out_dir)?;
    let rows = match &settings.wav_dir {
        Some(dir) => {
            run.input(dir.clone());
            generate_corpus(&cfg, &WavFolder::open(dir)?, out_dir)?
        }
        None => generate_corpus(&cfg, &SyntheticSpeech::train_pool(settings.pool), out_dir)?,
    };
    for row in &rows {
        run.output(out_dir.join(&row.mixture));
        for r in &row.references {
            run.output(out_dir.join(r));
        }
    }
    run.output(out_dir.join("manifest.tsv"));
    Ok(rows.len())
}
