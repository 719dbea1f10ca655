//! `mcsep separate`: run a checkpoint over one mixture WAV and write the
//! estimated sources.

use std::path::Path;

use mcsep_core::io::{load_checkpoint, read_wav, write_wav, SAMPLE_RATE};
use mcsep_core::model::separate;
use mcsep_core::{Error, Result};

use crate::config::Settings;
use crate::run::Run;

pub fn cmd_separate(
    settings: &Settings,
    checkpoint: &Path,
    input: &Path,
    out_dir: &Path,
) -> Result<()> {
    let mut run = Run::new("separate");
    match infer(checkpoint, input, out_dir, &mut run) {
        Ok(k) => {
            run.finish(settings, &out_dir.join("run.json"))?;
            println!("wrote {k} estimated sources to {}", out_dir.display());
            Ok(())
        }
        Err(e) => {
            run.discard();
            Err(e)
        }
    }
}

fn infer(checkpoint: &Path, input: &Path, out_dir: &Path, run: &mut Run) -> Result<usize> {
    run.input(checkpoint);
    run.input(input);
    let (cfg, params) = load_checkpoint::<f64>(checkpoint)?;
    let (rate, mixture) = read_wav(input)?;
    if rate != SAMPLE_RATE {
        return Err(Error::invalid(format!(
            "{}: sample rate {rate} Hz, the model runs at {SAMPLE_RATE} Hz",
            input.display()
        )));
    }
    if mixture.len() != cfg.m {
        return Err(Error::invalid(format!(
            "{}: {} channel(s), but this checkpoint expects M={}",
            input.display(),
            mixture.len(),
            cfg.m
        )));
    }
    let estimates = separate(&mixture, &params, &cfg)?;
    run.ensure_dir(out_dir)?;
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mixture".into());
    for (k, est) in estimates.iter().enumerate() {
        let path = out_dir.join(format!("{stem}_est{k}.wav"));
        write_wav(&path, SAMPLE_RATE, std::slice::from_ref(est))?;
        run.output(path);
    }
    Ok(estimates.len())
}
