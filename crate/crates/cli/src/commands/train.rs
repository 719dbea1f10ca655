//! `mcsep train`: fit a separator on a spatialized corpus, optionally warm
//! starting from a narrower checkpoint (channel-sequential transfer).

use std::path::{Path, PathBuf};

use mcsep_core::io::{load_checkpoint, save_checkpoint};
use mcsep_core::model::{ModelConfig, ParameterSet};
use mcsep_core::train::cstl::{cstl_expand, NewSliceInit};
use mcsep_core::train::{history_csv, train, Sample};
use mcsep_core::{Error, Result};

use mcsep_core::metrics::EvalSample;

use crate::commands::{load_corpus, take_mics};
use crate::config::Settings;
use crate::run::Run;

pub struct TrainArgs<'a> {
    pub corpus: &'a Path,
    pub valid_corpus: Option<&'a Path>,
    pub init_from: Option<&'a Path>,
    pub out: &'a Path,
}

pub fn cmd_train(settings: &Settings, args: &TrainArgs) -> Result<()> {
    let mut run = Run::new("train");
    match fit(settings, args, &mut run) {
        Ok(summary) => {
            let manifest = args.out.with_extension("run.json");
            run.finish(settings, &manifest)?;
            println!("{summary}");
            Ok(())
        }
        Err(e) => {
            run.discard();
            Err(e)
        }
    }
}

/// Deterministic fallback split when no validation manifest is given: every
/// tenth utterance (and at least one) is held out.
fn holdout_split(samples: Vec<Sample<f64>>) -> Result<(Vec<Sample<f64>>, Vec<Sample<f64>>)> {
    if samples.len() < 2 {
        return Err(Error::invalid(
            "training without --valid-corpus needs at least 2 samples to hold one out",
        ));
    }
    let mut train_set = Vec::new();
    let mut valid_set = Vec::new();
    let last = samples.len() - 1;
    for (i, s) in samples.into_iter().enumerate() {
        if i % 10 == 9 || (i == last && valid_set.is_empty()) {
            valid_set.push(s);
        } else {
            train_set.push(s);
        }
    }
    Ok((train_set, valid_set))
}

fn to_training(rows: Vec<EvalSample>, cfg: &ModelConfig) -> Result<Vec<Sample<f64>>> {
    rows.into_iter()
        .map(|s| {
            if s.references.len() != cfg.k {
                return Err(Error::invalid(format!(
                    "{}: {} reference(s) but the model separates K={}",
                    s.id,
                    s.references.len(),
                    cfg.k
                )));
            }
            Ok(Sample {
                mixture: take_mics(&s.mixture, cfg.m, &s.id)?,
                references: s.references,
            })
        })
        .collect()
}

/// Initial parameters: fresh, an exact warm start, or a one-hop CSTL
/// expansion of a narrower checkpoint.
fn initial_params(
    settings: &Settings,
    cfg: &ModelConfig,
    init_from: Option<&Path>,
    run: &mut Run,
) -> Result<ParameterSet<f64>> {
    let Some(path) = init_from else {
        return ParameterSet::init(cfg, settings.seed);
    };
    run.input(path);
    let (src_cfg, src_params) = load_checkpoint::<f64>(path)?;
    if src_cfg == *cfg {
        return Ok(src_params);
    }
    if cfg.m > src_cfg.m + 1 {
        return Err(Error::invalid(format!(
            "--init-from adds one microphone per hop: expand M={} \u{2192} {} first, then continue to M={}",
            src_cfg.m,
            src_cfg.m + 1,
            cfg.m
        )));
    }
    cstl_expand(&src_params, &src_cfg, cfg, NewSliceInit::Zero)
}

fn fit(settings: &Settings, args: &TrainArgs, run: &mut Run) -> Result<String> {
    let cfg = settings.model_config()?;
    run.input(args.corpus);
    let (train_set, valid_set) = match args.valid_corpus {
        Some(valid) => {
            run.input(valid);
            (
                to_training(load_corpus(args.corpus)?, &cfg)?,
                to_training(load_corpus(valid)?, &cfg)?,
            )
        }
        None => holdout_split(to_training(load_corpus(args.corpus)?, &cfg)?)?,
    };
    let initial = initial_params(settings, &cfg, args.init_from, run)?;
    let outcome = train(&cfg, initial, &train_set, &valid_set, &settings.train_config(), |e| {
        println!("epoch {:>3}  train {:>9.4}  valid {:>9.4}", e.epoch, e.train_loss, e.valid_loss);
    })?;

    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        run.ensure_dir(dir)?;
    }
    save_checkpoint(args.out, &cfg, &outcome.best_params)?;
    run.output(args.out);
    let history = history_path(args.out);
    run.write_file(&history, history_csv(&outcome.history))?;
    Ok(format!(
        "best epoch {} (valid loss {:.4}{}); checkpoint {}, history {}",
        outcome.best_epoch,
        outcome.best_valid_loss,
        if outcome.stopped_early { ", stopped early" } else { "" },
        args.out.display(),
        history.display()
    ))
}

fn history_path(out: &Path) -> PathBuf {
    out.with_extension("history.csv")
}
