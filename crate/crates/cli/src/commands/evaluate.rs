//! `mcsep evaluate`: score one or more checkpoints (and optionally the IBM
//! oracle) on a corpus, with per-utterance CSVs and an angle-bucket summary.

use std::path::{Path, PathBuf};

use mcsep_core::io::load_checkpoint;
use mcsep_core::metrics::{
    compare_systems, evaluate_samples, ibm_separate, Comparison, EvalSample, MetricsReport,
};
use mcsep_core::model::separate;
use mcsep_core::{Error, Result};

use crate::commands::{load_corpus, take_mics};
use crate::config::Settings;
use crate::run::Run;

pub struct EvaluateArgs<'a> {
    pub checkpoints: &'a [PathBuf],
    pub manifest: &'a Path,
    pub report_dir: &'a Path,
    pub ibm: bool,
    pub buckets: bool,
}

pub fn cmd_evaluate(settings: &Settings, args: &EvaluateArgs) -> Result<()> {
    let mut run = Run::new("evaluate");
    match score(settings, args, &mut run) {
        Ok(comparison) => {
            run.finish(settings, &args.report_dir.join("run.json"))?;
            print!("{}", render(&comparison, args.buckets));
            Ok(())
        }
        Err(e) => {
            run.discard();
            Err(e)
        }
    }
}

/// System name for a checkpoint: file stem, qualified by index on collision.
fn system_name(path: &Path, index: usize, taken: &[String]) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("system{index}"));
    if taken.iter().any(|t| *t == stem) {
        format!("{stem}#{index}")
    } else {
        stem
    }
}

fn score(settings: &Settings, args: &EvaluateArgs, run: &mut Run) -> Result<Comparison> {
    if args.checkpoints.is_empty() && !args.ibm {
        return Err(Error::invalid("evaluate needs at least one --checkpoint or --ibm"));
    }
    run.input(args.manifest);
    let samples = load_corpus(args.manifest)?;

    let mut reports: Vec<MetricsReport> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for (i, path) in args.checkpoints.iter().enumerate() {
        run.input(path);
        let (cfg, params) = load_checkpoint::<f64>(path)?;
        let name = system_name(path, i, &names);
        let report = evaluate_samples(
            name.clone(),
            |s: &EvalSample| {
                let mixture = take_mics(&s.mixture, cfg.m, &s.id)?;
                separate(&mixture, &params, &cfg)
            },
            &samples,
            settings.zero_mean,
        )?;
        names.push(name);
        reports.push(report);
    }
    if args.ibm {
        reports.push(evaluate_samples(
            "ibm-oracle",
            |s: &EvalSample| ibm_separate(&s.mixture[0], &s.references),
            &samples,
            settings.zero_mean,
        )?);
    }
    let comparison = compare_systems(reports)?;

    run.ensure_dir(args.report_dir)?;
    for report in &comparison.systems {
        let path = args.report_dir.join(format!("{}.records.csv", report.system));
        run.write_file(&path, report.records_csv())?;
    }
    run.write_file(&args.report_dir.join("buckets.csv"), comparison.csv())?;
    Ok(comparison)
}

/// Stdout rendering: global means always, the 12-bucket table on request.
fn render(comparison: &Comparison, buckets: bool) -> String {
    if buckets {
        return comparison.text_table();
    }
    let mut out = String::from("system                      utterances   mean SI-SNRi (dB)\n");
    for report in &comparison.systems {
        out.push_str(&format!(
            "{:<28}{:>10}{:>20.2}\n",
            report.system,
            report.records.len(),
            report.global_mean_db
        ));
    }
    out
}
