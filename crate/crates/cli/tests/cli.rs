//! End-to-end runs of the `mcsep` binary: spatialize → train → separate →
//! evaluate on a miniature setup, plus the documented error paths.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mcsep(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcsep"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = mcsep(args, cwd);
    assert!(
        out.status.success(),
        "mcsep {args:?} failed:\n{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn fails(args: &[&str], cwd: &Path) -> String {
    let out = mcsep(args, cwd);
    assert!(!out.status.success(), "mcsep {args:?} unexpectedly succeeded");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Tiny-but-trainable config shared by the pipeline tests.
fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("cfg.toml");
    fs::write(
        &path,
        "l = 8\nn = 8\nb = 4\nh = 8\np = 3\nx = 2\nr = 1\n\
         lr = 1e-3\nbatch_size = 2\npatience = 2\nmax_epochs = 2\nsegment_seconds = 0.25\n\
         count = 4\nduration_seconds = 0.25\nt60_min = 0.0\nt60_max = 0.0\n",
    )
    .unwrap();
    path
}

fn walk_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn full_pipeline_spatialize_train_separate_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = write_config(dir);
    let cfg = cfg.to_str().unwrap();

    // spatialize: corpus + manifest + run.json, rerun byte-identical
    ok(&["spatialize", "--config", cfg, "--seed", "7", "--out", "corpus"], dir);
    let corpus = dir.join("corpus");
    assert!(corpus.join("manifest.tsv").exists());
    assert!(corpus.join("run.json").exists());
    let first = walk_files(&corpus);
    assert_eq!(first.iter().filter(|(n, _)| n.ends_with(".wav")).count(), 4 * 3);
    fs::remove_dir_all(&corpus).unwrap();
    ok(&["spatialize", "--config", cfg, "--seed", "7", "--out", "corpus"], dir);
    let second = walk_files(&corpus);
    let wavs = |files: &[(String, Vec<u8>)]| -> Vec<(String, Vec<u8>)> {
        files.iter().filter(|(n, _)| !n.ends_with("run.json")).cloned().collect()
    };
    assert_eq!(wavs(&first), wavs(&second), "regeneration must be byte-identical");

    // train: checkpoint + history + run manifest
    ok(
        &["train", "--config", cfg, "--seed", "3", "--corpus", "corpus/manifest.tsv",
          "--out", "model.ckpt"],
        dir,
    );
    assert!(dir.join("model.ckpt").exists());
    let history = fs::read_to_string(dir.join("model.history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,valid_loss\n"));
    assert_eq!(history.lines().count(), 1 + 2, "two epochs of history");
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("model.run.json")).unwrap()).unwrap();
    assert_eq!(run["command"], "train");
    assert_eq!(run["seed"], 3);

    // separate: two estimates at the mixture's length
    let mix = first.iter().find(|(n, _)| n.starts_with("mix")).unwrap().0.clone();
    let mix_path = format!("corpus/{mix}");
    ok(&["separate", "--checkpoint", "model.ckpt", "--input", &mix_path, "--out", "est"], dir);
    let est: Vec<_> = walk_files(&dir.join("est"))
        .into_iter()
        .filter(|(n, _)| n.ends_with(".wav"))
        .collect();
    assert_eq!(est.len(), 2);
    assert_eq!(est[0].1.len(), fs::read(dir.join(&mix_path)).unwrap().len());

    // evaluate: records per system, bucket csv, table on stdout
    let stdout = ok(
        &["evaluate", "--checkpoint", "model.ckpt", "--manifest", "corpus/manifest.tsv",
          "--report", "report", "--ibm"],
        dir,
    );
    assert!(stdout.contains("model"), "{stdout}");
    assert!(stdout.contains("ibm-oracle"), "{stdout}");
    let report = dir.join("report");
    assert!(report.join("model.records.csv").exists());
    assert!(report.join("ibm-oracle.records.csv").exists());
    let buckets = fs::read_to_string(report.join("buckets.csv")).unwrap();
    assert!(buckets.lines().count() >= 13, "12 buckets + header + global");
    let records = fs::read_to_string(report.join("model.records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 4);
    assert!(records.starts_with("utterance_id,angle_diff_deg,si_snri_db,permutation\n"));

    // bucket table mode prints the header, the global row and 12 angle rows
    let table = ok(
        &["evaluate", "--checkpoint", "model.ckpt", "--manifest", "corpus/manifest.tsv",
          "--report", "report2", "--buckets"],
        dir,
    );
    assert!(table.contains("global mean"), "{table}");
    assert!(table.contains("[165,180]"), "{table}");
    assert_eq!(table.lines().count(), 1 + 1 + 12, "{table}");
}

#[test]
fn cstl_hop_and_gap_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = write_config(dir);
    let cfg = cfg.to_str().unwrap();

    ok(&["spatialize", "--config", cfg, "--seed", "1", "--mics", "3", "--out", "corpus"], dir);
    ok(
        &["train", "--config", cfg, "--seed", "2", "--corpus", "corpus/manifest.tsv",
          "--out", "1ch.ckpt"],
        dir,
    );

    // one-hop expansion: single 1ch → ef 2ch
    ok(
        &["train", "--config", cfg, "--seed", "2", "--variant", "ef", "--mics", "2",
          "--corpus", "corpus/manifest.tsv", "--init-from", "1ch.ckpt", "--out", "2ch.ckpt"],
        dir,
    );
    assert!(dir.join("2ch.ckpt").exists());

    // a two-channel jump must name the sequential path
    let err = fails(
        &["train", "--config", cfg, "--seed", "2", "--variant", "ef", "--mics", "3",
          "--corpus", "corpus/manifest.tsv", "--init-from", "1ch.ckpt", "--out", "3ch.ckpt"],
        dir,
    );
    assert!(err.contains("one microphone per hop"), "{err}");
    assert!(!dir.join("3ch.ckpt").exists(), "partial output must be removed");
}

#[test]
fn separate_rejects_channel_mismatch_naming_expected_m() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = write_config(dir);
    let cfg = cfg.to_str().unwrap();

    ok(&["spatialize", "--config", cfg, "--seed", "9", "--mics", "2", "--out", "c2"], dir);
    ok(
        &["train", "--config", cfg, "--seed", "4", "--variant", "ef", "--mics", "2",
          "--corpus", "c2/manifest.tsv", "--out", "ef.ckpt"],
        dir,
    );
    // reference files are mono; the EF checkpoint wants 2 channels
    let refs = walk_files(&dir.join("c2"));
    let mono = refs.iter().find(|(n, _)| n.starts_with("refs")).unwrap().0.clone();
    let err = fails(
        &["separate", "--checkpoint", "ef.ckpt", "--input", &format!("c2/{mono}"), "--out", "e"],
        dir,
    );
    assert!(err.contains("M=2"), "{err}");
    assert!(!dir.join("e").join("run.json").exists());
}

#[test]
fn config_errors_name_the_offending_key() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let bad = dir.join("bad.toml");
    fs::write(&bad, "learning_rate = 0.1\n").unwrap();
    let err = fails(
        &["spatialize", "--config", bad.to_str().unwrap(), "--out", "x"],
        dir,
    );
    assert!(err.contains("learning_rate"), "{err}");

    let range = dir.join("range.toml");
    fs::write(&range, "t60_min = 0.7\nt60_max = 0.9\n").unwrap();
    let err = fails(
        &["spatialize", "--config", range.to_str().unwrap(), "--out", "x"],
        dir,
    );
    assert!(err.contains("t60"), "{err}");
    assert!(err.contains("0.7"), "{err}");
}

#[test]
fn missing_inputs_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let err = fails(&["train", "--corpus", "nope.tsv", "--out", "m.ckpt"], dir);
    assert!(err.contains("nope.tsv"), "{err}");
    let err = fails(
        &["evaluate", "--manifest", "nope.tsv", "--report", "r"],
        dir,
    );
    assert!(!err.is_empty());
    let err = fails(&["separate", "--checkpoint", "no.ckpt", "--input", "no.wav", "--out", "o"], dir);
    assert!(err.contains("no.ckpt"), "{err}");
}

#[test]
fn fixed_seed_reproduces_loss_history() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = write_config(dir);
    let cfg = cfg.to_str().unwrap();
    ok(&["spatialize", "--config", cfg, "--seed", "5", "--out", "corpus"], dir);
    ok(
        &["train", "--config", cfg, "--seed", "6", "--corpus", "corpus/manifest.tsv",
          "--out", "a.ckpt"],
        dir,
    );
    ok(
        &["train", "--config", cfg, "--seed", "6", "--corpus", "corpus/manifest.tsv",
          "--out", "b.ckpt"],
        dir,
    );
    assert_eq!(
        fs::read_to_string(dir.join("a.history.csv")).unwrap(),
        fs::read_to_string(dir.join("b.history.csv")).unwrap()
    );
    assert_eq!(fs::read(dir.join("a.ckpt")).unwrap(), fs::read(dir.join("b.ckpt")).unwrap());
}
