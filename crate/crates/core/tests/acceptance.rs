//! Acceptance checklist: one test per shipping criterion. Each test prints a
//! single `[criterion NN] PASS` line with its measured margin (run with
//! `cargo test --test acceptance -- --nocapture` to see them); a failed
//! criterion fails its test.

use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mcsep_core::check::{finite_diff_check, DEFAULT_EPSILON};
use mcsep_core::graph::{Graph, Var};
use mcsep_core::loss::{pit_loss, pit_loss_node, si_snr, si_snr_clamped};
use mcsep_core::metrics::{bucket_index, si_snri, BUCKET_COUNT};
use mcsep_core::model::{forward_graph, separate, ModelConfig, ParameterSet, Variant};
use mcsep_core::signal::{overlap_add, segment};
use mcsep_core::spatial::corpus::{child_seed, generate_sample, CorpusConfig, SyntheticSpeech};
use mcsep_core::spatial::geometry::sample_geometry;
use mcsep_core::spatial::ism::{schroeder_t60, simulate_rir};
use mcsep_core::spatial::mixer::{convolve, mix, MixtureSample};
use mcsep_core::tensor::Tensor;
use mcsep_core::train::{train, Sample, TrainConfig};
use mcsep_core::Result;

fn pass(criterion: u32, detail: impl AsRef<str>) {
    println!("[criterion {criterion:02}] PASS — {}", detail.as_ref());
}

fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

// ---------------------------------------------------------------- criterion 1

/// Scalar projection with fixed random weights so per-coordinate gradient
/// errors cannot cancel in a plain sum.
fn project(g: &Graph<f64>, v: Var, shape: Vec<usize>, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = g.constant(Tensor::randn(shape, 1.0, &mut rng));
    Ok(g.sum(g.mul(v, w)?))
}

#[test]
fn criterion_01_gradient_correctness() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let rows = 3;
    let cols = 7;
    let x = Tensor::randn(vec![rows, cols], 1.0, &mut rng);
    let y = Tensor::randn(vec![rows, cols], 1.0, &mut rng);
    let pos = x.map(|v: f64| v.abs() + 0.5);
    // PReLU kinks break the central difference; keep probes off the kink.
    let off_kink = x.map(|v: f64| if v.abs() < 0.05 { v + 0.1 } else { v });
    let mat_b = Tensor::randn(vec![cols, 4], 1.0, &mut rng);
    let dense_w = Tensor::randn(vec![4, rows, 3], 0.7, &mut rng);
    let dense_b = Tensor::randn(vec![4], 0.2, &mut rng);
    let dw_w = Tensor::randn(vec![rows, 1, 3], 0.7, &mut rng);
    let dw_b = Tensor::randn(vec![rows], 0.2, &mut rng);
    let gamma = Tensor::randn(vec![rows], 0.4, &mut rng).map(|v: f64| v + 1.0);
    let beta = Tensor::randn(vec![rows], 0.4, &mut rng);
    let gamma4 = Tensor::randn(vec![4], 0.4, &mut rng).map(|v: f64| v + 1.0);
    let beta4 = Tensor::randn(vec![4], 0.4, &mut rng);
    let x4 = Tensor::randn(vec![4, cols], 1.2, &mut rng);
    let small = Tensor::randn(vec![2], 0.3, &mut rng);

    type Build = Box<dyn Fn(&Graph<f64>, &[Var]) -> Result<Var>>;
    let rc = vec![rows, cols];
    let sh = move || rc.clone();
    let cases: Vec<(&str, Build, Vec<Tensor<f64>>)> = vec![
        ("add", { let s = sh(); Box::new(move |g, v| project(g, g.add(v[0], v[1])?, s.clone(), 1)) }, vec![x.clone(), y.clone()]),
        ("sub", { let s = sh(); Box::new(move |g, v| project(g, g.sub(v[0], v[1])?, s.clone(), 2)) }, vec![x.clone(), y.clone()]),
        ("mul", { let s = sh(); Box::new(move |g, v| project(g, g.mul(v[0], v[1])?, s.clone(), 3)) }, vec![x.clone(), y.clone()]),
        ("div", { let s = sh(); Box::new(move |g, v| project(g, g.div(v[0], v[1])?, s.clone(), 4)) }, vec![x.clone(), pos.clone()]),
        ("affine", { let s = sh(); Box::new(move |g, v| project(g, g.scale(g.add_const(v[0], 0.7), -1.3), s.clone(), 5)) }, vec![x.clone()]),
        ("scalar-broadcast", { let s = sh(); Box::new(move |g, v| {
            let m = g.mean(v[0]);
            let centered = g.add_scalar_mul(v[0], m, -1.0)?;
            project(g, g.mul_scalar(centered, g.sum(v[1]))?, s.clone(), 6)
        }) }, vec![x.clone(), small.clone()]),
        ("ln", { let s = sh(); Box::new(move |g, v| project(g, g.ln(v[0]), s.clone(), 7)) }, vec![pos.clone()]),
        ("dot", Box::new(move |g, v| Ok(g.scale(g.dot(v[0], v[1])?, 0.37))), vec![x.clone(), y.clone()]),
        ("matmul", Box::new(move |g, v| project(g, g.matmul(v[0], v[1])?, vec![3, 4], 8)), vec![x.clone(), mat_b]),
        ("sigmoid", { let s = sh(); Box::new(move |g, v| project(g, g.sigmoid(g.scale(v[0], 1.7)), s.clone(), 9)) }, vec![x.clone()]),
        ("prelu", { let s = sh(); Box::new(move |g, v| project(g, g.prelu(v[0], v[1])?, s.clone(), 10)) }, vec![off_kink, Tensor::scalar(0.3)]),
        ("conv1d-dense", Box::new(move |g, v| project(g, g.conv1d(v[0], v[1], Some(v[2]), 2, 1)?, vec![4, 7], 11)), vec![x.clone(), dense_w, dense_b]),
        ("conv1d-depthwise", { let s = sh(); Box::new(move |g, v| project(g, g.conv1d(v[0], v[1], Some(v[2]), 4, 3)?, s.clone(), 12)) }, vec![x.clone(), dw_w, dw_b]),
        ("layer-norm", { let s = sh(); Box::new(move |g, v| project(g, g.global_layer_norm(v[0], v[1], v[2], 1e-6)?, s.clone(), 13)) }, vec![x.clone(), gamma, beta]),
        ("layer-norm-blocked", Box::new(move |g, v| project(g, g.block_global_layer_norm(v[0], v[1], v[2], 2, 1e-6)?, vec![4, 7], 14)), vec![x4, gamma4, beta4]),
        ("concat-slice", { let s = sh(); Box::new(move |g, v| {
            let cat = g.concat_rows(&[v[0], v[1]])?;
            let lo = g.slice_rows(cat, 0, 3)?;
            let hi = g.slice_rows(cat, 3, 3)?;
            project(g, g.mul(lo, hi)?, s.clone(), 15)
        }) }, vec![x.clone(), y.clone()]),
        ("overlap-add", Box::new(move |g, v| project(g, g.overlap_add(v[0], 1, 7 + 3 - 2)?, vec![8], 16)), vec![x.clone()]),
    ];
    let mut worst_op = 0.0f64;
    for (name, build, inputs) in cases {
        let err = finite_diff_check(&build, &inputs, DEFAULT_EPSILON).unwrap();
        assert!(err < 1e-5, "{name}: per-op max rel err {err:.3e}");
        worst_op = worst_op.max(err);
    }

    // End to end: pit loss through the tiny separator, every parameter probed.
    let cfg = ModelConfig {
        variant: Variant::Single,
        m: 1,
        k: 2,
        l: 4,
        n: 8,
        b: 4,
        h: 8,
        p: 3,
        x: 2,
        r: 1,
    };
    let params: ParameterSet<f64> = ParameterSet::init(&cfg, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mixture = vec![noise(&mut rng, 30)];
    // PIT's permutation argmin is a min() kink; near a tie the central
    // difference straddles two branches. Anchor each reference to the initial
    // estimate it should win so the active permutation is well separated and
    // the loss is smooth throughout the probe neighborhood.
    let references: Vec<Vec<f64>> = {
        let g = Graph::new();
        let fwd = forward_graph(&g, &params, &cfg, &mixture, false).unwrap();
        fwd.estimates
            .iter()
            .map(|&e| {
                g.value(e)
                    .data()
                    .iter()
                    .map(|&v| 0.9 * v + 0.1 * rng.gen_range(-1.0..1.0))
                    .collect()
            })
            .collect()
    };
    let loss_of = |p: &ParameterSet<f64>| -> f64 {
        let g = Graph::new();
        let fwd = forward_graph(&g, p, &cfg, &mixture, false).unwrap();
        let refs: Vec<Var> =
            references.iter().map(|r| g.constant(Tensor::from_slice(r))).collect();
        let (loss, _) = pit_loss_node(&g, &fwd.estimates, &refs, true).unwrap();
        g.item(loss)
    };
    let g = Graph::new();
    let fwd = forward_graph(&g, &params, &cfg, &mixture, true).unwrap();
    let refs: Vec<Var> = references.iter().map(|r| g.constant(Tensor::from_slice(r))).collect();
    let (loss, _) = pit_loss_node(&g, &fwd.estimates, &refs, true).unwrap();
    g.backward(loss).unwrap();
    // The final block's residual conv feeds a trunk no later block reads, so
    // it legitimately gets no gradient; the numeric probe must agree it is 0.
    let grads: Vec<Tensor<f64>> = fwd
        .param_vars
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            g.grad(v)
                .unwrap_or_else(|| Tensor::zeros(params.tensors()[i].shape().to_vec()))
        })
        .collect();
    let mut probe = params.clone();
    let mut worst_e2e = 0.0f64;
    // Smaller step than the per-op sweep: a PReLU kink inside the probe
    // interval contaminates the central difference, and the end-to-end path
    // crosses hundreds of kink sites.
    let eps = 1e-6;
    for ti in 0..params.len() {
        for ci in 0..params.tensors()[ti].numel() {
            let base = params.tensors()[ti].data()[ci];
            probe.tensors_mut()[ti].data_mut()[ci] = base + eps;
            let plus = loss_of(&probe);
            probe.tensors_mut()[ti].data_mut()[ci] = base - eps;
            let minus = loss_of(&probe);
            probe.tensors_mut()[ti].data_mut()[ci] = base;
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = grads[ti].data()[ci];
            let rel =
                (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(
                rel < 1e-4,
                "{} [{ci}]: analytic {analytic:.6e} vs numeric {numeric:.6e} (rel {rel:.3e})",
                params.names()[ti]
            );
            worst_e2e = worst_e2e.max(rel);
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "gradient checks took {elapsed:.1} s");
    pass(
        1,
        format!(
            "per-op max rel err {worst_op:.2e} (< 1e-5), end-to-end {worst_e2e:.2e} (< 1e-4) over {} parameters in {elapsed:.1} s",
            params.total_elements()
        ),
    );
}

// ---------------------------------------------------------------- criterion 2

#[test]
fn criterion_02_segmentation_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(2020);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let seg_len = rng.gen_range(1..=64);
        let hop = rng.gen_range(1..=seg_len);
        let len = rng.gen_range(1..=3000);
        let x = noise(&mut rng, len);
        let back = overlap_add(&segment(&x, seg_len, hop).unwrap());
        assert!(back.len() >= len);
        let err = x
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            .max(back[len..].iter().map(|v| v.abs()).fold(0.0, f64::max));
        assert!(err < 1e-12, "L={seg_len} hop={hop} len={len}: err {err:.3e}");
        worst = worst.max(err);
    }
    pass(2, format!("overlap_add ∘ segment identity, 100 random cases, max |err| {worst:.2e} (< 1e-12)"));
}

// ---------------------------------------------------------------- criterion 3

fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let v = rest.remove(i);
            prefix.push(v);
            rec(prefix, rest, out);
            prefix.pop();
            rest.insert(i, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..k).collect(), &mut out);
    out
}

#[test]
fn criterion_03_pit_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut cases = 0;
    for k in 2..=4usize {
        for _ in 0..50 {
            let len = rng.gen_range(16..80);
            let ests: Vec<Vec<f64>> = (0..k).map(|_| noise(&mut rng, len)).collect();
            let refs: Vec<Vec<f64>> = (0..k).map(|_| noise(&mut rng, len)).collect();
            let (loss, perm) = pit_loss(&ests, &refs, true, 60.0).unwrap();
            // Oracle: explicit K!-enumeration, first-best on ties.
            let mut best: Option<(f64, Vec<usize>)> = None;
            for cand in permutations(k) {
                let mean = -cand
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| si_snr(&ests[i], &refs[j], true).unwrap())
                    .sum::<f64>()
                    / k as f64;
                match &best {
                    Some((b, _)) if mean >= *b => {}
                    _ => best = Some((mean, cand)),
                }
            }
            let (oracle_loss, oracle_perm) = best.unwrap();
            assert!((loss - oracle_loss).abs() < 1e-12, "k={k}: {loss} vs {oracle_loss}");
            assert_eq!(perm, oracle_perm, "k={k}");
            cases += 1;
        }
    }
    // Documented tie rule: on exact ties the lexicographically first
    // assignment wins, so identical estimate/reference pairs pick identity.
    let a = noise(&mut rng, 50);
    let (_, perm) = pit_loss(&[a.clone(), a.clone()], &[a.clone(), a], true, 60.0).unwrap();
    assert_eq!(perm, vec![0, 1]);
    pass(3, format!("pit_loss equals K!-enumeration on {cases} instances (K ∈ {{2,3,4}}), lexicographic tie rule verified"));
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_04_si_snr_invariances_and_worked_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut worst = 0.0f64;
    for _ in 0..30 {
        let len = rng.gen_range(20..200);
        let s = noise(&mut rng, len);
        let e = noise(&mut rng, len);
        let base = si_snr(&e, &s, true).unwrap();
        for c in [3.7, -0.41, 1e-3, -250.0] {
            let scaled: Vec<f64> = e.iter().map(|v| c * v).collect();
            let d = (si_snr(&scaled, &s, true).unwrap() - base).abs();
            assert!(d < 1e-9, "scale {c}: drift {d:.3e}");
            worst = worst.max(d);
        }
    }
    // Worked example: any nonzero rescaling of the reference itself saturates.
    for c in [2.0, -3.0, 0.5] {
        let est = [c, -c];
        assert_eq!(si_snr(&est, &[1.0, -1.0], false).unwrap(), 60.0);
    }
    // Worked example: orthogonal error of equal energy -> exactly 0 dB.
    let zero_db = si_snr(&[1.0, 1.0], &[1.0, 0.0], false).unwrap();
    assert!((zero_db - 0.0).abs() < 1e-4, "orthogonal case {zero_db}");
    // Worked example: half-amplitude error -> 10·log10(4) ≈ 6.0206 dB.
    let six_db = si_snr(&[1.0, 0.5], &[1.0, 0.0], false).unwrap();
    assert!((six_db - 6.0206).abs() < 1e-4, "quarter-energy case {six_db}");
    // Clamp case engages symmetrically at a configurable magnitude.
    assert_eq!(si_snr_clamped(&[1.0, -1.0], &[1.0, -1.0], false, 25.0).unwrap(), 25.0);
    pass(4, format!("scale/sign drift ≤ {worst:.2e} (< 1e-9); 60 dB clamp, 0 dB and 6.0206 dB examples reproduce to 4 decimals"));
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn criterion_05_single_channel_reduction() {
    let base = ModelConfig {
        variant: Variant::Single,
        m: 1,
        k: 2,
        l: 8,
        n: 16,
        b: 8,
        h: 16,
        p: 3,
        x: 2,
        r: 2,
    };
    let params: ParameterSet<f32> = ParameterSet::init(&base, 505).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst = 0.0f32;
    for _ in 0..10 {
        let len = rng.gen_range(64..300);
        let x: Vec<f32> = (0..len).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let mixture = vec![x];
        let single = separate(&mixture, &params, &base).unwrap();
        for variant in [Variant::EarlyFusion, Variant::LateFusion] {
            let cfg = ModelConfig { variant, ..base };
            let fused = separate(&mixture, &params, &cfg).unwrap();
            for (a, b) in single.iter().zip(&fused) {
                for (&p, &q) in a.iter().zip(b) {
                    worst = worst.max((p - q).abs());
                }
            }
        }
    }
    assert!(worst < 1e-6, "reduction mismatch {worst:.3e}");
    pass(5, format!("EF and LF at M=1 match the single-channel model on 10 inputs, max |Δ| {worst:.2e} (< 1e-6, f32)"));
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_06_cstl_functional_equivalence() {
    use mcsep_core::train::cstl::{cstl_expand, NewSliceInit};
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut worst = 0.0f32;
    for target_variant in [Variant::EarlyFusion, Variant::LateFusion] {
        let mut src_cfg = ModelConfig {
            variant: Variant::Single,
            m: 1,
            k: 2,
            l: 8,
            n: 12,
            b: 6,
            h: 12,
            p: 3,
            x: 2,
            r: 1,
        };
        let mut src: ParameterSet<f32> = ParameterSet::init(&src_cfg, 606).unwrap();
        for m in 2..=4usize {
            let dst_cfg = ModelConfig { variant: target_variant, m, ..src_cfg };
            let dst = cstl_expand(&src, &src_cfg, &dst_cfg, NewSliceInit::Zero).unwrap();
            let len = 120;
            let old: Vec<Vec<f32>> =
                (0..m - 1).map(|_| (0..len).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).collect();
            let fresh: Vec<f32> = (0..len).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            let mut widened = old.clone();
            widened.push(fresh);
            let before = separate(&old, &src, &src_cfg).unwrap();
            let after = separate(&widened, &dst, &dst_cfg).unwrap();
            for (a, b) in before.iter().zip(&after) {
                for (&p, &q) in a.iter().zip(b) {
                    worst = worst.max((p - q).abs());
                }
            }
            src = dst;
            src_cfg = dst_cfg;
        }
    }
    assert!(worst < 1e-6, "CSTL drift {worst:.3e}");
    pass(6, format!("zero-initialized expansion keeps outputs for EF and LF at M ∈ {{2,3,4}}, max |Δ| {worst:.2e} (< 1e-6, f32)"));
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_07_parameter_count_arithmetic() {
    let full = |variant, m| ModelConfig::full_scale(variant, m);
    let single = full(Variant::Single, 1).count_parameters();
    // The closed-form count must agree with the instantiated tensor table.
    let table: ParameterSet<f32> = ParameterSet::init(&full(Variant::Single, 1), 1).unwrap();
    assert_eq!(single, table.total_elements());
    assert_eq!(single, 5_050_546);

    let cfg = full(Variant::Single, 1);
    let ef_step = cfg.n * cfg.b + 2 * cfg.n;
    let lf_step = cfg.k * cfg.n * cfg.sc();
    assert_eq!(ef_step, 66_560);
    assert_eq!(lf_step, 131_072);

    let ef = |m: usize| {
        if m == 1 { single } else { full(Variant::EarlyFusion, m).count_parameters() }
    };
    let lf = |m: usize| {
        if m == 1 { single } else { full(Variant::LateFusion, m).count_parameters() }
    };
    for m in 2..=4 {
        assert_eq!(ef(m) - ef(m - 1), ef_step, "EF increment at M={m}");
        assert_eq!(lf(m) - lf(m - 1), lf_step, "LF increment at M={m}");
    }
    // Published totals: EF reported for M = 1..3, LF for M = 2..4.
    for (count, published) in [
        (ef(1), 5.05e6),
        (ef(2), 5.12e6),
        (ef(3), 5.18e6),
        (lf(2), 5.18e6),
        (lf(3), 5.31e6),
        (lf(4), 5.44e6),
    ] {
        let rel = (count as f64 - published).abs() / published;
        assert!(rel < 0.05, "count {count} vs published {published}: {rel:.3}");
    }
    pass(7, format!("single-channel total {single}; per-channel increments EF {ef_step} = N·B+2N, LF {lf_step} = K·N·Sc; totals within 5% of published"));
}

// ------------------------------------------------------------- criteria 8 & 9

/// The two training criteria each take minutes; running them concurrently
/// would distort the wall-clock budget criterion 8 asserts, so they share
/// this lock.
static TRAINING_SLOT: Mutex<()> = Mutex::new(());

fn in_memory_corpus(
    count: usize,
    mics: usize,
    duration_seconds: f64,
    master_seed: u64,
    pool: &SyntheticSpeech,
) -> Vec<MixtureSample> {
    let cfg = CorpusConfig {
        duration_seconds,
        ..CorpusConfig::new(count, mics, false, master_seed)
    };
    (0..count)
        .map(|i| generate_sample(&cfg, pool, child_seed(master_seed, i as u64)).unwrap())
        .collect()
}

fn training_view(samples: &[MixtureSample], mics: usize) -> Vec<Sample<f64>> {
    samples
        .iter()
        .map(|s| Sample {
            mixture: s.mixture[..mics].to_vec(),
            references: s.references.clone(),
        })
        .collect()
}

/// Mean SI-SNRi of a trained model over full-length samples.
fn model_si_snri(
    cfg: &ModelConfig,
    params: &ParameterSet<f64>,
    samples: &[MixtureSample],
) -> f64 {
    let mut sum = 0.0;
    for s in samples {
        let mixture = &s.mixture[..cfg.m];
        let estimates = separate(mixture, params, cfg).unwrap();
        let scored = si_snri(&mixture[0], &estimates, &s.references, true).unwrap();
        sum += scored.mean_db;
    }
    sum / samples.len() as f64
}

#[test]
fn criterion_08_overfit_sanity() {
    let _slot = TRAINING_SLOT.lock().unwrap();
    let started = Instant::now();
    let pool = SyntheticSpeech::train_pool(8);
    let corpus = in_memory_corpus(4, 1, 1.0, 808, &pool);
    let set = training_view(&corpus, 1);
    let model_cfg = ModelConfig::desk_scale(Variant::Single, 1);
    // Full-utterance training (no segment cropping): random crop offsets
    // re-jitter the data every epoch, which slows pure memorization.
    // Validating on the training set itself makes best-checkpoint selection
    // coincide with the metric under test.
    let train_cfg = TrainConfig {
        learning_rate: 4e-3,
        batch_size: 4,
        max_epochs: 1000,
        patience_epochs: 1000,
        segment_seconds: 0.0,
        sample_rate: 8000,
        seed: 8,
        max_steps: Some(1000),
        ..TrainConfig::default()
    };
    let initial: ParameterSet<f64> = ParameterSet::init(&model_cfg, 88).unwrap();
    let outcome = train(&model_cfg, initial, &set, &set, &train_cfg, |_| {}).unwrap();
    assert!(outcome.adam_steps <= 2000);
    let improvement = model_si_snri(&model_cfg, &outcome.best_params, &corpus);
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        improvement >= 15.0,
        "training SI-SNRi {improvement:.2} dB after {} steps",
        outcome.adam_steps
    );
    assert!(elapsed < 1800.0, "overfit run took {elapsed:.0} s");
    pass(8, format!(
        "single-channel model overfits 4 anechoic mixtures to {improvement:.1} dB SI-SNRi in {} steps, {elapsed:.0} s (< 30 min)",
        outcome.adam_steps
    ));
}

/// Voices whose formant pair falls inside one narrow band. Two such
/// speakers are spectrally confusable, so separating them hinges on the
/// spatial cue — exactly the signal the fusion comparison measures. On
/// spectrally diverse voices a single-channel model rides the spectral cue
/// to the same scores within this budget and the comparison says nothing.
fn similar_voices(n: usize) -> Vec<u32> {
    (0u32..)
        .filter(|&id| {
            let (f1, f2) = SyntheticSpeech::formants(id);
            (470.0..530.0).contains(&f1) && (1500.0..1700.0).contains(&f2)
        })
        .take(n)
        .collect()
}

#[test]
fn criterion_09_fusion_learning_signal() {
    let _slot = TRAINING_SLOT.lock().unwrap();
    let started = Instant::now();
    // Disjoint train/validation voices: scores measure generalization to
    // unseen speakers, not replay of memorized spectra.
    let ids = similar_voices(28);
    let train_pool = SyntheticSpeech::with_speakers(ids[..16].to_vec());
    let valid_pool = SyntheticSpeech::with_speakers(ids[16..].to_vec());
    let train_corpus = in_memory_corpus(200, 2, 0.5, 909, &train_pool);
    let valid_corpus = in_memory_corpus(60, 2, 0.5, 910, &valid_pool);
    let train_cfg = TrainConfig {
        learning_rate: 3e-3,
        batch_size: 8,
        max_epochs: 18,
        patience_epochs: 18,
        segment_seconds: 0.5,
        sample_rate: 8000,
        seed: 9,
        ..TrainConfig::default()
    };
    let mut scores = Vec::new();
    for (name, variant, mics) in [
        ("single", Variant::Single, 1),
        ("ef-2ch", Variant::EarlyFusion, 2),
        ("lf-2ch", Variant::LateFusion, 2),
    ] {
        let cfg = ModelConfig::desk_scale(variant, mics);
        let tr = training_view(&train_corpus, mics);
        let va = training_view(&valid_corpus, mics);
        let initial: ParameterSet<f64> = ParameterSet::init(&cfg, 99).unwrap();
        let outcome = train(&cfg, initial, &tr, &va, &train_cfg, |_| {}).unwrap();
        let score = model_si_snri(&cfg, &outcome.best_params, &valid_corpus);
        scores.push((name, score));
    }
    let single = scores[0].1;
    let ef = scores[1].1;
    let lf = scores[2].1;
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        ef > single && lf > single,
        "validation SI-SNRi: single {single:.2}, ef {ef:.2}, lf {lf:.2} dB"
    );
    pass(9, format!(
        "same-budget validation SI-SNRi: single {single:.2} dB < EF {ef:.2} dB, LF {lf:.2} dB ({elapsed:.0} s)"
    ));
}

// --------------------------------------------------------------- criterion 10

#[test]
fn criterion_10_spatializer_physics() {
    // Measured decay within ±25% of the target over 20 reverberant scenes.
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst_rel = 0.0f64;
    for _ in 0..20 {
        let scene = sample_geometry(&mut rng, 1, 2, true).unwrap();
        let rirs = simulate_rir(&scene, 8000).unwrap();
        for k in 0..2 {
            let measured = schroeder_t60(&rirs.responses[0][k], 8000).unwrap();
            let rel = (measured - scene.t60).abs() / scene.t60;
            assert!(
                rel <= 0.25,
                "target {:.3} s, measured {measured:.3} s (rel {rel:.3})",
                scene.t60
            );
            worst_rel = worst_rel.max(rel);
        }
    }

    // Mixture additivity: x_m equals the sum of convolved images bit-exactly.
    let mut mixes = 0;
    for seed in [1, 2, 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = sample_geometry(&mut rng, 2, 2, seed != 1).unwrap();
        let rirs = simulate_rir(&scene, 8000).unwrap();
        let pool = SyntheticSpeech::train_pool(4);
        use mcsep_core::spatial::corpus::SourceProvider;
        let dry = vec![
            pool.utterance(0, seed, 4000).unwrap(),
            pool.utterance(1, seed, 4000).unwrap(),
        ];
        let out = mix(&dry, &scene, &rirs, 2.5).unwrap();
        for m in 0..2 {
            let images: Vec<Vec<f64>> =
                (0..2).map(|k| convolve(&rirs.responses[m][k], &out.dry[k])).collect();
            for t in 0..out.mixture[m].len() {
                assert_eq!(
                    out.mixture[m][t],
                    images[0][t] + images[1][t],
                    "mic {m} sample {t}"
                );
            }
        }
        mixes += 1;
    }

    // Every sampled geometry honors the distance and T60 constraints.
    let mut rng = ChaCha8Rng::seed_from_u64(1011);
    for i in 0..1000 {
        let m = 1 + (i % 4);
        let scene = sample_geometry(&mut rng, m, 2, i % 2 == 0).unwrap();
        scene.validate().unwrap();
        let angle = scene.angle_difference().unwrap();
        assert!((0.0..=180.0).contains(&angle));
    }
    pass(10, format!(
        "T60 within ±25% on 20 scenes (worst {worst_rel:.2}); Eq.-style additivity bit-exact on {mixes} mixtures at every mic; 1000 geometries all valid"
    ));
}

// --------------------------------------------------------------- criterion 11

#[test]
fn criterion_11_bucketing_structure() {
    use mcsep_core::metrics::{bucket_report, UtteranceRecord};
    // Boundary rules.
    assert_eq!(bucket_index(14.9).unwrap(), 0);
    assert_eq!(bucket_index(15.0).unwrap(), 1);
    assert_eq!(bucket_index(180.0).unwrap(), 11);
    assert!(bucket_index(-0.01).is_err());
    assert!(bucket_index(180.01).is_err());

    // Partition: every angle lands in exactly one left-closed interval.
    for step in 0..=1800 {
        let angle = step as f64 / 10.0;
        let b = bucket_index(angle).unwrap();
        let lo = 15.0 * b as f64;
        let hi = 15.0 * (b + 1) as f64;
        assert!(angle >= lo && (angle < hi || (b == 11 && angle <= 180.0)));
    }

    // Counts conserve over a random report.
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let records: Vec<UtteranceRecord> = (0..500)
        .map(|i| UtteranceRecord {
            id: format!("u{i}"),
            si_snri_db: rng.gen_range(-5.0..20.0),
            permutation: vec![0, 1],
            angle_difference_deg: rng.gen_range(0.0..=180.0),
        })
        .collect();
    let report = bucket_report("acceptance", records).unwrap();
    assert_eq!(report.buckets.len(), BUCKET_COUNT);
    let total: usize = report.buckets.iter().map(|b| b.count).sum();
    assert_eq!(total, report.records.len());
    for b in &report.buckets {
        assert_eq!(b.hi_deg - b.lo_deg, 15.0);
    }
    pass(11, format!(
        "12 × 15° partition: boundaries left-closed, 180° closed into the last bucket, {total}/500 records conserved"
    ));
}
