//! Scale-invariant SNR and utterance-level permutation-invariant loss.
//!
//! Two parallel implementations exist on purpose:
//! - the plain functions operate on slices, accumulate in 64-bit and clamp
//!   the result to `±clamp_db`; they serve evaluation and validation where
//!   no gradient is needed;
//! - the `_node` functions build the same arithmetic on a [`Graph`] without
//!   clamping (clamping would zero the gradient once saturated); tiny
//!   `+1e-30` guards keep every denominator and logarithm finite.
//!
//! Permutation tie rule: assignments are enumerated in lexicographic order
//! and a candidate replaces the incumbent only on strict improvement, so the
//! lexicographically first optimum always wins. Both implementations follow
//! it, which keeps them interchangeable on tie-free inputs and deterministic
//! on ties.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Real;

/// Default symmetric clamp for the decibel output.
pub const DEFAULT_CLAMP_DB: f64 = 60.0;

/// Guard added to denominators and log arguments in the graph path.
const EPS: f64 = 1e-30;

/// Scale-invariant SNR in dB of `estimate` against `reference`, clamped to
/// `±DEFAULT_CLAMP_DB`. With `zero_mean` (the conventional choice) both
/// signals are mean-subtracted first.
pub fn si_snr<T: Real>(estimate: &[T], reference: &[T], zero_mean: bool) -> Result<f64> {
    si_snr_clamped(estimate, reference, zero_mean, DEFAULT_CLAMP_DB)
}

/// [`si_snr`] with an explicit clamp magnitude in dB.
pub fn si_snr_clamped<T: Real>(
    estimate: &[T],
    reference: &[T],
    zero_mean: bool,
    clamp_db: f64,
) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::invalid(format!(
            "si_snr: length mismatch {} vs {}",
            estimate.len(),
            reference.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::invalid("si_snr: empty signals"));
    }
    let n = reference.len() as f64;
    let (mean_s, mean_e) = if zero_mean {
        (
            reference.iter().map(|&v| v.to_f64_()).sum::<f64>() / n,
            estimate.iter().map(|&v| v.to_f64_()).sum::<f64>() / n,
        )
    } else {
        (0.0, 0.0)
    };

    let mut dot_ss = 0.0f64;
    let mut dot_se = 0.0f64;
    for (&s, &e) in reference.iter().zip(estimate) {
        let sv = s.to_f64_() - mean_s;
        let ev = e.to_f64_() - mean_e;
        dot_ss += sv * sv;
        dot_se += sv * ev;
    }
    if dot_ss == 0.0 {
        return Err(Error::invalid("si_snr: reference has zero energy"));
    }

    let alpha = dot_se / dot_ss;
    let mut noise = 0.0f64;
    for (&s, &e) in reference.iter().zip(estimate) {
        let sv = s.to_f64_() - mean_s;
        let ev = e.to_f64_() - mean_e;
        let d = alpha * sv - ev;
        noise += d * d;
    }
    let target = alpha * alpha * dot_ss;

    let db = if noise == 0.0 {
        clamp_db
    } else if target == 0.0 {
        -clamp_db
    } else {
        10.0 * (target / noise).log10()
    };
    Ok(db.clamp(-clamp_db, clamp_db))
}

/// Minimum over all `K!` speaker assignments of the mean negative SI-SNR,
/// with the permutation that attains it. `permutation[i]` is the reference
/// index scored against estimate `i`; the assignment is constant over the
/// whole utterance.
pub fn pit_loss<T: Real>(
    estimates: &[Vec<T>],
    references: &[Vec<T>],
    zero_mean: bool,
    clamp_db: f64,
) -> Result<(f64, Vec<usize>)> {
    let k = check_speaker_sets(estimates.len(), references.len())?;
    let mut pair = vec![0.0f64; k * k];
    for (i, est) in estimates.iter().enumerate() {
        for (j, re) in references.iter().enumerate() {
            pair[i * k + j] = si_snr_clamped(est, re, zero_mean, clamp_db)?;
        }
    }
    let (perm, total) = best_assignment(&pair, k);
    Ok((-total / k as f64, perm))
}

fn check_speaker_sets(n_est: usize, n_ref: usize) -> Result<usize> {
    if n_est != n_ref {
        return Err(Error::invalid(format!(
            "pit: {n_est} estimates vs {n_ref} references"
        )));
    }
    if n_est < 2 {
        return Err(Error::invalid("pit: at least two speakers required"));
    }
    Ok(n_est)
}

/// Lexicographically first permutation maximizing the summed pairwise score.
fn best_assignment(pair: &[f64], k: usize) -> (Vec<usize>, f64) {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for perm in (0..k).permutations(k) {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| pair[i * k + j]).sum();
        match &best {
            Some((_, t)) if total <= *t => {}
            _ => best = Some((perm, total)),
        }
    }
    best.expect("k >= 2")
}

/// Graph-side SI-SNR in dB (unclamped). `estimate` and `reference` are
/// equal-length 1-D nodes; `reference` is typically a constant.
pub fn si_snr_node<T: Real>(
    g: &Graph<T>,
    estimate: Var,
    reference: Var,
    zero_mean: bool,
) -> Result<Var> {
    let (est, re) = if zero_mean {
        let me = g.mean(estimate);
        let ms = g.mean(reference);
        (g.add_scalar_mul(estimate, me, -1.0)?, g.add_scalar_mul(reference, ms, -1.0)?)
    } else {
        (estimate, reference)
    };
    let dot_ss = g.dot(re, re)?;
    let dot_se = g.dot(re, est)?;
    let alpha = g.div(dot_se, g.add_const(dot_ss, EPS))?;
    let target = g.mul_scalar(re, alpha)?;
    let noise = g.sub(target, est)?;
    let ratio = g.div(
        g.add_const(g.dot(target, target)?, EPS),
        g.add_const(g.dot(noise, noise)?, EPS),
    )?;
    Ok(g.scale(g.ln(ratio), 10.0 / std::f64::consts::LN_10))
}

/// Graph-side PIT loss: builds the `K x K` pairwise SI-SNR matrix, picks the
/// best assignment from the forward values (same tie rule as [`pit_loss`]),
/// and returns the mean negative SI-SNR over the chosen pairs as a node.
/// Gradients flow only through the selected assignment.
pub fn pit_loss_node<T: Real>(
    g: &Graph<T>,
    estimates: &[Var],
    references: &[Var],
    zero_mean: bool,
) -> Result<(Var, Vec<usize>)> {
    let k = check_speaker_sets(estimates.len(), references.len())?;
    let mut nodes = Vec::with_capacity(k * k);
    let mut values = Vec::with_capacity(k * k);
    for &est in estimates {
        for &re in references {
            let v = si_snr_node(g, est, re, zero_mean)?;
            values.push(g.item(v).to_f64_());
            nodes.push(v);
        }
    }
    let (perm, _) = best_assignment(&values, k);
    let mut total = nodes[perm[0]];
    for (i, &j) in perm.iter().enumerate().skip(1) {
        total = g.add(total, nodes[i * k + j])?;
    }
    Ok((g.scale(total, -1.0 / k as f64), perm))
}
