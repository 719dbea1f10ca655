//! The separator forward pass, built as an autodiff graph.
//!
//! One function, [`forward_graph`], covers all three variants; the public
//! `separate*` wrappers run it with constant parameters and extract the
//! waveforms. The fusion points:
//!
//! - single: encode → bottleneck → TCN → masks → decode.
//! - early fusion: per-channel encodings are stacked (`M·N x T`) before the
//!   bottleneck. The bottleneck's normalization treats each channel's rows
//!   as an independent block, so an added channel with zero fusion weights
//!   cannot disturb the others — this is what makes zero-initialized
//!   transfer from an `M−1`-channel model exact.
//! - late fusion: one shared bottleneck+TCN runs per channel; the outputs
//!   are stacked (`M·Sc x T`) ahead of the mask estimators.
//!
//! Masks always multiply the reference channel's encoding (channel 1), and
//! the decoder/overlap-add return waveforms of the input length.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::model::config::{ModelConfig, Variant};
use crate::model::params::ParameterSet;
use crate::signal::segment;
use crate::tensor::{Real, Tensor};

/// Variance guard inside every layer normalization.
pub const GLN_EPS: f64 = 1e-8;

/// Handles into a built forward graph.
pub struct ModelForward {
    /// K estimated waveforms (1-D nodes of the input length).
    pub estimates: Vec<Var>,
    /// K masks (`N x T`), each in (0, 1).
    pub masks: Vec<Var>,
    /// Parameter nodes in canonical [`ParameterSet`] order.
    pub param_vars: Vec<Var>,
    /// Reference-channel encoder output (`N x T`).
    pub w_ref: Var,
}

/// Builds the full separator on `g`. With `trainable` the parameters become
/// gradient-receiving leaves in canonical order (`param_vars` aligns with
/// `params.tensors()`); otherwise they are constants.
pub fn forward_graph<T: Real>(
    g: &Graph<T>,
    params: &ParameterSet<T>,
    cfg: &ModelConfig,
    mixture: &[Vec<T>],
    trainable: bool,
) -> Result<ModelForward> {
    cfg.validate()?;
    params.matches_config(cfg)?;
    if mixture.len() != cfg.m {
        return Err(Error::invalid(format!(
            "expected {} input channels, got {}",
            cfg.m,
            mixture.len()
        )));
    }
    let n_samples = mixture[0].len();
    if n_samples < cfg.l {
        return Err(Error::invalid(format!(
            "input of {n_samples} samples is shorter than one encoder window ({})",
            cfg.l
        )));
    }
    if mixture.iter().any(|ch| ch.len() != n_samples) {
        return Err(Error::invalid("input channels differ in length"));
    }

    let param_vars: Vec<Var> = params
        .tensors()
        .iter()
        .map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
        .collect();
    let by_name: HashMap<&str, Var> = params
        .names()
        .iter()
        .map(String::as_str)
        .zip(param_vars.iter().copied())
        .collect();
    let v = |name: &str| by_name[name];

    // encode every channel with the shared basis
    let hop = cfg.hop();
    let u = v("encoder.u");
    let mut encodings = Vec::with_capacity(cfg.m);
    for ch in mixture {
        let x = g.constant(segment(ch, cfg.l, hop)?.data);
        encodings.push(g.matmul(u, x)?);
    }
    let w_ref = encodings[0];

    let bnl = |x: Var, blocks: usize| -> Result<Var> {
        let normed =
            g.block_global_layer_norm(x, v("bnl.gln.gamma"), v("bnl.gln.beta"), blocks, GLN_EPS)?;
        g.conv1d(normed, v("bnl.conv.w"), Some(v("bnl.conv.b")), 1, 1)
    };

    let tcn = |mut feat: Var| -> Result<Var> {
        let mut skip_sum: Option<Var> = None;
        for i in 0..cfg.r * cfg.x {
            let p = |part: &str| v(&format!("tcn.{i}.{part}"));
            let dilation = 1usize << (i % cfg.x);
            let mut hid = g.conv1d(feat, p("in.w"), Some(p("in.b")), 1, 1)?;
            hid = g.prelu(hid, p("prelu1"))?;
            hid = g.global_layer_norm(hid, p("gln1.gamma"), p("gln1.beta"), GLN_EPS)?;
            hid = g.conv1d(hid, p("dw.w"), Some(p("dw.b")), dilation, cfg.h)?;
            hid = g.prelu(hid, p("prelu2"))?;
            hid = g.global_layer_norm(hid, p("gln2.gamma"), p("gln2.beta"), GLN_EPS)?;
            let res = g.conv1d(hid, p("res.w"), Some(p("res.b")), 1, 1)?;
            feat = g.add(feat, res)?;
            let skip = g.conv1d(hid, p("skip.w"), Some(p("skip.b")), 1, 1)?;
            skip_sum = Some(match skip_sum {
                Some(acc) => g.add(acc, skip)?,
                None => skip,
            });
        }
        Ok(skip_sum.expect("at least one block"))
    };

    // fused features ahead of the mask estimators
    let me_input = match cfg.variant {
        Variant::Single => tcn(bnl(w_ref, 1)?)?,
        Variant::EarlyFusion => {
            let stacked = g.concat_rows(&encodings)?;
            tcn(bnl(stacked, cfg.m)?)?
        }
        Variant::LateFusion => {
            let mut per_channel = Vec::with_capacity(cfg.m);
            for &w in &encodings {
                per_channel.push(tcn(bnl(w, 1)?)?);
            }
            g.concat_rows(&per_channel)?
        }
    };

    let mut masks = Vec::with_capacity(cfg.k);
    let mut estimates = Vec::with_capacity(cfg.k);
    let decoder = v("decoder.v");
    for k in 0..cfg.k {
        let p = |part: &str| v(&format!("me.{k}.{part}"));
        let a = g.prelu(me_input, p("prelu"))?;
        let logits = g.conv1d(a, p("conv.w"), Some(p("conv.b")), 1, 1)?;
        let mask = g.sigmoid(logits);
        masks.push(mask);
        estimates.push(mask_decode(g, w_ref, mask, decoder, hop, n_samples)?);
    }

    Ok(ModelForward { estimates, masks, param_vars, w_ref })
}

/// Masked decode: `overlap_add(V · (mask ⊙ w))`, shared by the forward pass
/// and the reconstruction-linearity tests.
pub fn mask_decode<T: Real>(
    g: &Graph<T>,
    w: Var,
    mask: Var,
    decoder: Var,
    hop: usize,
    n_samples: usize,
) -> Result<Var> {
    let masked = g.mul(mask, w)?;
    let decoded = g.matmul(decoder, masked)?;
    g.overlap_add(decoded, hop, n_samples)
}

/// Runs the separator on an `M`-channel mixture (outer slice = channels) and
/// returns K waveforms of the input length.
pub fn separate<T: Real>(
    mixture: &[Vec<T>],
    params: &ParameterSet<T>,
    cfg: &ModelConfig,
) -> Result<Vec<Vec<T>>> {
    let g = Graph::new();
    let fwd = forward_graph(&g, params, cfg, mixture, false)?;
    Ok(fwd.estimates.into_iter().map(|e| g.value(e).into_data()).collect())
}

/// Single-channel entry point; rejects non-`single` configurations.
pub fn separate_single<T: Real>(
    x: &[T],
    params: &ParameterSet<T>,
    cfg: &ModelConfig,
) -> Result<Vec<Vec<T>>> {
    require_variant(cfg, Variant::Single)?;
    separate(&[x.to_vec()], params, cfg)
}

/// Early-fusion entry point; rejects other configurations.
pub fn separate_ef<T: Real>(
    mixture: &[Vec<T>],
    params: &ParameterSet<T>,
    cfg: &ModelConfig,
) -> Result<Vec<Vec<T>>> {
    require_variant(cfg, Variant::EarlyFusion)?;
    separate(mixture, params, cfg)
}

/// Late-fusion entry point; rejects other configurations.
pub fn separate_lf<T: Real>(
    mixture: &[Vec<T>],
    params: &ParameterSet<T>,
    cfg: &ModelConfig,
) -> Result<Vec<Vec<T>>> {
    require_variant(cfg, Variant::LateFusion)?;
    separate(mixture, params, cfg)
}

fn require_variant(cfg: &ModelConfig, expected: Variant) -> Result<()> {
    if cfg.variant != expected {
        return Err(Error::invalid(format!(
            "configuration is {}, expected {expected}",
            cfg.variant
        )));
    }
    Ok(())
}

/// Encoder output `U · segment(x)` for one channel.
pub fn encode<T: Real>(x: &[T], params: &ParameterSet<T>, cfg: &ModelConfig) -> Result<Tensor<T>> {
    let g = Graph::new();
    let u = g.constant(
        params
            .get("encoder.u")
            .ok_or_else(|| Error::invalid("parameter set lacks encoder.u"))?
            .clone(),
    );
    let seg = g.constant(segment(x, cfg.l, cfg.hop())?.data);
    Ok(g.value(g.matmul(u, seg)?))
}
