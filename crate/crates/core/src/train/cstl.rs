//! Channel-sequential transfer: grow a trained `M−1`-channel model into an
//! `M`-channel one.
//!
//! Every tensor whose shape does not depend on the channel count is copied
//! verbatim. Only the fused layer widens — the bottleneck input for early
//! fusion, the mask-estimator input for late fusion — and the new channel's
//! input slice starts at zero (or tiny Gaussian noise on request), so the
//! expanded model's outputs initially coincide with the source model's.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ParameterSet, Variant};
use crate::tensor::{Real, Tensor};

/// Initialization of the weights feeding on the newly added channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NewSliceInit {
    /// Exact transfer: the expanded model reproduces the source model until
    /// training moves the new weights.
    Zero,
    /// Small random symmetry breaking.
    Gaussian { std: f64, seed: u64 },
}

/// Expands `source` (valid for `source_cfg`) to `target_cfg`, which must be
/// identical except for one more channel. A single-channel source of the
/// `single` variant is accepted for either fusion target, since its tensor
/// layout coincides with the fusion variants at one channel.
pub fn cstl_expand<T: Real>(
    source: &ParameterSet<T>,
    source_cfg: &ModelConfig,
    target_cfg: &ModelConfig,
    init: NewSliceInit,
) -> Result<ParameterSet<T>> {
    source_cfg.validate()?;
    target_cfg.validate()?;
    source.matches_config(source_cfg)?;
    check_compatible(source_cfg, target_cfg)?;

    let mut rng = match init {
        NewSliceInit::Zero => None,
        NewSliceInit::Gaussian { std, seed } => {
            if !(std > 0.0) {
                return Err(Error::invalid("gaussian std must be positive"));
            }
            Some((std, ChaCha8Rng::seed_from_u64(seed)))
        }
    };
    let mut fresh = |shape: Vec<usize>| -> Tensor<T> {
        match &mut rng {
            Some((std, rng)) => Tensor::randn(shape, T::from_f64_(*std), rng),
            None => Tensor::zeros(shape),
        }
    };

    let mut entries = Vec::with_capacity(source.len());
    for (name, tensor) in source.iter() {
        let widened = match (target_cfg.variant, name) {
            (Variant::EarlyFusion, "bnl.gln.gamma") => pad_rows(tensor, target_cfg.n, T::one()),
            (Variant::EarlyFusion, "bnl.gln.beta") => pad_rows(tensor, target_cfg.n, T::zero()),
            (Variant::EarlyFusion, "bnl.conv.w") => {
                pad_input_columns(tensor, target_cfg.n, &mut fresh)?
            }
            (Variant::LateFusion, _) if is_mask_conv_weight(name) => {
                pad_input_columns(tensor, target_cfg.sc(), &mut fresh)?
            }
            _ => tensor.clone(),
        };
        entries.push((name.to_string(), widened));
    }

    let expanded = ParameterSet::from_entries(entries)?;
    expanded.matches_config(target_cfg)?;
    Ok(expanded)
}

fn check_compatible(source: &ModelConfig, target: &ModelConfig) -> Result<()> {
    let variant_ok = source.variant == target.variant
        || (source.variant == Variant::Single && source.m == 1);
    if !variant_ok {
        return Err(Error::invalid(format!(
            "cannot expand a {} model into a {} model",
            source.variant, target.variant
        )));
    }
    if target.variant == Variant::Single {
        return Err(Error::invalid("the single-channel variant cannot be expanded"));
    }
    if target.m != source.m + 1 {
        return Err(Error::invalid(format!(
            "expansion adds exactly one channel ({} -> {} requested)",
            source.m, target.m
        )));
    }
    let same_sizes = source.k == target.k
        && source.l == target.l
        && source.n == target.n
        && source.b == target.b
        && source.h == target.h
        && source.p == target.p
        && source.x == target.x
        && source.r == target.r;
    if !same_sizes {
        return Err(Error::invalid(
            "source and target must agree on every size hyperparameter except the channel count",
        ));
    }
    Ok(())
}

fn is_mask_conv_weight(name: &str) -> bool {
    name.starts_with("me.") && name.ends_with(".conv.w")
}

/// Extends a 1-D per-row tensor by `extra` rows filled with `fill`.
fn pad_rows<T: Real>(t: &Tensor<T>, extra: usize, fill: T) -> Tensor<T> {
    let mut data = t.data().to_vec();
    data.extend(std::iter::repeat(fill).take(extra));
    Tensor::new(vec![data.len()], data).expect("1-D pad")
}

/// Widens a pointwise conv weight `[rows, cols, 1]` to `[rows, cols+extra, 1]`;
/// existing columns keep their values, new columns come from `fresh`.
fn pad_input_columns<T: Real>(
    t: &Tensor<T>,
    extra: usize,
    fresh: &mut impl FnMut(Vec<usize>) -> Tensor<T>,
) -> Result<Tensor<T>> {
    if t.ndim() != 3 || t.shape()[2] != 1 {
        return Err(Error::invalid("expected a pointwise conv weight"));
    }
    let (rows, cols) = (t.shape()[0], t.shape()[1]);
    let new_block = fresh(vec![rows, extra]);
    let mut data = Vec::with_capacity(rows * (cols + extra));
    for r in 0..rows {
        data.extend_from_slice(&t.data()[r * cols..(r + 1) * cols]);
        data.extend_from_slice(&new_block.data()[r * extra..(r + 1) * extra]);
    }
    Tensor::new(vec![rows, cols + extra, 1], data)
}
