//! Central finite-difference verification of analytic gradients.
//!
//! The harness rebuilds the graph from scratch for every probe, so the
//! builder closure must be a pure function of the input tensors. 64-bit
//! precision is assumed; the probe step is chosen so truncation and rounding
//! error are both far below the acceptance thresholds.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Default central-difference step for 64-bit probes.
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Compares analytic gradients of `build`'s scalar output against central
/// finite differences over every coordinate of every input, and returns the
/// worst relative error `|a - n| / max(|a|, |n|, 1e-8)`.
///
/// `build` receives one trainable leaf per input tensor and must return a
/// scalar node computed from them.
pub fn finite_diff_check<F>(build: F, inputs: &[Tensor<f64>], epsilon: f64) -> Result<f64>
where
    F: Fn(&Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |tensors: &[Tensor<f64>]| -> Result<(f64, Vec<Option<Tensor<f64>>>)> {
        let g = Graph::new();
        let vars: Vec<Var> = tensors.iter().map(|t| g.param(t.clone())).collect();
        let root = build(&g, &vars)?;
        let value = g.item(root);
        g.backward(root)?;
        Ok((value, vars.iter().map(|&v| g.grad(v)).collect()))
    };

    let (_, analytic) = eval(inputs)?;

    let mut worst = 0.0f64;
    let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
    for (ti, input) in inputs.iter().enumerate() {
        for ci in 0..input.numel() {
            let base = input.data()[ci];
            probe[ti].data_mut()[ci] = base + epsilon;
            let plus = eval(&probe)?.0;
            probe[ti].data_mut()[ci] = base - epsilon;
            let minus = eval(&probe)?.0;
            probe[ti].data_mut()[ci] = base;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[ti].as_ref().map_or(0.0, |t| t.data()[ci]);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
