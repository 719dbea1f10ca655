//! Two-speaker mixing through simulated room responses with SNR control.
//!
//! The second source is rescaled in the dry domain so that the power ratio
//! of the reverberant images at microphone 1 hits the requested SNR; every
//! image is then convolved from the already-scaled dry signal. The mixture
//! is the plain sum of the stored images, so `mixture − Σ images` is zero
//! to the last bit at every microphone.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::spatial::geometry::Scene;
use crate::spatial::ism::Rirs;

/// SNR range produced by the corpus protocol (dB).
pub const SNR_MIN_DB: f64 = -5.0;
pub const SNR_MAX_DB: f64 = 5.0;

/// One generated mixture: `mixture[m]` per microphone, `references[k]` the
/// reverberant images at microphone 1 (the training targets), and the
/// SNR-scaled dry sources that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSample {
    pub mixture: Vec<Vec<f64>>,
    pub references: Vec<Vec<f64>>,
    pub dry: Vec<Vec<f64>>,
    pub snr_db: f64,
    pub t60: f64,
    pub angle_difference_deg: f64,
}

/// Linear convolution via FFT (lengths are padded to a power of two).
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert!(!a.is_empty() && !b.is_empty(), "convolve needs non-empty inputs");
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let pack = |x: &[f64]| -> Vec<Complex<f64>> {
        let mut v = vec![Complex::new(0.0, 0.0); n];
        for (c, &r) in v.iter_mut().zip(x) {
            c.re = r;
        }
        v
    };
    let mut fa = pack(a);
    let mut fb = pack(b);
    fft.process(&mut fa);
    fft.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    planner.plan_fft_inverse(n).process(&mut fa);
    fa.truncate(out_len);
    fa.into_iter().map(|c| c.re / n as f64).collect()
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Assembles a two-speaker mixture at the requested image-domain SNR.
/// `dry` sources may differ in length; the shorter is zero-padded.
pub fn mix(
    dry: &[Vec<f64>],
    scene: &Scene,
    rirs: &Rirs,
    target_snr_db: f64,
) -> Result<MixtureSample> {
    if dry.len() != 2 || scene.speakers.len() != 2 {
        return Err(Error::invalid("mixing is defined for exactly two speakers"));
    }
    if rirs.responses.len() != scene.mics.len()
        || rirs.responses.iter().any(|per_mic| per_mic.len() != 2)
    {
        return Err(Error::invalid("impulse responses do not match the scene"));
    }
    if !(SNR_MIN_DB..=SNR_MAX_DB).contains(&target_snr_db) {
        return Err(Error::invalid(format!(
            "target SNR {target_snr_db} dB outside [{SNR_MIN_DB}, {SNR_MAX_DB}]"
        )));
    }
    let n0 = dry.iter().map(Vec::len).max().unwrap();
    if n0 == 0 {
        return Err(Error::invalid("empty dry source"));
    }
    let mut dry: Vec<Vec<f64>> = dry
        .iter()
        .map(|s| {
            let mut v = s.clone();
            v.resize(n0, 0.0);
            v
        })
        .collect();
    if dry.iter().any(|s| power(s) == 0.0) {
        return Err(Error::invalid("silent dry source"));
    }

    // image powers at the reference microphone decide the gain on source 2
    let p1 = power(&convolve(&rirs.responses[0][0], &dry[0]));
    let p2 = power(&convolve(&rirs.responses[0][1], &dry[1]));
    if p1 == 0.0 || p2 == 0.0 {
        return Err(Error::invalid("a source image is silent at the reference microphone"));
    }
    let gain = (p1 / (p2 * 10f64.powf(target_snr_db / 10.0))).sqrt();
    for v in &mut dry[1] {
        *v *= gain;
    }

    // all images from the scaled dry signals, then the mixture as their sum
    let images: Vec<Vec<Vec<f64>>> = rirs
        .responses
        .iter()
        .map(|per_mic| (0..2).map(|k| convolve(&per_mic[k], &dry[k])).collect())
        .collect();
    let mixture = images
        .iter()
        .map(|imgs: &Vec<Vec<f64>>| {
            (0..imgs[0].len()).map(|t| imgs[0][t] + imgs[1][t]).collect()
        })
        .collect();
    let references = images[0].clone();

    Ok(MixtureSample {
        mixture,
        references,
        dry,
        snr_db: target_snr_db,
        t60: scene.t60,
        angle_difference_deg: scene.angle_difference()?,
    })
}
