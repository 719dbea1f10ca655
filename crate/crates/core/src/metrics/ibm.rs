//! Ideal-binary-mask oracle separation on an STFT grid.
//!
//! The mask is an oracle: it needs the reference images, so it bounds what
//! any single-channel mask-based separator could achieve rather than being a
//! runnable system. Window 256 / hop 64 with a periodic sqrt-Hann window;
//! analysis and synthesis share the window and the inverse normalizes by the
//! per-sample window-power sum, so `inverse(forward(x))` is exact (not just
//! COLA-exact) for every signal length.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::error::{Error, Result};

/// IBM analysis window length in samples.
pub const IBM_WINDOW: usize = 256;
/// IBM analysis hop in samples.
pub const IBM_HOP: usize = 64;

/// Short-time Fourier transform with square-root periodic-Hann windowing.
pub struct Stft {
    n: usize,
    hop: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(n: usize, hop: usize) -> Result<Self> {
        if n == 0 || hop == 0 || hop > n {
            return Err(Error::invalid(format!("stft: window {n}, hop {hop}")));
        }
        let window: Vec<f64> = (0..n)
            .map(|i| {
                let hann = 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos();
                hann.sqrt()
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Stft {
            n,
            hop,
            window,
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
        })
    }

    /// Leading zero-padding so even sample 0 falls under nonzero window
    /// weight (the window vanishes at its first sample).
    fn lead(&self) -> usize {
        self.n - self.hop
    }

    fn frame_count(&self, len: usize) -> usize {
        let padded = len + self.lead();
        if padded <= self.n {
            1
        } else {
            (padded - self.n).div_ceil(self.hop) + 1
        }
    }

    /// Complex spectra, one `n`-bin frame per hop. Frame `m` covers input
    /// samples `[m*hop - lead, m*hop - lead + n)`; out-of-range taps are zero.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<Vec<Complex<f64>>>> {
        if x.is_empty() {
            return Err(Error::invalid("stft of an empty signal"));
        }
        let lead = self.lead() as isize;
        let mut frames = Vec::with_capacity(self.frame_count(x.len()));
        for m in 0..self.frame_count(x.len()) {
            let start = (m * self.hop) as isize - lead;
            let mut buf: Vec<Complex<f64>> = (0..self.n)
                .map(|i| {
                    let t = start + i as isize;
                    let v = if t >= 0 && (t as usize) < x.len() { x[t as usize] } else { 0.0 };
                    Complex::new(v * self.window[i], 0.0)
                })
                .collect();
            self.fft.process(&mut buf);
            frames.push(buf);
        }
        Ok(frames)
    }

    /// Weighted overlap-add inverse, exact for the matching `forward` call.
    pub fn inverse(&self, frames: &[Vec<Complex<f64>>], len: usize) -> Result<Vec<f64>> {
        if frames.is_empty() || len == 0 {
            return Err(Error::invalid("stft inverse needs frames and a positive length"));
        }
        let lead = self.lead() as isize;
        let mut acc = vec![0.0f64; len];
        let mut norm = vec![0.0f64; len];
        for (m, frame) in frames.iter().enumerate() {
            if frame.len() != self.n {
                return Err(Error::invalid(format!(
                    "stft inverse: frame {m} has {} bins, expected {}",
                    frame.len(),
                    self.n
                )));
            }
            let mut buf = frame.clone();
            self.ifft.process(&mut buf);
            let start = (m * self.hop) as isize - lead;
            for i in 0..self.n {
                let t = start + i as isize;
                if t >= 0 && (t as usize) < len {
                    let w = self.window[i];
                    acc[t as usize] += w * buf[i].re / self.n as f64;
                    norm[t as usize] += w * w;
                }
            }
        }
        for (a, z) in acc.iter_mut().zip(&norm) {
            if *z > 0.0 {
                *a /= z;
            }
        }
        Ok(acc)
    }
}

/// Oracle ideal-binary-mask separation of `mixture` into `references.len()`
/// streams. Per time-frequency bin the full mixture content goes to the
/// reference with the largest magnitude; ties (including all-silent bins) go
/// to the lowest speaker index, so the masks are binary, exhaustive and
/// exclusive by construction.
pub fn ibm_separate(mixture: &[f64], references: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if references.is_empty() {
        return Err(Error::invalid("ibm: at least one reference required"));
    }
    if references.iter().any(|r| r.len() != mixture.len()) {
        return Err(Error::invalid("ibm: references must match the mixture length"));
    }
    let stft = Stft::new(IBM_WINDOW, IBM_HOP)?;
    let mix_frames = stft.forward(mixture)?;
    let ref_frames: Vec<_> =
        references.iter().map(|r| stft.forward(r)).collect::<Result<_>>()?;
    let mut outputs = Vec::with_capacity(references.len());
    for k in 0..references.len() {
        let masked: Vec<Vec<Complex<f64>>> = mix_frames
            .iter()
            .enumerate()
            .map(|(m, frame)| {
                frame
                    .iter()
                    .enumerate()
                    .map(|(f, &x)| {
                        let winner = (0..references.len())
                            .max_by(|&a, &b| {
                                let na = ref_frames[a][m][f].norm_sqr();
                                let nb = ref_frames[b][m][f].norm_sqr();
                                // max_by keeps the later element on Equal, so
                                // order Greater for the earlier index to win.
                                na.partial_cmp(&nb)
                                    .unwrap()
                                    .then(std::cmp::Ordering::Greater)
                            })
                            .unwrap();
                        if winner == k { x } else { Complex::new(0.0, 0.0) }
                    })
                    .collect()
            })
            .collect();
        outputs.push(stft.inverse(&masked, mixture.len())?);
    }
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inverse_reconstructs_exactly_at_any_length() {
        let stft = Stft::new(IBM_WINDOW, IBM_HOP).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for len in [1, 63, 256, 257, 1000, 4093, 8000] {
            let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = stft.inverse(&stft.forward(&x).unwrap(), len).unwrap();
            let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "len {len}: err {err:.3e}");
        }
    }

    #[test]
    fn masked_streams_sum_back_to_the_mixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 5000;
        let refs: Vec<Vec<f64>> =
            (0..3).map(|_| (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect()).collect();
        let mixture: Vec<f64> =
            (0..n).map(|t| refs.iter().map(|r| r[t]).sum()).collect();
        let outs = ibm_separate(&mixture, &refs).unwrap();
        assert_eq!(outs.len(), 3);
        for t in 0..n {
            let total: f64 = outs.iter().map(|o| o[t]).sum();
            assert!((total - mixture[t]).abs() < 1e-10);
        }
    }

    #[test]
    fn silent_competitor_cedes_every_bin() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 3000;
        let active: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let silent = vec![0.0; n];
        let outs = ibm_separate(&active, &[active.clone(), silent]).unwrap();
        for t in 0..n {
            assert!((outs[0][t] - active[t]).abs() < 1e-10);
            assert_eq!(outs[1][t], 0.0);
        }
    }

    #[test]
    fn exact_ties_go_to_the_lowest_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 2000;
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let mixture: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        let outs = ibm_separate(&mixture, &[r.clone(), r]).unwrap();
        for t in 0..n {
            assert!((outs[0][t] - mixture[t]).abs() < 1e-10);
            assert_eq!(outs[1][t], 0.0);
        }
    }

    #[test]
    fn disjoint_tones_separate_cleanly() {
        let fs = 8000.0;
        let n = 8000;
        // Both on exact bin centers of the 256-point grid (bins 16 and 64).
        let tone = |f: f64| -> Vec<f64> {
            (0..n).map(|t| (std::f64::consts::TAU * f * t as f64 / fs).sin() * 0.3).collect()
        };
        let low = tone(500.0);
        let high = tone(2000.0);
        let mixture: Vec<f64> = low.iter().zip(&high).map(|(a, b)| a + b).collect();
        let outs = ibm_separate(&mixture, &[low.clone(), high.clone()]).unwrap();
        for (out, reference) in outs.iter().zip([&low, &high]) {
            let snr = crate::loss::si_snr(out, reference, true).unwrap();
            assert!(snr > 20.0, "tone SI-SNR {snr:.2} dB");
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(ibm_separate(&[0.0; 100], &[]).is_err());
        assert!(ibm_separate(&[0.0; 100], &[vec![0.0; 99]]).is_err());
        let stft = Stft::new(IBM_WINDOW, IBM_HOP).unwrap();
        assert!(stft.forward(&[]).is_err());
        assert!(Stft::new(256, 0).is_err());
        assert!(Stft::new(64, 65).is_err());
    }
}
