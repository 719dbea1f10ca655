//! Waveform segmentation and count-normalized overlap-add reconstruction.
//!
//! A waveform is cut into overlapping windows of `seg_len` samples spaced
//! `hop` apart; the matrix of windows is the model's time axis. Overlap-add
//! divides each reconstructed sample by the number of windows covering it,
//! which makes `overlap_add(segment(x))` an exact inverse for every window
//! length and hop, including the zero-padded tail.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// An `seg_len x frames` matrix of overlapping windows plus the bookkeeping
/// needed to invert it exactly.
#[derive(Debug, Clone)]
pub struct SegmentMatrix<T> {
    pub data: Tensor<T>,
    pub seg_len: usize,
    pub hop: usize,
    pub original_len: usize,
}

/// Number of windows covering a signal of `len` samples.
pub fn frame_count(len: usize, seg_len: usize, hop: usize) -> usize {
    (len.saturating_sub(seg_len)).div_ceil(hop) + 1
}

pub(crate) fn validate_segmentation(len: usize, seg_len: usize, hop: usize) -> Result<()> {
    if len == 0 {
        return Err(Error::invalid("segment: empty waveform"));
    }
    if seg_len == 0 || hop == 0 {
        return Err(Error::invalid("segment: window and hop must be >= 1"));
    }
    if hop > seg_len {
        return Err(Error::invalid(format!("segment: hop {hop} exceeds window {seg_len}")));
    }
    Ok(())
}

/// Fills a `seg_len x frames` row-major buffer; positions past the end of `x` stay zero.
pub(crate) fn segment_into<T: Real>(x: &[T], seg_len: usize, hop: usize, out: &mut [T]) {
    let frames = frame_count(x.len(), seg_len, hop);
    debug_assert_eq!(out.len(), seg_len * frames);
    for l in 0..seg_len {
        let row = &mut out[l * frames..(l + 1) * frames];
        for (t, slot) in row.iter_mut().enumerate() {
            let idx = t * hop + l;
            if idx < x.len() {
                *slot = x[idx];
            }
        }
    }
}

/// Sum of window cells per output sample, truncated to `original_len`, each
/// divided by how many windows cover that sample.
pub(crate) fn overlap_add_into<T: Real>(
    seg: &[T],
    seg_len: usize,
    hop: usize,
    frames: usize,
    original_len: usize,
    out: &mut [T],
) {
    debug_assert_eq!(out.len(), original_len);
    let mut counts = vec![0u32; original_len];
    for l in 0..seg_len {
        let row = &seg[l * frames..(l + 1) * frames];
        for (t, &v) in row.iter().enumerate() {
            let idx = t * hop + l;
            if idx < original_len {
                out[idx] = out[idx] + v;
                counts[idx] += 1;
            }
        }
    }
    for (o, &c) in out.iter_mut().zip(counts.iter()) {
        debug_assert!(c > 0, "overlap-add: uncovered sample");
        *o = *o / T::from_f64_(f64::from(c));
    }
}

/// Per-sample overlap counts used when differentiating through overlap-add.
pub(crate) fn overlap_counts(seg_len: usize, hop: usize, frames: usize, original_len: usize) -> Vec<u32> {
    let mut counts = vec![0u32; original_len];
    for l in 0..seg_len {
        for t in 0..frames {
            let idx = t * hop + l;
            if idx < original_len {
                counts[idx] += 1;
            }
        }
    }
    counts
}

/// Cuts `waveform` into overlapping windows; the tail window is zero-padded.
pub fn segment<T: Real>(waveform: &[T], seg_len: usize, hop: usize) -> Result<SegmentMatrix<T>> {
    validate_segmentation(waveform.len(), seg_len, hop)?;
    let frames = frame_count(waveform.len(), seg_len, hop);
    let mut data = vec![T::zero(); seg_len * frames];
    segment_into(waveform, seg_len, hop, &mut data);
    Ok(SegmentMatrix {
        data: Tensor::new(vec![seg_len, frames], data)?,
        seg_len,
        hop,
        original_len: waveform.len(),
    })
}

/// Reconstructs the waveform; exact inverse of [`segment`].
pub fn overlap_add<T: Real>(seg: &SegmentMatrix<T>) -> Vec<T> {
    let frames = seg.data.cols();
    let mut out = vec![T::zero(); seg.original_len];
    overlap_add_into(seg.data.data(), seg.seg_len, seg.hop, frames, seg.original_len, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64).collect()
    }

    #[test]
    fn exact_tiling_needs_no_padding() {
        let m = segment(&ramp(32), 16, 8).unwrap();
        assert_eq!(m.data.shape(), &[16, 3]);
        // column t holds samples [8t, 8t+16)
        for t in 0..3 {
            for l in 0..16 {
                assert_eq!(m.data.at2(l, t), (t * 8 + l) as f64);
            }
        }
    }

    #[test]
    fn single_window_equals_input() {
        let m = segment(&ramp(16), 16, 8).unwrap();
        assert_eq!(m.data.shape(), &[16, 1]);
        assert_eq!(m.data.data(), ramp(16).as_slice());
    }

    #[test]
    fn tail_window_is_zero_padded() {
        // 20 samples, window 16, hop 8: two windows; the second covers
        // [8, 24) so its last 4 cells are padding.
        let m = segment(&ramp(20), 16, 8).unwrap();
        assert_eq!(m.data.shape(), &[16, 2]);
        for l in 0..16 {
            let expected = if 8 + l < 20 { (8 + l) as f64 } else { 0.0 };
            assert_eq!(m.data.at2(l, 1), expected);
        }
        let padded = (0..16).filter(|l| 8 + l >= 20).count();
        assert_eq!(padded, 4);
    }

    #[test]
    fn hop_larger_than_window_rejected() {
        assert!(segment(&ramp(32), 8, 9).is_err());
        assert!(segment::<f64>(&[], 8, 4).is_err());
    }

    #[test]
    fn overlap_add_inverts_exactly() {
        let x = ramp(32);
        let err = overlap_add(&segment(&x, 16, 8).unwrap())
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-12, "max abs error {err}");
    }

    #[test]
    fn single_segment_round_trip() {
        let x = ramp(16);
        assert_eq!(overlap_add(&segment(&x, 16, 8).unwrap()), x);
    }

    #[test]
    fn ragged_lengths_invert() {
        for n in [1usize, 5, 17, 20, 31, 33, 100] {
            for (l, h) in [(16, 8), (16, 5), (7, 3), (4, 4), (3, 1)] {
                let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
                let y = overlap_add(&segment(&x, l, h).unwrap());
                let err = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-12, "n={n} L={l} hop={h} err={err}");
            }
        }
    }
}
