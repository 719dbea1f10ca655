//! Evaluation: SI-SNR improvement with permutation alignment, oracle
//! ideal-binary-mask baseline, and reports bucketed by speaker angle
//! difference.

pub mod ibm;

pub use ibm::{ibm_separate, Stft, IBM_HOP, IBM_WINDOW};

use crate::error::{Error, Result};
use crate::loss::{pit_loss, si_snr, DEFAULT_CLAMP_DB};

/// Bucket layout: twelve 15-degree intervals covering [0, 180].
pub const BUCKET_COUNT: usize = 12;
/// Width of one angle-difference bucket in degrees.
pub const BUCKET_WIDTH_DEG: f64 = 15.0;

/// SI-SNR improvement of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct SiSnri {
    /// Improvement per output, aligned by `permutation`.
    pub per_speaker_db: Vec<f64>,
    pub mean_db: f64,
    /// `permutation[i]` is the reference index scored against estimate `i`.
    pub permutation: Vec<usize>,
}

/// SI-SNR improvement: the permutation-aligned SI-SNR of the estimates minus
/// the SI-SNR of the unprocessed mixture reference channel, per speaker. The
/// permutation maximizes the estimates' summed SI-SNR (ties resolved
/// lexicographically, matching the training loss).
pub fn si_snri(
    mixture_ch1: &[f64],
    estimates: &[Vec<f64>],
    references: &[Vec<f64>],
    zero_mean: bool,
) -> Result<SiSnri> {
    if estimates.iter().chain(references).any(|s| s.len() != mixture_ch1.len()) {
        return Err(Error::invalid(
            "si_snri: mixture, estimates and references must share one length",
        ));
    }
    let (_, permutation) = pit_loss(estimates, references, zero_mean, DEFAULT_CLAMP_DB)?;
    let mut per_speaker_db = Vec::with_capacity(estimates.len());
    for (est, &j) in estimates.iter().zip(&permutation) {
        let separated = si_snr(est, &references[j], zero_mean)?;
        let baseline = si_snr(mixture_ch1, &references[j], zero_mean)?;
        per_speaker_db.push(separated - baseline);
    }
    let mean_db = per_speaker_db.iter().sum::<f64>() / per_speaker_db.len() as f64;
    Ok(SiSnri { per_speaker_db, mean_db, permutation })
}

/// One evaluated utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRecord {
    pub id: String,
    pub si_snri_db: f64,
    pub permutation: Vec<usize>,
    pub angle_difference_deg: f64,
}

/// Mean over one angle-difference interval; `mean_si_snri_db` is `None` for
/// an empty bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketSummary {
    pub lo_deg: f64,
    pub hi_deg: f64,
    pub count: usize,
    pub mean_si_snri_db: Option<f64>,
}

/// Per-utterance records plus their bucketed and global summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub system: String,
    pub records: Vec<UtteranceRecord>,
    pub buckets: Vec<BucketSummary>,
    pub global_mean_db: f64,
}

/// Bucket index for an angle difference: left-closed intervals
/// [15i, 15(i+1)) with the final bucket closed at 180.
pub fn bucket_index(angle_deg: f64) -> Result<usize> {
    if !(0.0..=180.0).contains(&angle_deg) {
        return Err(Error::invalid(format!(
            "angle difference {angle_deg} deg outside [0, 180]"
        )));
    }
    Ok(((angle_deg / BUCKET_WIDTH_DEG) as usize).min(BUCKET_COUNT - 1))
}

/// Summarize records into the 12-bucket report. Requires at least one record
/// (a global mean of nothing is undefined) and every angle in [0, 180].
pub fn bucket_report(system: impl Into<String>, records: Vec<UtteranceRecord>) -> Result<MetricsReport> {
    if records.is_empty() {
        return Err(Error::invalid("bucket_report needs at least one record"));
    }
    let mut sums = vec![0.0f64; BUCKET_COUNT];
    let mut counts = vec![0usize; BUCKET_COUNT];
    for r in &records {
        let b = bucket_index(r.angle_difference_deg)?;
        sums[b] += r.si_snri_db;
        counts[b] += 1;
    }
    let buckets = (0..BUCKET_COUNT)
        .map(|i| BucketSummary {
            lo_deg: BUCKET_WIDTH_DEG * i as f64,
            hi_deg: BUCKET_WIDTH_DEG * (i + 1) as f64,
            count: counts[i],
            mean_si_snri_db: (counts[i] > 0).then(|| sums[i] / counts[i] as f64),
        })
        .collect();
    let global_mean_db =
        records.iter().map(|r| r.si_snri_db).sum::<f64>() / records.len() as f64;
    Ok(MetricsReport { system: system.into(), records, buckets, global_mean_db })
}

impl MetricsReport {
    /// Per-utterance CSV: id, angle, improvement, permutation (dash-joined).
    pub fn records_csv(&self) -> String {
        let mut out = String::from("utterance_id,angle_diff_deg,si_snri_db,permutation\n");
        for r in &self.records {
            let perm =
                r.permutation.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("-");
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.id, r.angle_difference_deg, r.si_snri_db, perm
            ));
        }
        out
    }
}

/// One utterance ready for evaluation, in memory.
#[derive(Debug, Clone)]
pub struct EvalSample {
    pub id: String,
    pub mixture: Vec<Vec<f64>>,
    pub references: Vec<Vec<f64>>,
    pub angle_difference_deg: f64,
}

/// Run `separate` over every sample and report. The closure maps a
/// multichannel mixture to K estimates; channel 0 is the improvement
/// baseline.
pub fn evaluate_samples<F>(
    system: impl Into<String>,
    mut separate: F,
    samples: &[EvalSample],
    zero_mean: bool,
) -> Result<MetricsReport>
where
    F: FnMut(&EvalSample) -> Result<Vec<Vec<f64>>>,
{
    let mut records = Vec::with_capacity(samples.len());
    for sample in samples {
        if sample.mixture.is_empty() {
            return Err(Error::invalid(format!("sample {}: empty mixture", sample.id)));
        }
        let estimates = separate(sample)?;
        let scored = si_snri(&sample.mixture[0], &estimates, &sample.references, zero_mean)?;
        records.push(UtteranceRecord {
            id: sample.id.clone(),
            si_snri_db: scored.mean_db,
            permutation: scored.permutation,
            angle_difference_deg: sample.angle_difference_deg,
        });
    }
    bucket_report(system, records)
}

/// Reports for several systems over the identical utterance list, aligned
/// for side-by-side rendering.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub systems: Vec<MetricsReport>,
}

/// Align system reports; every report must cover the same utterances in the
/// same order (same manifest).
pub fn compare_systems(systems: Vec<MetricsReport>) -> Result<Comparison> {
    let first = systems
        .first()
        .ok_or_else(|| Error::invalid("compare_systems needs at least one system"))?;
    for other in &systems[1..] {
        let same = other.records.len() == first.records.len()
            && other
                .records
                .iter()
                .zip(&first.records)
                .all(|(a, b)| a.id == b.id && a.angle_difference_deg == b.angle_difference_deg);
        if !same {
            return Err(Error::invalid(format!(
                "system {:?} was evaluated on a different utterance set than {:?}",
                other.system, first.system
            )));
        }
    }
    Ok(Comparison { systems })
}

impl Comparison {
    /// Fixed-width table: one row for the global mean and one per bucket.
    pub fn text_table(&self) -> String {
        let name_width = 18;
        let col_width = self
            .systems
            .iter()
            .map(|s| s.system.len().max(8) + 2)
            .collect::<Vec<_>>();
        let mut out = String::new();
        out.push_str(&format!("{:<name_width$}", "si-snri (dB)"));
        for (s, w) in self.systems.iter().zip(&col_width) {
            out.push_str(&format!("{:>w$}", s.system, w = w));
        }
        out.push('\n');
        out.push_str(&format!("{:<name_width$}", "global mean"));
        for (s, w) in self.systems.iter().zip(&col_width) {
            out.push_str(&format!("{:>w$.2}", s.global_mean_db, w = w));
        }
        out.push('\n');
        for i in 0..BUCKET_COUNT {
            let b = &self.systems[0].buckets[i];
            let closing = if i + 1 == BUCKET_COUNT { ']' } else { ')' };
            let label = format!(
                "[{:.0},{:.0}{} n={}",
                b.lo_deg, b.hi_deg, closing, b.count
            );
            out.push_str(&format!("{label:<name_width$}"));
            for (s, w) in self.systems.iter().zip(&col_width) {
                match s.buckets[i].mean_si_snri_db {
                    Some(m) => out.push_str(&format!("{m:>w$.2}", w = w)),
                    None => out.push_str(&format!("{:>w$}", "-", w = w)),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Summary CSV with one column per system.
    pub fn csv(&self) -> String {
        let mut out = String::from("bucket_lo_deg,bucket_hi_deg,count");
        for s in &self.systems {
            out.push_str(&format!(",{}", s.system));
        }
        out.push('\n');
        out.push_str(&format!("global,,{}", self.systems[0].records.len()));
        for s in &self.systems {
            out.push_str(&format!(",{}", s.global_mean_db));
        }
        out.push('\n');
        for i in 0..BUCKET_COUNT {
            let b = &self.systems[0].buckets[i];
            out.push_str(&format!("{},{},{}", b.lo_deg, b.hi_deg, b.count));
            for s in &self.systems {
                match s.buckets[i].mean_si_snri_db {
                    Some(m) => out.push_str(&format!(",{m}")),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}
