//! Training: uPIT objective over random crops, Adam with early stopping,
//! and checkpoint expansion across channel counts ([`cstl`]).
//!
//! One Adam step consumes one shuffled mini-batch; the batch loss is the
//! mean of per-utterance PIT losses, realized by scaling each utterance's
//! loss node by `1/batch_len` and summing gradients across the batch's
//! per-utterance graphs. Validation runs on full (uncropped) utterances
//! with the plain clamped loss. Everything is driven by a single seeded
//! RNG, so a fixed seed reproduces the loss history bit for bit.

pub mod cstl;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::loss::{pit_loss, pit_loss_node, DEFAULT_CLAMP_DB};
use crate::model::{forward_graph, separate, ModelConfig, ParameterSet};
use crate::optim::{Adam, AdamConfig};
use crate::tensor::{Real, Tensor};

/// One training or validation utterance: `M` mixture channels plus the `K`
/// reference source images at the first microphone, all equal length.
#[derive(Debug, Clone)]
pub struct Sample<T> {
    pub mixture: Vec<Vec<T>>,
    pub references: Vec<Vec<T>>,
}

impl<T: Real> Sample<T> {
    pub fn duration(&self) -> usize {
        self.mixture.first().map_or(0, Vec::len)
    }

    fn validate(&self, m: usize, k: usize) -> Result<()> {
        if self.mixture.len() != m {
            return Err(Error::invalid(format!(
                "sample has {} mixture channels, expected {m}",
                self.mixture.len()
            )));
        }
        if self.references.len() != k {
            return Err(Error::invalid(format!(
                "sample has {} references, expected {k}",
                self.references.len()
            )));
        }
        let n = self.duration();
        if n == 0 {
            return Err(Error::invalid("empty sample"));
        }
        if self.mixture.iter().chain(&self.references).any(|w| w.len() != n) {
            return Err(Error::invalid("sample waveforms differ in length"));
        }
        Ok(())
    }
}

/// Optimization hyperparameters. `segment_seconds * sample_rate` is the
/// training crop length; zero seconds disables cropping.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many consecutive epochs without a new best
    /// validation loss.
    pub patience_epochs: usize,
    pub segment_seconds: f64,
    pub sample_rate: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub zero_mean: bool,
    pub clamp_db: f64,
    /// Optional hard cap on total Adam steps (checked at batch boundaries).
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 4,
            max_epochs: 100,
            patience_epochs: 6,
            segment_seconds: 4.0,
            sample_rate: 8000,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            zero_mean: true,
            clamp_db: DEFAULT_CLAMP_DB,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn crop_len(&self) -> usize {
        (self.segment_seconds * self.sample_rate as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("batch_size and max_epochs must be positive"));
        }
        if self.patience_epochs == 0 {
            return Err(Error::invalid("patience_epochs must be at least 1"));
        }
        if self.segment_seconds < 0.0 {
            return Err(Error::invalid("segment_seconds must be non-negative"));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.epsilon,
        }
    }
}

/// Strict-improvement early stopping: `observe` returns true when the epoch
/// sets a new best, and [`EarlyStopping::should_stop`] flips once `patience`
/// consecutive epochs have failed to.
#[derive(Debug)]
pub struct EarlyStopping {
    patience: usize,
    best_loss: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best_loss: f64::INFINITY, best_epoch: 0, stale: 0 }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = epoch;
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }
}

/// Uniform random crop of `crop_len` samples, taken at the same offset in
/// every channel and reference; shorter samples are zero-padded at the end
/// (without consuming randomness).
pub fn compute_crop<T: Real>(
    sample: &Sample<T>,
    crop_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Sample<T>> {
    if crop_len == 0 {
        return Err(Error::invalid("crop length must be positive"));
    }
    let n = sample.duration();
    let window = |w: &Vec<T>, start: usize| -> Vec<T> {
        let mut out = w[start..n.min(start + crop_len)].to_vec();
        out.resize(crop_len, T::zero());
        out
    };
    let start = if n > crop_len { rng.gen_range(0..=n - crop_len) } else { 0 };
    Ok(Sample {
        mixture: sample.mixture.iter().map(|w| window(w, start)).collect(),
        references: sample.references.iter().map(|w| window(w, start)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

/// Loss history in comma-separated form with a header row.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,valid_loss\n");
    for r in history {
        out.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.valid_loss));
    }
    out
}

pub struct TrainOutcome<T> {
    /// Parameters from the best-validation epoch (not the last one).
    pub best_params: ParameterSet<T>,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub history: Vec<EpochRecord>,
    pub adam_steps: u64,
    pub stopped_early: bool,
}

/// Mean plain PIT loss of the model over a set of full utterances.
pub fn mean_pit_loss<T: Real>(
    model_cfg: &ModelConfig,
    params: &ParameterSet<T>,
    set: &[Sample<T>],
    zero_mean: bool,
    clamp_db: f64,
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    let mut sum = 0.0;
    for s in set {
        let est = separate(&s.mixture, params, model_cfg)?;
        let (l, _) = pit_loss(&est, &s.references, zero_mean, clamp_db)?;
        sum += l;
    }
    Ok(sum / set.len() as f64)
}

/// Trains `initial` on `train_set`, validating each epoch on `valid_set`,
/// and returns the best checkpoint plus the per-epoch loss history.
/// `progress` fires once per completed epoch.
pub fn train<T: Real>(
    model_cfg: &ModelConfig,
    initial: ParameterSet<T>,
    train_set: &[Sample<T>],
    valid_set: &[Sample<T>],
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    model_cfg.validate()?;
    initial.matches_config(model_cfg)?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    for s in train_set.iter().chain(valid_set) {
        s.validate(model_cfg.m, model_cfg.k)?;
    }

    let crop = cfg.crop_len();
    let mut params = initial;
    let mut adam = Adam::new(cfg.adam(), params.tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stopper = EarlyStopping::new(cfg.patience_epochs);
    let mut best_params = params.clone();
    let mut history = Vec::new();
    let mut out_of_steps = false;

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            if cfg.max_steps.is_some_and(|cap| adam.step_count() >= cap) {
                out_of_steps = true;
                break;
            }
            let mut grads: Vec<Option<Tensor<T>>> = vec![None; params.len()];
            for &si in batch {
                let sample = if crop > 0 {
                    compute_crop(&train_set[si], crop, &mut rng)?
                } else {
                    train_set[si].clone()
                };
                let g = Graph::new();
                let fwd = forward_graph(&g, &params, model_cfg, &sample.mixture, true)?;
                let refs: Vec<_> =
                    sample.references.iter().map(|r| g.constant(Tensor::from_slice(r))).collect();
                let (loss, _) = pit_loss_node(&g, &fwd.estimates, &refs, cfg.zero_mean)?;
                let value = g.item(loss).to_f64_();
                if !value.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch: batch_idx });
                }
                loss_sum += value;
                seen += 1;
                g.backward(g.scale(loss, 1.0 / batch.len() as f64))?;
                for (acc, &pv) in grads.iter_mut().zip(&fwd.param_vars) {
                    if let Some(gt) = g.grad(pv) {
                        match acc {
                            Some(a) => {
                                for (x, y) in a.data_mut().iter_mut().zip(gt.data()) {
                                    *x = *x + *y;
                                }
                            }
                            None => *acc = Some(gt),
                        }
                    }
                }
            }
            adam.step(params.tensors_mut(), &grads)?;
        }
        if seen == 0 {
            break; // step budget consumed before this epoch ran anything
        }

        let valid_loss = mean_pit_loss(model_cfg, &params, valid_set, cfg.zero_mean, cfg.clamp_db)?;
        if !valid_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        let record =
            EpochRecord { epoch, train_loss: loss_sum / seen as f64, valid_loss };
        progress(&record);
        history.push(record);

        if stopper.observe(epoch, valid_loss) {
            best_params = params.clone();
        }
        if stopper.should_stop() || out_of_steps {
            break;
        }
    }

    Ok(TrainOutcome {
        best_params,
        best_epoch: stopper.best_epoch(),
        best_valid_loss: stopper.best_loss(),
        adam_steps: adam.step_count(),
        stopped_early: stopper.should_stop(),
        history,
    })
}
