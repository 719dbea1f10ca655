//! Browser bindings for the separation toolkit. One [`Demo`] instance holds
//! a simulated scene and a miniature separator that can be trained in small
//! step bursts, so the page stays responsive while the loss falls live.
//!
//! Everything runs in 32-bit here: the demo model is tiny and `f32` keeps
//! the wasm heap small.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use mcsep_core::graph::{Graph, Var};
use mcsep_core::loss::pit_loss_node;
use mcsep_core::metrics::si_snri;
use mcsep_core::model::{forward_graph, separate, ModelConfig, ParameterSet, Variant};
use mcsep_core::optim::{Adam, AdamConfig};
use mcsep_core::spatial::corpus::{generate_sample, CorpusConfig, SyntheticSpeech};
use mcsep_core::spatial::geometry::sample_geometry;
use mcsep_core::spatial::ism::{schroeder_t60, simulate_rir};
use mcsep_core::spatial::mixer::MixtureSample;
use mcsep_core::tensor::Tensor;
use mcsep_core::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DEMO_SECONDS: f64 = 1.0;
const FS: u32 = 8_000;

/// Scene facts serialized to the page after `make_mixture`.
#[derive(Serialize)]
struct SceneInfo {
    room_m: [f64; 3],
    mics: Vec<[f64; 3]>,
    speakers: Vec<[f64; 3]>,
    t60_target_s: f64,
    t60_measured_s: f64,
    angle_difference_deg: f64,
    snr_db: f64,
    samples: usize,
}

/// Progress facts serialized after each training burst.
#[derive(Serialize)]
struct TrainInfo {
    steps: u64,
    loss: f64,
    si_snri_db: f64,
    parameters: usize,
}

struct Trainer {
    cfg: ModelConfig,
    params: ParameterSet<f32>,
    adam: Adam<f32>,
}

fn demo_model() -> ModelConfig {
    ModelConfig { variant: Variant::Single, m: 1, k: 2, l: 16, n: 16, b: 8, h: 16, p: 3, x: 3, r: 1 }
}

// `String` keeps the exported API testable on native targets: it only turns
// into a `JsValue` at the JS boundary, so error paths never touch wasm externs.
fn js(e: Error) -> String {
    e.to_string()
}

#[wasm_bindgen]
pub struct Demo {
    scene_seed: u64,
    reverberant: bool,
    sample: Option<MixtureSample>,
    rirs: Vec<Vec<Vec<f64>>>,
    trainer: Option<Trainer>,
}

impl Default for Demo {
    fn default() -> Self {
        Self::new()
    }
}

fn to_f32(x: &[f64]) -> Vec<f32> {
    x.iter().map(|&v| v as f32).collect()
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Demo {
        Demo { scene_seed: 0, reverberant: false, sample: None, rirs: Vec::new(), trainer: None }
    }

    /// Samples a two-speaker scene, simulates its impulse responses and mixes
    /// a one-second utterance pair. Returns scene facts as JSON.
    pub fn make_mixture(&mut self, seed: u32, reverberant: bool) -> Result<String, String> {
        let info = self.build_sample(u64::from(seed), reverberant).map_err(js)?;
        self.trainer = None;
        serde_json::to_string(&info).map_err(|e| e.to_string())
    }

    /// Mixture at the reference microphone.
    pub fn mixture(&self) -> Result<Vec<f32>, String> {
        Ok(to_f32(&self.current().map_err(js)?.mixture[0]))
    }

    /// Reverberant image of speaker `k` at the reference microphone.
    pub fn reference(&self, k: usize) -> Result<Vec<f32>, String> {
        let s = self.current().map_err(js)?;
        s.references
            .get(k)
            .map(|r| to_f32(r))
            .ok_or_else(|| format!("no reference {k}"))
    }

    /// Impulse response speaker `k` → reference microphone.
    pub fn rir(&self, k: usize) -> Result<Vec<f32>, String> {
        self.rirs
            .first()
            .and_then(|mics| mics.get(k))
            .map(|h| to_f32(h))
            .ok_or_else(|| format!("no impulse response {k}; call make_mixture"))
    }

    /// Fresh miniature separator (random weights) bound to this mixture.
    pub fn init_trainer(&mut self, seed: u32) -> Result<String, String> {
        self.current().map_err(js)?;
        let cfg = demo_model();
        let params: ParameterSet<f32> =
            ParameterSet::init(&cfg, u64::from(seed)).map_err(js)?;
        let adam = Adam::new(AdamConfig::with_lr(2e-3), params.tensors());
        self.trainer = Some(Trainer { cfg, params, adam });
        self.progress().map_err(js)
    }

    /// Runs `n` Adam steps of PIT training on the current mixture and
    /// returns updated progress as JSON.
    pub fn train_steps(&mut self, n: u32) -> Result<String, String> {
        for _ in 0..n {
            self.one_step().map_err(js)?;
        }
        self.progress().map_err(js)
    }

    /// Current model's estimate of speaker `k`.
    pub fn estimate(&self, k: usize) -> Result<Vec<f32>, String> {
        let (sample, trainer) = self.both().map_err(js)?;
        let mixture: Vec<Vec<f32>> = vec![to_f32(&sample.mixture[0])];
        let est = separate(&mixture, &trainer.params, &trainer.cfg).map_err(js)?;
        est.into_iter()
            .nth(k)
            .ok_or_else(|| format!("no estimate {k}"))
    }

    pub fn sample_rate(&self) -> u32 {
        FS
    }
}

impl Demo {
    fn current(&self) -> Result<&MixtureSample> {
        self.sample.as_ref().ok_or_else(|| Error::invalid("call make_mixture first"))
    }

    fn both(&self) -> Result<(&MixtureSample, &Trainer)> {
        Ok((
            self.current()?,
            self.trainer.as_ref().ok_or_else(|| Error::invalid("call init_trainer first"))?,
        ))
    }

    fn build_sample(&mut self, seed: u64, reverberant: bool) -> Result<SceneInfo> {
        let cfg = CorpusConfig {
            duration_seconds: DEMO_SECONDS,
            ..CorpusConfig::new(1, 1, reverberant, seed)
        };
        let pool = SyntheticSpeech::train_pool(8);
        let sample = generate_sample(&cfg, &pool, seed)?;
        // the RIR set is re-derived so the page can plot it
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = sample_geometry(&mut rng, cfg.mics, cfg.speakers, reverberant)?;
        let rirs = simulate_rir(&scene, FS as usize)?;
        let t60_measured = if reverberant {
            schroeder_t60(&rirs.responses[0][0], FS as usize)?
        } else {
            0.0
        };
        let info = SceneInfo {
            room_m: scene.room,
            mics: scene.mics.clone(),
            speakers: scene.speakers.clone(),
            t60_target_s: scene.t60,
            t60_measured_s: t60_measured,
            angle_difference_deg: sample.angle_difference_deg,
            snr_db: sample.snr_db,
            samples: sample.mixture[0].len(),
        };
        self.scene_seed = seed;
        self.reverberant = reverberant;
        self.sample = Some(sample);
        self.rirs = rirs.responses;
        Ok(info)
    }

    fn one_step(&mut self) -> Result<()> {
        let sample = self.sample.as_ref().ok_or_else(|| Error::invalid("call make_mixture first"))?;
        let trainer =
            self.trainer.as_mut().ok_or_else(|| Error::invalid("call init_trainer first"))?;
        let mixture: Vec<Vec<f32>> = vec![to_f32(&sample.mixture[0])];
        let g: Graph<f32> = Graph::new();
        let fwd = forward_graph(&g, &trainer.params, &trainer.cfg, &mixture, true)?;
        let refs: Vec<Var> = sample
            .references
            .iter()
            .map(|r| g.constant(Tensor::from_slice(&to_f32(r))))
            .collect();
        let (loss, _) = pit_loss_node(&g, &fwd.estimates, &refs, true)?;
        g.backward(loss)?;
        let grads: Vec<Option<Tensor<f32>>> =
            fwd.param_vars.iter().map(|&v| g.grad(v)).collect();
        trainer.adam.step(trainer.params.tensors_mut(), &grads)
    }

    fn progress(&self) -> Result<String> {
        let (sample, trainer) = self.both()?;
        let mixture: Vec<Vec<f32>> = vec![to_f32(&sample.mixture[0])];
        let g: Graph<f32> = Graph::new();
        let fwd = forward_graph(&g, &trainer.params, &trainer.cfg, &mixture, false)?;
        let refs: Vec<Var> = sample
            .references
            .iter()
            .map(|r| g.constant(Tensor::from_slice(&to_f32(r))))
            .collect();
        let (loss, _) = pit_loss_node(&g, &fwd.estimates, &refs, true)?;
        let estimates: Vec<Vec<f64>> = fwd
            .estimates
            .iter()
            .map(|&e| g.value(e).data().iter().map(|&v| f64::from(v)).collect())
            .collect();
        let scored = si_snri(&sample.mixture[0], &estimates, &sample.references, true)?;
        let info = TrainInfo {
            steps: trainer.adam.step_count(),
            loss: f64::from(g.item(loss)),
            si_snri_db: scored.mean_db,
            parameters: trainer.params.total_elements(),
        };
        serde_json::to_string(&info).map_err(|e| Error::format(e.to_string()))
    }
}
