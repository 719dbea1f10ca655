//! Named, ordered parameter storage.
//!
//! Tensor names and order are canonical: checkpoints, optimizers and the
//! transfer-learning expansion all address parameters by these names, and
//! iteration order is stable so seeded initialization and serialization are
//! reproducible byte for byte.
//!
//! Naming scheme (one entry per line of [`shape_table`]):
//! `encoder.u`, `decoder.v`, `bnl.gln.{gamma,beta}`, `bnl.conv.{w,b}`,
//! `tcn.<i>.{in,dw,res,skip}.{w,b}`, `tcn.<i>.gln{1,2}.{gamma,beta}`,
//! `tcn.<i>.prelu{1,2}`, `me.<k>.prelu`, `me.<k>.conv.{w,b}`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::tensor::{Real, Tensor};

/// Ordered name → tensor map backed by parallel vectors.
#[derive(Debug, Clone)]
pub struct ParameterSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

/// Canonical (name, shape) listing for a configuration.
pub fn shape_table(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (n, b, h, p, sc) = (cfg.n, cfg.b, cfg.h, cfg.p, cfg.sc());
    let mut t: Vec<(String, Vec<usize>)> = vec![
        ("encoder.u".into(), vec![n, cfg.l]),
        ("decoder.v".into(), vec![cfg.l, n]),
        ("bnl.gln.gamma".into(), vec![cfg.bnl_in()]),
        ("bnl.gln.beta".into(), vec![cfg.bnl_in()]),
        ("bnl.conv.w".into(), vec![b, cfg.bnl_in(), 1]),
        ("bnl.conv.b".into(), vec![b]),
    ];
    for i in 0..cfg.r * cfg.x {
        t.push((format!("tcn.{i}.in.w"), vec![h, b, 1]));
        t.push((format!("tcn.{i}.in.b"), vec![h]));
        t.push((format!("tcn.{i}.prelu1"), vec![1]));
        t.push((format!("tcn.{i}.gln1.gamma"), vec![h]));
        t.push((format!("tcn.{i}.gln1.beta"), vec![h]));
        t.push((format!("tcn.{i}.dw.w"), vec![h, 1, p]));
        t.push((format!("tcn.{i}.dw.b"), vec![h]));
        t.push((format!("tcn.{i}.prelu2"), vec![1]));
        t.push((format!("tcn.{i}.gln2.gamma"), vec![h]));
        t.push((format!("tcn.{i}.gln2.beta"), vec![h]));
        t.push((format!("tcn.{i}.res.w"), vec![b, h, 1]));
        t.push((format!("tcn.{i}.res.b"), vec![b]));
        t.push((format!("tcn.{i}.skip.w"), vec![sc, h, 1]));
        t.push((format!("tcn.{i}.skip.b"), vec![sc]));
    }
    for k in 0..cfg.k {
        t.push((format!("me.{k}.prelu"), vec![1]));
        t.push((format!("me.{k}.conv.w"), vec![n, cfg.me_in(), 1]));
        t.push((format!("me.{k}.conv.b"), vec![n]));
    }
    t
}

impl<T: Real> ParameterSet<T> {
    /// Seeded random initialization: weights are Gaussian with std
    /// 1/sqrt(fan_in), biases zero, norm gains one, PReLU slopes 0.25.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, shape) in shape_table(cfg) {
            let tensor = if name.ends_with(".gamma") {
                Tensor::full(shape, T::one())
            } else if name.ends_with(".beta") || name.ends_with(".b") {
                Tensor::zeros(shape)
            } else if name.contains("prelu") {
                Tensor::full(shape, T::from_f64_(0.25))
            } else {
                let fan_in: usize = shape[1..].iter().product();
                Tensor::randn(shape, T::from_f64_(1.0 / (fan_in as f64).sqrt()), &mut rng)
            };
            names.push(name);
            tensors.push(tensor);
        }
        Ok(ParameterSet { names, tensors })
    }

    /// Builds from explicit entries (checkpoint load), rejecting duplicates.
    pub fn from_entries(entries: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut names = Vec::with_capacity(entries.len());
        let mut tensors = Vec::with_capacity(entries.len());
        for (name, tensor) in entries {
            if names.contains(&name) {
                return Err(Error::invalid(format!("duplicate parameter name {name:?}")));
            }
            names.push(name);
            tensors.push(tensor);
        }
        Ok(ParameterSet { names, tensors })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index_of(name).map(move |i| &mut self.tensors[i])
    }

    pub fn total_elements(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Checks names, order and shapes against the canonical table for `cfg`.
    pub fn matches_config(&self, cfg: &ModelConfig) -> Result<()> {
        let table = shape_table(cfg);
        if table.len() != self.len() {
            return Err(Error::invalid(format!(
                "parameter set has {} tensors, config expects {}",
                self.len(),
                table.len()
            )));
        }
        for ((name, shape), (have_name, have)) in table.iter().zip(self.iter()) {
            if name != have_name {
                return Err(Error::invalid(format!(
                    "parameter order mismatch: expected {name:?}, found {have_name:?}"
                )));
            }
            if have.shape() != shape.as_slice() {
                return Err(Error::invalid(format!(
                    "parameter {name:?} has shape {:?}, config expects {shape:?}",
                    have.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ParameterSet<U> {
        ParameterSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }
}
