//! Dense row-major tensors over `f32`/`f64`.
//!
//! `Tensor` is plain data: a shape plus a contiguous element buffer. Gradient
//! bookkeeping lives in [`crate::graph`]; checkpoints, waveforms and optimizer
//! state all use bare tensors. 32-bit is the training precision, 64-bit is
//! used for synthesis and gradient verification.

use crate::error::{Error, Result};
use rand_chacha::ChaCha8Rng;

/// Element type for all numeric code: `f32` (training) or `f64` (verification).
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64_(v: f64) -> Self;
    fn to_f64_(self) -> f64;
}

impl Real for f32 {
    fn from_f64_(v: f64) -> Self {
        v as f32
    }
    fn to_f64_(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64_(v: f64) -> Self {
        v
    }
    fn to_f64_(self) -> f64 {
        self
    }
}

/// Dense row-major array. A `[c, t]` tensor stores row `c` contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    /// Builds a tensor, checking that `data` matches the shape product.
    /// In debug builds the elements are also checked for NaN/Inf.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!("zero-sized dimension in shape {shape:?}")));
        }
        if numel != data.len() {
            return Err(Error::invalid(format!(
                "shape {shape:?} implies {numel} elements, got {}",
                data.len()
            )));
        }
        let t = Tensor { shape, data };
        t.debug_check_finite("Tensor::new")?;
        Ok(t)
    }

    /// Unchecked construction for internal hot paths; `data.len()` must equal
    /// the shape product.
    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: vec![T::zero(); numel] }
    }

    pub fn full(shape: Vec<usize>, value: T) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: vec![value; numel] }
    }

    pub fn scalar(value: T) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn from_slice(data: &[T]) -> Self {
        Self::from_vec(data.to_vec())
    }

    /// 2-D tensor from rows given as a flat slice of length `rows * cols`.
    pub fn matrix(rows: usize, cols: usize, data: &[T]) -> Result<Self> {
        Self::new(vec![rows, cols], data.to_vec())
    }

    /// Standard-normal samples via Box-Muller on the seeded stream, scaled by `std`.
    pub fn randn(shape: Vec<usize>, std: T, rng: &mut ChaCha8Rng) -> Self {
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        while data.len() < numel {
            let (a, b) = gauss_pair(rng);
            data.push(T::from_f64_(a) * std);
            if data.len() < numel {
                data.push(T::from_f64_(b) * std);
            }
        }
        Tensor { shape, data }
    }

    /// Uniform samples on `[-limit, limit)`.
    pub fn rand_uniform(shape: Vec<usize>, limit: T, rng: &mut ChaCha8Rng) -> Self {
        use rand::Rng;
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| {
                let u: f64 = rng.gen_range(-1.0..1.0);
                T::from_f64_(u) * limit
            })
            .collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn item(&self) -> T {
        debug_assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    /// Rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        debug_assert_eq!(self.ndim(), 2);
        self.shape[0]
    }

    /// Columns of a 2-D tensor.
    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.ndim(), 2);
        self.shape[1]
    }

    pub fn at2(&self, r: usize, c: usize) -> T {
        self.data[r * self.shape[1] + c]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64_(v.to_f64_())).collect(),
        }
    }

    /// NaN/Inf scan, active in debug builds only.
    pub fn debug_check_finite(&self, context: &str) -> Result<()> {
        if cfg!(debug_assertions) {
            if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{context} (element {pos})")));
            }
        }
        Ok(())
    }
}

fn gauss_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    use rand::Rng;
    // Box-Muller; reject u1 == 0 so ln stays finite.
    let mut u1: f64 = rng.gen();
    while u1 <= f64::MIN_POSITIVE {
        u1 = rng.gen();
    }
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    (r * theta.cos(), r * theta.sin())
}
