//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Default::default() }
    }
}

/// First/second moment estimates per parameter plus the step counter.
pub struct Adam<T> {
    cfg: AdamConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Real> Adam<T> {
    /// Moments start at zero with shapes mirroring `params`.
    pub fn new(cfg: AdamConfig, params: &[Tensor<T>]) -> Self {
        let m = params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        let v = params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        Adam { cfg, m, v, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over all parameters. `grads[i]` of `None` stands for a zero
    /// gradient (a parameter the loss did not touch); its moments still decay.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Option<Tensor<T>>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::invalid(format!(
                "adam: expected {} parameter/gradient tensors, got {}/{}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::from_f64_(self.cfg.beta1);
        let b2 = T::from_f64_(self.cfg.beta2);
        let one = T::one();
        // Bias correction folded into the step size: the update becomes
        // lr·m̂/(√v̂ + ε·√(1−β₂ᵗ)), identical to the textbook form up to the
        // rescaled ε.
        let corr = self.cfg.lr * (1.0 - self.cfg.beta2.powi(t)).sqrt() / (1.0 - self.cfg.beta1.powi(t));
        let corr = T::from_f64_(corr);
        let eps = T::from_f64_(self.cfg.eps);

        for (i, p) in params.iter_mut().enumerate() {
            if let Some(gr) = &grads[i] {
                if gr.shape() != p.shape() {
                    return Err(Error::invalid(format!(
                        "adam: gradient shape {:?} does not match parameter shape {:?}",
                        gr.shape(),
                        p.shape()
                    )));
                }
            }
            let md = self.m[i].data_mut();
            let vd = self.v[i].data_mut();
            let pd = p.data_mut();
            match &grads[i] {
                Some(gr) => {
                    for ((mv, vv), (pv, &g)) in
                        md.iter_mut().zip(vd.iter_mut()).zip(pd.iter_mut().zip(gr.data()))
                    {
                        *mv = b1 * *mv + (one - b1) * g;
                        *vv = b2 * *vv + (one - b2) * g * g;
                        *pv = *pv - corr * *mv / (vv.sqrt() + eps);
                    }
                }
                None => {
                    for ((mv, vv), pv) in md.iter_mut().zip(vd.iter_mut()).zip(pd.iter_mut()) {
                        *mv = b1 * *mv;
                        *vv = b2 * *vv;
                        *pv = *pv - corr * *mv / (vv.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![Tensor::<f64>::zeros(vec![3])];
        let mut opt = Adam::new(AdamConfig::with_lr(1e-3), &p);
        let g = vec![Some(Tensor::full(vec![3], 1.0))];
        opt.step(&mut p, &g).unwrap();
        for &v in p[0].data() {
            assert_abs_diff_eq!(v, -1e-3, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_gradient_from_fresh_state_leaves_parameters() {
        let mut p = vec![Tensor::<f64>::full(vec![2], 0.7)];
        let mut opt = Adam::new(AdamConfig::default(), &p);
        opt.step(&mut p, &[Some(Tensor::zeros(vec![2]))]).unwrap();
        opt.step(&mut p, &[None]).unwrap();
        assert_eq!(p[0].data(), &[0.7, 0.7]);
        assert_eq!(opt.step_count(), 2);
    }

    #[test]
    fn quadratic_descends_monotonically_after_burn_in() {
        let mut p = vec![Tensor::<f64>::scalar(0.0)];
        let mut opt = Adam::new(AdamConfig::with_lr(0.02), &p);
        let f = |x: f64| (x - 3.0) * (x - 3.0);
        let mut values = Vec::new();
        for _ in 0..100 {
            let x = p[0].item();
            let grad = 2.0 * (x - 3.0);
            opt.step(&mut p, &[Some(Tensor::scalar(grad))]).unwrap();
            values.push(f(p[0].item()));
        }
        for w in values[10..].windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "non-monotone after burn-in: {} -> {}", w[0], w[1]);
        }
        assert!(values[99] < values[9] / 2.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = vec![Tensor::<f64>::zeros(vec![3])];
        let mut opt = Adam::new(AdamConfig::default(), &p);
        assert!(opt.step(&mut p, &[Some(Tensor::zeros(vec![2]))]).is_err());
        assert!(opt.step(&mut p, &[]).is_err());
    }

    #[test]
    fn updates_are_bit_reproducible() {
        let run = || {
            let mut p = vec![Tensor::<f32>::full(vec![4], 0.25)];
            let mut opt = Adam::new(AdamConfig::default(), &p);
            for i in 0..20 {
                let g = Tensor::full(vec![4], 0.1 + 0.01 * i as f32);
                opt.step(&mut p, &[Some(g)]).unwrap();
            }
            p[0].data().iter().map(|v| v.to_bits()).collect::<Vec<u32>>()
        };
        assert_eq!(run(), run());
    }
}
