use serde::{Deserialize, Serialize};

use super::scalar::{c, Scalar};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

impl AdamWConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamWConfig { lr, ..Self::default() }
    }
}

/// Adam with decoupled weight decay and bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamW<T> {
    pub fn new<'a>(config: AdamWConfig, params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let (m, v) = params.into_iter().map(|p| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape()))).unzip();
        AdamW { config, m, v, t: 0 }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::shape(
                "adamw",
                format!("{} params, {} grads, {} optimizer slots", params.len(), grads.len(), self.m.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[i].shape() {
                return Err(Error::shape(
                    "adamw",
                    format!("param {i} shape {:?}, grad {:?}, state {:?}", p.shape(), g.shape(), self.m[i].shape()),
                ));
            }
        }
        if self.config.lr < 0.0 {
            return Err(Error::invalid("learning rate must be non-negative"));
        }
        self.t += 1;
        let cfg = self.config;
        let lr = c::<T>(cfg.lr);
        let b1 = c::<T>(cfg.beta1);
        let b2 = c::<T>(cfg.beta2);
        let eps = c::<T>(cfg.eps);
        let decay = T::one() - c::<T>(cfg.lr * cfg.weight_decay);
        let bc1 = c::<T>(1.0 - cfg.beta1.powi(self.t as i32));
        let bc2 = c::<T>(1.0 - cfg.beta2.powi(self.t as i32));
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = b1 * *mv + (T::one() - b1) * gv;
                *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv = *pv * decay - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = Tensor::<f64>::row_vector(vec![0.5, -2.0]);
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.0, ..AdamWConfig::with_lr(0.1) }, [&p]);
        let g = Tensor::zeros(&[1, 2]);
        opt.step(&mut [&mut p], &[g]).unwrap();
        assert_eq!(p.data(), &[0.5, -2.0]);
        assert_eq!(opt.t, 1);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = Tensor::<f64>::scalar(1.0);
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.0, ..AdamWConfig::with_lr(0.1) }, [&p]);
        opt.step(&mut [&mut p], &[Tensor::scalar(1.0)]).unwrap();
        // m̂ = 1, v̂ = 1
        let expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8));
        assert!((p.item() - expected).abs() < 1e-15);
        assert!((p.item() - 0.9).abs() < 1e-8);
    }

    #[test]
    fn decay_shrinks_by_lr_times_wd() {
        let mut p = Tensor::<f64>::row_vector(vec![2.0, -4.0]);
        let cfg = AdamWConfig { lr: 0.1, weight_decay: 0.5, ..AdamWConfig::default() };
        let mut opt = AdamW::new(cfg, [&p]);
        opt.step(&mut [&mut p], &[Tensor::zeros(&[1, 2])]).unwrap();
        assert!((p.data()[0] - 2.0 * 0.95).abs() < 1e-12);
        assert!((p.data()[1] + 4.0 * 0.95).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Tensor::<f32>::row_vector(vec![1.0, 2.0]);
        let mut opt = AdamW::new(AdamWConfig::default(), [&p]);
        let err = opt.step(&mut [&mut p], &[Tensor::zeros(&[2, 1])]).unwrap_err();
        assert!(matches!(err, Error::Shape { op: "adamw", .. }));
    }
}
