use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, AdamW, AdamWConfig, Tape, Tensor};
use crate::seed::substream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig { hidden: 200, lr: 1e-3, weight_decay: 0.01, batch_size: 64, max_epochs: 200, patience: 10 }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("mlp: hidden, batch_size and max_epochs must be positive"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid(format!("mlp: lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

/// One ReLU hidden layer and a sigmoid output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    pub w1: Tensor<f32>,
    pub b1: Tensor<f32>,
    pub w2: Tensor<f32>,
    pub b2: Tensor<f32>,
}

/// Row-major feature matrix with binary targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub x: Vec<f32>,
    pub y: Vec<f32>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            dim: self.dim,
            x: rows.iter().flat_map(|&r| self.x[r * self.dim..(r + 1) * self.dim].iter().copied()).collect(),
            y: rows.iter().map(|&r| self.y[r]).collect(),
        }
    }
}

/// Outcome of [`MlpClassifier::fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

impl MlpClassifier {
    pub fn new(input: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = substream(seed, "mlp/init");
        let s1 = (2.0 / input as f64).sqrt();
        let s2 = (1.0 / hidden as f64).sqrt();
        MlpClassifier {
            w1: Tensor::randn(&[input, hidden], s1, &mut rng),
            b1: Tensor::zeros(&[1, hidden]),
            w2: Tensor::randn(&[hidden, 1], s2, &mut rng),
            b2: Tensor::zeros(&[1, 1]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    fn params(&self) -> [&Tensor<f32>; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    /// Mean BCE and gradients on `data`.
    fn loss_and_grads(&self, data: &Dataset, grads: bool) -> Result<(f64, Vec<Tensor<f32>>)> {
        let mut tape = Tape::new();
        let vars: Vec<_> = self.params().into_iter().map(|t| tape.param(t.clone())).collect();
        let x = tape.constant(Tensor::matrix(data.len(), data.dim, data.x.clone())?);
        let h = tape.matmul(x, vars[0])?;
        let h = tape.add_row(h, vars[1])?;
        let h = tape.relu(h);
        let o = tape.matmul(h, vars[2])?;
        let o = tape.add_row(o, vars[3])?;
        let loss = tape.sigmoid_bce(o, &data.y)?;
        let value = f64::from(tape.value(loss).item());
        if !value.is_finite() {
            return Err(Error::Numeric(format!("mlp loss is {value}")));
        }
        if !grads {
            return Ok((value, Vec::new()));
        }
        let g = tape.backward(loss)?;
        Ok((value, vars.iter().zip(self.params()).map(|(&v, t)| g.get_or_zeros(v, t.shape())).collect()))
    }

    pub fn loss(&self, data: &Dataset) -> Result<f64> {
        Ok(self.loss_and_grads(data, false)?.0)
    }

    /// Minibatch AdamW with early stopping on validation loss; the weights of
    /// the best validation epoch are restored.
    pub fn fit(&mut self, train: &Dataset, val: &Dataset, cfg: &MlpConfig, seed: u64) -> Result<FitTrace> {
        cfg.validate()?;
        if train.dim != self.input_dim() || val.dim != self.input_dim() {
            return Err(Error::shape("mlp-fit", format!("features of dim {} for input dim {}", train.dim, self.input_dim())));
        }
        if train.is_empty() || val.is_empty() {
            return Err(Error::invalid("mlp: training and validation sets must be non-empty"));
        }
        let mut opt = AdamW::new(AdamWConfig { lr: cfg.lr, weight_decay: cfg.weight_decay, ..AdamWConfig::default() }, self.params());
        let mut best = (self.loss(val)?, 0, self.clone());
        let mut epochs_run = 0;
        for epoch in 1..=cfg.max_epochs {
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut substream(seed, &format!("mlp/shuffle/{epoch}")));
            for rows in order.chunks(cfg.batch_size) {
                let (_, g) = self.loss_and_grads(&train.select(rows), true)?;
                opt.step(&mut [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2], &g)?;
            }
            epochs_run = epoch;
            let v = self.loss(val)?;
            if v < best.0 {
                best = (v, epoch, self.clone());
            } else if epoch - best.1 >= cfg.patience {
                break;
            }
        }
        let (best_val_loss, best_epoch, state) = best;
        *self = state;
        Ok(FitTrace { epochs_run, best_epoch, best_val_loss })
    }

    /// Positive-class probabilities for each row of `x`.
    pub fn predict_proba(&self, x: &[f32]) -> Result<Vec<f64>> {
        let d = self.input_dim();
        if !x.len().is_multiple_of(d) {
            return Err(Error::shape("mlp-predict", format!("{} values are not rows of dim {d}", x.len())));
        }
        let hidden = self.w1.cols();
        let mut out = Vec::with_capacity(x.len() / d);
        let mut h = vec![0f32; hidden];
        for row in x.chunks_exact(d) {
            h.copy_from_slice(self.b1.data());
            for (i, &xi) in row.iter().enumerate() {
                for (hj, &w) in h.iter_mut().zip(self.w1.row(i)) {
                    *hj += xi * w;
                }
            }
            let logit: f32 = h.iter().zip(self.w2.data()).map(|(&a, &w)| a.max(0.0) * w).sum::<f32>() + self.b2.data()[0];
            out.push(f64::from(sigmoid(logit)));
        }
        Ok(out)
    }
}
