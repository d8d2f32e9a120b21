use std::path::Path;
use std::sync::mpsc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::checkpoint::save_checkpoint;
use super::infonce::infonce_on_tape;
use crate::encoder::{forward, Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::numerics::{AdamW, AdamWConfig, Axis, Scalar, Tape, Tensor};
use crate::seed::substream;
use crate::tokenizers::TokenSequence;

/// SMILES and IUPAC branches that share a projection width.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEncoder<T> {
    pub smiles: Encoder<T>,
    pub iupac: Encoder<T>,
}

impl<T: Scalar> DualEncoder<T> {
    pub fn new(smiles: EncoderConfig, iupac: EncoderConfig, seed: u64) -> Result<Self> {
        if smiles.d_proj != iupac.d_proj {
            return Err(Error::invalid(format!(
                "branches must share d_proj (smiles {}, iupac {})",
                smiles.d_proj, iupac.d_proj
            )));
        }
        Ok(DualEncoder {
            smiles: Encoder::new(smiles, &mut substream(seed, "init/smiles"))?,
            iupac: Encoder::new(iupac, &mut substream(seed, "init/iupac"))?,
        })
    }

    /// Every parameter, SMILES branch first, in canonical order.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v = self.smiles.weights.tensors();
        v.extend(self.iupac.weights.tensors());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = self.smiles.weights.tensors_mut();
        v.extend(self.iupac.weights.tensors_mut());
        v
    }

    pub fn cast<U: Scalar>(&self) -> DualEncoder<U> {
        DualEncoder { smiles: self.smiles.cast(), iupac: self.iupac.cast() }
    }
}

/// `N` aligned pairs; index `i` on both sides is the same molecule.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub rows: Vec<usize>,
    pub smiles: Vec<TokenSequence>,
    pub iupac: Vec<TokenSequence>,
}

impl PairBatch {
    pub fn new(smiles: Vec<TokenSequence>, iupac: Vec<TokenSequence>) -> Result<Self> {
        if smiles.is_empty() || smiles.len() != iupac.len() {
            return Err(Error::invalid(format!(
                "pair batch needs N >= 1 aligned pairs, got {} SMILES and {} IUPAC",
                smiles.len(),
                iupac.len()
            )));
        }
        Ok(PairBatch { rows: (0..smiles.len()).collect(), smiles, iupac })
    }

    pub fn len(&self) -> usize {
        self.smiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.smiles.is_empty()
    }
}

/// One tokenized training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairExample {
    pub smiles: TokenSequence,
    pub iupac: TokenSequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub tau: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Write a checkpoint every this many epochs (0: only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { tau: 0.07, lr: 1e-6, weight_decay: 0.01, batch_size: 16, epochs: 10, seed: 0, checkpoint_every: 1 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::invalid(format!("train config: tau must be positive, got {}", self.tau)));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid(format!("train config: lr must be a finite non-negative number, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("train config: batch_size must be positive"));
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig { lr: self.lr, weight_decay: self.weight_decay, ..AdamWConfig::default() }
    }
}

/// One row of the loss curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub epoch: usize,
    pub loss: f64,
    pub l_sl: f64,
    pub l_ip: f64,
}

pub fn loss_curve_csv(records: &[LossRecord]) -> String {
    let mut out = String::from("step,epoch,loss,l_sl,l_ip\n");
    for r in records {
        out.push_str(&format!("{},{},{},{},{}\n", r.step, r.epoch, r.loss, r.l_sl, r.l_ip));
    }
    out
}

/// Loss components and gradients (canonical order, SMILES branch first) for
/// one batch.
pub fn loss_and_grads<T: Scalar>(
    model: &DualEncoder<T>,
    batch: &PairBatch,
    tau: f64,
    dropout_seed: Option<(u64, u64)>,
) -> Result<((T, T, T), Vec<Tensor<T>>)> {
    let mut tape = Tape::new();
    let sv = model.smiles.weights.register(&mut tape, true);
    let iv = model.iupac.weights.register(&mut tape, true);
    let mut rng = dropout_seed.map(|(seed, step)| substream(seed, &format!("dropout/{step}")));
    let mut zs = Vec::with_capacity(batch.len());
    for seq in &batch.smiles {
        zs.push(forward(&mut tape, &sv, &model.smiles.config, seq, rng.as_mut())?.z);
    }
    let mut zi = Vec::with_capacity(batch.len());
    for seq in &batch.iupac {
        zi.push(forward(&mut tape, &iv, &model.iupac.config, seq, rng.as_mut())?.z);
    }
    let z_sl = tape.concat(&zs, Axis::Rows)?;
    let z_ip = tape.concat(&zi, Axis::Rows)?;
    let out = infonce_on_tape(&mut tape, z_sl, z_ip, tau)?;
    let losses = (tape.value(out.loss).item(), tape.value(out.l_sl).item(), tape.value(out.l_ip).item());
    if !losses.0.is_finite() {
        return Ok((losses, Vec::new()));
    }
    let grads = tape.backward(out.loss)?;
    let all = sv.all().iter().chain(iv.all());
    let tensors = model.tensors();
    let g = all.zip(tensors).map(|(&v, t)| grads.get_or_zeros(v, t.shape())).collect();
    Ok((losses, g))
}

/// Contrastive training state: model, optimizer and progress counters.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: DualEncoder<f32>,
    pub optimizer: AdamW<f32>,
    pub config: TrainConfig,
    pub step: u64,
    pub epochs_done: usize,
}

impl Trainer {
    pub fn new(model: DualEncoder<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = AdamW::new(config.adamw(), model.tensors());
        Ok(Trainer { model, optimizer, config, step: 0, epochs_done: 0 })
    }

    pub fn train_step(&mut self, batch: &PairBatch) -> Result<LossRecord> {
        let dropout = (self.model.smiles.config.dropout > 0.0 || self.model.iupac.config.dropout > 0.0)
            .then_some((self.config.seed, self.step));
        let ((loss, l_sl, l_ip), grads) = loss_and_grads(&self.model, batch, self.config.tau, dropout)?;
        let record = LossRecord {
            step: self.step,
            epoch: self.epochs_done,
            loss: f64::from(loss),
            l_sl: f64::from(l_sl),
            l_ip: f64::from(l_ip),
        };
        if !record.loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "step {} epoch {}: loss {} (l_sl {}, l_ip {}) on batch rows {:?}",
                record.step, record.epoch, record.loss, record.l_sl, record.l_ip, batch.rows
            )));
        }
        self.optimizer.config.lr = self.config.lr;
        self.optimizer.step(&mut self.model.tensors_mut(), &grads)?;
        self.step += 1;
        Ok(record)
    }

    /// Runs `config.epochs` epochs of seeded-shuffle minibatches (ragged
    /// final batch dropped). Batches are assembled on a helper thread and
    /// handed over through a bounded queue.
    pub fn run(
        &mut self,
        data: &[PairExample],
        checkpoint_dir: Option<&Path>,
        mut on_step: impl FnMut(&LossRecord),
    ) -> Result<Vec<LossRecord>> {
        if data.is_empty() {
            return Err(Error::invalid("training corpus is empty"));
        }
        let bs = self.config.batch_size;
        if data.len() < bs {
            return Err(Error::invalid(format!("corpus of {} pairs is smaller than batch size {bs}", data.len())));
        }
        let mut records = Vec::new();
        for _ in 0..self.config.epochs {
            let epoch = self.epochs_done;
            let mut order: Vec<usize> = (0..data.len()).collect();
            order.shuffle(&mut substream(self.config.seed, &format!("shuffle/{epoch}")));
            let result = std::thread::scope(|scope| -> Result<()> {
                let (tx, rx) = mpsc::sync_channel::<PairBatch>(4);
                scope.spawn(move || {
                    for rows in order.chunks_exact(bs) {
                        let batch = PairBatch {
                            rows: rows.to_vec(),
                            smiles: rows.iter().map(|&r| data[r].smiles.clone()).collect(),
                            iupac: rows.iter().map(|&r| data[r].iupac.clone()).collect(),
                        };
                        if tx.send(batch).is_err() {
                            break;
                        }
                    }
                });
                for batch in rx {
                    let rec = self.train_step(&batch)?;
                    on_step(&rec);
                    records.push(rec);
                }
                Ok(())
            });
            result?;
            self.epochs_done += 1;
            if let Some(dir) = checkpoint_dir {
                let every = self.config.checkpoint_every;
                if every > 0 && self.epochs_done.is_multiple_of(every) {
                    save_checkpoint(&dir.join(format!("epoch-{:04}", self.epochs_done)), self)?;
                }
            }
        }
        if let Some(dir) = checkpoint_dir {
            save_checkpoint(&dir.join("final"), self)?;
        }
        Ok(records)
    }
}

/// Mean loss per epoch.
pub fn epoch_means(records: &[LossRecord]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64, usize)> = Vec::new();
    for r in records {
        match out.last_mut() {
            Some(last) if last.0 == r.epoch => {
                last.1 += r.loss;
                last.2 += 1;
            }
            _ => out.push((r.epoch, r.loss, 1)),
        }
    }
    out.into_iter().map(|(e, s, n)| (e, s / n as f64)).collect()
}
