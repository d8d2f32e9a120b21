use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, rmse, roc_auc, summarize, MetricReport, MetricSummary, TaskKind};
use super::split::{random_split, stratified_split, TrainValTest};
use crate::encoder::{forward, Encoder};
use crate::error::{Error, Result};
use crate::numerics::{softmax_in_place, AdamW, AdamWConfig, Axis, Tape, Tensor, Var};
use crate::seed::substream;
use crate::tokenizers::TokenSequence;

/// Linear map from the fingerprint to task outputs: two logits for
/// classification, one value for regression.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskHead {
    pub kind: TaskKind,
    pub w: Tensor<f32>,
    pub b: Tensor<f32>,
}

impl TaskHead {
    pub fn new<R: Rng + ?Sized>(kind: TaskKind, d_proj: usize, rng: &mut R) -> Self {
        let outputs = match kind {
            TaskKind::Classification => 2,
            TaskKind::Regression => 1,
        };
        TaskHead { kind, w: Tensor::randn(&[d_proj, outputs], 0.02, rng), b: Tensor::zeros(&[1, outputs]) }
    }

    pub fn num_outputs(&self) -> usize {
        self.w.cols()
    }

    fn loss_on_tape(&self, tape: &mut Tape<f32>, z: Var, w: Var, b: Var, labels: &[f64]) -> Result<Var> {
        let out = tape.matmul(z, w)?;
        let out = tape.add_row(out, b)?;
        match self.kind {
            TaskKind::Classification => {
                let targets: Vec<usize> = labels.iter().map(|&y| y as usize).collect();
                tape.cross_entropy_rows(out, &targets)
            }
            TaskKind::Regression => {
                let targets: Vec<f32> = labels.iter().map(|&y| y as f32).collect();
                tape.mse(out, &targets)
            }
        }
    }

    /// Positive-class probability (classification) or predicted value.
    pub fn predict(&self, z: &[f32]) -> f64 {
        let mut out: Vec<f32> = self.b.data().to_vec();
        for (i, &zi) in z.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.w.row(i)) {
                *o += zi * w;
            }
        }
        match self.kind {
            TaskKind::Classification => {
                softmax_in_place(&mut out);
                f64::from(out[1])
            }
            TaskKind::Regression => f64::from(out[0]),
        }
    }
}

/// One labeled molecule for fine-tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneExample {
    pub seq: TokenSequence,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub lrs: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub max_epochs: usize,
    pub seeds: Vec<u64>,
    /// Train only the head on fixed fingerprints.
    pub freeze: bool,
    /// Epoch after which a lagging grid cell may be terminated.
    pub bandit_epoch: usize,
    /// A cell is terminated if its validation metric is worse than this
    /// fraction of the best completed cell's.
    pub bandit_slack: f64,
    pub weight_decay: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            lrs: vec![1e-6, 5e-6, 1e-5, 5e-5, 1e-4],
            batch_sizes: vec![2, 4, 8, 12, 24],
            max_epochs: 20,
            seeds: vec![0, 1, 2],
            freeze: false,
            bandit_epoch: 5,
            bandit_slack: 0.8,
            weight_decay: 0.01,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lrs.is_empty() || self.batch_sizes.is_empty() {
            return Err(Error::invalid("fine-tuning grid is empty"));
        }
        if self.lrs.iter().any(|&lr| !(lr >= 0.0) || !lr.is_finite()) {
            return Err(Error::invalid(format!("fine-tuning learning rates must be finite and >= 0, got {:?}", self.lrs)));
        }
        if self.batch_sizes.contains(&0) {
            return Err(Error::invalid("fine-tuning batch sizes must be positive"));
        }
        if self.max_epochs == 0 || self.seeds.is_empty() {
            return Err(Error::invalid("fine-tuning needs at least one epoch and one seed"));
        }
        if !(self.bandit_slack > 0.0 && self.bandit_slack <= 1.0) {
            return Err(Error::invalid(format!("bandit_slack must be in (0, 1], got {}", self.bandit_slack)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub val_metric: f64,
    pub terminated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub best_lr: f64,
    pub best_batch_size: usize,
    pub val_metric: f64,
    pub test: MetricReport,
    pub cells: Vec<CellResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub kind: TaskKind,
    /// `roc_auc` (higher is better) or `rmse` (lower is better).
    pub selection_metric: String,
    pub freeze: bool,
    pub seeds: Vec<SeedReport>,
    pub summary: MetricSummary,
}

/// A fine-tuned branch and its head.
#[derive(Debug, Clone, PartialEq)]
pub struct FinetunedModel {
    pub encoder: Encoder<f32>,
    pub head: TaskHead,
}

impl FinetunedModel {
    pub fn predict(&self, seqs: &[TokenSequence]) -> Result<Vec<f64>> {
        Ok(self.encoder.encode_batch(seqs)?.iter().map(|z| self.head.predict(z)).collect())
    }
}

fn higher_is_better(kind: TaskKind) -> bool {
    kind == TaskKind::Classification
}

fn improves(kind: TaskKind, candidate: f64, incumbent: f64) -> bool {
    if higher_is_better(kind) {
        candidate > incumbent
    } else {
        candidate < incumbent
    }
}

/// Early-termination rule: worse than `slack` of the best completed cell.
fn lags(kind: TaskKind, metric: f64, best: f64, slack: f64) -> bool {
    if higher_is_better(kind) {
        metric < slack * best
    } else {
        metric > best / slack
    }
}

fn validate_labels(data: &[FinetuneExample], kind: TaskKind) -> Result<()> {
    for (i, ex) in data.iter().enumerate() {
        let ok = match kind {
            TaskKind::Classification => ex.label == 0.0 || ex.label == 1.0,
            TaskKind::Regression => ex.label.is_finite(),
        };
        if !ok {
            return Err(Error::invalid(format!(
                "example {i}: label {} is not valid for a {} task",
                ex.label,
                if kind == TaskKind::Classification { "classification" } else { "regression" }
            )));
        }
    }
    Ok(())
}

struct Cell<'a> {
    data: &'a [FinetuneExample],
    split: &'a TrainValTest,
    frozen_z: Option<&'a [Vec<f32>]>,
    kind: TaskKind,
    seed: u64,
    lr: f64,
    batch_size: usize,
}

impl Cell<'_> {
    fn predictions(&self, model: &FinetunedModel, rows: &[usize]) -> Result<Vec<f64>> {
        match self.frozen_z {
            Some(z) => Ok(rows.iter().map(|&r| model.head.predict(&z[r])).collect()),
            None => model.predict(&rows.iter().map(|&r| self.data[r].seq.clone()).collect::<Vec<_>>()),
        }
    }

    fn metric(&self, model: &FinetunedModel, rows: &[usize]) -> Result<f64> {
        let scores = self.predictions(model, rows)?;
        let labels: Vec<f64> = rows.iter().map(|&r| self.data[r].label).collect();
        match self.kind {
            TaskKind::Classification => roc_auc(&scores, &labels),
            TaskKind::Regression => rmse(&scores, &labels),
        }
    }

    fn step(&self, model: &mut FinetunedModel, opt: &mut AdamW<f32>, rows: &[usize]) -> Result<()> {
        let mut tape = Tape::new();
        let labels: Vec<f64> = rows.iter().map(|&r| self.data[r].label).collect();
        let (z, enc_vars) = match self.frozen_z {
            Some(z) => {
                let d = z[0].len();
                let m = Tensor::matrix(rows.len(), d, rows.iter().flat_map(|&r| z[r].iter().copied()).collect())?;
                (tape.constant(m), None)
            }
            None => {
                let vars = model.encoder.weights.register(&mut tape, true);
                let mut zs = Vec::with_capacity(rows.len());
                for &r in rows {
                    zs.push(forward(&mut tape, &vars, &model.encoder.config, &self.data[r].seq, None)?.z);
                }
                (tape.concat(&zs, Axis::Rows)?, Some(vars))
            }
        };
        let w = tape.param(model.head.w.clone());
        let b = tape.param(model.head.b.clone());
        let loss = model.head.loss_on_tape(&mut tape, z, w, b, &labels)?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::Numeric(format!("fine-tuning loss {value} (lr {}, batch {})", self.lr, self.batch_size)));
        }
        let grads = tape.backward(loss)?;
        let mut gs = Vec::new();
        let mut params: Vec<&mut Tensor<f32>> = Vec::new();
        if let Some(vars) = enc_vars {
            for (&v, t) in vars.all().iter().zip(model.encoder.weights.tensors()) {
                gs.push(grads.get_or_zeros(v, t.shape()));
            }
            params.extend(model.encoder.weights.tensors_mut());
        }
        gs.push(grads.get_or_zeros(w, model.head.w.shape()));
        gs.push(grads.get_or_zeros(b, model.head.b.shape()));
        params.push(&mut model.head.w);
        params.push(&mut model.head.b);
        opt.step(&mut params, &gs)
    }

    /// Trains from `init`, keeping the state of the best validation epoch.
    fn run(
        &self,
        init: &FinetunedModel,
        cfg: &FinetuneConfig,
        best_completed: Option<f64>,
    ) -> Result<(CellResult, FinetunedModel)> {
        let mut model = init.clone();
        let adamw = AdamWConfig { lr: self.lr, weight_decay: cfg.weight_decay, ..AdamWConfig::default() };
        let mut opt = if self.frozen_z.is_some() {
            AdamW::new(adamw, [&model.head.w, &model.head.b])
        } else {
            AdamW::new(adamw, model.encoder.weights.tensors().into_iter().chain([&model.head.w, &model.head.b]))
        };
        let mut best: Option<(f64, usize, FinetunedModel)> = None;
        let mut epochs_run = 0;
        let mut terminated = false;
        for epoch in 1..=cfg.max_epochs {
            let mut order = self.split.train.clone();
            order.shuffle(&mut substream(self.seed, &format!("finetune/{}/{}/{epoch}", self.lr, self.batch_size)));
            for rows in order.chunks(self.batch_size) {
                self.step(&mut model, &mut opt, rows)?;
            }
            epochs_run = epoch;
            let m = self.metric(&model, &self.split.val)?;
            if best.as_ref().is_none_or(|(b, _, _)| improves(self.kind, m, *b)) {
                best = Some((m, epoch, model.clone()));
            }
            if epoch == cfg.bandit_epoch {
                if let Some(reference) = best_completed {
                    if lags(self.kind, m, reference, cfg.bandit_slack) {
                        terminated = true;
                        break;
                    }
                }
            }
        }
        let (val_metric, best_epoch, state) = best.expect("at least one epoch");
        let result =
            CellResult { lr: self.lr, batch_size: self.batch_size, epochs_run, best_epoch, val_metric, terminated };
        Ok((result, state))
    }
}

fn finetune_seed(
    pretrained: &Encoder<f32>,
    data: &[FinetuneExample],
    kind: TaskKind,
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<(SeedReport, FinetunedModel)> {
    let split = match kind {
        TaskKind::Classification => stratified_split(&data.iter().map(|e| e.label as u8).collect::<Vec<_>>(), seed)?,
        TaskKind::Regression => random_split(data.len(), seed)?,
    };
    let frozen: Option<Vec<Vec<f32>>> = if cfg.freeze {
        Some(pretrained.encode_batch(&data.iter().map(|e| e.seq.clone()).collect::<Vec<_>>())?)
    } else {
        None
    };
    let head = TaskHead::new(kind, pretrained.config.d_proj, &mut substream(seed, "finetune/head"));
    let init = FinetunedModel { encoder: pretrained.clone(), head };
    let mut cells = Vec::new();
    let mut best: Option<(f64, usize, FinetunedModel)> = None;
    for &lr in &cfg.lrs {
        for &batch_size in &cfg.batch_sizes {
            let cell = Cell { data, split: &split, frozen_z: frozen.as_deref(), kind, seed, lr, batch_size };
            let (result, model) = cell.run(&init, cfg, best.as_ref().map(|b| b.0))?;
            if best.as_ref().is_none_or(|(b, _, _)| improves(kind, result.val_metric, *b)) {
                best = Some((result.val_metric, cells.len(), model));
            }
            cells.push(result);
        }
    }
    let (val_metric, idx, model) = best.expect("non-empty grid");
    let cell = Cell {
        data,
        split: &split,
        frozen_z: frozen.as_deref(),
        kind,
        seed,
        lr: cells[idx].lr,
        batch_size: cells[idx].batch_size,
    };
    let scores = cell.predictions(&model, &split.test)?;
    let labels: Vec<f64> = split.test.iter().map(|&r| data[r].label).collect();
    let test = compute_metrics(&scores, &labels, kind)?;
    let report = SeedReport {
        seed,
        best_lr: cells[idx].lr,
        best_batch_size: cells[idx].batch_size,
        val_metric,
        test,
        cells,
    };
    Ok((report, model))
}

/// Grid search over learning rate and batch size, repeated over seeds. Each
/// seed draws its own train/validation/test split; the best cell on
/// validation is scored on test. Seeds run in parallel. Returns the report
/// and the model of the seed with the best validation metric.
pub fn finetune(
    pretrained: &Encoder<f32>,
    data: &[FinetuneExample],
    kind: TaskKind,
    cfg: &FinetuneConfig,
) -> Result<(FinetuneReport, FinetunedModel)> {
    cfg.validate()?;
    validate_labels(data, kind)?;
    let runs: Vec<(SeedReport, FinetunedModel)> =
        cfg.seeds.par_iter().map(|&s| finetune_seed(pretrained, data, kind, cfg, s)).collect::<Result<_>>()?;
    let summary = summarize(&runs.iter().map(|(r, _)| r.test).collect::<Vec<_>>())?;
    let mut best = 0;
    for (i, (r, _)) in runs.iter().enumerate() {
        if improves(kind, r.val_metric, runs[best].0.val_metric) {
            best = i;
        }
    }
    let (reports, mut models): (Vec<SeedReport>, Vec<FinetunedModel>) = runs.into_iter().unzip();
    let report = FinetuneReport {
        kind,
        selection_metric: if higher_is_better(kind) { "roc_auc" } else { "rmse" }.into(),
        freeze: cfg.freeze,
        seeds: reports,
        summary,
    };
    Ok((report, models.swap_remove(best)))
}
