use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::{DualEncoder, TrainConfig, Trainer};
use crate::encoder::{Encoder, EncoderConfig, EncoderWeights};
use crate::error::{Error, Result};
use crate::numerics::container::{read_container, write_container, Container};
use crate::numerics::{AdamW, AdamWConfig, Tensor};

pub const CHECKPOINT_KIND: &str = "dual-encoder";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointMeta {
    kind: String,
    smiles_config: EncoderConfig,
    iupac_config: EncoderConfig,
    train_config: TrainConfig,
    optimizer: AdamWConfig,
    optimizer_step: u64,
    step: u64,
    epochs_done: usize,
}

fn branch_names(prefix: &str, cfg: &EncoderConfig) -> Vec<String> {
    EncoderWeights::<f32>::names(cfg.num_layers).into_iter().map(|n| format!("{prefix}.{n}")).collect()
}

fn all_names(s: &EncoderConfig, i: &EncoderConfig) -> Vec<String> {
    let mut v = branch_names("smiles", s);
    v.extend(branch_names("iupac", i));
    v
}

/// Saves model weights, optimizer moments and training counters.
pub fn save_checkpoint(dir: &Path, trainer: &Trainer) -> Result<()> {
    let m = &trainer.model;
    let meta = CheckpointMeta {
        kind: CHECKPOINT_KIND.into(),
        smiles_config: m.smiles.config,
        iupac_config: m.iupac.config,
        train_config: trainer.config,
        optimizer: trainer.optimizer.config,
        optimizer_step: trainer.optimizer.t,
        step: trainer.step,
        epochs_done: trainer.epochs_done,
    };
    let names = all_names(&m.smiles.config, &m.iupac.config);
    let mut entries: Vec<(String, &Tensor<f32>)> = names.iter().cloned().zip(m.tensors()).collect();
    entries.extend(names.iter().map(|n| format!("adamw.m.{n}")).zip(trainer.optimizer.m.iter()));
    entries.extend(names.iter().map(|n| format!("adamw.v.{n}")).zip(trainer.optimizer.v.iter()));
    write_container(dir, serde_json::to_value(meta)?, &entries)
}

fn read_meta(c: &Container) -> Result<CheckpointMeta> {
    let meta: CheckpointMeta =
        serde_json::from_value(c.manifest.meta.clone()).map_err(|e| Error::Checkpoint(format!("meta: {e}")))?;
    if meta.kind != CHECKPOINT_KIND {
        return Err(Error::Checkpoint(format!("kind: expected {CHECKPOINT_KIND}, found {}", meta.kind)));
    }
    Ok(meta)
}

fn load_branch(c: &Container, prefix: &str, cfg: &EncoderConfig, tag: &str) -> Result<Vec<Tensor<f32>>> {
    let shapes = EncoderWeights::<f32>::shapes(cfg);
    branch_names(prefix, cfg)
        .iter()
        .zip(&shapes)
        .map(|(n, s)| c.tensor::<f32>(&format!("{tag}{n}"), Some(s)))
        .collect()
}

/// Restores a [`Trainer`] (weights, optimizer moments, counters).
pub fn load_checkpoint(dir: &Path) -> Result<Trainer> {
    let c = read_container(dir)?;
    let meta = read_meta(&c)?;
    load_with(&c, &meta, &meta.smiles_config, &meta.iupac_config)
}

/// Like [`load_checkpoint`] but first checks the stored branch configs
/// against the expected ones, naming the first field that differs.
pub fn load_checkpoint_expecting(dir: &Path, smiles: &EncoderConfig, iupac: &EncoderConfig) -> Result<Trainer> {
    let c = read_container(dir)?;
    let meta = read_meta(&c)?;
    for (branch, stored, want) in [("smiles", &meta.smiles_config, smiles), ("iupac", &meta.iupac_config, iupac)] {
        let s = serde_json::to_value(stored)?;
        let w = serde_json::to_value(want)?;
        if let (Some(so), Some(wo)) = (s.as_object(), w.as_object()) {
            for (k, wv) in wo {
                if so.get(k) != Some(wv) {
                    return Err(Error::Checkpoint(format!(
                        "{branch}.{k}: checkpoint has {}, config expects {wv}",
                        so.get(k).map_or("nothing".to_string(), ToString::to_string)
                    )));
                }
            }
        }
    }
    load_with(&c, &meta, smiles, iupac)
}

fn load_with(c: &Container, meta: &CheckpointMeta, s_cfg: &EncoderConfig, i_cfg: &EncoderConfig) -> Result<Trainer> {
    let smiles = Encoder::from_weights(*s_cfg, EncoderWeights::from_tensors(s_cfg, load_branch(c, "smiles", s_cfg, "")?)?)?;
    let iupac = Encoder::from_weights(*i_cfg, EncoderWeights::from_tensors(i_cfg, load_branch(c, "iupac", i_cfg, "")?)?)?;
    let mut m = load_branch(c, "smiles", s_cfg, "adamw.m.")?;
    m.extend(load_branch(c, "iupac", i_cfg, "adamw.m.")?);
    let mut v = load_branch(c, "smiles", s_cfg, "adamw.v.")?;
    v.extend(load_branch(c, "iupac", i_cfg, "adamw.v.")?);
    Ok(Trainer {
        model: DualEncoder { smiles, iupac },
        optimizer: AdamW { config: meta.optimizer, m, v, t: meta.optimizer_step },
        config: meta.train_config,
        step: meta.step,
        epochs_done: meta.epochs_done,
    })
}
