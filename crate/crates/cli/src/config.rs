use std::path::Path;

use dualmol_core::contrastive::TrainConfig;
use dualmol_core::downstream::{DdiConfig, FinetuneConfig};
use dualmol_core::index::DEFAULT_KS;
use dualmol_core::pipeline::{EncoderShape, TokenizerConfig};
use dualmol_core::repr::CkaConfig;
use dualmol_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub ks: Vec<usize>,
    /// Evaluate on a seeded random group of this many molecules.
    pub group_size: Option<usize>,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { ks: DEFAULT_KS.to_vec(), group_size: None }
    }
}

/// Every tunable of every command. Missing sections take their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub tokenizer: TokenizerConfig,
    pub encoder: EncoderShape,
    pub train: TrainConfig,
    pub retrieval: RetrievalConfig,
    pub finetune: FinetuneConfig,
    pub ddi: DdiConfig,
    pub cka: CkaConfig,
}

impl RunConfig {
    /// Reads `path` (if any), applies the seed override and hands the seed to
    /// every component, then validates everything.
    pub fn resolve(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut cfg: RunConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::invalid(format!("config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.train.seed = cfg.seed;
        cfg.ddi.seed = cfg.seed;
        cfg.cka.seed = cfg.seed;
        let repeats = cfg.finetune.seeds.len() as u64;
        cfg.finetune.seeds = (0..repeats).map(|r| cfg.seed.wrapping_add(r)).collect();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.tokenizer.validate()?;
        self.encoder.validate(self.tokenizer.max_len)?;
        self.train.validate()?;
        if self.retrieval.ks.is_empty() || self.retrieval.ks.contains(&0) {
            return Err(Error::invalid(format!("retrieval.ks must be positive, got {:?}", self.retrieval.ks)));
        }
        if self.retrieval.group_size == Some(0) {
            return Err(Error::invalid("retrieval.group_size must be positive"));
        }
        self.finetune.validate()?;
        self.ddi.mlp.validate()?;
        if self.ddi.folds < 2 {
            return Err(Error::invalid(format!("ddi.folds must be at least 2, got {}", self.ddi.folds)));
        }
        self.cka.validate()
    }
}
