//! End-to-end steps shared by the command-line tool and the test suites:
//! fitting tokenizers, tokenizing a pair corpus, pretraining and embedding.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contrastive::{DualEncoder, LossRecord, PairExample, TrainConfig, Trainer};
use crate::encoder::{Branch, EncoderConfig, Fingerprint};
use crate::error::{Error, Result};
use crate::index::{build_store, EmbeddingStore};
use crate::io::PairCorpus;
use crate::tokenizers::{train_bpe, BpeModel, IupacRuleSet, IupacTokenizer, TokenSequence, Tokenizer};

pub const SMILES_TOKENIZER_FILE: &str = "smiles_bpe.json";
pub const IUPAC_TOKENIZER_FILE: &str = "iupac_tokenizer.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub bpe_vocab_size: usize,
    pub max_len: usize,
    /// Rule table replacing the shipped one.
    pub iupac_rules: Option<PathBuf>,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig { bpe_vocab_size: 64, max_len: 64, iupac_rules: None }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bpe_vocab_size < 5 {
            return Err(Error::invalid(format!("bpe_vocab_size {} leaves no room for any symbol", self.bpe_vocab_size)));
        }
        if self.max_len < 2 {
            return Err(Error::invalid(format!("max_len must be at least 2, got {}", self.max_len)));
        }
        Ok(())
    }

    pub fn rules(&self) -> Result<IupacRuleSet> {
        match &self.iupac_rules {
            Some(p) => IupacRuleSet::load(p),
            None => Ok(IupacRuleSet::shipped()),
        }
    }
}

/// Encoder shape without the vocabulary size, which comes from the fitted
/// tokenizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderShape {
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub d_proj: usize,
    pub dropout: f64,
}

impl Default for EncoderShape {
    fn default() -> Self {
        let d = EncoderConfig::desk(1);
        EncoderShape {
            num_layers: d.num_layers,
            num_heads: d.num_heads,
            d_model: d.d_model,
            d_ff: d.d_ff,
            d_proj: d.d_proj,
            dropout: d.dropout,
        }
    }
}

impl EncoderShape {
    pub fn config(&self, vocab_size: usize, max_len: usize) -> EncoderConfig {
        EncoderConfig {
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            max_len,
            d_proj: self.d_proj,
            vocab_size,
            dropout: self.dropout,
        }
    }

    pub fn validate(&self, max_len: usize) -> Result<()> {
        self.config(4, max_len).validate()
    }
}

/// The SMILES BPE model and the IUPAC tokenizer of one model directory.
#[derive(Debug, Clone)]
pub struct Tokenizers {
    pub smiles: BpeModel,
    pub iupac: IupacTokenizer,
    pub max_len: usize,
}

impl Tokenizers {
    /// Trains BPE on the SMILES column and fits the IUPAC vocabulary on the
    /// IUPAC column.
    pub fn fit(corpus: &PairCorpus, cfg: &TokenizerConfig) -> Result<Self> {
        cfg.validate()?;
        let smiles = train_bpe(&corpus.smiles(), cfg.bpe_vocab_size)?;
        let iupac = IupacTokenizer::fit(cfg.rules()?, &corpus.iupac());
        Ok(Tokenizers { smiles, iupac, max_len: cfg.max_len })
    }

    pub fn encode(&self, branch: Branch, s: &str) -> TokenSequence {
        match branch {
            Branch::Smiles => self.smiles.encode(s, self.max_len),
            Branch::Iupac => self.iupac.encode(s, self.max_len),
        }
    }

    pub fn tokenizer(&self, branch: Branch) -> Tokenizer {
        match branch {
            Branch::Smiles => Tokenizer::Bpe(self.smiles.clone()),
            Branch::Iupac => Tokenizer::Iupac(self.iupac.clone()),
        }
    }

    pub fn encode_pairs(&self, corpus: &PairCorpus) -> Vec<PairExample> {
        corpus
            .records
            .iter()
            .map(|r| PairExample { smiles: self.encode(Branch::Smiles, &r.smiles), iupac: self.encode(Branch::Iupac, &r.iupac) })
            .collect()
    }

    pub fn encode_column(&self, corpus: &PairCorpus, branch: Branch) -> Vec<TokenSequence> {
        corpus
            .records
            .iter()
            .map(|r| self.encode(branch, if branch == Branch::Smiles { &r.smiles } else { &r.iupac }))
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.smiles.save(&dir.join(SMILES_TOKENIZER_FILE))?;
        self.iupac.save(&dir.join(IUPAC_TOKENIZER_FILE))
    }

    pub fn load(dir: &Path, max_len: usize) -> Result<Self> {
        Ok(Tokenizers {
            smiles: BpeModel::load(&dir.join(SMILES_TOKENIZER_FILE))?,
            iupac: IupacTokenizer::load(&dir.join(IUPAC_TOKENIZER_FILE))?,
            max_len,
        })
    }

    pub fn encoder_configs(&self, shape: &EncoderShape) -> (EncoderConfig, EncoderConfig) {
        (shape.config(self.smiles.vocab().len(), self.max_len), shape.config(self.iupac.vocab().len(), self.max_len))
    }
}

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub tokenizers: Tokenizers,
    pub trainer: Trainer,
    pub losses: Vec<LossRecord>,
}

/// Fits tokenizers on `corpus`, initializes both branches from
/// `train.seed` and runs contrastive training.
pub fn pretrain(
    corpus: &PairCorpus,
    tokenizer: &TokenizerConfig,
    shape: &EncoderShape,
    train: &TrainConfig,
    checkpoint_dir: Option<&Path>,
    on_step: impl FnMut(&LossRecord),
) -> Result<Pretrained> {
    tokenizer.validate()?;
    shape.validate(tokenizer.max_len)?;
    train.validate()?;
    let tokenizers = Tokenizers::fit(corpus, tokenizer)?;
    let (s_cfg, i_cfg) = tokenizers.encoder_configs(shape);
    let model = DualEncoder::new(s_cfg, i_cfg, train.seed)?;
    let mut trainer = Trainer::new(model, *train)?;
    let data = tokenizers.encode_pairs(corpus);
    let losses = trainer.run(&data, checkpoint_dir, on_step)?;
    Ok(Pretrained { tokenizers, trainer, losses })
}

/// Fingerprints of every record through both branches, as one store per
/// branch keyed by record id.
pub fn embed_corpus(
    model: &DualEncoder<f32>,
    tokenizers: &Tokenizers,
    corpus: &PairCorpus,
) -> Result<(EmbeddingStore, EmbeddingStore)> {
    let mut stores = Vec::with_capacity(2);
    for (branch, encoder) in [(Branch::Smiles, &model.smiles), (Branch::Iupac, &model.iupac)] {
        let z = encoder.encode_batch(&tokenizers.encode_column(corpus, branch))?;
        let fps: Vec<Fingerprint> = corpus
            .records
            .iter()
            .zip(z)
            .map(|(r, values)| Fingerprint { id: r.id.clone(), branch, values })
            .collect();
        stores.push(build_store(&fps)?);
    }
    let iupac = stores.pop().expect("two stores");
    let smiles = stores.pop().expect("two stores");
    Ok((smiles, iupac))
}
