use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape hyperparameters of one language branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub d_proj: usize,
    pub vocab_size: usize,
    #[serde(default)]
    pub dropout: f64,
}

impl EncoderConfig {
    /// Laptop-sized default: 2 layers, 4 heads, d_model 64.
    pub fn desk(vocab_size: usize) -> Self {
        EncoderConfig { num_layers: 2, num_heads: 4, d_model: 64, d_ff: 256, max_len: 64, d_proj: 32, vocab_size, dropout: 0.0 }
    }

    /// Full-size configuration: 6 layers, 12 heads, hidden 768, projection 512,
    /// 512-token inputs.
    pub fn full(vocab_size: usize) -> Self {
        EncoderConfig {
            num_layers: 6,
            num_heads: 12,
            d_model: 768,
            d_ff: 4 * 768,
            max_len: 512,
            d_proj: 512,
            vocab_size,
            dropout: 0.0,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("d_proj", self.d_proj),
            ("vocab_size", self.vocab_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("encoder config: {name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.num_heads) {
            return Err(Error::invalid(format!(
                "encoder config: d_model {} is not divisible by num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        if self.max_len < 2 {
            return Err(Error::invalid("encoder config: max_len must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("encoder config: dropout must be in [0, 1)"));
        }
        Ok(())
    }
}
