use serde::{Deserialize, Serialize};

use super::vocab::{BOS, EOS, PAD};
use crate::error::{Error, Result};

/// Token ids with a parallel attention mask (1 = real token, 0 = pad).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
}

impl TokenSequence {
    /// Wraps content ids with BOS/EOS, truncating content so the result fits
    /// in `max_len`. The terminal EOS is always kept.
    pub fn from_content(content: &[u32], max_len: usize) -> Self {
        let max_len = max_len.max(2);
        let keep = content.len().min(max_len - 2);
        let mut ids = Vec::with_capacity(keep + 2);
        ids.push(BOS);
        ids.extend_from_slice(&content[..keep]);
        ids.push(EOS);
        let mask = vec![1; ids.len()];
        TokenSequence { ids, mask }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of unmasked positions.
    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    /// Ids between BOS and EOS.
    pub fn content(&self) -> &[u32] {
        let n = self.real_len();
        if n < 2 {
            return &[];
        }
        &self.ids[1..n - 1]
    }

    /// Appends trailing pads up to `len`.
    pub fn padded(&self, len: usize) -> Self {
        let mut out = self.clone();
        while out.ids.len() < len {
            out.ids.push(PAD);
            out.mask.push(0);
        }
        out
    }

    /// Drops trailing pads.
    pub fn trimmed(&self) -> Self {
        let n = self.real_len();
        TokenSequence { ids: self.ids[..n].to_vec(), mask: self.mask[..n].to_vec() }
    }

    /// Checks the structural invariants: equal lengths, length ≤ `max_len`,
    /// BOS first, EOS right before the first pad, only trailing pads.
    pub fn validate(&self, max_len: usize) -> Result<()> {
        if self.ids.len() != self.mask.len() {
            return Err(Error::invalid(format!(
                "ids/mask length mismatch: {} vs {}",
                self.ids.len(),
                self.mask.len()
            )));
        }
        if self.ids.len() > max_len {
            return Err(Error::Length { len: self.ids.len(), max: max_len });
        }
        let n = self.real_len();
        if self.mask[..n].iter().any(|&m| m != 1) || self.mask[n..].iter().any(|&m| m != 0) {
            return Err(Error::invalid("mask has interior pads"));
        }
        if n < 2 || self.ids[0] != BOS || self.ids[n - 1] != EOS {
            return Err(Error::invalid("sequence must start with BOS and end with EOS"));
        }
        if self.ids[n..].iter().any(|&id| id != PAD) {
            return Err(Error::invalid("masked positions must hold PAD"));
        }
        if self.ids[1..n - 1].iter().any(|&id| id == BOS || id == EOS || id == PAD) {
            return Err(Error::invalid("special token inside content"));
        }
        Ok(())
    }
}
