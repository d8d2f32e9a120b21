//! SMILES (learned BPE) and IUPAC (rule table) tokenizers.

mod bpe;
mod iupac;
mod sequence;
mod stats;
mod vocab;

pub use bpe::{train_bpe, BpeModel};
pub use iupac::{IupacRuleSet, IupacTokenizer, Rule, RuleClass};
pub use sequence::TokenSequence;
pub use stats::{corpus_stats, CorpusStats};
pub use vocab::{Vocabulary, BOS, EOS, PAD, SPECIAL_TOKENS, UNK};

/// Either tokenizer, for code that handles both branches uniformly.
#[derive(Debug, Clone)]
pub enum Tokenizer {
    Bpe(BpeModel),
    Iupac(IupacTokenizer),
}

impl Tokenizer {
    pub fn encode(&self, s: &str, max_len: usize) -> TokenSequence {
        match self {
            Tokenizer::Bpe(m) => m.encode(s, max_len),
            Tokenizer::Iupac(t) => t.encode(s, max_len),
        }
    }

    /// Content tokens as strings, no specials and no truncation.
    pub fn split(&self, s: &str) -> Vec<String> {
        match self {
            Tokenizer::Bpe(m) => m.split(s),
            Tokenizer::Iupac(t) => t.rules().split(s).into_iter().map(str::to_owned).collect(),
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        match self {
            Tokenizer::Bpe(m) => m.vocab(),
            Tokenizer::Iupac(t) => t.vocab(),
        }
    }
}
