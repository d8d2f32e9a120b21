use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sequence::TokenSequence;
use super::vocab::{Vocabulary, UNK};
use crate::error::{Error, Result};

/// Byte-pair-encoding model over Unicode scalar values.
///
/// Merges are kept in training order; encoding replays them in that order,
/// so a training string is segmented exactly as it was during training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BpeFile", into = "BpeFile")]
pub struct BpeModel {
    alphabet: Vec<char>,
    merges: Vec<(String, String)>,
    vocab: Vocabulary,
    merge_ids: Vec<(u32, u32, u32)>,
}

#[derive(Serialize, Deserialize)]
struct BpeFile {
    alphabet: Vec<String>,
    merges: Vec<[String; 2]>,
    vocab: Vocabulary,
}

impl From<BpeModel> for BpeFile {
    fn from(m: BpeModel) -> Self {
        BpeFile {
            alphabet: m.alphabet.iter().map(|c| c.to_string()).collect(),
            merges: m.merges.into_iter().map(|(a, b)| [a, b]).collect(),
            vocab: m.vocab,
        }
    }
}

impl TryFrom<BpeFile> for BpeModel {
    type Error = Error;

    fn try_from(f: BpeFile) -> Result<Self> {
        let mut alphabet = Vec::with_capacity(f.alphabet.len());
        for s in &f.alphabet {
            let mut it = s.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => alphabet.push(c),
                _ => return Err(Error::invalid(format!("alphabet entry {s:?} is not one character"))),
            }
        }
        let merges: Vec<(String, String)> = f.merges.into_iter().map(|[a, b]| (a, b)).collect();
        BpeModel::from_parts(alphabet, merges, f.vocab)
    }
}

impl BpeModel {
    fn from_parts(alphabet: Vec<char>, merges: Vec<(String, String)>, vocab: Vocabulary) -> Result<Self> {
        let mut known: BTreeSet<String> = alphabet.iter().map(|c| c.to_string()).collect();
        for c in &alphabet {
            if vocab.id(&c.to_string()).is_none() {
                return Err(Error::invalid(format!("alphabet char {c:?} missing from vocab")));
            }
        }
        let mut merge_ids = Vec::with_capacity(merges.len());
        for (i, (a, b)) in merges.iter().enumerate() {
            if !known.contains(a) || !known.contains(b) {
                return Err(Error::invalid(format!(
                    "merge {i} ({a:?}, {b:?}) uses an operand not derivable from earlier merges"
                )));
            }
            let joined = format!("{a}{b}");
            let id = vocab
                .id(&joined)
                .ok_or_else(|| Error::invalid(format!("merged token {joined:?} missing from vocab")))?;
            merge_ids.push((vocab.id(a).unwrap(), vocab.id(b).unwrap(), id));
            known.insert(joined);
        }
        Ok(BpeModel { alphabet, merges, vocab, merge_ids })
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Segments `s` into vocabulary ids, with `None` for characters outside
    /// the alphabet.
    fn segment(&self, s: &str) -> Vec<(Option<u32>, String)> {
        let mut pieces: Vec<(Option<u32>, String)> =
            s.chars().map(|c| (self.vocab.id(c.encode_utf8(&mut [0; 4])), c.to_string())).collect();
        for &(a, b, merged) in &self.merge_ids {
            if pieces.len() < 2 {
                break;
            }
            let mut out = Vec::with_capacity(pieces.len());
            let mut it = pieces.into_iter().peekable();
            while let Some(cur) = it.next() {
                if cur.0 == Some(a) && it.peek().is_some_and(|n| n.0 == Some(b)) {
                    let next = it.next().unwrap();
                    out.push((Some(merged), cur.1 + &next.1));
                } else {
                    out.push(cur);
                }
            }
            pieces = out;
        }
        pieces
    }

    /// Content tokens as strings. Characters outside the alphabet come back
    /// verbatim (they encode to UNK).
    pub fn split(&self, s: &str) -> Vec<String> {
        self.segment(s).into_iter().map(|(_, t)| t).collect()
    }

    pub fn encode(&self, s: &str, max_len: usize) -> TokenSequence {
        let content: Vec<u32> = self.segment(s).into_iter().map(|(id, _)| id.unwrap_or(UNK)).collect();
        TokenSequence::from_content(&content, max_len)
    }

    /// Concatenates the non-special tokens of `seq`.
    pub fn decode(&self, seq: &TokenSequence) -> String {
        decode_with(&self.vocab, seq)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub(crate) fn decode_with(vocab: &Vocabulary, seq: &TokenSequence) -> String {
    seq.ids
        .iter()
        .zip(&seq.mask)
        .filter(|&(&id, &m)| m == 1 && !Vocabulary::is_special(id))
        .filter_map(|(&id, _)| vocab.token(id))
        .collect()
}

/// Trains a BPE model by greedily merging the most frequent adjacent pair.
///
/// Ties on count go to the lexicographically smallest `(left, right)` pair.
/// Training stops at `target_vocab_size` or when no pair occurs at least
/// twice.
pub fn train_bpe<S: AsRef<str>>(corpus: &[S], target_vocab_size: usize) -> Result<BpeModel> {
    if corpus.is_empty() {
        return Err(Error::invalid("BPE training corpus is empty"));
    }
    let mut word_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in corpus {
        *word_counts.entry(s.as_ref()).or_default() += 1;
    }
    let alphabet: Vec<char> = word_counts
        .keys()
        .flat_map(|w| w.chars())
        .collect::<BTreeSet<char>>()
        .into_iter()
        .collect();
    let min_size = alphabet.len() + 4;
    if target_vocab_size < min_size {
        return Err(Error::invalid(format!(
            "target vocab size {target_vocab_size} is below alphabet + specials ({min_size})"
        )));
    }

    let mut vocab = Vocabulary::new();
    for c in &alphabet {
        vocab.insert(&c.to_string());
    }
    let mut words: Vec<(Vec<u32>, usize)> = word_counts
        .iter()
        .map(|(w, &n)| (w.chars().map(|c| vocab.id(&c.to_string()).unwrap()).collect(), n))
        .collect();

    let mut merges = Vec::new();
    while vocab.len() < target_vocab_size {
        let mut pair_counts: HashMap<(u32, u32), usize> = HashMap::new();
        for (w, n) in &words {
            for p in w.windows(2) {
                *pair_counts.entry((p[0], p[1])).or_default() += n;
            }
        }
        let best = pair_counts
            .into_iter()
            .filter(|&(_, n)| n >= 2)
            .max_by(|(pa, na), (pb, nb)| {
                na.cmp(nb).then_with(|| {
                    let ka = (vocab.token(pa.0), vocab.token(pa.1));
                    let kb = (vocab.token(pb.0), vocab.token(pb.1));
                    kb.cmp(&ka)
                })
            });
        let Some(((a, b), _)) = best else { break };
        let left = vocab.token(a).unwrap().to_owned();
        let right = vocab.token(b).unwrap().to_owned();
        let merged = vocab.insert(&format!("{left}{right}"));
        for (w, _) in &mut words {
            let mut out = Vec::with_capacity(w.len());
            let mut i = 0;
            while i < w.len() {
                if i + 1 < w.len() && w[i] == a && w[i + 1] == b {
                    out.push(merged);
                    i += 2;
                } else {
                    out.push(w[i]);
                    i += 1;
                }
            }
            *w = out;
        }
        merges.push((left, right));
    }
    BpeModel::from_parts(alphabet, merges, vocab)
}
