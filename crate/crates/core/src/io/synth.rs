//! Synthetic two-language corpus. A latent molecule is a sequence of
//! fragments; rendering A concatenates one-character codes (SMILES-like),
//! rendering B joins word morphemes with hyphens (IUPAC-like).

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::Rng;

use super::corpus::{PairCorpus, PairRecord};
use crate::seed::substream;

/// `(IUPAC-like morpheme, SMILES-like code)` for every fragment.
pub const SYNTH_FRAGMENTS: [(&str, &str); 13] = [
    ("methyl", "C"),
    ("amino", "N"),
    ("hydroxy", "O"),
    ("fluoro", "F"),
    ("sulfanyl", "S"),
    ("phosphono", "P"),
    ("iodo", "I"),
    ("bromo", "B"),
    ("chloro", "X"),
    ("phenyl", "c"),
    ("nitro", "n"),
    ("oxo", "="),
    ("cyano", "#"),
];

pub const SYNTH_MIN_LEN: usize = 1;
pub const SYNTH_MAX_LEN: usize = 6;

/// Generated corpus plus the latent fragment sequence of each record.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub corpus: PairCorpus,
    pub latent: Vec<Vec<usize>>,
}

pub fn render_smiles(latent: &[usize]) -> String {
    latent.iter().map(|&f| SYNTH_FRAGMENTS[f].1).collect()
}

pub fn render_iupac(latent: &[usize]) -> String {
    latent.iter().map(|&f| SYNTH_FRAGMENTS[f].0).collect::<Vec<_>>().join("-")
}

/// `size` distinct latent molecules (lengths uniform in 1..=6) rendered both
/// ways. Deterministic in `seed`.
pub fn synth_corpus(seed: u64, size: usize) -> SynthCorpus {
    let mut rng = substream(seed, "synth");
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(size);
    let mut latent = Vec::with_capacity(size);
    while records.len() < size {
        let len = rng.random_range(SYNTH_MIN_LEN..=SYNTH_MAX_LEN);
        let mol: Vec<usize> = (0..len).map(|_| rng.random_range(0..SYNTH_FRAGMENTS.len())).collect();
        if !seen.insert(mol.clone()) {
            continue;
        }
        records.push(PairRecord {
            id: format!("mol{:06}", records.len()),
            smiles: render_smiles(&mol),
            iupac: render_iupac(&mol),
        });
        latent.push(mol);
    }
    SynthCorpus { corpus: PairCorpus { records }, latent }
}

/// Planted token correspondence as CSV `iupac_token,smiles_token`.
pub fn correspondence_csv() -> String {
    let mut out = String::from("iupac_token,smiles_token\n");
    for (i, s) in SYNTH_FRAGMENTS {
        writeln!(out, "{i},{s}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_one_is_aligned() {
        let s = synth_corpus(1, 1);
        assert_eq!(s.corpus.len(), 1);
        let r = &s.corpus.records[0];
        assert_eq!(r.smiles, render_smiles(&s.latent[0]));
        assert_eq!(r.iupac, render_iupac(&s.latent[0]));
    }

    #[test]
    fn deterministic_and_unique() {
        let a = synth_corpus(9, 300);
        assert_eq!(a, synth_corpus(9, 300));
        assert_ne!(a.corpus, synth_corpus(10, 300).corpus);
        let uniq: HashSet<_> = a.corpus.records.iter().map(|r| &r.smiles).collect();
        assert_eq!(uniq.len(), 300);
    }
}
