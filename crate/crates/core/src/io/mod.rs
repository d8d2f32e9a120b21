//! File formats and corpus ingestion.

mod corpus;
mod synth;
mod tables;

pub use corpus::{parse_pair_corpus, parse_pair_corpus_str, read_lines, PairCorpus, PairRecord, PAIR_HEADER};
pub use synth::{
    correspondence_csv, render_iupac, render_smiles, synth_corpus, SynthCorpus, SYNTH_FRAGMENTS, SYNTH_MAX_LEN,
    SYNTH_MIN_LEN,
};
pub use tables::{read_labeled_csv, read_pairs_csv, write_labeled_csv, write_pairs_csv, DrugPair, LabeledRecord};
