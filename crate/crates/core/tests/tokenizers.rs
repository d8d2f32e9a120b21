use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use dualmol_core::io::synth_corpus;
use dualmol_core::tokenizers::{train_bpe, BpeModel, IupacRuleSet, IupacTokenizer, BOS, EOS, UNK};
use proptest::prelude::*;

/// Independent BPE trainer on string tokens: count pairs by brute force,
/// take max count then lexicographically smallest pair, merge left to right.
fn oracle_merges(corpus: &[&str], target: usize) -> Vec<(String, String)> {
    let alphabet: BTreeSet<char> = corpus.iter().flat_map(|s| s.chars()).collect();
    let mut vocab = alphabet.len() + 4;
    let mut words: Vec<Vec<String>> = corpus.iter().map(|s| s.chars().map(String::from).collect()).collect();
    let mut merges = Vec::new();
    while vocab < target {
        let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
        for w in &words {
            for p in w.windows(2) {
                *counts.entry((p[0].clone(), p[1].clone())).or_default() += 1;
            }
        }
        let best = counts.iter().filter(|(_, &n)| n >= 2).fold(None::<(&(String, String), usize)>, |acc, (p, &n)| match acc {
            Some((_, m)) if m >= n => acc,
            _ => Some((p, n)),
        });
        let Some(((a, b), _)) = best else { break };
        let (a, b) = (a.clone(), b.clone());
        for w in &mut words {
            let mut out = Vec::with_capacity(w.len());
            let mut i = 0;
            while i < w.len() {
                if i + 1 < w.len() && w[i] == a && w[i + 1] == b {
                    out.push(format!("{a}{b}"));
                    i += 2;
                } else {
                    out.push(w[i].clone());
                    i += 1;
                }
            }
            *w = out;
        }
        merges.push((a, b));
        vocab += 1;
    }
    merges
}

fn owned(m: &[(String, String)]) -> Vec<(String, String)> {
    m.to_vec()
}

#[test]
fn first_merge_is_most_frequent_pair() {
    // Alphabet {C, N, O} plus four specials already fills a target of 7.
    assert!(train_bpe(&["CCO", "CCN"], 7).unwrap().merges().is_empty());
    let model = train_bpe(&["CCO", "CCN"], 8).unwrap();
    assert_eq!(model.merges()[0], ("C".to_string(), "C".to_string()));
    let seq = model.encode("CCO", 16);
    let cc = model.vocab().id("CC").unwrap();
    let o = model.vocab().id("O").unwrap();
    assert_eq!(seq.ids, vec![BOS, cc, o, EOS]);
}

#[test]
fn equal_counts_break_ties_lexicographically() {
    // AB, BC, CD each occur twice.
    let corpus = ["ABCD", "ABCD"];
    let model = train_bpe(&corpus, 4 + 4 + 3).unwrap();
    assert_eq!(owned(model.merges()), oracle_merges(&corpus, 11));
    assert_eq!(model.merges()[0], ("A".to_string(), "B".to_string()));
    let corpus = ["DCBA", "DCBA", "ZY", "ZY", "ZY"];
    let model = train_bpe(&corpus, 20).unwrap();
    assert_eq!(owned(model.merges()), oracle_merges(&corpus, 20));
    assert_eq!(model.merges()[0], ("Z".to_string(), "Y".to_string()));
    assert_eq!(model.merges()[1], ("B".to_string(), "A".to_string()));
}

#[test]
fn merges_match_oracle_on_synthetic_corpus() {
    let synth = synth_corpus(4, 300);
    let smiles = synth.corpus.smiles();
    for target in [20, 40, 64] {
        let model = train_bpe(&smiles, target).unwrap();
        assert_eq!(owned(model.merges()), oracle_merges(&smiles, target), "target {target}");
    }
}

#[test]
fn single_char_corpus_has_no_merges() {
    let model = train_bpe(&["A"], 5).unwrap();
    assert!(model.merges().is_empty());
    assert_eq!(model.vocab().len(), 5);
    assert!(train_bpe(&["ABC"], 6).is_err());
    assert!(train_bpe::<&str>(&[], 10).is_err());
}

#[test]
fn training_is_byte_deterministic() {
    let synth = synth_corpus(8, 500);
    let a = train_bpe(&synth.corpus.smiles(), 64).unwrap().to_json().unwrap();
    let b = train_bpe(&synth.corpus.smiles(), 64).unwrap().to_json().unwrap();
    assert_eq!(a.as_bytes(), b.as_bytes());
}

#[test]
fn shipped_rules_split_example_name() {
    let rules = IupacRuleSet::shipped();
    assert_eq!(rules.split("2-methylpropan-1-ol"), ["2", "-", "methyl", "propan", "-", "1", "-", "ol"]);
    let toks = rules.split("3-fluoroprop-1-en-1-yl");
    for t in ["fluoro", "prop", "en", "yl"] {
        assert!(toks.contains(&t), "{toks:?} lacks {t}");
    }
    assert_eq!(rules.split("§¶"), ["§", "¶"]);
}

fn bpe_model() -> &'static BpeModel {
    static MODEL: OnceLock<BpeModel> = OnceLock::new();
    MODEL.get_or_init(|| train_bpe(&synth_corpus(1, 400).corpus.smiles(), 48).unwrap())
}

fn iupac_tokenizer() -> &'static IupacTokenizer {
    static TOK: OnceLock<IupacTokenizer> = OnceLock::new();
    TOK.get_or_init(|| IupacTokenizer::fit(IupacRuleSet::shipped(), &synth_corpus(1, 400).corpus.iupac()))
}

const SMILES_CHARS: &str = "CNOFSPIBXcn=#";

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn bpe_round_trips_in_alphabet_strings(idx in proptest::collection::vec(0usize..13, 0..40)) {
        let model = bpe_model();
        let s: String = idx.iter().map(|&i| SMILES_CHARS.chars().nth(i).unwrap()).collect();
        let seq = model.encode(&s, 64);
        prop_assert!(!seq.ids.contains(&UNK));
        prop_assert_eq!(model.decode(&seq), s.clone());
        prop_assert_eq!(model.split(&s).concat(), s);
        seq.validate(64).unwrap();
    }

    #[test]
    fn bpe_is_total_and_mask_disciplined(s in any::<String>(), max_len in 2usize..40) {
        let model = bpe_model();
        let seq = model.encode(&s, max_len);
        seq.validate(max_len).unwrap();
        prop_assert_eq!(seq.ids[0], BOS);
        prop_assert_eq!(*seq.ids.last().unwrap(), EOS);
        prop_assert_eq!(model.split(&s).concat(), s.clone());
        prop_assert_eq!(seq.padded(max_len + 3).trimmed(), seq);
    }

    #[test]
    fn iupac_round_trips_and_concatenates(s in "[a-z0-9,()\\[\\]-]{0,60}") {
        let tok = iupac_tokenizer();
        let rules = tok.rules();
        prop_assert_eq!(rules.split(&s).concat(), s.clone());
        let seq = tok.encode(&s, 128);
        seq.validate(128).unwrap();
        if !seq.ids.contains(&UNK) {
            prop_assert_eq!(tok.decode(&seq), s);
        }
    }

    #[test]
    fn iupac_is_total_on_arbitrary_utf8(s in any::<String>(), max_len in 2usize..40) {
        let tok = iupac_tokenizer();
        prop_assert_eq!(tok.rules().split(&s).concat(), s.clone());
        let seq = tok.encode(&s, max_len);
        seq.validate(max_len).unwrap();
        prop_assert_eq!(*seq.ids.last().unwrap(), EOS);
    }
}

#[test]
fn synthetic_names_round_trip_without_unknowns() {
    let tok = iupac_tokenizer();
    let model = bpe_model();
    for r in &synth_corpus(2, 300).corpus.records {
        let s = tok.encode(&r.iupac, 128);
        assert!(!s.ids.contains(&UNK));
        assert_eq!(tok.decode(&s), r.iupac);
        let m = model.encode(&r.smiles, 64);
        assert_eq!(model.decode(&m), r.smiles);
    }
}

#[test]
fn truncation_keeps_bos_and_eos() {
    let model = bpe_model();
    let seq = model.encode("CNOFSPIBXcn=#CNOFSPIBXcn=#", 5);
    assert_eq!(seq.len(), 5);
    assert_eq!(seq.ids[0], BOS);
    assert_eq!(seq.ids[4], EOS);
    assert_eq!(model.encode("", 5).ids, vec![BOS, EOS]);
    assert_eq!(model.encode("é", 5).ids, vec![BOS, UNK, EOS]);
}
