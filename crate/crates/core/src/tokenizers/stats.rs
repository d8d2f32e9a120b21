use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::Tokenizer;
use crate::error::{Error, Result};

/// Sequence-length histogram and token frequencies over a tokenized corpus.
/// Lengths count content tokens only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub corpus_size: usize,
    pub length_histogram: BTreeMap<usize, usize>,
    pub token_frequency: BTreeMap<String, usize>,
}

impl CorpusStats {
    /// Most frequent tokens, count descending then token ascending.
    pub fn top_k(&self, k: usize, alphabetic_only: bool) -> Vec<(String, usize)> {
        let mut items: Vec<(String, usize)> = self
            .token_frequency
            .iter()
            .filter(|(t, _)| !alphabetic_only || t.chars().any(char::is_alphabetic))
            .map(|(t, &n)| (t.clone(), n))
            .collect();
        items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        items.truncate(k);
        items
    }

    pub fn total_tokens(&self) -> usize {
        self.token_frequency.values().sum()
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("length,count\n");
        for (len, n) in &self.length_histogram {
            writeln!(out, "{len},{n}").unwrap();
        }
        out
    }

    pub fn top_k_csv(&self, k: usize, alphabetic_only: bool) -> Result<String> {
        let total = self.total_tokens().max(1) as f64;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["rank", "token", "count", "fraction"])?;
        for (i, (tok, n)) in self.top_k(k, alphabetic_only).into_iter().enumerate() {
            w.write_record([(i + 1).to_string(), tok, n.to_string(), format!("{:.6}", n as f64 / total)])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn corpus_stats<S: AsRef<str>>(corpus: &[S], tokenizer: &Tokenizer) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::invalid("corpus is empty"));
    }
    let mut length_histogram = BTreeMap::new();
    let mut token_frequency = BTreeMap::new();
    for s in corpus {
        let toks = tokenizer.split(s.as_ref());
        *length_histogram.entry(toks.len()).or_default() += 1;
        for t in toks {
            *token_frequency.entry(t).or_default() += 1;
        }
    }
    Ok(CorpusStats { corpus_size: corpus.len(), length_histogram, token_frequency })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizers::{train_bpe, IupacRuleSet, IupacTokenizer};

    #[test]
    fn single_char_counts() {
        let tok = Tokenizer::Bpe(train_bpe(&["CC"], 5).unwrap());
        let st = corpus_stats(&["CC"], &tok).unwrap();
        assert_eq!(st.token_frequency, BTreeMap::from([("C".to_string(), 2)]));
    }

    #[test]
    fn histogram_sums_to_corpus_size() {
        let corpus = ["2-methylpropan-1-ol", "ethanol"];
        let tok = Tokenizer::Iupac(IupacTokenizer::fit(IupacRuleSet::shipped(), &corpus));
        let st = corpus_stats(&corpus, &tok).unwrap();
        assert_eq!(st.length_histogram.values().sum::<usize>(), 2);
        assert_eq!(st.length_histogram.len(), 2);
    }

    #[test]
    fn top_k_ordering_and_filter() {
        let tok = Tokenizer::Iupac(IupacTokenizer::fit(IupacRuleSet::shipped(), &[""; 0]));
        let st = corpus_stats(&["1-ol", "2-ol", "methyl-1"], &tok).unwrap();
        let top = st.top_k(3, false);
        assert_eq!(top[0], ("-".to_string(), 3));
        assert_eq!(top[1], ("1".to_string(), 2));
        assert_eq!(top[2], ("ol".to_string(), 2));
        let alpha = st.top_k(20, true);
        assert_eq!(alpha, vec![("ol".to_string(), 2), ("methyl".to_string(), 1)]);
        assert!(st.top_k_csv(2, false).unwrap().starts_with("rank,token,count,fraction\n1,-,3,"));
    }

    #[test]
    fn empty_corpus_rejected() {
        let tok = Tokenizer::Bpe(train_bpe(&["C"], 5).unwrap());
        let empty: [&str; 0] = [];
        assert!(corpus_stats(&empty, &tok).is_err());
    }
}
