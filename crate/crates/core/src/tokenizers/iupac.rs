use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bpe::decode_with;
use super::sequence::TokenSequence;
use super::vocab::{Vocabulary, UNK};
use crate::error::{Error, Result};

const SHIPPED_RULES: &str = include_str!("../../data/iupac_rules.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleClass {
    MultiplierPrefix,
    SubstituentPrefix,
    TrivialName,
    Locant,
    Suffix,
    Punctuation,
    FallbackChar,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub class: RuleClass,
    #[serde(default)]
    pub literals: Vec<String>,
}

/// Ordered rule table for splitting IUPAC names.
///
/// At each position the longest literal from any rule wins; a literal listed
/// under several rules belongs to the earliest one. Anything unmatched becomes a
/// single-character fallback token, so splitting never fails.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IupacRuleSet {
    rules: Vec<Rule>,
    // literal -> rule index of its first occurrence
    lookup: HashMap<String, usize>,
    max_chars: usize,
}

impl IupacRuleSet {
    pub fn new(rules: Vec<Rule>) -> Result<Self> {
        match rules.last() {
            Some(r) if r.class == RuleClass::FallbackChar => {}
            _ => return Err(Error::invalid("IUPAC rule table must end with a fallback-char rule")),
        }
        let mut lookup = HashMap::new();
        let mut max_chars = 1;
        for (i, rule) in rules.iter().enumerate() {
            if rule.class == RuleClass::FallbackChar && !rule.literals.is_empty() {
                return Err(Error::invalid("fallback-char rule takes no literals"));
            }
            if rule.class == RuleClass::FallbackChar && i + 1 != rules.len() {
                return Err(Error::invalid("fallback-char rule must be last"));
            }
            for lit in &rule.literals {
                if lit.is_empty() {
                    return Err(Error::invalid(format!("empty literal in rule {i}")));
                }
                max_chars = max_chars.max(lit.chars().count());
                lookup.entry(lit.clone()).or_insert(i);
            }
        }
        Ok(IupacRuleSet { rules, lookup, max_chars })
    }

    /// The rule table bundled with the crate.
    pub fn shipped() -> Self {
        Self::from_json(SHIPPED_RULES).expect("bundled IUPAC rule table is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::new(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.rules)?)
    }

    /// Literals in table order, first occurrence only.
    pub fn literals(&self) -> impl Iterator<Item = &str> {
        let mut seen = BTreeSet::new();
        self.rules.iter().flat_map(|r| r.literals.iter()).filter(move |l| seen.insert(l.as_str())).map(String::as_str)
    }

    /// Rule class that produced `token` (fallback for unknown strings).
    pub fn class_of(&self, token: &str) -> RuleClass {
        self.lookup.get(token).map_or(RuleClass::FallbackChar, |&i| self.rules[i].class)
    }

    /// Splits `s` into tokens whose concatenation is `s`.
    pub fn split<'a>(&self, s: &'a str) -> Vec<&'a str> {
        let mut out = Vec::new();
        let mut rest = s;
        while !rest.is_empty() {
            let boundaries: Vec<usize> =
                rest.char_indices().skip(1).map(|(i, _)| i).chain(std::iter::once(rest.len())).take(self.max_chars).collect();
            let end = boundaries
                .iter()
                .rev()
                .copied()
                .find(|&end| self.lookup.contains_key(&rest[..end]))
                .unwrap_or(boundaries[0]);
            out.push(&rest[..end]);
            rest = &rest[end..];
        }
        out
    }
}

/// Rule table plus the vocabulary that maps its tokens to ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "IupacFile", into = "IupacFile")]
pub struct IupacTokenizer {
    rules: IupacRuleSet,
    vocab: Vocabulary,
}

#[derive(Serialize, Deserialize)]
struct IupacFile {
    rules: Vec<Rule>,
    vocab: Vocabulary,
}

impl From<IupacTokenizer> for IupacFile {
    fn from(t: IupacTokenizer) -> Self {
        IupacFile { rules: t.rules.rules, vocab: t.vocab }
    }
}

impl TryFrom<IupacFile> for IupacTokenizer {
    type Error = Error;
    fn try_from(f: IupacFile) -> Result<Self> {
        Ok(IupacTokenizer { rules: IupacRuleSet::new(f.rules)?, vocab: f.vocab })
    }
}

impl IupacTokenizer {
    /// Vocabulary = specials, every rule literal in table order, then the
    /// fallback characters seen in `corpus` (sorted).
    pub fn fit<S: AsRef<str>>(rules: IupacRuleSet, corpus: &[S]) -> Self {
        let mut vocab = Vocabulary::new();
        for lit in rules.literals() {
            vocab.insert(lit);
        }
        let mut extra = BTreeSet::new();
        for s in corpus {
            for tok in rules.split(s.as_ref()) {
                if vocab.id(tok).is_none() {
                    extra.insert(tok.to_owned());
                }
            }
        }
        for tok in extra {
            vocab.insert(&tok);
        }
        IupacTokenizer { rules, vocab }
    }

    pub fn rules(&self) -> &IupacRuleSet {
        &self.rules
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn encode(&self, s: &str, max_len: usize) -> TokenSequence {
        let content: Vec<u32> = self.rules.split(s).into_iter().map(|t| self.vocab.id(t).unwrap_or(UNK)).collect();
        TokenSequence::from_content(&content, max_len)
    }

    pub fn decode(&self, seq: &TokenSequence) -> String {
        decode_with(&self.vocab, seq)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_worked_example() {
        let r = IupacRuleSet::shipped();
        assert_eq!(r.split("2-methylpropan-1-ol"), vec!["2", "-", "methyl", "propan", "-", "1", "-", "ol"]);
    }

    #[test]
    fn splits_propenyl_morphemes() {
        let r = IupacRuleSet::shipped();
        let toks = r.split("1-fluoro-4-prop-en-yl-benzene");
        for m in ["fluoro", "prop", "en", "yl", "benzene"] {
            assert!(toks.contains(&m), "{m} missing from {toks:?}");
        }
    }

    #[test]
    fn unmatched_chars_fall_back_one_by_one() {
        let r = IupacRuleSet::shipped();
        assert_eq!(r.split("qxq"), vec!["q", "x", "q"]);
        assert_eq!(r.split("µ€"), vec!["µ", "€"]);
        assert_eq!(r.class_of("q"), RuleClass::FallbackChar);
        assert_eq!(r.class_of("methyl"), RuleClass::SubstituentPrefix);
    }

    #[test]
    fn duplicate_literal_belongs_to_earlier_rule() {
        let rules = vec![
            Rule { class: RuleClass::Suffix, literals: vec!["ab".into()] },
            Rule { class: RuleClass::TrivialName, literals: vec!["ab".into(), "abc".into()] },
            Rule { class: RuleClass::FallbackChar, literals: vec![] },
        ];
        let r = IupacRuleSet::new(rules).unwrap();
        assert_eq!(r.class_of("ab"), RuleClass::Suffix);
        assert_eq!(r.split("abcab"), vec!["abc", "ab"]);
    }

    #[test]
    fn table_must_end_with_fallback() {
        let rules = vec![Rule { class: RuleClass::Suffix, literals: vec!["ol".into()] }];
        assert!(IupacRuleSet::new(rules).is_err());
    }

    #[test]
    fn tokenizer_vocab_and_unknowns() {
        let t = IupacTokenizer::fit(IupacRuleSet::shipped(), &["2-methylpropan-1-ol", "qq"]);
        let seq = t.encode("2-methylpropan-1-ol", 64);
        assert_eq!(seq.len(), 10);
        assert_eq!(t.decode(&seq), "2-methylpropan-1-ol");
        assert!(t.vocab().id("q").is_some());
        let seq = t.encode("zz", 64);
        assert_eq!(&seq.ids[1..3], &[UNK, UNK]);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<IupacTokenizer>(&json).unwrap(), t);
    }

    #[test]
    fn shipped_table_serializes_as_array() {
        let r = IupacRuleSet::shipped();
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(v[0]["class"], "trivial-name");
        assert_eq!(v.as_array().unwrap().last().unwrap()["class"], "fallback-char");
    }
}
