use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;

pub const SPECIAL_TOKENS: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

/// Dense bijection between token strings and ids `0..len`. The four special
/// tokens always occupy ids 0..=3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Vocabulary { tokens: Vec::new(), index: HashMap::new() };
        for s in SPECIAL_TOKENS {
            v.insert(s);
        }
        v
    }

    /// Adds `token` if absent and returns its id.
    pub fn insert(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_owned());
        self.index.insert(token.to_owned(), id);
        id
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_special(id: u32) -> bool {
        id <= EOS
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Rebuilds from an explicit token→id map, checking density and specials.
    pub fn from_map(map: &HashMap<String, u32>) -> Result<Self> {
        let mut tokens = vec![None; map.len()];
        for (tok, &id) in map {
            let slot = tokens
                .get_mut(id as usize)
                .ok_or_else(|| Error::invalid(format!("vocab id {id} for {tok:?} is not dense")))?;
            if slot.is_some() {
                return Err(Error::invalid(format!("vocab id {id} assigned twice")));
            }
            *slot = Some(tok.clone());
        }
        let tokens: Vec<String> = tokens.into_iter().map(Option::unwrap).collect();
        for (i, s) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*s) {
                return Err(Error::invalid(format!("special token {s} must have id {i}")));
            }
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Ok(Vocabulary { tokens, index })
    }

    pub fn to_map(&self) -> HashMap<String, u32> {
        self.index.clone()
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        // Id order keeps the serialized form deterministic.
        let mut m = s.serialize_map(Some(self.tokens.len()))?;
        for (i, t) in self.tokens.iter().enumerate() {
            m.serialize_entry(t, &(i as u32))?;
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let map = HashMap::<String, u32>::deserialize(d)?;
        Vocabulary::from_map(&map).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_have_fixed_ids() {
        let v = Vocabulary::new();
        assert_eq!(v.id("<pad>"), Some(PAD));
        assert_eq!(v.id("<unk>"), Some(UNK));
        assert_eq!(v.id("<bos>"), Some(BOS));
        assert_eq!(v.id("<eos>"), Some(EOS));
    }

    #[test]
    fn insert_is_idempotent() {
        let mut v = Vocabulary::new();
        let a = v.insert("C");
        assert_eq!(v.insert("C"), a);
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn json_round_trip() {
        let mut v = Vocabulary::new();
        v.insert("C");
        v.insert("CC");
        let s = serde_json::to_string(&v).unwrap();
        assert!(s.starts_with("{\"<pad>\":0"));
        let back: Vocabulary = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn rejects_gaps() {
        let mut m = Vocabulary::new().to_map();
        m.insert("C".into(), 9);
        assert!(Vocabulary::from_map(&m).is_err());
    }
}
