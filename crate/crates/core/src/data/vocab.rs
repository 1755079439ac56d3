use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Required vocabulary width.
pub const VOCAB_SIZE: usize = 31;

/// Character rendered for special tokens when decoding to text.
pub const SPECIAL_GLYPH: char = '?';

/// The ordered character vocabulary plus the indices of its special tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawVocab", into = "RawVocab")]
pub struct VocabSpec {
    tokens: Vec<String>,
    mask_index: usize,
    pad_index: usize,
    unk_index: usize,
    lookup: HashMap<char, usize>,
}

#[derive(Serialize, Deserialize)]
struct RawVocab {
    tokens: Vec<String>,
    mask_index: usize,
    pad_index: usize,
    unk_index: usize,
}

impl TryFrom<RawVocab> for VocabSpec {
    type Error = Error;

    fn try_from(raw: RawVocab) -> Result<Self> {
        VocabSpec::new(raw.tokens, raw.mask_index, raw.pad_index, raw.unk_index)
    }
}

impl From<VocabSpec> for RawVocab {
    fn from(v: VocabSpec) -> Self {
        RawVocab {
            tokens: v.tokens,
            mask_index: v.mask_index,
            pad_index: v.pad_index,
            unk_index: v.unk_index,
        }
    }
}

impl Default for VocabSpec {
    fn default() -> Self {
        Self::english()
    }
}

impl VocabSpec {
    pub fn new(
        tokens: Vec<String>,
        mask_index: usize,
        pad_index: usize,
        unk_index: usize,
    ) -> Result<Self> {
        if tokens.len() != VOCAB_SIZE {
            return Err(Error::Config(format!(
                "vocabulary must hold {VOCAB_SIZE} tokens, got {}",
                tokens.len()
            )));
        }
        let specials = [mask_index, pad_index, unk_index];
        if specials.iter().any(|&i| i >= VOCAB_SIZE)
            || mask_index == pad_index
            || mask_index == unk_index
            || pad_index == unk_index
        {
            return Err(Error::Config(format!(
                "special indices must be distinct and < {VOCAB_SIZE}: mask={mask_index} pad={pad_index} unk={unk_index}"
            )));
        }
        let mut lookup = HashMap::new();
        for (i, tok) in tokens.iter().enumerate() {
            if specials.contains(&i) {
                continue;
            }
            let mut chars = tok.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => {
                    if lookup.insert(c, i).is_some() {
                        return Err(Error::Config(format!("duplicate token {tok:?}")));
                    }
                }
                _ => {
                    return Err(Error::Config(format!(
                        "regular token {tok:?} must be a single character"
                    )))
                }
            }
        }
        for c in ('a'..='z').chain(std::iter::once(' ')) {
            if !lookup.contains_key(&c) {
                return Err(Error::Config(format!("vocabulary is missing {c:?}")));
            }
        }
        Ok(Self {
            tokens,
            mask_index,
            pad_index,
            unk_index,
            lookup,
        })
    }

    /// `a`-`z`, space, apostrophe, then `[pad]`, `[mask]`, `[unk]`.
    pub fn english() -> Self {
        let mut tokens: Vec<String> = ('a'..='z').map(String::from).collect();
        tokens.push(" ".into());
        tokens.push("'".into());
        tokens.push("[pad]".into());
        tokens.push("[mask]".into());
        tokens.push("[unk]".into());
        Self::new(tokens, 29, 28, 30).expect("built-in vocabulary is valid")
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn mask_index(&self) -> usize {
        self.mask_index
    }

    pub fn pad_index(&self) -> usize {
        self.pad_index
    }

    pub fn unk_index(&self) -> usize {
        self.unk_index
    }

    pub fn is_special(&self, index: usize) -> bool {
        index == self.mask_index || index == self.pad_index || index == self.unk_index
    }

    /// Indices of the typeable (non-special) tokens, ascending.
    pub fn regular_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_special(i)).collect()
    }

    /// Index of an already-lowercased character, if it is in the vocabulary.
    pub fn index_of(&self, c: char) -> Option<usize> {
        self.lookup.get(&c).copied()
    }

    pub fn char_of(&self, index: usize) -> Option<char> {
        if self.is_special(index) {
            return None;
        }
        self.tokens.get(index).and_then(|t| t.chars().next())
    }

    /// Lowercases and maps each character to its index; unknown characters
    /// become `unk_index`. Output length equals the input's character count.
    pub fn encode_text(&self, s: &str) -> Vec<usize> {
        s.chars().map(|c| self.encode_char(c)).collect()
    }

    pub fn encode_char(&self, c: char) -> usize {
        let mut lower = c.to_lowercase();
        match (lower.next(), lower.next()) {
            (Some(l), None) => self.index_of(l).unwrap_or(self.unk_index),
            _ => self.unk_index,
        }
    }

    pub fn decode_text(&self, indices: &[usize]) -> String {
        indices
            .iter()
            .map(|&i| self.char_of(i).unwrap_or(SPECIAL_GLYPH))
            .collect()
    }

    /// Stable fingerprint of the token list and special indices.
    pub fn hash(&self) -> String {
        let raw = RawVocab::from(self.clone());
        let bytes = serde_json::to_vec(&raw).expect("vocabulary serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_vocab_shape() {
        let v = VocabSpec::english();
        assert_eq!(v.len(), 31);
        assert_eq!(v.regular_indices().len(), 28);
        assert_eq!(v.index_of(' '), Some(26));
        assert_eq!(v.index_of('\''), Some(27));
    }

    #[test]
    fn encode_examples() {
        let v = VocabSpec::english();
        let a = v.index_of('a').unwrap();
        let b = v.index_of('b').unwrap();
        let sp = v.index_of(' ').unwrap();
        assert_eq!(v.encode_text("a"), vec![a]);
        assert_eq!(v.encode_text("A b"), vec![a, sp, b]);
        assert_eq!(v.encode_text("a€b"), vec![a, v.unk_index(), b]);
    }

    #[test]
    fn rejects_bad_vocab() {
        let mut tokens: Vec<String> = VocabSpec::english().tokens().to_vec();
        assert!(VocabSpec::new(tokens.clone(), 29, 29, 30).is_err());
        assert!(VocabSpec::new(tokens[..30].to_vec(), 29, 28, 30).is_err());
        tokens[0] = "b".into();
        assert!(VocabSpec::new(tokens, 29, 28, 30).is_err());
    }

    #[test]
    fn json_round_trip() {
        let v = VocabSpec::english();
        let text = serde_json::to_string(&v).unwrap();
        let back: VocabSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(v, back);
        assert_eq!(v.hash(), back.hash());
    }

    proptest::proptest! {
        #[test]
        fn encode_inverts_decode(idx in proptest::collection::vec(0usize..28, 0..40)) {
            let v = VocabSpec::english();
            proptest::prop_assert_eq!(v.encode_text(&v.decode_text(&idx)), idx);
        }
    }
}
