//! Word-level vocabulary and tokenization.
//!
//! Text is lowercased and split on every non-alphanumeric character, so
//! `"Rock-Climbing!"` becomes `["rock", "climbing"]`. Two ids are reserved
//! ahead of any word: [`TokenId::END_OF_KEY`] terminates a concept key during
//! decoding and [`TokenId::UNKNOWN`] is the escape action that signals no
//! existing key fits the input.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub const END_OF_KEY: TokenId = TokenId(0);
    pub const UNKNOWN: TokenId = TokenId(1);

    pub fn is_reserved(self) -> bool {
        self == Self::END_OF_KEY || self == Self::UNKNOWN
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ordered token ids. Concept keys never contain reserved ids; decoder
/// prefixes may carry a trailing [`TokenId::END_OF_KEY`].
pub type TokenSequence = Vec<TokenId>;

pub const END_OF_KEY_STR: &str = "<eok>";
pub const UNKNOWN_STR: &str = "<unk>";

/// Splits text into lowercase words without touching any vocabulary.
pub fn normalize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Growth-only bijection between word strings and token ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, TokenId>,
    id_to_token: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut vocab = Vocabulary {
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
        };
        vocab.push(END_OF_KEY_STR);
        vocab.push(UNKNOWN_STR);
        vocab
    }

    fn push(&mut self, word: &str) -> TokenId {
        let id = TokenId(self.id_to_token.len() as u32);
        self.id_to_token.push(word.to_owned());
        self.token_to_id.insert(word.to_owned(), id);
        id
    }

    /// Returns the id for `word`, assigning the next free id on first sight.
    /// The reserved spellings `<eok>` and `<unk>` resolve to the reserved ids.
    pub fn intern(&mut self, word: &str) -> TokenId {
        match self.token_to_id.get(word) {
            Some(&id) => id,
            None => self.push(word),
        }
    }

    pub fn get(&self, word: &str) -> Option<TokenId> {
        self.token_to_id.get(word).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.id_to_token.get(id.index()).map(String::as_str)
    }

    /// Number of ids, reserved ones included.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    /// True when only the reserved ids exist.
    pub fn is_empty(&self) -> bool {
        self.id_to_token.len() <= 2
    }

    /// Word tokens in id order, reserved ids excluded.
    pub fn words(&self) -> impl Iterator<Item = (TokenId, &str)> {
        self.id_to_token
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, w)| (TokenId(i as u32), w.as_str()))
    }

    pub fn tokenize(&mut self, text: &str) -> TokenSequence {
        normalize(text).iter().map(|w| self.intern(w)).collect()
    }

    /// Tokenizes without interning; returns `None` if any word is unseen.
    pub fn lookup_text(&self, text: &str) -> Option<TokenSequence> {
        normalize(text).iter().map(|w| self.get(w)).collect()
    }

    /// Joins words with single spaces. A trailing end-of-key is stripped;
    /// any other reserved id is rejected.
    pub fn detokenize(&self, seq: &[TokenId]) -> Result<String> {
        let body = match seq.split_last() {
            Some((&TokenId::END_OF_KEY, rest)) => rest,
            _ => seq,
        };
        let mut words = Vec::with_capacity(body.len());
        for &id in body {
            if id.is_reserved() {
                return Err(Error::ReservedToken(id));
            }
            words.push(self.token(id).ok_or(Error::InvalidToken(id.0))?);
        }
        Ok(words.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_yields_empty_sequence() {
        let mut v = Vocabulary::new();
        assert!(v.tokenize("").is_empty());
        assert!(v.tokenize("  ?!  ").is_empty());
        assert!(v.is_empty());
    }

    #[test]
    fn lowercase_and_split() {
        let mut v = Vocabulary::new();
        let seq = v.tokenize("Machine Learning");
        assert_eq!(
            seq,
            vec![v.get("machine").unwrap(), v.get("learning").unwrap()]
        );
        assert_eq!(v.detokenize(&seq).unwrap(), "machine learning");
    }

    #[test]
    fn interning_is_idempotent() {
        let mut v = Vocabulary::new();
        let a = v.tokenize("jazz and Jazz");
        let b = v.tokenize("jazz and jazz");
        assert_eq!(a, b);
        assert_eq!(a[0], a[2]);
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn reserved_ids_are_stable() {
        let mut v = Vocabulary::new();
        assert_eq!(v.intern(END_OF_KEY_STR), TokenId::END_OF_KEY);
        assert_eq!(v.intern(UNKNOWN_STR), TokenId::UNKNOWN);
        assert_eq!(
            v.tokenize("<eok> <unk>"),
            vec![v.get("eok").unwrap(), v.get("unk").unwrap()]
        );
    }

    #[test]
    fn detokenize_strips_trailing_end_of_key_only() {
        let mut v = Vocabulary::new();
        let mut seq = v.tokenize("rock climbing");
        assert_eq!(v.detokenize(&[]).unwrap(), "");
        seq.push(TokenId::END_OF_KEY);
        assert_eq!(v.detokenize(&seq).unwrap(), "rock climbing");
        seq.insert(0, TokenId::END_OF_KEY);
        assert!(matches!(v.detokenize(&seq), Err(Error::ReservedToken(_))));
        assert!(matches!(
            v.detokenize(&[TokenId::UNKNOWN]),
            Err(Error::ReservedToken(_))
        ));
        assert!(matches!(
            v.detokenize(&[TokenId(99)]),
            Err(Error::InvalidToken(99))
        ));
    }

    #[test]
    fn lookup_text_does_not_intern() {
        let mut v = Vocabulary::new();
        v.tokenize("garden");
        assert_eq!(v.lookup_text("Garden!"), Some(vec![TokenId(2)]));
        assert_eq!(v.lookup_text("garden party"), None);
        assert_eq!(v.len(), 3);
    }
}
