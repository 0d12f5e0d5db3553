//! The cognitive schema: a prefix trie over concept keys.
//!
//! Every root-to-end-marked path is a valid key. The set of all prefixes of
//! valid keys is the validity space the decoder is confined to; the trie
//! answers membership for both in time linear in the sequence length.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text_model::{TokenId, TokenSequence};

/// Dense handle for a concept key, assigned in insertion order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptId(pub u32);

impl ConceptId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, Default)]
struct TrieNode {
    children: BTreeMap<TokenId, usize>,
    /// Set iff this node ends a key.
    concept: Option<ConceptId>,
}

/// Continuations permitted after a valid prefix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AllowedNext {
    /// Word tokens `t` with `prefix ∘ t` still a valid prefix, ascending.
    pub tokens: Vec<TokenId>,
    /// Whether `prefix` itself is a complete key.
    pub may_terminate: bool,
}

#[derive(Clone, Debug)]
pub struct CognitiveSchema {
    nodes: Vec<TrieNode>,
    keys: Vec<TokenSequence>,
    generation: u64,
}

impl Default for CognitiveSchema {
    fn default() -> Self {
        Self::new()
    }
}

impl CognitiveSchema {
    pub fn new() -> Self {
        CognitiveSchema {
            nodes: vec![TrieNode::default()],
            keys: Vec::new(),
            generation: 0,
        }
    }

    /// Number of keys.
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Incremented on every structural change and never on reads.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Inserts `seq` as a key. Reinserting an existing key returns its id and
    /// leaves the generation untouched.
    pub fn insert_key(&mut self, seq: &[TokenId]) -> Result<ConceptId> {
        if seq.is_empty() {
            return Err(Error::EmptyKey);
        }
        if let Some(&t) = seq.iter().find(|t| t.is_reserved()) {
            return Err(Error::ReservedToken(t));
        }
        let mut node = 0;
        for &t in seq {
            node = match self.nodes[node].children.get(&t) {
                Some(&child) => child,
                None => {
                    let child = self.nodes.len();
                    self.nodes.push(TrieNode::default());
                    self.nodes[node].children.insert(t, child);
                    child
                }
            };
        }
        if let Some(id) = self.nodes[node].concept {
            return Ok(id);
        }
        let id = ConceptId(self.keys.len() as u32);
        self.nodes[node].concept = Some(id);
        self.keys.push(seq.to_vec());
        self.generation += 1;
        Ok(id)
    }

    fn walk(&self, seq: &[TokenId]) -> Option<usize> {
        let mut node = 0;
        for t in seq {
            node = *self.nodes[node].children.get(t)?;
        }
        Some(node)
    }

    /// Concept id of `seq`, with a trailing end-of-key ignored.
    pub fn lookup(&self, seq: &[TokenId]) -> Option<ConceptId> {
        let body = match seq.split_last() {
            Some((&TokenId::END_OF_KEY, rest)) => rest,
            _ => seq,
        };
        self.walk(body).and_then(|n| self.nodes[n].concept)
    }

    pub fn contains(&self, seq: &[TokenId]) -> bool {
        self.lookup(seq).is_some()
    }

    /// True iff `seq` is a prefix of some key. The empty sequence is a valid
    /// prefix exactly when the schema has at least one key.
    pub fn is_valid_prefix(&self, seq: &[TokenId]) -> bool {
        !self.is_empty() && self.walk(seq).is_some()
    }

    pub fn allowed_next(&self, prefix: &[TokenId]) -> Result<AllowedNext> {
        if self.is_empty() {
            return Err(Error::InvalidPrefix);
        }
        let node = &self.nodes[self.walk(prefix).ok_or(Error::InvalidPrefix)?];
        Ok(AllowedNext {
            tokens: node.children.keys().copied().collect(),
            may_terminate: node.concept.is_some(),
        })
    }

    pub fn key(&self, id: ConceptId) -> Option<&[TokenId]> {
        self.keys.get(id.index()).map(Vec::as_slice)
    }

    /// All keys ordered by concept id.
    pub fn enumerate_keys(&self) -> impl Iterator<Item = (ConceptId, &[TokenId])> {
        self.keys
            .iter()
            .enumerate()
            .map(|(i, k)| (ConceptId(i as u32), k.as_slice()))
    }

    /// Walks the whole trie and checks that the node structure and key index
    /// agree: every node lies on a path to an end marker and every end marker
    /// maps back to its key.
    pub fn check_structure(&self) -> std::result::Result<(), String> {
        let mut seen = vec![false; self.keys.len()];
        let mut path = Vec::new();
        self.check_node(0, &mut path, &mut seen)?;
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(format!("key {i} has no end-marked path"));
        }
        Ok(())
    }

    // Returns whether the subtree contains an end marker.
    fn check_node(
        &self,
        node: usize,
        path: &mut Vec<TokenId>,
        seen: &mut [bool],
    ) -> std::result::Result<bool, String> {
        let n = &self.nodes[node];
        let mut has_end = false;
        if let Some(id) = n.concept {
            if self.keys.get(id.index()).map(Vec::as_slice) != Some(path.as_slice()) {
                return Err(format!("concept {id} does not match its trie path"));
            }
            if std::mem::replace(&mut seen[id.index()], true) {
                return Err(format!("concept {id} marked twice"));
            }
            has_end = true;
        }
        for (&t, &child) in &n.children {
            if t.is_reserved() {
                return Err(format!("reserved edge {t} under node {node}"));
            }
            path.push(t);
            let child_has_end = self.check_node(child, path, seen)?;
            path.pop();
            if !child_has_end {
                return Err(format!("dead-end branch at node {child}"));
            }
            has_end = true;
        }
        Ok(has_end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(ids: &[u32]) -> Vec<TokenId> {
        ids.iter().map(|&i| TokenId(i)).collect()
    }

    #[test]
    fn insert_is_idempotent() {
        let mut s = CognitiveSchema::new();
        let a = s.insert_key(&t(&[5, 6])).unwrap();
        let g = s.generation();
        assert_eq!(a, ConceptId(0));
        assert_eq!(s.insert_key(&t(&[5, 6])).unwrap(), ConceptId(0));
        assert_eq!(s.generation(), g);
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn key_may_prefix_another_key() {
        let mut s = CognitiveSchema::new();
        let a = s.insert_key(&t(&[5])).unwrap();
        let b = s.insert_key(&t(&[5, 6])).unwrap();
        assert_ne!(a, b);
        assert!(s.contains(&t(&[5])));
        assert!(s.contains(&t(&[5, 6])));
        assert_eq!(s.generation(), 2);
    }

    #[test]
    fn insert_rejects_empty_and_reserved() {
        let mut s = CognitiveSchema::new();
        assert!(matches!(s.insert_key(&[]), Err(Error::EmptyKey)));
        assert!(matches!(
            s.insert_key(&[TokenId(4), TokenId::END_OF_KEY]),
            Err(Error::ReservedToken(TokenId::END_OF_KEY))
        ));
        assert!(matches!(
            s.insert_key(&[TokenId::UNKNOWN]),
            Err(Error::ReservedToken(_))
        ));
        assert_eq!(s.generation(), 0);
        assert!(s.is_empty());
    }

    #[test]
    fn contains_edge_cases() {
        let mut s = CognitiveSchema::new();
        assert!(!s.contains(&[]));
        s.insert_key(&t(&[7])).unwrap();
        assert!(s.contains(&t(&[7])));
        assert!(s.contains(&t(&[7, 0])));
        assert!(!s.contains(&t(&[8])));
        assert!(!s.contains(&[]));
    }

    #[test]
    fn empty_prefix_validity_tracks_emptiness() {
        let mut s = CognitiveSchema::new();
        assert!(!s.is_valid_prefix(&[]));
        assert!(matches!(s.allowed_next(&[]), Err(Error::InvalidPrefix)));
        s.insert_key(&t(&[3, 4])).unwrap();
        assert!(s.is_valid_prefix(&[]));
        assert!(s.is_valid_prefix(&t(&[3])));
        assert!(!s.is_valid_prefix(&t(&[4])));
    }

    #[test]
    fn allowed_next_from_trie_shape() {
        let mut s = CognitiveSchema::new();
        s.insert_key(&t(&[2, 3])).unwrap();
        s.insert_key(&t(&[2, 4])).unwrap();
        assert_eq!(
            s.allowed_next(&t(&[2])).unwrap(),
            AllowedNext {
                tokens: t(&[3, 4]),
                may_terminate: false
            }
        );

        let mut s = CognitiveSchema::new();
        s.insert_key(&t(&[2])).unwrap();
        s.insert_key(&t(&[2, 3])).unwrap();
        assert_eq!(
            s.allowed_next(&t(&[2])).unwrap(),
            AllowedNext {
                tokens: t(&[3]),
                may_terminate: true
            }
        );
        assert!(matches!(
            s.allowed_next(&t(&[9])),
            Err(Error::InvalidPrefix)
        ));
    }

    #[test]
    fn enumerate_in_insertion_order() {
        let mut s = CognitiveSchema::new();
        assert_eq!(s.enumerate_keys().count(), 0);
        for k in [&[9u32][..], &[3, 4], &[3]] {
            s.insert_key(&t(k)).unwrap();
        }
        let keys: Vec<_> = s
            .enumerate_keys()
            .map(|(id, k)| (id.0, k.to_vec()))
            .collect();
        assert_eq!(keys, vec![(0, t(&[9])), (1, t(&[3, 4])), (2, t(&[3]))]);
        s.check_structure().unwrap();
    }
}
