//! Engine persistence.
//!
//! A snapshot is one text file:
//!
//! ```text
//! schemamem-snapshot 1
//! sha256 <hex digest of everything after this line>
//! <pretty-printed JSON payload>
//! ```
//!
//! The payload holds the vocabulary, schema keys, graph counts, turns and
//! links, all in id order, so saving the same state always produces the same
//! bytes. Loading verifies the checksum and every referential invariant.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::graph::AssociativeGraph;
use crate::schema::{CognitiveSchema, ConceptId};
use crate::store::{MemoryStore, Turn, TurnId, TurnRecord};
use crate::text_model::Vocabulary;

pub const SNAPSHOT_MAGIC: &str = "schemamem-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyEntry {
    id: ConceptId,
    tokens: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphEntry {
    turns: u64,
    df: Vec<u64>,
    cooc: Vec<(ConceptId, ConceptId, u64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkEntry {
    concept: ConceptId,
    turns: Vec<TurnId>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Payload {
    vocabulary: Vec<String>,
    keys: Vec<KeyEntry>,
    graph: GraphEntry,
    turns: Vec<Turn>,
    links: Vec<LinkEntry>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptSnapshot(msg.into())
}

impl Engine {
    pub fn to_snapshot_string(&self) -> String {
        let keys = self
            .schema
            .enumerate_keys()
            .map(|(id, k)| KeyEntry {
                id,
                tokens: k
                    .iter()
                    .map(|&t| self.vocab.token(t).unwrap_or_default().to_owned())
                    .collect(),
            })
            .collect();
        let df = (0..self.schema.len())
            .map(|i| self.graph.df(ConceptId(i as u32)).unwrap_or(0))
            .collect();
        let links = (0..self.schema.len())
            .map(|i| {
                let concept = ConceptId(i as u32);
                LinkEntry {
                    concept,
                    turns: self
                        .store
                        .links_of(concept)
                        .map(|s| s.iter().copied().collect())
                        .unwrap_or_default(),
                }
            })
            .collect();
        let payload = Payload {
            vocabulary: self.vocab.words().map(|(_, w)| w.to_owned()).collect(),
            keys,
            graph: GraphEntry {
                turns: self.graph.turn_count(),
                df,
                cooc: self.graph.edges().collect(),
            },
            turns: self.store.turns().to_vec(),
            links,
        };
        let mut body = serde_json::to_string_pretty(&payload).expect("snapshot payload serializes");
        body.push('\n');
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        format!("{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}\nsha256 {digest}\n{body}")
    }

    pub fn from_snapshot_str(text: &str) -> Result<Engine> {
        let (header, rest) = text
            .split_once('\n')
            .ok_or_else(|| corrupt("missing header"))?;
        let version = header
            .strip_prefix(SNAPSHOT_MAGIC)
            .and_then(|v| v.strip_prefix(' '))
            .ok_or_else(|| corrupt("not a snapshot file"))?;
        if version != SNAPSHOT_VERSION.to_string() {
            return Err(Error::VersionMismatch {
                found: version.to_owned(),
                supported: SNAPSHOT_VERSION,
            });
        }
        let (sum_line, body) = rest
            .split_once('\n')
            .ok_or_else(|| corrupt("missing checksum"))?;
        let expected = sum_line
            .strip_prefix("sha256 ")
            .ok_or_else(|| corrupt("missing checksum"))?;
        if hex::encode(Sha256::digest(body.as_bytes())) != expected {
            return Err(corrupt("checksum mismatch"));
        }
        let payload: Payload = serde_json::from_str(body).map_err(|e| corrupt(e.to_string()))?;
        Self::from_payload(payload)
    }

    fn from_payload(p: Payload) -> Result<Engine> {
        let mut vocab = Vocabulary::new();
        for (i, w) in p.vocabulary.iter().enumerate() {
            if vocab.intern(w).index() != i + 2 {
                return Err(corrupt(format!(
                    "duplicate or reserved vocabulary entry {w:?}"
                )));
            }
        }
        let mut schema = CognitiveSchema::new();
        for (i, k) in p.keys.iter().enumerate() {
            let seq = k
                .tokens
                .iter()
                .map(|w| {
                    vocab
                        .get(w)
                        .ok_or_else(|| corrupt(format!("key token {w:?} not in vocabulary")))
                })
                .collect::<Result<Vec<_>>>()?;
            let id = schema
                .insert_key(&seq)
                .map_err(|e| corrupt(format!("key {}: {e}", k.id)))?;
            if id != k.id || id.index() != i {
                return Err(corrupt(format!("key {} out of order or duplicated", k.id)));
            }
        }
        if p.graph.df.len() != schema.len() {
            return Err(corrupt("graph df length differs from key count"));
        }
        let graph = AssociativeGraph::from_counts(p.graph.turns, p.graph.df, &p.graph.cooc)
            .map_err(corrupt)?;

        let mut store = MemoryStore::new();
        store.register_concepts(schema.len());
        for t in p.turns {
            store
                .add_turn(TurnRecord {
                    session_id: t.session_id,
                    turn_id: Some(t.turn_id),
                    speaker: t.speaker,
                    text: t.text,
                    timestamp: t.timestamp,
                })
                .map_err(|e| corrupt(format!("turn {}: {e}", t.turn_id)))?;
        }
        if p.links.len() != schema.len() {
            return Err(corrupt("link table length differs from key count"));
        }
        for (i, l) in p.links.iter().enumerate() {
            if l.concept.index() != i {
                return Err(corrupt("link table out of order"));
            }
            for &t in &l.turns {
                store
                    .link(l.concept, t)
                    .map_err(|e| corrupt(e.to_string()))?;
            }
        }
        Ok(Engine {
            vocab,
            schema,
            graph,
            store,
        })
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_snapshot_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Engine> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_snapshot_str(&text)
    }
}
