//! The engine ties vocabulary, schema, graph and store together.
//!
//! Mutation goes through `&mut Engine` (ingestion, concept insertion,
//! snapshot load) and queries through `&Engine`, so the borrow checker
//! enforces the single-writer / many-reader contract.

use serde::Serialize;

use crate::error::Result;
use crate::graph::AssociativeGraph;
use crate::lm::LanguageModel;
use crate::schema::{CognitiveSchema, ConceptId};
use crate::store::{MemoryStore, TurnId, TurnRecord};
use crate::text_model::{TokenId, Vocabulary};

#[derive(Clone, Debug, Default)]
pub struct Engine {
    pub(crate) vocab: Vocabulary,
    pub(crate) schema: CognitiveSchema,
    pub(crate) graph: AssociativeGraph,
    pub(crate) store: MemoryStore,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdfEntry {
    pub concept: ConceptId,
    pub key: String,
    pub idf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EngineStats {
    pub turns: u64,
    pub concepts: usize,
    pub edges: usize,
    pub vocabulary: usize,
    /// Highest-idf observed concepts, ties by id.
    pub top_idf: Vec<IdfEntry>,
}

impl std::fmt::Display for EngineStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "turns: {}", self.turns)?;
        writeln!(f, "concepts: {}", self.concepts)?;
        writeln!(f, "edges: {}", self.edges)?;
        writeln!(f, "vocabulary: {}", self.vocabulary)?;
        writeln!(f, "top_idf:")?;
        for e in &self.top_idf {
            writeln!(f, "  {}\t{:.6}\t{}", e.concept, e.idf, e.key)?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct JsonNode<'a> {
    id: ConceptId,
    key: &'a str,
}

#[derive(Serialize)]
struct JsonEdge {
    u: ConceptId,
    v: ConceptId,
    cooc: u64,
    weight: f64,
}

#[derive(Serialize)]
struct JsonGraph<'a> {
    nodes: Vec<JsonNode<'a>>,
    edges: Vec<JsonEdge>,
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

impl Engine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn schema(&self) -> &CognitiveSchema {
        &self.schema
    }

    pub fn graph(&self) -> &AssociativeGraph {
        &self.graph
    }

    pub fn store(&self) -> &MemoryStore {
        &self.store
    }

    /// Interns the words a model can emit so they have token ids.
    pub fn prepare_lm(&mut self, lm: &dyn LanguageModel) {
        for w in lm.vocabulary_words() {
            self.vocab.intern(&w);
        }
    }

    pub(crate) fn insert_concept(&mut self, seq: &[TokenId]) -> Result<ConceptId> {
        let id = self.schema.insert_key(seq)?;
        self.graph.register_concepts(self.schema.len());
        self.store.register_concepts(self.schema.len());
        Ok(id)
    }

    /// Tokenizes `text` and inserts it as a key.
    pub fn add_concept(&mut self, text: &str) -> Result<ConceptId> {
        let seq = self.vocab.tokenize(text);
        self.insert_concept(&seq)
    }

    pub fn concept_id(&self, text: &str) -> Option<ConceptId> {
        self.vocab
            .lookup_text(text)
            .and_then(|seq| self.schema.lookup(&seq))
    }

    /// Space-joined key text of a concept.
    pub fn concept_text(&self, id: ConceptId) -> Option<String> {
        let key = self.schema.key(id)?;
        self.vocab.detokenize(key).ok()
    }

    /// Stores a turn annotated with externally chosen concept keys, bypassing
    /// the language model: keys are inserted if new, the turn is counted in
    /// the graph and every key is linked to it.
    pub fn ingest_annotated(
        &mut self,
        record: TurnRecord,
        concepts: &[&str],
    ) -> Result<(TurnId, Vec<ConceptId>)> {
        let text = record.text.clone();
        let turn = self.store.add_turn(record)?;
        self.vocab.tokenize(&text);
        let mut ids = Vec::with_capacity(concepts.len());
        for c in concepts {
            ids.push(self.add_concept(c)?);
        }
        self.graph.record_turn(&ids)?;
        for &k in &ids {
            self.store.link(k, turn)?;
        }
        Ok((turn, ids))
    }

    pub fn stats(&self, top: usize) -> EngineStats {
        let mut top_idf: Vec<IdfEntry> = self
            .schema
            .enumerate_keys()
            .filter_map(|(id, _)| {
                let idf = self.graph.idf(id).ok()?;
                Some(IdfEntry {
                    concept: id,
                    key: self.concept_text(id)?,
                    idf,
                })
            })
            .collect();
        top_idf.sort_by(|a, b| b.idf.total_cmp(&a.idf).then(a.concept.cmp(&b.concept)));
        top_idf.truncate(top);
        EngineStats {
            turns: self.graph.turn_count(),
            concepts: self.schema.len(),
            edges: self.graph.edge_count(),
            vocabulary: self.vocab.len(),
            top_idf,
        }
    }

    fn edge_rows(&self) -> Vec<JsonEdge> {
        self.graph
            .edges()
            .map(|(u, v, cooc)| JsonEdge {
                u,
                v,
                cooc,
                weight: self.graph.edge_weight(u, v).unwrap_or(0.0),
            })
            .collect()
    }

    /// Undirected DOT graph; nodes by concept id, edges by `(u, v)`.
    pub fn export_dot(&self) -> String {
        let mut out = String::from("graph schema {\n");
        for (id, key) in self.schema.enumerate_keys() {
            let label = self.vocab.detokenize(key).unwrap_or_default();
            out.push_str(&format!("  c{id} [label=\"{}\"];\n", dot_escape(&label)));
        }
        for e in self.edge_rows() {
            out.push_str(&format!(
                "  c{} -- c{} [cooc={}, weight={:.6}];\n",
                e.u, e.v, e.cooc, e.weight
            ));
        }
        out.push_str("}\n");
        out
    }

    /// `{"nodes": [{id, key}], "edges": [{u, v, cooc, weight}]}`.
    pub fn export_json(&self) -> String {
        let labels: Vec<String> = self
            .schema
            .enumerate_keys()
            .map(|(_, k)| self.vocab.detokenize(k).unwrap_or_default())
            .collect();
        let doc = JsonGraph {
            nodes: labels
                .iter()
                .enumerate()
                .map(|(i, key)| JsonNode {
                    id: ConceptId(i as u32),
                    key,
                })
                .collect(),
            edges: self.edge_rows(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("graph serializes");
        s.push('\n');
        s
    }
}
