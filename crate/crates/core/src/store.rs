//! Append-only dialogue turns and the concept → turn links that ground
//! recall in source text.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::ConceptId;

pub type TurnId = u32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub turn_id: TurnId,
    pub session_id: String,
    pub speaker: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

/// One ingestion record. `turn_id`, when present, must equal the id the
/// store would assign.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnRecord {
    pub session_id: String,
    #[serde(default)]
    pub turn_id: Option<TurnId>,
    pub speaker: String,
    pub text: String,
    #[serde(default)]
    pub timestamp: Option<String>,
}

impl TurnRecord {
    pub fn new(session_id: &str, speaker: &str, text: &str) -> Self {
        TurnRecord {
            session_id: session_id.to_owned(),
            speaker: speaker.to_owned(),
            text: text.to_owned(),
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MemoryStore {
    turns: Vec<Turn>,
    links: Vec<BTreeSet<TurnId>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_concepts(&mut self, count: usize) {
        if count > self.links.len() {
            self.links.resize(count, BTreeSet::new());
        }
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn next_turn_id(&self) -> TurnId {
        self.turns.len() as TurnId
    }

    pub fn add_turn(&mut self, record: TurnRecord) -> Result<TurnId> {
        if record.text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        let id = self.next_turn_id();
        if let Some(given) = record.turn_id.filter(|&g| g != id) {
            return Err(Error::InvalidArgument(format!(
                "turn_id {given} out of sequence (expected {id})"
            )));
        }
        self.turns.push(Turn {
            turn_id: id,
            session_id: record.session_id,
            speaker: record.speaker,
            text: record.text,
            timestamp: record.timestamp,
        });
        Ok(id)
    }

    pub fn turn(&self, id: TurnId) -> Option<&Turn> {
        self.turns.get(id as usize)
    }

    /// All turns in id order.
    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn link(&mut self, concept: ConceptId, turn: TurnId) -> Result<()> {
        if turn as usize >= self.turns.len() {
            return Err(Error::UnknownTurn(turn));
        }
        self.links
            .get_mut(concept.index())
            .ok_or(Error::UnknownConcept(concept))?
            .insert(turn);
        Ok(())
    }

    pub fn links_of(&self, concept: ConceptId) -> Result<&BTreeSet<TurnId>> {
        self.links
            .get(concept.index())
            .ok_or(Error::UnknownConcept(concept))
    }

    /// Turns linked to any of `concepts`, deduplicated, chronological.
    pub fn entries_for(&self, concepts: &[ConceptId]) -> Result<Vec<&Turn>> {
        let mut ids: BTreeSet<TurnId> = BTreeSet::new();
        for &k in concepts {
            ids.extend(self.links_of(k)?);
        }
        Ok(ids.into_iter().map(|i| &self.turns[i as usize]).collect())
    }
}
