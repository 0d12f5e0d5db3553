//! Schema evolution over an interaction stream.
//!
//! Each turn is first grounded in the existing schema by constrained search
//! (assimilation). If that grounding is poor, or the schema is empty, the
//! constraint is lifted, the model free-generates candidate keys, and
//! candidates that pass validation and are not yet in the schema are
//! inserted (accommodation). Both sets are then counted as one turn in the
//! graph and linked to the stored turn.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::decoder::{
    constrained_beam_search, constrained_distribution, free_generate, sequence_perplexity,
    SearchConfig, SearchStrategy,
};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::schema::{CognitiveSchema, ConceptId};
use crate::store::{TurnId, TurnRecord};
use crate::text_model::{TokenId, TokenSequence, Vocabulary};

pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "am", "an", "and", "any", "are", "as", "at", "be",
    "been", "but", "by", "can", "could", "did", "do", "does", "for", "from", "had", "has", "have",
    "he", "her", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "just", "me",
    "my", "no", "not", "of", "on", "or", "our", "she", "so", "some", "that", "the", "their",
    "them", "then", "there", "they", "this", "to", "too", "up", "us", "was", "we", "were", "what",
    "when", "where", "which", "who", "will", "with", "would", "you", "your",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    /// Accommodate when best-beam perplexity is strictly above this.
    pub perplexity_threshold: f64,
    pub assim_beam: usize,
    pub max_novel_keys: usize,
    pub min_key_len: usize,
    pub max_key_len: usize,
    pub stopwords: Vec<String>,
    pub search: SearchStrategy,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            perplexity_threshold: 20.0,
            assim_beam: 5,
            max_novel_keys: 5,
            min_key_len: 1,
            max_key_len: 4,
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            search: SearchStrategy::Exact,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_owned()));
        if self.perplexity_threshold.is_nan() || self.perplexity_threshold <= 1.0 {
            return bad("perplexity_threshold must be > 1");
        }
        if self.assim_beam == 0 {
            return bad("assim_beam must be >= 1");
        }
        if self.max_novel_keys == 0 {
            return bad("max_novel_keys must be >= 1");
        }
        if self.min_key_len == 0 || self.max_key_len < self.min_key_len {
            return bad("need 1 <= min_key_len <= max_key_len");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub turn_id: TurnId,
    /// Existing concepts the turn was grounded to, best first.
    pub assimilated: Vec<ConceptId>,
    /// Concepts inserted for this turn, in generation order.
    pub accommodated: Vec<ConceptId>,
    pub triggered_accommodation: bool,
    pub unknown_selected: bool,
    /// Best-beam perplexity; absent when the schema was empty.
    pub perplexity: Option<f64>,
    /// Free-generated candidates that failed validation or were already known.
    pub rejected_candidates: usize,
}

/// Whether a free-generated key may be inserted.
pub fn validate_candidate(
    seq: &[TokenId],
    schema: &CognitiveSchema,
    vocab: &Vocabulary,
    cfg: &EvolutionConfig,
) -> bool {
    if seq.len() < cfg.min_key_len || seq.len() > cfg.max_key_len {
        return false;
    }
    let words_ok = seq.iter().all(|&t| {
        !t.is_reserved()
            && vocab
                .token(t)
                .is_some_and(|w| !cfg.stopwords.iter().any(|s| s == w))
    });
    words_ok && !schema.contains(seq)
}

pub fn should_accommodate(
    perplexity: Option<f64>,
    unknown_selected: bool,
    schema_empty: bool,
    cfg: &EvolutionConfig,
) -> bool {
    schema_empty || unknown_selected || perplexity.is_some_and(|p| p > cfg.perplexity_threshold)
}

impl Engine {
    /// Stores `record` and evolves the schema, graph and links for it.
    pub fn process_turn(
        &mut self,
        record: TurnRecord,
        lm: &dyn LanguageModel,
        cfg: &EvolutionConfig,
    ) -> Result<IngestReport> {
        cfg.validate()?;
        let text = record.text.clone();
        let turn_id = self.store.add_turn(record)?;
        self.vocab.tokenize(&text);
        self.prepare_lm(lm);

        let schema_empty = self.schema.is_empty();
        let mut assimilated = Vec::new();
        let mut perplexity = None;
        let mut unknown_selected = false;
        if !schema_empty {
            let longest = self
                .schema
                .enumerate_keys()
                .map(|(_, k)| k.len())
                .max()
                .unwrap_or(1);
            let search = SearchConfig {
                beam: cfg.assim_beam,
                max_len: longest,
                allow_unknown: true,
                strategy: cfg.search,
            };
            let outcome = constrained_beam_search(lm, &self.schema, &self.vocab, &text, &search)?;
            perplexity = Some(match outcome.keys.first() {
                Some(best) => sequence_perplexity(
                    lm,
                    &self.schema,
                    &self.vocab,
                    &text,
                    std::slice::from_ref(&best.tokens),
                    true,
                )?,
                None => f64::INFINITY,
            });
            let root = constrained_distribution(lm, &self.schema, &self.vocab, &text, &[], true)?;
            unknown_selected = root.is_strict_argmax(TokenId::UNKNOWN);
            assimilated = outcome
                .keys
                .iter()
                .filter(|k| k.logprob > f64::NEG_INFINITY)
                .map(|k| k.concept)
                .collect();
        }

        let triggered = should_accommodate(perplexity, unknown_selected, schema_empty, cfg);
        let mut accommodated = Vec::new();
        let mut rejected = 0;
        if triggered {
            // one extra token so over-long keys are seen and rejected
            let candidates = free_generate(
                lm,
                &self.vocab,
                &text,
                cfg.max_novel_keys,
                cfg.max_key_len + 1,
            )?;
            let mut seen: HashSet<TokenSequence> = HashSet::new();
            for cand in candidates {
                if !seen.insert(cand.clone()) {
                    continue;
                }
                if validate_candidate(&cand, &self.schema, &self.vocab, cfg) {
                    accommodated.push(self.insert_concept(&cand)?);
                } else {
                    rejected += 1;
                }
            }
            if accommodated.is_empty() {
                log::warn!("turn {turn_id}: accommodation produced no valid concepts");
            }
        }

        let touched: Vec<ConceptId> = assimilated.iter().chain(&accommodated).copied().collect();
        self.graph.record_turn(&touched)?;
        for &k in &touched {
            self.store.link(k, turn_id)?;
        }
        Ok(IngestReport {
            turn_id,
            assimilated,
            accommodated,
            triggered_accommodation: triggered,
            unknown_selected,
            perplexity,
            rejected_candidates: rejected,
        })
    }
}
