//! Constructive recall: seed concepts from constrained search, spread
//! activation over the associative graph, then gather the linked turns into
//! a context block.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::decoder::{constrained_beam_search, SearchConfig, SearchStrategy};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::graph::PropagationMode;
use crate::lm::LanguageModel;
use crate::schema::ConceptId;
use crate::store::Turn;

pub const SYNTHESIS_FALLBACK_MARKER: &str = "# no synthesis available; assembled context follows";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecallConfig {
    pub beam: usize,
    pub hops: usize,
    pub temperature: f64,
    pub mode: PropagationMode,
    /// Cap on seeds plus context concepts.
    pub k_max: usize,
    /// Character budget for the assembled context.
    pub char_budget: usize,
    pub search: SearchStrategy,
}

impl Default for RecallConfig {
    fn default() -> Self {
        RecallConfig {
            beam: 5,
            hops: 1,
            temperature: 1.0,
            mode: PropagationMode::TopK { m: 3 },
            k_max: 35,
            char_budget: 4000,
            search: SearchStrategy::Exact,
        }
    }
}

impl RecallConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.beam == 0 {
            return bad("beam must be >= 1".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be > 0, got {}", self.temperature));
        }
        // seeds are never evicted, so they must fit under the cap
        if self.k_max < self.beam {
            return bad(format!(
                "k_max ({}) must be >= beam ({})",
                self.k_max, self.beam
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedConcept {
    pub concept: ConceptId,
    pub key: String,
    pub logprob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextConcept {
    pub concept: ConceptId,
    pub key: String,
    pub hop: usize,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecallResult {
    pub seeds: Vec<SeedConcept>,
    pub context_concepts: Vec<ContextConcept>,
    pub evidence: Vec<Turn>,
    pub context_text: String,
    pub truncated: bool,
}

impl RecallResult {
    /// Every concept named in the result, seeds first.
    pub fn concepts(&self) -> impl Iterator<Item = ConceptId> + '_ {
        self.seeds
            .iter()
            .map(|s| s.concept)
            .chain(self.context_concepts.iter().map(|c| c.concept))
    }

    /// Line-oriented text record used by the CLI and golden tests.
    pub fn to_record(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seeds: {}", self.seeds.len());
        for s in &self.seeds {
            let _ = writeln!(out, "  {}\t{:.6}\t{}", s.concept, s.logprob, s.key);
        }
        let _ = writeln!(out, "context_concepts: {}", self.context_concepts.len());
        for c in &self.context_concepts {
            let _ = writeln!(
                out,
                "  {}\thop={}\tp={:.6}\t{}",
                c.concept, c.hop, c.prob, c.key
            );
        }
        let ids: Vec<String> = self
            .evidence
            .iter()
            .map(|t| t.turn_id.to_string())
            .collect();
        let _ = writeln!(out, "evidence: {}", ids.join(" "));
        let _ = writeln!(out, "truncated: {}", self.truncated);
        let _ = writeln!(out, "context:");
        if !self.context_text.is_empty() {
            let _ = writeln!(out, "{}", self.context_text);
        }
        out
    }
}

fn render(turn: &Turn) -> String {
    format!(
        "[{}/{} {}] {}",
        turn.session_id, turn.turn_id, turn.speaker, turn.text
    )
}

/// Renders turns as `[session/turn speaker] text` lines. Whole turns are
/// dropped from the oldest end until the text fits `budget` characters.
pub fn assemble_context(evidence: &[Turn], budget: usize) -> (String, bool) {
    let lines: Vec<String> = evidence.iter().map(render).collect();
    let lens: Vec<usize> = lines.iter().map(|l| l.chars().count()).collect();
    let mut start = 0;
    let mut total: usize = lens.iter().sum::<usize>() + lens.len().saturating_sub(1);
    while start < lines.len() && total > budget {
        total -= lens[start] + usize::from(start + 1 < lines.len());
        start += 1;
    }
    (lines[start..].join("\n"), start > 0)
}

/// Final answer from the model when it can synthesize, otherwise the
/// context echoed under a marker line.
pub fn synthesis_hook(context: &str, query: &str, lm: &dyn LanguageModel) -> String {
    lm.synthesize(context, query)
        .unwrap_or_else(|| format!("{SYNTHESIS_FALLBACK_MARKER}\n{context}"))
}

impl Engine {
    pub fn recall(
        &self,
        query: &str,
        lm: &dyn LanguageModel,
        cfg: &RecallConfig,
    ) -> Result<RecallResult> {
        cfg.validate()?;
        if self.schema.is_empty() {
            return Err(Error::EmptySchema);
        }
        let longest = self
            .schema
            .enumerate_keys()
            .map(|(_, k)| k.len())
            .max()
            .unwrap_or(1);
        let search = SearchConfig {
            beam: cfg.beam,
            max_len: longest,
            allow_unknown: false,
            strategy: cfg.search,
        };
        let outcome = constrained_beam_search(lm, &self.schema, &self.vocab, query, &search)?;
        let seeds: Vec<SeedConcept> = outcome
            .keys
            .into_iter()
            .filter(|k| k.logprob > f64::NEG_INFINITY)
            .map(|k| SeedConcept {
                key: self.vocab.detokenize(&k.tokens).unwrap_or_default(),
                concept: k.concept,
                logprob: k.logprob,
            })
            .collect();
        let seed_ids: Vec<ConceptId> = seeds.iter().map(|s| s.concept).collect();

        // propagate already orders by hop, probability, id: that is the
        // order in which the cap keeps context concepts
        let mut activations =
            self.graph
                .propagate(&seed_ids, cfg.hops, cfg.temperature, cfg.mode)?;
        activations.truncate(cfg.k_max - seeds.len());
        let context_concepts: Vec<ContextConcept> = activations
            .into_iter()
            .map(|a| ContextConcept {
                concept: a.concept,
                key: self.concept_text(a.concept).unwrap_or_default(),
                hop: a.hop,
                prob: a.prob,
            })
            .collect();

        let kept: Vec<ConceptId> = seed_ids
            .iter()
            .copied()
            .chain(context_concepts.iter().map(|c| c.concept))
            .collect();
        let evidence: Vec<Turn> = self
            .store
            .entries_for(&kept)?
            .into_iter()
            .cloned()
            .collect();
        let (context_text, truncated) = assemble_context(&evidence, cfg.char_budget);
        Ok(RecallResult {
            seeds,
            context_concepts,
            evidence,
            context_text,
            truncated,
        })
    }
}
