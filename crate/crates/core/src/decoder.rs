//! Schema-constrained decoding.
//!
//! The model's next-token distribution is masked to the actions the trie
//! permits and renormalized, so no decoding path can leave the validity
//! space and every completed key is a member of the schema. End-of-key is an
//! ordinary scored action, allowed only at end-marked nodes. The unknown
//! token can optionally be offered at the first step as an escape action; it
//! never becomes part of a key.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::schema::{CognitiveSchema, ConceptId};
use crate::text_model::{TokenId, TokenSequence, Vocabulary};

/// Masked and renormalized next-action distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstrainedDistribution {
    /// `(action, log-probability)` ascending by token id. This is exactly the
    /// support: every other action has probability zero.
    pub actions: Vec<(TokenId, f64)>,
    /// The model put no mass on any allowed action, so uniform over the
    /// allowed actions was substituted.
    pub all_mass_pruned: bool,
}

impl ConstrainedDistribution {
    pub fn logprob(&self, action: TokenId) -> f64 {
        self.actions
            .binary_search_by_key(&action, |&(t, _)| t)
            .map_or(f64::NEG_INFINITY, |i| self.actions[i].1)
    }

    pub fn prob(&self, action: TokenId) -> f64 {
        self.logprob(action).exp()
    }

    /// Probabilities over the full id range `0..len`.
    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for &(t, lp) in &self.actions {
            out[t.index()] = lp.exp();
        }
        out
    }

    /// Highest-probability action, lowest id on ties.
    pub fn argmax(&self) -> Option<TokenId> {
        let mut best: Option<(TokenId, f64)> = None;
        for &(t, lp) in &self.actions {
            if best.is_none_or(|(_, b)| lp > b) {
                best = Some((t, lp));
            }
        }
        best.map(|(t, _)| t)
    }

    /// True when `action` beats every other action strictly.
    pub fn is_strict_argmax(&self, action: TokenId) -> bool {
        let lp = self.logprob(action);
        lp > f64::NEG_INFINITY && self.actions.iter().all(|&(t, x)| t == action || x < lp)
    }
}

fn checked_logprobs(
    lm: &dyn LanguageModel,
    vocab: &Vocabulary,
    context: &str,
    prefix: &[TokenId],
) -> Result<Vec<f64>> {
    let lps = lm.next_logprobs(context, prefix, vocab)?;
    if lps.len() != vocab.len() {
        return Err(Error::LanguageModel(format!(
            "returned {} log-probabilities for a vocabulary of {}",
            lps.len(),
            vocab.len()
        )));
    }
    if let Some(i) = lps.iter().position(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(Error::LanguageModel(format!(
            "log-probability for id {i} is {}",
            lps[i]
        )));
    }
    Ok(lps)
}

/// Renormalizes `lps` over `support` (ascending ids).
fn renormalize(lps: &[f64], support: Vec<TokenId>) -> ConstrainedDistribution {
    let max = support
        .iter()
        .map(|t| lps[t.index()])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        let lp = -(support.len() as f64).ln();
        return ConstrainedDistribution {
            actions: support.into_iter().map(|t| (t, lp)).collect(),
            all_mass_pruned: true,
        };
    }
    // shift first, then subtract ln(sum): folding both into one normalizer
    // loses ln(sum) entirely when |max| is huge
    let ln_sum = support
        .iter()
        .map(|t| (lps[t.index()] - max).exp())
        .sum::<f64>()
        .ln();
    ConstrainedDistribution {
        actions: support
            .into_iter()
            .map(|t| (t, (lps[t.index()] - max) - ln_sum))
            .collect(),
        all_mass_pruned: false,
    }
}

fn support(
    schema: &CognitiveSchema,
    prefix: &[TokenId],
    allow_unknown: bool,
) -> Result<Vec<TokenId>> {
    let allowed = schema.allowed_next(prefix)?;
    let mut out = Vec::with_capacity(allowed.tokens.len() + 2);
    if allowed.may_terminate {
        out.push(TokenId::END_OF_KEY);
    }
    if allow_unknown && prefix.is_empty() {
        out.push(TokenId::UNKNOWN);
    }
    out.extend(allowed.tokens);
    Ok(out)
}

/// The model's next-action distribution masked to the schema and
/// renormalized. With `allow_unknown`, the unknown token joins the support
/// at the empty prefix.
pub fn constrained_distribution(
    lm: &dyn LanguageModel,
    schema: &CognitiveSchema,
    vocab: &Vocabulary,
    context: &str,
    prefix: &[TokenId],
    allow_unknown: bool,
) -> Result<ConstrainedDistribution> {
    let support = support(schema, prefix, allow_unknown)?;
    let lps = checked_logprobs(lm, vocab, context, prefix)?;
    Ok(renormalize(&lps, support))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    /// Best-first over the trie; returns the exact top-b keys.
    #[default]
    Exact,
    /// Classic step-synchronous beam that keeps `b` hypotheses per step.
    Synchronous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub beam: usize,
    pub max_len: usize,
    /// Offer the unknown token at the first step.
    pub allow_unknown: bool,
    pub strategy: SearchStrategy,
}

impl SearchConfig {
    pub fn new(beam: usize, max_len: usize) -> Self {
        SearchConfig {
            beam,
            max_len,
            allow_unknown: false,
            strategy: SearchStrategy::Exact,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredKey {
    pub concept: ConceptId,
    pub tokens: TokenSequence,
    /// Raw sum of constrained log-probabilities, end-of-key step included.
    pub logprob: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    /// Distinct keys by descending log-probability, ties by token ids.
    pub keys: Vec<ScoredKey>,
    /// Constrained log-probability of the unknown action at the root, when
    /// it was offered.
    pub unknown_logprob: Option<f64>,
    /// Whether the uniform fallback fired anywhere during the search.
    pub used_fallback: bool,
}

// Ignores the sign of zero.
fn score_cmp(a: f64, b: f64) -> Ordering {
    (a + 0.0).total_cmp(&(b + 0.0))
}

/// Ranking used everywhere: higher score first, then lexicographically
/// smaller tokens.
pub fn rank_cmp(a: (&[TokenId], f64), b: (&[TokenId], f64)) -> Ordering {
    score_cmp(b.1, a.1).then_with(|| a.0.cmp(b.0))
}

#[derive(Clone, Debug)]
struct Hypothesis {
    tokens: TokenSequence,
    score: f64,
    finished: bool,
}

// Max-heap order: best score, then smallest tokens, then finished first.
impl Ord for Hypothesis {
    fn cmp(&self, other: &Self) -> Ordering {
        score_cmp(self.score, other.score)
            .then_with(|| other.tokens.cmp(&self.tokens))
            .then_with(|| self.finished.cmp(&other.finished))
    }
}

impl PartialOrd for Hypothesis {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Hypothesis {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Hypothesis {}

/// Incremental constrained search.
///
/// The search binds to the schema generation it started on; stepping it
/// after the schema has changed fails with [`Error::StaleSchema`].
#[derive(Debug)]
pub struct BeamSearch {
    cfg: SearchConfig,
    context: String,
    generation: u64,
    // exact: frontier; synchronous: current beam
    pool: BinaryHeap<Hypothesis>,
    keys: Vec<ScoredKey>,
    unknown_logprob: Option<f64>,
    used_fallback: bool,
    done: bool,
}

impl BeamSearch {
    pub fn new(schema: &CognitiveSchema, context: &str, cfg: SearchConfig) -> Result<Self> {
        if schema.is_empty() {
            return Err(Error::EmptySchema);
        }
        if cfg.beam == 0 {
            return Err(Error::InvalidArgument(
                "beam width must be at least 1".into(),
            ));
        }
        if cfg.max_len == 0 {
            return Err(Error::InvalidArgument("max_len must be at least 1".into()));
        }
        let mut pool = BinaryHeap::new();
        pool.push(Hypothesis {
            tokens: Vec::new(),
            score: 0.0,
            finished: false,
        });
        Ok(BeamSearch {
            cfg,
            context: context.to_owned(),
            generation: schema.generation(),
            pool,
            keys: Vec::new(),
            unknown_logprob: None,
            used_fallback: false,
            done: false,
        })
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Children of a partial hypothesis. Finished children carry the
    /// end-of-key step in their score.
    fn expand(
        &mut self,
        hyp: &Hypothesis,
        lm: &dyn LanguageModel,
        schema: &CognitiveSchema,
        vocab: &Vocabulary,
    ) -> Result<Vec<Hypothesis>> {
        let root = hyp.tokens.is_empty();
        let dist = constrained_distribution(
            lm,
            schema,
            vocab,
            &self.context,
            &hyp.tokens,
            self.cfg.allow_unknown && root,
        )?;
        self.used_fallback |= dist.all_mass_pruned;
        let mut out = Vec::with_capacity(dist.actions.len());
        for (action, lp) in dist.actions {
            match action {
                TokenId::END_OF_KEY => out.push(Hypothesis {
                    tokens: hyp.tokens.clone(),
                    score: hyp.score + lp,
                    finished: true,
                }),
                TokenId::UNKNOWN => self.unknown_logprob = Some(lp),
                t if hyp.tokens.len() < self.cfg.max_len => {
                    let mut tokens = hyp.tokens.clone();
                    tokens.push(t);
                    out.push(Hypothesis {
                        tokens,
                        score: hyp.score + lp,
                        finished: false,
                    });
                }
                _ => {}
            }
        }
        Ok(out)
    }

    fn accept(&mut self, hyp: Hypothesis, schema: &CognitiveSchema) {
        let concept = schema
            .lookup(&hyp.tokens)
            .expect("finished hypotheses end on end-marked nodes");
        self.keys.push(ScoredKey {
            concept,
            tokens: hyp.tokens,
            logprob: hyp.score,
        });
    }

    /// Advances the search by one step. Returns `true` once it is complete.
    pub fn step(
        &mut self,
        lm: &dyn LanguageModel,
        schema: &CognitiveSchema,
        vocab: &Vocabulary,
    ) -> Result<bool> {
        if self.done {
            return Ok(true);
        }
        if schema.generation() != self.generation {
            return Err(Error::StaleSchema {
                expected: self.generation,
                found: schema.generation(),
            });
        }
        match self.cfg.strategy {
            SearchStrategy::Exact => self.step_exact(lm, schema, vocab)?,
            SearchStrategy::Synchronous => self.step_synchronous(lm, schema, vocab)?,
        }
        Ok(self.done)
    }

    // Pops the best hypothesis. Scores never increase along a path, so a
    // finished hypothesis at the top outranks everything still reachable.
    fn step_exact(
        &mut self,
        lm: &dyn LanguageModel,
        schema: &CognitiveSchema,
        vocab: &Vocabulary,
    ) -> Result<()> {
        let Some(hyp) = self.pool.pop() else {
            self.done = true;
            return Ok(());
        };
        if hyp.finished {
            self.accept(hyp, schema);
            self.done = self.keys.len() >= self.cfg.beam;
        } else {
            for child in self.expand(&hyp, lm, schema, vocab)? {
                self.pool.push(child);
            }
        }
        if self.pool.is_empty() {
            self.done = true;
        }
        Ok(())
    }

    // Expands every live hypothesis, then keeps the best `beam` of finished
    // and live candidates together.
    fn step_synchronous(
        &mut self,
        lm: &dyn LanguageModel,
        schema: &CognitiveSchema,
        vocab: &Vocabulary,
    ) -> Result<()> {
        let current = std::mem::take(&mut self.pool).into_sorted_vec();
        let mut candidates = Vec::new();
        for hyp in current {
            if hyp.finished {
                candidates.push(hyp);
            } else {
                candidates.extend(self.expand(&hyp, lm, schema, vocab)?);
            }
        }
        candidates.sort_by(|a, b| b.cmp(a));
        candidates.truncate(self.cfg.beam);
        if candidates.iter().all(|h| h.finished) {
            for hyp in candidates {
                self.accept(hyp, schema);
            }
            self.done = true;
        } else {
            self.pool.extend(candidates);
        }
        Ok(())
    }

    pub fn run(
        mut self,
        lm: &dyn LanguageModel,
        schema: &CognitiveSchema,
        vocab: &Vocabulary,
    ) -> Result<SearchOutcome> {
        while !self.step(lm, schema, vocab)? {}
        Ok(self.into_outcome())
    }

    pub fn into_outcome(self) -> SearchOutcome {
        SearchOutcome {
            keys: self.keys,
            unknown_logprob: self.unknown_logprob,
            used_fallback: self.used_fallback,
        }
    }
}

/// Up to `cfg.beam` distinct schema keys for `context`.
pub fn constrained_beam_search(
    lm: &dyn LanguageModel,
    schema: &CognitiveSchema,
    vocab: &Vocabulary,
    context: &str,
    cfg: &SearchConfig,
) -> Result<SearchOutcome> {
    BeamSearch::new(schema, context, cfg.clone())?.run(lm, schema, vocab)
}

fn argmax_id(lps: &[f64]) -> TokenId {
    let mut best = 0;
    for (i, &lp) in lps.iter().enumerate().skip(1) {
        if lp > lps[best] {
            best = i;
        }
    }
    TokenId(best as u32)
}

/// Greedy decoding with no schema mask.
///
/// Keys are produced one after another as a single stream `k1 <eok> k2
/// <eok> ...`, and the model sees the whole stream as its prefix. A key ends
/// on end-of-key or after `max_len` tokens. Generation stops after
/// `max_keys` keys, on an empty key, or when the model picks the unknown
/// token (the partial key is dropped). Ties go to the lowest id.
pub fn free_generate(
    lm: &dyn LanguageModel,
    vocab: &Vocabulary,
    context: &str,
    max_keys: usize,
    max_len: usize,
) -> Result<Vec<TokenSequence>> {
    if max_keys == 0 {
        return Err(Error::InvalidArgument("max_keys must be at least 1".into()));
    }
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be at least 1".into()));
    }
    let mut stream = Vec::new();
    let mut keys = Vec::new();
    while keys.len() < max_keys {
        let mut key = Vec::new();
        while key.len() < max_len {
            let lps = checked_logprobs(lm, vocab, context, &stream)?;
            match argmax_id(&lps) {
                TokenId::END_OF_KEY => break,
                TokenId::UNKNOWN => return Ok(keys),
                t => {
                    key.push(t);
                    stream.push(t);
                }
            }
        }
        if key.is_empty() {
            break;
        }
        stream.push(TokenId::END_OF_KEY);
        keys.push(key);
    }
    Ok(keys)
}

/// `exp` of the negative mean constrained log-probability over every step of
/// every key, end-of-key steps included.
pub fn sequence_perplexity(
    lm: &dyn LanguageModel,
    schema: &CognitiveSchema,
    vocab: &Vocabulary,
    context: &str,
    keys: &[TokenSequence],
    allow_unknown: bool,
) -> Result<f64> {
    if keys.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    let mut steps = 0usize;
    for key in keys {
        if !schema.contains(key) {
            return Err(Error::NotInSchema);
        }
        for i in 0..=key.len() {
            let action = key.get(i).copied().unwrap_or(TokenId::END_OF_KEY);
            let dist =
                constrained_distribution(lm, schema, vocab, context, &key[..i], allow_unknown)?;
            total += dist.logprob(action);
            steps += 1;
        }
    }
    Ok((-total / steps as f64).exp())
}
