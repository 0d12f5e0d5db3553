//! Next-token log-probability sources.
//!
//! [`LanguageModel`] is the only thing the decoder needs from a model. The
//! [`MockLm`] variants implement it deterministically so the whole engine can
//! run offline and be tested exactly.
//!
//! # Table format
//!
//! ```text
//! mocklm-table 1
//! # comment
//! rule <context-pattern> | <prefix> | <token>=<prob> ... [*=<prob>]
//! answer <query-pattern> | <canned answer text>
//! ```
//!
//! A pattern is `*` (matches anything) or a phrase that must occur as whole
//! words in the normalized context. The prefix is `-` for the empty prefix or
//! space-separated tokens (`<eok>` may appear, which is how multi-key free
//! generation is scripted). Probabilities are non-negative weights; `0` maps
//! to a log-probability of −∞, `*` assigns a weight to every unlisted id and
//! without it unlisted ids get −∞. The first matching rule in file order
//! wins; when none matches the model is uniform over the vocabulary.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::text_model::{normalize, TokenId, Vocabulary, END_OF_KEY_STR, UNKNOWN_STR};

pub const TABLE_HEADER: &str = "mocklm-table";
pub const TABLE_VERSION: u32 = 1;

pub trait LanguageModel {
    /// Log-probabilities for the next action, indexed by token id over the
    /// whole current vocabulary (reserved ids included). Entries may be −∞.
    /// Must be deterministic for identical `(context, prefix)`.
    fn next_logprobs(
        &self,
        context: &str,
        prefix: &[TokenId],
        vocab: &Vocabulary,
    ) -> Result<Vec<f64>>;

    /// Words the model can emit; the engine interns these before decoding so
    /// they have ids.
    fn vocabulary_words(&self) -> Vec<String> {
        Vec::new()
    }

    /// Free-text answer generation, if the model supports it.
    fn synthesize(&self, _context: &str, _query: &str) -> Option<String> {
        None
    }
}

fn uniform(vocab: &Vocabulary) -> Vec<f64> {
    let n = vocab.len();
    vec![-(n as f64).ln(); n]
}

fn weight_to_logprob(w: f64) -> f64 {
    if w == 0.0 {
        f64::NEG_INFINITY
    } else {
        w.ln()
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Pattern {
    Any,
    /// Normalized words joined and padded with single spaces.
    Phrase(String),
}

impl Pattern {
    fn parse(raw: &str) -> Option<Pattern> {
        let raw = raw.trim();
        if raw == "*" {
            return Some(Pattern::Any);
        }
        let words = normalize(raw);
        if words.is_empty() {
            return None;
        }
        Some(Pattern::Phrase(format!(" {} ", words.join(" "))))
    }

    fn matches(&self, padded_text: &str) -> bool {
        match self {
            Pattern::Any => true,
            Pattern::Phrase(p) => padded_text.contains(p.as_str()),
        }
    }
}

fn padded(text: &str) -> String {
    format!(" {} ", normalize(text).join(" "))
}

#[derive(Clone, Debug, PartialEq)]
struct Rule {
    pattern: Pattern,
    prefix: Vec<String>,
    weights: Vec<(String, f64)>,
    rest: Option<f64>,
}

/// Explicit per-(context, prefix) distributions read from a table file.
#[derive(Clone, Debug, PartialEq)]
pub struct TableLm {
    rules: Vec<Rule>,
    answers: Vec<(Pattern, String)>,
    words: Vec<String>,
}

fn check_token(tok: &str, line: usize) -> Result<()> {
    if tok == END_OF_KEY_STR || tok == UNKNOWN_STR {
        return Ok(());
    }
    if normalize(tok) != [tok] {
        return Err(Error::Parse {
            line,
            message: format!("token {tok:?} is not a single normalized word"),
        });
    }
    Ok(())
}

impl TableLm {
    pub fn parse(text: &str) -> Result<TableLm> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let header = lines
            .by_ref()
            .find(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        match header {
            Some((_, l)) if l == format!("{TABLE_HEADER} {TABLE_VERSION}") => {}
            Some((line, l)) => {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "expected header \"{TABLE_HEADER} {TABLE_VERSION}\", found {l:?}"
                    ),
                })
            }
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "missing table header".into(),
                })
            }
        }

        let mut rules = Vec::new();
        let mut answers = Vec::new();
        let mut words = Vec::new();
        let mut seen = HashSet::new();
        let mut note_word = |w: &str| {
            if w != END_OF_KEY_STR && w != UNKNOWN_STR && seen.insert(w.to_owned()) {
                words.push(w.to_owned());
            }
        };
        for (line, l) in lines {
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse { line, message };
            let (kind, body) = l.split_once(char::is_whitespace).unwrap_or((l, ""));
            let fields: Vec<&str> = body.split('|').map(str::trim).collect();
            match kind {
                "rule" => {
                    let [pattern, prefix, dist] = fields[..] else {
                        return Err(err("rule needs 3 '|'-separated fields".into()));
                    };
                    let pattern = Pattern::parse(pattern)
                        .ok_or_else(|| err("empty context pattern".into()))?;
                    let prefix: Vec<String> = if prefix == "-" {
                        Vec::new()
                    } else {
                        prefix.split_whitespace().map(str::to_owned).collect()
                    };
                    for p in &prefix {
                        check_token(p, line)?;
                        note_word(p);
                    }
                    let mut weights = Vec::new();
                    let mut rest = None;
                    for entry in dist.split_whitespace() {
                        let (tok, w) = entry
                            .rsplit_once('=')
                            .ok_or_else(|| err(format!("expected token=prob, found {entry:?}")))?;
                        let w: f64 = w
                            .parse()
                            .map_err(|_| err(format!("bad probability in {entry:?}")))?;
                        if !w.is_finite() || w < 0.0 {
                            return Err(err(format!(
                                "probability must be finite and >= 0 in {entry:?}"
                            )));
                        }
                        if tok == "*" {
                            rest = Some(w);
                        } else {
                            check_token(tok, line)?;
                            note_word(tok);
                            weights.push((tok.to_owned(), w));
                        }
                    }
                    if weights.is_empty() && rest.is_none() {
                        return Err(err("rule has an empty distribution".into()));
                    }
                    rules.push(Rule {
                        pattern,
                        prefix,
                        weights,
                        rest,
                    });
                }
                "answer" => {
                    let [pattern, answer] = fields[..] else {
                        return Err(err("answer needs 2 '|'-separated fields".into()));
                    };
                    let pattern =
                        Pattern::parse(pattern).ok_or_else(|| err("empty query pattern".into()))?;
                    answers.push((pattern, answer.to_owned()));
                }
                other => return Err(err(format!("unknown directive {other:?}"))),
            }
        }
        Ok(TableLm {
            rules,
            answers,
            words,
        })
    }

    fn find_rule(&self, context: &str, prefix: &[TokenId], vocab: &Vocabulary) -> Option<&Rule> {
        let ctx = padded(context);
        self.rules.iter().find(|r| {
            r.prefix.len() == prefix.len()
                && r.prefix
                    .iter()
                    .zip(prefix)
                    .all(|(w, &id)| vocab.token(id) == Some(w.as_str()))
                && r.pattern.matches(&ctx)
        })
    }
}

impl LanguageModel for TableLm {
    fn next_logprobs(
        &self,
        context: &str,
        prefix: &[TokenId],
        vocab: &Vocabulary,
    ) -> Result<Vec<f64>> {
        let Some(rule) = self.find_rule(context, prefix, vocab) else {
            return Ok(uniform(vocab));
        };
        let fill = rule.rest.map_or(f64::NEG_INFINITY, weight_to_logprob);
        let mut out = vec![fill; vocab.len()];
        for (tok, w) in &rule.weights {
            if let Some(id) = vocab.get(tok) {
                out[id.index()] = weight_to_logprob(*w);
            }
        }
        Ok(out)
    }

    fn vocabulary_words(&self) -> Vec<String> {
        self.words.clone()
    }

    fn synthesize(&self, _context: &str, query: &str) -> Option<String> {
        let q = padded(query);
        self.answers
            .iter()
            .find(|(p, _)| p.matches(&q))
            .map(|(_, a)| a.clone())
    }
}

/// Corpus-frequency keyword model.
///
/// At the start of a key it proposes corpus words by relative frequency,
/// skipping words already emitted earlier in the prefix; after any word it
/// ends the key. Once every corpus word has been emitted it proposes only
/// end-of-key, which makes greedy free generation list the corpus words by
/// descending frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct UnigramLm {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl UnigramLm {
    pub fn from_corpus(text: &str) -> UnigramLm {
        let mut counts = BTreeMap::new();
        let mut total = 0;
        for w in normalize(text) {
            *counts.entry(w).or_insert(0) += 1;
            total += 1;
        }
        UnigramLm { counts, total }
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }
}

impl LanguageModel for UnigramLm {
    fn next_logprobs(
        &self,
        _context: &str,
        prefix: &[TokenId],
        vocab: &Vocabulary,
    ) -> Result<Vec<f64>> {
        let mut out = vec![f64::NEG_INFINITY; vocab.len()];
        if prefix.last().is_some_and(|&t| t != TokenId::END_OF_KEY) {
            out[TokenId::END_OF_KEY.index()] = 0.0;
            return Ok(out);
        }
        let emitted: HashSet<TokenId> = prefix.iter().copied().collect();
        let mut any = false;
        for (word, &count) in &self.counts {
            if let Some(id) = vocab.get(word).filter(|id| !emitted.contains(id)) {
                out[id.index()] = (count as f64 / self.total as f64).ln();
                any = true;
            }
        }
        if !any {
            out[TokenId::END_OF_KEY.index()] = 0.0;
        }
        Ok(out)
    }

    /// Most frequent first, ties alphabetical.
    fn vocabulary_words(&self) -> Vec<String> {
        let mut words: Vec<(&String, &u64)> = self.counts.iter().collect();
        words.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        words.into_iter().map(|(w, _)| w.clone()).collect()
    }
}

/// Deterministic model used by tests, the CLI and the Python bindings.
#[derive(Clone, Debug, PartialEq)]
pub enum MockLm {
    Table(TableLm),
    Unigram(UnigramLm),
    Uniform,
}

impl MockLm {
    pub fn from_table_str(text: &str) -> Result<MockLm> {
        TableLm::parse(text).map(MockLm::Table)
    }

    pub fn from_table_file(path: impl AsRef<Path>) -> Result<MockLm> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_table_str(&text)
    }

    pub fn unigram_from_file(path: impl AsRef<Path>) -> Result<MockLm> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(MockLm::Unigram(UnigramLm::from_corpus(&text)))
    }
}

impl LanguageModel for MockLm {
    fn next_logprobs(
        &self,
        context: &str,
        prefix: &[TokenId],
        vocab: &Vocabulary,
    ) -> Result<Vec<f64>> {
        match self {
            MockLm::Table(t) => t.next_logprobs(context, prefix, vocab),
            MockLm::Unigram(u) => u.next_logprobs(context, prefix, vocab),
            MockLm::Uniform => Ok(uniform(vocab)),
        }
    }

    fn vocabulary_words(&self) -> Vec<String> {
        match self {
            MockLm::Table(t) => t.vocabulary_words(),
            MockLm::Unigram(u) => u.vocabulary_words(),
            MockLm::Uniform => Vec::new(),
        }
    }

    fn synthesize(&self, context: &str, query: &str) -> Option<String> {
        match self {
            MockLm::Table(t) => t.synthesize(context, query),
            _ => None,
        }
    }
}
