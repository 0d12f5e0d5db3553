//! Generators and reference implementations shared by the integration
//! tests and the acceptance runner. The reference implementations are
//! deliberately naive: sets instead of tries, dense vectors instead of
//! supports, full enumeration instead of search.

#![allow(dead_code)]

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use schemamem_core::{
    CognitiveSchema, ConceptId, LanguageModel, Result, TokenId, TokenSequence, Vocabulary,
};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn word(i: usize) -> String {
    format!("w{i}")
}

/// A random schema together with the plain key set it was built from.
pub struct Instance {
    pub vocab: Vocabulary,
    pub schema: CognitiveSchema,
    pub oracle: SetSchema,
    /// Word ids, ascending.
    pub words: Vec<TokenId>,
}

/// Between 1 and `max_keys` keys of 1..=`max_len` tokens drawn from
/// `vocab_words` words. Small vocabularies make shared prefixes common.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    max_keys: usize,
    vocab_words: usize,
    max_len: usize,
) -> Instance {
    let mut vocab = Vocabulary::new();
    let words: Vec<TokenId> = (0..vocab_words).map(|i| vocab.intern(&word(i))).collect();
    let mut schema = CognitiveSchema::new();
    let mut keys = BTreeSet::new();
    for _ in 0..rng.gen_range(1..=max_keys) {
        let len = rng.gen_range(1..=max_len);
        let key: TokenSequence = (0..len).map(|_| *words.choose(rng).unwrap()).collect();
        schema.insert_key(&key).unwrap();
        keys.insert(key);
    }
    Instance {
        vocab,
        schema,
        oracle: SetSchema { keys },
        words,
    }
}

/// Schema semantics computed directly from the key set.
#[derive(Clone, Debug, Default)]
pub struct SetSchema {
    pub keys: BTreeSet<TokenSequence>,
}

impl SetSchema {
    /// Membership with one trailing end-of-key ignored.
    pub fn contains(&self, seq: &[TokenId]) -> bool {
        match seq.split_last() {
            Some((&TokenId::END_OF_KEY, body)) => self.keys.contains(body),
            _ => self.keys.contains(seq),
        }
    }

    pub fn is_valid_prefix(&self, seq: &[TokenId]) -> bool {
        self.keys.iter().any(|k| k.starts_with(seq))
    }

    /// Every prefix of every key, the empty prefix included.
    pub fn prefixes(&self) -> BTreeSet<TokenSequence> {
        self.keys
            .iter()
            .flat_map(|k| (0..=k.len()).map(move |i| k[..i].to_vec()))
            .collect()
    }

    pub fn next_tokens(&self, prefix: &[TokenId]) -> BTreeSet<TokenId> {
        self.keys
            .iter()
            .filter(|k| k.len() > prefix.len() && k.starts_with(prefix))
            .map(|k| k[prefix.len()])
            .collect()
    }

    /// Dense support mask over ids `0..n`.
    pub fn mask(&self, prefix: &[TokenId], n: usize, allow_unknown: bool) -> Vec<bool> {
        let mut m = vec![false; n];
        if self.contains(prefix) {
            m[TokenId::END_OF_KEY.index()] = true;
        }
        if allow_unknown && prefix.is_empty() {
            m[TokenId::UNKNOWN.index()] = true;
        }
        for t in self.next_tokens(prefix) {
            m[t.index()] = true;
        }
        m
    }
}

/// Mask-and-renormalize in log space over a dense vector. Falls back to
/// uniform over the mask when the model gives every allowed id −∞.
pub fn oracle_logprobs(lps: &[f64], mask: &[bool]) -> Vec<f64> {
    let allowed: Vec<usize> = (0..lps.len()).filter(|&i| mask[i]).collect();
    let mut out = vec![f64::NEG_INFINITY; lps.len()];
    let m = allowed
        .iter()
        .map(|&i| lps[i])
        .fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        for &i in &allowed {
            out[i] = -(allowed.len() as f64).ln();
        }
        return out;
    }
    let ln_s = allowed
        .iter()
        .map(|&i| (lps[i] - m).exp())
        .sum::<f64>()
        .ln();
    for &i in &allowed {
        out[i] = (lps[i] - m) - ln_s;
    }
    out
}

/// Textbook `p_i = exp(l_i) · 1[allowed] / Σ exp(l_j) · 1[allowed]`, only
/// usable when the denominator neither underflows nor overflows.
pub fn naive_probs(lps: &[f64], mask: &[bool]) -> Option<Vec<f64>> {
    let num: Vec<f64> = lps
        .iter()
        .zip(mask)
        .map(|(&l, &a)| if a { l.exp() } else { 0.0 })
        .collect();
    let z: f64 = num.iter().sum();
    (z.is_finite() && z > 1e-300).then(|| num.iter().map(|x| x / z).collect())
}

/// Every key of length ≤ `max_len` scored root to leaf, ranked by score
/// descending then tokens ascending, cut to `b`.
pub fn oracle_top_b(
    lm: &dyn LanguageModel,
    set: &SetSchema,
    vocab: &Vocabulary,
    context: &str,
    b: usize,
    max_len: usize,
    allow_unknown: bool,
) -> Vec<(TokenSequence, f64)> {
    let n = vocab.len();
    let mut scored: Vec<(TokenSequence, f64)> = set
        .keys
        .iter()
        .filter(|k| k.len() <= max_len)
        .map(|k| {
            let mut score = 0.0;
            for i in 0..=k.len() {
                let lps = lm.next_logprobs(context, &k[..i], vocab).unwrap();
                let lp = oracle_logprobs(&lps, &set.mask(&k[..i], n, allow_unknown));
                let action = k.get(i).copied().unwrap_or(TokenId::END_OF_KEY);
                score += lp[action.index()];
            }
            (k.clone(), score)
        })
        .collect();
    scored.sort_by(|a, b| {
        (b.1 + 0.0)
            .total_cmp(&(a.1 + 0.0))
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.truncate(b);
    scored
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmStyle {
    /// Finite log-probabilities in [-8, 0).
    Smooth,
    /// Half the ids at −∞.
    Sparse,
    /// Values from {0, -1, -2}, so ties are frequent.
    Ties,
    /// Huge magnitudes, subnormal gaps and −∞ mixed together.
    Extreme,
    /// Mass only on reserved ids and a single random word.
    Hostile,
    /// Every id equal.
    Flat,
}

pub const ALL_STYLES: [LmStyle; 6] = [
    LmStyle::Smooth,
    LmStyle::Sparse,
    LmStyle::Ties,
    LmStyle::Extreme,
    LmStyle::Hostile,
    LmStyle::Flat,
];

/// Deterministic pseudo-random model: the output is a pure function of
/// `(seed, context, prefix, vocabulary size)`.
#[derive(Clone, Copy, Debug)]
pub struct FuzzLm {
    pub seed: u64,
    pub style: LmStyle,
}

impl LanguageModel for FuzzLm {
    fn next_logprobs(
        &self,
        context: &str,
        prefix: &[TokenId],
        vocab: &Vocabulary,
    ) -> Result<Vec<f64>> {
        let mut h = DefaultHasher::new();
        (self.seed, context, prefix).hash(&mut h);
        let mut r = ChaCha8Rng::seed_from_u64(h.finish());
        let n = vocab.len();
        let out = match self.style {
            LmStyle::Smooth => (0..n).map(|_| -r.gen_range(0.0..8.0)).collect(),
            LmStyle::Sparse => (0..n)
                .map(|_| {
                    if r.gen_bool(0.5) {
                        f64::NEG_INFINITY
                    } else {
                        -r.gen_range(0.0..5.0)
                    }
                })
                .collect(),
            LmStyle::Ties => (0..n).map(|_| -(r.gen_range(0..3) as f64)).collect(),
            LmStyle::Extreme => {
                const POOL: [f64; 8] = [
                    0.0,
                    -1e300,
                    1e300,
                    -745.0,
                    5e-324,
                    -1e-300,
                    700.0,
                    f64::NEG_INFINITY,
                ];
                (0..n).map(|_| POOL[r.gen_range(0..POOL.len())]).collect()
            }
            LmStyle::Hostile => {
                let mut v = vec![f64::NEG_INFINITY; n];
                v[0] = 0.0;
                v[1] = 0.0;
                if n > 2 {
                    v[r.gen_range(2..n)] = -1.0;
                }
                v
            }
            LmStyle::Flat => vec![0.0; n],
        };
        Ok(out)
    }
}

/// Random table model text over `w0..w{vocab_words}`: rules for a random
/// subset of the given prefixes plus an optional catch-all.
pub fn random_table(
    rng: &mut ChaCha8Rng,
    vocab_words: usize,
    prefixes: &[TokenSequence],
    vocab: &Vocabulary,
) -> String {
    let mut names: Vec<String> = vec!["<eok>".into(), "<unk>".into()];
    names.extend((0..vocab_words).map(word));
    let mut out = String::from("mocklm-table 1\n");
    let mut line = |prefix: &str, rng: &mut ChaCha8Rng| {
        let mut parts = Vec::new();
        for name in &names {
            if rng.gen_bool(0.6) {
                let w = if rng.gen_bool(0.15) {
                    0.0
                } else {
                    rng.gen_range(0.01..3.0)
                };
                parts.push(format!("{name}={w}"));
            }
        }
        if rng.gen_bool(0.4) || parts.is_empty() {
            parts.push(format!("*={}", rng.gen_range(0.01..1.0)));
        }
        out.push_str(&format!("rule * | {prefix} | {}\n", parts.join(" ")));
    };
    for p in prefixes {
        if rng.gen_bool(0.7) {
            let text = if p.is_empty() {
                "-".to_owned()
            } else {
                p.iter()
                    .map(|&t| vocab.token(t).unwrap())
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            line(&text, rng);
        }
    }
    out
}

/// Counts rebuilt from a turn log.
pub struct Recount {
    pub turns: u64,
    pub df: Vec<u64>,
    pub cooc: BTreeMap<(u32, u32), u64>,
}

pub fn recount(n_concepts: usize, log: &[Vec<ConceptId>]) -> Recount {
    let mut df = vec![0u64; n_concepts];
    let mut cooc = BTreeMap::new();
    for turn in log {
        let set: BTreeSet<u32> = turn.iter().map(|c| c.0).collect();
        for &k in &set {
            df[k as usize] += 1;
        }
        for &u in &set {
            for &v in &set {
                if u < v {
                    *cooc.entry((u, v)).or_insert(0) += 1;
                }
            }
        }
    }
    Recount {
        turns: log.len() as u64,
        df,
        cooc,
    }
}

impl Recount {
    pub fn idf(&self, k: u32) -> f64 {
        (self.turns as f64 / self.df[k as usize] as f64).ln()
    }

    pub fn weight(&self, u: u32, v: u32) -> f64 {
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        match self.cooc.get(&(a, b)) {
            None => 0.0,
            Some(&c) => c as f64 * self.idf(a) * self.idf(b),
        }
    }
}

pub fn load_transcript(name: &str) -> Vec<schemamem_core::TurnRecord> {
    std::fs::read_to_string(fixture(name))
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// One row of `evolution_trace.tsv`.
#[derive(Debug)]
pub struct ExpectedTurn {
    pub turn: u32,
    pub assimilated: Vec<ConceptId>,
    pub accommodated: Vec<ConceptId>,
    pub triggered: bool,
    pub unknown: bool,
    pub perplexity: Option<f64>,
    pub rejected: usize,
    pub schema_size: usize,
}

pub fn expected_evolution() -> Vec<ExpectedTurn> {
    let ids = |s: &str| -> Vec<ConceptId> {
        if s == "-" {
            Vec::new()
        } else {
            s.split(',')
                .map(|x| ConceptId(x.parse().unwrap()))
                .collect()
        }
    };
    std::fs::read_to_string(fixture("evolution_trace.tsv"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            ExpectedTurn {
                turn: f[0].parse().unwrap(),
                assimilated: ids(f[1]),
                accommodated: ids(f[2]),
                triggered: f[3].parse().unwrap(),
                unknown: f[4].parse().unwrap(),
                perplexity: (f[5] != "-").then(|| f[5].parse().unwrap()),
                rejected: f[6].parse().unwrap(),
                schema_size: f[7].parse().unwrap(),
            }
        })
        .collect()
}

pub fn evolution_config() -> schemamem_core::EvolutionConfig {
    schemamem_core::EvolutionConfig {
        perplexity_threshold: 1.5,
        ..Default::default()
    }
}

/// Compares one report with its trace row; perplexities to 1e-12.
pub fn report_matches(
    got: &schemamem_core::IngestReport,
    want: &ExpectedTurn,
) -> std::result::Result<(), String> {
    let ppl_ok = match (got.perplexity, want.perplexity) {
        (None, None) => true,
        (Some(a), Some(b)) => (a - b).abs() < 1e-12,
        _ => false,
    };
    if got.turn_id != want.turn
        || got.assimilated != want.assimilated
        || got.accommodated != want.accommodated
        || got.triggered_accommodation != want.triggered
        || got.unknown_selected != want.unknown
        || got.rejected_candidates != want.rejected
        || !ppl_ok
    {
        return Err(format!("turn {}: got {got:?}, want {want:?}", want.turn));
    }
    Ok(())
}

/// The 10-turn travel / music transcript with hand-assigned concepts.
pub fn recall_engine() -> schemamem_core::Engine {
    let mut engine = schemamem_core::Engine::new();
    let concepts = std::fs::read_to_string(fixture("recall_concepts.txt")).unwrap();
    for (rec, line) in load_transcript("recall.jsonl")
        .into_iter()
        .zip(concepts.lines())
    {
        let ks: Vec<&str> = line.split_whitespace().collect();
        engine.ingest_annotated(rec, &ks).unwrap();
    }
    engine
}

pub fn recall_query() -> (
    &'static str,
    schemamem_core::MockLm,
    schemamem_core::RecallConfig,
) {
    let lm = schemamem_core::MockLm::from_table_file(fixture("recall.table")).unwrap();
    let cfg = schemamem_core::RecallConfig {
        beam: 2,
        hops: 1,
        temperature: 1.0,
        mode: schemamem_core::PropagationMode::TopK { m: 2 },
        ..Default::default()
    };
    ("What did I see at sunrise in the Alps?", lm, cfg)
}

/// Four turns where the answer to "where is my passport" sits one hop away
/// from the concept the query names.
pub fn planted_engine() -> schemamem_core::Engine {
    use schemamem_core::TurnRecord;
    let mut e = schemamem_core::Engine::new();
    let turns: [(&str, &[&str]); 4] = [
        (
            "I put my passport in the blue backpack",
            &["passport", "backpack"],
        ),
        (
            "The blue backpack is in the hall closet",
            &["backpack", "closet"],
        ),
        ("Lunch was pasta today", &["pasta"]),
        ("Pasta again, with pesto", &["pasta", "pesto"]),
    ];
    for (text, ks) in turns {
        e.ingest_annotated(TurnRecord::new("s1", "ann", text), ks)
            .unwrap();
    }
    e
}

pub fn planted_lm() -> schemamem_core::MockLm {
    schemamem_core::MockLm::from_table_str(
        "mocklm-table 1\nrule passport | - | passport=1\nrule * | passport | <eok>=1\n",
    )
    .unwrap()
}

/// Checks every (valid prefix, token) pair over the whole id range, plus a
/// ring of invalid prefixes one token past the validity space.
pub fn check_gatekeeper(
    schema: &CognitiveSchema,
    oracle: &SetSchema,
    n_ids: u32,
) -> Result<(), String> {
    schema.check_structure()?;
    for p in oracle.prefixes() {
        if !schema.is_valid_prefix(&p) {
            return Err(format!("prefix {p:?} of a key rejected"));
        }
        let allowed = schema.allowed_next(&p).map_err(|e| e.to_string())?;
        if allowed.may_terminate != oracle.contains(&p) {
            return Err(format!("termination flag wrong at {p:?}"));
        }
        let got: BTreeSet<TokenId> = allowed.tokens.iter().copied().collect();
        if got != oracle.next_tokens(&p) || got.len() != allowed.tokens.len() {
            return Err(format!("allowed set wrong at {p:?}"));
        }
        for t in (0..n_ids).map(TokenId) {
            let mut ext = p.clone();
            ext.push(t);
            let expect = oracle.is_valid_prefix(&ext);
            if schema.is_valid_prefix(&ext) != expect {
                return Err(format!("is_valid_prefix({ext:?}) != {expect}"));
            }
            if expect != got.contains(&t) {
                return Err(format!(
                    "token {t} at {p:?}: membership and validity disagree"
                ));
            }
            if !expect
                && !matches!(
                    schema.allowed_next(&ext),
                    Err(schemamem_core::Error::InvalidPrefix)
                )
            {
                return Err(format!("allowed_next accepted invalid prefix {ext:?}"));
            }
            if schema.contains(&ext) != oracle.contains(&ext) {
                return Err(format!("contains({ext:?}) wrong"));
            }
        }
        // every valid prefix extends to a key
        if !oracle.keys.iter().any(|k| k.starts_with(&p)) {
            return Err(format!("dead end at {p:?}"));
        }
    }
    Ok(())
}
