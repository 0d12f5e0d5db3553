//! Associative topology over schema concepts.
//!
//! Only raw counts are stored: the number of turns `N`, per-concept document
//! frequency and per-pair co-occurrence. Edge weights are evaluated on demand
//! as `cooc(u, v) · idf(u) · idf(v)` with `idf(k) = ln(N / df(k))`, using the
//! statistics current at call time, so every weight can be recomputed from
//! the turn log alone.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::ConceptId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PropagationMode {
    /// The `m` most probable unvisited neighbors of every frontier node.
    TopK { m: usize },
    /// `count` draws with replacement from every frontier node's transition
    /// distribution; draws landing on visited concepts are discarded.
    Sample { count: usize, seed: u64 },
}

/// A concept reached by propagation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    pub concept: ConceptId,
    /// Hop at which the concept was first reached (1-based).
    pub hop: usize,
    /// Highest transition probability among the edges that reached it.
    pub prob: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AssociativeGraph {
    turns: u64,
    df: Vec<u64>,
    cooc: BTreeMap<(ConceptId, ConceptId), u64>,
    adjacency: Vec<BTreeSet<ConceptId>>,
}

fn pair(u: ConceptId, v: ConceptId) -> (ConceptId, ConceptId) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

/// `exp(w_i / t) / Σ exp(w_j / t)`, computed with the maximum subtracted.
/// Empty input gives empty output.
pub fn softmax(weights: &[f64], temperature: f64) -> Vec<f64> {
    // subtract before dividing so tiny temperatures cannot overflow to inf
    let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = weights
        .iter()
        .map(|w| ((w - max) / temperature).exp())
        .collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

impl AssociativeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a graph from raw counts, checking every count invariant.
    pub fn from_counts(
        turns: u64,
        df: Vec<u64>,
        cooc: &[(ConceptId, ConceptId, u64)],
    ) -> std::result::Result<Self, String> {
        if let Some(i) = df.iter().position(|&d| d > turns) {
            return Err(format!("df of concept {i} exceeds the turn count"));
        }
        let mut g = AssociativeGraph {
            turns,
            adjacency: vec![BTreeSet::new(); df.len()],
            df,
            cooc: BTreeMap::new(),
        };
        for &(u, v, c) in cooc {
            if u >= v || v.index() >= g.df.len() {
                return Err(format!("bad edge ({u}, {v})"));
            }
            if c == 0 || c > g.df[u.index()].min(g.df[v.index()]) {
                return Err(format!(
                    "co-occurrence {c} of ({u}, {v}) inconsistent with df"
                ));
            }
            if g.cooc.insert((u, v), c).is_some() {
                return Err(format!("duplicate edge ({u}, {v})"));
            }
            g.adjacency[u.index()].insert(v);
            g.adjacency[v.index()].insert(u);
        }
        Ok(g)
    }

    /// Makes room for concepts `0..count`.
    pub fn register_concepts(&mut self, count: usize) {
        if count > self.df.len() {
            self.df.resize(count, 0);
            self.adjacency.resize(count, BTreeSet::new());
        }
    }

    pub fn concept_count(&self) -> usize {
        self.df.len()
    }

    pub fn turn_count(&self) -> u64 {
        self.turns
    }

    pub fn edge_count(&self) -> usize {
        self.cooc.len()
    }

    fn check(&self, k: ConceptId) -> Result<()> {
        if k.index() < self.df.len() {
            Ok(())
        } else {
            Err(Error::UnknownConcept(k))
        }
    }

    pub fn df(&self, k: ConceptId) -> Result<u64> {
        self.check(k)?;
        Ok(self.df[k.index()])
    }

    pub fn cooc(&self, u: ConceptId, v: ConceptId) -> Result<u64> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.cooc.get(&pair(u, v)).copied().unwrap_or(0))
    }

    /// Co-occurring pairs `(u, v, count)` with `u < v`, ascending.
    pub fn edges(&self) -> impl Iterator<Item = (ConceptId, ConceptId, u64)> + '_ {
        self.cooc.iter().map(|(&(u, v), &c)| (u, v, c))
    }

    pub fn neighbors(&self, u: ConceptId) -> Result<impl Iterator<Item = ConceptId> + '_> {
        self.check(u)?;
        Ok(self.adjacency[u.index()].iter().copied())
    }

    /// Counts one turn. Duplicates collapse; an empty set still counts as a
    /// turn and a singleton only touches document frequency.
    pub fn record_turn(&mut self, concepts: &[ConceptId]) -> Result<()> {
        for &k in concepts {
            self.check(k)?;
        }
        let set: BTreeSet<ConceptId> = concepts.iter().copied().collect();
        self.turns += 1;
        for &k in &set {
            self.df[k.index()] += 1;
        }
        let items: Vec<ConceptId> = set.into_iter().collect();
        for (i, &u) in items.iter().enumerate() {
            for &v in &items[i + 1..] {
                *self.cooc.entry((u, v)).or_insert(0) += 1;
                self.adjacency[u.index()].insert(v);
                self.adjacency[v.index()].insert(u);
            }
        }
        Ok(())
    }

    /// `ln(N / df(k))`.
    pub fn idf(&self, k: ConceptId) -> Result<f64> {
        let df = self.df(k)?;
        if df == 0 {
            return Err(Error::ConceptNeverObserved(k));
        }
        Ok((self.turns as f64 / df as f64).ln())
    }

    pub fn edge_weight(&self, u: ConceptId, v: ConceptId) -> Result<f64> {
        if u == v {
            return Err(Error::InvalidArgument(format!("self-loop on concept {u}")));
        }
        let c = self.cooc(u, v)?;
        if c == 0 {
            return Ok(0.0);
        }
        // symmetric by construction: multiply in id order
        let (a, b) = pair(u, v);
        Ok(c as f64 * self.idf(a)? * self.idf(b)?)
    }

    /// Softmax of edge weights over the neighbors of `u` at temperature `t`,
    /// ascending by neighbor id.
    pub fn transition_probs(
        &self,
        u: ConceptId,
        temperature: f64,
    ) -> Result<Vec<(ConceptId, f64)>> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive and finite, got {temperature}"
            )));
        }
        self.check(u)?;
        let adj = &self.adjacency[u.index()];
        if adj.is_empty() {
            return Err(Error::IsolatedConcept(u));
        }
        let weights = adj
            .iter()
            .map(|&v| self.edge_weight(u, v))
            .collect::<Result<Vec<_>>>()?;
        Ok(adj
            .iter()
            .copied()
            .zip(softmax(&weights, temperature))
            .collect())
    }

    /// Spreads activation from `seeds` for `hops` hops.
    ///
    /// Hop `h` expands only the concepts first reached at hop `h - 1` (the
    /// seeds for `h = 1`); seeds and concepts reached at earlier hops are
    /// never collected again. Isolated frontier nodes are skipped. The result
    /// is ordered by hop, then descending probability, then concept id.
    pub fn propagate(
        &self,
        seeds: &[ConceptId],
        hops: usize,
        temperature: f64,
        mode: PropagationMode,
    ) -> Result<Vec<Activation>> {
        for &s in seeds {
            self.check(s)?;
        }
        let mut visited: HashSet<ConceptId> = seeds.iter().copied().collect();
        let mut frontier: BTreeSet<ConceptId> = visited.iter().copied().collect();
        let mut rng = match mode {
            PropagationMode::Sample { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
            PropagationMode::TopK { .. } => None,
        };
        let mut out = Vec::new();
        for hop in 1..=hops {
            let mut found: BTreeMap<ConceptId, f64> = BTreeMap::new();
            for &u in &frontier {
                let probs = match self.transition_probs(u, temperature) {
                    Ok(p) => p,
                    Err(Error::IsolatedConcept(_)) => continue,
                    Err(e) => return Err(e),
                };
                let picked: Vec<(ConceptId, f64)> = match mode {
                    PropagationMode::TopK { m } => {
                        let mut cands: Vec<_> = probs
                            .into_iter()
                            .filter(|(v, _)| !visited.contains(v))
                            .collect();
                        cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                        cands.truncate(m);
                        cands
                    }
                    PropagationMode::Sample { count, .. } => {
                        let rng = rng.as_mut().expect("rng exists in sample mode");
                        let index =
                            WeightedIndex::new(probs.iter().map(|&(_, p)| p)).map_err(|e| {
                                Error::InvalidArgument(format!("transition weights: {e}"))
                            })?;
                        (0..count)
                            .map(|_| probs[index.sample(rng)])
                            .filter(|(v, _)| !visited.contains(v))
                            .collect()
                    }
                };
                for (v, p) in picked {
                    let e = found.entry(v).or_insert(p);
                    *e = e.max(p);
                }
            }
            let mut layer: Vec<Activation> = found
                .iter()
                .map(|(&concept, &prob)| Activation { concept, hop, prob })
                .collect();
            layer.sort_by(|a, b| b.prob.total_cmp(&a.prob).then(a.concept.cmp(&b.concept)));
            visited.extend(found.keys().copied());
            frontier = found.into_keys().collect();
            out.extend(layer);
            if frontier.is_empty() {
                break;
            }
        }
        Ok(out)
    }
}
