//! Long-term memory for conversational agents built on schema-constrained
//! generation.
//!
//! Memory keys live in a prefix trie (the schema). A language model reaches
//! memory only through decoding that is masked to the trie, so every key it
//! produces exists. Co-occurrence statistics over dialogue turns form an
//! IDF-weighted associative graph used to spread activation from the decoded
//! seeds, and the schema grows as turns arrive: inputs the current keys
//! cannot explain trigger unconstrained extraction of new keys.
//!
//! ```
//! use schemamem_core::{Engine, EvolutionConfig, MockLm, RecallConfig, TurnRecord};
//!
//! let lm = MockLm::from_table_str(
//!     "mocklm-table 1\nrule * | - | jazz=1\nrule * | jazz | <eok>=1\n",
//! ).unwrap();
//! let mut engine = Engine::new();
//! engine
//!     .process_turn(TurnRecord::new("s1", "ann", "Jazz tonight?"), &lm, &EvolutionConfig::default())
//!     .unwrap();
//! let result = engine.recall("what music?", &lm, &RecallConfig::default()).unwrap();
//! assert_eq!(result.seeds[0].key, "jazz");
//! ```

pub mod decoder;
pub mod engine;
pub mod error;
pub mod evolution;
pub mod graph;
pub mod lm;
pub mod recall;
pub mod schema;
pub mod snapshot;
pub mod store;
pub mod text_model;

pub use decoder::{
    constrained_beam_search, constrained_distribution, free_generate, rank_cmp,
    sequence_perplexity, BeamSearch, ConstrainedDistribution, ScoredKey, SearchConfig,
    SearchOutcome, SearchStrategy,
};
pub use engine::{Engine, EngineStats};
pub use error::{Error, Result};
pub use evolution::{should_accommodate, validate_candidate, EvolutionConfig, IngestReport};
pub use graph::{softmax, Activation, AssociativeGraph, PropagationMode};
pub use lm::{LanguageModel, MockLm, TableLm, UnigramLm};
pub use recall::{assemble_context, synthesis_hook, RecallConfig, RecallResult};
pub use schema::{AllowedNext, CognitiveSchema, ConceptId};
pub use store::{MemoryStore, Turn, TurnId, TurnRecord};
pub use text_model::{normalize, TokenId, TokenSequence, Vocabulary};
