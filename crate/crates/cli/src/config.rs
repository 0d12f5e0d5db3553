//! Engine configuration file.
//!
//! ```toml
//! snapshot = "memory.snap"      # relative to this file
//!
//! [lm]
//! kind = "mock-table"           # mock-table | mock-unigram | uniform
//! path = "model.table"
//!
//! [evolution]
//! perplexity_threshold = 20.0
//!
//! [recall]
//! hops = 1
//! mode = { kind = "top_k", m = 3 }
//! ```
//!
//! Every section is optional. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use schemamem_core::{Error, EvolutionConfig, MockLm, RecallConfig};
use serde::Deserialize;

use crate::error::CliError;

pub const CONFIG_ENV: &str = "SCHEMAMEM_CONFIG";
pub const DEFAULT_CONFIG: &str = "schemamem.toml";
pub const DEFAULT_SNAPSHOT: &str = "schemamem.snap";

#[derive(Clone, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum LmConfig {
    MockTable {
        path: PathBuf,
    },
    MockUnigram {
        path: PathBuf,
    },
    #[default]
    Uniform,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub snapshot: Option<PathBuf>,
    pub lm: LmConfig,
    pub evolution: EvolutionConfig,
    pub recall: RecallConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base: PathBuf,
}

impl EngineConfig {
    /// Explicit path first, then the environment variable, then
    /// `schemamem.toml` in the working directory if it exists, else defaults.
    pub fn locate(explicit: Option<&Path>) -> Result<EngineConfig, CliError> {
        let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        match explicit.map(Path::to_path_buf).or(from_env) {
            Some(p) => Self::load(&p),
            None if Path::new(DEFAULT_CONFIG).is_file() => Self::load(Path::new(DEFAULT_CONFIG)),
            None => Ok(EngineConfig {
                base: PathBuf::from("."),
                ..Default::default()
            }),
        }
    }

    pub fn load(path: &Path) -> Result<EngineConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: EngineConfig = toml::from_str(&text)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        cfg.evolution
            .validate()
            .and_then(|_| cfg.recall.validate())
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if cfg.base.as_os_str().is_empty() {
            cfg.base = PathBuf::from(".");
        }
        Ok(cfg)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn snapshot_path(&self) -> PathBuf {
        self.resolve(
            self.snapshot
                .as_deref()
                .unwrap_or(Path::new(DEFAULT_SNAPSHOT)),
        )
    }

    pub fn language_model(&self) -> Result<MockLm, CliError> {
        let lm = match &self.lm {
            LmConfig::MockTable { path } => {
                let path = self.resolve(path);
                MockLm::from_table_file(&path).map_err(|e| match e {
                    Error::Parse { .. } => CliError::Parse(format!("{}: {e}", path.display())),
                    other => other.into(),
                })?
            }
            LmConfig::MockUnigram { path } => MockLm::unigram_from_file(self.resolve(path))?,
            LmConfig::Uniform => MockLm::Uniform,
        };
        Ok(lm)
    }
}
