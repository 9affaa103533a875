//! Dataset ingestion, in-context example selection, batch evaluation with
//! ablation toggles, report emission, and the command-line interface.

pub mod cli;
mod config;
mod dataset;
mod report;
mod run;
mod select;

use thiserror::Error;

pub use config::{
    AblationFlags, AgentsConfig, DatasetConfig, PoolConfig, RunConfig, RunSettings, ToolsConfig,
};
pub use dataset::{
    load_dataset, load_neighbor_file, load_pool_knowledge, most_frequent_answer, DatasetFormat,
    DatasetRecord, ExamplePool, LoadStats, PoolEntry, PoolKnowledge, PoolKnowledgeTable, Split,
};
pub use report::{score_records, EvalReport, SampleRecord};
pub use run::{run_evaluation, run_evaluation_with_backend};
pub use select::{select_in_context_examples, SelectorMode};

use crate::backend::BackendError;
use crate::domain::DomainError;
use crate::orchestrator::VoteError;
use crate::tools::ToolError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("sample {id}: expected 10 gold answers, got {got}")]
    BadGoldCount { id: String, got: usize },
    #[error("duplicate sample id in split: {0}")]
    DuplicateId(String),
    #[error("records missing captions: {}", .0.join(", "))]
    MissingCaptions(Vec<String>),
    #[error("invalid sample {id}: {source}")]
    BadSample {
        id: String,
        #[source]
        source: DomainError,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("sample id not found: {0}")]
    UnknownSampleId(String),
    #[error("requested {n} in-context examples but the pool holds {pool}")]
    PoolTooSmall { n: usize, pool: usize },
    #[error("selector requires a seed")]
    MissingSeed,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error(transparent)]
    Vote(#[from] VoteError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

impl HarnessError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: &std::path::Path, reason: impl ToString) -> Self {
        HarnessError::Parse {
            path: path.display().to_string(),
            reason: reason.to_string(),
        }
    }
}
