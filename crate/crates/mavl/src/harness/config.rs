//! Run configuration: a single TOML tree mirrored by CLI flags. Relative
//! paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetFormat, HarnessError, SelectorMode};
use crate::agent::{DEFAULT_N_CANDIDATES, DEFAULT_N_EXAMPLES};
use crate::backend::BackendConfig;
use crate::domain::VoteWeights;
use crate::tools::{DEFAULT_KB_TOP_K, DEFAULT_KNOWLEDGE_CHAR_CAP, DEFAULT_SNIPPET_DELIMITER};
use crate::ParseMode;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub format: DatasetFormat,
    /// OK-VQA question file, or the single A-OKVQA record file.
    pub questions: PathBuf,
    /// OK-VQA annotation file; absent for unlabeled runs or A-OKVQA.
    #[serde(default)]
    pub annotations: Option<PathBuf>,
    pub captions: PathBuf,
    #[serde(default)]
    pub mode: ParseMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolConfig {
    pub format: DatasetFormat,
    pub questions: PathBuf,
    #[serde(default)]
    pub annotations: Option<PathBuf>,
    pub captions: PathBuf,
    /// Precomputed neighbor table: test id -> ordered train ids.
    #[serde(default)]
    pub neighbors: Option<PathBuf>,
    /// Candidate file covering pool ids, for augmented example blocks.
    #[serde(default)]
    pub candidates: Option<PathBuf>,
    /// Precomputed knowledge fields for pool ids.
    #[serde(default)]
    pub knowledge: Option<PathBuf>,
    #[serde(default)]
    pub mode: ParseMode,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AgentsConfig {
    #[serde(default = "default_junior_weight")]
    pub junior_weight: u32,
    #[serde(default = "default_senior_weight")]
    pub senior_weight: u32,
    #[serde(default = "default_manager_weight")]
    pub manager_weight: u32,
}

fn default_junior_weight() -> u32 {
    VoteWeights::default().junior
}

fn default_senior_weight() -> u32 {
    VoteWeights::default().senior
}

fn default_manager_weight() -> u32 {
    VoteWeights::default().manager
}

impl Default for AgentsConfig {
    fn default() -> Self {
        Self {
            junior_weight: default_junior_weight(),
            senior_weight: default_senior_weight(),
            manager_weight: default_manager_weight(),
        }
    }
}

impl AgentsConfig {
    pub fn weights(&self) -> Result<VoteWeights, HarnessError> {
        VoteWeights::new(self.junior_weight, self.senior_weight, self.manager_weight)
            .map_err(HarnessError::from)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolsConfig {
    /// Candidate file covering the evaluation split ids.
    #[serde(default)]
    pub candidates: Option<PathBuf>,
    /// Remote scorer base URL (candidates wire format) as an alternative
    /// to the candidate file.
    #[serde(default)]
    pub scorer_url: Option<String>,
    #[serde(default)]
    pub kb_corpus: Option<PathBuf>,
    /// Prebuilt index sidecar; built from the corpus when absent or stale.
    #[serde(default)]
    pub kb_index: Option<PathBuf>,
    #[serde(default = "default_kb_top_k")]
    pub kb_top_k: usize,
    #[serde(default = "default_snippet_delimiter")]
    pub snippet_delimiter: String,
    #[serde(default = "default_knowledge_char_cap")]
    pub knowledge_char_cap: usize,
    /// JSON list of Context/Question/LLM_Knowledge triplet records for the
    /// knowledge-generation prompt.
    #[serde(default)]
    pub knowledge_examples: Option<PathBuf>,
}

fn default_kb_top_k() -> usize {
    DEFAULT_KB_TOP_K
}

fn default_snippet_delimiter() -> String {
    DEFAULT_SNIPPET_DELIMITER.to_string()
}

fn default_knowledge_char_cap() -> usize {
    DEFAULT_KNOWLEDGE_CHAR_CAP
}

impl Default for ToolsConfig {
    fn default() -> Self {
        Self {
            candidates: None,
            scorer_url: None,
            kb_corpus: None,
            kb_index: None,
            kb_top_k: default_kb_top_k(),
            snippet_delimiter: default_snippet_delimiter(),
            knowledge_char_cap: default_knowledge_char_cap(),
            knowledge_examples: None,
        }
    }
}

/// Runtime toggles mirroring the ablation rows: drop the committee, the
/// tools, or the planners.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct AblationFlags {
    #[serde(default)]
    pub no_multi_agents: bool,
    #[serde(default)]
    pub no_tools: bool,
    #[serde(default)]
    pub no_planners: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSettings {
    #[serde(default = "default_n_examples")]
    pub n_examples: usize,
    #[serde(default = "default_n_candidates")]
    pub n_candidates: usize,
    #[serde(default = "default_selector")]
    pub selector: SelectorMode,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Run the three agent pipelines of one sample concurrently.
    #[serde(default)]
    pub concurrent_agents: bool,
    pub output_dir: PathBuf,
    /// Cap on evaluated samples; 0 means all.
    #[serde(default)]
    pub limit: usize,
}

fn default_n_examples() -> usize {
    DEFAULT_N_EXAMPLES
}

fn default_n_candidates() -> usize {
    DEFAULT_N_CANDIDATES
}

fn default_selector() -> SelectorMode {
    SelectorMode::NeighborFile
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub pool: PoolConfig,
    pub backend: BackendConfig,
    #[serde(default)]
    pub agents: AgentsConfig,
    #[serde(default)]
    pub tools: ToolsConfig,
    #[serde(default)]
    pub ablation: AblationFlags,
    pub run: RunSettings,
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&path);
    }
}

fn resolve_opt(base: &Path, path: &mut Option<PathBuf>) {
    if let Some(p) = path {
        resolve(base, p);
    }
}

impl RunConfig {
    /// Parse a TOML config file, resolving relative paths against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let raw = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut config: RunConfig =
            toml::from_str(&raw).map_err(|e| HarnessError::parse(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        config.resolve_paths(&base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.dataset.questions);
        resolve_opt(base, &mut self.dataset.annotations);
        resolve(base, &mut self.dataset.captions);
        resolve(base, &mut self.pool.questions);
        resolve_opt(base, &mut self.pool.annotations);
        resolve(base, &mut self.pool.captions);
        resolve_opt(base, &mut self.pool.neighbors);
        resolve_opt(base, &mut self.pool.candidates);
        resolve_opt(base, &mut self.pool.knowledge);
        resolve_opt(base, &mut self.tools.candidates);
        resolve_opt(base, &mut self.tools.kb_corpus);
        resolve_opt(base, &mut self.tools.kb_index);
        resolve_opt(base, &mut self.tools.knowledge_examples);
        resolve_opt(base, &mut self.backend.cache);
        resolve_opt(base, &mut self.backend.mock_script);
        resolve(base, &mut self.run.output_dir);
    }

    /// Check path existence and selector/seed rules before a run starts.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut required: Vec<&PathBuf> = vec![
            &self.dataset.questions,
            &self.dataset.captions,
            &self.pool.questions,
            &self.pool.captions,
        ];
        required.extend(self.dataset.annotations.iter());
        required.extend(self.pool.annotations.iter());
        required.extend(self.pool.neighbors.iter());
        required.extend(self.pool.candidates.iter());
        required.extend(self.pool.knowledge.iter());
        required.extend(self.tools.candidates.iter());
        required.extend(self.tools.kb_corpus.iter());
        required.extend(self.tools.knowledge_examples.iter());
        required.extend(self.backend.mock_script.iter());
        for path in required {
            if !path.exists() {
                return Err(HarnessError::Config(format!(
                    "path does not exist: {}",
                    path.display()
                )));
            }
        }
        if matches!(
            self.run.selector,
            SelectorMode::Lexical | SelectorMode::FixedRandom
        ) && self.run.seed.is_none()
        {
            return Err(HarnessError::Config(format!(
                "selector {:?} requires run.seed",
                self.run.selector
            )));
        }
        if self.run.workers == 0 {
            return Err(HarnessError::Config("run.workers must be at least 1".into()));
        }
        self.agents.weights()?;
        self.backend.validate()?;
        Ok(())
    }
}
