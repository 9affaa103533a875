//! The three agent tools: candidate-answer generation (top-M over a VQA
//! score vector), knowledge-base retrieval, and LLM knowledge generation.

pub mod kb;
mod knowledge;

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::domain::{normalize_answer, VqaSample};
use crate::prompting::PromptError;

pub use kb::{
    bm25_term_score, build_kb_index, retrieve_kb_knowledge, tokenize, KbIndex, KnowledgeSnippet,
    BM25_B, BM25_K1,
};
pub use knowledge::generate_llm_knowledge;

/// Snippet delimiter inside a joined knowledge string.
pub const DEFAULT_SNIPPET_DELIMITER: &str = "xxxxxx";
/// Default number of KB snippets injected per sample.
pub const DEFAULT_KB_TOP_K: usize = 2;
/// Character cap applied to each knowledge field after joining.
pub const DEFAULT_KNOWLEDGE_CHAR_CAP: usize = 512;

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("answer vocabulary must be non-empty")]
    EmptyVocabulary,
    #[error("duplicate vocabulary answer after normalization: {0:?}")]
    DuplicateAnswer(String),
    #[error("score vector length {scores} does not match vocabulary length {vocab}")]
    LengthMismatch { scores: usize, vocab: usize },
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
    #[error("m = {m} exceeds vocabulary size {vocab}")]
    TopMTooLarge { m: usize, vocab: usize },
    #[error("candidate confidences must be non-increasing")]
    UnsortedCandidates,
    #[error("candidate confidence {0} outside [0, 1]")]
    ConfidenceOutOfRange(f64),
    #[error("duplicate candidate answer: {0:?}")]
    DuplicateCandidate(String),
    #[error("no candidates recorded for sample {0:?}")]
    NoCandidatesForSample(String),
    #[error("corpus line {line}: {reason}")]
    CorpusParse { line: usize, reason: String },
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("index file corrupt: {0}")]
    IndexCorrupt(String),
    #[error("candidate scorer request failed: {0}")]
    Scorer(String),
    #[error("knowledge generation prompt invalid: {0}")]
    KnowledgePrompt(#[from] PromptError),
    #[error("knowledge generation backend failed: {0}")]
    KnowledgeBackend(#[from] BackendError),
}

/// The fixed answer vocabulary a score vector is aligned with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerVocabulary {
    answers: Vec<String>,
}

impl AnswerVocabulary {
    pub fn new(answers: Vec<String>) -> Result<Self, ToolError> {
        if answers.is_empty() {
            return Err(ToolError::EmptyVocabulary);
        }
        let mut seen = HashSet::new();
        for answer in &answers {
            if !seen.insert(normalize_answer(answer)) {
                return Err(ToolError::DuplicateAnswer(answer.clone()));
            }
        }
        Ok(Self { answers })
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn answers(&self) -> &[String] {
        &self.answers
    }
}

/// Prediction scores aligned with an [`AnswerVocabulary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self, ToolError> {
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(ToolError::NonFiniteScore(i));
        }
        Ok(Self { scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub answer: String,
    pub confidence: f64,
}

/// Top-M candidate answers with confidences, ordered best first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    items: Vec<Candidate>,
}

impl CandidateSet {
    pub fn new(items: Vec<Candidate>) -> Result<Self, ToolError> {
        let mut seen = HashSet::new();
        for pair in items.windows(2) {
            if pair[1].confidence > pair[0].confidence {
                return Err(ToolError::UnsortedCandidates);
            }
        }
        for item in &items {
            if !(0.0..=1.0).contains(&item.confidence) {
                return Err(ToolError::ConfidenceOutOfRange(item.confidence));
            }
            if !seen.insert(item.answer.clone()) {
                return Err(ToolError::DuplicateCandidate(item.answer.clone()));
            }
        }
        Ok(Self { items })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Candidate] {
        &self.items
    }
}

/// Select the `m` highest-scoring answers. Ties break toward the lower
/// vocabulary index; confidences are the raw scores clamped to [0, 1] and
/// only rounded at render time.
pub fn select_top_m(
    scores: &ScoreVector,
    vocab: &AnswerVocabulary,
    m: usize,
) -> Result<CandidateSet, ToolError> {
    if scores.len() != vocab.len() {
        return Err(ToolError::LengthMismatch {
            scores: scores.len(),
            vocab: vocab.len(),
        });
    }
    if m > vocab.len() {
        return Err(ToolError::TopMTooLarge {
            m,
            vocab: vocab.len(),
        });
    }
    let mut order: Vec<usize> = (0..vocab.len()).collect();
    order.sort_by(|&a, &b| {
        scores.scores[b]
            .partial_cmp(&scores.scores[a])
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    let items = order
        .into_iter()
        .take(m)
        .map(|i| Candidate {
            answer: vocab.answers[i].clone(),
            confidence: scores.scores[i].clamp(0.0, 1.0),
        })
        .collect();
    Ok(CandidateSet { items })
}

/// Render a candidate set as `ans1(c1), ans2(c2), …` with two-decimal
/// confidences. Empty set renders as the empty string.
pub fn format_candidates(set: &CandidateSet) -> String {
    set.items
        .iter()
        .map(|c| format!("{}({:.2})", c.answer, c.confidence))
        .collect::<Vec<_>>()
        .join(", ")
}

/// A source of candidate answers for a sample.
pub trait CandidateProvider: Send + Sync {
    fn candidates(&self, sample: &VqaSample, m: usize) -> Result<CandidateSet, ToolError>;
}

/// Per-question `[answer, score]` lists keyed by question id.
pub type CandidateTable = HashMap<String, Vec<(String, f64)>>;

/// Load a candidate file: a JSON map from question id to an ordered list of
/// `[answer, score]` pairs.
pub fn load_candidate_file(path: &Path) -> Result<CandidateTable, ToolError> {
    let raw = std::fs::read_to_string(path)?;
    serde_json::from_str(&raw).map_err(|e| ToolError::CorpusParse {
        line: 0,
        reason: format!("{}: {e}", path.display()),
    })
}

/// Candidate source backed by a precomputed candidate file.
pub struct FileCandidateProvider {
    table: HashMap<String, (AnswerVocabulary, ScoreVector)>,
}

impl FileCandidateProvider {
    pub fn load(path: &Path) -> Result<Self, ToolError> {
        Self::from_table(load_candidate_file(path)?)
    }

    pub fn from_table(table: CandidateTable) -> Result<Self, ToolError> {
        let mut prepared = HashMap::with_capacity(table.len());
        for (id, pairs) in table {
            let (answers, scores): (Vec<String>, Vec<f64>) = pairs.into_iter().unzip();
            prepared.insert(id, (AnswerVocabulary::new(answers)?, ScoreVector::new(scores)?));
        }
        Ok(Self { table: prepared })
    }
}

impl CandidateProvider for FileCandidateProvider {
    fn candidates(&self, sample: &VqaSample, m: usize) -> Result<CandidateSet, ToolError> {
        let (vocab, scores) = self
            .table
            .get(&sample.id)
            .ok_or_else(|| ToolError::NoCandidatesForSample(sample.id.clone()))?;
        select_top_m(scores, vocab, m.min(vocab.len()))
    }
}

#[derive(Serialize)]
struct ScoreWireRequest<'a> {
    question: &'a str,
    caption: &'a str,
}

#[derive(Deserialize)]
struct ScoreWireResponse {
    candidates: Vec<(String, f64)>,
}

/// Candidate source backed by a remote scorer speaking the candidates wire
/// format: `POST /score` with `{question, caption}`, response
/// `{candidates: [[answer, score], …]}`.
pub struct HttpCandidateProvider {
    score_url: String,
    client: reqwest::blocking::Client,
}

impl HttpCandidateProvider {
    pub fn new(base_url: &str, timeout_ms: u64) -> Result<Self, ToolError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(timeout_ms))
            .build()
            .map_err(|e| ToolError::Scorer(e.to_string()))?;
        Ok(Self {
            score_url: format!("{}/score", base_url.trim_end_matches('/')),
            client,
        })
    }
}

impl CandidateProvider for HttpCandidateProvider {
    fn candidates(&self, sample: &VqaSample, m: usize) -> Result<CandidateSet, ToolError> {
        let response = self
            .client
            .post(&self.score_url)
            .json(&ScoreWireRequest {
                question: &sample.question,
                caption: &sample.caption,
            })
            .send()
            .map_err(|e| ToolError::Scorer(e.to_string()))?;
        if !response.status().is_success() {
            return Err(ToolError::Scorer(format!(
                "scorer returned status {}",
                response.status().as_u16()
            )));
        }
        let parsed: ScoreWireResponse = response
            .json()
            .map_err(|e| ToolError::Scorer(e.to_string()))?;
        let (answers, scores): (Vec<String>, Vec<f64>) = parsed.candidates.into_iter().unzip();
        let vocab = AnswerVocabulary::new(answers)?;
        let scores = ScoreVector::new(scores)?;
        select_top_m(&scores, &vocab, m.min(vocab.len()))
    }
}

/// Join snippet texts with the delimiter and cap the result at a word
/// boundary.
pub fn join_snippets(snippets: &[KnowledgeSnippet], delimiter: &str, max_chars: usize) -> String {
    let joined = snippets
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join(&format!(" {delimiter} "));
    truncate_at_word_boundary(&joined, max_chars)
}

/// Cap a string at `max_chars` characters, cutting back to the last word
/// boundary when one exists.
pub fn truncate_at_word_boundary(text: &str, max_chars: usize) -> String {
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    let hard_cut = text
        .char_indices()
        .nth(max_chars)
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let head = &text[..hard_cut];
    match head.rfind(char::is_whitespace) {
        Some(space) => head[..space].trim_end().to_string(),
        None => head.to_string(),
    }
}
