//! Shared domain types: task samples, agent roles and their action scopes,
//! vote weights, answer normalization, and the soft-accuracy metric.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::Plan;

/// Number of human annotations per labeled sample.
pub const GOLD_ANSWER_COUNT: usize = 10;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("question must be non-empty after trimming")]
    EmptyQuestion,
    #[error("caption must be non-empty after trimming")]
    EmptyCaption,
    #[error("expected {GOLD_ANSWER_COUNT} gold answers, got {0}")]
    BadGoldCount(usize),
    #[error("vote weights must be strictly positive")]
    NonPositiveWeight,
}

/// One task input: a question about an image represented by its caption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaSample {
    pub id: String,
    pub question: String,
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    /// Exactly 10 raw annotation strings, or empty for unlabeled runs.
    #[serde(default)]
    pub gold_answers: Vec<String>,
}

impl VqaSample {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        caption: impl Into<String>,
        image_ref: Option<String>,
        gold_answers: Vec<String>,
    ) -> Result<Self, DomainError> {
        let question = question.into();
        let caption = caption.into();
        if question.trim().is_empty() {
            return Err(DomainError::EmptyQuestion);
        }
        if caption.trim().is_empty() {
            return Err(DomainError::EmptyCaption);
        }
        if !gold_answers.is_empty() && gold_answers.len() != GOLD_ANSWER_COUNT {
            return Err(DomainError::BadGoldCount(gold_answers.len()));
        }
        Ok(Self {
            id: id.into(),
            question,
            caption,
            image_ref,
            gold_answers,
        })
    }

    pub fn is_labeled(&self) -> bool {
        !self.gold_answers.is_empty()
    }
}

/// The three staff levels. Higher levels unlock more actions and carry
/// more votes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Junior,
    Senior,
    Manager,
}

impl AgentRole {
    pub const ALL: [AgentRole; 3] = [AgentRole::Junior, AgentRole::Senior, AgentRole::Manager];

    /// Lowercase name as it appears in planner prompts.
    pub fn name(self) -> &'static str {
        match self {
            AgentRole::Junior => "junior",
            AgentRole::Senior => "senior",
            AgentRole::Manager => "manager",
        }
    }

    /// Actions this role may plan, in canonical order. The scopes are
    /// strictly nested: Junior ⊂ Senior ⊂ Manager.
    pub fn allowed_actions(self) -> &'static [ActionKind] {
        match self {
            AgentRole::Junior => &[ActionKind::Candidates],
            AgentRole::Senior => &[ActionKind::Candidates, ActionKind::KbKnowledge],
            AgentRole::Manager => &[
                ActionKind::Candidates,
                ActionKind::KbKnowledge,
                ActionKind::LlmKnowledge,
            ],
        }
    }

    /// Seniority rank used as a voting tie-break: Manager > Senior > Junior.
    pub fn rank(self) -> u8 {
        match self {
            AgentRole::Junior => 1,
            AgentRole::Senior => 2,
            AgentRole::Manager => 3,
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The three plannable actions. The declaration order is the canonical
/// execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    /// Attach candidate answers from a VQA scorer (token `Action_1`).
    Candidates,
    /// Attach knowledge retrieved from the knowledge base (token `Action_2`).
    KbKnowledge,
    /// Attach knowledge generated by the LLM (token `Action_3`).
    LlmKnowledge,
}

impl ActionKind {
    pub const ALL: [ActionKind; 3] = [
        ActionKind::Candidates,
        ActionKind::KbKnowledge,
        ActionKind::LlmKnowledge,
    ];

    /// The token used in planner prompts and planner output.
    pub fn token(self) -> &'static str {
        match self {
            ActionKind::Candidates => "Action_1",
            ActionKind::KbKnowledge => "Action_2",
            ActionKind::LlmKnowledge => "Action_3",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Per-role vote counts. Defaults follow the seniority ladder: 2, 3, 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteWeights {
    pub junior: u32,
    pub senior: u32,
    pub manager: u32,
}

impl VoteWeights {
    pub fn new(junior: u32, senior: u32, manager: u32) -> Result<Self, DomainError> {
        if junior == 0 || senior == 0 || manager == 0 {
            return Err(DomainError::NonPositiveWeight);
        }
        Ok(Self {
            junior,
            senior,
            manager,
        })
    }

    pub fn for_role(&self, role: AgentRole) -> u32 {
        match role {
            AgentRole::Junior => self.junior,
            AgentRole::Senior => self.senior,
            AgentRole::Manager => self.manager,
        }
    }
}

impl Default for VoteWeights {
    fn default() -> Self {
        Self {
            junior: 2,
            senior: 3,
            manager: 4,
        }
    }
}

/// One agent's answer for a sample, before voting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentAnswer {
    pub role: AgentRole,
    pub raw_answer: String,
    pub normalized_answer: String,
    pub executed_plan: Plan,
    pub final_prompt_digest: String,
}

/// The voted result for a sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalAnswer {
    /// Normalized winning answer; holds the maximum total in `tally`.
    pub answer: String,
    /// Accumulated weight per normalized answer.
    pub tally: BTreeMap<String, u32>,
    pub tie_broken: bool,
}

/// Canonicalize an answer string for vote pooling and scoring: lowercase,
/// drop punctuation, drop leading articles, collapse whitespace. Idempotent.
pub fn normalize_answer(raw: &str) -> String {
    let cleaned: String = raw
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    let mut tokens = cleaned.split_whitespace().peekable();
    while matches!(tokens.peek(), Some(&"a") | Some(&"an") | Some(&"the")) {
        tokens.next();
    }
    tokens.collect::<Vec<_>>().join(" ")
}

/// Soft accuracy against 10 human annotations: full credit once at least
/// 3 annotators gave the predicted answer, partial credit below.
pub fn vqa_soft_accuracy(predicted: &str, gold_answers: &[String]) -> Result<f64, DomainError> {
    if gold_answers.len() != GOLD_ANSWER_COUNT {
        return Err(DomainError::BadGoldCount(gold_answers.len()));
    }
    let target = normalize_answer(predicted);
    let matches = gold_answers
        .iter()
        .filter(|g| normalize_answer(g) == target)
        .count();
    Ok((matches as f64 / 3.0).min(1.0))
}
