//! Structured prompt documents and their bit-exact text rendering.
//!
//! Every prompt is head + in-context example blocks + test block, with a
//! `=====` line between adjacent blocks. A block renders one `Label: value`
//! line per present field in a fixed order; the test block carries a blank
//! `Answer:` line for the model to continue.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::AgentRole;
use crate::tools::{format_candidates, Candidate, CandidateSet};

/// Head for the plain question-answering prompt.
pub const QA_PLAIN_HEAD: &str = "Please answer the question according to the context.";
/// Head when candidate answers are attached.
pub const QA_CANDIDATES_HEAD: &str =
    "Please answer the question according to the context and candidate answers.";
/// Head when one or both knowledge fields are attached.
pub const QA_KNOWLEDGE_HEAD: &str =
    "Please answer the question according to the context and knowledge.";
/// Head when candidates and knowledge are both attached.
pub const QA_CANDIDATES_KNOWLEDGE_HEAD: &str =
    "Please answer the question according to the context, candidate answers and knowledge.";
/// Head for the background-knowledge generation prompt.
pub const KNOWLEDGE_GEN_HEAD: &str =
    "Please generate the background knowledge based on the key words in the context and question.";

/// Canonical block separator. The planner template keeps its own internal
/// `===` lines as printed.
pub const DEFAULT_SEPARATOR: &str = "=====";

const LABELS: [&str; 6] = [
    "Context",
    "Question",
    "Candidates",
    "KBs_knowledge",
    "LLM_Knowledge",
    "Answer",
];

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt head must be non-empty")]
    EmptyHead,
    #[error("in-context example {0} has no answer")]
    ExampleMissingAnswer(usize),
    #[error("test block must not carry an answer")]
    TestHasAnswer,
    #[error("knowledge example {0} has no LLM_Knowledge field")]
    ExampleMissingKnowledge(usize),
    #[error("knowledge test block must leave LLM_Knowledge blank")]
    TestHasKnowledge,
    #[error("block has no {0} line")]
    MissingField(&'static str),
    #[error("unparsable candidate item: {0:?}")]
    BadCandidateItem(String),
}

/// The instruction sentence opening a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptHead {
    text: String,
}

impl PromptHead {
    pub fn custom(text: impl Into<String>) -> Result<Self, PromptError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(PromptError::EmptyHead);
        }
        Ok(Self { text })
    }

    pub fn qa_plain() -> Self {
        Self {
            text: QA_PLAIN_HEAD.to_string(),
        }
    }

    /// Head sentence for an answering prompt given which augmentations the
    /// test block ended up with.
    pub fn for_augmentation(has_candidates: bool, has_knowledge: bool) -> Self {
        let text = match (has_candidates, has_knowledge) {
            (false, false) => QA_PLAIN_HEAD,
            (true, false) => QA_CANDIDATES_HEAD,
            (false, true) => QA_KNOWLEDGE_HEAD,
            (true, true) => QA_CANDIDATES_KNOWLEDGE_HEAD,
        };
        Self {
            text: text.to_string(),
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

impl Default for PromptHead {
    fn default() -> Self {
        Self::qa_plain()
    }
}

/// One Context/Question block, optionally augmented with candidates and
/// knowledge, optionally carrying an answer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub caption: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<CandidateSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kbs_knowledge: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_knowledge: Option<String>,
}

impl ExampleRecord {
    pub fn new(caption: impl Into<String>, question: impl Into<String>) -> Self {
        Self {
            caption: caption.into(),
            question: question.into(),
            ..Self::default()
        }
    }

    pub fn with_answer(mut self, answer: impl Into<String>) -> Self {
        self.answer = Some(answer.into());
        self
    }

    pub fn with_candidates(mut self, candidates: CandidateSet) -> Self {
        self.candidates = Some(candidates);
        self
    }

    pub fn with_kbs_knowledge(mut self, knowledge: impl Into<String>) -> Self {
        self.kbs_knowledge = Some(knowledge.into());
        self
    }

    pub fn with_llm_knowledge(mut self, knowledge: impl Into<String>) -> Self {
        self.llm_knowledge = Some(knowledge.into());
        self
    }
}

/// A full prompt: head, in-context examples (each with an answer), and the
/// test block (answer left blank). Rendering is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptDocument {
    pub head: PromptHead,
    pub examples: Vec<ExampleRecord>,
    pub test: ExampleRecord,
}

impl PromptDocument {
    pub fn new(
        head: PromptHead,
        examples: Vec<ExampleRecord>,
        test: ExampleRecord,
    ) -> Result<Self, PromptError> {
        for (i, ex) in examples.iter().enumerate() {
            if ex.answer.is_none() {
                return Err(PromptError::ExampleMissingAnswer(i));
            }
        }
        if test.answer.is_some() {
            return Err(PromptError::TestHasAnswer);
        }
        Ok(Self {
            head,
            examples,
            test,
        })
    }

    pub fn render(&self) -> String {
        self.render_with_separator(DEFAULT_SEPARATOR)
    }

    pub fn render_with_separator(&self, separator: &str) -> String {
        let mut blocks = Vec::with_capacity(self.examples.len() + 2);
        blocks.push(self.head.text().to_string());
        for ex in &self.examples {
            blocks.push(render_example_block(ex, true));
        }
        blocks.push(render_example_block(&self.test, true));
        blocks.join(&format!("\n{separator}\n"))
    }
}

fn field_line(out: &mut Vec<String>, label: &str, value: &str) {
    if value.is_empty() {
        out.push(format!("{label}:"));
    } else {
        out.push(format!("{label}: {value}"));
    }
}

/// Render one block: a `Label: value` line per present field, in the fixed
/// order Context, Question, Candidates, KBs_knowledge, LLM_Knowledge,
/// Answer. With `include_answer` and no answer, the last line is a bare
/// `Answer:`.
pub fn render_example_block(record: &ExampleRecord, include_answer: bool) -> String {
    let mut lines = Vec::new();
    field_line(&mut lines, "Context", &record.caption);
    field_line(&mut lines, "Question", &record.question);
    if let Some(c) = &record.candidates {
        field_line(&mut lines, "Candidates", &format_candidates(c));
    }
    if let Some(k) = &record.kbs_knowledge {
        field_line(&mut lines, "KBs_knowledge", k);
    }
    if let Some(k) = &record.llm_knowledge {
        field_line(&mut lines, "LLM_Knowledge", k);
    }
    if include_answer {
        field_line(&mut lines, "Answer", record.answer.as_deref().unwrap_or(""));
    }
    lines.join("\n")
}

/// Render the whole document to the exact prompt text.
pub fn assemble_prompt(doc: &PromptDocument) -> String {
    doc.render()
}

/// Instantiate the planner template for a role. The action universe, the
/// per-action description lines, and the response-shape line are all
/// restricted to the role's allowed actions.
pub fn build_planner_prompt(role: AgentRole, task: &str) -> String {
    let allowed = role.allowed_actions();
    let list = allowed
        .iter()
        .map(|a| a.token())
        .collect::<Vec<_>>()
        .join(", ");
    let mut lines = Vec::new();
    lines.push(format!(
        "You are {} planner. Please provide the actions for the given task.",
        role.name()
    ));
    lines.push("===".to_string());
    lines.push(format!("The actions should be in [{list}]."));
    for action in allowed {
        lines.push(
            match action {
                crate::domain::ActionKind::Candidates => {
                    "Action_1 is that you need to refer candidate answers to answer questions."
                }
                crate::domain::ActionKind::KbKnowledge => {
                    "Action_2 is that you need retrieve knowledge from KBs to answer questions."
                }
                crate::domain::ActionKind::LlmKnowledge => {
                    "Action_3 is that you need more knowledge to answer questions."
                }
            }
            .to_string(),
        );
    }
    lines.push("===".to_string());
    lines.push(format!("task: {task}"));
    lines.push(format!("the response should be like this: {list}"));
    lines.join("\n")
}

/// Build the background-knowledge generation prompt: head, then
/// Context/Question/LLM_Knowledge triplets, the test triplet ending with a
/// bare `LLM_Knowledge:` line.
pub fn build_knowledge_prompt(
    examples: &[ExampleRecord],
    test: &ExampleRecord,
) -> Result<String, PromptError> {
    build_knowledge_prompt_with_separator(examples, test, DEFAULT_SEPARATOR)
}

pub fn build_knowledge_prompt_with_separator(
    examples: &[ExampleRecord],
    test: &ExampleRecord,
    separator: &str,
) -> Result<String, PromptError> {
    for (i, ex) in examples.iter().enumerate() {
        if ex.llm_knowledge.is_none() {
            return Err(PromptError::ExampleMissingKnowledge(i));
        }
    }
    if test.llm_knowledge.is_some() {
        return Err(PromptError::TestHasKnowledge);
    }
    let triplet = |record: &ExampleRecord| {
        let mut lines = Vec::new();
        field_line(&mut lines, "Context", &record.caption);
        field_line(&mut lines, "Question", &record.question);
        field_line(
            &mut lines,
            "LLM_Knowledge",
            record.llm_knowledge.as_deref().unwrap_or(""),
        );
        lines.join("\n")
    };
    let mut blocks = Vec::with_capacity(examples.len() + 2);
    blocks.push(KNOWLEDGE_GEN_HEAD.to_string());
    for ex in examples {
        blocks.push(triplet(ex));
    }
    blocks.push(triplet(test));
    Ok(blocks.join(&format!("\n{separator}\n")))
}

/// Parse a rendered block back into its fields. Lines that do not start a
/// known label continue the previous field's value. Used by trace tooling
/// and the round-trip tests.
pub fn parse_example_block(block: &str) -> Result<ExampleRecord, PromptError> {
    let mut fields: Vec<(&'static str, String)> = Vec::new();
    for line in block.split('\n') {
        let mut matched = false;
        for label in LABELS {
            if let Some(rest) = line.strip_prefix(label) {
                if let Some(value) = rest.strip_prefix(": ") {
                    fields.push((label, value.to_string()));
                    matched = true;
                } else if rest == ":" {
                    fields.push((label, String::new()));
                    matched = true;
                }
                if matched {
                    break;
                }
            }
        }
        if !matched {
            match fields.last_mut() {
                Some((_, value)) => {
                    value.push('\n');
                    value.push_str(line);
                }
                None => return Err(PromptError::MissingField("Context")),
            }
        }
    }
    let take = |name: &'static str| {
        fields
            .iter()
            .find(|(label, _)| *label == name)
            .map(|(_, v)| v.clone())
    };
    let mut record = ExampleRecord::new(
        take("Context").ok_or(PromptError::MissingField("Context"))?,
        take("Question").ok_or(PromptError::MissingField("Question"))?,
    );
    record.answer = take("Answer");
    record.kbs_knowledge = take("KBs_knowledge");
    record.llm_knowledge = take("LLM_Knowledge");
    if let Some(raw) = take("Candidates") {
        record.candidates = Some(parse_candidates(&raw)?);
    }
    Ok(record)
}

fn parse_candidates(raw: &str) -> Result<CandidateSet, PromptError> {
    if raw.is_empty() {
        return Ok(CandidateSet::empty());
    }
    let mut items = Vec::new();
    for piece in raw.split(", ") {
        let inner = piece
            .strip_suffix(')')
            .and_then(|p| p.rsplit_once('('))
            .ok_or_else(|| PromptError::BadCandidateItem(piece.to_string()))?;
        let confidence: f64 = inner
            .1
            .parse()
            .map_err(|_| PromptError::BadCandidateItem(piece.to_string()))?;
        items.push(Candidate {
            answer: inner.0.to_string(),
            confidence,
        });
    }
    CandidateSet::new(items).map_err(|_| PromptError::BadCandidateItem(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::AgentRole;
    use proptest::prelude::*;

    fn statue_test_record() -> ExampleRecord {
        ExampleRecord::new(
            "A small statue of an elephant is on a table.",
            "Why animal is this artifact modeled on?",
        )
    }

    fn candidates(items: &[(&str, f64)]) -> CandidateSet {
        CandidateSet::new(
            items
                .iter()
                .map(|(a, c)| Candidate {
                    answer: a.to_string(),
                    confidence: *c,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn test_block_renders_blank_answer_line() {
        let block = render_example_block(&statue_test_record(), true);
        assert_eq!(
            block,
            "Context: A small statue of an elephant is on a table.\n\
             Question: Why animal is this artifact modeled on?\n\
             Answer:"
        );
    }

    #[test]
    fn absent_fields_are_omitted() {
        let block = render_example_block(&statue_test_record(), false);
        assert_eq!(block.lines().count(), 2);
        assert!(!block.contains("Answer"));
    }

    #[test]
    fn candidates_line_matches_figure() {
        let record = statue_test_record().with_candidates(candidates(&[
            ("elephant", 0.99),
            ("dumbo", 0.01),
            ("cow", 0.01),
            ("horse", 0.01),
            ("bear", 0.01),
        ]));
        let block = render_example_block(&record, true);
        assert!(block.contains(
            "Candidates: elephant(0.99), dumbo(0.01), cow(0.01), horse(0.01), bear(0.01)"
        ));
    }

    #[test]
    fn separator_count_matches_block_count() {
        let ex = ExampleRecord::new("c", "q").with_answer("a");
        let doc = PromptDocument::new(
            PromptHead::qa_plain(),
            vec![ex.clone(), ex],
            ExampleRecord::new("tc", "tq"),
        )
        .unwrap();
        let text = doc.render();
        assert_eq!(text.matches("\n=====\n").count(), 3);

        let zero_shot =
            PromptDocument::new(PromptHead::qa_plain(), vec![], ExampleRecord::new("tc", "tq"))
                .unwrap();
        assert_eq!(zero_shot.render().matches("\n=====\n").count(), 1);
        assert!(!zero_shot.render().ends_with("====="));
    }

    #[test]
    fn document_rejects_invalid_blocks() {
        let no_answer = ExampleRecord::new("c", "q");
        assert!(matches!(
            PromptDocument::new(
                PromptHead::qa_plain(),
                vec![no_answer],
                ExampleRecord::new("tc", "tq")
            ),
            Err(PromptError::ExampleMissingAnswer(0))
        ));
        assert!(matches!(
            PromptDocument::new(
                PromptHead::qa_plain(),
                vec![],
                ExampleRecord::new("tc", "tq").with_answer("a")
            ),
            Err(PromptError::TestHasAnswer)
        ));
    }

    #[test]
    fn planner_prompt_manager_lists_all_actions() {
        let prompt = build_planner_prompt(AgentRole::Manager, "t");
        assert!(prompt.starts_with("You are manager planner."));
        assert!(prompt.contains("The actions should be in [Action_1, Action_2, Action_3]."));
        assert!(prompt.ends_with("the response should be like this: Action_1, Action_2, Action_3"));
    }

    #[test]
    fn planner_prompt_junior_is_scoped_to_candidates() {
        let prompt = build_planner_prompt(AgentRole::Junior, "t");
        assert!(prompt.contains("The actions should be in [Action_1]."));
        assert!(prompt.contains("Action_1 is that"));
        assert!(!prompt.contains("Action_2 is that"));
        assert!(!prompt.contains("Action_3 is that"));
        assert!(prompt.ends_with("the response should be like this: Action_1"));
    }

    #[test]
    fn planner_prompt_senior_is_scoped_to_two_actions() {
        let prompt = build_planner_prompt(AgentRole::Senior, "t");
        assert!(prompt.contains("The actions should be in [Action_1, Action_2]."));
        assert!(!prompt.contains("Action_3 is that"));
        assert!(prompt.ends_with("the response should be like this: Action_1, Action_2"));
    }

    #[test]
    fn knowledge_prompt_degenerate_and_two_example_layouts() {
        let test = ExampleRecord::new("tc", "tq");
        let zero = build_knowledge_prompt(&[], &test).unwrap();
        assert!(zero.starts_with(KNOWLEDGE_GEN_HEAD));
        assert_eq!(zero.matches("\n=====\n").count(), 1);
        assert!(zero.ends_with("LLM_Knowledge:"));

        let ex = ExampleRecord::new("c", "q").with_llm_knowledge("k");
        let two = build_knowledge_prompt(&[ex.clone(), ex], &test).unwrap();
        // Derived from the separator-count rule: 4 blocks, 3 separators.
        assert_eq!(two.matches("\n=====\n").count(), 3);
        assert!(two.ends_with("LLM_Knowledge:"));
    }

    #[test]
    fn knowledge_prompt_rejects_bad_inputs() {
        let missing = ExampleRecord::new("c", "q");
        assert!(matches!(
            build_knowledge_prompt(&[missing], &ExampleRecord::new("tc", "tq")),
            Err(PromptError::ExampleMissingKnowledge(0))
        ));
        let bad_test = ExampleRecord::new("tc", "tq").with_llm_knowledge("k");
        assert!(matches!(
            build_knowledge_prompt(&[], &bad_test),
            Err(PromptError::TestHasKnowledge)
        ));
    }

    #[test]
    fn label_order_is_fixed() {
        let record = ExampleRecord::new("c", "q")
            .with_llm_knowledge("lk")
            .with_kbs_knowledge("kb")
            .with_candidates(candidates(&[("cat", 1.0)]))
            .with_answer("cat");
        let block = render_example_block(&record, true);
        let positions: Vec<usize> = ["Context:", "Question:", "Candidates:", "KBs_knowledge:", "LLM_Knowledge:", "Answer:"]
            .iter()
            .map(|label| block.find(label).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rendering_is_deterministic() {
        let ex = ExampleRecord::new("c", "q").with_answer("a");
        let doc = PromptDocument::new(
            PromptHead::for_augmentation(false, true),
            vec![ex],
            ExampleRecord::new("tc", "tq").with_kbs_knowledge("snippet"),
        )
        .unwrap();
        assert_eq!(doc.render(), doc.render());
    }

    fn value_strategy() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9 .,()]{1,24}".prop_filter("no label-like content", |s| {
            !LABELS.iter().any(|l| s.starts_with(l)) && !s.contains("=====")
        })
    }

    proptest! {
        #[test]
        fn separator_count_is_blocks_minus_one(n in 0usize..12) {
            let ex = ExampleRecord::new("c", "q").with_answer("a");
            let doc = PromptDocument::new(
                PromptHead::qa_plain(),
                vec![ex; n],
                ExampleRecord::new("tc", "tq"),
            )
            .unwrap();
            // Blocks: head + n examples + test.
            prop_assert_eq!(doc.render().matches("\n=====\n").count(), n + 1);
        }

        #[test]
        fn block_round_trips(
            caption in value_strategy(),
            question in value_strategy(),
            answer in proptest::option::of(value_strategy()),
            kbs in proptest::option::of(value_strategy()),
            cents in proptest::option::of(proptest::collection::vec(0u32..=100, 1..4)),
        ) {
            let mut record = ExampleRecord::new(caption, question);
            record.answer = answer;
            record.kbs_knowledge = kbs;
            if let Some(cents) = cents {
                let mut sorted = cents.clone();
                sorted.sort_unstable_by(|a, b| b.cmp(a));
                let items: Vec<Candidate> = sorted
                    .iter()
                    .enumerate()
                    .map(|(i, c)| Candidate {
                        answer: format!("ans{i}"),
                        confidence: *c as f64 / 100.0,
                    })
                    .collect();
                record.candidates = Some(CandidateSet::new(items).unwrap());
            }
            let rendered = render_example_block(&record, record.answer.is_some());
            let parsed = parse_example_block(&rendered).unwrap();
            prop_assert_eq!(parsed, record);
        }
    }
}
