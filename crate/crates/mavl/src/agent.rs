//! A single agent: plan tool usage with the LLM planner, execute the plan
//! by invoking tools in canonical action order, then infer the answer.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::{prompt_digest, CompletionBackend, CompletionRequest};
use crate::domain::{normalize_answer, ActionKind, AgentAnswer, AgentRole, VqaSample};
use crate::prompting::{
    build_planner_prompt, render_example_block, ExampleRecord, PromptDocument, PromptHead,
};
use crate::tools::{
    generate_llm_knowledge, join_snippets, retrieve_kb_knowledge, truncate_at_word_boundary,
    CandidateProvider, CandidateSet, KbIndex, DEFAULT_KB_TOP_K, DEFAULT_KNOWLEDGE_CHAR_CAP,
    DEFAULT_SNIPPET_DELIMITER,
};

/// Default number of in-context examples per prompt.
pub const DEFAULT_N_EXAMPLES: usize = 8;
/// Default number of candidate answers attached by the candidates action.
pub const DEFAULT_N_CANDIDATES: usize = 5;

/// An ordered, deduplicated action set clamped to the agent's role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub actions: Vec<ActionKind>,
    pub role: AgentRole,
    pub raw_planner_output: String,
    /// Set when the planner output was empty or unusable and the role's
    /// full allowed set was substituted.
    pub fallback: bool,
}

impl Plan {
    /// Extract action tokens from raw planner output (case-insensitive,
    /// surrounding text tolerated), deduplicate, clamp to the role's scope,
    /// and sort canonically. An empty extraction falls back to the role's
    /// full allowed set.
    pub fn parse_and_clamp(raw: &str, role: AgentRole) -> Plan {
        let lowered = raw.to_lowercase();
        let mut actions: Vec<ActionKind> = ActionKind::ALL
            .into_iter()
            .filter(|a| lowered.contains(&a.token().to_lowercase()))
            .filter(|a| role.allowed_actions().contains(a))
            .collect();
        actions.sort();
        if actions.is_empty() {
            return Plan {
                actions: role.allowed_actions().to_vec(),
                role,
                raw_planner_output: raw.to_string(),
                fallback: true,
            };
        }
        Plan {
            actions,
            role,
            raw_planner_output: raw.to_string(),
            fallback: false,
        }
    }

    /// A forced plan (ablations): the requested actions intersected with
    /// the role's scope, canonical order.
    pub fn forced(role: AgentRole, actions: &[ActionKind]) -> Plan {
        let mut actions: Vec<ActionKind> = role
            .allowed_actions()
            .iter()
            .copied()
            .filter(|a| actions.contains(a))
            .collect();
        actions.sort();
        Plan {
            actions,
            role,
            raw_planner_output: String::new(),
            fallback: false,
        }
    }

    pub fn forced_full(role: AgentRole) -> Plan {
        Plan::forced(role, &ActionKind::ALL)
    }

    pub fn forced_empty(role: AgentRole) -> Plan {
        Plan::forced(role, &[])
    }

    /// Fallback on planner failure: the role's full allowed set.
    pub fn fallback(role: AgentRole, raw: impl Into<String>) -> Plan {
        Plan {
            actions: role.allowed_actions().to_vec(),
            role,
            raw_planner_output: raw.into(),
            fallback: true,
        }
    }

    pub fn contains(&self, action: ActionKind) -> bool {
        self.actions.contains(&action)
    }

    pub fn tokens(&self) -> Vec<String> {
        self.actions.iter().map(|a| a.token().to_string()).collect()
    }
}

/// Everything an agent needs to answer one sample: the test sample, its
/// in-context examples, and the augmentation state the executed actions
/// fill in.
#[derive(Debug, Clone)]
pub struct TaskInput {
    pub sample: VqaSample,
    pub examples: Vec<ExampleRecord>,
    pub candidates: Option<CandidateSet>,
    pub kbs_knowledge: Option<String>,
    pub llm_knowledge: Option<String>,
}

impl TaskInput {
    pub fn new(sample: VqaSample, examples: Vec<ExampleRecord>) -> Self {
        Self {
            sample,
            examples,
            candidates: None,
            kbs_knowledge: None,
            llm_knowledge: None,
        }
    }

    /// The rendered Context+Question of the test sample, used as the
    /// planner's task slot.
    pub fn task_text(&self) -> String {
        let record = ExampleRecord::new(self.sample.caption.clone(), self.sample.question.clone());
        render_example_block(&record, false)
    }
}

/// How the plan for a sample is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanMode {
    /// Ask the LLM planner, then parse and clamp.
    Planner,
    /// Skip the planner; use the role's full allowed set.
    ForcedFull,
    /// Skip the planner; execute no actions.
    ForcedEmpty,
}

/// Shared tool handles and knobs.
pub struct ToolSet {
    pub candidate_provider: Option<Arc<dyn CandidateProvider>>,
    pub kb_index: Option<Arc<KbIndex>>,
    pub kb_top_k: usize,
    /// Handpicked Context/Question/LLM_Knowledge triplets for the
    /// knowledge-generation prompt.
    pub knowledge_examples: Vec<ExampleRecord>,
    pub snippet_delimiter: String,
    pub knowledge_char_cap: usize,
}

impl Default for ToolSet {
    fn default() -> Self {
        Self {
            candidate_provider: None,
            kb_index: None,
            kb_top_k: DEFAULT_KB_TOP_K,
            knowledge_examples: Vec::new(),
            snippet_delimiter: DEFAULT_SNIPPET_DELIMITER.to_string(),
            knowledge_char_cap: DEFAULT_KNOWLEDGE_CHAR_CAP,
        }
    }
}

/// Per-sample debug record, one JSON line per agent run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentTrace {
    pub sample_id: String,
    pub role: AgentRole,
    /// Raw planner completion; absent when the planner was skipped or
    /// failed before producing output.
    pub raw_planner_output: Option<String>,
    pub clamped_plan: Vec<String>,
    pub fallback_plan: bool,
    pub prompt_digest: String,
    pub raw_answer: Option<String>,
    pub normalized_answer: Option<String>,
    pub warnings: Vec<String>,
}

impl AgentTrace {
    /// Stable reference used by per-sample result records.
    pub fn reference(&self) -> String {
        format!("{}:{}", self.sample_id, self.role)
    }
}

/// Result of one agent pipeline over one sample.
#[derive(Debug, Clone)]
pub struct AgentOutcome {
    pub answer: Option<AgentAnswer>,
    pub trace: AgentTrace,
}

/// An immutable agent: a role plus handles to a backend and the shared
/// tool set. Safe to run over different samples concurrently.
pub struct Agent {
    role: AgentRole,
    backend: Arc<dyn CompletionBackend>,
    tools: Arc<ToolSet>,
    n_candidates: usize,
}

impl Agent {
    pub fn new(
        role: AgentRole,
        backend: Arc<dyn CompletionBackend>,
        tools: Arc<ToolSet>,
        n_candidates: usize,
    ) -> Self {
        Self {
            role,
            backend,
            tools,
            n_candidates,
        }
    }

    pub fn role(&self) -> AgentRole {
        self.role
    }

    /// Ask the planner for a plan. Backend failures fall back to the
    /// role's full allowed set and mark the plan accordingly.
    pub fn request_plan(&self, task: &TaskInput) -> (Plan, Option<String>) {
        let prompt = build_planner_prompt(self.role, &task.task_text());
        let request = match CompletionRequest::plan(prompt) {
            Ok(r) => r,
            Err(e) => return (Plan::fallback(self.role, ""), Some(format!("planner request: {e}"))),
        };
        match self.backend.complete(&request) {
            Ok(result) => (Plan::parse_and_clamp(&result.text, self.role), None),
            Err(e) => (
                Plan::fallback(self.role, ""),
                Some(format!("planner backend failed, using full allowed set: {e}")),
            ),
        }
    }

    /// Apply the plan's actions in canonical order, filling the task's
    /// augmentation state, and build the final prompt document. A tool
    /// failure downgrades to skipping that action with a warning.
    pub fn execute_plan(&self, plan: &Plan, task: &mut TaskInput) -> (PromptDocument, Vec<String>) {
        let mut warnings = Vec::new();
        if plan.contains(ActionKind::Candidates) {
            match &self.tools.candidate_provider {
                Some(provider) => match provider.candidates(&task.sample, self.n_candidates) {
                    Ok(set) => task.candidates = Some(set),
                    Err(e) => warnings.push(format!("candidate tool skipped: {e}")),
                },
                None => warnings.push("candidate tool unavailable".to_string()),
            }
        }
        if plan.contains(ActionKind::KbKnowledge) {
            match &self.tools.kb_index {
                Some(index) => {
                    let snippets = retrieve_kb_knowledge(index, &task.sample, self.tools.kb_top_k);
                    if !snippets.is_empty() {
                        task.kbs_knowledge = Some(join_snippets(
                            &snippets,
                            &self.tools.snippet_delimiter,
                            self.tools.knowledge_char_cap,
                        ));
                    }
                }
                None => warnings.push("kb index unavailable".to_string()),
            }
        }
        if plan.contains(ActionKind::LlmKnowledge) {
            match generate_llm_knowledge(
                &task.sample,
                &self.tools.knowledge_examples,
                self.backend.as_ref(),
            ) {
                Ok(knowledge) if !knowledge.is_empty() => {
                    task.llm_knowledge = Some(truncate_at_word_boundary(
                        &knowledge,
                        self.tools.knowledge_char_cap,
                    ));
                }
                Ok(_) => {}
                Err(e) => warnings.push(format!("llm knowledge tool skipped: {e}")),
            }
        }

        // In-context blocks only show augmentations the plan executed.
        let examples: Vec<ExampleRecord> = task
            .examples
            .iter()
            .map(|ex| {
                let mut ex = ex.clone();
                if !plan.contains(ActionKind::Candidates) {
                    ex.candidates = None;
                }
                if !plan.contains(ActionKind::KbKnowledge) {
                    ex.kbs_knowledge = None;
                }
                if !plan.contains(ActionKind::LlmKnowledge) {
                    ex.llm_knowledge = None;
                }
                ex
            })
            .collect();
        let mut test = ExampleRecord::new(task.sample.caption.clone(), task.sample.question.clone());
        test.candidates = task.candidates.clone();
        test.kbs_knowledge = task.kbs_knowledge.clone();
        test.llm_knowledge = task.llm_knowledge.clone();

        let head = PromptHead::for_augmentation(
            test.candidates.is_some(),
            test.kbs_knowledge.is_some() || test.llm_knowledge.is_some(),
        );
        let doc = PromptDocument::new(head, examples, test)
            .expect("constructed blocks satisfy document invariants");
        (doc, warnings)
    }

    /// Render the final prompt, query the backend with the answer profile,
    /// and take the first non-empty completion line as the answer. Backend
    /// failure or an empty completion is an abstention.
    pub fn infer_answer(&self, plan: &Plan, doc: &PromptDocument) -> (String, Option<AgentAnswer>, Option<String>) {
        let prompt = doc.render();
        let digest = prompt_digest(&prompt);
        let request = match CompletionRequest::answer(prompt) {
            Ok(r) => r,
            Err(e) => return (digest, None, Some(format!("answer request: {e}"))),
        };
        match self.backend.complete(&request) {
            Ok(result) => {
                let raw = result
                    .text
                    .lines()
                    .map(str::trim)
                    .find(|line| !line.is_empty())
                    .map(str::to_string);
                match raw {
                    Some(raw) => {
                        let normalized = normalize_answer(&raw);
                        if normalized.is_empty() {
                            (digest, None, Some("answer normalized to empty".to_string()))
                        } else {
                            let answer = AgentAnswer {
                                role: self.role,
                                raw_answer: raw,
                                normalized_answer: normalized,
                                executed_plan: plan.clone(),
                                final_prompt_digest: digest.clone(),
                            };
                            (digest, Some(answer), None)
                        }
                    }
                    None => (digest, None, Some("empty completion".to_string())),
                }
            }
            Err(e) => (digest, None, Some(format!("answer backend failed: {e}"))),
        }
    }

    /// Full pipeline for one sample: plan, execute, infer.
    pub fn run(&self, mut task: TaskInput, mode: PlanMode) -> AgentOutcome {
        let mut warnings = Vec::new();
        let (plan, planner_called) = match mode {
            PlanMode::Planner => {
                let (plan, warning) = self.request_plan(&task);
                let called = warning.is_none();
                warnings.extend(warning);
                (plan, called)
            }
            PlanMode::ForcedFull => (Plan::forced_full(self.role), false),
            PlanMode::ForcedEmpty => (Plan::forced_empty(self.role), false),
        };
        let (doc, execute_warnings) = self.execute_plan(&plan, &mut task);
        warnings.extend(execute_warnings);
        let (digest, answer, abstain_reason) = self.infer_answer(&plan, &doc);
        warnings.extend(abstain_reason.into_iter().map(|r| format!("abstained: {r}")));
        let trace = AgentTrace {
            sample_id: task.sample.id.clone(),
            role: self.role,
            raw_planner_output: planner_called.then(|| plan.raw_planner_output.clone()),
            clamped_plan: plan.tokens(),
            fallback_plan: plan.fallback,
            prompt_digest: digest,
            raw_answer: answer.as_ref().map(|a| a.raw_answer.clone()),
            normalized_answer: answer.as_ref().map(|a| a.normalized_answer.clone()),
            warnings,
        };
        AgentOutcome { answer, trace }
    }
}
