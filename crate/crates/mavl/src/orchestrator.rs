//! Run the enabled agents over a sample and resolve the final answer by
//! weighted voting.
//!
//! Ties resolve deterministically: the tied answer backed by the single
//! highest-weight voter wins; if voter weights tie, role precedence
//! (manager > senior > junior) applies; failing that, the
//! lexicographically smallest answer wins.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Agent, AgentOutcome, AgentTrace, PlanMode, TaskInput, ToolSet};
use crate::backend::CompletionBackend;
use crate::domain::{AgentAnswer, AgentRole, FinalAnswer, VoteWeights};

#[derive(Debug, Error)]
pub enum VoteError {
    #[error("no enabled agents configured")]
    NoVoters,
    #[error("agent weight must be strictly positive")]
    ZeroWeight,
    #[error("no answers left after removing abstentions")]
    NoAnswers,
}

/// One voter: a role, its vote weight, and whether it participates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub role: AgentRole,
    pub weight: u32,
    #[serde(default = "default_enabled")]
    pub enabled: bool,
}

fn default_enabled() -> bool {
    true
}

impl AgentSpec {
    pub fn new(role: AgentRole, weight: u32) -> Self {
        Self {
            role,
            weight,
            enabled: true,
        }
    }

    /// The standard three-voter configuration, one spec per role.
    pub fn standard(weights: &VoteWeights) -> Vec<AgentSpec> {
        AgentRole::ALL
            .into_iter()
            .map(|role| AgentSpec::new(role, weights.for_role(role)))
            .collect()
    }
}

/// Accumulated weights per normalized answer plus the resolved winner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub totals: BTreeMap<String, u32>,
    pub abstentions: Vec<AgentRole>,
    pub winner: String,
    pub tie_broken: bool,
}

impl VoteTally {
    pub fn into_final_answer(self) -> FinalAnswer {
        FinalAnswer {
            answer: self.winner,
            tally: self.totals,
            tie_broken: self.tie_broken,
        }
    }
}

/// Group answers by normalized form, sum voter weights, and pick the
/// winner. Answers pair with specs in order, so test-only configs may
/// repeat a role.
pub fn tally_votes(answers: &[AgentAnswer], specs: &[AgentSpec]) -> Result<VoteTally, VoteError> {
    if answers.is_empty() {
        return Err(VoteError::NoAnswers);
    }
    let mut consumed = vec![false; specs.len()];
    let mut votes: Vec<(String, AgentRole, u32)> = Vec::with_capacity(answers.len());
    for answer in answers {
        let spec_idx = specs
            .iter()
            .enumerate()
            .position(|(i, spec)| !consumed[i] && spec.enabled && spec.role == answer.role)
            .ok_or(VoteError::NoVoters)?;
        consumed[spec_idx] = true;
        if specs[spec_idx].weight == 0 {
            return Err(VoteError::ZeroWeight);
        }
        votes.push((
            answer.normalized_answer.clone(),
            answer.role,
            specs[spec_idx].weight,
        ));
    }

    let mut totals: BTreeMap<String, u32> = BTreeMap::new();
    for (answer, _, weight) in &votes {
        *totals.entry(answer.clone()).or_default() += weight;
    }
    let max_total = *totals.values().max().expect("votes is non-empty");
    let tied: Vec<String> = totals
        .iter()
        .filter(|(_, total)| **total == max_total)
        .map(|(answer, _)| answer.clone())
        .collect();
    let tie_broken = tied.len() > 1;
    let winner = if tie_broken {
        resolve_tie(&tied, &votes)
    } else {
        tied[0].clone()
    };
    Ok(VoteTally {
        totals,
        abstentions: Vec::new(),
        winner,
        tie_broken,
    })
}

/// Deterministic tie ladder over equal-total answers.
pub fn resolve_tie(tied: &[String], votes: &[(String, AgentRole, u32)]) -> String {
    let key = |answer: &String| {
        let best_weight = votes
            .iter()
            .filter(|(a, _, _)| a == answer)
            .map(|(_, _, w)| *w)
            .max()
            .unwrap_or(0);
        let best_rank = votes
            .iter()
            .filter(|(a, _, _)| a == answer)
            .map(|(_, role, _)| role.rank())
            .max()
            .unwrap_or(0);
        (best_weight, best_rank)
    };
    tied.iter()
        .min_by(|a, b| {
            let (wa, ra) = key(a);
            let (wb, rb) = key(b);
            wb.cmp(&wa).then(rb.cmp(&ra)).then(a.cmp(b))
        })
        .expect("tied set is non-empty")
        .clone()
}

/// Everything a sample run produces: the voted answer (absent when every
/// agent abstained) plus per-agent detail.
#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub final_answer: Option<FinalAnswer>,
    pub answers: Vec<AgentAnswer>,
    pub traces: Vec<AgentTrace>,
    pub abstentions: Vec<AgentRole>,
}

/// The multi-agent committee for a run: one configured agent per enabled
/// spec, executed sequentially or concurrently per sample.
pub struct Orchestrator {
    members: Vec<(AgentSpec, Agent)>,
    concurrent: bool,
}

impl Orchestrator {
    /// Standard construction: every agent shares one backend handle.
    pub fn new(
        specs: &[AgentSpec],
        backend: Arc<dyn CompletionBackend>,
        tools: Arc<ToolSet>,
        n_candidates: usize,
        concurrent: bool,
    ) -> Result<Self, VoteError> {
        let members: Vec<(AgentSpec, Agent)> = specs
            .iter()
            .filter(|spec| spec.enabled)
            .map(|spec| {
                (
                    *spec,
                    Agent::new(spec.role, backend.clone(), tools.clone(), n_candidates),
                )
            })
            .collect();
        Self::from_agents(members, concurrent)
    }

    /// Construction from prebuilt agents, e.g. to give each role its own
    /// backend.
    pub fn from_agents(
        members: Vec<(AgentSpec, Agent)>,
        concurrent: bool,
    ) -> Result<Self, VoteError> {
        let members: Vec<(AgentSpec, Agent)> = members
            .into_iter()
            .filter(|(spec, _)| spec.enabled)
            .collect();
        if members.is_empty() {
            return Err(VoteError::NoVoters);
        }
        if members.iter().any(|(spec, _)| spec.weight == 0) {
            return Err(VoteError::ZeroWeight);
        }
        Ok(Self {
            members,
            concurrent,
        })
    }

    pub fn specs(&self) -> Vec<AgentSpec> {
        self.members.iter().map(|(spec, _)| *spec).collect()
    }

    /// Run each enabled agent's pipeline over the sample and tally votes.
    /// Abstaining agents contribute no weight.
    pub fn run_sample(&self, task: &TaskInput, mode: PlanMode) -> SampleOutcome {
        let outcomes: Vec<AgentOutcome> = if self.concurrent {
            std::thread::scope(|scope| {
                let handles: Vec<_> = self
                    .members
                    .iter()
                    .map(|(_, agent)| {
                        let task = task.clone();
                        scope.spawn(move || agent.run(task, mode))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("agent thread panicked"))
                    .collect()
            })
        } else {
            self.members
                .iter()
                .map(|(_, agent)| agent.run(task.clone(), mode))
                .collect()
        };

        let mut answers = Vec::new();
        let mut abstentions = Vec::new();
        let mut traces = Vec::with_capacity(outcomes.len());
        for ((spec, _), outcome) in self.members.iter().zip(outcomes) {
            match outcome.answer {
                Some(answer) => answers.push(answer),
                None => abstentions.push(spec.role),
            }
            traces.push(outcome.trace);
        }

        let specs = self.specs();
        let final_answer = match tally_votes(&answers, &specs) {
            Ok(mut tally) => {
                tally.abstentions = abstentions.clone();
                Some(tally.into_final_answer())
            }
            Err(_) => None,
        };
        SampleOutcome {
            final_answer,
            answers,
            traces,
            abstentions,
        }
    }
}
