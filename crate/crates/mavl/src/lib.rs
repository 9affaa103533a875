//! Multi-agent voting engine for knowledge-based VQA.
//!
//! Three role-gated agents (junior, senior, manager) plan tool usage with
//! an LLM planner, augment their prompts with candidate answers and
//! retrieved or generated knowledge, query a completion backend, and pool
//! their answers with weighted voting. An offline evaluation harness runs
//! the pipeline over OK-VQA / A-OKVQA style datasets with fully scripted
//! backends.

pub mod agent;
pub mod backend;
pub mod domain;
pub mod harness;
pub mod orchestrator;
pub mod prompting;
pub mod selftest;
pub mod tools;

use serde::{Deserialize, Serialize};

/// How loaders treat malformed or incomplete input records.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// Fail fast with a location.
    #[default]
    Strict,
    /// Skip bad records and count them.
    Lenient,
}
