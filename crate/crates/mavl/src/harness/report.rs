//! Per-sample result records and the aggregate evaluation report.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::domain::{vqa_soft_accuracy, AgentRole};

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    /// Voted answer; absent when every agent abstained.
    pub final_answer: Option<String>,
    pub tally: BTreeMap<String, u32>,
    pub tie_broken: bool,
    pub abstentions: Vec<AgentRole>,
    /// References into the trace file, `<sample_id>:<role>`.
    pub per_agent: Vec<String>,
    /// Absent for unlabeled samples.
    pub soft_accuracy: Option<f64>,
}

/// The whole-run summary. `aggregate_soft_accuracy` is the plain mean over
/// scored samples; display multiplies by 100 and keeps one decimal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<SampleRecord>,
    pub aggregate_soft_accuracy: Option<f64>,
    pub n_samples: usize,
    pub n_scored: usize,
    pub abstention_count: usize,
    pub tie_break_count: usize,
    pub fallback_plan_count: usize,
    pub no_answer_count: usize,
    /// The effective configuration, echoed as TOML.
    pub config_echo: String,
    pub wall_clock_ms: u64,
}

impl EvalReport {
    pub fn aggregate_display(&self) -> String {
        match self.aggregate_soft_accuracy {
            Some(mean) => format!("{:.1}", mean * 100.0),
            None => "n/a".to_string(),
        }
    }

    /// Pretty text summary printed by the CLI and written next to the
    /// machine-readable report.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        out.push_str("== evaluation report ==\n");
        out.push_str(&format!("samples:        {}\n", self.n_samples));
        out.push_str(&format!("scored:         {}\n", self.n_scored));
        out.push_str(&format!("soft accuracy:  {}\n", self.aggregate_display()));
        out.push_str(&format!("abstentions:    {}\n", self.abstention_count));
        out.push_str(&format!("tie breaks:     {}\n", self.tie_break_count));
        out.push_str(&format!("fallback plans: {}\n", self.fallback_plan_count));
        out.push_str(&format!("no-answer:      {}\n", self.no_answer_count));
        out.push_str(&format!("wall clock:     {} ms\n", self.wall_clock_ms));
        out
    }

    /// The report with volatile fields cleared, for determinism
    /// comparisons.
    pub fn comparable(&self) -> EvalReport {
        EvalReport {
            wall_clock_ms: 0,
            ..self.clone()
        }
    }
}

/// Recompute soft accuracy for existing records against a gold map
/// (sample id -> 10 raw annotations). Returns the rescored records and the
/// aggregate over scored samples.
pub fn score_records(
    records: &[SampleRecord],
    gold: &HashMap<String, Vec<String>>,
) -> Result<(Vec<SampleRecord>, Option<f64>), HarnessError> {
    let mut rescored = Vec::with_capacity(records.len());
    let mut sum = 0.0;
    let mut scored = 0usize;
    for record in records {
        let mut record = record.clone();
        if let Some(answers) = gold.get(&record.sample_id) {
            let accuracy = match &record.final_answer {
                Some(answer) => vqa_soft_accuracy(answer, answers)?,
                None => 0.0,
            };
            record.soft_accuracy = Some(accuracy);
            sum += accuracy;
            scored += 1;
        } else {
            record.soft_accuracy = None;
        }
        rescored.push(record);
    }
    let aggregate = (scored > 0).then(|| sum / scored as f64);
    Ok((rescored, aggregate))
}
