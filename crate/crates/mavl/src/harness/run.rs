//! Batch evaluation: select examples per sample, run the committee with
//! the configured ablations, score, and stream records in input order from
//! a bounded worker pool.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use super::dataset::{
    load_dataset, load_neighbor_file, load_pool_knowledge, ExamplePool, Split,
};
use super::report::{EvalReport, SampleRecord};
use super::select::select_in_context_examples;
use super::{HarnessError, RunConfig};
use crate::agent::{AgentTrace, PlanMode, TaskInput, ToolSet};
use crate::backend::CompletionBackend;
use crate::domain::vqa_soft_accuracy;
use crate::orchestrator::{AgentSpec, Orchestrator};
use crate::prompting::ExampleRecord;
use crate::tools::{
    build_kb_index, load_candidate_file, CandidateProvider, FileCandidateProvider,
    HttpCandidateProvider, KbIndex,
};

/// Build the shared tool set from the config.
pub(crate) fn build_tools(config: &RunConfig) -> Result<ToolSet, HarnessError> {
    let candidate_provider: Option<Arc<dyn CandidateProvider>> =
        match (&config.tools.candidates, &config.tools.scorer_url) {
            (Some(path), _) => Some(Arc::new(FileCandidateProvider::load(path)?)),
            (None, Some(url)) => Some(Arc::new(HttpCandidateProvider::new(
                url,
                config.backend.timeout_ms,
            )?)),
            (None, None) => None,
        };

    let kb_index: Option<Arc<KbIndex>> = match (&config.tools.kb_index, &config.tools.kb_corpus) {
        (Some(sidecar), _) if sidecar.exists() => Some(Arc::new(KbIndex::load(sidecar)?)),
        (sidecar, Some(corpus)) => {
            let (index, _) = build_kb_index(corpus, crate::ParseMode::Strict)?;
            if let Some(sidecar) = sidecar {
                index.save(sidecar)?;
            }
            Some(Arc::new(index))
        }
        (_, None) => None,
    };

    let knowledge_examples: Vec<ExampleRecord> = match &config.tools.knowledge_examples {
        Some(path) => {
            let raw = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            serde_json::from_str(&raw).map_err(|e| HarnessError::parse(path, e))?
        }
        None => Vec::new(),
    };

    Ok(ToolSet {
        candidate_provider,
        kb_index,
        kb_top_k: config.tools.kb_top_k,
        knowledge_examples,
        snippet_delimiter: config.tools.snippet_delimiter.clone(),
        knowledge_char_cap: config.tools.knowledge_char_cap,
    })
}

/// Load the evaluation split and the example pool named by the config.
pub(crate) fn load_inputs(
    config: &RunConfig,
) -> Result<(Vec<crate::harness::DatasetRecord>, ExamplePool), HarnessError> {
    let (mut samples, _) = load_dataset(
        config.dataset.format,
        &config.dataset.questions,
        config.dataset.annotations.as_deref(),
        &config.dataset.captions,
        Split::Val,
        config.dataset.mode,
    )?;
    if config.run.limit > 0 {
        samples.truncate(config.run.limit);
    }

    let (pool_records, _) = load_dataset(
        config.pool.format,
        &config.pool.questions,
        config.pool.annotations.as_deref(),
        &config.pool.captions,
        Split::Train,
        config.pool.mode,
    )?;
    let pool_candidates = match &config.pool.candidates {
        Some(path) => Some(load_candidate_file(path)?),
        None => None,
    };
    let pool_knowledge = match &config.pool.knowledge {
        Some(path) => Some(load_pool_knowledge(path)?),
        None => None,
    };
    let mut pool = ExamplePool::from_records(
        &pool_records,
        pool_candidates.as_ref(),
        pool_knowledge.as_ref(),
        config.run.n_candidates,
    )?;
    if let Some(path) = &config.pool.neighbors {
        pool = pool.with_neighbors(load_neighbor_file(path)?);
    }
    Ok((samples, pool))
}

/// The effective agent specs after ablation: dropping multi-agents leaves
/// the manager as the single voter.
pub(crate) fn effective_specs(config: &RunConfig) -> Result<Vec<AgentSpec>, HarnessError> {
    let weights = config.agents.weights()?;
    let mut specs = AgentSpec::standard(&weights);
    if config.ablation.no_multi_agents {
        for spec in &mut specs {
            spec.enabled = spec.role == crate::domain::AgentRole::Manager;
        }
    }
    Ok(specs)
}

/// The effective plan mode: excluded tools force empty plans (no planner
/// call has anything to plan); excluded planners force the full allowed
/// set.
pub(crate) fn effective_plan_mode(config: &RunConfig) -> PlanMode {
    if config.ablation.no_tools {
        PlanMode::ForcedEmpty
    } else if config.ablation.no_planners {
        PlanMode::ForcedFull
    } else {
        PlanMode::Planner
    }
}

struct Emitter {
    pending: BTreeMap<usize, (SampleRecord, Vec<AgentTrace>)>,
    next: usize,
    records_out: BufWriter<File>,
    traces_out: BufWriter<File>,
    collected: Vec<(SampleRecord, Vec<AgentTrace>)>,
    io_error: Option<std::io::Error>,
}

impl Emitter {
    fn push(&mut self, idx: usize, item: (SampleRecord, Vec<AgentTrace>)) {
        self.pending.insert(idx, item);
        while let Some(item) = self.pending.remove(&self.next) {
            if self.io_error.is_none() {
                if let Err(e) = self.write(&item) {
                    self.io_error = Some(e);
                }
            }
            self.collected.push(item);
            self.next += 1;
        }
    }

    fn write(&mut self, item: &(SampleRecord, Vec<AgentTrace>)) -> std::io::Result<()> {
        writeln!(self.records_out, "{}", serde_json::to_string(&item.0)?)?;
        for trace in &item.1 {
            writeln!(self.traces_out, "{}", serde_json::to_string(trace)?)?;
        }
        self.records_out.flush()?;
        self.traces_out.flush()
    }
}

/// Run the evaluation described by the config with a backend built from
/// its backend section.
pub fn run_evaluation(config: &RunConfig) -> Result<EvalReport, HarnessError> {
    let backend = config.backend.build()?;
    run_evaluation_with_backend(config, backend)
}

/// Run the evaluation with an injected backend (tests use this to keep a
/// handle on the scripted mock).
pub fn run_evaluation_with_backend(
    config: &RunConfig,
    backend: Arc<dyn CompletionBackend>,
) -> Result<EvalReport, HarnessError> {
    let started = Instant::now();
    config.validate()?;
    let (samples, pool) = load_inputs(config)?;
    if config.run.n_examples > pool.len() {
        return Err(HarnessError::PoolTooSmall {
            n: config.run.n_examples,
            pool: pool.len(),
        });
    }
    let tools = Arc::new(build_tools(config)?);
    let specs = effective_specs(config)?;
    let plan_mode = effective_plan_mode(config);
    let orchestrator = Orchestrator::new(
        &specs,
        backend,
        tools,
        config.run.n_candidates,
        config.run.concurrent_agents,
    )?;

    std::fs::create_dir_all(&config.run.output_dir)
        .map_err(|e| HarnessError::io(&config.run.output_dir, e))?;
    let records_path = config.run.output_dir.join("records.jsonl");
    let traces_path = config.run.output_dir.join("traces.jsonl");
    let emitter = Mutex::new(Emitter {
        pending: BTreeMap::new(),
        next: 0,
        records_out: BufWriter::new(
            File::create(&records_path).map_err(|e| HarnessError::io(&records_path, e))?,
        ),
        traces_out: BufWriter::new(
            File::create(&traces_path).map_err(|e| HarnessError::io(&traces_path, e))?,
        ),
        collected: Vec::with_capacity(samples.len()),
        io_error: None,
    });

    let process_one = |record: &crate::harness::DatasetRecord| {
        let (examples, warnings) = select_in_context_examples(
            &record.sample,
            &pool,
            config.run.n_examples,
            config.run.selector,
            config.run.seed,
        )
        .unwrap_or_else(|e| (Vec::new(), vec![format!("example selection failed: {e}")]));
        let task = TaskInput::new(record.sample.clone(), examples);
        let outcome = orchestrator.run_sample(&task, plan_mode);
        let soft_accuracy = if record.sample.is_labeled() {
            let accuracy = match &outcome.final_answer {
                Some(final_answer) => {
                    vqa_soft_accuracy(&final_answer.answer, &record.sample.gold_answers)
                        .expect("gold count validated at load")
                }
                None => 0.0,
            };
            Some(accuracy)
        } else {
            None
        };
        let mut traces = outcome.traces;
        if !warnings.is_empty() {
            for trace in &mut traces {
                trace.warnings.extend(warnings.iter().cloned());
            }
        }
        let record = SampleRecord {
            sample_id: record.sample.id.clone(),
            final_answer: outcome.final_answer.as_ref().map(|f| f.answer.clone()),
            tally: outcome
                .final_answer
                .as_ref()
                .map(|f| f.tally.clone())
                .unwrap_or_default(),
            tie_broken: outcome
                .final_answer
                .as_ref()
                .map(|f| f.tie_broken)
                .unwrap_or(false),
            abstentions: outcome.abstentions,
            per_agent: traces.iter().map(|t| t.reference()).collect(),
            soft_accuracy,
        };
        (record, traces)
    };

    let workers = config.run.workers.min(samples.len()).max(1);
    if workers == 1 {
        for (idx, sample) in samples.iter().enumerate() {
            let item = process_one(sample);
            emitter.lock().unwrap().push(idx, item);
        }
    } else {
        let cursor = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let idx = cursor.fetch_add(1, Ordering::SeqCst);
                    if idx >= samples.len() {
                        break;
                    }
                    let item = process_one(&samples[idx]);
                    emitter.lock().unwrap().push(idx, item);
                });
            }
        });
    }

    let emitter = emitter.into_inner().unwrap();
    if let Some(e) = emitter.io_error {
        return Err(HarnessError::io(&records_path, e));
    }

    let mut records = Vec::with_capacity(emitter.collected.len());
    let mut abstention_count = 0;
    let mut tie_break_count = 0;
    let mut fallback_plan_count = 0;
    let mut no_answer_count = 0;
    let mut sum = 0.0;
    let mut scored = 0usize;
    let mut all_traces = Vec::new();
    for (record, traces) in emitter.collected {
        abstention_count += record.abstentions.len();
        tie_break_count += usize::from(record.tie_broken);
        fallback_plan_count += traces.iter().filter(|t| t.fallback_plan).count();
        no_answer_count += usize::from(record.final_answer.is_none());
        if let Some(accuracy) = record.soft_accuracy {
            sum += accuracy;
            scored += 1;
        }
        records.push(record);
        all_traces.extend(traces);
    }

    let report = EvalReport {
        n_samples: records.len(),
        n_scored: scored,
        aggregate_soft_accuracy: (scored > 0).then(|| sum / scored as f64),
        records,
        abstention_count,
        tie_break_count,
        fallback_plan_count,
        no_answer_count,
        config_echo: toml::to_string(config).unwrap_or_default(),
        wall_clock_ms: started.elapsed().as_millis() as u64,
    };
    write_report_files(&report, &config.run.output_dir)?;
    Ok(report)
}

fn write_report_files(report: &EvalReport, output_dir: &Path) -> Result<(), HarnessError> {
    let summary = serde_json::json!({
        "aggregate_soft_accuracy": report.aggregate_soft_accuracy,
        "aggregate_display": report.aggregate_display(),
        "n_samples": report.n_samples,
        "n_scored": report.n_scored,
        "abstention_count": report.abstention_count,
        "tie_break_count": report.tie_break_count,
        "fallback_plan_count": report.fallback_plan_count,
        "no_answer_count": report.no_answer_count,
        "wall_clock_ms": report.wall_clock_ms,
        "config": report.config_echo,
    });
    let json_path = output_dir.join("report.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&summary).unwrap())
        .map_err(|e| HarnessError::io(&json_path, e))?;
    let text_path = output_dir.join("report.txt");
    std::fs::write(&text_path, report.summary_text())
        .map_err(|e| HarnessError::io(&text_path, e))?;
    Ok(())
}

/// Read a records file back (one JSON record per line).
pub fn read_records_file(path: &Path) -> Result<Vec<SampleRecord>, HarnessError> {
    let raw = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    raw.lines()
        .filter(|line| !line.trim().is_empty())
        .map(|line| serde_json::from_str(line).map_err(|e| HarnessError::parse(path, e)))
        .collect()
}
