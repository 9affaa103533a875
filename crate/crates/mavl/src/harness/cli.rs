//! Command-line interface. Exit codes: 0 success, 1 usage error,
//! 2 runtime failure.

use std::collections::HashMap;
use std::ffi::OsString;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use super::run::{build_tools, load_inputs, read_records_file};
use super::{
    run_evaluation, score_records, select_in_context_examples, HarnessError, RunConfig,
    SelectorMode,
};
use crate::agent::{Agent, Plan, TaskInput};
use crate::backend::MockBackend;
use crate::domain::{ActionKind, AgentRole};
use crate::prompting::{build_knowledge_prompt, build_planner_prompt, ExampleRecord};
use crate::selftest;
use crate::tools::build_kb_index;
use crate::ParseMode;

#[derive(Parser)]
#[command(
    name = "mavl",
    about = "Multi-agent voting engine for knowledge-based VQA",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an evaluation from a config file, with flag overrides.
    Run(RunArgs),
    /// Build the knowledge-base index from a line-delimited corpus.
    IndexKb(IndexKbArgs),
    /// Render every prompt shape for one sample to standard output.
    PromptPreview(PromptPreviewArgs),
    /// Re-score an existing per-sample record file against gold answers.
    Score(ScoreArgs),
    /// Run the voting and top-M oracle suites.
    Selftest,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Exclude tools: every plan is forced empty.
    #[arg(long)]
    no_tools: bool,
    /// Exclude planners: every plan is the role's full allowed set.
    #[arg(long)]
    no_planners: bool,
    /// Exclude multi-agents: the manager answers alone.
    #[arg(long)]
    no_multi_agents: bool,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    n_examples: Option<usize>,
    #[arg(long)]
    n_candidates: Option<usize>,
    #[arg(long, value_enum)]
    selector: Option<SelectorArg>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SelectorArg {
    NeighborFile,
    Lexical,
    FixedRandom,
}

impl From<SelectorArg> for SelectorMode {
    fn from(value: SelectorArg) -> Self {
        match value {
            SelectorArg::NeighborFile => SelectorMode::NeighborFile,
            SelectorArg::Lexical => SelectorMode::Lexical,
            SelectorArg::FixedRandom => SelectorMode::FixedRandom,
        }
    }
}

#[derive(Args)]
struct IndexKbArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output sidecar path; defaults to the corpus path with `.idx`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Skip malformed corpus lines instead of failing.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct PromptPreviewArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    sample_id: String,
}

#[derive(Args)]
struct ScoreArgs {
    /// Per-sample records, one JSON object per line.
    #[arg(long)]
    records: PathBuf,
    /// JSON map from sample id to its 10 gold annotations.
    #[arg(long)]
    gold: PathBuf,
}

/// Parse and dispatch. Callers pass `std::env::args_os()`.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes, not usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::IndexKb(args) => cmd_index_kb(args),
        Command::PromptPreview(args) => cmd_prompt_preview(args),
        Command::Score(args) => cmd_score(args),
        Command::Selftest => cmd_selftest(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn load_config_with_overrides(args: &RunArgs) -> Result<RunConfig, HarnessError> {
    let mut config = RunConfig::load(&args.config)?;
    config.ablation.no_tools |= args.no_tools;
    config.ablation.no_planners |= args.no_planners;
    config.ablation.no_multi_agents |= args.no_multi_agents;
    if let Some(limit) = args.limit {
        config.run.limit = limit;
    }
    if let Some(workers) = args.workers {
        config.run.workers = workers;
    }
    if let Some(seed) = args.seed {
        config.run.seed = Some(seed);
    }
    if let Some(dir) = &args.output_dir {
        config.run.output_dir = dir.clone();
    }
    if let Some(n) = args.n_examples {
        config.run.n_examples = n;
    }
    if let Some(n) = args.n_candidates {
        config.run.n_candidates = n;
    }
    if let Some(selector) = args.selector {
        config.run.selector = selector.into();
    }
    Ok(config)
}

fn cmd_run(args: RunArgs) -> Result<i32, HarnessError> {
    let config = load_config_with_overrides(&args)?;
    let report = run_evaluation(&config)?;
    print!("{}", report.summary_text());
    println!(
        "ablations: no_multi_agents={} no_tools={} no_planners={}",
        config.ablation.no_multi_agents, config.ablation.no_tools, config.ablation.no_planners
    );
    println!("records: {}", config.run.output_dir.join("records.jsonl").display());
    Ok(0)
}

fn cmd_index_kb(args: IndexKbArgs) -> Result<i32, HarnessError> {
    let mode = if args.lenient {
        ParseMode::Lenient
    } else {
        ParseMode::Strict
    };
    let (index, stats) = build_kb_index(&args.corpus, mode)?;
    let output = args
        .output
        .unwrap_or_else(|| args.corpus.with_extension("idx"));
    index.save(&output)?;
    print!("{}", index.stats_block());
    if stats.skipped > 0 {
        println!("skipped_lines: {}", stats.skipped);
    }
    println!("index: {}", output.display());
    Ok(0)
}

fn cmd_prompt_preview(args: PromptPreviewArgs) -> Result<i32, HarnessError> {
    let config = RunConfig::load(&args.config)?;
    config.validate()?;
    let (samples, pool) = load_inputs(&config)?;
    let record = samples
        .iter()
        .find(|r| r.sample.id == args.sample_id)
        .ok_or_else(|| HarnessError::UnknownSampleId(args.sample_id.clone()))?;
    let (examples, _) = select_in_context_examples(
        &record.sample,
        &pool,
        config.run.n_examples,
        config.run.selector,
        config.run.seed,
    )?;
    let tools = Arc::new(build_tools(&config)?);
    // Rendering only; the backend is never queried for these shapes.
    let agent = Agent::new(
        AgentRole::Manager,
        Arc::new(MockBackend::new()),
        tools.clone(),
        config.run.n_candidates,
    );

    let mut task = TaskInput::new(record.sample.clone(), examples.clone());
    let (plain, _) = agent.execute_plan(&Plan::forced_empty(AgentRole::Manager), &mut task);
    let mut task = TaskInput::new(record.sample.clone(), examples);
    let (with_candidates, _) = agent.execute_plan(
        &Plan::forced(AgentRole::Manager, &[ActionKind::Candidates]),
        &mut task,
    );
    let knowledge_test =
        ExampleRecord::new(record.sample.caption.clone(), record.sample.question.clone());
    let knowledge = build_knowledge_prompt(&tools.knowledge_examples, &knowledge_test)
        .map_err(|e| HarnessError::Config(format!("knowledge prompt: {e}")))?;
    let planner = build_planner_prompt(AgentRole::Manager, &task.task_text());

    println!("--- qa-plain ---");
    println!("{}", plain.render());
    println!("--- qa-candidates ---");
    println!("{}", with_candidates.render());
    println!("--- knowledge ---");
    println!("{knowledge}");
    println!("--- planner ---");
    println!("{planner}");
    Ok(0)
}

fn cmd_score(args: ScoreArgs) -> Result<i32, HarnessError> {
    let records = read_records_file(&args.records)?;
    let raw = std::fs::read_to_string(&args.gold).map_err(|e| HarnessError::io(&args.gold, e))?;
    let gold: HashMap<String, Vec<String>> =
        serde_json::from_str(&raw).map_err(|e| HarnessError::parse(&args.gold, e))?;
    let (rescored, aggregate) = score_records(&records, &gold)?;
    let scored = rescored.iter().filter(|r| r.soft_accuracy.is_some()).count();
    match aggregate {
        Some(mean) => println!("soft accuracy: {:.1} ({scored} scored of {})", mean * 100.0, rescored.len()),
        None => println!("soft accuracy: n/a (0 scored of {})", rescored.len()),
    }
    Ok(0)
}

fn cmd_selftest() -> Result<i32, HarnessError> {
    let mut failed = false;
    let mut report = |name: &str, outcome: Result<usize, String>| match outcome {
        Ok(cases) => println!("PASS {name} ({cases} cases)"),
        Err(e) => {
            println!("FAIL {name}: {e}");
            failed = true;
        }
    };
    report("voting-oracle", selftest::voting_oracle_suite());
    report("weight-scaling", selftest::weight_scaling_suite(1000, 20240501));
    report("top-m-oracle", selftest::top_m_oracle_suite(1000, 20240502));
    report("plan-clamp-fuzz", selftest::plan_clamp_fuzz_suite(10_000, 20240503));
    Ok(if failed { 2 } else { 0 })
}
