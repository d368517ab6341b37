//! Command-line entry point: run one chain, evaluate a dataset, inspect or
//! replay traces, and export report tables and charts.

mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tablechain::backend::{BackendError, ScriptedBackend};
use tablechain::chain::{answer_with_id, run_baseline_with_id, ChainError, ChainTrace};
use tablechain::demo::DemoSet;
use tablechain::encode::decode_pipe;
use tablechain::eval::{load_dataset, run_eval, EvalConfig, MetricsReport, Sample};
use tablechain::prompt::BaselineMode;

use config::{resolve, CommonOverrides};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Dataset(String),
    Backend(String),
    Budget(String),
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Dataset(_) => 3,
            CliError::Backend(_) => 4,
            CliError::Budget(_) => 5,
            CliError::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::Dataset(m)
            | CliError::Backend(m)
            | CliError::Budget(m)
            | CliError::Other(m) => m,
        }
    }
}

fn classify_chain_error(error: &ChainError) -> CliError {
    match error {
        ChainError::Backend(BackendError::BudgetExceeded { .. }) => {
            CliError::Budget(error.to_string())
        }
        ChainError::Backend(_) => CliError::Backend(error.to_string()),
        ChainError::Config(_) => CliError::Config(error.to_string()),
        _ => CliError::Other(error.to_string()),
    }
}

#[derive(Parser)]
#[command(name = "tablechain", version, about = "LLM-planned table reasoning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one chain and print each step's operation, arguments and table.
    Run {
        #[command(flatten)]
        overrides: CommonOverrides,
        /// Sample id to pick from the dataset file.
        #[arg(long = "sample-id")]
        sample_id: Option<String>,
        /// Question text (with --table-file) instead of a dataset sample.
        #[arg(long)]
        question: Option<String>,
        /// Table file in PIPE text form (with --question).
        #[arg(long = "table-file")]
        table_file: Option<PathBuf>,
    },
    /// Evaluate a dataset and write report files.
    Eval {
        #[command(flatten)]
        overrides: CommonOverrides,
        /// Evaluate a generic baseline instead of the chain: e2e, fewshot, cot.
        #[arg(long)]
        baseline: Option<String>,
    },
    /// Inspect, replay or export recorded traces.
    Trace {
        #[command(subcommand)]
        action: TraceAction,
    },
    /// Emit CSV tables and SVG charts from a report.
    Report {
        /// report.json produced by `eval`.
        #[arg(long)]
        report: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum TraceAction {
    /// Pretty-print a trace.
    Inspect { file: PathBuf },
    /// Verify a trace's internal consistency and re-run it offline.
    Replay {
        file: PathBuf,
        /// Demo directory if the original run used one.
        #[arg(long)]
        demos: Option<PathBuf>,
    },
    /// Convert traces into a scripted-backend script (JSONL on stdout or --out).
    Export {
        files: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_trace(path: &Path) -> Result<ChainTrace, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Other(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn load_samples(
    overrides: &CommonOverrides,
    resolved: &config::Resolved,
) -> Result<Vec<Sample>, CliError> {
    let path = resolved
        .dataset_path
        .clone()
        .or_else(|| overrides.dataset.clone())
        .ok_or_else(|| CliError::Config("no dataset path configured".into()))?;
    load_dataset(&path, resolved.plan.task).map_err(|e| CliError::Dataset(e.to_string()))
}

fn cmd_run(
    overrides: CommonOverrides,
    sample_id: Option<String>,
    question: Option<String>,
    table_file: Option<PathBuf>,
) -> Result<(), CliError> {
    let resolved = resolve(&overrides)?;
    let (id, table, question) = match (&sample_id, &question, &table_file) {
        (Some(id), None, None) => {
            let samples = load_samples(&overrides, &resolved)?;
            let sample = samples
                .into_iter()
                .find(|s| s.id == *id)
                .ok_or_else(|| CliError::Dataset(format!("sample {id:?} not found")))?;
            (sample.id, sample.table, sample.question)
        }
        (None, Some(question), Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Dataset(format!("cannot read {}: {e}", path.display())))?;
            let table = decode_pipe(text.trim_end_matches('\n'))
                .map_err(|e| CliError::Dataset(e.to_string()))?;
            ("adhoc".to_string(), table, question.clone())
        }
        _ => {
            return Err(CliError::Config(
                "pass either --sample-id or both --question and --table-file".into(),
            ))
        }
    };

    println!("question: {question}\n");
    println!(
        "input table:\n{}\n",
        tablechain::encode::encode_pipe(&table).map_err(|e| CliError::Dataset(e.to_string()))?
    );
    let (final_answer, trace) = answer_with_id(
        &id,
        &table,
        &question,
        &resolved.plan,
        &resolved.demos,
        resolved.backend.as_ref(),
    )
    .map_err(|failure| classify_chain_error(&failure.error))?;

    let mut step_no = 0usize;
    for step in &trace.steps {
        match (&step.planned_op, step.executed) {
            (Some(op), true) => {
                step_no += 1;
                println!(
                    "step {step_no}: {}",
                    step.chosen_args.as_deref().unwrap_or(op)
                );
                if let Some(table_text) = &step.resulting_table {
                    println!("{table_text}\n");
                }
            }
            (Some(op), false) if op == "[E]" => println!("chain end: {op}\n"),
            (Some(op), false) => println!("skipped: {op} ({})\n", step.errors.join("; ")),
            (None, _) => println!("plan not parseable: {}\n", step.errors.join("; ")),
        }
    }
    println!("answer: {final_answer}");
    if let Some(dir) = &resolved.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Other(e.to_string()))?;
        let path = dir.join(format!("{}.json", tablechain::eval::trace_file_name(&id)));
        std::fs::write(
            &path,
            serde_json::to_string_pretty(&trace).map_err(|e| CliError::Other(e.to_string()))?,
        )
        .map_err(|e| CliError::Other(e.to_string()))?;
        println!("trace written to {}", path.display());
    }
    Ok(())
}

fn parse_baseline(name: &str) -> Result<BaselineMode, CliError> {
    match name {
        "e2e" | "end_to_end" => Ok(BaselineMode::EndToEnd),
        "fewshot" | "few_shot" => Ok(BaselineMode::FewShot),
        "cot" => Ok(BaselineMode::Cot),
        other => Err(CliError::Config(format!(
            "unknown baseline {other:?} (expected e2e, fewshot or cot)"
        ))),
    }
}

fn cmd_eval(overrides: CommonOverrides, baseline: Option<String>) -> Result<(), CliError> {
    let resolved = resolve(&overrides)?;
    let samples = load_samples(&overrides, &resolved)?;
    let out_dir = resolved
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("tablechain-out"));
    let mut cfg = EvalConfig::new(resolved.plan.clone());
    cfg.concurrency = resolved.concurrency;
    cfg.trace_dir = Some(out_dir.join("traces"));
    cfg.baseline = match baseline {
        Some(name) => Some(parse_baseline(&name)?),
        None => None,
    };
    let report = run_eval(&samples, &cfg, &resolved.demos, resolved.backend.as_ref())
        .map_err(|e| CliError::Other(e.to_string()))?;
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Other(e.to_string()))?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Other(e.to_string()))?;
    std::fs::write(out_dir.join("report.json"), json)
        .map_err(|e| CliError::Other(e.to_string()))?;
    std::fs::write(out_dir.join("report.txt"), report.text_summary())
        .map_err(|e| CliError::Other(e.to_string()))?;
    print!("{}", report.text_summary());
    println!("report written to {}", out_dir.display());
    Ok(())
}

fn cmd_trace_inspect(path: &Path) -> Result<(), CliError> {
    let trace = read_trace(path)?;
    println!("id: {}  variant: {}", trace.id, trace.variant);
    println!("question: {}", trace.question);
    println!("input table:\n{}\n", trace.initial_table);
    for (i, step) in trace.steps.iter().enumerate() {
        println!(
            "step {i}: planned {}  executed: {}",
            step.planned_op.as_deref().unwrap_or("(unparseable)"),
            step.executed
        );
        if let Some(args) = &step.chosen_args {
            println!("  args: {args}");
        }
        for error in &step.errors {
            println!("  error: {error}");
        }
        if let Some(table_text) = &step.resulting_table {
            for line in table_text.lines() {
                println!("  {line}");
            }
        }
    }
    if let Some(query) = &trace.query {
        println!("query completion: {}", query.completion.trim());
    }
    if let Some(final_answer) = &trace.final_answer {
        println!("final answer: {final_answer}");
    }
    println!(
        "ledger: plan {}  args {}  query {}  total {}",
        trace.ledger.dynamicplan_samples,
        trace.ledger.generateargs_samples,
        trace.ledger.query_samples,
        trace.ledger.total
    );
    Ok(())
}

fn cmd_trace_replay(path: &Path, demo_dir: Option<PathBuf>) -> Result<(), CliError> {
    let trace = read_trace(path)?;
    trace.verify_self_consistency().map_err(CliError::Other)?;
    println!(
        "self-consistency: ok ({} executed steps)",
        trace.executed_len()
    );

    let demos = match demo_dir {
        Some(dir) => DemoSet::load_dir(&dir, trace.config.dataset)
            .map_err(|e| CliError::Config(e.to_string()))?,
        None => DemoSet::builtin(trace.config.dataset),
    };
    if demos.fingerprint() != trace.demo_fingerprint {
        return Err(CliError::Config(
            "demo fingerprint differs from the trace; pass --demos with the original demo dir"
                .into(),
        ));
    }
    let mut backend = ScriptedBackend::new();
    for record in trace.to_script_records() {
        backend.add_record(record);
    }
    let table = decode_pipe(&trace.initial_table).map_err(|e| CliError::Other(e.to_string()))?;
    let replayed = match trace.variant.as_str() {
        "chain" => answer_with_id(
            &trace.id,
            &table,
            &trace.question,
            &trace.config,
            &demos,
            &backend,
        ),
        name => run_baseline_with_id(
            &trace.id,
            &table,
            &trace.question,
            parse_baseline(name)?,
            &trace.config,
            &demos,
            &backend,
        ),
    }
    .map_err(|failure| classify_chain_error(&failure.error))?;
    let (answer_text, _) = replayed;
    match &trace.final_answer {
        Some(expected) if *expected == answer_text => {
            println!("replay: ok (final answer {answer_text:?})");
            Ok(())
        }
        Some(expected) => Err(CliError::Other(format!(
            "replay produced {answer_text:?}, trace recorded {expected:?}"
        ))),
        None => {
            println!("replay: ok (no recorded final answer; got {answer_text:?})");
            Ok(())
        }
    }
}

fn cmd_trace_export(files: &[PathBuf], out: Option<PathBuf>) -> Result<(), CliError> {
    let mut lines = String::new();
    for path in files {
        let trace = read_trace(path)?;
        for record in trace.to_script_records() {
            lines.push_str(
                &serde_json::to_string(&record).map_err(|e| CliError::Other(e.to_string()))?,
            );
            lines.push('\n');
        }
    }
    match out {
        Some(path) => {
            std::fs::write(&path, lines).map_err(|e| CliError::Other(e.to_string()))?;
            println!("script written to {}", path.display());
        }
        None => print!("{lines}"),
    }
    Ok(())
}

fn cmd_report(report_path: &Path, out: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(report_path)
        .map_err(|e| CliError::Other(format!("cannot read {}: {e}", report_path.display())))?;
    let report: MetricsReport =
        serde_json::from_str(&text).map_err(|e| CliError::Other(e.to_string()))?;
    report::write_csvs(&report, out)?;
    report::write_svgs(&report, out)?;
    println!("report files written to {}", out.display());
    Ok(())
}

fn run() -> Result<(), CliError> {
    match Cli::parse().command {
        Command::Run {
            overrides,
            sample_id,
            question,
            table_file,
        } => cmd_run(overrides, sample_id, question, table_file),
        Command::Eval {
            overrides,
            baseline,
        } => cmd_eval(overrides, baseline),
        Command::Trace { action } => match action {
            TraceAction::Inspect { file } => cmd_trace_inspect(&file),
            TraceAction::Replay { file, demos } => cmd_trace_replay(&file, demos),
            TraceAction::Export { files, out } => cmd_trace_export(&files, out),
        },
        Command::Report { report, out } => cmd_report(&report, &out),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {}", error.message());
            ExitCode::from(error.exit_code())
        }
    }
}
