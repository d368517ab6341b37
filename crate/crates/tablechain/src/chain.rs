//! The control loop for one (table, question) pair: plan an operation, parse
//! it, generate its arguments, execute, and repeat until the end tag — then
//! query the final table for the answer.
//!
//! Planning is always greedy (one sample); argument generation may draw
//! several samples that are reduced by majority vote. A step whose arguments
//! cannot be parsed (or fail to execute) is retried with fresh samples up to
//! the configured limit and then skipped; tables are never left
//! half-modified. Every prompt hash, raw completion, parsed result and
//! intermediate table is recorded in a [`ChainTrace`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    prompt_key, BackendError, BudgetCaps, BudgetLedger, BudgetMode, CompletionBackend,
    CompletionRequest, Phase,
};
use crate::demo::DemoSet;
use crate::encode::{decode_pipe, encode_pipe};
use crate::ops::{apply, Arguments, Operation, OperationPool};
use crate::parse::{
    canonical_format, parse_args, parse_cot_answer, parse_final_answer, parse_plan, vote_args,
    CompletionParseError, ParsedArgs,
};
use crate::profile::{DatasetKind, SamplingParams, SamplingProfile, TaskKind};
pub use crate::prompt::BaselineMode;
use crate::prompt::{
    available_operations, build_args_prompt, build_baseline_prompt, build_dynamicplan_prompt,
    build_query_prompt, ChainLink, PromptError, QueryTable,
};
use crate::table::{Table, TableError};

#[derive(Debug, Error)]
pub enum ChainError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("final answer: {0}")]
    Answer(#[from] CompletionParseError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// A failed run still carries everything recorded up to the failure.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct ChainFailure {
    pub error: ChainError,
    pub trace: Box<ChainTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub dataset: DatasetKind,
    pub task: TaskKind,
    pub pool: OperationPool,
    /// Upper bound on executed operations; also bounds planning calls.
    pub max_chain_len: usize,
    /// Fresh-sample retries for an argument set that fails to parse or
    /// execute, before the planned operation is skipped.
    pub retry_limit: u32,
    pub sampling: SamplingProfile,
    pub caps: BudgetCaps,
}

impl PlanConfig {
    pub fn for_dataset(dataset: DatasetKind) -> Self {
        PlanConfig {
            dataset,
            task: dataset.default_task(),
            pool: OperationPool::full(),
            max_chain_len: 5,
            retry_limit: 2,
            sampling: SamplingProfile::for_dataset(dataset),
            caps: BudgetCaps::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        if self.max_chain_len == 0 {
            return Err(ChainError::Config("max_chain_len must be >= 1".into()));
        }
        if self.pool.is_empty() {
            return Err(ChainError::Config("operation pool is empty".into()));
        }
        Ok(())
    }
}

/// One argument-generation attempt: the prompt, every sampled completion,
/// and what each parsed to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgsAttempt {
    pub prompt_hash: String,
    pub completions: Vec<String>,
    /// Canonical serialization per completion; `None` where parsing failed.
    pub parsed: Vec<Option<String>>,
    pub errors: Vec<String>,
}

/// One link of the chain as recorded: a planning call plus (for executable
/// operations) the argument attempts and the resulting table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub plan_prompt_hash: String,
    pub plan_completion: String,
    /// Canonical name of the planned operation, or `None` if unparseable.
    pub planned_op: Option<String>,
    pub args_attempts: Vec<ArgsAttempt>,
    /// Canonical serialization of the winning arguments.
    pub chosen_args: Option<String>,
    /// PIPE text of the table after executing this step.
    pub resulting_table: Option<String>,
    pub executed: bool,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub prompt_hash: String,
    pub completion: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub dynamicplan_samples: u64,
    pub generateargs_samples: u64,
    pub query_samples: u64,
    pub total: u64,
}

impl From<&BudgetLedger> for LedgerSnapshot {
    fn from(ledger: &BudgetLedger) -> Self {
        LedgerSnapshot {
            dynamicplan_samples: ledger.dynamicplan_samples,
            generateargs_samples: ledger.generateargs_samples,
            query_samples: ledger.query_samples,
            total: ledger.total(),
        }
    }
}

/// Complete record of one pipeline run; JSON-serializable, with tables
/// embedded as PIPE text. Replaying the trace through a scripted backend
/// built from [`ChainTrace::to_script_records`] reproduces the same answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub id: String,
    /// "chain" or a baseline name.
    pub variant: String,
    /// The configuration that produced this trace; replays rebuild prompts
    /// from it.
    pub config: PlanConfig,
    pub question: String,
    /// PIPE text of the input table.
    pub initial_table: String,
    pub demo_fingerprint: String,
    pub steps: Vec<StepRecord>,
    pub query: Option<QueryRecord>,
    pub final_answer: Option<String>,
    pub ledger: LedgerSnapshot,
    pub warnings: Vec<String>,
}

impl ChainTrace {
    fn new(
        id: &str,
        variant: &str,
        config: PlanConfig,
        question: &str,
        initial_table: String,
        demo_fingerprint: String,
    ) -> Self {
        ChainTrace {
            id: id.to_string(),
            variant: variant.to_string(),
            config,
            question: question.to_string(),
            initial_table,
            demo_fingerprint,
            steps: Vec::new(),
            query: None,
            final_answer: None,
            ledger: LedgerSnapshot::default(),
            warnings: Vec::new(),
        }
    }

    /// Number of executed (non-sentinel) operations.
    pub fn executed_len(&self) -> usize {
        self.steps.iter().filter(|s| s.executed).count()
    }

    /// Canonical names of the executed operations in order.
    pub fn executed_ops(&self) -> Vec<String> {
        self.steps
            .iter()
            .filter(|s| s.executed)
            .filter_map(|s| s.planned_op.clone())
            .collect()
    }

    /// Re-applies every recorded (operation, arguments) pair to the previous
    /// table and checks that the recorded resulting tables match, byte for
    /// byte in PIPE form.
    pub fn verify_self_consistency(&self) -> Result<(), String> {
        let mut table = decode_pipe(&self.initial_table)
            .map_err(|e| format!("initial table does not decode: {e}"))?;
        for (i, step) in self.steps.iter().enumerate() {
            if !step.executed {
                continue;
            }
            let op_name = step
                .planned_op
                .as_ref()
                .ok_or_else(|| format!("step {i}: executed without an operation"))?;
            let op = Operation::from_canonical(op_name)
                .ok_or_else(|| format!("step {i}: unknown operation {op_name}"))?;
            let args_text = step
                .chosen_args
                .as_ref()
                .ok_or_else(|| format!("step {i}: executed without arguments"))?;
            let parsed = parse_args(op, args_text)
                .map_err(|e| format!("step {i}: recorded arguments do not parse: {e}"))?;
            let next = apply(&table, op, &parsed.args)
                .map_err(|e| format!("step {i}: recorded operation does not execute: {e}"))?;
            let recorded = step
                .resulting_table
                .as_ref()
                .ok_or_else(|| format!("step {i}: executed without a resulting table"))?;
            let encoded = encode_pipe(&next)
                .map_err(|e| format!("step {i}: resulting table does not encode: {e}"))?;
            if &encoded != recorded {
                return Err(format!(
                    "step {i}: recorded table differs from re-execution:\n{recorded}\nvs\n{encoded}"
                ));
            }
            table = next;
        }
        Ok(())
    }

    /// Converts the trace into script records for the scripted backend.
    /// Prompts are not stored in traces, so the records carry the recorded
    /// prompt hashes as keys with empty request prompts.
    pub fn to_script_records(&self) -> Vec<crate::backend::ScriptRecord> {
        use crate::backend::{ScriptRecord, ScriptRequest};
        let mut records = Vec::new();
        let mut push = |key: &str, completions: Vec<String>| {
            records.push(ScriptRecord {
                key: key.to_string(),
                request: ScriptRequest::default(),
                completions,
                timestamp: 0,
            });
        };
        for step in &self.steps {
            push(&step.plan_prompt_hash, vec![step.plan_completion.clone()]);
            for attempt in &step.args_attempts {
                push(&attempt.prompt_hash, attempt.completions.clone());
            }
        }
        if let Some(query) = &self.query {
            push(&query.prompt_hash, vec![query.completion.clone()]);
        }
        records
    }
}

struct Runner<'a> {
    cfg: &'a PlanConfig,
    demos: &'a DemoSet,
    backend: &'a dyn CompletionBackend,
    ledger: BudgetLedger,
    trace: ChainTrace,
}

enum SampleOutcome {
    Response(Vec<String>),
    Abort(BackendError),
}

impl<'a> Runner<'a> {
    /// Budget-checked completion call. Cap violations abort in enforce mode
    /// and are recorded as warnings otherwise; the per-question ledger counts
    /// logical samples, so budgets behave identically with or without a
    /// cache in front of the provider.
    fn sample(&mut self, phase: Phase, params: SamplingParams, prompt: &str) -> SampleOutcome {
        let n = params.n_samples as u64;
        if let Err(violation) = self.cfg.caps.check(&self.ledger, phase, n) {
            match self.cfg.caps.mode {
                BudgetMode::Enforce => return SampleOutcome::Abort(violation),
                BudgetMode::WarnOnly => self.trace.warnings.push(violation.to_string()),
            }
        }
        let request = CompletionRequest::new(prompt, params);
        match self.backend.complete(&request) {
            Ok(response) => {
                self.ledger.record(phase, n);
                SampleOutcome::Response(response.completions)
            }
            Err(e) => SampleOutcome::Abort(e),
        }
    }

    fn fail(mut self, error: ChainError) -> ChainFailure {
        self.trace.ledger = LedgerSnapshot::from(&self.ledger);
        ChainFailure {
            error,
            trace: Box::new(self.trace),
        }
    }
}

struct ChainOutcome {
    final_table: Table,
    /// Set when the last executed operation was a group-by: the table it
    /// grouped and the grouped column's name.
    group_note: Option<(Table, String)>,
}

fn run_chain_inner(
    runner: &mut Runner<'_>,
    table: &Table,
    question: &str,
) -> Result<ChainOutcome, ChainError> {
    let cfg = runner.cfg;
    let mut current = table.clone();
    let mut history: Vec<ChainLink> = vec![ChainLink::begin()];
    let mut group_note: Option<(Table, String)> = None;
    let mut executed = 0usize;
    let mut plan_calls = 0usize;

    loop {
        if executed >= cfg.max_chain_len || plan_calls >= cfg.max_chain_len {
            break;
        }
        let available = available_operations(&cfg.pool, &history);
        if available.is_empty() {
            break;
        }

        let plan_prompt = build_dynamicplan_prompt(
            &current,
            question,
            &history,
            &cfg.pool,
            runner.demos,
            cfg.task,
        )?;
        let completions =
            match runner.sample(Phase::DynamicPlan, cfg.sampling.plan, plan_prompt.text()) {
                SampleOutcome::Response(c) => c,
                SampleOutcome::Abort(e) => return Err(e.into()),
            };
        plan_calls += 1;
        let plan_completion = completions.into_iter().next().unwrap_or_default();
        let mut step = StepRecord {
            plan_prompt_hash: prompt_key(plan_prompt.text()),
            plan_completion: plan_completion.clone(),
            planned_op: None,
            args_attempts: Vec::new(),
            chosen_args: None,
            resulting_table: None,
            executed: false,
            errors: Vec::new(),
        };

        let op = match parse_plan(&plan_completion) {
            Ok(parsed) => parsed.op,
            Err(e) => {
                step.errors.push(e.to_string());
                runner.trace.steps.push(step);
                break;
            }
        };
        step.planned_op = Some(op.canonical_name().to_string());

        if op == Operation::End {
            history.push(ChainLink::end());
            runner.trace.steps.push(step);
            break;
        }
        if !available.contains(&op) {
            step.errors.push(format!(
                "planned operation {op} is not available (pool or already used); chain terminated"
            ));
            runner.trace.steps.push(step);
            break;
        }

        // Argument generation with fresh-sample retries; execution failures
        // count like parse failures. The table is replaced only on success.
        let params = cfg.sampling.params_for(op);
        let mut success: Option<(Arguments, Table)> = None;
        for _attempt in 0..=cfg.retry_limit {
            let args_prompt = build_args_prompt(&current, question, op, runner.demos, cfg.task)?;
            let completions = match runner.sample(Phase::GenerateArgs, params, args_prompt.text()) {
                SampleOutcome::Response(c) => c,
                SampleOutcome::Abort(e) => {
                    runner.trace.steps.push(step);
                    return Err(e.into());
                }
            };
            let mut attempt = ArgsAttempt {
                prompt_hash: prompt_key(args_prompt.text()),
                completions: completions.clone(),
                parsed: Vec::with_capacity(completions.len()),
                errors: Vec::new(),
            };
            let mut parsed_ok: Vec<ParsedArgs> = Vec::new();
            for completion in &completions {
                match parse_args(op, completion) {
                    Ok(parsed) => {
                        attempt
                            .parsed
                            .push(Some(canonical_format(op, &parsed.args)));
                        parsed_ok.push(parsed);
                    }
                    Err(e) => {
                        attempt.parsed.push(None);
                        attempt.errors.push(e.to_string());
                    }
                }
            }
            if parsed_ok.is_empty() {
                step.args_attempts.push(attempt);
                continue;
            }
            let winner = vote_args(&parsed_ok).clone();
            match apply(&current, op, &winner.args) {
                Ok(next) => {
                    step.args_attempts.push(attempt);
                    success = Some((winner.args, next));
                    break;
                }
                Err(e) => {
                    attempt.errors.push(format!("execution failed: {e}"));
                    step.args_attempts.push(attempt);
                }
            }
        }

        match success {
            Some((args, next)) => {
                step.chosen_args = Some(canonical_format(op, &args));
                step.resulting_table = Some(encode_pipe(&next)?);
                step.executed = true;
                group_note = if op == Operation::GroupBy {
                    Some((current.clone(), next.header()[1].clone()))
                } else {
                    None
                };
                history.push(ChainLink {
                    op,
                    args: Some(args),
                });
                current = next;
                executed += 1;
                runner.trace.steps.push(step);
            }
            None => {
                step.errors
                    .push(format!("operation {op} skipped after retries"));
                runner.trace.steps.push(step);
            }
        }
    }

    Ok(ChainOutcome {
        final_table: current,
        group_note,
    })
}

fn make_runner<'a>(
    id: &str,
    variant: &str,
    table: &Table,
    question: &str,
    cfg: &'a PlanConfig,
    demos: &'a DemoSet,
    backend: &'a dyn CompletionBackend,
) -> Result<Runner<'a>, ChainError> {
    cfg.validate()?;
    let initial = encode_pipe(table)?;
    Ok(Runner {
        cfg,
        demos,
        backend,
        ledger: BudgetLedger::default(),
        trace: ChainTrace::new(
            id,
            variant,
            cfg.clone(),
            question,
            initial,
            demos.fingerprint(),
        ),
    })
}

/// Runs the operation chain for one question and returns the final table
/// with the full trace.
pub fn run_chain(
    table: &Table,
    question: &str,
    cfg: &PlanConfig,
    demos: &DemoSet,
    backend: &dyn CompletionBackend,
) -> Result<(Table, ChainTrace), ChainFailure> {
    run_chain_with_id("adhoc", table, question, cfg, demos, backend)
}

pub fn run_chain_with_id(
    id: &str,
    table: &Table,
    question: &str,
    cfg: &PlanConfig,
    demos: &DemoSet,
    backend: &dyn CompletionBackend,
) -> Result<(Table, ChainTrace), ChainFailure> {
    let mut runner = match make_runner(id, "chain", table, question, cfg, demos, backend) {
        Ok(runner) => runner,
        Err(error) => {
            return Err(ChainFailure {
                error,
                trace: Box::new(ChainTrace::new(
                    id,
                    "chain",
                    cfg.clone(),
                    question,
                    String::new(),
                    demos.fingerprint(),
                )),
            })
        }
    };
    match run_chain_inner(&mut runner, table, question) {
        Ok(outcome) => {
            runner.trace.ledger = LedgerSnapshot::from(&runner.ledger);
            let mut trace = runner.trace;
            trace.final_answer = None;
            Ok((outcome.final_table, trace))
        }
        Err(error) => Err(runner.fail(error)),
    }
}

/// Runs the chain, then queries the final table for the answer.
pub fn answer(
    table: &Table,
    question: &str,
    cfg: &PlanConfig,
    demos: &DemoSet,
    backend: &dyn CompletionBackend,
) -> Result<(String, ChainTrace), ChainFailure> {
    answer_with_id("adhoc", table, question, cfg, demos, backend)
}

pub fn answer_with_id(
    id: &str,
    table: &Table,
    question: &str,
    cfg: &PlanConfig,
    demos: &DemoSet,
    backend: &dyn CompletionBackend,
) -> Result<(String, ChainTrace), ChainFailure> {
    let mut runner = match make_runner(id, "chain", table, question, cfg, demos, backend) {
        Ok(runner) => runner,
        Err(error) => {
            return Err(ChainFailure {
                error,
                trace: Box::new(ChainTrace::new(
                    id,
                    "chain",
                    cfg.clone(),
                    question,
                    String::new(),
                    demos.fingerprint(),
                )),
            })
        }
    };
    let outcome = match run_chain_inner(&mut runner, table, question) {
        Ok(outcome) => outcome,
        Err(error) => return Err(runner.fail(error)),
    };

    let view = match &outcome.group_note {
        Some((source, column)) => QueryTable::Grouped {
            source,
            column,
            grouped: &outcome.final_table,
        },
        None => QueryTable::Plain(&outcome.final_table),
    };
    let prompt = match build_query_prompt(&view, question, runner.demos, runner.cfg.task) {
        Ok(prompt) => prompt,
        Err(e) => return Err(runner.fail(e.into())),
    };
    let completions = match runner.sample(Phase::Query, runner.cfg.sampling.query, prompt.text()) {
        SampleOutcome::Response(c) => c,
        SampleOutcome::Abort(e) => return Err(runner.fail(e.into())),
    };
    let completion = completions.into_iter().next().unwrap_or_default();
    runner.trace.query = Some(QueryRecord {
        prompt_hash: prompt_key(prompt.text()),
        completion: completion.clone(),
    });
    let parsed = match parse_final_answer(&completion, runner.cfg.task) {
        Ok(answer) => answer,
        Err(e) => return Err(runner.fail(e.into())),
    };
    runner.trace.final_answer = Some(parsed.clone());
    runner.trace.ledger = LedgerSnapshot::from(&runner.ledger);
    Ok((parsed, runner.trace))
}

/// Runs a generic-reasoning baseline: one prompt, one completion,
/// mode-specific answer extraction.
pub fn run_baseline(
    table: &Table,
    question: &str,
    mode: BaselineMode,
    cfg: &PlanConfig,
    demos: &DemoSet,
    backend: &dyn CompletionBackend,
) -> Result<(String, ChainTrace), ChainFailure> {
    run_baseline_with_id("adhoc", table, question, mode, cfg, demos, backend)
}

#[allow(clippy::too_many_arguments)]
pub fn run_baseline_with_id(
    id: &str,
    table: &Table,
    question: &str,
    mode: BaselineMode,
    cfg: &PlanConfig,
    demos: &DemoSet,
    backend: &dyn CompletionBackend,
) -> Result<(String, ChainTrace), ChainFailure> {
    let mut runner = match make_runner(id, mode.name(), table, question, cfg, demos, backend) {
        Ok(runner) => runner,
        Err(error) => {
            return Err(ChainFailure {
                error,
                trace: Box::new(ChainTrace::new(
                    id,
                    mode.name(),
                    cfg.clone(),
                    question,
                    String::new(),
                    demos.fingerprint(),
                )),
            })
        }
    };
    let prompt = match build_baseline_prompt(table, question, mode, demos, cfg.task) {
        Ok(prompt) => prompt,
        Err(e) => return Err(runner.fail(e.into())),
    };
    let completions = match runner.sample(Phase::Query, cfg.sampling.query, prompt.text()) {
        SampleOutcome::Response(c) => c,
        SampleOutcome::Abort(e) => return Err(runner.fail(e.into())),
    };
    let completion = completions.into_iter().next().unwrap_or_default();
    runner.trace.query = Some(QueryRecord {
        prompt_hash: prompt_key(prompt.text()),
        completion: completion.clone(),
    });
    let parsed = match mode {
        BaselineMode::Cot => parse_cot_answer(&completion, cfg.task),
        _ => parse_final_answer(&completion, cfg.task),
    };
    let parsed = match parsed {
        Ok(answer) => answer,
        Err(e) => return Err(runner.fail(e.into())),
    };
    runner.trace.final_answer = Some(parsed.clone());
    runner.trace.ledger = LedgerSnapshot::from(&runner.ledger);
    Ok((parsed, runner.trace))
}
