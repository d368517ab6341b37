//! Dataset ingestion, per-sample evaluation, and the run analyses
//! (chain-length histogram, table-size buckets, sample budgets).

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::CompletionBackend;
use crate::chain::{answer_with_id, run_baseline_with_id, BaselineMode, ChainTrace, PlanConfig};
use crate::demo::DemoSet;
use crate::metrics::{bleu, denotation_match, rouge_l, rouge_n};
use crate::profile::TaskKind;
use crate::table::{estimate_tokens, Table};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
}

/// One benchmark item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub table: Table,
    pub question: String,
    pub gold_answers: Vec<String>,
    pub task: TaskKind,
}

#[derive(Debug, Deserialize)]
struct SampleRepr {
    id: String,
    table: Table,
    question: String,
    answers: Vec<String>,
}

/// Parses one dataset JSONL line into a [`Sample`].
pub fn parse_dataset_line(line: &str, task: TaskKind) -> Result<Sample, String> {
    let repr: SampleRepr = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if repr.answers.is_empty() {
        return Err("answers must be non-empty".to_string());
    }
    if task == TaskKind::FactVerification {
        for a in &repr.answers {
            if a != "True" && a != "False" {
                return Err(format!(
                    "fact-verification gold must be True/False, got {a:?}"
                ));
            }
        }
    }
    Ok(Sample {
        id: repr.id,
        table: repr.table,
        question: repr.question,
        gold_answers: repr.answers,
        task,
    })
}

/// Loads a JSONL dataset, failing on the first malformed line. Ids must be
/// unique: traces are written one file per sample id.
pub fn load_dataset(path: &Path, task: TaskKind) -> Result<Vec<Sample>, DatasetError> {
    let file = fs::File::open(path)?;
    let mut samples: Vec<Sample> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample = parse_dataset_line(&line, task).map_err(|message| DatasetError::Line {
            line: idx + 1,
            message,
        })?;
        if !seen.insert(sample.id.clone()) {
            return Err(DatasetError::Line {
                line: idx + 1,
                message: format!("duplicate sample id {:?}", sample.id),
            });
        }
        samples.push(sample);
    }
    Ok(samples)
}

/// A malformed line that the lenient loader skipped.
pub type LineFailure = (usize, String);

/// Lenient variant: malformed lines are collected instead of aborting.
pub fn load_dataset_lenient(
    path: &Path,
    task: TaskKind,
) -> Result<(Vec<Sample>, Vec<LineFailure>), DatasetError> {
    let file = fs::File::open(path)?;
    let mut samples = Vec::new();
    let mut errors = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_dataset_line(&line, task) {
            Ok(sample) => samples.push(sample),
            Err(message) => errors.push((idx + 1, message)),
        }
    }
    Ok((samples, errors))
}

/// File name for a sample's trace: the id with path-hostile characters
/// replaced, so untrusted dataset ids cannot escape the trace directory.
pub fn trace_file_name(id: &str) -> String {
    let cleaned: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    let cleaned = cleaned.trim_matches('.').to_string();
    if cleaned.is_empty() {
        "sample".to_string()
    } else {
        cleaned
    }
}

/// Table-size buckets by estimated token count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeBucket {
    Small,
    Medium,
    Large,
}

impl SizeBucket {
    pub fn name(&self) -> &'static str {
        match self {
            SizeBucket::Small => "small",
            SizeBucket::Medium => "medium",
            SizeBucket::Large => "large",
        }
    }
}

/// Bucket boundaries: under 2000 tokens is small, 2000 to 4000 inclusive is
/// medium, above 4000 is large.
pub fn classify_size(tokens: usize) -> SizeBucket {
    if tokens < 2000 {
        SizeBucket::Small
    } else if tokens <= 4000 {
        SizeBucket::Medium
    } else {
        SizeBucket::Large
    }
}

pub fn bucket_of(table: &Table) -> SizeBucket {
    classify_size(estimate_tokens(table))
}

/// Partitions samples into the three size buckets.
pub fn bucket_by_size(samples: &[Sample]) -> BTreeMap<SizeBucket, Vec<&Sample>> {
    let mut buckets: BTreeMap<SizeBucket, Vec<&Sample>> = BTreeMap::new();
    for bucket in [SizeBucket::Small, SizeBucket::Medium, SizeBucket::Large] {
        buckets.insert(bucket, Vec::new());
    }
    for sample in samples {
        buckets
            .get_mut(&bucket_of(&sample.table))
            .unwrap()
            .push(sample);
    }
    buckets
}

/// Chain-length distribution: executed operations per trace.
pub fn chain_length_histogram(traces: &[ChainTrace]) -> BTreeMap<usize, usize> {
    let mut histogram = BTreeMap::new();
    for trace in traces {
        *histogram.entry(trace.executed_len()).or_insert(0) += 1;
    }
    histogram
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeFormScores {
    pub bleu: f64,
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub bucket: String,
    pub samples: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub max_dynamicplan: u64,
    pub max_generateargs: u64,
    pub max_query: u64,
    pub max_total: u64,
    pub mean_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub id: String,
    pub prediction: Option<String>,
    pub correct: Option<bool>,
    pub chain_length: usize,
    pub samples_used: u64,
    pub bucket: String,
    pub error: Option<String>,
}

/// Aggregated scores and analyses for one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: TaskKind,
    pub total_samples: usize,
    pub failures: usize,
    /// Denotation accuracy (short QA) or binary accuracy (fact
    /// verification); absent for free-form QA and empty runs.
    pub accuracy: Option<f64>,
    /// Mean sentence scores; present for free-form QA only.
    pub free_form: Option<FreeFormScores>,
    pub buckets: Vec<BucketReport>,
    pub chain_length_histogram: BTreeMap<usize, usize>,
    pub budget: BudgetReport,
    pub per_sample: Vec<SampleOutcome>,
}

impl MetricsReport {
    pub fn text_summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "samples: {}  failures: {}\n",
            self.total_samples, self.failures
        ));
        if let Some(acc) = self.accuracy {
            out.push_str(&format!("accuracy: {acc:.4}\n"));
        }
        if let Some(ff) = &self.free_form {
            out.push_str(&format!(
                "bleu: {:.4}  rouge-1: {:.4}  rouge-2: {:.4}  rouge-l: {:.4}\n",
                ff.bleu, ff.rouge_1, ff.rouge_2, ff.rouge_l
            ));
        }
        out.push_str("buckets:\n");
        for bucket in &self.buckets {
            let accuracy = bucket
                .accuracy
                .map(|a| format!("{a:.4}"))
                .unwrap_or_else(|| "-".to_string());
            out.push_str(&format!(
                "  {:<6} samples {:>4}  accuracy {}\n",
                bucket.bucket, bucket.samples, accuracy
            ));
        }
        out.push_str("chain length histogram:\n");
        for (length, count) in &self.chain_length_histogram {
            out.push_str(&format!("  {length}: {count}\n"));
        }
        out.push_str(&format!(
            "budget: max total {}  mean total {:.2}\n",
            self.budget.max_total, self.budget.mean_total
        ));
        out
    }
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub plan: PlanConfig,
    pub concurrency: usize,
    /// Directory for one trace JSON file per sample; `None` disables writes.
    pub trace_dir: Option<PathBuf>,
    /// When set, the baseline is evaluated instead of the operation chain.
    pub baseline: Option<BaselineMode>,
}

impl EvalConfig {
    pub fn new(plan: PlanConfig) -> Self {
        EvalConfig {
            plan,
            concurrency: 1,
            trace_dir: None,
            baseline: None,
        }
    }
}

struct PerSample {
    outcome: SampleOutcome,
    trace: ChainTrace,
    prediction: Option<String>,
}

fn evaluate_one(
    sample: &Sample,
    cfg: &EvalConfig,
    demos: &DemoSet,
    backend: &dyn CompletionBackend,
) -> PerSample {
    let result = match cfg.baseline {
        Some(mode) => run_baseline_with_id(
            &sample.id,
            &sample.table,
            &sample.question,
            mode,
            &cfg.plan,
            demos,
            backend,
        ),
        None => answer_with_id(
            &sample.id,
            &sample.table,
            &sample.question,
            &cfg.plan,
            demos,
            backend,
        ),
    };
    let bucket = bucket_of(&sample.table).name().to_string();
    match result {
        Ok((prediction, trace)) => {
            let correct = match sample.task {
                TaskKind::ShortQa => Some(denotation_match(&prediction, &sample.gold_answers)),
                TaskKind::FactVerification => Some(sample.gold_answers.contains(&prediction)),
                TaskKind::FreeFormQa => None,
            };
            PerSample {
                outcome: SampleOutcome {
                    id: sample.id.clone(),
                    prediction: Some(prediction.clone()),
                    correct,
                    chain_length: trace.executed_len(),
                    samples_used: trace.ledger.total,
                    bucket,
                    error: None,
                },
                trace,
                prediction: Some(prediction),
            }
        }
        Err(failure) => PerSample {
            outcome: SampleOutcome {
                id: sample.id.clone(),
                prediction: None,
                correct: match sample.task {
                    TaskKind::FreeFormQa => None,
                    _ => Some(false),
                },
                chain_length: failure.trace.executed_len(),
                samples_used: failure.trace.ledger.total,
                bucket,
                error: Some(failure.error.to_string()),
            },
            trace: *failure.trace,
            prediction: None,
        },
    }
}

/// Evaluates every sample (bounded concurrency), writes traces, and
/// aggregates scores. Per-sample failures are recorded, never fatal.
pub fn run_eval(
    samples: &[Sample],
    cfg: &EvalConfig,
    demos: &DemoSet,
    backend: &dyn CompletionBackend,
) -> Result<MetricsReport, std::io::Error> {
    let results: Vec<Option<PerSample>> = {
        let slots: Mutex<Vec<Option<PerSample>>> =
            Mutex::new((0..samples.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let workers = cfg.concurrency.max(1).min(samples.len().max(1));
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let index = next.fetch_add(1, Ordering::SeqCst);
                    if index >= samples.len() {
                        break;
                    }
                    let result = evaluate_one(&samples[index], cfg, demos, backend);
                    slots.lock().unwrap()[index] = Some(result);
                });
            }
        });
        slots.into_inner().unwrap()
    };

    if let Some(dir) = &cfg.trace_dir {
        fs::create_dir_all(dir)?;
    }

    let mut per_sample = Vec::with_capacity(samples.len());
    let mut traces = Vec::with_capacity(samples.len());
    let mut failures = 0usize;
    let mut budget = BudgetReport::default();
    let mut total_used = 0u64;
    let mut free_form_sums = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut free_form_count = 0usize;

    for (sample, result) in samples.iter().zip(results) {
        let result = result.expect("worker left a slot empty");
        if result.outcome.error.is_some() {
            failures += 1;
        }
        if let Some(dir) = &cfg.trace_dir {
            let path = dir.join(format!("{}.json", trace_file_name(&sample.id)));
            fs::write(&path, serde_json::to_string_pretty(&result.trace)?)?;
        }
        budget.max_dynamicplan = budget
            .max_dynamicplan
            .max(result.trace.ledger.dynamicplan_samples);
        budget.max_generateargs = budget
            .max_generateargs
            .max(result.trace.ledger.generateargs_samples);
        budget.max_query = budget.max_query.max(result.trace.ledger.query_samples);
        budget.max_total = budget.max_total.max(result.trace.ledger.total);
        total_used += result.trace.ledger.total;

        if sample.task == TaskKind::FreeFormQa {
            if let Some(prediction) = &result.prediction {
                let best = |f: &dyn Fn(&str) -> f64| {
                    sample
                        .gold_answers
                        .iter()
                        .map(|gold| f(gold))
                        .fold(0.0f64, f64::max)
                };
                free_form_sums.0 += bleu(prediction, &sample.gold_answers);
                free_form_sums.1 += best(&|gold| rouge_n(prediction, gold, 1));
                free_form_sums.2 += best(&|gold| rouge_n(prediction, gold, 2));
                free_form_sums.3 += best(&|gold| rouge_l(prediction, gold));
            }
            free_form_count += 1;
        }

        per_sample.push(result.outcome);
        traces.push(result.trace);
    }

    let n = samples.len();
    let accuracy = match cfg.plan.task {
        TaskKind::FreeFormQa => None,
        _ if n == 0 => None,
        _ => {
            let correct = per_sample
                .iter()
                .filter(|s| s.correct == Some(true))
                .count();
            Some(correct as f64 / n as f64)
        }
    };
    let free_form = if cfg.plan.task == TaskKind::FreeFormQa && free_form_count > 0 {
        let count = free_form_count as f64;
        Some(FreeFormScores {
            bleu: free_form_sums.0 / count,
            rouge_1: free_form_sums.1 / count,
            rouge_2: free_form_sums.2 / count,
            rouge_l: free_form_sums.3 / count,
        })
    } else {
        None
    };

    let mut buckets = Vec::new();
    for bucket in [SizeBucket::Small, SizeBucket::Medium, SizeBucket::Large] {
        let members: Vec<&SampleOutcome> = per_sample
            .iter()
            .filter(|s| s.bucket == bucket.name())
            .collect();
        let correct = members.iter().filter(|s| s.correct == Some(true)).count();
        let scored = members.iter().filter(|s| s.correct.is_some()).count();
        buckets.push(BucketReport {
            bucket: bucket.name().to_string(),
            samples: members.len(),
            correct,
            accuracy: if scored > 0 {
                Some(correct as f64 / scored as f64)
            } else {
                None
            },
        });
    }

    budget.mean_total = if n > 0 {
        total_used as f64 / n as f64
    } else {
        0.0
    };

    Ok(MetricsReport {
        task: cfg.plan.task,
        total_samples: n,
        failures,
        accuracy,
        free_form,
        buckets,
        chain_length_histogram: chain_length_histogram(&traces),
        budget,
        per_sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_line_parsing() {
        let line = r#"{"id":"s1","table":{"header":["A"],"rows":[["x"]]},"question":"q?","answers":["x"]}"#;
        let sample = parse_dataset_line(line, TaskKind::ShortQa).unwrap();
        assert_eq!(sample.id, "s1");
        assert_eq!(sample.table.n_rows(), 1);
    }

    #[test]
    fn dataset_line_rejects_ragged() {
        let line = r#"{"id":"s1","table":{"header":["A"],"rows":[["x","y"]]},"question":"q?","answers":["x"]}"#;
        assert!(parse_dataset_line(line, TaskKind::ShortQa).is_err());
    }

    #[test]
    fn dataset_line_rejects_empty_answers() {
        let line = r#"{"id":"s1","table":{"header":["A"],"rows":[]},"question":"q?","answers":[]}"#;
        assert!(parse_dataset_line(line, TaskKind::ShortQa).is_err());
    }

    #[test]
    fn dataset_line_fact_golds() {
        let line =
            r#"{"id":"s1","table":{"header":["A"],"rows":[]},"question":"q?","answers":["yes"]}"#;
        assert!(parse_dataset_line(line, TaskKind::FactVerification).is_err());
        let line =
            r#"{"id":"s1","table":{"header":["A"],"rows":[]},"question":"q?","answers":["True"]}"#;
        assert!(parse_dataset_line(line, TaskKind::FactVerification).is_ok());
    }

    #[test]
    fn load_dataset_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"table\":{\"header\":[\"A\"],\"rows\":[]},\"question\":\"q\",\"answers\":[\"1\"]}\nnot json\n",
        )
        .unwrap();
        match load_dataset(&path, TaskKind::ShortQa).unwrap_err() {
            DatasetError::Line { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let (samples, errors) = load_dataset_lenient(&path, TaskKind::ShortQa).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(errors.len(), 1);
    }

    #[test]
    fn load_dataset_three_line_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let lines = [
            r#"{"id":"a","table":{"caption":"cap","header":["A","B"],"rows":[["1","x"]]},"question":"first?","answers":["1"]}"#,
            r#"{"id":"b","table":{"header":["C"],"rows":[["y"],["z"]]},"question":"second?","answers":["y","z"]}"#,
            r#"{"id":"c","table":{"header":["D"],"rows":[]},"question":"third?","answers":["none"]}"#,
        ];
        std::fs::write(&path, lines.join("\n")).unwrap();
        let samples = load_dataset(&path, TaskKind::ShortQa).unwrap();
        assert_eq!(samples.len(), 3);
        assert_eq!(samples[0].table.caption(), Some("cap"));
        assert_eq!(samples[1].gold_answers, vec!["y", "z"]);
        assert_eq!(samples[2].table.n_rows(), 0);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let line = r#"{"id":"same","table":{"header":["A"],"rows":[]},"question":"q","answers":["1"]}"#;
        std::fs::write(&path, format!("{line}\n{line}\n")).unwrap();
        match load_dataset(&path, TaskKind::ShortQa).unwrap_err() {
            DatasetError::Line { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("duplicate"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trace_file_names_stay_inside_the_directory() {
        assert_eq!(trace_file_name("nt-1"), "nt-1");
        assert_eq!(trace_file_name("../../etc/passwd"), "_.._etc_passwd");
        assert_eq!(trace_file_name("a/b\\c"), "a_b_c");
        assert_eq!(trace_file_name(""), "sample");
        assert_eq!(trace_file_name(".."), "sample");
        assert!(!trace_file_name("..").contains('.'));
    }

    #[test]
    fn size_boundaries() {
        assert_eq!(classify_size(1999), SizeBucket::Small);
        assert_eq!(classify_size(2000), SizeBucket::Medium);
        assert_eq!(classify_size(4000), SizeBucket::Medium);
        assert_eq!(classify_size(4001), SizeBucket::Large);
    }

    /// Tables built to land in each bucket by construction: a one-column
    /// table has 3 + 4r estimated tokens.
    #[test]
    fn constructed_tables_land_in_buckets() {
        let rows =
            |n: usize| -> Vec<Vec<String>> { (0..n).map(|i| vec![format!("w{i}")]).collect() };
        let small = Table::new(None, vec!["A".into()], rows(499)).unwrap();
        assert_eq!(estimate_tokens(&small), 3 + 4 * 499);
        assert_eq!(bucket_of(&small), SizeBucket::Small);
        let medium = Table::new(None, vec!["A".into()], rows(500)).unwrap();
        assert_eq!(bucket_of(&medium), SizeBucket::Medium);
        let large = Table::new(None, vec!["A".into()], rows(1000)).unwrap();
        assert_eq!(bucket_of(&large), SizeBucket::Large);
    }

    #[test]
    fn bucket_partition() {
        let sample = |id: &str, rows: usize| Sample {
            id: id.into(),
            table: Table::new(
                None,
                vec!["A".into()],
                (0..rows).map(|i| vec![format!("{i}")]).collect(),
            )
            .unwrap(),
            question: "q".into(),
            gold_answers: vec!["x".into()],
            task: TaskKind::ShortQa,
        };
        let samples = vec![sample("a", 1), sample("b", 600), sample("c", 2000)];
        let buckets = bucket_by_size(&samples);
        let total: usize = buckets.values().map(Vec::len).sum();
        assert_eq!(total, samples.len());
        assert_eq!(buckets[&SizeBucket::Small].len(), 1);
        assert_eq!(buckets[&SizeBucket::Medium].len(), 1);
        assert_eq!(buckets[&SizeBucket::Large].len(), 1);
    }
}
