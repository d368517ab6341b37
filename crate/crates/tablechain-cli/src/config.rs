//! Run configuration: a TOML file with per-module sections, overridden by
//! command-line flags. Credentials come only from the environment variable
//! named in the backend section.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use tablechain::backend::{
    BudgetCaps, BudgetMode, CachedBackend, CompletionBackend, HttpBackend, HttpBackendConfig,
    ScriptedBackend, WireFields,
};
use tablechain::chain::PlanConfig;
use tablechain::demo::DemoSet;
use tablechain::ops::{Operation, OperationPool};
use tablechain::profile::{DatasetKind, TaskKind};

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub budget: BudgetSection,
    #[serde(default)]
    pub demos: DemosSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: Option<PathBuf>,
    /// "wikitq", "tabfact" or "fetaqa"; selects demos and sampling defaults.
    pub kind: Option<String>,
    /// "short_qa", "fact_verification" or "free_form_qa"; defaults from kind.
    pub task: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    /// "scripted" or "http".
    pub kind: Option<String>,
    pub script: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub credentials_env: Option<String>,
    pub fields: Option<WireFields>,
    pub max_attempts: Option<u32>,
    pub backoff_ms: Option<u64>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub pool: Option<Vec<String>>,
    pub max_chain_len: Option<usize>,
    pub retry_limit: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    pub dynamicplan: Option<u64>,
    pub generateargs: Option<u64>,
    pub query: Option<u64>,
    pub total: Option<u64>,
    /// "enforce" or "warn_only".
    pub mode: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemosSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub concurrency: Option<usize>,
    pub out: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Flag-level overrides shared by `run` and `eval`.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct CommonOverrides {
    /// Configuration file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset JSONL file.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Dataset kind: wikitq, tabfact or fetaqa.
    #[arg(long = "dataset-kind")]
    pub dataset_kind: Option<String>,
    /// Task kind: short_qa, fact_verification or free_form_qa.
    #[arg(long)]
    pub task: Option<String>,
    /// HTTP backend endpoint URL.
    #[arg(long)]
    pub backend: Option<String>,
    /// Scripted backend file (JSONL); takes precedence over --backend.
    #[arg(long)]
    pub scripted: Option<PathBuf>,
    /// Comma-separated operation pool, e.g. "f_select_row,f_sort_by".
    #[arg(long)]
    pub pool: Option<String>,
    #[arg(long = "max-chain-len")]
    pub max_chain_len: Option<usize>,
    /// Demo directory (defaults to the builtin demos for the dataset kind).
    #[arg(long)]
    pub demos: Option<PathBuf>,
    /// Completion cache directory.
    #[arg(long = "cache-dir")]
    pub cache_dir: Option<PathBuf>,
    /// Output directory for traces and reports.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub concurrency: Option<usize>,
}

/// Everything a command needs, resolved from file plus flags.
pub struct Resolved {
    pub dataset_path: Option<PathBuf>,
    pub plan: PlanConfig,
    pub demos: DemoSet,
    pub backend: Arc<dyn CompletionBackend>,
    pub concurrency: usize,
    pub out_dir: Option<PathBuf>,
}

fn parse_dataset_kind(name: &str) -> Result<DatasetKind, CliError> {
    DatasetKind::from_name(name)
        .ok_or_else(|| CliError::Config(format!("unknown dataset kind {name:?}")))
}

fn parse_task(name: &str) -> Result<TaskKind, CliError> {
    match name {
        "short_qa" => Ok(TaskKind::ShortQa),
        "fact_verification" => Ok(TaskKind::FactVerification),
        "free_form_qa" => Ok(TaskKind::FreeFormQa),
        _ => Err(CliError::Config(format!("unknown task kind {name:?}"))),
    }
}

fn parse_pool(spec: &str) -> Result<OperationPool, CliError> {
    let mut ops = Vec::new();
    for name in spec.split(',') {
        let name = name.trim();
        let op = Operation::from_canonical(name)
            .filter(|op| !op.is_sentinel())
            .ok_or_else(|| CliError::Config(format!("unknown operation {name:?} in --pool")))?;
        ops.push(op);
    }
    OperationPool::new(ops).map_err(|e| CliError::Config(e.to_string()))
}

pub fn resolve(overrides: &CommonOverrides) -> Result<Resolved, CliError> {
    let file = match &overrides.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };

    let kind_name = overrides
        .dataset_kind
        .clone()
        .or(file.dataset.kind.clone())
        .unwrap_or_else(|| "wikitq".to_string());
    let dataset_kind = parse_dataset_kind(&kind_name)?;

    let mut plan = PlanConfig::for_dataset(dataset_kind);
    if let Some(task) = overrides.task.as_deref().or(file.dataset.task.as_deref()) {
        plan.task = parse_task(task)?;
    }
    if let Some(pool) = overrides.pool.as_deref() {
        plan.pool = parse_pool(pool)?;
    } else if let Some(pool) = &file.chain.pool {
        plan.pool = parse_pool(&pool.join(","))?;
    }
    if let Some(len) = overrides.max_chain_len.or(file.chain.max_chain_len) {
        plan.max_chain_len = len;
    }
    if let Some(retry) = file.chain.retry_limit {
        plan.retry_limit = retry;
    }
    let mut caps = BudgetCaps::default();
    if let Some(v) = file.budget.dynamicplan {
        caps.dynamicplan = v;
    }
    if let Some(v) = file.budget.generateargs {
        caps.generateargs = v;
    }
    if let Some(v) = file.budget.query {
        caps.query = v;
    }
    if let Some(v) = file.budget.total {
        caps.total = v;
    }
    if let Some(mode) = &file.budget.mode {
        caps.mode = match mode.as_str() {
            "enforce" => BudgetMode::Enforce,
            "warn_only" => BudgetMode::WarnOnly,
            other => return Err(CliError::Config(format!("unknown budget mode {other:?}"))),
        };
    }
    plan.caps = caps;
    plan.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;

    let demos = match overrides.demos.clone().or(file.demos.dir.clone()) {
        Some(dir) => {
            DemoSet::load_dir(&dir, dataset_kind).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => DemoSet::builtin(dataset_kind),
    };
    demos
        .validate(&plan.sampling.demos)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let script = overrides.scripted.clone().or(file.backend.script.clone());
    let backend_kind = if script.is_some() {
        "scripted".to_string()
    } else {
        file.backend
            .kind
            .clone()
            .or(overrides.backend.as_ref().map(|_| "http".to_string()))
            .unwrap_or_else(|| "scripted".to_string())
    };
    let inner: Arc<dyn CompletionBackend> = match backend_kind.as_str() {
        "scripted" => {
            let path = script.ok_or_else(|| {
                CliError::Config("scripted backend requires --scripted or backend.script".into())
            })?;
            Arc::new(
                ScriptedBackend::from_file(&path).map_err(|e| CliError::Backend(e.to_string()))?,
            )
        }
        "http" => {
            let endpoint = overrides
                .backend
                .clone()
                .or(file.backend.endpoint.clone())
                .ok_or_else(|| {
                    CliError::Config("http backend requires --backend or backend.endpoint".into())
                })?;
            let model = file
                .backend
                .model
                .clone()
                .unwrap_or_else(|| "default".to_string());
            let mut config = HttpBackendConfig::new(endpoint, model);
            if let Some(env) = file.backend.credentials_env.clone() {
                config.credentials_env = env;
            }
            if let Some(fields) = file.backend.fields.clone() {
                config.fields = fields;
            }
            if let Some(attempts) = file.backend.max_attempts {
                config.max_attempts = attempts;
            }
            if let Some(backoff) = file.backend.backoff_ms {
                config.backoff_ms = backoff;
            }
            if let Some(timeout) = file.backend.timeout_secs {
                config.timeout_secs = timeout;
            }
            Arc::new(HttpBackend::new(config).map_err(|e| CliError::Backend(e.to_string()))?)
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown backend kind {other:?} (expected scripted or http)"
            )))
        }
    };
    let backend: Arc<dyn CompletionBackend> =
        match overrides.cache_dir.clone().or(file.eval.cache_dir.clone()) {
            Some(dir) => Arc::new(CachedBackend::new(inner, dir)),
            None => inner,
        };

    Ok(Resolved {
        dataset_path: overrides.dataset.clone().or(file.dataset.path.clone()),
        plan,
        demos,
        backend,
        concurrency: overrides.concurrency.or(file.eval.concurrency).unwrap_or(1),
        out_dir: overrides.out.clone().or(file.eval.out.clone()),
    })
}
