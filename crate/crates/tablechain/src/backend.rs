//! Provider-agnostic text completion.
//!
//! A [`CompletionBackend`] answers [`CompletionRequest`]s. Three
//! implementations ship here:
//!
//! - [`HttpBackend`]: single JSON-over-HTTP POST with configurable field
//!   names, so any completion provider can be adapted from configuration.
//! - [`ScriptedBackend`]: replays recorded completions keyed by prompt hash;
//!   fully deterministic and offline.
//! - [`CachedBackend`]: content-addressed disk cache around another backend.
//!
//! Cache and script files share one line format: a JSON object per line with
//! `{key, request{..}, completions[..], timestamp}`.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::demo::hex;
use crate::profile::SamplingParams;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider returned status {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("malformed provider response: {message}")]
    MalformedResponse { message: String },
    #[error("budget exceeded for {phase}: used {used} + requested {requested} > cap {cap}")]
    BudgetExceeded {
        phase: Phase,
        used: u64,
        requested: u64,
        cap: u64,
    },
    #[error("scripted backend has no completions for key {key}")]
    ScriptMiss { key: String },
    #[error("invalid request: {message}")]
    InvalidRequest { message: String },
    #[error("backend credentials not found in environment variable {var}")]
    MissingCredentials { var: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub decode_steps: u32,
    pub n_samples: u32,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, params: SamplingParams) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            temperature: params.temperature,
            top_p: params.top_p,
            decode_steps: params.decode_steps,
            n_samples: params.n_samples,
        }
    }

    fn validate(&self) -> Result<(), BackendError> {
        let bad = |message: &str| {
            Err(BackendError::InvalidRequest {
                message: message.to_string(),
            })
        };
        if self.temperature < 0.0 || self.temperature.is_nan() {
            return bad("temperature must be >= 0");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p must be in (0, 1]");
        }
        if self.decode_steps == 0 {
            return bad("decode_steps must be positive");
        }
        if self.n_samples == 0 {
            return bad("n_samples must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    /// Exactly `n_samples` completions, provider order preserved.
    pub completions: Vec<String>,
    /// Opaque provider note ("scripted", "cache", HTTP metadata, ...).
    pub provider_meta: String,
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError>;

    /// Stable identity string, part of every cache key.
    fn identity(&self) -> String;
}

/// Hash of the prompt text alone; the key scripted backends serve by.
pub fn prompt_key(prompt: &str) -> String {
    hex(&Sha256::digest(prompt.as_bytes()))
}

/// Content address of a full request against a specific backend.
pub fn request_key(identity: &str, req: &CompletionRequest) -> String {
    let mut hasher = Sha256::new();
    hasher.update(identity.as_bytes());
    hasher.update([0]);
    hasher.update(req.prompt.as_bytes());
    hasher.update(format!(
        "|t={}|p={}|d={}|n={}",
        req.temperature, req.top_p, req.decode_steps, req.n_samples
    ));
    hex(&hasher.finalize())
}

// ---------------------------------------------------------------------------
// Budget accounting
// ---------------------------------------------------------------------------

/// The three pipeline stages that consume samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    DynamicPlan,
    GenerateArgs,
    Query,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Phase::DynamicPlan => "dynamicplan",
            Phase::GenerateArgs => "generateargs",
            Phase::Query => "query",
        };
        f.write_str(name)
    }
}

/// Per-question sample counters; they only increase.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub dynamicplan_samples: u64,
    pub generateargs_samples: u64,
    pub query_samples: u64,
}

impl BudgetLedger {
    pub fn record(&mut self, phase: Phase, samples: u64) {
        match phase {
            Phase::DynamicPlan => self.dynamicplan_samples += samples,
            Phase::GenerateArgs => self.generateargs_samples += samples,
            Phase::Query => self.query_samples += samples,
        }
    }

    pub fn get(&self, phase: Phase) -> u64 {
        match phase {
            Phase::DynamicPlan => self.dynamicplan_samples,
            Phase::GenerateArgs => self.generateargs_samples,
            Phase::Query => self.query_samples,
        }
    }

    pub fn total(&self) -> u64 {
        self.dynamicplan_samples + self.generateargs_samples + self.query_samples
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    /// Exceeding a cap is a hard error.
    Enforce,
    /// Exceeding a cap is recorded in the trace but the run continues.
    WarnOnly,
}

/// Hard caps on samples per question. The defaults mirror the method's
/// per-question bound: at most 5 planning samples, 19 argument samples and
/// one query sample, 25 total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetCaps {
    pub dynamicplan: u64,
    pub generateargs: u64,
    pub query: u64,
    pub total: u64,
    pub mode: BudgetMode,
}

impl Default for BudgetCaps {
    fn default() -> Self {
        BudgetCaps {
            dynamicplan: 5,
            generateargs: 19,
            query: 1,
            total: 25,
            mode: BudgetMode::Enforce,
        }
    }
}

impl BudgetCaps {
    fn cap(&self, phase: Phase) -> u64 {
        match phase {
            Phase::DynamicPlan => self.dynamicplan,
            Phase::GenerateArgs => self.generateargs,
            Phase::Query => self.query,
        }
    }

    /// Checks whether spending `samples` in `phase` would pass a cap.
    /// Returns the violation (for the warn path) without recording anything.
    pub fn check(
        &self,
        ledger: &BudgetLedger,
        phase: Phase,
        samples: u64,
    ) -> Result<(), BackendError> {
        let used = ledger.get(phase);
        let cap = self.cap(phase);
        if used + samples > cap {
            return Err(BackendError::BudgetExceeded {
                phase,
                used,
                requested: samples,
                cap,
            });
        }
        if ledger.total() + samples > self.total {
            return Err(BackendError::BudgetExceeded {
                phase,
                used: ledger.total(),
                requested: samples,
                cap: self.total,
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Script / cache record format
// ---------------------------------------------------------------------------

/// One recorded exchange: the on-disk line format shared by cache files and
/// scripted-backend scripts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptRecord {
    pub key: String,
    pub request: ScriptRequest,
    pub completions: Vec<String>,
    pub timestamp: u64,
}

/// Request half of a record. The prompt may be empty when a record was
/// exported from a trace that only kept prompt hashes.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptRequest {
    #[serde(default)]
    pub prompt: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub top_p: f64,
    #[serde(default)]
    pub decode_steps: u32,
    #[serde(default)]
    pub n_samples: u32,
}

impl ScriptRecord {
    pub fn parse_line(line: &str) -> Result<ScriptRecord, BackendError> {
        Ok(serde_json::from_str(line)?)
    }

    fn to_line(&self) -> Result<String, BackendError> {
        Ok(serde_json::to_string(self)?)
    }
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

/// Serves completions from a recorded map of prompt hash to completions.
/// Unknown prompts (or prompts recorded with fewer completions than
/// requested) are a [`BackendError::ScriptMiss`].
pub struct ScriptedBackend {
    entries: Mutex<HashMap<String, Vec<String>>>,
    calls: AtomicU64,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        ScriptedBackend {
            entries: Mutex::new(HashMap::new()),
            calls: AtomicU64::new(0),
        }
    }

    /// Loads script records from a JSONL file. Records carrying their prompt
    /// are re-keyed by prompt hash; prompt-less records (trace exports) keep
    /// their stored key.
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let file = fs::File::open(path)?;
        let mut backend = ScriptedBackend::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            backend.add_record(ScriptRecord::parse_line(&line)?);
        }
        Ok(backend)
    }

    pub fn add_record(&mut self, record: ScriptRecord) {
        let key = if record.request.prompt.is_empty() {
            record.key
        } else {
            prompt_key(&record.request.prompt)
        };
        self.entries.lock().unwrap().insert(key, record.completions);
    }

    /// Records completions for a prompt.
    pub fn record(&mut self, prompt: &str, completions: Vec<String>) {
        self.entries
            .lock()
            .unwrap()
            .insert(prompt_key(prompt), completions);
    }

    /// Number of `complete` calls answered so far.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for ScriptedBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        req.validate()?;
        let key = prompt_key(&req.prompt);
        let entries = self.entries.lock().unwrap();
        let Some(completions) = entries.get(&key) else {
            return Err(BackendError::ScriptMiss { key });
        };
        if completions.len() < req.n_samples as usize {
            return Err(BackendError::ScriptMiss {
                key: format!(
                    "{key} ({} recorded, {} requested)",
                    completions.len(),
                    req.n_samples
                ),
            });
        }
        let completions = completions[..req.n_samples as usize].to_vec();
        drop(entries);
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(CompletionResponse {
            completions,
            provider_meta: "scripted".to_string(),
        })
    }

    fn identity(&self) -> String {
        "scripted".to_string()
    }
}

// ---------------------------------------------------------------------------
// Disk cache
// ---------------------------------------------------------------------------

/// Content-addressed completion cache. Each entry is one file (one JSON
/// line), written once via a temp file + rename, so concurrent readers never
/// observe partial writes.
pub struct CachedBackend {
    inner: Arc<dyn CompletionBackend>,
    dir: PathBuf,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl CachedBackend {
    pub fn new(inner: Arc<dyn CompletionBackend>, dir: impl Into<PathBuf>) -> Self {
        CachedBackend {
            inner,
            dir: dir.into(),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::SeqCst)
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    fn read_entry(&self, key: &str) -> Result<Option<ScriptRecord>, BackendError> {
        let path = self.entry_path(key);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(path)?;
        Ok(Some(ScriptRecord::parse_line(text.trim())?))
    }

    fn write_entry(&self, key: &str, record: &ScriptRecord) -> Result<(), BackendError> {
        let path = self.entry_path(key);
        fs::create_dir_all(path.parent().unwrap())?;
        let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
        let mut file = fs::File::create(&tmp)?;
        file.write_all(record.to_line()?.as_bytes())?;
        file.write_all(b"\n")?;
        file.sync_all()?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    /// Exports every cache entry as one script JSONL stream, for replaying a
    /// cached run through the scripted backend.
    pub fn export_script(&self, out: &mut dyn Write) -> Result<usize, BackendError> {
        let mut count = 0usize;
        if !self.dir.exists() {
            return Ok(0);
        }
        let mut entries: Vec<PathBuf> = Vec::new();
        for shard in fs::read_dir(&self.dir)? {
            let shard = shard?.path();
            if shard.is_dir() {
                for file in fs::read_dir(shard)? {
                    entries.push(file?.path());
                }
            }
        }
        entries.sort();
        for path in entries {
            let text = fs::read_to_string(path)?;
            out.write_all(text.trim().as_bytes())?;
            out.write_all(b"\n")?;
            count += 1;
        }
        Ok(count)
    }
}

impl CompletionBackend for CachedBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        req.validate()?;
        let key = request_key(&self.inner.identity(), req);
        if let Some(record) = self.read_entry(&key)? {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(CompletionResponse {
                completions: record.completions,
                provider_meta: "cache".to_string(),
            });
        }
        let response = self.inner.complete(req)?;
        self.misses.fetch_add(1, Ordering::SeqCst);
        let record = ScriptRecord {
            key: key.clone(),
            request: ScriptRequest {
                prompt: req.prompt.clone(),
                temperature: req.temperature,
                top_p: req.top_p,
                decode_steps: req.decode_steps,
                n_samples: req.n_samples,
            },
            completions: response.completions.clone(),
            timestamp: now_secs(),
        };
        self.write_entry(&key, &record)?;
        Ok(response)
    }

    fn identity(&self) -> String {
        self.inner.identity()
    }
}

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

/// Wire-field names for the completion POST body, overridable so different
/// providers can be addressed without code changes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireFields {
    pub model: String,
    pub prompt: String,
    pub temperature: String,
    pub top_p: String,
    pub max_tokens: String,
    pub n: String,
    /// Dotted path to the completions array in the response, e.g. "choices".
    pub completions_path: String,
    /// Field holding the text inside each completions element; empty means
    /// the elements are plain strings.
    pub text_field: String,
}

impl Default for WireFields {
    fn default() -> Self {
        WireFields {
            model: "model".into(),
            prompt: "prompt".into(),
            temperature: "temperature".into(),
            top_p: "top_p".into(),
            max_tokens: "max_tokens".into(),
            n: "n".into(),
            completions_path: "choices".into(),
            text_field: "text".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key; empty disables
    /// the authorization header.
    pub credentials_env: String,
    #[serde(default)]
    pub fields: WireFields,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Whole-request timeout; 0 disables it.
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_max_attempts() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    250
}

fn default_timeout_secs() -> u64 {
    120
}

impl HttpBackendConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        HttpBackendConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            credentials_env: "TABLECHAIN_API_KEY".into(),
            fields: WireFields::default(),
            max_attempts: default_max_attempts(),
            backoff_ms: default_backoff_ms(),
            timeout_secs: default_timeout_secs(),
        }
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let api_key = if config.credentials_env.is_empty() {
            None
        } else {
            match std::env::var(&config.credentials_env) {
                Ok(value) if !value.is_empty() => Some(value),
                _ => {
                    return Err(BackendError::MissingCredentials {
                        var: config.credentials_env.clone(),
                    })
                }
            }
        };
        let timeout = if config.timeout_secs == 0 {
            None
        } else {
            Some(std::time::Duration::from_secs(config.timeout_secs))
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(timeout)
            .build()
            .into();
        Ok(HttpBackend {
            config,
            agent,
            api_key,
        })
    }

    fn body_for(&self, req: &CompletionRequest) -> serde_json::Value {
        let f = &self.config.fields;
        serde_json::json!({
            f.model.as_str(): self.config.model,
            f.prompt.as_str(): req.prompt,
            f.temperature.as_str(): req.temperature,
            f.top_p.as_str(): req.top_p,
            f.max_tokens.as_str(): req.decode_steps,
            f.n.as_str(): req.n_samples,
        })
    }

    fn extract_completions(
        &self,
        body: &serde_json::Value,
        n_samples: usize,
    ) -> Result<Vec<String>, BackendError> {
        let f = &self.config.fields;
        let mut node = body;
        for part in f.completions_path.split('.') {
            node = node
                .get(part)
                .ok_or_else(|| BackendError::MalformedResponse {
                    message: format!("missing {:?} in response", f.completions_path),
                })?;
        }
        let items = node
            .as_array()
            .ok_or_else(|| BackendError::MalformedResponse {
                message: format!("{:?} is not an array", f.completions_path),
            })?;
        let mut completions = Vec::with_capacity(items.len());
        for item in items {
            let text = if f.text_field.is_empty() {
                item.as_str()
            } else {
                item.get(&f.text_field).and_then(|v| v.as_str())
            };
            match text {
                Some(text) => completions.push(text.to_string()),
                None => {
                    return Err(BackendError::MalformedResponse {
                        message: "completion element has no text".into(),
                    })
                }
            }
        }
        if completions.len() != n_samples {
            return Err(BackendError::MalformedResponse {
                message: format!(
                    "expected {n_samples} completions, provider returned {}",
                    completions.len()
                ),
            });
        }
        Ok(completions)
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        req.validate()?;
        let body = self.body_for(req);
        let mut last_transport = String::new();
        for attempt in 1..=self.config.max_attempts {
            if attempt > 1 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 2));
                std::thread::sleep(std::time::Duration::from_millis(delay));
            }
            let mut request = self
                .agent
                .post(&self.config.endpoint)
                .header("content-type", "application/json");
            if let Some(key) = &self.api_key {
                request = request.header("authorization", &format!("Bearer {key}"));
            }
            match request.send_json(&body) {
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    let text = response.body_mut().read_to_string().map_err(|e| {
                        BackendError::MalformedResponse {
                            message: e.to_string(),
                        }
                    })?;
                    if !(200..300).contains(&status) {
                        return Err(BackendError::Provider { status, body: text });
                    }
                    let json: serde_json::Value = serde_json::from_str(&text)?;
                    let completions = self.extract_completions(&json, req.n_samples as usize)?;
                    return Ok(CompletionResponse {
                        completions,
                        provider_meta: format!("http status {status}"),
                    });
                }
                Err(e) => {
                    last_transport = e.to_string();
                }
            }
        }
        Err(BackendError::Transport {
            attempts: self.config.max_attempts,
            message: last_transport,
        })
    }

    fn identity(&self) -> String {
        format!("http:{}:{}", self.config.endpoint, self.config.model)
    }
}
