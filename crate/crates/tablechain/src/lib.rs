//! Iterative LLM-planned table transformations for table question answering
//! and fact verification.
//!
//! A language model plans one atomic table operation at a time; a
//! deterministic engine executes it; the transformed table feeds the next
//! planning step until the model emits the end tag, and the final table is
//! used to answer the question. The crate provides:
//!
//! - [`table`]: the immutable table model and text encodings ([`encode`])
//! - [`ops`]: executable semantics of the atomic operations
//! - [`demo`] / [`prompt`] / [`parse`]: prompt assembly and completion parsing
//! - [`backend`]: provider-agnostic text completion with caching, budget
//!   accounting, and a deterministic scripted backend for offline runs
//! - [`chain`]: the control loop tying the above together, with full traces
//! - [`eval`] / [`metrics`]: dataset loading, scoring, and run analyses

pub mod backend;
pub mod chain;
pub mod demo;
pub mod encode;
pub mod eval;
pub mod metrics;
pub mod ops;
pub mod parse;
pub mod profile;
pub mod prompt;
pub mod table;

pub use backend::{BackendError, CompletionBackend, CompletionRequest, CompletionResponse};
pub use chain::{answer, run_baseline, run_chain, BaselineMode, ChainTrace, PlanConfig};
pub use demo::DemoSet;
pub use ops::{apply, Arguments, Operation, OperationPool, RowSelection, SortOrder};
pub use profile::{DatasetKind, SamplingProfile, TaskKind};
pub use table::{CellValue, ColumnRef, Table};
