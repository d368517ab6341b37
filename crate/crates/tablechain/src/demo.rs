//! Demonstration blocks for prompt assembly.
//!
//! A [`DemoSet`] holds the verbatim few-shot text for one dataset, keyed by
//! prompt stage (and operation, where applicable). Builtin sets ship with the
//! crate; custom sets load from a directory with the layout
//! `<dir>/<family>.<op>.txt` (see [`DemoSet::load_dir`]). A file's demo count
//! is the number of table blocks it contains, i.e. lines equal to `/*`, and
//! is validated against the dataset's configured demo counts.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ops::Operation;
use crate::profile::{DatasetKind, DemoCounts};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DemoError {
    #[error("missing demos: {key}")]
    MissingDemos { key: String },
    #[error("demo count mismatch for {key}: file has {got}, profile expects {expected}")]
    CountMismatch {
        key: String,
        got: usize,
        expected: usize,
    },
    #[error("failed to read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoSet {
    dataset: DatasetKind,
    plan_usage: BTreeMap<Operation, String>,
    plan_chain: String,
    args: BTreeMap<Operation, String>,
    query: String,
    baseline_few_shot: String,
    baseline_cot: String,
}

macro_rules! builtin_dataset {
    ($dir:literal) => {
        (
            [
                (
                    Operation::AddColumn,
                    include_str!(concat!("../demos/", $dir, "/plan_usage.f_add_column.txt")),
                ),
                (
                    Operation::SelectRow,
                    include_str!(concat!("../demos/", $dir, "/plan_usage.f_select_row.txt")),
                ),
                (
                    Operation::SelectColumn,
                    include_str!(concat!(
                        "../demos/",
                        $dir,
                        "/plan_usage.f_select_column.txt"
                    )),
                ),
                (
                    Operation::GroupBy,
                    include_str!(concat!("../demos/", $dir, "/plan_usage.f_group_by.txt")),
                ),
                (
                    Operation::SortBy,
                    include_str!(concat!("../demos/", $dir, "/plan_usage.f_sort_by.txt")),
                ),
            ],
            include_str!(concat!("../demos/", $dir, "/plan_chain.txt")),
            [
                (
                    Operation::AddColumn,
                    include_str!(concat!("../demos/", $dir, "/args.f_add_column.txt")),
                ),
                (
                    Operation::SelectRow,
                    include_str!(concat!("../demos/", $dir, "/args.f_select_row.txt")),
                ),
                (
                    Operation::SelectColumn,
                    include_str!(concat!("../demos/", $dir, "/args.f_select_column.txt")),
                ),
                (
                    Operation::GroupBy,
                    include_str!(concat!("../demos/", $dir, "/args.f_group_by.txt")),
                ),
                (
                    Operation::SortBy,
                    include_str!(concat!("../demos/", $dir, "/args.f_sort_by.txt")),
                ),
            ],
            include_str!(concat!("../demos/", $dir, "/query.txt")),
            include_str!(concat!("../demos/", $dir, "/baseline.few_shot.txt")),
            include_str!(concat!("../demos/", $dir, "/baseline.cot.txt")),
        )
    };
}

impl DemoSet {
    /// The demo set shipped with the crate for the given dataset.
    pub fn builtin(dataset: DatasetKind) -> Self {
        let (usage, chain, args, query, few_shot, cot) = match dataset {
            DatasetKind::WikiTq => builtin_dataset!("wikitq"),
            DatasetKind::TabFact => builtin_dataset!("tabfact"),
            DatasetKind::FeTaQa => builtin_dataset!("fetaqa"),
        };
        DemoSet {
            dataset,
            plan_usage: usage
                .into_iter()
                .map(|(op, text)| (op, normalize(text)))
                .collect(),
            plan_chain: normalize(chain),
            args: args
                .into_iter()
                .map(|(op, text)| (op, normalize(text)))
                .collect(),
            query: normalize(query),
            baseline_few_shot: normalize(few_shot),
            baseline_cot: normalize(cot),
        }
    }

    /// Loads a demo set from `dir`, which must contain the same files as the
    /// builtin layout: `plan_usage.<op>.txt`, `plan_chain.txt`,
    /// `args.<op>.txt`, `query.txt`, `baseline.few_shot.txt`,
    /// `baseline.cot.txt`.
    pub fn load_dir(dir: &Path, dataset: DatasetKind) -> Result<Self, DemoError> {
        let read = |name: String| -> Result<String, DemoError> {
            let path = dir.join(&name);
            if !path.exists() {
                return Err(DemoError::MissingDemos { key: name });
            }
            fs::read_to_string(&path)
                .map(|s| normalize(&s))
                .map_err(|e| DemoError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })
        };
        let mut plan_usage = BTreeMap::new();
        let mut args = BTreeMap::new();
        for op in Operation::ATOMIC {
            plan_usage.insert(op, read(format!("plan_usage.{}.txt", op.canonical_name()))?);
            args.insert(op, read(format!("args.{}.txt", op.canonical_name()))?);
        }
        Ok(DemoSet {
            dataset,
            plan_usage,
            plan_chain: read("plan_chain.txt".into())?,
            args,
            query: read("query.txt".into())?,
            baseline_few_shot: read("baseline.few_shot.txt".into())?,
            baseline_cot: read("baseline.cot.txt".into())?,
        })
    }

    pub fn dataset(&self) -> DatasetKind {
        self.dataset
    }

    pub fn plan_usage(&self, op: Operation) -> Option<&str> {
        self.plan_usage.get(&op).map(String::as_str)
    }

    pub fn plan_chain(&self) -> &str {
        &self.plan_chain
    }

    pub fn args(&self, op: Operation) -> Result<&str, DemoError> {
        self.args
            .get(&op)
            .map(String::as_str)
            .ok_or_else(|| DemoError::MissingDemos {
                key: format!("args.{}", op.canonical_name()),
            })
    }

    pub fn query(&self) -> &str {
        &self.query
    }

    pub fn baseline_few_shot(&self) -> &str {
        &self.baseline_few_shot
    }

    pub fn baseline_cot(&self) -> &str {
        &self.baseline_cot
    }

    /// Checks that each file carries exactly the configured number of demos.
    pub fn validate(&self, counts: &DemoCounts) -> Result<(), DemoError> {
        let check = |key: &str, text: &str, expected: usize| -> Result<(), DemoError> {
            let got = block_count(text);
            if got != expected {
                return Err(DemoError::CountMismatch {
                    key: key.to_string(),
                    got,
                    expected,
                });
            }
            Ok(())
        };
        check("plan_chain", &self.plan_chain, counts.plan_chain)?;
        check(
            "args.f_add_column",
            self.args(Operation::AddColumn)?,
            counts.add_column,
        )?;
        check(
            "args.f_select_row",
            self.args(Operation::SelectRow)?,
            counts.select_row,
        )?;
        check(
            "args.f_select_column",
            self.args(Operation::SelectColumn)?,
            counts.select_column,
        )?;
        check(
            "args.f_group_by",
            self.args(Operation::GroupBy)?,
            counts.group_by,
        )?;
        check(
            "args.f_sort_by",
            self.args(Operation::SortBy)?,
            counts.sort_by,
        )?;
        check("query", &self.query, counts.query)?;
        Ok(())
    }

    /// Stable digest over the whole set, stored in traces so a replay can
    /// detect that it is running against different demos.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (op, text) in &self.plan_usage {
            hasher.update(op.canonical_name());
            hasher.update([0]);
            hasher.update(text);
        }
        for (op, text) in &self.args {
            hasher.update(op.canonical_name());
            hasher.update([1]);
            hasher.update(text);
        }
        hasher.update(&self.plan_chain);
        hasher.update(&self.query);
        hasher.update(&self.baseline_few_shot);
        hasher.update(&self.baseline_cot);
        hex(&hasher.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn normalize(text: &str) -> String {
    text.trim_end_matches('\n').to_string()
}

/// Demo count of a file: number of table blocks it opens.
pub fn block_count(text: &str) -> usize {
    text.lines().filter(|line| *line == "/*").count()
}
