//! Per-dataset inference profiles: sampling parameters and demo counts for
//! each pipeline stage.

use serde::{Deserialize, Serialize};

use crate::ops::Operation;

/// Which benchmark family a run is configured for. Determines the builtin
/// demo set and the default sampling profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    WikiTq,
    TabFact,
    FeTaQa,
}

impl DatasetKind {
    pub fn default_task(&self) -> TaskKind {
        match self {
            DatasetKind::WikiTq => TaskKind::ShortQa,
            DatasetKind::TabFact => TaskKind::FactVerification,
            DatasetKind::FeTaQa => TaskKind::FreeFormQa,
        }
    }

    pub fn dir_name(&self) -> &'static str {
        match self {
            DatasetKind::WikiTq => "wikitq",
            DatasetKind::TabFact => "tabfact",
            DatasetKind::FeTaQa => "fetaqa",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "wikitq" => Some(DatasetKind::WikiTq),
            "tabfact" => Some(DatasetKind::TabFact),
            "fetaqa" => Some(DatasetKind::FeTaQa),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ShortQa,
    FactVerification,
    FreeFormQa,
}

/// Sampling parameters for one completion call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub decode_steps: u32,
    pub n_samples: u32,
}

impl SamplingParams {
    pub fn greedy() -> Self {
        SamplingParams {
            temperature: 0.0,
            top_p: 1.0,
            decode_steps: 200,
            n_samples: 1,
        }
    }

    fn sampled(temperature: f64, n_samples: u32) -> Self {
        SamplingParams {
            temperature,
            top_p: 1.0,
            decode_steps: 200,
            n_samples,
        }
    }
}

/// Demo counts per prompt stage, validated against the loaded demo set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoCounts {
    pub plan_chain: usize,
    pub add_column: usize,
    pub select_row: usize,
    pub select_column: usize,
    pub group_by: usize,
    pub sort_by: usize,
    pub query: usize,
}

/// Sampling parameters and demo counts for every stage of the pipeline.
/// Dynamic planning and the final query are always greedy; row and column
/// selection draw several samples that are reduced by majority vote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingProfile {
    pub plan: SamplingParams,
    pub add_column: SamplingParams,
    pub select_row: SamplingParams,
    pub select_column: SamplingParams,
    pub group_by: SamplingParams,
    pub sort_by: SamplingParams,
    pub query: SamplingParams,
    pub demos: DemoCounts,
}

impl SamplingProfile {
    pub fn for_dataset(kind: DatasetKind) -> Self {
        match kind {
            DatasetKind::WikiTq => SamplingProfile {
                plan: SamplingParams::greedy(),
                add_column: SamplingParams::greedy(),
                select_row: SamplingParams::sampled(1.0, 8),
                select_column: SamplingParams::sampled(1.0, 8),
                group_by: SamplingParams::greedy(),
                sort_by: SamplingParams::greedy(),
                query: SamplingParams::greedy(),
                demos: DemoCounts {
                    plan_chain: 4,
                    add_column: 6,
                    select_row: 3,
                    select_column: 8,
                    group_by: 2,
                    sort_by: 2,
                    query: 1,
                },
            },
            DatasetKind::TabFact => SamplingProfile {
                plan: SamplingParams::greedy(),
                add_column: SamplingParams::greedy(),
                select_row: SamplingParams::sampled(0.5, 8),
                select_column: SamplingParams::sampled(0.5, 8),
                group_by: SamplingParams::greedy(),
                sort_by: SamplingParams::greedy(),
                query: SamplingParams::greedy(),
                demos: DemoCounts {
                    plan_chain: 4,
                    add_column: 7,
                    select_row: 4,
                    select_column: 8,
                    group_by: 2,
                    sort_by: 2,
                    query: 4,
                },
            },
            DatasetKind::FeTaQa => SamplingProfile {
                plan: SamplingParams::greedy(),
                add_column: SamplingParams::greedy(),
                select_row: SamplingParams::sampled(1.0, 8),
                select_column: SamplingParams::sampled(1.0, 8),
                group_by: SamplingParams::greedy(),
                sort_by: SamplingParams::greedy(),
                query: SamplingParams::greedy(),
                demos: DemoCounts {
                    plan_chain: 3,
                    add_column: 6,
                    select_row: 3,
                    select_column: 8,
                    group_by: 2,
                    sort_by: 2,
                    query: 8,
                },
            },
        }
    }

    pub fn params_for(&self, op: Operation) -> SamplingParams {
        match op {
            Operation::AddColumn => self.add_column,
            Operation::SelectRow => self.select_row,
            Operation::SelectColumn => self.select_column,
            Operation::GroupBy => self.group_by,
            Operation::SortBy => self.sort_by,
            Operation::Begin | Operation::End => self.plan,
        }
    }
}
