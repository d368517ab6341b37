//! Prompt assembly for the three pipeline stages (dynamic planning, argument
//! generation, final query) and the three generic baselines.
//!
//! All builders are pure: the same inputs produce byte-identical prompts.
//! Tables are embedded in their PIPE encoding between `/*` and `*/` lines.

use std::ops::Range;

use thiserror::Error;

use crate::demo::{DemoError, DemoSet};
use crate::encode::encode_pipe;
use crate::ops::{Arguments, Operation, OperationPool};
use crate::parse::chain_format;
use crate::profile::TaskKind;
use crate::table::{Table, TableError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("operation pool is empty (or exhausted by the chain history)")]
    EmptyPool,
    #[error(transparent)]
    Demos(#[from] DemoError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("chain history must begin with [B]")]
    BadHistory,
}

/// A fully assembled prompt plus the byte ranges of its structural regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptText {
    text: String,
    pub demo_region: Range<usize>,
    pub table_region: Range<usize>,
    pub question_region: Range<usize>,
    pub constraint_line: Option<Range<usize>>,
}

impl PromptText {
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn into_text(self) -> String {
        self.text
    }

    pub fn table_text(&self) -> &str {
        &self.text[self.table_region.clone()]
    }

    pub fn constraint_text(&self) -> Option<&str> {
        self.constraint_line.clone().map(|span| &self.text[span])
    }
}

/// One executed link of the chain history handed to the planner.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainLink {
    pub op: Operation,
    pub args: Option<Arguments>,
}

impl ChainLink {
    pub fn begin() -> Self {
        ChainLink {
            op: Operation::Begin,
            args: None,
        }
    }

    pub fn end() -> Self {
        ChainLink {
            op: Operation::End,
            args: None,
        }
    }
}

fn question_label(task: TaskKind) -> &'static str {
    match task {
        TaskKind::FactVerification => "statement :",
        TaskKind::ShortQa | TaskKind::FreeFormQa => "Question:",
    }
}

fn table_block(table: &Table) -> Result<String, TableError> {
    Ok(format!("/*\n{}\n*/", encode_pipe(table)?))
}

/// Operations already consumed by the chain; they are dropped from the
/// planner's constraint line, so each operation is offered at most once.
fn used_operations(history: &[ChainLink]) -> Vec<Operation> {
    history
        .iter()
        .filter(|link| !link.op.is_sentinel())
        .map(|link| link.op)
        .collect()
}

/// Pool members still available given the history.
pub fn available_operations(pool: &OperationPool, history: &[ChainLink]) -> Vec<Operation> {
    let used = used_operations(history);
    pool.iter().filter(|op| !used.contains(op)).collect()
}

/// Builds the planning prompt: per-operation usage demos for the pool, full
/// chain demos, then the current table, the question, the constraint line
/// over the not-yet-used pool members, and the open-ended chain rendering.
pub fn build_dynamicplan_prompt(
    table: &Table,
    question: &str,
    history: &[ChainLink],
    pool: &OperationPool,
    demos: &DemoSet,
    task: TaskKind,
) -> Result<PromptText, PromptError> {
    if history.first().map(|l| l.op) != Some(Operation::Begin) {
        return Err(PromptError::BadHistory);
    }
    let available = available_operations(pool, history);
    if available.is_empty() {
        return Err(PromptError::EmptyPool);
    }

    let mut text = String::new();
    let demo_start = 0;
    for op in pool.iter() {
        if let Some(block) = demos.plan_usage(op) {
            text.push_str(block);
            text.push_str("\n\n");
        }
    }
    text.push_str("Here are examples of using the operations to answer the question.\n");
    text.push_str(demos.plan_chain());
    let demo_region = demo_start..text.len();
    text.push_str("\n\n");

    let table_start = text.len();
    text.push_str(&table_block(table)?);
    let table_region = table_start..text.len();
    text.push('\n');

    let question_start = text.len();
    text.push_str(&format!("{} {}", question_label(task), question));
    let question_region = question_start..text.len();
    text.push('\n');

    let constraint_start = text.len();
    let listed: Vec<String> = available
        .iter()
        .map(|op| format!("{}()", op.canonical_name()))
        .collect();
    text.push_str(&format!(
        "The next operation must be one of {}.",
        listed.join(" or ")
    ));
    let constraint_line = Some(constraint_start..text.len());
    text.push('\n');

    text.push_str("Function Chain: ");
    let rendered: Vec<String> = history
        .iter()
        .filter(|link| !link.op.is_sentinel())
        .map(|link| chain_format(link.op, link.args.as_ref()))
        .collect();
    if !rendered.is_empty() {
        text.push_str(&rendered.join(" -> "));
        text.push_str(" ->");
    }

    Ok(PromptText {
        text,
        demo_region,
        table_region,
        question_region,
        constraint_line,
    })
}

/// Builds the argument-generation prompt for one operation: the operation's
/// demo file verbatim, then the table and the question. Operations whose
/// demos list the table's columns get the same line for the input block.
pub fn build_args_prompt(
    table: &Table,
    question: &str,
    op: Operation,
    demos: &DemoSet,
    task: TaskKind,
) -> Result<PromptText, PromptError> {
    let demo_text = demos.args(op)?;
    let mut text = String::new();
    text.push_str(demo_text);
    let demo_region = 0..text.len();
    text.push_str("\n\n");

    let table_start = text.len();
    text.push_str(&table_block(table)?);
    let table_region = table_start..text.len();
    text.push('\n');

    let question_start = text.len();
    text.push_str(&format!("{} {}", question_label(task), question));
    let question_region = question_start..text.len();

    if matches!(
        op,
        Operation::AddColumn | Operation::GroupBy | Operation::SortBy
    ) {
        text.push('\n');
        text.push_str(&format!(
            "The existing columns are: {}.",
            table.header().join(", ")
        ));
    }

    Ok(PromptText {
        text,
        demo_region,
        table_region,
        question_region,
        constraint_line: None,
    })
}

/// The table the final query sees: either the chain's final table, or, when
/// the chain ended with a group-by, the pre-grouping table annotated with the
/// grouped rendering exactly as the trace recorded it.
#[derive(Debug, Clone)]
pub enum QueryTable<'a> {
    Plain(&'a Table),
    Grouped {
        source: &'a Table,
        column: &'a str,
        grouped: &'a Table,
    },
}

/// Grouped tables are annotated in plain pipe rows without `col :` and
/// `row i :` prefixes.
fn grouped_annotation(column: &str, grouped: &Table) -> String {
    let mut out = format!("Group the rows according to column \"{column}\":\n/*\n");
    out.push_str(&grouped.header().join(" | "));
    for row in grouped.rows() {
        out.push('\n');
        let cells: Vec<&str> = row.iter().map(|c| c.raw()).collect();
        out.push_str(&cells.join(" | "));
    }
    out.push_str("\n*/");
    out
}

/// Builds the final query prompt over the chain's resulting table.
pub fn build_query_prompt(
    view: &QueryTable<'_>,
    question: &str,
    demos: &DemoSet,
    task: TaskKind,
) -> Result<PromptText, PromptError> {
    let mut text = String::new();
    text.push_str(demos.query());
    let demo_region = 0..text.len();
    text.push_str("\n\n");
    let headline = match task {
        TaskKind::FactVerification => {
            "Here is the table to verify this statement. Please understand the table and answer True or False:"
        }
        TaskKind::ShortQa => {
            "Here is the table to answer this question. Please understand the table and answer the question:"
        }
        TaskKind::FreeFormQa => {
            "Here is the table to answer this question. Please understand the table and answer the question with a complete sentence:"
        }
    };
    text.push_str(headline);
    text.push_str("\n\n");

    let table_start = text.len();
    match view {
        QueryTable::Plain(table) => {
            text.push_str(&table_block(table)?);
        }
        QueryTable::Grouped {
            source,
            column,
            grouped,
        } => {
            text.push_str(&table_block(source)?);
            text.push('\n');
            text.push_str(&grouped_annotation(column, grouped));
        }
    }
    let table_region = table_start..text.len();
    text.push('\n');

    let question_start = text.len();
    text.push_str(&format!("{} {}", question_label(task), question));
    let question_region = question_start..text.len();
    text.push('\n');
    text.push_str("The answer is:");

    Ok(PromptText {
        text,
        demo_region,
        table_region,
        question_region,
        constraint_line: None,
    })
}

/// Generic-reasoning baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    EndToEnd,
    FewShot,
    Cot,
}

impl BaselineMode {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineMode::EndToEnd => "end_to_end",
            BaselineMode::FewShot => "few_shot",
            BaselineMode::Cot => "cot",
        }
    }
}

pub fn build_baseline_prompt(
    table: &Table,
    question: &str,
    mode: BaselineMode,
    demos: &DemoSet,
    task: TaskKind,
) -> Result<PromptText, PromptError> {
    let mut text = String::new();
    let demo_region = match mode {
        BaselineMode::EndToEnd => 0..0,
        BaselineMode::FewShot => {
            text.push_str(demos.baseline_few_shot());
            let region = 0..text.len();
            text.push_str("\n\n");
            region
        }
        BaselineMode::Cot => {
            text.push_str(demos.baseline_cot());
            let region = 0..text.len();
            text.push_str("\n\n");
            region
        }
    };
    let headline = match mode {
        BaselineMode::EndToEnd | BaselineMode::FewShot => {
            "Here is the table to answer this question. Answer the question."
        }
        BaselineMode::Cot => {
            "Here is the table to answer this question. Please provide your explanation first, then answer the question in a short phrase starting by 'therefore, the answer is:'"
        }
    };
    text.push_str(headline);
    text.push('\n');

    let table_start = text.len();
    text.push_str(&table_block(table)?);
    let table_region = table_start..text.len();
    text.push('\n');

    let question_start = text.len();
    text.push_str(&format!("{} {}", question_label(task), question));
    let question_region = question_start..text.len();
    text.push('\n');
    match mode {
        BaselineMode::EndToEnd | BaselineMode::FewShot => text.push_str("The answer is:"),
        BaselineMode::Cot => text.push_str("Explanation:"),
    }

    Ok(PromptText {
        text,
        demo_region,
        table_region,
        question_region,
        constraint_line: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{RowSelection, SortOrder};
    use crate::profile::DatasetKind;
    use crate::table::ColumnRef;

    fn cyclist_table() -> Table {
        Table::new(
            None,
            vec!["Rank".into(), "Cyclist".into()],
            vec![
                vec!["1", "Alejandro Valverde (ESP)"],
                vec!["2", "Alexandr Kolobnev (RUS)"],
            ],
        )
        .unwrap()
    }

    fn demos() -> DemoSet {
        DemoSet::builtin(DatasetKind::WikiTq)
    }

    #[test]
    fn fresh_chain_ends_awaiting_first_op() {
        let prompt = build_dynamicplan_prompt(
            &cyclist_table(),
            "which country had the most cyclists finish within the top 10?",
            &[ChainLink::begin()],
            &OperationPool::full(),
            &demos(),
            TaskKind::ShortQa,
        )
        .unwrap();
        assert!(prompt.text().ends_with("Function Chain: "));
        assert_eq!(
            prompt.constraint_text().unwrap(),
            "The next operation must be one of f_add_column() or f_select_row() or \
             f_select_column() or f_group_by() or f_sort_by()."
        );
    }

    #[test]
    fn constraint_drops_used_operations() {
        let history = vec![
            ChainLink::begin(),
            ChainLink {
                op: Operation::AddColumn,
                args: Some(Arguments::AddColumn {
                    name: "Country".into(),
                    values: vec!["ESP".into(), "RUS".into()],
                }),
            },
        ];
        let prompt = build_dynamicplan_prompt(
            &cyclist_table(),
            "which country had the most cyclists finish within the top 10?",
            &history,
            &OperationPool::full(),
            &demos(),
            TaskKind::ShortQa,
        )
        .unwrap();
        assert_eq!(
            prompt.constraint_text().unwrap(),
            "The next operation must be one of f_select_row() or f_select_column() or \
             f_group_by() or f_sort_by()."
        );
        assert!(prompt
            .text()
            .ends_with("Function Chain: f_add_column(Country) ->"));
    }

    #[test]
    fn plan_prompt_deterministic() {
        let build = || {
            build_dynamicplan_prompt(
                &cyclist_table(),
                "q?",
                &[ChainLink::begin()],
                &OperationPool::full(),
                &demos(),
                TaskKind::ShortQa,
            )
            .unwrap()
            .into_text()
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn plan_prompt_requires_begin() {
        let err = build_dynamicplan_prompt(
            &cyclist_table(),
            "q?",
            &[],
            &OperationPool::full(),
            &demos(),
            TaskKind::ShortQa,
        )
        .unwrap_err();
        assert_eq!(err, PromptError::BadHistory);
    }

    #[test]
    fn plan_prompt_exhausted_pool() {
        let mut history = vec![ChainLink::begin()];
        history.push(ChainLink {
            op: Operation::GroupBy,
            args: Some(Arguments::GroupBy {
                column: ColumnRef::name("Rank"),
            }),
        });
        let pool = OperationPool::new([Operation::GroupBy]).unwrap();
        let err = build_dynamicplan_prompt(
            &cyclist_table(),
            "q?",
            &history,
            &pool,
            &demos(),
            TaskKind::ShortQa,
        )
        .unwrap_err();
        assert_eq!(err, PromptError::EmptyPool);
    }

    #[test]
    fn args_prompt_group_by_contains_demo_header() {
        let prompt = build_args_prompt(
            &cyclist_table(),
            "q?",
            Operation::GroupBy,
            &demos(),
            TaskKind::ShortQa,
        )
        .unwrap();
        assert!(prompt
            .text()
            .contains("we can first use f_group_by() to group the values"));
        assert!(prompt
            .text()
            .ends_with("The existing columns are: Rank, Cyclist."));
    }

    #[test]
    fn args_prompt_select_row_keeps_caption() {
        let table = Table::new(
            Some("1972 vfl season.".into()),
            vec!["home team".into()],
            vec![vec!["st kilda"]],
        )
        .unwrap();
        let prompt = build_args_prompt(
            &table,
            "what is the away team with the highest score?",
            Operation::SelectRow,
            &demos(),
            TaskKind::ShortQa,
        )
        .unwrap();
        assert!(prompt
            .table_text()
            .contains("table caption : 1972 vfl season."));
    }

    #[test]
    fn query_prompt_ends_with_answer_marker() {
        let table = cyclist_table();
        let prompt = build_query_prompt(
            &QueryTable::Plain(&table),
            "which country had the most cyclists in top 10?",
            &demos(),
            TaskKind::ShortQa,
        )
        .unwrap();
        assert!(prompt.text().ends_with("The answer is:"));
    }

    #[test]
    fn query_prompt_grouped_annotation() {
        let source = Table::new(
            None,
            vec!["Rank".into(), "Country".into()],
            vec![vec!["1", "ESP"], vec!["2", "ITA"]],
        )
        .unwrap();
        let grouped = Table::new(
            None,
            vec!["Group ID".into(), "Country".into(), "Count".into()],
            vec![vec!["1", "ESP", "1"], vec!["2", "ITA", "1"]],
        )
        .unwrap();
        let prompt = build_query_prompt(
            &QueryTable::Grouped {
                source: &source,
                column: "Country",
                grouped: &grouped,
            },
            "which country had the most cyclists in top 10?",
            &demos(),
            TaskKind::ShortQa,
        )
        .unwrap();
        let expected = "Group the rows according to column \"Country\":\n\
                        /*\n\
                        Group ID | Country | Count\n\
                        1 | ESP | 1\n\
                        2 | ITA | 1\n\
                        */";
        assert!(prompt.text().contains(expected), "{}", prompt.text());
    }

    #[test]
    fn query_prompt_fact_task_uses_statement_label_and_demos() {
        let table = cyclist_table();
        let demos = DemoSet::builtin(DatasetKind::TabFact);
        let prompt = build_query_prompt(
            &QueryTable::Plain(&table),
            "the top cyclist is spanish.",
            &demos,
            TaskKind::FactVerification,
        )
        .unwrap();
        assert!(prompt
            .text()
            .contains("statement : the top cyclist is spanish."));
        // demos come from the fact-verification key
        assert!(prompt
            .text()
            .contains("cardiff won 19 league matches in the south wales derby."));
        assert!(prompt.text().contains("The answer is: False"));
    }

    #[test]
    fn args_and_query_prompts_deterministic() {
        let table = cyclist_table();
        let args = || {
            build_args_prompt(&table, "q?", Operation::SortBy, &demos(), TaskKind::ShortQa)
                .unwrap()
                .into_text()
        };
        assert_eq!(args(), args());
        let query = || {
            build_query_prompt(
                &QueryTable::Plain(&table),
                "q?",
                &demos(),
                TaskKind::ShortQa,
            )
            .unwrap()
            .into_text()
        };
        assert_eq!(query(), query());
    }

    #[test]
    fn baseline_prompts() {
        let table = cyclist_table();
        let e2e = build_baseline_prompt(
            &table,
            "q?",
            BaselineMode::EndToEnd,
            &demos(),
            TaskKind::ShortQa,
        )
        .unwrap();
        assert!(e2e
            .text()
            .starts_with("Here is the table to answer this question. Answer the question.\n/*"));
        assert!(e2e.text().ends_with("The answer is:"));

        let few = build_baseline_prompt(
            &table,
            "q?",
            BaselineMode::FewShot,
            &demos(),
            TaskKind::ShortQa,
        )
        .unwrap();
        assert!(few.text().contains("The answer is: Italy."));

        let cot =
            build_baseline_prompt(&table, "q?", BaselineMode::Cot, &demos(), TaskKind::ShortQa)
                .unwrap();
        assert!(cot.text().ends_with("Explanation:"));
        assert!(cot.text().contains("therefore, the answer is:"));
    }

    #[test]
    fn chain_history_rendering_matches_demo_syntax() {
        let history = vec![
            ChainLink::begin(),
            ChainLink {
                op: Operation::SelectRow,
                args: Some(Arguments::SelectRow(RowSelection::Rows(vec![1, 3]))),
            },
            ChainLink {
                op: Operation::SortBy,
                args: Some(Arguments::SortBy {
                    column: ColumnRef::name("Year"),
                    order: SortOrder::SmallToLarge,
                }),
            },
        ];
        let prompt = build_dynamicplan_prompt(
            &cyclist_table(),
            "q?",
            &history,
            &OperationPool::full(),
            &demos(),
            TaskKind::ShortQa,
        )
        .unwrap();
        assert!(prompt
            .text()
            .ends_with("Function Chain: f_select_row(row 1, row 3) -> f_sort_by(Year) ->"));
    }
}
