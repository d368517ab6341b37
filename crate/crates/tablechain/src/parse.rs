//! Parsing model completions back into structured operations and arguments.
//!
//! Plan completions render whole chains like
//! `f_select_row(row 1, row 10) -> f_select_column(Country) -> <END>`; only
//! the first operation token is trusted, since later steps were generated
//! without seeing the updated table. Argument completions are matched by one
//! fixed expression per operation; when the completion contains an
//! explanation, only the text after the last "the answer is" marker is
//! considered.

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::ops::{Arguments, Operation, RowSelection, SortOrder};
use crate::profile::TaskKind;
use crate::table::ColumnRef;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompletionParseError {
    #[error("no operation token found in plan completion")]
    UnparseablePlan,
    #[error("no argument pattern for {op} matched the completion")]
    UnparseableArgs { op: String },
    #[error("bad row token: {token:?}")]
    BadRowToken { token: String },
    #[error("bad sort order token: {token:?}")]
    BadOrderToken { token: String },
    #[error("empty completion")]
    EmptyCompletion,
}

/// First operation extracted from a plan completion; the raw text is kept
/// for the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPlanStep {
    pub op: Operation,
    pub raw: String,
}

/// Arguments extracted from a generation completion, with the capture
/// substrings retained for the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedArgs {
    pub args: Arguments,
    pub captures: Vec<String>,
}

/// Scans for the first canonical operation token. `<END>` is the prompt-side
/// spelling of the end sentinel; the internal `[E]` is accepted too. Anything
/// after the first token is ignored.
pub fn parse_plan(completion: &str) -> Result<ParsedPlanStep, CompletionParseError> {
    const TOKENS: [(&str, Operation); 7] = [
        ("f_add_column", Operation::AddColumn),
        ("f_select_row", Operation::SelectRow),
        ("f_select_column", Operation::SelectColumn),
        ("f_group_by", Operation::GroupBy),
        ("f_sort_by", Operation::SortBy),
        ("<END>", Operation::End),
        ("[E]", Operation::End),
    ];
    let mut first: Option<(usize, Operation)> = None;
    for (token, op) in TOKENS {
        if let Some(pos) = completion.find(token) {
            if first.map(|(best, _)| pos < best).unwrap_or(true) {
                first = Some((pos, op));
            }
        }
    }
    match first {
        Some((_, op)) => Ok(ParsedPlanStep {
            op,
            raw: completion.to_string(),
        }),
        None => Err(CompletionParseError::UnparseablePlan),
    }
}

static ADD_COLUMN_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"f_add_column\((.*?)\)\s*\.?\s*The value\s*:\s*(.*)").unwrap());
static SELECT_ROW_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"f_select_row\(\[(.*?)\]\)").unwrap());
static SELECT_COLUMN_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"f_select_column\(\[(.*?)\]\)").unwrap());
static GROUP_BY_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"f_group_by\((.*?)\)").unwrap());
static SORT_BY_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"f_sort_by\((.*?)\)").unwrap());
static SORT_ORDER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"the order is\s*"(.*?)""#).unwrap());

/// Byte offset of the last ASCII-case-insensitive occurrence of `needle`.
/// An ASCII needle always matches at a char boundary, so the offset is safe
/// to slice with; lowercasing the haystack instead would shift offsets for
/// length-changing case folds.
fn rfind_ascii_ci(haystack: &str, needle: &str) -> Option<usize> {
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    if n.is_empty() || h.len() < n.len() {
        return None;
    }
    (0..=h.len() - n.len())
        .rev()
        .find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

/// The demos put the formula after an "the answer is" marker; when present,
/// only the text after the last marker is parsed.
fn answer_slice(completion: &str) -> &str {
    match rfind_ascii_ci(completion, "the answer is") {
        Some(pos) => &completion[pos..],
        None => completion,
    }
}

fn strip_quotes(s: &str) -> &str {
    let s = s.trim();
    for quote in ['"', '\''] {
        if s.len() >= 2 && s.starts_with(quote) && s.ends_with(quote) {
            return &s[1..s.len() - 1];
        }
    }
    s
}

/// Applies the per-operation extraction expression to a completion.
///
/// Column lists split on `", "`, so column names containing a comma-space
/// sequence cannot be addressed by name; add-column values split on `" | "`
/// likewise.
pub fn parse_args(op: Operation, completion: &str) -> Result<ParsedArgs, CompletionParseError> {
    let unparseable = || CompletionParseError::UnparseableArgs {
        op: op.canonical_name().to_string(),
    };
    let slice = answer_slice(completion);
    match op {
        Operation::AddColumn => {
            let caps = ADD_COLUMN_RE.captures(slice).ok_or_else(unparseable)?;
            let name = caps[1].trim().to_string();
            let values_text = caps[2].lines().next().unwrap_or("").trim();
            let values: Vec<String> = values_text
                .split(" | ")
                .map(|v| v.trim().to_string())
                .collect();
            Ok(ParsedArgs {
                args: Arguments::AddColumn {
                    name,
                    values: values.clone(),
                },
                captures: vec![caps[1].to_string(), values_text.to_string()],
            })
        }
        Operation::SelectRow => {
            let caps = SELECT_ROW_RE.captures(slice).ok_or_else(unparseable)?;
            let inner = caps[1].trim().to_string();
            let selection = if inner == "*" {
                RowSelection::All
            } else {
                let mut rows: Vec<usize> = Vec::new();
                for entry in inner.split(", ") {
                    let entry = entry.trim();
                    let index = entry
                        .strip_prefix("row ")
                        .and_then(|n| n.trim().parse::<usize>().ok())
                        .filter(|n| *n > 0)
                        .ok_or(CompletionParseError::BadRowToken {
                            token: entry.to_string(),
                        })?;
                    if !rows.contains(&index) {
                        rows.push(index);
                    }
                }
                RowSelection::Rows(rows)
            };
            Ok(ParsedArgs {
                args: Arguments::SelectRow(selection),
                captures: vec![inner],
            })
        }
        Operation::SelectColumn => {
            let caps = SELECT_COLUMN_RE.captures(slice).ok_or_else(unparseable)?;
            let inner = caps[1].trim().to_string();
            if inner.is_empty() {
                return Err(unparseable());
            }
            let mut columns: Vec<ColumnRef> = Vec::new();
            for name in inner.split(", ") {
                let name = strip_quotes(name);
                if name.is_empty() {
                    return Err(unparseable());
                }
                let column = ColumnRef::name(name);
                if !columns.contains(&column) {
                    columns.push(column);
                }
            }
            Ok(ParsedArgs {
                args: Arguments::SelectColumn { columns },
                captures: vec![inner],
            })
        }
        Operation::GroupBy => {
            let caps = GROUP_BY_RE.captures(slice).ok_or_else(unparseable)?;
            let name = strip_quotes(&caps[1]).to_string();
            if name.is_empty() {
                return Err(unparseable());
            }
            Ok(ParsedArgs {
                args: Arguments::GroupBy {
                    column: ColumnRef::Name(name.clone()),
                },
                captures: vec![name],
            })
        }
        Operation::SortBy => {
            let caps = SORT_BY_RE.captures(slice).ok_or_else(unparseable)?;
            let name = strip_quotes(&caps[1]).to_string();
            if name.is_empty() {
                return Err(unparseable());
            }
            let order_caps = SORT_ORDER_RE.captures(slice).ok_or_else(unparseable)?;
            let order_text = order_caps[1].trim().to_string();
            let order = SortOrder::from_prompt_text(&order_text).ok_or(
                CompletionParseError::BadOrderToken {
                    token: order_text.clone(),
                },
            )?;
            Ok(ParsedArgs {
                args: Arguments::SortBy {
                    column: ColumnRef::Name(name.clone()),
                    order,
                },
                captures: vec![name, order_text],
            })
        }
        Operation::Begin | Operation::End => Err(unparseable()),
    }
}

fn column_name(column: &ColumnRef) -> String {
    match column {
        ColumnRef::Name(n) => n.clone(),
        ColumnRef::Index(i) => format!("#{i}"),
    }
}

/// Canonical serialization of an argument set: the demo answer syntax. Used
/// for majority voting and traces; `parse_args` inverts it.
pub fn canonical_format(op: Operation, args: &Arguments) -> String {
    debug_assert_eq!(args.operation(), op);
    match args {
        Arguments::AddColumn { name, values } => {
            format!("f_add_column({name}). The value: {}", values.join(" | "))
        }
        Arguments::SelectRow(RowSelection::All) => "f_select_row([*])".to_string(),
        Arguments::SelectRow(RowSelection::Rows(rows)) => {
            let entries: Vec<String> = rows.iter().map(|r| format!("row {r}")).collect();
            format!("f_select_row([{}])", entries.join(", "))
        }
        Arguments::SelectColumn { columns } => {
            let names: Vec<String> = columns.iter().map(column_name).collect();
            format!("f_select_column([{}])", names.join(", "))
        }
        Arguments::GroupBy { column } => format!("f_group_by({})", column_name(column)),
        Arguments::SortBy { column, order } => format!(
            "f_sort_by({}), the order is \"{}\".",
            column_name(column),
            order.prompt_text()
        ),
    }
}

/// Compact rendering of one executed link for the planner's chain history,
/// e.g. `f_add_column(Country)` or `f_select_row(row 1, row 3)`.
pub fn chain_format(op: Operation, args: Option<&Arguments>) -> String {
    match args {
        None => format!("{}()", op.canonical_name()),
        Some(Arguments::AddColumn { name, .. }) => format!("f_add_column({name})"),
        Some(Arguments::SelectRow(RowSelection::All)) => "f_select_row(*)".to_string(),
        Some(Arguments::SelectRow(RowSelection::Rows(rows))) => {
            let entries: Vec<String> = rows.iter().map(|r| format!("row {r}")).collect();
            format!("f_select_row({})", entries.join(", "))
        }
        Some(Arguments::SelectColumn { columns }) => {
            let names: Vec<String> = columns.iter().map(column_name).collect();
            format!("f_select_column({})", names.join(", "))
        }
        Some(Arguments::GroupBy { column }) => format!("f_group_by({})", column_name(column)),
        Some(Arguments::SortBy { column, .. }) => format!("f_sort_by({})", column_name(column)),
    }
}

/// Majority vote over sampled argument sets, on the canonical serialization.
/// Ties break toward the earliest candidate. Panics on an empty slice — the
/// caller samples at least once.
pub fn vote_args(candidates: &[ParsedArgs]) -> &ParsedArgs {
    assert!(!candidates.is_empty(), "vote over no candidates");
    let op = candidates[0].args.operation();
    let keys: Vec<String> = candidates
        .iter()
        .map(|c| canonical_format(op, &c.args))
        .collect();
    let mut best = 0usize;
    let mut best_count = 0usize;
    for (i, key) in keys.iter().enumerate() {
        let count = keys.iter().filter(|k| *k == key).count();
        if count > best_count {
            best = i;
            best_count = count;
        }
    }
    &candidates[best]
}

/// Normalizes the final-answer completion: first line, trimmed, trailing
/// period stripped; fact-verification answers map onto "True"/"False".
pub fn parse_final_answer(
    completion: &str,
    task: TaskKind,
) -> Result<String, CompletionParseError> {
    let trimmed = completion.trim();
    if trimmed.is_empty() {
        return Err(CompletionParseError::EmptyCompletion);
    }
    let line = trimmed.lines().next().unwrap_or("").trim();
    let line = line.strip_suffix('.').unwrap_or(line).trim();
    if task == TaskKind::FactVerification {
        match line.to_lowercase().as_str() {
            "yes" | "true" => return Ok("True".to_string()),
            "no" | "false" => return Ok("False".to_string()),
            _ => {}
        }
    }
    Ok(line.to_string())
}

/// Chain-of-Thought answer extraction: the short phrase after the last
/// "the answer is:" marker, normalized like a final answer.
pub fn parse_cot_answer(completion: &str, task: TaskKind) -> Result<String, CompletionParseError> {
    let marker = "the answer is:";
    let tail = match rfind_ascii_ci(completion, marker) {
        Some(pos) => &completion[pos + marker.len()..],
        None => completion,
    };
    parse_final_answer(tail, task)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_first_token_wins() {
        let step = parse_plan(
            "f_select_row(row 1, row 10) -> f_select_column(Country) -> f_group_by(Country) -> <END>",
        )
        .unwrap();
        assert_eq!(step.op, Operation::SelectRow);
    }

    #[test]
    fn plan_end_tag() {
        assert_eq!(parse_plan("<END>").unwrap().op, Operation::End);
        assert_eq!(parse_plan("[E]").unwrap().op, Operation::End);
    }

    #[test]
    fn plan_unparseable() {
        assert_eq!(
            parse_plan("I think we should sort.").unwrap_err(),
            CompletionParseError::UnparseablePlan
        );
    }

    #[test]
    fn plan_ignores_trailing_noise() {
        let step = parse_plan("Sure! The next step is f_group_by(Country), then <END>.").unwrap();
        assert_eq!(step.op, Operation::GroupBy);
    }

    #[test]
    fn args_add_column() {
        let completion = "Explanation: the question asks about the date of the competition with \
                          highest score. The datatype is Numerical.\nTherefore, the answer is: \
                          f_add_column(Attendance number). The value: 32092 | 34186 | 17503";
        let parsed = parse_args(Operation::AddColumn, completion).unwrap();
        assert_eq!(
            parsed.args,
            Arguments::AddColumn {
                name: "Attendance number".into(),
                values: vec!["32092".into(), "34186".into(), "17503".into()],
            }
        );
    }

    #[test]
    fn args_select_row_all() {
        let parsed = parse_args(Operation::SelectRow, "The answer is : f_select_row([*])").unwrap();
        assert_eq!(parsed.args, Arguments::SelectRow(RowSelection::All));
    }

    #[test]
    fn args_select_row_indices() {
        let parsed = parse_args(
            Operation::SelectRow,
            "explain : we need rows 1 and 10.\nThe answer is : f_select_row([row 1, row 10])",
        )
        .unwrap();
        assert_eq!(
            parsed.args,
            Arguments::SelectRow(RowSelection::Rows(vec![1, 10]))
        );
    }

    #[test]
    fn args_select_row_bad_token() {
        let err = parse_args(Operation::SelectRow, "f_select_row([first row])").unwrap_err();
        assert_eq!(
            err,
            CompletionParseError::BadRowToken {
                token: "first row".into()
            }
        );
        let err = parse_args(Operation::SelectRow, "f_select_row([row 0])").unwrap_err();
        assert!(matches!(err, CompletionParseError::BadRowToken { .. }));
    }

    #[test]
    fn args_select_column() {
        let parsed = parse_args(
            Operation::SelectColumn,
            "The answer is : f_select_column([cardiff win, draw])",
        )
        .unwrap();
        assert_eq!(
            parsed.args,
            Arguments::SelectColumn {
                columns: vec![ColumnRef::name("cardiff win"), ColumnRef::name("draw")]
            }
        );
    }

    #[test]
    fn args_group_by() {
        let parsed = parse_args(
            Operation::GroupBy,
            "Therefore, the answer is: f_group_by(Country).",
        )
        .unwrap();
        assert_eq!(
            parsed.args,
            Arguments::GroupBy {
                column: ColumnRef::name("Country")
            }
        );
    }

    #[test]
    fn args_sort_by() {
        let parsed = parse_args(
            Operation::SortBy,
            "Therefore, the answer is: f_sort_by(Position), the order is \"large to small\".",
        )
        .unwrap();
        assert_eq!(
            parsed.args,
            Arguments::SortBy {
                column: ColumnRef::name("Position"),
                order: SortOrder::LargeToSmall,
            }
        );
    }

    #[test]
    fn args_sort_by_bad_order() {
        let err = parse_args(
            Operation::SortBy,
            "f_sort_by(Position), the order is \"biggest first\".",
        )
        .unwrap_err();
        assert_eq!(
            err,
            CompletionParseError::BadOrderToken {
                token: "biggest first".into()
            }
        );
    }

    #[test]
    fn args_parses_after_last_marker_only() {
        // the explanation quotes a different formula; only the final answer counts
        let completion = "the answer is : f_select_row([row 9]) would be wrong. \
                          The answer is : f_select_row([row 2])";
        let parsed = parse_args(Operation::SelectRow, completion).unwrap();
        assert_eq!(
            parsed.args,
            Arguments::SelectRow(RowSelection::Rows(vec![2]))
        );
    }

    #[test]
    fn args_marker_found_after_width_changing_case_folds() {
        // 'İ' grows by one byte under full lowercasing; the marker offset
        // must still land on the marker in the original string
        let completion = "İİİ explanation. The answer is : f_group_by(Country)";
        let parsed = parse_args(Operation::GroupBy, completion).unwrap();
        assert_eq!(
            parsed.args,
            Arguments::GroupBy {
                column: ColumnRef::name("Country")
            }
        );
        let cot = "İİİ reasoning. Therefore, the answer is: John.";
        assert_eq!(parse_cot_answer(cot, TaskKind::ShortQa).unwrap(), "John");
    }

    #[test]
    fn args_unparseable() {
        assert!(parse_args(Operation::GroupBy, "no formula here").is_err());
        assert!(parse_args(Operation::Begin, "f_group_by(x)").is_err());
    }

    #[test]
    fn canonical_round_trips() {
        let cases = [
            (
                Operation::AddColumn,
                Arguments::AddColumn {
                    name: "Country".into(),
                    values: vec!["ESP".into(), "RUS".into()],
                },
            ),
            (
                Operation::SelectRow,
                Arguments::SelectRow(RowSelection::Rows(vec![1, 3])),
            ),
            (
                Operation::SelectRow,
                Arguments::SelectRow(RowSelection::All),
            ),
            (
                Operation::SelectColumn,
                Arguments::SelectColumn {
                    columns: vec![ColumnRef::name("Year"), ColumnRef::name("League")],
                },
            ),
            (
                Operation::GroupBy,
                Arguments::GroupBy {
                    column: ColumnRef::name("Country"),
                },
            ),
            (
                Operation::SortBy,
                Arguments::SortBy {
                    column: ColumnRef::name("Year"),
                    order: SortOrder::SmallToLarge,
                },
            ),
        ];
        for (op, args) in cases {
            let text = canonical_format(op, &args);
            let parsed = parse_args(op, &text).unwrap();
            assert_eq!(parsed.args, args, "round trip failed for {text}");
        }
    }

    #[test]
    fn vote_majority_and_ties() {
        let a = parse_args(Operation::SelectRow, "f_select_row([row 1, row 3])").unwrap();
        let b = parse_args(Operation::SelectRow, "f_select_row([row 1])").unwrap();
        let candidates = vec![
            a.clone(),
            b.clone(),
            a.clone(),
            b.clone(),
            a.clone(),
            b.clone(),
            a.clone(),
            a.clone(),
        ];
        assert_eq!(
            vote_args(&candidates).args,
            Arguments::SelectRow(RowSelection::Rows(vec![1, 3]))
        );
        // 4/4 tie: earliest candidate wins
        let tied = vec![
            b.clone(),
            a.clone(),
            b.clone(),
            a.clone(),
            b.clone(),
            a.clone(),
            b,
            a,
        ];
        assert_eq!(
            vote_args(&tied).args,
            Arguments::SelectRow(RowSelection::Rows(vec![1]))
        );
        // singleton
        let single = vec![parse_args(Operation::GroupBy, "f_group_by(X)").unwrap()];
        assert_eq!(vote_args(&single).args, single[0].args);
    }

    #[test]
    fn final_answer_normalization() {
        assert_eq!(
            parse_final_answer("Italy.", TaskKind::ShortQa).unwrap(),
            "Italy"
        );
        assert_eq!(
            parse_final_answer("TRUE", TaskKind::FactVerification).unwrap(),
            "True"
        );
        assert_eq!(
            parse_final_answer("no", TaskKind::FactVerification).unwrap(),
            "False"
        );
        assert_eq!(
            parse_final_answer("  Italy \nbecause...", TaskKind::ShortQa).unwrap(),
            "Italy"
        );
        assert_eq!(
            parse_final_answer("", TaskKind::ShortQa).unwrap_err(),
            CompletionParseError::EmptyCompletion
        );
    }

    #[test]
    fn cot_answer_extraction() {
        let completion = "John O'Flynn has the highest total of 12 goals. \
                          Therefore, the answer is: John.";
        assert_eq!(
            parse_cot_answer(completion, TaskKind::ShortQa).unwrap(),
            "John"
        );
    }
}
