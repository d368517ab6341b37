//! Executable semantics for the atomic table operations.
//!
//! The five operations (`f_add_column`, `f_select_row`, `f_select_column`,
//! `f_group_by`, `f_sort_by`) plus the `[B]`/`[E]` sentinels form the
//! vocabulary of an operation chain. All of them are pure functions over
//! immutable tables.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{CellValue, ColumnRef, NumericPolicy, Table, TableError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OpError {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("row index {index} out of range 1..={rows}")]
    RowOutOfRange { index: usize, rows: usize },
    #[error("{expected} values required, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("arguments {args} do not match operation {op}")]
    VariantMismatch { op: String, args: String },
    #[error("operation pool must not be empty or contain sentinels")]
    InvalidPool,
}

/// One link of the operation chain, including the begin/end sentinels.
/// The sentinels carry no arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Operation {
    Begin,
    AddColumn,
    SelectRow,
    SelectColumn,
    GroupBy,
    SortBy,
    End,
}

impl Operation {
    /// The five executable operations in canonical order.
    pub const ATOMIC: [Operation; 5] = [
        Operation::AddColumn,
        Operation::SelectRow,
        Operation::SelectColumn,
        Operation::GroupBy,
        Operation::SortBy,
    ];

    /// Canonical text name, byte-exact in traces and prompts.
    pub fn canonical_name(&self) -> &'static str {
        match self {
            Operation::Begin => "[B]",
            Operation::AddColumn => "f_add_column",
            Operation::SelectRow => "f_select_row",
            Operation::SelectColumn => "f_select_column",
            Operation::GroupBy => "f_group_by",
            Operation::SortBy => "f_sort_by",
            Operation::End => "[E]",
        }
    }

    pub fn from_canonical(name: &str) -> Option<Operation> {
        match name {
            "[B]" => Some(Operation::Begin),
            "f_add_column" => Some(Operation::AddColumn),
            "f_select_row" => Some(Operation::SelectRow),
            "f_select_column" => Some(Operation::SelectColumn),
            "f_group_by" => Some(Operation::GroupBy),
            "f_sort_by" => Some(Operation::SortBy),
            "[E]" => Some(Operation::End),
            _ => None,
        }
    }

    pub fn is_sentinel(&self) -> bool {
        matches!(self, Operation::Begin | Operation::End)
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SortOrder {
    LargeToSmall,
    SmallToLarge,
}

impl SortOrder {
    /// Parses exactly the strings used in the prompts.
    pub fn from_prompt_text(s: &str) -> Option<SortOrder> {
        match s {
            "large to small" => Some(SortOrder::LargeToSmall),
            "small to large" => Some(SortOrder::SmallToLarge),
            _ => None,
        }
    }

    pub fn prompt_text(&self) -> &'static str {
        match self {
            SortOrder::LargeToSmall => "large to small",
            SortOrder::SmallToLarge => "small to large",
        }
    }
}

/// Row selection argument: explicit 1-based indices or everything.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSelection {
    All,
    Rows(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Arguments {
    AddColumn { name: String, values: Vec<String> },
    SelectRow(RowSelection),
    SelectColumn { columns: Vec<ColumnRef> },
    GroupBy { column: ColumnRef },
    SortBy { column: ColumnRef, order: SortOrder },
}

impl Arguments {
    pub fn operation(&self) -> Operation {
        match self {
            Arguments::AddColumn { .. } => Operation::AddColumn,
            Arguments::SelectRow(_) => Operation::SelectRow,
            Arguments::SelectColumn { .. } => Operation::SelectColumn,
            Arguments::GroupBy { .. } => Operation::GroupBy,
            Arguments::SortBy { .. } => Operation::SortBy,
        }
    }
}

/// The set of operations the planner may choose from. Never empty, never
/// contains sentinels. Iteration order is canonical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationPool(BTreeSet<Operation>);

impl OperationPool {
    pub fn full() -> Self {
        OperationPool(Operation::ATOMIC.into_iter().collect())
    }

    pub fn new(ops: impl IntoIterator<Item = Operation>) -> Result<Self, OpError> {
        let set: BTreeSet<Operation> = ops.into_iter().collect();
        if set.is_empty() || set.iter().any(Operation::is_sentinel) {
            return Err(OpError::InvalidPool);
        }
        Ok(OperationPool(set))
    }

    /// Leave-one-out pool for the ablation runs.
    pub fn without(op: Operation) -> Result<Self, OpError> {
        Self::new(Operation::ATOMIC.into_iter().filter(|o| *o != op))
    }

    pub fn contains(&self, op: Operation) -> bool {
        self.0.contains(&op)
    }

    pub fn iter(&self) -> impl Iterator<Item = Operation> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for OperationPool {
    fn default() -> Self {
        Self::full()
    }
}

/// Appends a column. The number of values must equal the row count; this is
/// a hard error surfaced to the chain controller's retry path, never padded.
pub fn f_add_column(table: &Table, name: &str, values: &[String]) -> Result<Table, OpError> {
    if values.len() != table.n_rows() {
        return Err(OpError::ArityMismatch {
            expected: table.n_rows(),
            got: values.len(),
        });
    }
    let mut header = table.header().to_vec();
    header.push(name.to_string());
    let rows = table
        .rows()
        .iter()
        .zip(values)
        .map(|(row, value)| {
            let mut row = row.clone();
            row.push(CellValue::new(value.clone()));
            row
        })
        .collect();
    Ok(Table::from_cells(
        table.caption().map(str::to_string),
        header,
        rows,
    )?)
}

/// Keeps the rows named by 1-based indices, in the order given (duplicates
/// are dropped, keeping the first occurrence). `All` returns the table
/// unchanged.
pub fn f_select_row(table: &Table, rows: &RowSelection) -> Result<Table, OpError> {
    let indices = match rows {
        RowSelection::All => return Ok(table.clone()),
        RowSelection::Rows(indices) => indices,
    };
    let mut seen = BTreeSet::new();
    let mut selected = Vec::with_capacity(indices.len());
    for &index in indices {
        if index == 0 || index > table.n_rows() {
            return Err(OpError::RowOutOfRange {
                index,
                rows: table.n_rows(),
            });
        }
        if seen.insert(index) {
            selected.push(table.rows()[index - 1].clone());
        }
    }
    Ok(Table::from_cells(
        table.caption().map(str::to_string),
        table.header().to_vec(),
        selected,
    )?)
}

/// Keeps the named columns, in the order given (duplicates dropped).
pub fn f_select_column(table: &Table, columns: &[ColumnRef]) -> Result<Table, OpError> {
    let mut indices = Vec::with_capacity(columns.len());
    for column in columns {
        let idx = table.resolve_column(column)?;
        if !indices.contains(&idx) {
            indices.push(idx);
        }
    }
    let header = indices.iter().map(|&i| table.header()[i].clone()).collect();
    let rows = table
        .rows()
        .iter()
        .map(|row| indices.iter().map(|&i| row[i].clone()).collect())
        .collect();
    Ok(Table::from_cells(
        table.caption().map(str::to_string),
        header,
        rows,
    )?)
}

/// Groups rows by the contents of one column and counts each distinct value.
/// Output header is `Group ID | <column> | Count`; groups are ordered by
/// count descending, ties broken by which group's last member appears first
/// in the input (matching the reference grouped-table rendering); Group ID is
/// the 1-based rank in that order. The empty string is a normal value.
pub fn f_group_by(table: &Table, column: &ColumnRef) -> Result<Table, OpError> {
    let idx = table.resolve_column(column)?;
    // value -> (count, last occurrence); insertion order retained separately
    let mut order: Vec<String> = Vec::new();
    let mut stats: Vec<(usize, usize)> = Vec::new();
    for (row_idx, row) in table.rows().iter().enumerate() {
        let value = row[idx].raw().to_string();
        match order.iter().position(|v| *v == value) {
            Some(pos) => {
                stats[pos].0 += 1;
                stats[pos].1 = row_idx;
            }
            None => {
                order.push(value);
                stats.push((1, row_idx));
            }
        }
    }
    let mut groups: Vec<(String, usize, usize)> = order
        .into_iter()
        .zip(stats)
        .map(|(value, (count, last))| (value, count, last))
        .collect();
    groups.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let header = vec![
        "Group ID".to_string(),
        table.header()[idx].clone(),
        "Count".to_string(),
    ];
    let rows = groups
        .into_iter()
        .enumerate()
        .map(|(rank, (value, count, _))| {
            vec![
                CellValue::new((rank + 1).to_string()),
                CellValue::new(value),
                CellValue::new(count.to_string()),
            ]
        })
        .collect();
    Ok(Table::from_cells(
        table.caption().map(str::to_string),
        header,
        rows,
    )?)
}

#[derive(PartialEq)]
enum SortKey {
    Num(f64),
    Text(String),
    Empty,
}

/// Stable sort of the rows on one column. If every non-empty cell in the
/// column parses numerically (leading-token fallback allowed), the comparison
/// is numeric; otherwise case-insensitive text. Empty cells sort last under
/// both orders.
pub fn f_sort_by(table: &Table, column: &ColumnRef, order: SortOrder) -> Result<Table, OpError> {
    let idx = table.resolve_column(column)?;
    let numeric_mode = table
        .rows()
        .iter()
        .filter(|row| !row[idx].is_empty())
        .all(|row| row[idx].numeric(NumericPolicy::LeadingToken).is_some());
    let key = |cell: &CellValue| -> SortKey {
        if cell.is_empty() {
            SortKey::Empty
        } else if numeric_mode {
            SortKey::Num(
                cell.numeric(NumericPolicy::LeadingToken)
                    .unwrap_or(f64::NAN),
            )
        } else {
            SortKey::Text(cell.raw().to_lowercase())
        }
    };
    let mut rows = table.rows().to_vec();
    rows.sort_by(|a, b| {
        use std::cmp::Ordering;
        let (ka, kb) = (key(&a[idx]), key(&b[idx]));
        match (ka, kb) {
            (SortKey::Empty, SortKey::Empty) => Ordering::Equal,
            (SortKey::Empty, _) => Ordering::Greater,
            (_, SortKey::Empty) => Ordering::Less,
            (ka, kb) => {
                let base = match (&ka, &kb) {
                    (SortKey::Num(x), SortKey::Num(y)) => {
                        x.partial_cmp(y).unwrap_or(Ordering::Equal)
                    }
                    (SortKey::Text(x), SortKey::Text(y)) => x.cmp(y),
                    _ => Ordering::Equal,
                };
                match order {
                    SortOrder::SmallToLarge => base,
                    SortOrder::LargeToSmall => base.reverse(),
                }
            }
        }
    });
    Ok(Table::from_cells(
        table.caption().map(str::to_string),
        table.header().to_vec(),
        rows,
    )?)
}

/// Dispatches an operation with its arguments. Sentinels and mismatched
/// argument variants are rejected; inner errors propagate.
pub fn apply(table: &Table, op: Operation, args: &Arguments) -> Result<Table, OpError> {
    if op.is_sentinel() || args.operation() != op {
        return Err(OpError::VariantMismatch {
            op: op.canonical_name().to_string(),
            args: args.operation().canonical_name().to_string(),
        });
    }
    match args {
        Arguments::AddColumn { name, values } => f_add_column(table, name, values),
        Arguments::SelectRow(rows) => f_select_row(table, rows),
        Arguments::SelectColumn { columns } => f_select_column(table, columns),
        Arguments::GroupBy { column } => f_group_by(table, column),
        Arguments::SortBy { column, order } => f_sort_by(table, column, *order),
    }
}
