//! Immutable table data model and addressing utilities.
//!
//! A [`Table`] is a rectangular grid of text cells with a header row and an
//! optional caption. Tables are values: every transformation returns a new
//! table, so they are safe to share across threads without synchronization.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TableError {
    #[error("row {row} has {got} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("table must have at least one column")]
    EmptyHeader,
    #[error("cell or header text collides with the encoding delimiter: {text:?}")]
    DelimiterCollision { text: String },
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("unknown column: {name}")]
    UnknownColumn { name: String },
    #[error("ambiguous column {name:?}: {count} matches")]
    AmbiguousColumn { name: String, count: usize },
}

/// How a cell's raw text was interpreted.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedView {
    Numerical(f64),
    DateLike(String),
    Plain(String),
}

/// Whether numeric parsing may fall back to the leading whitespace-delimited
/// token of the cell. `f_sort_by` opts in so cells like "13.12 (90)" still
/// sort numerically; everywhere else the whole string must parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumericPolicy {
    WholeString,
    LeadingToken,
}

static DATE_LIKE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\d{4}[-/]\d{1,2}[-/]\d{1,2}|\d{1,2}[-/]\d{1,2}[-/]\d{4})$").unwrap()
});

/// One table cell. The raw text is never altered; parsed views are derived
/// on demand and are pure functions of the raw text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellValue {
    raw: String,
}

impl CellValue {
    pub fn new(raw: impl Into<String>) -> Self {
        Self { raw: raw.into() }
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn is_empty(&self) -> bool {
        self.raw.trim().is_empty()
    }

    pub fn parsed_view(&self) -> ParsedView {
        let trimmed = self.raw.trim();
        if let Some(n) = parse_numeric(trimmed) {
            return ParsedView::Numerical(n);
        }
        if DATE_LIKE.is_match(trimmed) {
            return ParsedView::DateLike(trimmed.to_string());
        }
        ParsedView::Plain(self.raw.clone())
    }

    /// Numeric value of the cell under the given policy, if any.
    pub fn numeric(&self, policy: NumericPolicy) -> Option<f64> {
        let trimmed = self.raw.trim();
        if let Some(n) = parse_numeric(trimmed) {
            return Some(n);
        }
        match policy {
            NumericPolicy::WholeString => None,
            NumericPolicy::LeadingToken => {
                let token = trimmed.split_whitespace().next()?;
                parse_numeric(token)
            }
        }
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl From<&str> for CellValue {
    fn from(s: &str) -> Self {
        CellValue::new(s)
    }
}

impl From<String> for CellValue {
    fn from(s: String) -> Self {
        CellValue::new(s)
    }
}

/// Numeric grammar: optional sign, digits with optional comma separators,
/// optional decimal point. Returns `None` for anything else.
fn parse_numeric(s: &str) -> Option<f64> {
    let rest = s.strip_prefix(['+', '-']).unwrap_or(s);
    if rest.is_empty() {
        return None;
    }
    let mut digits = 0usize;
    let mut dots = 0usize;
    for c in rest.chars() {
        match c {
            '0'..='9' => digits += 1,
            ',' => {}
            '.' => dots += 1,
            _ => return None,
        }
    }
    if digits == 0 || dots > 1 {
        return None;
    }
    s.replace(',', "").parse::<f64>().ok()
}

/// Column address: by header name or by 0-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl ColumnRef {
    pub fn name(n: impl Into<String>) -> Self {
        ColumnRef::Name(n.into())
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnRef::Index(i) => write!(f, "#{i}"),
            ColumnRef::Name(n) => f.write_str(n),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct Table {
    caption: Option<String>,
    header: Vec<String>,
    rows: Vec<Vec<CellValue>>,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    caption: Option<String>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl TryFrom<TableRepr> for Table {
    type Error = TableError;
    fn try_from(r: TableRepr) -> Result<Self, TableError> {
        Table::new(r.caption, r.header, r.rows)
    }
}

impl From<Table> for TableRepr {
    fn from(t: Table) -> Self {
        TableRepr {
            caption: t.caption,
            header: t.header,
            rows: t
                .rows
                .into_iter()
                .map(|r| r.into_iter().map(|c| c.raw).collect())
                .collect(),
        }
    }
}

impl PartialEq for Table {
    fn eq(&self, other: &Self) -> bool {
        self.caption == other.caption && self.header == other.header && self.rows == other.rows
    }
}

impl Eq for Table {}

impl Table {
    /// Builds a table, enforcing rectangularity. Duplicate header names are
    /// permitted; addressing by a duplicated name errors at resolution time.
    pub fn new<S: Into<String>>(
        caption: Option<String>,
        header: Vec<String>,
        rows: Vec<Vec<S>>,
    ) -> Result<Self, TableError> {
        let cells = rows
            .into_iter()
            .map(|r| r.into_iter().map(|c| CellValue::new(c)).collect())
            .collect();
        Self::from_cells(caption, header, cells)
    }

    pub fn from_cells(
        caption: Option<String>,
        header: Vec<String>,
        rows: Vec<Vec<CellValue>>,
    ) -> Result<Self, TableError> {
        if header.is_empty() {
            return Err(TableError::EmptyHeader);
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != header.len() {
                return Err(TableError::RaggedRow {
                    row: i + 1,
                    expected: header.len(),
                    got: row.len(),
                });
            }
        }
        Ok(Table {
            caption,
            header,
            rows,
        })
    }

    pub fn caption(&self) -> Option<&str> {
        self.caption.as_deref()
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<CellValue>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.header.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<&CellValue> {
        self.rows.get(row).and_then(|r| r.get(col))
    }

    /// Resolves a column reference to a 0-based index. Name matching is
    /// case-insensitive; when no exact match exists, a second pass compares
    /// whitespace-trimmed names. More than one match is an error.
    pub fn resolve_column(&self, column: &ColumnRef) -> Result<usize, TableError> {
        match column {
            ColumnRef::Index(i) => {
                if *i < self.header.len() {
                    Ok(*i)
                } else {
                    Err(TableError::UnknownColumn {
                        name: format!("#{i}"),
                    })
                }
            }
            ColumnRef::Name(name) => {
                let wanted = name.to_lowercase();
                let exact: Vec<usize> = self
                    .header
                    .iter()
                    .enumerate()
                    .filter(|(_, h)| h.to_lowercase() == wanted)
                    .map(|(i, _)| i)
                    .collect();
                let matches = if exact.is_empty() {
                    let wanted = name.trim().to_lowercase();
                    self.header
                        .iter()
                        .enumerate()
                        .filter(|(_, h)| h.trim().to_lowercase() == wanted)
                        .map(|(i, _)| i)
                        .collect()
                } else {
                    exact
                };
                match matches.len() {
                    0 => Err(TableError::UnknownColumn { name: name.clone() }),
                    1 => Ok(matches[0]),
                    n => Err(TableError::AmbiguousColumn {
                        name: name.clone(),
                        count: n,
                    }),
                }
            }
        }
    }
}

/// Deterministic size estimate: the number of lexemes in the PIPE encoding,
/// where a lexeme is a maximal alphanumeric run or a single non-alphanumeric,
/// non-whitespace character. Monotone in added rows and columns.
pub fn estimate_tokens(table: &Table) -> usize {
    let text = crate::encode::pipe_text_lossy(table);
    count_lexemes(&text)
}

pub(crate) fn count_lexemes(text: &str) -> usize {
    let mut count = 0usize;
    let mut in_word = false;
    for c in text.chars() {
        if c.is_alphanumeric() {
            if !in_word {
                count += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                count += 1;
            }
        }
    }
    count
}
