//! Text encodings of tables: PIPE (the prompt format), HTML, TSV, Markdown.
//!
//! PIPE is the canonical prompt encoding:
//!
//! ```text
//! table caption : 1972 vfl season.
//! col : home team | home team score | away team
//! row 1 : st kilda | 13.12 (90) | melbourne
//! ```
//!
//! Lines are LF-separated with single spaces around `:` and `|`, and there is
//! no trailing newline. `decode_pipe` is the exact inverse on delimiter-free
//! tables; row indices in the source are ignored (position is authoritative).

use std::sync::LazyLock;

use regex::Regex;

use crate::table::{CellValue, Table, TableError};

const PIPE_SEP: &str = " | ";

/// Rejects text that would corrupt the PIPE framing: an embedded ` | `
/// delimiter, a newline, or a trailing ` |` (which would shift the delimiter
/// scan one byte early when the separator is appended).
fn check_pipe_safe(text: &str) -> Result<(), TableError> {
    if text.contains(PIPE_SEP) || text.contains('\n') || text.ends_with(" |") {
        return Err(TableError::DelimiterCollision {
            text: text.to_string(),
        });
    }
    Ok(())
}

pub fn encode_pipe(table: &Table) -> Result<String, TableError> {
    for name in table.header() {
        check_pipe_safe(name)?;
    }
    for row in table.rows() {
        for cell in row {
            check_pipe_safe(cell.raw())?;
        }
    }
    if let Some(caption) = table.caption() {
        if caption.contains('\n') {
            return Err(TableError::DelimiterCollision {
                text: caption.to_string(),
            });
        }
    }
    Ok(pipe_text_lossy(table))
}

/// PIPE rendering without the delimiter-collision check. Used for size
/// estimation, where an estimate of a colliding table is still meaningful.
pub(crate) fn pipe_text_lossy(table: &Table) -> String {
    let mut out = String::new();
    if let Some(caption) = table.caption() {
        out.push_str("table caption : ");
        out.push_str(caption);
        out.push('\n');
    }
    out.push_str("col : ");
    out.push_str(&table.header().join(PIPE_SEP));
    for (i, row) in table.rows().iter().enumerate() {
        out.push('\n');
        out.push_str(&format!("row {} : ", i + 1));
        let cells: Vec<&str> = row.iter().map(CellValue::raw).collect();
        out.push_str(&cells.join(PIPE_SEP));
    }
    out
}

static ROW_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^row (\d+) : (.*)$").unwrap());

pub fn decode_pipe(text: &str) -> Result<Table, TableError> {
    let mut caption = None;
    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<CellValue>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if header.is_none() {
            if let Some(rest) = line.strip_prefix("table caption : ") {
                if caption.is_some() {
                    return Err(TableError::ParseError {
                        line: line_no,
                        message: "duplicate caption line".into(),
                    });
                }
                caption = Some(rest.to_string());
                continue;
            }
            if let Some(rest) = line.strip_prefix("col : ") {
                header = Some(rest.split(PIPE_SEP).map(str::to_string).collect());
                continue;
            }
            return Err(TableError::ParseError {
                line: line_no,
                message: format!("expected caption or header line, got {line:?}"),
            });
        }
        let Some(caps) = ROW_LINE.captures(line) else {
            return Err(TableError::ParseError {
                line: line_no,
                message: format!("malformed row line: {line:?}"),
            });
        };
        let cells: Vec<CellValue> = caps[2].split(PIPE_SEP).map(CellValue::new).collect();
        let expected = header.as_ref().map(Vec::len).unwrap_or(0);
        if cells.len() != expected {
            return Err(TableError::RaggedRow {
                row: rows.len() + 1,
                expected,
                got: cells.len(),
            });
        }
        rows.push(cells);
    }
    let Some(header) = header else {
        return Err(TableError::ParseError {
            line: 1,
            message: "missing header line".into(),
        });
    };
    Table::from_cells(caption, header, rows)
}

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn encode_html(table: &Table) -> Result<String, TableError> {
    let mut out = String::from("<table>");
    if let Some(caption) = table.caption() {
        out.push_str(&format!("\n<caption>{}</caption>", html_escape(caption)));
    }
    out.push_str("\n<tr>");
    for name in table.header() {
        out.push_str(&format!("<th>{}</th>", html_escape(name)));
    }
    out.push_str("</tr>");
    for row in table.rows() {
        out.push_str("\n<tr>");
        for cell in row {
            out.push_str(&format!("<td>{}</td>", html_escape(cell.raw())));
        }
        out.push_str("</tr>");
    }
    out.push_str("\n</table>");
    Ok(out)
}

/// Tab-separated values: one header line, one line per row. The caption is
/// not representable in TSV and is omitted.
pub fn encode_tsv(table: &Table) -> Result<String, TableError> {
    let check = |text: &str| {
        if text.contains('\t') || text.contains('\n') {
            Err(TableError::DelimiterCollision {
                text: text.to_string(),
            })
        } else {
            Ok(())
        }
    };
    for name in table.header() {
        check(name)?;
    }
    let mut out = table.header().join("\t");
    for row in table.rows() {
        for cell in row {
            check(cell.raw())?;
        }
        out.push('\n');
        let cells: Vec<&str> = row.iter().map(CellValue::raw).collect();
        out.push_str(&cells.join("\t"));
    }
    Ok(out)
}

fn markdown_escape(s: &str) -> String {
    s.replace('|', "\\|")
}

pub fn encode_markdown(table: &Table) -> Result<String, TableError> {
    for name in table.header() {
        if name.contains('\n') {
            return Err(TableError::DelimiterCollision {
                text: name.to_string(),
            });
        }
    }
    let mut out = String::from("| ");
    out.push_str(
        &table
            .header()
            .iter()
            .map(|h| markdown_escape(h))
            .collect::<Vec<_>>()
            .join(" | "),
    );
    out.push_str(" |\n| ");
    out.push_str(&vec!["---"; table.n_cols()].join(" | "));
    out.push_str(" |");
    for row in table.rows() {
        out.push_str("\n| ");
        for cell in row {
            if cell.raw().contains('\n') {
                return Err(TableError::DelimiterCollision {
                    text: cell.raw().to_string(),
                });
            }
        }
        out.push_str(
            &row.iter()
                .map(|c| markdown_escape(c.raw()))
                .collect::<Vec<_>>()
                .join(" | "),
        );
        out.push_str(" |");
    }
    Ok(out)
}
