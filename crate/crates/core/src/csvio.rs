//! Plain CSV tables of floats, written at 17 significant digits so every
//! value reads back bit-identical.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CsvError {
    #[error("empty table")]
    Empty,
    #[error("line {line}: expected {expected} fields, found {got}")]
    Width {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: cannot parse '{field}' as a number")]
    Number { line: usize, field: String },
    #[error("unexpected header '{got}', expected '{expected}'")]
    Header { expected: String, got: String },
    #[error("{0}")]
    Invalid(String),
}

/// `{:.16e}`: one digit before the point plus sixteen after.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub fn write_table(header: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&fmt_num(*v));
        }
        out.push('\n');
    }
    out
}

/// Table with a trailing text column (used for flags).
pub fn write_table_with_tag(header: &[String], rows: &[(Vec<f64>, String)]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for (row, tag) in rows {
        for v in row {
            let _ = write!(out, "{},", fmt_num(*v));
        }
        out.push_str(tag);
        out.push('\n');
    }
    out
}

pub fn numbered_header(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}

/// Parse a header line plus numeric rows. Blank lines are skipped.
pub fn read_table(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), CsvError> {
    let (header, rows) = read_raw(text)?;
    let rows = rows
        .into_iter()
        .map(|(line, fields)| {
            fields
                .iter()
                .map(|f| parse_num(f, line))
                .collect::<Result<Vec<f64>, CsvError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((header, rows))
}

/// Like [`read_table`] but the last column is kept as text.
pub fn read_table_with_tag(text: &str) -> Result<(Vec<String>, Vec<(Vec<f64>, String)>), CsvError> {
    let (header, rows) = read_raw(text)?;
    let rows = rows
        .into_iter()
        .map(|(line, mut fields)| {
            let tag = fields.pop().unwrap_or_default();
            let nums = fields
                .iter()
                .map(|f| parse_num(f, line))
                .collect::<Result<Vec<f64>, CsvError>>()?;
            Ok((nums, tag))
        })
        .collect::<Result<Vec<_>, CsvError>>()?;
    Ok((header, rows))
}

fn read_raw(text: &str) -> Result<(Vec<String>, Vec<(usize, Vec<String>)>), CsvError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or(CsvError::Empty)?;
    let header: Vec<String> = head.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, line) in lines {
        let fields: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        if fields.len() != header.len() {
            return Err(CsvError::Width {
                line: i + 1,
                expected: header.len(),
                got: fields.len(),
            });
        }
        rows.push((i + 1, fields));
    }
    Ok((header, rows))
}

fn parse_num(field: &str, line: usize) -> Result<f64, CsvError> {
    field.parse::<f64>().map_err(|_| CsvError::Number {
        line,
        field: field.to_string(),
    })
}

/// Parse an inline comma-separated vector such as `1,0` or `[1, 0]`.
pub fn parse_inline_vector(text: &str) -> Result<Vec<f64>, CsvError> {
    let t = text.trim().trim_start_matches('[').trim_end_matches(']');
    if t.trim().is_empty() {
        return Ok(Vec::new());
    }
    t.split(',').map(|f| parse_num(f.trim(), 1)).collect()
}
