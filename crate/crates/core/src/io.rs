//! Text formats shared by the CSV writers and readers.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Formats a float with 9 significant digits, `%g` style.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let s = if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // rounding can carry into a new digit (9.99999999e-1 -> 1.00000000); fine for parsing
        trim_zeros(&s)
    } else {
        let s = format!("{x:.8e}");
        match s.split_once('e') {
            Some((mant, e)) => format!("{}e{}", trim_zeros(mant), e),
            None => s,
        }
    };
    s
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Comment header block: one `# key = value` line per entry.
pub fn comment_header(meta: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        for (i, line) in v.lines().enumerate() {
            if i == 0 {
                let _ = writeln!(out, "# {k} = {line}");
            } else {
                let _ = writeln!(out, "#   {line}");
            }
        }
    }
    out
}

/// Parsed numeric table with its `#` comment metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Reads a comma-separated numeric table with one header line and `#` comments.
pub fn parse_table(text: &str, columns: usize) -> Result<Table> {
    let mut table = Table::default();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());

    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                table.meta.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
    }

    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if table.header.is_empty() {
            table.header = record.iter().map(str::to_string).collect();
            if table.header.len() != columns {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {columns} header columns, found {}", table.header.len()),
                });
            }
            continue;
        }
        if record.len() != columns {
            return Err(Error::Parse {
                line,
                message: format!("expected {columns} columns, found {}", record.len()),
            });
        }
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("not a number: '{f}'"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        table.rows.push(row);
    }
    if table.header.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "missing header line".into(),
        });
    }
    Ok(table)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}
