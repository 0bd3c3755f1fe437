//! Pipe-table rendering and the matching strict parser.
//!
//! Rendering: a caption line, `| h1 | h2 |`, `| --- | --- |`, then one line
//! per row. Every cell is padded with exactly one space on each side, `|`
//! inside a cell becomes `\|`, and line breaks become a single space. The
//! parser inverts this exactly (so cell-internal whitespace survives).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTable {
    pub caption: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn validate(&self) -> Result<()> {
        if self.header.is_empty() {
            return Err(Error::EmptyHeader);
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.header.len() {
                return Err(Error::RaggedTable {
                    row: i,
                    expected: self.header.len(),
                    got: row.len(),
                });
            }
        }
        Ok(())
    }
}

fn flatten_breaks(s: &str) -> String {
    s.replace("\r\n", " ").replace(['\n', '\r'], " ")
}

fn escape_cell(s: &str) -> String {
    flatten_breaks(s).replace('|', "\\|")
}

fn render_row(cells: &[String]) -> String {
    let mut line = String::from("|");
    for c in cells {
        line.push(' ');
        line.push_str(&escape_cell(c));
        line.push_str(" |");
    }
    line
}

pub fn table_to_markdown(table: &RawTable) -> Result<String> {
    table.validate()?;
    let mut lines = Vec::with_capacity(table.rows.len() + 3);
    lines.push(flatten_breaks(&table.caption));
    lines.push(render_row(&table.header));
    lines.push(render_row(&vec!["---".to_string(); table.header.len()]));
    for row in &table.rows {
        lines.push(render_row(row));
    }
    Ok(lines.join("\n"))
}

fn split_row(line: &str) -> Option<Vec<String>> {
    let inner = line.strip_prefix('|')?;
    let mut cells = Vec::new();
    let mut cur = String::new();
    let mut chars = inner.chars().peekable();
    let mut closed = false;
    while let Some(c) = chars.next() {
        match c {
            '\\' if chars.peek() == Some(&'|') => {
                chars.next();
                cur.push('|');
            }
            '|' => {
                cells.push(std::mem::take(&mut cur));
                closed = true;
                continue;
            }
            _ => cur.push(c),
        }
        closed = false;
    }
    if !closed || !cur.is_empty() {
        return None;
    }
    cells
        .into_iter()
        .map(|c| {
            c.strip_prefix(' ')
                .and_then(|c| c.strip_suffix(' '))
                .map(str::to_string)
        })
        .collect()
}

fn is_separator(cells: &[String]) -> bool {
    cells.iter().all(|c| {
        let t = c.trim();
        let t = t.strip_prefix(':').unwrap_or(t);
        let t = t.strip_suffix(':').unwrap_or(t);
        !t.is_empty() && t.chars().all(|ch| ch == '-')
    })
}

/// Parses a pipe table. A first line that does not start with `|` is the
/// caption; otherwise the caption is empty.
pub fn parse_markdown_table(md: &str) -> std::result::Result<RawTable, String> {
    let mut lines: Vec<&str> = md.split('\n').collect();
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    let caption = match lines.first() {
        Some(first) if !first.starts_with('|') => {
            let c = first.to_string();
            lines.remove(0);
            c
        }
        _ => String::new(),
    };
    if lines.len() < 2 {
        return Err("expected a header row and a separator row".into());
    }
    let header = split_row(lines[0]).ok_or("malformed header row")?;
    if header.is_empty() {
        return Err("empty header".into());
    }
    let sep = split_row(lines[1]).ok_or("malformed separator row")?;
    if sep.len() != header.len() || !is_separator(&sep) {
        return Err("missing or mismatched separator row".into());
    }
    let mut rows = Vec::new();
    for (i, line) in lines[2..].iter().enumerate() {
        let row = split_row(line).ok_or_else(|| format!("malformed data row {i}"))?;
        if row.len() != header.len() {
            return Err(format!(
                "data row {i} has {} cells, header has {}",
                row.len(),
                header.len()
            ));
        }
        rows.push(row);
    }
    Ok(RawTable {
        caption,
        header,
        rows,
    })
}
