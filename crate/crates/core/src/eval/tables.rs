//! Tab-separated score, label and operating-point files.

use super::{Label, LabelTable, ScoreTable};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-empty lines split into exactly two tab-separated fields, with 1-based line numbers.
fn two_columns<'a>(path: &'a Path, text: &'a str) -> impl Iterator<Item = Result<(usize, &'a str, &'a str)>> + 'a {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(move |(i, line)| {
            let mut cols = line.split('\t');
            match (cols.next(), cols.next(), cols.next()) {
                (Some(a), Some(b), None) if !a.is_empty() => Ok((i + 1, a, b.trim_end_matches('\r'))),
                _ => Err(Error::format(path, format!("line {}: expected two tab-separated fields", i + 1))),
            }
        })
}

pub fn read_scores(path: &Path) -> Result<ScoreTable> {
    let text = read_text(path)?;
    let mut table = ScoreTable::new();
    for row in two_columns(path, &text) {
        let (line, id, value) = row?;
        let score: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::format(path, format!("line {line}: '{value}' is not a number")))?;
        table
            .insert(id, score)
            .map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
    }
    Ok(table)
}

/// Scores are written with the shortest decimal form that parses back exactly.
pub fn write_scores(path: &Path, table: &ScoreTable) -> Result<()> {
    let mut out = String::new();
    for (id, s) in table.iter() {
        let _ = writeln!(out, "{id}\t{s}");
    }
    write_text(path, &out)
}

pub fn read_labels(path: &Path) -> Result<LabelTable> {
    let text = read_text(path)?;
    let mut table = LabelTable::new();
    for row in two_columns(path, &text) {
        let (line, id, value) = row?;
        let label: Label = value
            .parse()
            .map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
        table
            .insert(id, label)
            .map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
    }
    Ok(table)
}

pub fn write_labels(path: &Path, table: &LabelTable) -> Result<()> {
    let mut out = String::new();
    for (id, l) in table.iter() {
        let _ = writeln!(out, "{id}\t{l}");
    }
    write_text(path, &out)
}

/// `threshold\tfar\tfrr` lines.
pub fn write_operating_points(path: &Path, points: &[(f64, f64, f64)]) -> Result<()> {
    let mut out = String::new();
    for (t, far, frr) in points {
        let _ = writeln!(out, "{t}\t{far}\t{frr}");
    }
    write_text(path, &out)
}
