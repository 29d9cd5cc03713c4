//! Artifact writing and parsing helpers. All files land atomically via a
//! temp file in the destination directory followed by a rename.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::Value;

use crate::Failure;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let err = |e: std::io::Error| {
        Failure::runtime(format!("cannot write {}: {e}", path.display()))
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(bytes).map_err(err)?;
    tmp.persist(path)
        .map_err(|e| err(e.error))
        .map(|_| ())
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::runtime(format!("cannot render {}: {e}", path.display())))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::config(format!("{} is not valid JSON: {e}", path.display())))
}

/// Splits a CSV produced by this tool into header fields and data rows.
pub fn parse_csv(text: &str, path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), Failure> {
    let mut lines = text.lines().filter(|l| !l.is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Failure::config(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Failure::config(format!(
                        "{} row {}: `{f}` is not a number",
                        path.display(),
                        i + 2
                    ))
                })
            })
            .collect::<Result<_, _>>()?;
        if row.len() != header.len() {
            return Err(Failure::config(format!(
                "{} row {} has {} fields, header has {}",
                path.display(),
                i + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}
