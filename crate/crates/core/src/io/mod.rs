//! Embedding input, score output and model persistence.

pub mod model_file;
pub mod npy;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::EmbeddingSet;
use crate::scoring::ScoreResult;

pub use model_file::{load_model, model_from_bytes, model_to_bytes, save_model};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Npy,
    Csv,
}

impl Format {
    /// Guesses the format from the file extension (`.npy`, else CSV).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("npy") => Format::Npy,
            _ => Format::Csv,
        }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn parse_csv_rows(text: &str, what: &str) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv {
            row: line,
            reason: e.to_string(),
        })?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push((line + 1, v)),
            // Only the first line may be a header.
            Err(_) if line == 0 => {}
            Err(e) => {
                return Err(Error::Csv {
                    row: rows.len(),
                    reason: format!("{what} line {}: {e}", line + 1),
                })
            }
        }
    }
    Ok(rows)
}

/// Parses a CSV embedding matrix: one row per observation, optional header.
pub fn parse_embeddings_csv(text: &str) -> Result<(Vec<f64>, usize)> {
    let rows = parse_csv_rows(text, "embedding")?;
    let dim = rows.first().map(|r| r.1.len()).ok_or(Error::EmptySet)?;
    let mut data = Vec::with_capacity(rows.len() * dim);
    for (i, (line, r)) in rows.iter().enumerate() {
        if r.len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "row {i} (line {line}) has {} columns, expected {dim}",
                r.len()
            )));
        }
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("row {i} (line {line}), column {j}")));
        }
        data.extend_from_slice(r);
    }
    Ok((data, dim))
}

/// Parses a single-column CSV of non-negative integer labels, optional header.
pub fn parse_labels_csv(text: &str) -> Result<Vec<u32>> {
    let rows = parse_csv_rows(text, "label")?;
    rows.iter()
        .enumerate()
        .map(|(i, (line, r))| match r[..] {
            [v] if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => Ok(v as u32),
            _ => Err(Error::Csv {
                row: i,
                reason: format!("line {line}: expected one non-negative integer label"),
            }),
        })
        .collect()
}

/// Reads embeddings (and optionally labels) in the given format.
pub fn read_embeddings(path: &Path, labels: Option<&Path>, format: Format) -> Result<EmbeddingSet> {
    let (data, dim) = match format {
        Format::Npy => {
            let (v, _, cols) = npy::read_matrix(&read_bytes(path)?)?;
            (v, cols)
        }
        Format::Csv => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_embeddings_csv(&text)?
        }
    };
    let labels = match labels {
        None => None,
        Some(lp) => Some(match Format::from_path(lp) {
            Format::Npy => npy::read_labels(&read_bytes(lp)?)?,
            Format::Csv => parse_labels_csv(&fs::read_to_string(lp).map_err(|e| Error::io(lp, e))?)?,
        }),
    };
    EmbeddingSet::new(data, dim, labels)
}

/// Writes embeddings as `f8` NPY plus an `i8` label NPY when a path is given.
pub fn write_embeddings_npy(path: &Path, labels_path: Option<&Path>, set: &EmbeddingSet) -> Result<()> {
    write_atomic(path, &npy::write_matrix_f8(set.data(), set.len(), set.dim()))?;
    if let (Some(lp), Some(labels)) = (labels_path, set.labels()) {
        write_atomic(lp, &npy::write_labels_i8(labels))?;
    }
    Ok(())
}

pub fn write_embeddings_csv(path: &Path, set: &EmbeddingSet) -> Result<()> {
    let mut out = String::new();
    for row in set.rows() {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Writes embeddings in `format`; NPY output is `f8`.
pub fn write_embeddings(path: &Path, set: &EmbeddingSet, format: Format) -> Result<()> {
    match format {
        Format::Npy => write_embeddings_npy(path, None, set),
        Format::Csv => write_embeddings_csv(path, set),
    }
}

/// Writes labels as `i8` NPY or a single-column CSV, chosen by extension.
pub fn write_labels(path: &Path, labels: &[u32]) -> Result<()> {
    match Format::from_path(path) {
        Format::Npy => write_atomic(path, &npy::write_labels_i8(labels)),
        Format::Csv => {
            let mut out = String::from("label\n");
            for l in labels {
                out.push_str(&format!("{l}\n"));
            }
            write_atomic(path, out.as_bytes())
        }
    }
}

pub const SCORES_HEADER: &str = "index,score,decision";

/// `index,score,decision` lines; scores print in shortest round-trip form, `inf` for the sentinel.
pub fn format_scores(results: &[ScoreResult]) -> String {
    let mut out = String::from(SCORES_HEADER);
    out.push('\n');
    for (i, r) in results.iter().enumerate() {
        let decision = if r.is_id { "ID" } else { "OOD" };
        out.push_str(&format!("{i},{},{decision}\n", r.score));
    }
    out
}

pub fn write_scores(path: &Path, results: &[ScoreResult]) -> Result<()> {
    write_atomic(path, format_scores(results).as_bytes())
}

/// Parses a score CSV back into `(score, is_id)` pairs in index order.
pub fn parse_scores(text: &str) -> Result<Vec<(f64, bool)>> {
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |reason: String| Error::Csv {
            row: out.len(),
            reason: format!("line {}: {reason}", line_no + 1),
        };
        let [idx, score, decision] = fields[..] else {
            return Err(bad("expected three fields".into()));
        };
        if idx.parse::<usize>().ok() != Some(out.len()) {
            return Err(bad(format!("index {idx} out of order")));
        }
        let score: f64 = score.parse().map_err(|e| bad(format!("{e}")))?;
        let is_id = match decision {
            "ID" => true,
            "OOD" => false,
            other => return Err(bad(format!("unknown decision {other:?}"))),
        };
        out.push((score, is_id));
    }
    Ok(out)
}
