//! JSONL reading and writing with line-numbered schema errors.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::Instance;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: schema violation: {message}")]
    SchemaViolation { line: usize, message: String },
    #[error("line {line}: duplicate id {id}")]
    DuplicateId { line: usize, id: String },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Trajectory JSONL line. `token_count`, when present, overrides the
/// tokenizer for the length reward and token reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub id: String,
    pub task: String,
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count: Option<usize>,
}

/// Parses one JSON value per non-blank line, in order.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, IoError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| IoError::io(Path::new("<input>"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| IoError::SchemaViolation {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn load_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    read_jsonl(BufReader::new(file)).map_err(|e| match e {
        IoError::Io { source, .. } => IoError::io(path, source),
        other => other,
    })
}

/// Reads instances and rejects repeated ids.
pub fn read_dataset<R: BufRead>(reader: R) -> Result<Vec<Instance>, IoError> {
    let mut out: Vec<Instance> = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| IoError::io(Path::new("<input>"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: Instance = serde_json::from_str(&line).map_err(|e| IoError::SchemaViolation {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(inst.id.clone()) {
            return Err(IoError::DuplicateId { line: line_no, id: inst.id });
        }
        out.push(inst);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<Instance>, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    read_dataset(BufReader::new(file))
}

pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut w: W) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    write_jsonl(items, BufWriter::new(file)).map_err(|e| IoError::io(path, e))
}

/// Writes a report as pretty-printed JSON.
pub fn write_report<T: Serialize>(report: &T, path: &Path) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, report)
        .map_err(std::io::Error::from)
        .and_then(|_| w.write_all(b"\n"))
        .and_then(|_| w.flush())
        .map_err(|e| IoError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const VALID: &str = r#"{"id":"a1","task":{"category":"scenario","name":"AnomalyDetection","answer_kind":"boolean"},"question":"Is the spike anomalous?","series":[1.0,9.5,1.2],"ground_truth":"yes"}"#;

    #[test]
    fn empty_input_is_empty_dataset() {
        assert!(read_dataset("".as_bytes()).unwrap().is_empty());
        assert!(read_dataset("\n  \n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn one_record() {
        let data = read_dataset(VALID.as_bytes()).unwrap();
        assert_eq!(data.len(), 1);
        assert_eq!(data[0].series, vec![1.0, 9.5, 1.2]);
        assert!(data[0].expert_trajectory.is_none());
    }

    #[test]
    fn missing_ground_truth_reports_line() {
        let bad = VALID.replace(r#","ground_truth":"yes""#, "");
        let text = format!("{VALID}\n\n{bad}\n");
        match read_dataset(text.as_bytes()) {
            Err(IoError::SchemaViolation { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("ground_truth"), "{message}");
            }
            other => panic!("expected schema violation, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = format!("{VALID}\n{VALID}\n");
        assert!(matches!(read_dataset(text.as_bytes()), Err(IoError::DuplicateId { line: 2, .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let data = read_dataset(VALID.as_bytes()).unwrap();
        save_jsonl(&data, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), data);
        assert!(matches!(load_dataset(&dir.path().join("missing")), Err(IoError::Io { .. })));
    }
}
