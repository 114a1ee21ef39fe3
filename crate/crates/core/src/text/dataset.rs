use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    Teacher,
    Mock,
    Manual,
}

/// One distillation example: a prompt and the teacher's response to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptResponsePair {
    pub prompt: String,
    pub response: String,
    pub source: PairSource,
    pub template_id: Option<String>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord { path: String, line: usize, reason: String },
}

/// Writes one JSON object per line.
pub fn save_dataset(pairs: &[PromptResponsePair], path: &Path) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for p in pairs {
        serde_json::to_writer(&mut w, p).map_err(|e| io_err(e.into()))?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads a dataset written by [`save_dataset`]. Blank lines are skipped;
/// line numbers in errors are 1-based.
pub fn load_dataset(path: &Path) -> Result<Vec<PromptResponsePair>, DatasetError> {
    let io_err = |source| DatasetError::Io { path: path.display().to_string(), source };
    let reader = io::BufReader::new(fs::File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let pair = serde_json::from_str(&line).map_err(|e| DatasetError::MalformedRecord {
            path: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(pair);
    }
    Ok(out)
}
