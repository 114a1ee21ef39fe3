use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MaskError, MaskVector};

/// One line of a mask file: bits as a `0`/`1` string aligned with the
/// example's tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub index: usize,
    pub bits: String,
    pub probabilities: Vec<f64>,
}

pub fn save_masks(path: &Path, masks: &[MaskVector]) -> Result<(), MaskError> {
    let io_err = |source| MaskError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for (index, m) in masks.iter().enumerate() {
        let rec = MaskRecord {
            index,
            bits: m.bits.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect(),
            probabilities: m.probabilities.clone(),
        };
        serde_json::to_writer(&mut w, &rec).map_err(|e| io_err(e.into()))?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_masks(path: &Path) -> Result<Vec<MaskVector>, MaskError> {
    let text = fs::read_to_string(path).map_err(|source| MaskError::Io { path: path.display().to_string(), source })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| MaskError::Malformed { path: path.display().to_string(), line: i + 1, reason };
        let rec: MaskRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if rec.index != out.len() {
            return Err(malformed(format!("expected index {}, found {}", out.len(), rec.index)));
        }
        let bits = rec
            .bits
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(malformed(format!("invalid bit {other:?}"))),
            })
            .collect::<Result<Vec<u8>, _>>()?;
        if bits.len() != rec.probabilities.len() {
            return Err(malformed(format!("{} bits but {} probabilities", bits.len(), rec.probabilities.len())));
        }
        out.push(MaskVector { bits, probabilities: rec.probabilities });
    }
    Ok(out)
}
