use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io;
use std::path::Path;
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[([A-Za-z_][A-Za-z0-9_]*)\]").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    Plain,
    Adversarial,
    Style,
}

/// A prompt pattern with `[name]` placeholders such as `[topic]`, `[event]`,
/// `[platform]` or `[style]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub pattern: String,
    pub kind: TemplateKind,
}

impl PromptTemplate {
    /// Distinct placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        PLACEHOLDER
            .captures_iter(&self.pattern)
            .map(|c| c.get(1).unwrap().as_str())
            .filter(|n| seen.insert(*n))
            .collect()
    }
}

/// Placeholder name → candidate values.
pub type SlotValues = BTreeMap<String, Vec<String>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedPrompt {
    pub text: String,
    pub template_id: String,
    pub kind: TemplateKind,
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("no values for placeholder [{0}]")]
    MissingSlot(String),
    #[error("duplicate template id {0:?}")]
    DuplicateId(String),
    #[error("template {0:?} has no placeholder but is not of kind plain")]
    NoPlaceholder(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}:{line}: {reason}")]
    Malformed { path: String, line: usize, reason: String },
}

pub fn validate_templates(templates: &[PromptTemplate]) -> Result<(), TemplateError> {
    let mut ids = HashSet::new();
    for t in templates {
        if !ids.insert(t.id.as_str()) {
            return Err(TemplateError::DuplicateId(t.id.clone()));
        }
        if t.kind != TemplateKind::Plain && t.placeholders().is_empty() {
            return Err(TemplateError::NoPlaceholder(t.id.clone()));
        }
    }
    Ok(())
}

/// Expands every template over the Cartesian product of its placeholders'
/// values. Expansion order is template order, then odometer order over
/// placeholders (last placeholder varies fastest); `seed` shuffles only the
/// final list.
pub fn generate_prompts(
    templates: &[PromptTemplate],
    slots: &SlotValues,
    seed: u64,
) -> Result<Vec<GeneratedPrompt>, TemplateError> {
    validate_templates(templates)?;
    let mut out = Vec::new();
    for t in templates {
        let names = t.placeholders();
        let mut values = Vec::with_capacity(names.len());
        for n in &names {
            match slots.get(*n) {
                Some(v) if !v.is_empty() => values.push(v),
                _ => return Err(TemplateError::MissingSlot(n.to_string())),
            }
        }
        let total: usize = values.iter().map(|v| v.len()).product();
        for n in 0..total {
            // mixed-radix decode of n; last placeholder is the least significant digit
            let mut rest = n;
            let mut digit = vec![0usize; names.len()];
            for k in (0..names.len()).rev() {
                digit[k] = rest % values[k].len();
                rest /= values[k].len();
            }
            let text = PLACEHOLDER.replace_all(&t.pattern, |c: &regex::Captures| {
                let k = names.iter().position(|n| *n == &c[1]).unwrap();
                values[k][digit[k]].clone()
            });
            out.push(GeneratedPrompt { text: text.into_owned(), template_id: t.id.clone(), kind: t.kind });
        }
    }
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(out)
}

fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, TemplateError> {
    let text =
        fs::read_to_string(path).map_err(|source| TemplateError::Io { path: path.display().to_string(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| TemplateError::Malformed {
                path: path.display().to_string(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Template file: one `{"id", "pattern", "kind"}` object per line.
pub fn load_templates(path: &Path) -> Result<Vec<PromptTemplate>, TemplateError> {
    let templates = read_records(path)?;
    validate_templates(&templates)?;
    Ok(templates)
}

pub fn save_templates(templates: &[PromptTemplate], path: &Path) -> Result<(), TemplateError> {
    let mut s = String::new();
    for t in templates {
        s.push_str(&serde_json::to_string(t).expect("template serializes"));
        s.push('\n');
    }
    fs::write(path, s).map_err(|source| TemplateError::Io { path: path.display().to_string(), source })
}

#[derive(Deserialize)]
struct SlotRecord {
    name: String,
    values: Vec<String>,
}

/// Slot file: one `{"name": "topic", "values": [...]}` object per line.
/// Repeated names append to the same list.
pub fn load_slots(path: &Path) -> Result<SlotValues, TemplateError> {
    let mut slots = SlotValues::new();
    for r in read_records::<SlotRecord>(path)? {
        slots.entry(r.name).or_default().extend(r.values);
    }
    Ok(slots)
}
