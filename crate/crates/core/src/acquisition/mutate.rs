use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationStrategy {
    /// Append a premise that contradicts itself or the question.
    Conflict,
    /// Append an instruction stacking several constraints.
    Nuance,
    /// Prefix a platform-user persona.
    Style,
}

impl FromStr for MutationStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "conflict" => Ok(Self::Conflict),
            "nuance" => Ok(Self::Nuance),
            "style" => Ok(Self::Style),
            _ => Err(format!("unknown mutation strategy {s:?} (expected conflict, nuance or style)")),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MutationError {
    #[error("style mutation requires a style tag")]
    MissingStyleTag,
}

const CONFLICT_CLAUSES: &[&str] = &[
    "Some posts claim the exact opposite is true; reconcile both accounts.",
    "Early reports said this never happened, yet many users insist it did. Which is right?",
    "Assume half the replies praise it and half call it a hoax; explain the disagreement.",
    "One viral thread says it is over, another says it is just starting. Address both.",
];

const NUANCE_CLAUSES: &[&str] = &[
    "Answer in under 60 words, mention at least two viewpoints, and flag anything uncertain.",
    "Keep it casual, include one concrete example, and avoid hashtags.",
    "Separate facts from rumours, and say which sources people trust most.",
    "Cover the reaction from both supporters and critics, and note how it changed over time.",
];

/// Deterministic prompt augmentation. `seed` picks the clause for the
/// conflict and nuance strategies; the style prefix is fixed.
pub fn mutate_adversarial(
    prompt: &str,
    strategy: MutationStrategy,
    style_tag: Option<&str>,
    seed: u64,
) -> Result<String, MutationError> {
    let pick = |clauses: &[&'static str]| clauses[(seed % clauses.len() as u64) as usize];
    match strategy {
        MutationStrategy::Conflict => Ok(format!("{prompt} {}", pick(CONFLICT_CLAUSES))),
        MutationStrategy::Nuance => Ok(format!("{prompt} {}", pick(NUANCE_CLAUSES))),
        MutationStrategy::Style => match style_tag.map(str::trim).filter(|t| !t.is_empty()) {
            Some(tag) => Ok(format!("In the style of a {tag} user: {prompt}")),
            None => Err(MutationError::MissingStyleTag),
        },
    }
}
