use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::PromptTemplate;
use crate::text::{tokenize, FilterOutcome};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TemplateStats {
    pub accepted_count: usize,
    pub rejected_count: usize,
    pub mean_response_tokens: f64,
    /// Distinct response tokens over total response tokens.
    pub distinct_token_ratio: f64,
}

impl TemplateStats {
    pub fn acceptance_ratio(&self) -> Option<f64> {
        let n = self.accepted_count + self.rejected_count;
        (n > 0).then(|| self.accepted_count as f64 / n as f64)
    }
}

/// Per-template filter statistics keyed by template id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub templates: BTreeMap<String, TemplateStats>,
}

impl RefinementReport {
    /// Groups a filter outcome by the pairs' template ids. Pairs without a
    /// template id are ignored.
    pub fn from_filter(outcome: &FilterOutcome) -> Self {
        #[derive(Default)]
        struct Acc {
            accepted: usize,
            rejected: usize,
            tokens: usize,
            distinct: HashSet<String>,
        }
        let mut acc: BTreeMap<&str, Acc> = BTreeMap::new();
        let all = outcome.kept.iter().map(|p| (p, true)).chain(outcome.rejected.iter().map(|r| (&r.pair, false)));
        for (pair, accepted) in all {
            let Some(id) = pair.template_id.as_deref() else { continue };
            let a = acc.entry(id).or_default();
            if accepted {
                a.accepted += 1;
            } else {
                a.rejected += 1;
            }
            let toks = tokenize(&pair.response, true);
            a.tokens += toks.len();
            a.distinct.extend(toks);
        }
        let templates = acc
            .into_iter()
            .map(|(id, a)| {
                let n = a.accepted + a.rejected;
                let stats = TemplateStats {
                    accepted_count: a.accepted,
                    rejected_count: a.rejected,
                    mean_response_tokens: a.tokens as f64 / n as f64,
                    distinct_token_ratio: if a.tokens == 0 { 0.0 } else { a.distinct.len() as f64 / a.tokens as f64 },
                };
                (id.to_string(), stats)
            })
            .collect();
        Self { templates }
    }
}

/// Splits `templates` into (kept, dropped) by acceptance ratio against
/// `accept_floor` (inclusive). Templates without statistics are kept. If the
/// floor would drop every template, the one with the best ratio survives.
pub fn refine_templates(
    report: &RefinementReport,
    templates: &[PromptTemplate],
    accept_floor: f64,
) -> (Vec<PromptTemplate>, Vec<PromptTemplate>) {
    let ratio = |t: &PromptTemplate| report.templates.get(&t.id).and_then(TemplateStats::acceptance_ratio);
    let (mut kept, mut dropped): (Vec<_>, Vec<_>) =
        templates.iter().cloned().partition(|t| ratio(t).is_none_or(|r| r >= accept_floor));
    if kept.is_empty() && !dropped.is_empty() {
        // first template with the highest ratio
        let best =
            dropped.iter().enumerate().fold(0, |best, (i, t)| if ratio(t) > ratio(&dropped[best]) { i } else { best });
        kept.push(dropped.remove(best));
    }
    (kept, dropped)
}
