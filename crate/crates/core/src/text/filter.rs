use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{tokenize, PromptResponsePair};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterSettings {
    /// Terms matched case-insensitively against whole tokens. A multi-word
    /// term matches a contiguous token run.
    pub blocklist: Vec<String>,
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self { blocklist: Vec::new(), min_tokens: 3, max_tokens: 256 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Prompt or response has no tokens at all.
    Empty,
    Blocklist,
    TooShort,
    TooLong,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub pair: PromptResponsePair,
    pub reason: RejectReason,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterOutcome {
    pub kept: Vec<PromptResponsePair>,
    pub rejected: Vec<Rejection>,
}

/// Partitions `pairs` into kept and rejected. Checks run in order: empty,
/// blocklist, length bounds, exact duplicate of an earlier kept response.
pub fn filter_responses(pairs: &[PromptResponsePair], settings: &FilterSettings) -> FilterOutcome {
    let terms: Vec<Vec<String>> =
        settings.blocklist.iter().map(|t| tokenize(t, true)).filter(|t| !t.is_empty()).collect();

    let mut seen: HashSet<&str> = HashSet::new();
    let mut out = FilterOutcome::default();
    for pair in pairs {
        let toks = tokenize(&pair.response, true);
        let verdict = if toks.is_empty() || tokenize(&pair.prompt, false).is_empty() {
            Some((RejectReason::Empty, None))
        } else if let Some(term) = terms.iter().find(|t| toks.windows(t.len()).any(|w| w == t.as_slice())) {
            Some((RejectReason::Blocklist, Some(term.join(" "))))
        } else if toks.len() < settings.min_tokens {
            Some((RejectReason::TooShort, Some(toks.len().to_string())))
        } else if toks.len() > settings.max_tokens {
            Some((RejectReason::TooLong, Some(toks.len().to_string())))
        } else if seen.contains(pair.response.as_str()) {
            Some((RejectReason::Duplicate, None))
        } else {
            None
        };
        match verdict {
            Some((reason, detail)) => out.rejected.push(Rejection { pair: pair.clone(), reason, detail }),
            None => {
                seen.insert(&pair.response);
                out.kept.push(pair.clone());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::PairSource;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn pair(r: &str) -> PromptResponsePair {
        PromptResponsePair {
            prompt: "p".into(),
            response: r.into(),
            source: PairSource::Mock,
            template_id: None,
            created_at: Utc.timestamp_opt(0, 0).unwrap(),
        }
    }

    fn settings(block: &[&str], min: usize, max: usize) -> FilterSettings {
        FilterSettings { blocklist: block.iter().map(|s| s.to_string()).collect(), min_tokens: min, max_tokens: max }
    }

    #[test]
    fn blocklist_match() {
        let out = filter_responses(&[pair("buy spam now")], &settings(&["spam"], 1, 10));
        assert!(out.kept.is_empty());
        assert_eq!(out.rejected[0].reason, RejectReason::Blocklist);
        assert_eq!(out.rejected[0].detail.as_deref(), Some("spam"));
    }

    #[test]
    fn blocklist_is_case_insensitive_and_whole_token() {
        let s = settings(&["Spam"], 1, 10);
        assert_eq!(filter_responses(&[pair("SPAM!")], &s).rejected.len(), 1);
        assert_eq!(filter_responses(&[pair("spammer here ok")], &s).kept.len(), 1);
        let s = settings(&["bad word"], 1, 10);
        assert_eq!(filter_responses(&[pair("a bad word here")], &s).rejected.len(), 1);
        assert_eq!(filter_responses(&[pair("a bad, word")], &s).kept.len(), 1);
    }

    #[test]
    fn duplicate_rejected() {
        let out = filter_responses(&[pair("same reply here"), pair("same reply here")], &settings(&[], 1, 10));
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.rejected[0].reason, RejectReason::Duplicate);
    }

    #[test]
    fn length_bounds() {
        let s = settings(&[], 5, 6);
        assert_eq!(filter_responses(&[pair("one two three")], &s).rejected[0].reason, RejectReason::TooShort);
        assert_eq!(filter_responses(&[pair("a b c d e f g")], &s).rejected[0].reason, RejectReason::TooLong);
        assert_eq!(filter_responses(&[pair("a b c d e")], &s).kept.len(), 1);
    }

    #[test]
    fn empty_sides_rejected_even_with_zero_minimum() {
        let s = settings(&[], 0, 10);
        assert_eq!(filter_responses(&[pair("")], &s).rejected[0].reason, RejectReason::Empty);
        let mut p = pair("fine");
        p.prompt = " ".into();
        assert_eq!(filter_responses(&[p], &s).rejected[0].reason, RejectReason::Empty);
    }

    #[test]
    fn rejected_duplicates_do_not_shadow_later_pairs() {
        // A response rejected for length never enters the dedup set.
        let out = filter_responses(&[pair("x"), pair("x")], &settings(&[], 2, 10));
        assert!(out.rejected.iter().all(|r| r.reason == RejectReason::TooShort));
    }

    proptest! {
        #[test]
        fn partitions_input(responses in proptest::collection::vec("(spam|ok|fine|word| |!){0,8}", 0..12)) {
            let pairs: Vec<_> = responses.iter().map(|r| pair(r)).collect();
            let out = filter_responses(&pairs, &settings(&["spam"], 2, 6));
            prop_assert_eq!(out.kept.len() + out.rejected.len(), pairs.len());
            for k in &out.kept {
                prop_assert!(!tokenize(&k.response, true).iter().any(|t| t == "spam"));
                prop_assert!(!k.response.trim().is_empty());
            }
        }
    }
}
