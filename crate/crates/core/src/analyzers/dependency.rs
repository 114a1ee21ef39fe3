use super::PosTag;

/// Verb-anchored relation indicator.
///
/// Every verb is marked, together with the nearest nominal to its left
/// (subject) and the nearest nominal to its right (object). Everything else
/// is 0. No verb means no relations.
pub fn score_dependency(tags: &[PosTag]) -> Vec<u8> {
    let mut out = vec![0u8; tags.len()];
    for (i, tag) in tags.iter().enumerate() {
        if *tag != PosTag::Verb {
            continue;
        }
        out[i] = 1;
        if let Some(s) = tags[..i].iter().rposition(|t| t.is_nominal()) {
            out[s] = 1;
        }
        if let Some(o) = tags[i + 1..].iter().position(|t| t.is_nominal()) {
            out[i + 1 + o] = 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzers::PosLexicon;
    use proptest::prelude::*;
    use PosTag::*;

    #[test]
    fn subject_verb_object() {
        assert_eq!(score_dependency(&[Noun, Verb, Noun]), [1, 1, 1]);
        let l = PosLexicon::bundled();
        assert_eq!(score_dependency(&l.tag_all(&["dogs", "chase", "cats"])), [1, 1, 1]);
    }

    #[test]
    fn no_verb_no_relation() {
        assert_eq!(score_dependency(&[Det, Adj, Noun]), [0, 0, 0]);
    }

    #[test]
    fn lone_verb() {
        assert_eq!(score_dependency(&[Verb]), [1]);
    }

    #[test]
    fn nearest_nouns_only() {
        // the big dog quickly chased the small cat and the mouse
        let tags = [Det, Adj, Noun, Adv, Verb, Det, Adj, Noun, Cconj, Det, Noun];
        assert_eq!(score_dependency(&tags), [0, 0, 1, 0, 1, 0, 0, 1, 0, 0, 0]);
        // two verbs share a noun between them
        assert_eq!(score_dependency(&[Noun, Verb, Noun, Verb, Pron]), [1, 1, 1, 1, 0]);
    }

    fn any_tag() -> impl Strategy<Value = PosTag> {
        prop::sample::select(vec![Noun, Propn, Verb, Adj, Adv, Det, Pron, Punct, X])
    }

    proptest! {
        #[test]
        fn binary_and_aligned(tags in proptest::collection::vec(any_tag(), 0..30)) {
            let d = score_dependency(&tags);
            prop_assert_eq!(d.len(), tags.len());
            prop_assert!(d.iter().all(|&b| b <= 1));
            for (t, b) in tags.iter().zip(&d) {
                if *t == Verb { prop_assert_eq!(*b, 1); }
                if *b == 1 { prop_assert!(*t == Verb || t.is_nominal()); }
            }
        }
    }
}
