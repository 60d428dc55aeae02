use std::collections::BTreeSet;

use super::{AnnotatedSentence, ConsolidatedSentence, CorpusError, VaguenessClass};

/// Distinct annotators whose selections cover each token.
pub fn covering_annotators(s: &AnnotatedSentence) -> Vec<BTreeSet<&str>> {
    let mut cover = vec![BTreeSet::new(); s.tokens.len()];
    for sel in &s.word_selections {
        for slot in cover.iter_mut().take(sel.end).skip(sel.start) {
            slot.insert(sel.annotator_id.as_str());
        }
    }
    cover
}

/// A token is vague (1) when at least `threshold` distinct annotators'
/// spans cover it.
pub fn consolidate_word_labels(s: &AnnotatedSentence, threshold: usize) -> Vec<u8> {
    covering_annotators(s)
        .iter()
        .map(|who| u8::from(who.len() >= threshold.max(1)))
        .collect()
}

/// Mean annotator score and its bucket.
pub fn consolidate_sentence(s: &AnnotatedSentence) -> Result<(f64, VaguenessClass), CorpusError> {
    if s.sentence_annotations.is_empty() {
        return Err(CorpusError::NoAnnotations(s.id.clone()));
    }
    let mean = s.sentence_annotations.iter().map(|a| a.score).sum::<f64>() / s.sentence_annotations.len() as f64;
    let class = VaguenessClass::from_score(mean).ok_or_else(|| CorpusError::ScoreOutOfRange {
        line: 0,
        id: s.id.clone(),
        score: mean,
    })?;
    Ok((mean, class))
}

pub fn consolidate(s: &AnnotatedSentence, threshold: usize) -> Result<ConsolidatedSentence, CorpusError> {
    let (mean_score, class) = consolidate_sentence(s)?;
    Ok(ConsolidatedSentence {
        id: s.id.clone(),
        tokens: s.tokens.clone(),
        word_labels: consolidate_word_labels(s, threshold),
        mean_score,
        class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokens_from, AnnotatorWordSelection, SentenceAnnotation};
    use proptest::prelude::*;

    fn sentence(n: usize, sels: &[(&str, usize, usize)], scores: &[f64]) -> AnnotatedSentence {
        let texts: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        AnnotatedSentence {
            id: "s".into(),
            tokens: tokens_from(&texts),
            word_selections: sels
                .iter()
                .map(|&(a, s, e)| AnnotatorWordSelection::new(a, s, e))
                .collect(),
            sentence_annotations: scores
                .iter()
                .enumerate()
                .map(|(i, &score)| SentenceAnnotation {
                    annotator_id: format!("A{i}"),
                    score,
                })
                .collect(),
        }
    }

    #[test]
    fn no_selections_all_zero() {
        assert_eq!(consolidate_word_labels(&sentence(4, &[], &[]), 2), vec![0; 4]);
    }

    #[test]
    fn repeated_annotator_counts_once() {
        // token 1 covered by {A, A, B}, token 3 by {A}
        let s = sentence(5, &[("A", 1, 2), ("A", 0, 2), ("B", 1, 3), ("A", 3, 4)], &[]);
        let labels = consolidate_word_labels(&s, 2);
        assert_eq!(labels, vec![0, 1, 0, 0, 0]);
    }

    #[test]
    fn mean_and_bucket() {
        let (m, c) = consolidate_sentence(&sentence(1, &[], &[4.0, 4.0, 3.0, 4.0, 4.0])).unwrap();
        assert!((m - 3.8).abs() < 1e-12);
        assert_eq!(c, VaguenessClass::Vague);
        let (m, c) = consolidate_sentence(&sentence(1, &[], &[2.0, 2.0, 3.0, 2.0])).unwrap();
        assert_eq!(m, 2.25);
        assert_eq!(c, VaguenessClass::SomewhatClear);
        assert!(matches!(
            consolidate_sentence(&sentence(1, &[], &[])),
            Err(CorpusError::NoAnnotations(_))
        ));
    }

    /// Brute-force oracle: count distinct annotators per token by scanning
    /// every selection for every token.
    fn oracle(s: &AnnotatedSentence, threshold: usize) -> Vec<u8> {
        (0..s.tokens.len())
            .map(|i| {
                let mut who: Vec<&str> = s
                    .word_selections
                    .iter()
                    .filter(|w| w.start <= i && i < w.end)
                    .map(|w| w.annotator_id.as_str())
                    .collect();
                who.sort();
                who.dedup();
                u8::from(who.len() >= threshold)
            })
            .collect()
    }

    fn arb_sentence() -> impl Strategy<Value = AnnotatedSentence> {
        (3usize..12).prop_flat_map(|n| {
            let sel = (0usize..5, 0..n, 1usize..=5).prop_map(move |(a, s, l)| (format!("A{a}"), s, (s + l).min(n)));
            prop::collection::vec(sel, 0..12).prop_map(move |sels| {
                let mut uniq = sels;
                uniq.sort();
                uniq.dedup();
                let refs: Vec<(&str, usize, usize)> = uniq.iter().map(|(a, s, e)| (a.as_str(), *s, *e)).collect();
                sentence(n, &refs, &[3.0])
            })
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force(s in arb_sentence(), threshold in 1usize..4) {
            prop_assert_eq!(consolidate_word_labels(&s, threshold), oracle(&s, threshold));
        }

        #[test]
        fn adding_a_selection_never_clears_a_label(
            s in arb_sentence(), a in 0usize..6, start in 0usize..3, len in 1usize..3
        ) {
            let before = consolidate_word_labels(&s, 2);
            let mut more = s.clone();
            let end = (start + len).min(s.tokens.len());
            more.word_selections.push(AnnotatorWordSelection::new(&format!("A{a}"), start, end));
            let after = consolidate_word_labels(&more, 2);
            for (b, a) in before.iter().zip(&after) {
                prop_assert!(a >= b);
            }
        }

        #[test]
        fn consolidation_is_idempotent(s in arb_sentence()) {
            // re-annotate the gold labels with two annotators per vague token
            let labels = consolidate_word_labels(&s, 2);
            let mut again = s.clone();
            again.word_selections = labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == 1)
                .flat_map(|(i, _)| {
                    [AnnotatorWordSelection::new("G1", i, i + 1), AnnotatorWordSelection::new("G2", i, i + 1)]
                })
                .collect();
            prop_assert_eq!(consolidate_word_labels(&again, 2), labels);
        }
    }
}
