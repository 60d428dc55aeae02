use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{consolidate_word_labels, covering_annotators, AnnotatedSentence, CorpusError, VaguenessClass};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermFrequency {
    pub term: String,
    pub freq: usize,
}

/// Corpus-level agreement and distribution summary. Percentages are in
/// `[0, 100]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub num_sentences: usize,
    pub num_scored_sentences: usize,
    /// Sentences where some score bucket gets at least 3 annotator votes.
    pub sentence_agreement_ge3: f64,
    pub sentence_agreement_ge4: f64,
    /// Among tokens covered by at least two annotators, the share covered by
    /// at least 3 (resp. 4).
    pub word_agreement_ge3: f64,
    pub word_agreement_ge4: f64,
    pub num_vague_tokens: usize,
    /// Maximal runs of consolidated vague tokens, lowercased, most frequent
    /// first.
    pub term_frequencies: Vec<TermFrequency>,
    /// Number of sentences with a given count of vague tokens.
    pub vague_word_count_histogram: BTreeMap<usize, usize>,
    /// Percentage of scored sentences per class.
    pub class_distribution: BTreeMap<VaguenessClass, f64>,
    pub class_counts: BTreeMap<VaguenessClass, usize>,
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Vague terms in one sentence: maximal runs of label-1 tokens.
fn vague_terms(s: &AnnotatedSentence, labels: &[u8]) -> Vec<String> {
    let mut terms = Vec::new();
    let mut cur: Vec<String> = Vec::new();
    for (tok, &l) in s.tokens.iter().zip(labels) {
        if l == 1 {
            cur.push(tok.lower());
        } else if !cur.is_empty() {
            terms.push(cur.join(" "));
            cur.clear();
        }
    }
    if !cur.is_empty() {
        terms.push(cur.join(" "));
    }
    terms
}

pub fn corpus_stats(corpus: &[AnnotatedSentence], threshold: usize) -> Result<StatsReport, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut scored = 0;
    let mut agree3 = 0;
    let mut agree4 = 0;
    let mut class_counts: BTreeMap<VaguenessClass, usize> = VaguenessClass::ALL.iter().map(|&c| (c, 0)).collect();
    let mut surviving = 0;
    let mut word3 = 0;
    let mut word4 = 0;
    let mut terms: HashMap<String, usize> = HashMap::new();
    let mut histogram = BTreeMap::new();
    let mut num_vague_tokens = 0;

    for s in corpus {
        if !s.sentence_annotations.is_empty() {
            scored += 1;
            let mut votes = [0usize; 4];
            for a in &s.sentence_annotations {
                if let Some(c) = VaguenessClass::from_score(a.score) {
                    votes[c.index()] += 1;
                }
            }
            let top = votes.iter().copied().max().unwrap_or(0);
            agree3 += usize::from(top >= 3);
            agree4 += usize::from(top >= 4);
            let mean =
                s.sentence_annotations.iter().map(|a| a.score).sum::<f64>() / s.sentence_annotations.len() as f64;
            if let Some(c) = VaguenessClass::from_score(mean) {
                *class_counts.entry(c).or_default() += 1;
            }
        }

        for who in covering_annotators(s) {
            if who.len() >= 2 {
                surviving += 1;
                word3 += usize::from(who.len() >= 3);
                word4 += usize::from(who.len() >= 4);
            }
        }

        let labels = consolidate_word_labels(s, threshold);
        let count = labels.iter().filter(|&&l| l == 1).count();
        num_vague_tokens += count;
        *histogram.entry(count).or_default() += 1;
        for t in vague_terms(s, &labels) {
            *terms.entry(t).or_default() += 1;
        }
    }

    let mut term_frequencies: Vec<TermFrequency> = terms
        .into_iter()
        .map(|(term, freq)| TermFrequency { term, freq })
        .collect();
    term_frequencies.sort_by(|a, b| b.freq.cmp(&a.freq).then_with(|| a.term.cmp(&b.term)));

    let class_distribution = class_counts.iter().map(|(&c, &n)| (c, percent(n, scored))).collect();

    Ok(StatsReport {
        num_sentences: corpus.len(),
        num_scored_sentences: scored,
        sentence_agreement_ge3: percent(agree3, scored),
        sentence_agreement_ge4: percent(agree4, scored),
        word_agreement_ge3: percent(word3, surviving),
        word_agreement_ge4: percent(word4, surviving),
        num_vague_tokens,
        term_frequencies,
        vague_word_count_histogram: histogram,
        class_distribution,
        class_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokens_from, AnnotatorWordSelection, SentenceAnnotation};

    fn sentence(words: &str, sels: &[(&str, usize, usize)], scores: &[f64]) -> AnnotatedSentence {
        let texts: Vec<&str> = words.split_whitespace().collect();
        AnnotatedSentence {
            id: words.into(),
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
    fn unanimous_sentence_agrees() {
        let r = corpus_stats(&[sentence("we may share", &[], &[3.0; 5])], 2).unwrap();
        assert_eq!(r.sentence_agreement_ge3, 100.0);
        assert_eq!(r.sentence_agreement_ge4, 100.0);
        assert_eq!(r.class_distribution[&VaguenessClass::Vague], 100.0);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(corpus_stats(&[], 2), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn term_counted_per_consolidated_selection() {
        let may = |scores: &[f64]| sentence("we may share", &[("A", 1, 2), ("B", 1, 2)], scores);
        let corpus = vec![may(&[3.0]), may(&[3.0]), may(&[3.0]), sentence("we share", &[], &[1.0])];
        let r = corpus_stats(&corpus, 2).unwrap();
        assert_eq!(
            r.term_frequencies[0],
            TermFrequency {
                term: "may".into(),
                freq: 3
            }
        );
        assert_eq!(r.vague_word_count_histogram[&1], 3);
        assert_eq!(r.vague_word_count_histogram[&0], 1);
    }

    #[test]
    fn adjacent_vague_tokens_form_one_term() {
        let s = sentence(
            "any other information",
            &[("A", 0, 2), ("B", 0, 3), ("C", 1, 2)],
            &[3.0],
        );
        let r = corpus_stats(&[s], 2).unwrap();
        assert_eq!(
            r.term_frequencies,
            vec![TermFrequency {
                term: "any other".into(),
                freq: 1
            }]
        );
    }

    /// Ten sentences with hand-planted agreement: brute-force counts over the
    /// raw annotations are compared with the report.
    #[test]
    fn planted_agreements_match_hand_count() {
        let mut corpus = Vec::new();
        for i in 0..10 {
            // sentence i: (i % 5) + 1 annotators select token 0; scores put
            // i votes in bucket Vague (capped at 5) and the rest spread out.
            let annotators = ["A", "B", "C", "D", "E"];
            let k = i % 5 + 1;
            let sels: Vec<(&str, usize, usize)> = annotators[..k].iter().map(|&a| (a, 0, 1)).collect();
            let agree = i.min(5);
            let mut scores = vec![3.5; agree];
            let spread = [1.0, 2.0, 4.5, 1.5, 2.5];
            scores.extend(spread.iter().take(5 - agree));
            corpus.push(sentence("some data is kept", &sels, &scores));
        }
        let r = corpus_stats(&corpus, 2).unwrap();

        let mut hand3 = 0;
        let mut hand4 = 0;
        for s in &corpus {
            let mut votes = [0; 4];
            for a in &s.sentence_annotations {
                votes[VaguenessClass::from_score(a.score).unwrap().index()] += 1;
            }
            hand3 += usize::from(votes.iter().any(|&v| v >= 3));
            hand4 += usize::from(votes.iter().any(|&v| v >= 4));
        }
        assert_eq!(r.sentence_agreement_ge3, 100.0 * hand3 as f64 / 10.0);
        assert_eq!(r.sentence_agreement_ge4, 100.0 * hand4 as f64 / 10.0);

        // k in 1..=5 twice each; surviving tokens have k >= 2
        let surviving: Vec<usize> = (0..10).map(|i| i % 5 + 1).filter(|&k| k >= 2).collect();
        let w3 = surviving.iter().filter(|&&k| k >= 3).count();
        let w4 = surviving.iter().filter(|&&k| k >= 4).count();
        assert_eq!(r.word_agreement_ge3, 100.0 * w3 as f64 / surviving.len() as f64);
        assert_eq!(r.word_agreement_ge4, 100.0 * w4 as f64 / surviving.len() as f64);
    }

    #[test]
    fn serializes_required_fields() {
        let r = corpus_stats(&[sentence("we may share", &[], &[3.0])], 2).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for field in [
            "sentence_agreement_ge3",
            "word_agreement_ge3",
            "term_frequencies",
            "class_distribution",
            "vague_word_count_histogram",
        ] {
            assert!(v.get(field).is_some(), "{field}");
        }
        assert!(v["class_distribution"].get("vague").is_some());
    }
}
