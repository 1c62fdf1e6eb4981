//! Sentence-level BLEU-4 used by round-trip translation selection.
//!
//! Pinned variant: whitespace tokens, clipped n-gram precisions for
//! n = 1..=4, add-1 smoothing on the precisions for n >= 2 (unigrams
//! unsmoothed), uniform 1/4 weights, standard brevity penalty.

use std::collections::HashMap;

fn tokens(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn ngram_counts<'a>(toks: &[&'a str], n: usize) -> HashMap<Vec<&'a str>, u64> {
    let mut counts = HashMap::new();
    if toks.len() >= n {
        for window in toks.windows(n) {
            *counts.entry(window.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped matches and candidate total for order `n`.
fn order_stats(candidate: &[&str], reference: &[&str], n: usize) -> (u64, u64) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let total: u64 = cand.values().sum();
    let matched: u64 = cand
        .iter()
        .map(|(gram, &c)| c.min(refs.get(gram).copied().unwrap_or(0)))
        .sum();
    (matched, total)
}

/// BLEU-4 in [0, 1]. An empty candidate scores 0; a candidate sharing no
/// unigram with the reference scores 0.
pub fn sentence_bleu(candidate: &str, reference: &str) -> f64 {
    let cand = tokens(candidate);
    let refs = tokens(reference);
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }

    let mut log_sum = 0.0;
    for n in 1..=4usize {
        let (matched, total) = order_stats(&cand, &refs, n);
        let precision = if n == 1 {
            if matched == 0 {
                return 0.0;
            }
            matched as f64 / total as f64
        } else {
            (matched + 1) as f64 / (total + 1) as f64
        };
        log_sum += 0.25 * precision.ln();
    }

    let c = cand.len() as f64;
    let r = refs.len() as f64;
    let brevity = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    brevity * log_sum.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_long_sentences_score_one() {
        let s = "the cat sat on the mat today";
        assert!((sentence_bleu(s, s) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_candidate_scores_zero() {
        assert_eq!(sentence_bleu("", "a b c"), 0.0);
        assert_eq!(sentence_bleu("   ", "a b c"), 0.0);
    }

    #[test]
    fn disjoint_tokens_score_zero() {
        assert_eq!(sentence_bleu("x y z", "a b c"), 0.0);
    }

    #[test]
    fn partial_overlap_matches_hand_computation() {
        // candidate: "the cat sat" (3 tokens), reference: "the cat sat on the mat"
        // p1 = 3/3; p2 = (2+1)/(2+1) = 1; p3 = (1+1)/(1+1) = 1; p4 = (0+1)/(0+1) = 1
        // BP = exp(1 - 6/3) = e^-1
        let got = sentence_bleu("the cat sat", "the cat sat on the mat");
        let want = (-1.0f64).exp() * 1.0;
        assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
    }

    #[test]
    fn exact_match_beats_partial() {
        let original = "the cat sat on the mat";
        let exact = sentence_bleu(original, original);
        let partial = sentence_bleu("a cat sat", original);
        assert!(exact > partial);
    }
}
