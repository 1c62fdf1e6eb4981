//! Text metrics implemented from scratch: ROUGE-L, chrF, multiple-choice
//! accuracy, and normalized short-answer match.

/// Lowercased whitespace tokens.
fn rouge_tokens(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure with beta = 1 (harmonic mean of LCS precision and
/// recall) over lowercased whitespace tokens. Range [0, 1].
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let cand = rouge_tokens(candidate);
    let refs = rouge_tokens(reference);
    let lcs = lcs_len(&cand, &refs) as f64;
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let precision = lcs / cand.len() as f64;
    let recall = lcs / refs.len() as f64;
    if precision + recall == 0.0 {
        return 0.0;
    }
    2.0 * precision * recall / (precision + recall)
}

/// chrF in [0, 100]: character n-gram F-score, orders 1..=6, beta = 2,
/// whitespace removed before n-gram extraction.
///
/// Precision and recall are averaged over the effective orders (those where
/// either side has n-grams) and combined once, so identical strings score
/// exactly 100 regardless of length.
pub fn chrf(candidate: &str, reference: &str) -> f64 {
    const MAX_ORDER: usize = 6;
    const BETA_SQ: f64 = 4.0;

    let cand: Vec<char> = candidate.chars().filter(|c| !c.is_whitespace()).collect();
    let refs: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    if cand.is_empty() && refs.is_empty() {
        return 100.0;
    }
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }

    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut effective_orders = 0usize;
    for n in 1..=MAX_ORDER {
        let cand_total = cand.len().saturating_sub(n - 1);
        let ref_total = refs.len().saturating_sub(n - 1);
        if cand_total == 0 && ref_total == 0 {
            continue;
        }
        effective_orders += 1;
        let mut ref_counts: std::collections::HashMap<&[char], u64> =
            std::collections::HashMap::new();
        if refs.len() >= n {
            for gram in refs.windows(n) {
                *ref_counts.entry(gram).or_insert(0) += 1;
            }
        }
        let mut matched = 0u64;
        if cand.len() >= n {
            for gram in cand.windows(n) {
                if let Some(count) = ref_counts.get_mut(gram) {
                    if *count > 0 {
                        *count -= 1;
                        matched += 1;
                    }
                }
            }
        }
        if cand_total > 0 {
            precision_sum += matched as f64 / cand_total as f64;
        }
        if ref_total > 0 {
            recall_sum += matched as f64 / ref_total as f64;
        }
    }
    if effective_orders == 0 {
        return 0.0;
    }
    let precision = precision_sum / effective_orders as f64;
    let recall = recall_sum / effective_orders as f64;
    if precision + recall == 0.0 {
        return 0.0;
    }
    100.0 * (1.0 + BETA_SQ) * precision * recall / (BETA_SQ * precision + recall)
}

/// Label letters for `count` options: A, B, C, ...
fn option_letter(index: usize) -> char {
    (b'A' + index as u8) as char
}

fn strip_token_punct(token: &str) -> (&str, bool) {
    let stripped = token
        .trim_matches(|c: char| c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’'));
    (stripped, stripped.len() != token.len())
}

/// Extract the chosen option letter from a free-form prediction.
///
/// First standalone letter token wins: an uppercase letter within the label
/// range, or any-case letter that was decorated with punctuation ("(b)",
/// "c.", "d)"). Falls back to a unique option-text substring match.
fn extract_choice(prediction: &str, options: &[String]) -> Option<char> {
    let max_letter = option_letter(options.len().saturating_sub(1));
    for token in prediction.split_whitespace() {
        let (core, had_punct) = strip_token_punct(token);
        let mut chars = core.chars();
        let (Some(c), None) = (chars.next(), chars.next()) else {
            continue;
        };
        if c.is_ascii_uppercase() && c <= max_letter {
            return Some(c);
        }
        if had_punct && c.is_ascii_lowercase() {
            let upper = c.to_ascii_uppercase();
            if upper <= max_letter {
                return Some(upper);
            }
        }
    }
    // fallback: the prediction names exactly one option's text
    let needle = prediction.to_lowercase();
    let mut hit = None;
    for (i, option) in options.iter().enumerate() {
        let text = option.to_lowercase();
        if !text.trim().is_empty() && needle.contains(text.trim()) {
            if hit.is_some() {
                return None; // ambiguous
            }
            hit = Some(option_letter(i));
        }
    }
    hit
}

/// Score a multiple-choice prediction: 1 if the extracted choice equals the
/// gold label, else 0 (including when nothing is extractable).
pub fn mc_accuracy(prediction: &str, options: &[String], gold_label: char) -> u8 {
    match extract_choice(prediction, options) {
        Some(choice) if choice == gold_label.to_ascii_uppercase() => 1,
        _ => 0,
    }
}

/// Lowercase, strip punctuation, collapse whitespace, drop a leading English
/// article.
pub fn normalize_short_answer(s: &str) -> String {
    let lowered: String = s
        .to_lowercase()
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    for article in ["a ", "an ", "the "] {
        if let Some(rest) = collapsed.strip_prefix(article) {
            return rest.to_string();
        }
    }
    collapsed
}

/// Normalized exact match for short-form answers.
pub fn short_answer_match(prediction: &str, gold: &str) -> u8 {
    u8::from(normalize_short_answer(prediction) == normalize_short_answer(gold))
}
