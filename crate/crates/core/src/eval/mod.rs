//! The benchmark evaluation engine: rubric judging, metrics, diverse-subset
//! selection, and score aggregation.

mod metrics;
mod subset;

pub use metrics::{chrf, mc_accuracy, normalize_short_answer, rouge_l, short_answer_match};
pub use subset::{diverse_subset, Embedder, HashEmbedder, SubsetError};

use crate::llm::{BackendError, ChatMessage, ChatRequest, Client, GenParams};
use crate::types::RubricInstance;
use crate::util::round1;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Verdict sentinel the judge prompt mandates.
pub const RESULT_SENTINEL: &str = "[RESULT]";

/// Responses with fewer letters than this are exempt from the language
/// penalty; detection is unreliable on very short strings.
pub const MIN_PENALTY_LETTERS: usize = 20;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error("judge output has no verdict sentinel with an integer")]
    NoVerdict,
    #[error("judge verdict {0} out of range 1..=5")]
    OutOfRange(i64),
}

/// Offline language identification used for the hallucination penalty.
pub trait LanguageDetector: Send + Sync {
    /// (language tag, confidence in [0, 1]); ("und", 0) when undecidable.
    fn detect(&self, text: &str) -> (String, f64);
}

// ---------------------------------------------------------------------------
// Judge protocol
// ---------------------------------------------------------------------------

/// Build the direct-assessment judge request: instruction, response,
/// reference answer, criteria, and all five score descriptions, with the
/// verdict demanded in sentinel form.
pub fn build_judge_prompt(instance: &RubricInstance, response: &str, model: &str) -> ChatRequest {
    let prompt = format!(
        "You are an impartial judge performing a direct assessment of one model response.\n\
         Evaluate strictly by the score rubric below, not by general impressions.\n\n\
         ###Instruction:\n{instruction}\n\n\
         ###Response to evaluate:\n{response}\n\n\
         ###Reference answer (the quality of a score of 5):\n{reference}\n\n\
         ###Evaluation criteria:\n{criteria}\n\
         Score 1: {d1}\n\
         Score 2: {d2}\n\
         Score 3: {d3}\n\
         Score 4: {d4}\n\
         Score 5: {d5}\n\n\
         ###Task:\n\
         1. Write detailed feedback assessing the response against the criteria and score descriptions.\n\
         2. After the feedback, decide on an integer score between 1 and 5.\n\
         3. End your output with the verdict in exactly this form: {sentinel} n\n",
        instruction = instance.instruction,
        response = response,
        reference = instance.reference_answer,
        criteria = instance.criteria,
        d1 = instance.score1_description,
        d2 = instance.score2_description,
        d3 = instance.score3_description,
        d4 = instance.score4_description,
        d5 = instance.score5_description,
        sentinel = RESULT_SENTINEL,
    );
    ChatRequest::new(model, vec![ChatMessage::user(prompt)], GenParams::default())
}

/// Split judge output into (feedback, raw score). The verdict is the first
/// integer after the final `[RESULT]` sentinel.
pub fn parse_judge(text: &str) -> Result<(String, u8), JudgeError> {
    let idx = text.rfind(RESULT_SENTINEL).ok_or(JudgeError::NoVerdict)?;
    let feedback = text[..idx].trim_end().to_string();
    let tail = &text[idx + RESULT_SENTINEL.len()..];
    let mut digits = String::new();
    for c in tail.chars() {
        if c.is_ascii_digit() {
            digits.push(c);
        } else if !digits.is_empty() {
            break;
        } else if !c.is_whitespace() && c != ':' && c != '*' {
            return Err(JudgeError::NoVerdict);
        }
    }
    if digits.is_empty() {
        return Err(JudgeError::NoVerdict);
    }
    let raw: i64 = digits.parse().map_err(|_| JudgeError::NoVerdict)?;
    if !(1..=5).contains(&raw) {
        return Err(JudgeError::OutOfRange(raw));
    }
    Ok((feedback, raw as u8))
}

/// `(raw - 1) * 25`: the bijection {1..5} -> {0, 25, 50, 75, 100}.
pub fn normalize_score(raw: u8) -> u8 {
    assert!((1..=5).contains(&raw), "raw score out of range");
    (raw - 1) * 25
}

/// One judged response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeResult {
    pub feedback: String,
    pub raw: u8,
    pub normalized: u8,
    pub language_ok: bool,
    pub detected_language: String,
}

fn letter_count(text: &str) -> usize {
    text.chars().filter(|c| c.is_alphabetic()).count()
}

/// Judge one response against its rubric instance, applying the language
/// hallucination penalty: a response detected in a different language than
/// the instance is forced to raw 1 (normalized 0), whatever the judge said.
pub fn judge(
    instance: &RubricInstance,
    response: &str,
    client: &Client,
    detector: &dyn LanguageDetector,
    model: &str,
) -> Result<JudgeResult, JudgeError> {
    let request = build_judge_prompt(instance, response, model);
    let output = client.complete(&request)?;
    let (feedback, mut raw) = parse_judge(&output)?;
    let (detected_language, _confidence) = detector.detect(response);
    let penalize = letter_count(response) >= MIN_PENALTY_LETTERS
        && detected_language != "und"
        && detected_language != instance.language.as_str();
    let language_ok = !penalize;
    if penalize {
        raw = 1;
    }
    Ok(JudgeResult {
        feedback,
        raw,
        normalized: normalize_score(raw),
        language_ok,
        detected_language,
    })
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Per-dataset English score and unweighted mean over the non-English
/// languages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetAggregate {
    pub en: Option<f64>,
    pub mul: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// dataset -> language -> score, as fed in.
    pub scores: BTreeMap<String, BTreeMap<String, f64>>,
    pub aggregates: BTreeMap<String, DatasetAggregate>,
    pub overall: DatasetAggregate,
}

/// Macro-average scores: per-dataset `mul` is the unweighted mean over
/// non-English languages; overall en/mul are unweighted means over datasets.
pub fn aggregate(scores: &BTreeMap<String, BTreeMap<String, f64>>, en_tag: &str) -> EvalReport {
    let mut aggregates = BTreeMap::new();
    for (dataset, by_language) in scores {
        let en = by_language.get(en_tag).copied();
        let non_english: Vec<f64> = by_language
            .iter()
            .filter(|(language, _)| language.as_str() != en_tag)
            .map(|(_, &score)| score)
            .collect();
        let mul = if non_english.is_empty() {
            None
        } else {
            Some(non_english.iter().sum::<f64>() / non_english.len() as f64)
        };
        aggregates.insert(dataset.clone(), DatasetAggregate { en, mul });
    }
    let mean_of = |extract: fn(&DatasetAggregate) -> Option<f64>| {
        let values: Vec<f64> = aggregates.values().filter_map(extract).collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    let overall = DatasetAggregate {
        en: mean_of(|a| a.en),
        mul: mean_of(|a| a.mul),
    };
    EvalReport {
        scores: scores.clone(),
        aggregates,
        overall,
    }
}

impl EvalReport {
    /// Aligned text table: one row per dataset (en/mul at one decimal,
    /// half-up) with the overall average first.
    pub fn render_table(&self) -> String {
        let fmt = |v: Option<f64>| match v {
            Some(x) => format!("{:>8.1}", round1(x)),
            None => format!("{:>8}", "-"),
        };
        let mut out = String::new();
        out.push_str(&format!("{:<24} {:>8} {:>8}\n", "dataset", "en", "mul"));
        out.push_str(&format!(
            "{:<24} {} {}\n",
            "AVG (all)",
            fmt(self.overall.en),
            fmt(self.overall.mul)
        ));
        for (dataset, agg) in &self.aggregates {
            out.push_str(&format!(
                "{:<24} {} {}\n",
                dataset,
                fmt(agg.en),
                fmt(agg.mul)
            ));
        }
        out
    }
}
