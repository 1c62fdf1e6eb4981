//! Machine translation of English samples, structural post-processing
//! validation, and round-trip BLEU selection.
//!
//! Translation is turn-by-turn, which makes the turn-count check structural
//! by construction; the validator still checks every class because backends
//! can corrupt content within a turn.

mod bleu;

pub use bleu::sentence_bleu;

use crate::lang::LangTag;
use crate::llm::{BackendError, ChatMessage, ChatRequest, Client, GenParams};
use crate::types::{InstructionSample, Turn, IMAGE_TOKEN};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Version stamp carried in translated-corpus provenance fields; bump when
/// validator semantics change.
pub const VALIDATOR_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum TranslateError {
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error("source sample must be English, got {0}")]
    NotEnglishSource(String),
    #[error("every round-trip candidate was empty")]
    AllEmpty,
}

// ---------------------------------------------------------------------------
// Translation driver
// ---------------------------------------------------------------------------

/// Build the per-turn translation request. The protect-list instructions
/// live in the system prompt; the user message is exactly the source text.
pub fn translation_request(
    text: &str,
    target: &LangTag,
    model: &str,
    seed: Option<u64>,
) -> ChatRequest {
    let system = format!(
        "Translate the user's message into {}. Rules:\n\
         - Preserve the literal token {IMAGE_TOKEN} exactly as written, including the angle brackets.\n\
         - Preserve fenced code blocks (```) byte for byte; do not translate code.\n\
         - Preserve multiple-choice option labels at line starts (such as \"A.\", \"B)\") and keep every option line.\n\
         - Keep the line structure of the original.\n\
         Output only the translation, with no commentary.",
        target.name()
    );
    let params = GenParams {
        seed,
        ..GenParams::default()
    };
    ChatRequest::new(model, vec![ChatMessage::user(text)], params).with_system(system)
}

/// Translate an English sample turn-by-turn into `target`.
pub fn translate_sample(
    sample: &InstructionSample,
    target: &LangTag,
    client: &Client,
    model: &str,
) -> Result<InstructionSample, TranslateError> {
    if !sample.language.is_english() {
        return Err(TranslateError::NotEnglishSource(
            sample.language.as_str().to_string(),
        ));
    }
    let mut turns = Vec::with_capacity(sample.turns.len());
    for turn in &sample.turns {
        let request = translation_request(&turn.text, target, model, None);
        let text = client.complete(&request)?;
        turns.push(Turn {
            role: turn.role,
            text,
        });
    }
    Ok(InstructionSample {
        id: sample.id.clone(),
        image_refs: sample.image_refs.clone(),
        turns,
        language: target.clone(),
        task_types: sample.task_types.clone(),
        provenance: format!("translate:{}", sample.provenance),
    })
}

/// A translated corpus line: the sample plus provenance fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslatedRecord {
    #[serde(flatten)]
    pub sample: InstructionSample,
    pub source_id: String,
    pub source_lang: String,
    pub target_lang: String,
    pub validator_version: String,
}

// ---------------------------------------------------------------------------
// Structural validation
// ---------------------------------------------------------------------------

/// The closed set of structural error classes the validator detects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    TurnCount,
    RoleSequence,
    ImageTokenCount,
    MissingChoice,
    CodeFenceCount,
}

impl ViolationCode {
    pub const ALL: [ViolationCode; 5] = [
        ViolationCode::TurnCount,
        ViolationCode::RoleSequence,
        ViolationCode::ImageTokenCount,
        ViolationCode::MissingChoice,
        ViolationCode::CodeFenceCount,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationCode::TurnCount => "TurnCount",
            ViolationCode::RoleSequence => "RoleSequence",
            ViolationCode::ImageTokenCount => "ImageTokenCount",
            ViolationCode::MissingChoice => "MissingChoice",
            ViolationCode::CodeFenceCount => "CodeFenceCount",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationViolation {
    pub code: ViolationCode,
    pub detail: String,
}

/// Option labels `A.`..`E.` / `A)`..`E)` at line starts.
fn option_labels(text: &str) -> BTreeSet<char> {
    let mut labels = BTreeSet::new();
    for line in text.lines() {
        let bytes = line.as_bytes();
        if bytes.len() >= 3
            && (b'A'..=b'E').contains(&bytes[0])
            && (bytes[1] == b'.' || bytes[1] == b')')
            && (bytes[2] as char).is_whitespace()
        {
            labels.insert(bytes[0] as char);
        }
    }
    labels
}

fn fence_count(text: &str) -> usize {
    text.matches("```").count()
}

/// Compare a translation against its source. Empty result means the
/// translation is structurally faithful:
/// turn counts equal, role sequences equal, per-turn image-token counts
/// equal, source option labels all present, fence counts equal.
pub fn validate_translation(
    original: &InstructionSample,
    translated: &InstructionSample,
) -> Vec<TranslationViolation> {
    let mut violations = Vec::new();
    if original.turns.len() != translated.turns.len() {
        violations.push(TranslationViolation {
            code: ViolationCode::TurnCount,
            detail: format!(
                "original has {} turns, translation has {}",
                original.turns.len(),
                translated.turns.len()
            ),
        });
        // per-turn checks need aligned turns
        return violations;
    }
    let roles_match = original
        .turns
        .iter()
        .zip(&translated.turns)
        .all(|(a, b)| a.role == b.role);
    if !roles_match {
        violations.push(TranslationViolation {
            code: ViolationCode::RoleSequence,
            detail: "role sequences differ".to_string(),
        });
    }
    for (i, (orig, trans)) in original.turns.iter().zip(&translated.turns).enumerate() {
        let orig_tokens = orig.image_token_count();
        let trans_tokens = trans.image_token_count();
        if orig_tokens != trans_tokens {
            violations.push(TranslationViolation {
                code: ViolationCode::ImageTokenCount,
                detail: format!("turn {i}: {orig_tokens} image tokens became {trans_tokens}"),
            });
        }
        let orig_labels = option_labels(&orig.text);
        let trans_labels = option_labels(&trans.text);
        let missing: Vec<char> = orig_labels.difference(&trans_labels).copied().collect();
        if !missing.is_empty() {
            violations.push(TranslationViolation {
                code: ViolationCode::MissingChoice,
                detail: format!("turn {i}: option label(s) {missing:?} missing"),
            });
        }
        let orig_fences = fence_count(&orig.text);
        let trans_fences = fence_count(&trans.text);
        if orig_fences != trans_fences {
            violations.push(TranslationViolation {
                code: ViolationCode::CodeFenceCount,
                detail: format!("turn {i}: {orig_fences} fences became {trans_fences}"),
            });
        }
    }
    violations
}

// ---------------------------------------------------------------------------
// Enforcement
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct EnforcePolicy {
    /// Attempt to restore mangled `<image>` tokens before dropping.
    pub repair_image_tokens: bool,
}

impl Default for EnforcePolicy {
    fn default() -> Self {
        EnforcePolicy {
            repair_image_tokens: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnforceOutcome {
    Keep(InstructionSample),
    Drop(Vec<TranslationViolation>),
}

/// Restore `<image>` tokens that a backend translated or spaced out:
/// any `<` ws* "image" ws* `>` (case-insensitive) becomes the literal token.
pub fn repair_image_tokens(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    'outer: while i < chars.len() {
        if chars[i] == '<' {
            let mut j = i + 1;
            while j < chars.len() && chars[j].is_whitespace() {
                j += 1;
            }
            for expected in ['i', 'm', 'a', 'g', 'e'] {
                if j < chars.len() && chars[j].to_lowercase().next() == Some(expected) {
                    j += 1;
                } else {
                    out.push(chars[i]);
                    i += 1;
                    continue 'outer;
                }
            }
            while j < chars.len() && chars[j].is_whitespace() {
                j += 1;
            }
            if j < chars.len() && chars[j] == '>' {
                out.push_str(IMAGE_TOKEN);
                i = j + 1;
                continue;
            }
        }
        out.push(chars[i]);
        i += 1;
    }
    out
}

/// Keep a faithful translation, repair the one repairable class, drop
/// everything else.
pub fn enforce(
    original: &InstructionSample,
    translated: InstructionSample,
    policy: EnforcePolicy,
) -> EnforceOutcome {
    let violations = validate_translation(original, &translated);
    if violations.is_empty() {
        return EnforceOutcome::Keep(translated);
    }
    let only_image_tokens = violations
        .iter()
        .all(|v| v.code == ViolationCode::ImageTokenCount);
    if policy.repair_image_tokens && only_image_tokens {
        let mut repaired = translated;
        for turn in &mut repaired.turns {
            turn.text = repair_image_tokens(&turn.text);
        }
        let after = validate_translation(original, &repaired);
        if after.is_empty() {
            return EnforceOutcome::Keep(repaired);
        }
        return EnforceOutcome::Drop(after);
    }
    EnforceOutcome::Drop(violations)
}

// ---------------------------------------------------------------------------
// Round-trip selection
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct RoundtripChoice {
    /// Zero-based index of the winning candidate.
    pub index: usize,
    pub translation: String,
    pub back_translation: String,
    pub bleu: f64,
}

/// Request `k` forward translations, back-translate each to English, and
/// return the candidate whose back-translation has the highest BLEU against
/// the original. Ties break to the lowest candidate index.
pub fn roundtrip_select(
    text_en: &str,
    target: &LangTag,
    k: usize,
    client: &Client,
    model: &str,
) -> Result<RoundtripChoice, TranslateError> {
    assert!(k >= 1, "k must be >= 1");
    let english = LangTag::english();
    let mut best: Option<RoundtripChoice> = None;
    let mut all_empty = true;
    for i in 0..k {
        // the candidate index salts the request so candidates are distinct
        // through the cache
        let forward_req = translation_request(text_en, target, model, Some(i as u64));
        let translation = client.complete(&forward_req)?;
        if translation.trim().is_empty() {
            continue;
        }
        all_empty = false;
        let back_req = translation_request(&translation, &english, model, Some(i as u64));
        let back_translation = client.complete(&back_req)?;
        let bleu = sentence_bleu(&back_translation, text_en);
        let better = match &best {
            None => true,
            Some(current) => bleu > current.bleu,
        };
        if better {
            best = Some(RoundtripChoice {
                index: i,
                translation,
                back_translation,
                bleu,
            });
        }
    }
    if all_empty {
        return Err(TranslateError::AllEmpty);
    }
    Ok(best.expect("non-empty candidate recorded"))
}

#[cfg(test)]
pub(crate) mod corruption {
    //! Seeded generators that apply exactly one violation class each,
    //! shared by unit tests and the acceptance suite.

    use super::*;

    /// Apply exactly the corruption for `code` to a faithful translation.
    pub fn corrupt(sample: &InstructionSample, code: ViolationCode) -> InstructionSample {
        let mut out = sample.clone();
        match code {
            ViolationCode::TurnCount => {
                out.turns.pop();
            }
            ViolationCode::RoleSequence => {
                let last = out.turns.len() - 1;
                out.turns[last].role = match out.turns[last].role {
                    crate::types::Role::Human => crate::types::Role::Assistant,
                    crate::types::Role::Assistant => crate::types::Role::Human,
                };
            }
            ViolationCode::ImageTokenCount => {
                let turn = out
                    .turns
                    .iter_mut()
                    .find(|t| t.text.contains(IMAGE_TOKEN))
                    .expect("sample must contain an image token to corrupt");
                turn.text = turn.text.replacen(IMAGE_TOKEN, "< image >", 1);
            }
            ViolationCode::MissingChoice => {
                let turn = out
                    .turns
                    .iter_mut()
                    .find(|t| !option_labels(&t.text).is_empty())
                    .expect("sample must contain option lines to corrupt");
                let keep: Vec<String> = turn
                    .text
                    .lines()
                    .filter(|l| !l.starts_with("C."))
                    .map(str::to_string)
                    .collect();
                turn.text = keep.join("\n");
            }
            ViolationCode::CodeFenceCount => {
                let turn = out
                    .turns
                    .iter_mut()
                    .find(|t| t.text.contains("```"))
                    .expect("sample must contain a fence to corrupt");
                turn.text = turn.text.replacen("```", "", 1);
            }
        }
        out
    }
}
