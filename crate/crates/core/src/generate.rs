//! Culture-aware recaptioning and multilingual instruction generation.
//!
//! Captions are requested in the language matching each record's country of
//! origin; instructions are then generated from the caption in that same
//! language, up to two QA pairs per image, each emitted as an independent
//! two-turn sample.

use crate::lang::LangTag;
use crate::llm::{ChatMessage, ChatRequest, Client, GenParams};
use crate::types::{
    validate_sample, CurationVerdict, InstructionSample, SourceRecord, TaskType, Turn, IMAGE_TOKEN,
};
use crate::util::derive_rng;
use rand::Rng;
use thiserror::Error;

pub const NOTE_TRUNCATED: &str = "Truncated";
pub const NOTE_DEFAULT_LANGUAGE: &str = "DefaultLanguage";
pub const DROP_EMPTY_CAPTION: &str = "EmptyCaption";
pub const DROP_UNPARSEABLE: &str = "Unparseable";

/// Most QA pairs generated per image.
pub const MAX_PAIRS_PER_IMAGE: usize = 2;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("backend: {0}")]
    Backend(#[from] crate::llm::BackendError),
    #[error("backend returned an empty caption")]
    EmptyCaption,
    #[error("no valid instruction pair recoverable from generation output")]
    Unparseable,
}

// ---------------------------------------------------------------------------
// Country -> language mapping
// ---------------------------------------------------------------------------

/// Country name -> caption language. Lookups are case-insensitive; unmapped
/// countries fall back to English (callers note the fallback in manifests).
#[derive(Debug, Clone)]
pub struct CountryLanguageMap {
    map: std::collections::BTreeMap<String, LangTag>,
}

const BUILTIN_COUNTRY_LANGUAGES: &[(&str, &str)] = &[
    ("argentina", "es"),
    ("bangladesh", "bn"),
    ("brazil", "pt"),
    ("bulgaria", "bg"),
    ("china", "zh"),
    ("colombia", "es"),
    ("czech republic", "cs"),
    ("czechia", "cs"),
    ("egypt", "ar"),
    ("ethiopia", "am"),
    ("france", "fr"),
    ("germany", "de"),
    ("greece", "el"),
    ("india", "hi"),
    ("indonesia", "id"),
    ("iran", "fa"),
    ("ireland", "ga"),
    ("israel", "iw"),
    ("italy", "it"),
    ("japan", "ja"),
    ("kenya", "sw"),
    ("korea", "ko"),
    ("malaysia", "ms"),
    ("mexico", "es"),
    ("mongolia", "mn"),
    ("netherlands", "nl"),
    ("nigeria", "ig"),
    ("norway", "no"),
    ("pakistan", "ur"),
    ("poland", "pl"),
    ("portugal", "pt"),
    ("romania", "ro"),
    ("russia", "ru"),
    ("saudi arabia", "ar"),
    ("south korea", "ko"),
    ("spain", "es"),
    ("sri lanka", "si"),
    ("tanzania", "sw"),
    ("thailand", "th"),
    ("turkey", "tr"),
    ("ukraine", "uk"),
    ("vietnam", "vi"),
];

impl Default for CountryLanguageMap {
    fn default() -> Self {
        let map = BUILTIN_COUNTRY_LANGUAGES
            .iter()
            .map(|(country, tag)| {
                (
                    (*country).to_string(),
                    LangTag::new(tag).expect("builtin tag"),
                )
            })
            .collect();
        CountryLanguageMap { map }
    }
}

impl CountryLanguageMap {
    /// Load overrides from a TSV of `country<TAB>tag` lines, layered over the
    /// builtin table. `#` comments allowed.
    pub fn with_overrides(path: impl AsRef<std::path::Path>) -> std::io::Result<Self> {
        let mut table = CountryLanguageMap::default();
        let raw = std::fs::read_to_string(path)?;
        for line in raw.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((country, tag)) = line.split_once('\t') {
                let tag = LangTag::new(tag.trim()).map_err(|e| {
                    std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string())
                })?;
                table.map.insert(country.trim().to_lowercase(), tag);
            }
        }
        Ok(table)
    }

    pub fn lookup(&self, country: &str) -> Option<&LangTag> {
        self.map.get(&country.trim().to_lowercase())
    }

    /// Mapped language, or English with `was_mapped == false`.
    pub fn language_for(&self, country: &str) -> (LangTag, bool) {
        match self.lookup(country) {
            Some(tag) => (tag.clone(), true),
            None => (LangTag::english(), false),
        }
    }
}

// ---------------------------------------------------------------------------
// Recaption prompts
// ---------------------------------------------------------------------------

/// The five recaption templates; one is drawn uniformly per record.
/// Placeholders: language name, country, subject category, alt text.
fn recaption_template(
    index: usize,
    language: &str,
    country: &str,
    category: &str,
    text: &str,
) -> String {
    match index {
        0 => format!(
            "Please describe the image in detail in {language}. The image might be related to the country: \"{country}\". The topic might be related to: \"{category}\". The previous short caption of the image is {text}."
        ),
        1 => format!(
            "Analyze this image and provide a comprehensive description in \"{language}\". Consider that it may be associated with \"{country}\" and the theme could be related to \"{category}\". If there is cultural significance, please include it. A brief previous description was: {text}."
        ),
        2 => format!(
            "In \"{language}\", give a detailed description of what you see in this image. Keep in mind it might be connected to \"{country}\" and the subject could be about \"{category}\". If there are culturally relevant details, please include them. An earlier short description stated: {text}."
        ),
        3 => format!(
            "Examine this image closely and describe its contents in \"{language}\" in a more structured way. The image might have a connection to \"{country}\" and could be about \"{category}\". A previous concise caption mentioned: {text}."
        ),
        4 => format!(
            "Using \"{language}\", provide an in-depth and structured description of this image. It may be related to \"{country}\" and the topic could be associated with \"{category}\". A prior brief description was given as: {text}."
        ),
        _ => unreachable!("template index out of range"),
    }
}

pub const RECAPTION_TEMPLATE_COUNT: usize = 5;

/// Seeded uniform template draw for a record; stable across runs and
/// independent of processing order.
pub fn recaption_template_index(seed: u64, record_id: &str) -> usize {
    derive_rng(seed, record_id).gen_range(0..RECAPTION_TEMPLATE_COUNT)
}

/// Build the recaption request for a curated record. The verdict must carry
/// a concrete country.
pub fn build_recaption_prompt(
    record: &SourceRecord,
    verdict: &CurationVerdict,
    language: &LangTag,
    seed: u64,
    model: &str,
) -> ChatRequest {
    let country = verdict.region.country().unwrap_or_default();
    let index = recaption_template_index(seed, &record.id);
    let prompt = recaption_template(
        index,
        language.name(),
        country,
        verdict.subject.as_str(),
        &record.alt_text,
    );
    ChatRequest::new(
        model,
        vec![ChatMessage::user_with_images(
            prompt,
            vec![record.image_uri.clone()],
        )],
        GenParams::creative().with_seed(seed),
    )
}

/// A persisted caption line: `{id, language, text}`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Caption {
    pub id: String,
    pub language: LangTag,
    pub text: String,
}

/// Recaption one record in the language of its cultural origin.
/// Returns the caption plus whether the country was mapped (false = fell
/// back to English).
pub fn recaption(
    record: &SourceRecord,
    verdict: &CurationVerdict,
    map: &CountryLanguageMap,
    client: &Client,
    seed: u64,
    model: &str,
) -> Result<(Caption, bool), GenerateError> {
    let country = verdict.region.country().unwrap_or_default();
    let (language, was_mapped) = map.language_for(country);
    let request = build_recaption_prompt(record, verdict, &language, seed, model);
    let text = client.complete(&request)?;
    if text.trim().is_empty() {
        return Err(GenerateError::EmptyCaption);
    }
    Ok((
        Caption {
            id: record.id.clone(),
            language,
            text,
        },
        was_mapped,
    ))
}

// ---------------------------------------------------------------------------
// Instruction generation
// ---------------------------------------------------------------------------

/// Build the instruction-generation request for a caption.
pub fn build_instruction_prompt(caption: &Caption, model: &str) -> ChatRequest {
    let task_list = TaskType::ALL
        .iter()
        .map(|t| format!("- {t}"))
        .collect::<Vec<_>>()
        .join("\n");
    let language = caption.language.name();
    let prompt = format!(
        "Task: Generate two instruction-response pair based on the visual content of an image. Choose two task types from the list below to guide the rewriting process:

{task_list}

Guidelines:

Instruction:
- Select two different task types from the list above.
- Make sure the instruction prompts an interpretation or analysis directly tied to what can be visually observed in the image, not just general reasoning.
- The instruction should require a response that uses details from the image. Avoid generic instructions that can be answered without visual information.

Response:
- Provide a very detailed and structured response that reflects a clear understanding of the implied visual information.
- Offer multiple perspectives, deep analysis, or step-by-step explanations where applicable.
- Avoid general responses that could be inferred without observing the image. Responses must rely on interpreting the visual content.

Content:
- Instructions should be varied, challenging, and explore different advanced aspects of the visual scene.
- Responses must showcase a deep understanding of the image's visual context, using thoughtful insights where applicable.

Output:
- Provide the output in JSON format with three keys: \"task_type\", \"instruction\" and \"response\".
- Ensure the instruction and response do not mention \"based on caption\" but instead, refer to the image or simply avoid reference to any external description.
- Do not include additional text or explanations beyond what is required.
- Provide both the \"instruction\" and \"response\" in {language} but \"task_type\" in English.

Caption: {caption_text}",
        caption_text = caption.text,
    );
    ChatRequest::new(
        model,
        vec![ChatMessage::user(prompt)],
        GenParams::creative(),
    )
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenerationNotes {
    /// Pairs beyond the two-per-image limit that were discarded.
    pub truncated: usize,
    /// Elements dropped for an unknown task type or empty fields.
    pub dropped_invalid: usize,
}

#[derive(serde::Deserialize)]
struct RawPair {
    task_type: String,
    instruction: String,
    response: String,
}

fn strip_code_fences(text: &str) -> &str {
    let trimmed = text.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    // drop an optional language hint after the opening fence
    let rest = match rest.split_once('\n') {
        Some((_, body)) => body,
        None => rest,
    };
    rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
}

/// Parse model output into raw pairs: a JSON array, a single object, or
/// several concatenated objects.
fn parse_pairs(text: &str) -> Vec<RawPair> {
    let body = strip_code_fences(text);
    if let Ok(pairs) = serde_json::from_str::<Vec<RawPair>>(body) {
        return pairs;
    }
    if let Ok(single) = serde_json::from_str::<RawPair>(body) {
        return vec![single];
    }
    // concatenated objects: parse them one after another
    let mut pairs = Vec::new();
    let mut stream = serde_json::Deserializer::from_str(body).into_iter::<serde_json::Value>();
    while let Some(Ok(value)) = stream.next() {
        if let Ok(pair) = serde_json::from_value::<RawPair>(value) {
            pairs.push(pair);
        }
    }
    pairs
}

/// Turn generation output into validated two-turn samples (at most two per
/// image). Elements with an unknown task type or empty fields are dropped
/// individually; an output with no recoverable element is an error.
pub fn parse_generated(
    text: &str,
    caption: &Caption,
    image_uri: &str,
) -> Result<(Vec<InstructionSample>, GenerationNotes), GenerateError> {
    let raw_pairs = parse_pairs(text);
    if raw_pairs.is_empty() {
        return Err(GenerateError::Unparseable);
    }
    let mut notes = GenerationNotes::default();
    let mut samples = Vec::new();
    for pair in raw_pairs {
        if samples.len() == MAX_PAIRS_PER_IMAGE {
            notes.truncated += 1;
            continue;
        }
        let Ok(task_type) = TaskType::parse(&pair.task_type) else {
            notes.dropped_invalid += 1;
            continue;
        };
        if pair.instruction.trim().is_empty() || pair.response.trim().is_empty() {
            notes.dropped_invalid += 1;
            continue;
        }
        let sample = InstructionSample {
            id: format!("{}-q{}", caption.id, samples.len() + 1),
            image_refs: vec![image_uri.to_string()],
            turns: vec![
                Turn::human(format!("{IMAGE_TOKEN}\n{}", pair.instruction.trim())),
                Turn::assistant(pair.response.trim().to_string()),
            ],
            language: caption.language.clone(),
            task_types: Some(vec![task_type]),
            provenance: "generate".to_string(),
        };
        debug_assert!(validate_sample(&sample).is_empty());
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(GenerateError::Unparseable);
    }
    Ok((samples, notes))
}
