//! A self-contained deterministic backend.
//!
//! Synthesizes plausible, well-formed responses for every prompt family the
//! pipeline issues, derived purely from a hash of the request. Useful for
//! end-to-end runs on machines with no credentials and for determinism tests:
//! the same request always yields the same bytes.

use super::{BackendError, ChatBackend, ChatRequest};
use crate::types::{SubjectCategory, TaskType};
use crate::util::stable_hash;

const COUNTRY_POOL: [&str; 16] = [
    "Japan",
    "China",
    "Brazil",
    "France",
    "Kenya",
    "India",
    "Indonesia",
    "Mexico",
    "Germany",
    "Israel",
    "South Korea",
    "Thailand",
    "Turkey",
    "Vietnam",
    "Russia",
    "Italy",
];

pub struct ScriptedBackend;

impl ScriptedBackend {
    pub fn new() -> Self {
        ScriptedBackend
    }

    fn request_text(request: &ChatRequest) -> String {
        let mut text = String::new();
        if let Some(system) = &request.system {
            text.push_str(system);
            text.push('\n');
        }
        for message in &request.messages {
            text.push_str(&message.text);
            text.push('\n');
        }
        text
    }

    fn scoring_reply(h: u64) -> String {
        let quality = 1 + (h % 5);
        let subject = SubjectCategory::ALL[(h >> 8) as usize % SubjectCategory::ALL.len()];
        let region = if (h >> 16) % 5 < 3 {
            COUNTRY_POOL[(h >> 24) as usize % COUNTRY_POOL.len()]
        } else {
            "No specific country"
        };
        format!("1. {quality}\n2. {subject}\n3. {region}")
    }

    fn generation_reply(h: u64) -> String {
        let first = TaskType::ALL[h as usize % TaskType::ALL.len()];
        let second = TaskType::ALL[(h >> 8) as usize % TaskType::ALL.len()];
        let body = format!(
            concat!(
                "[\n",
                "  {{\"task_type\": \"{}\", \"instruction\": \"Describe element {:x} visible in the image.\", ",
                "\"response\": \"The image shows element {:x} with distinctive features from the scene.\"}},\n",
                "  {{\"task_type\": \"{}\", \"instruction\": \"Explain the significance of detail {:x} in the image.\", ",
                "\"response\": \"Detail {:x} carries contextual significance in the depicted setting.\"}}\n",
                "]"
            ),
            first,
            h & 0xffff,
            h & 0xffff,
            second,
            (h >> 16) & 0xffff,
            (h >> 16) & 0xffff,
        );
        if h.is_multiple_of(3) {
            format!("```json\n{body}\n```")
        } else {
            body
        }
    }
}

impl Default for ScriptedBackend {
    fn default() -> Self {
        ScriptedBackend::new()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let text = Self::request_text(request);
        let h = stable_hash(text.as_bytes());
        if text.contains("Evaluate Text Quality") {
            return Ok(Self::scoring_reply(h));
        }
        if text.contains("three keys") {
            return Ok(Self::generation_reply(h));
        }
        if text.contains("[RESULT]") {
            let verdict = 1 + (h % 5);
            return Ok(format!(
                "The response aligns with the rubric to a scripted degree ({:x}). [RESULT] {}",
                h & 0xffff,
                verdict
            ));
        }
        if request
            .system
            .as_deref()
            .is_some_and(|s| s.starts_with("Translate"))
        {
            // identity translation: echo the payload
            return Ok(request
                .messages
                .last()
                .map(|m| m.text.clone())
                .unwrap_or_default());
        }
        // recaption and anything else: a deterministic caption
        Ok(format!(
            "A detailed scripted caption of the scene, variant {:x}, mentioning setting, subjects, and cultural context.",
            h & 0xffffff
        ))
    }

    fn name(&self) -> &str {
        "scripted"
    }
}
