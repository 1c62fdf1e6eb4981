//! Canonical request hashing.
//!
//! The digest is computed over a length-prefixed, field-tagged byte encoding
//! rather than JSON so it cannot depend on map ordering, whitespace, or float
//! printing quirks. Equal requests hash equal on every platform and release.

use super::ChatRequest;
use crate::util::sha256_hex;

fn put_field(buf: &mut Vec<u8>, tag: &str, value: &[u8]) {
    buf.extend_from_slice(tag.as_bytes());
    buf.extend_from_slice(&(value.len() as u64).to_le_bytes());
    buf.extend_from_slice(value);
}

/// Shortest round-trip decimal form; "0.7" and "0.7000" in config both parse
/// to the same f64 and therefore format identically here.
fn canonical_float(x: f64) -> String {
    format!("{x:?}")
}

/// Hex digest identifying a request; the cache and mock-fixture key.
pub fn request_hash(request: &ChatRequest) -> String {
    let mut buf = Vec::with_capacity(256);
    put_field(&mut buf, "model", request.model.as_bytes());
    match &request.system {
        Some(system) => put_field(&mut buf, "system", system.as_bytes()),
        None => put_field(&mut buf, "system?", b""),
    }
    put_field(
        &mut buf,
        "nmsg",
        &(request.messages.len() as u64).to_le_bytes(),
    );
    for message in &request.messages {
        let role = match message.role {
            super::ChatRole::User => "user",
            super::ChatRole::Assistant => "assistant",
        };
        put_field(&mut buf, "role", role.as_bytes());
        put_field(&mut buf, "text", message.text.as_bytes());
        put_field(
            &mut buf,
            "nimg",
            &(message.images.len() as u64).to_le_bytes(),
        );
        for image in &message.images {
            put_field(&mut buf, "img", image.as_bytes());
        }
    }
    put_field(
        &mut buf,
        "temperature",
        canonical_float(request.params.temperature).as_bytes(),
    );
    put_field(
        &mut buf,
        "max_tokens",
        &u64::from(request.params.max_tokens).to_le_bytes(),
    );
    match request.params.seed {
        Some(seed) => put_field(&mut buf, "seed", &seed.to_le_bytes()),
        None => put_field(&mut buf, "seed?", b""),
    }
    sha256_hex(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatMessage, ChatRequest, GenParams};

    fn fixture_request() -> ChatRequest {
        ChatRequest::new(
            "scorer-v1",
            vec![ChatMessage::user_with_images(
                "Describe the image.",
                vec!["img://42".into()],
            )],
            GenParams {
                temperature: 0.7,
                max_tokens: 512,
                seed: Some(7),
            },
        )
        .with_system("You are a captioner.")
    }

    #[test]
    fn deep_copy_hashes_equal() {
        let a = fixture_request();
        let b = a.clone();
        assert_eq!(request_hash(&a), request_hash(&b));
    }

    #[test]
    fn temperature_changes_hash() {
        let a = fixture_request();
        let mut b = a.clone();
        b.params.temperature = 0.0;
        assert_ne!(request_hash(&a), request_hash(&b));
    }

    #[test]
    fn model_changes_hash() {
        let a = fixture_request();
        let mut b = a.clone();
        b.model = "scorer-v2".into();
        assert_ne!(request_hash(&a), request_hash(&b));
    }

    #[test]
    fn absent_and_empty_system_differ() {
        let mut a = fixture_request();
        a.system = None;
        let mut b = fixture_request();
        b.system = Some(String::new());
        assert_ne!(request_hash(&a), request_hash(&b));
    }

    #[test]
    fn golden_digest_is_stable() {
        // pinned from the canonical serializer; a change here means every
        // existing cache and fixture directory is invalidated
        assert_eq!(
            request_hash(&fixture_request()),
            "9c8af56ff46c68007f9d8424110aac8a112692504486f1c6917f67b370ad4da0"
        );
    }
}
