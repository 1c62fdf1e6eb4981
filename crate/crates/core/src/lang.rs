//! The 39-language registry.
//!
//! Tags are lowercase two-letter codes; `iw` is kept for Hebrew to stay
//! bit-compatible with the corpus label set this toolkit targets.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Every language tag the pipeline accepts, with its English name.
pub const SUPPORTED_LANGUAGES: [(&str, &str); 39] = [
    ("am", "Amharic"),
    ("ar", "Arabic"),
    ("bg", "Bulgarian"),
    ("bn", "Bengali"),
    ("cs", "Czech"),
    ("de", "German"),
    ("el", "Greek"),
    ("en", "English"),
    ("es", "Spanish"),
    ("fa", "Persian"),
    ("fr", "French"),
    ("ga", "Irish"),
    ("hi", "Hindi"),
    ("id", "Indonesian"),
    ("ig", "Igbo"),
    ("it", "Italian"),
    ("iw", "Hebrew"),
    ("ja", "Japanese"),
    ("jv", "Javanese"),
    ("ko", "Korean"),
    ("mn", "Mongolian"),
    ("ms", "Malay"),
    ("nl", "Dutch"),
    ("no", "Norwegian"),
    ("pl", "Polish"),
    ("pt", "Portuguese"),
    ("ro", "Romanian"),
    ("ru", "Russian"),
    ("si", "Sinhala"),
    ("su", "Sundanese"),
    ("sw", "Swahili"),
    ("ta", "Tamil"),
    ("te", "Telugu"),
    ("th", "Thai"),
    ("tr", "Turkish"),
    ("uk", "Ukrainian"),
    ("ur", "Urdu"),
    ("vi", "Vietnamese"),
    ("zh", "Chinese"),
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unsupported language tag: {0:?}")]
pub struct UnsupportedLanguage(pub String);

pub fn is_supported(tag: &str) -> bool {
    SUPPORTED_LANGUAGES.iter().any(|(t, _)| *t == tag)
}

/// English name of a supported language tag.
pub fn language_name(tag: &str) -> Option<&'static str> {
    SUPPORTED_LANGUAGES
        .iter()
        .find(|(t, _)| *t == tag)
        .map(|(_, n)| *n)
}

/// All supported tags, ascending.
pub fn supported_tags() -> impl Iterator<Item = &'static str> {
    SUPPORTED_LANGUAGES.iter().map(|(t, _)| *t)
}

/// A validated language tag from the supported set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LangTag(String);

impl LangTag {
    pub fn new(tag: &str) -> Result<Self, UnsupportedLanguage> {
        if is_supported(tag) {
            Ok(LangTag(tag.to_string()))
        } else {
            Err(UnsupportedLanguage(tag.to_string()))
        }
    }

    /// The `en` tag, used as a default in several stages.
    pub fn english() -> Self {
        LangTag("en".to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn name(&self) -> &'static str {
        language_name(&self.0).expect("validated tag")
    }

    pub fn is_english(&self) -> bool {
        self.0 == "en"
    }
}

impl fmt::Display for LangTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for LangTag {
    type Err = UnsupportedLanguage;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LangTag::new(s)
    }
}

impl Serialize for LangTag {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for LangTag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        LangTag::new(&raw).map_err(serde::de::Error::custom)
    }
}
