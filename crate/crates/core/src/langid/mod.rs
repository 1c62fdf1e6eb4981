//! Offline language identification: script-first, trigram-cosine fallback.
//!
//! Single-script text (Hangul, kana, Devanagari, ...) is decided by Unicode
//! script alone with confidence 1.0. Languages sharing a script (Latin,
//! Cyrillic, Arabic) are resolved by cosine similarity against character
//! trigram profiles built from seed corpora.

use crate::lang::is_supported;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;
use thiserror::Error;

/// Minimum seed-corpus size per language for profile building.
pub const MIN_PROFILE_CHARS: usize = 10_000;

/// Letters shorter inputs are reported as undecidable.
pub const UNDECIDED: &str = "und";

#[derive(Debug, Error)]
pub enum LangIdError {
    #[error("insufficient text for {language}: {have} chars, need {MIN_PROFILE_CHARS}")]
    InsufficientText { language: String, have: usize },
    #[error("unsupported language tag: {0}")]
    UnsupportedTag(String),
    #[error("profile file {path}: {message}")]
    BadProfileFile { path: String, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Scripts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Script {
    Latin,
    Cyrillic,
    Greek,
    Arabic,
    Hebrew,
    Devanagari,
    Bengali,
    Tamil,
    Telugu,
    Sinhala,
    Thai,
    Ethiopic,
    Hangul,
    Kana,
    Han,
    Other,
}

fn script_of(c: char) -> Script {
    match c as u32 {
        0x0041..=0x024F | 0x1E00..=0x1EFF => Script::Latin,
        0x0370..=0x03FF => Script::Greek,
        0x0400..=0x052F => Script::Cyrillic,
        0x0590..=0x05FF => Script::Hebrew,
        0x0600..=0x06FF | 0x0750..=0x077F | 0x08A0..=0x08FF => Script::Arabic,
        0x0900..=0x097F => Script::Devanagari,
        0x0980..=0x09FF => Script::Bengali,
        0x0B80..=0x0BFF => Script::Tamil,
        0x0C00..=0x0C7F => Script::Telugu,
        0x0D80..=0x0DFF => Script::Sinhala,
        0x0E00..=0x0E7F => Script::Thai,
        0x1200..=0x137F => Script::Ethiopic,
        0x1100..=0x11FF | 0x3130..=0x318F | 0xAC00..=0xD7AF => Script::Hangul,
        0x3040..=0x309F | 0x30A0..=0x30FF | 0x31F0..=0x31FF => Script::Kana,
        0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF => Script::Han,
        _ => Script::Other,
    }
}

/// Scripts that identify exactly one supported language. Han maps to zh by
/// the han-defaults-to-zh rule; any kana presence overrides to ja first.
fn unique_script_language(script: Script) -> Option<&'static str> {
    match script {
        Script::Hangul => Some("ko"),
        Script::Kana => Some("ja"),
        Script::Devanagari => Some("hi"),
        Script::Thai => Some("th"),
        Script::Hebrew => Some("iw"),
        Script::Greek => Some("el"),
        Script::Ethiopic => Some("am"),
        Script::Tamil => Some("ta"),
        Script::Telugu => Some("te"),
        Script::Bengali => Some("bn"),
        Script::Sinhala => Some("si"),
        Script::Han => Some("zh"),
        _ => None,
    }
}

const SCRIPT_MAJORITY: f64 = 0.8;

// ---------------------------------------------------------------------------
// Trigram profiles
// ---------------------------------------------------------------------------

/// Normalized trigram frequency table for one language.
#[derive(Debug, Clone, PartialEq)]
pub struct LangProfile {
    pub tag: String,
    trigrams: BTreeMap<String, f64>,
    norm: f64,
}

impl LangProfile {
    fn from_counts(tag: String, counts: HashMap<String, u64>) -> Self {
        let total: u64 = counts.values().sum();
        let trigrams: BTreeMap<String, f64> = counts
            .into_iter()
            .map(|(gram, count)| (gram, count as f64 / total as f64))
            .collect();
        let norm = trigrams.values().map(|f| f * f).sum::<f64>().sqrt();
        LangProfile {
            tag,
            trigrams,
            norm,
        }
    }

    /// Frequencies sum to 1 within 1e-9.
    pub fn frequency_sum(&self) -> f64 {
        self.trigrams.values().sum()
    }

    fn cosine(&self, other_counts: &HashMap<String, u64>, other_norm: f64) -> f64 {
        if self.norm == 0.0 || other_norm == 0.0 {
            return 0.0;
        }
        let dot: f64 = other_counts
            .iter()
            .filter_map(|(gram, &count)| self.trigrams.get(gram).map(|f| f * count as f64))
            .sum();
        dot / (self.norm * other_norm)
    }
}

/// Keep letters and spaces, lowercase, collapse whitespace, pad with a space
/// on each side so word boundaries form trigrams.
fn normalize_for_trigrams(text: &str) -> String {
    let kept: String = text
        .chars()
        .map(|c| if c.is_alphabetic() { c } else { ' ' })
        .collect();
    let collapsed = kept
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    if collapsed.is_empty() {
        collapsed
    } else {
        format!(" {collapsed} ")
    }
}

fn trigram_counts(text: &str) -> HashMap<String, u64> {
    let normalized = normalize_for_trigrams(text);
    let chars: Vec<char> = normalized.chars().collect();
    let mut counts = HashMap::new();
    for window in chars.windows(3) {
        let gram: String = window.iter().collect();
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// The full detector: unique-script rules plus trigram profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    profiles: Vec<LangProfile>,
}

impl ProfileSet {
    pub fn profiles(&self) -> &[LangProfile] {
        &self.profiles
    }

    /// Detect the language of `text`.
    ///
    /// Returns ("und", 0) when the text has no letters. Script-determined
    /// cases return confidence 1.0; trigram fallback returns the cosine of
    /// the winning profile.
    pub fn detect(&self, text: &str) -> (String, f64) {
        let mut script_counts: BTreeMap<Script, usize> = BTreeMap::new();
        let mut letters = 0usize;
        for c in text.chars() {
            if c.is_alphabetic() {
                letters += 1;
                *script_counts.entry(script_of(c)).or_insert(0) += 1;
            }
        }
        if letters == 0 {
            return (UNDECIDED.to_string(), 0.0);
        }
        let count = |s: Script| script_counts.get(&s).copied().unwrap_or(0);

        // Japanese mixes Han with kana; any kana presence with a CJK
        // majority decides ja before the Han rule can fire.
        let kana = count(Script::Kana);
        let han = count(Script::Han);
        if kana > 0 && (kana + han) as f64 / letters as f64 >= SCRIPT_MAJORITY {
            return ("ja".to_string(), 1.0);
        }
        for (&script, &n) in &script_counts {
            if n as f64 / letters as f64 >= SCRIPT_MAJORITY {
                if let Some(tag) = unique_script_language(script) {
                    return (tag.to_string(), 1.0);
                }
            }
        }

        // trigram fallback over the profiled languages
        let counts = trigram_counts(text);
        if counts.is_empty() || self.profiles.is_empty() {
            return (UNDECIDED.to_string(), 0.0);
        }
        let norm = counts
            .values()
            .map(|&c| (c as f64) * (c as f64))
            .sum::<f64>()
            .sqrt();
        let mut best: Option<(f64, &str)> = None;
        for profile in &self.profiles {
            let cos = profile.cosine(&counts, norm);
            let better = match best {
                None => true,
                // strict improvement; ties keep the earlier (alphabetical) tag
                Some((b, _)) => cos > b,
            };
            if better {
                best = Some((cos, &profile.tag));
            }
        }
        let (confidence, tag) = best.expect("profiles nonempty");
        (tag.to_string(), confidence.clamp(0.0, 1.0))
    }

    /// Serialize to the versioned text format: `tag<TAB>trigram<TAB>freq`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LangIdError> {
        let mut out = String::from("babelkit-langid\t1\n");
        for profile in &self.profiles {
            for (gram, freq) in &profile.trigrams {
                writeln!(out, "{}\t{}\t{:?}", profile.tag, gram, freq).expect("string write");
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LangIdError> {
        let path_str = path.as_ref().display().to_string();
        let raw = std::fs::read_to_string(&path)?;
        let mut lines = raw.lines();
        match lines.next() {
            Some(header) if header.starts_with("babelkit-langid\t") => {}
            _ => {
                return Err(LangIdError::BadProfileFile {
                    path: path_str,
                    message: "missing version header".into(),
                })
            }
        }
        let mut tables: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let (Some(tag), Some(gram), Some(freq)) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(LangIdError::BadProfileFile {
                    path: path_str,
                    message: format!("line {}: expected tag<TAB>trigram<TAB>freq", i + 2),
                });
            };
            let freq: f64 = freq.parse().map_err(|e| LangIdError::BadProfileFile {
                path: path_str.clone(),
                message: format!("line {}: bad frequency: {e}", i + 2),
            })?;
            tables
                .entry(tag.to_string())
                .or_default()
                .insert(gram.to_string(), freq);
        }
        let profiles = tables
            .into_iter()
            .map(|(tag, trigrams)| {
                let norm = trigrams.values().map(|f| f * f).sum::<f64>().sqrt();
                LangProfile {
                    tag,
                    trigrams,
                    norm,
                }
            })
            .collect();
        Ok(ProfileSet { profiles })
    }
}

/// Build normalized trigram profiles from seed corpora (>= 10k chars per
/// language). Deterministic.
pub fn build_profiles(corpus: &BTreeMap<String, String>) -> Result<ProfileSet, LangIdError> {
    let mut profiles = Vec::with_capacity(corpus.len());
    for (tag, text) in corpus {
        if !is_supported(tag) {
            return Err(LangIdError::UnsupportedTag(tag.clone()));
        }
        let have = text.chars().count();
        if have < MIN_PROFILE_CHARS {
            return Err(LangIdError::InsufficientText {
                language: tag.clone(),
                have,
            });
        }
        profiles.push(LangProfile::from_counts(tag.clone(), trigram_counts(text)));
    }
    Ok(ProfileSet { profiles })
}

/// Languages with built-in seed corpora (the Latin/Cyrillic/Arabic-script
/// set that needs trigram discrimination; single-script languages are
/// decided by script alone).
pub const BUILTIN_PROFILE_LANGUAGES: [&str; 10] =
    ["ar", "de", "en", "es", "fr", "id", "it", "pt", "ru", "sw"];

macro_rules! seed {
    ($tag:literal) => {
        (
            $tag,
            include_str!(concat!("../../data/langid/", $tag, ".txt")),
        )
    };
}

/// The detector built from the embedded seed corpora.
pub fn builtin() -> &'static ProfileSet {
    static BUILTIN: OnceLock<ProfileSet> = OnceLock::new();
    BUILTIN.get_or_init(|| {
        let seeds: [(&str, &str); 10] = [
            seed!("ar"),
            seed!("de"),
            seed!("en"),
            seed!("es"),
            seed!("fr"),
            seed!("id"),
            seed!("it"),
            seed!("pt"),
            seed!("ru"),
            seed!("sw"),
        ];
        let corpus: BTreeMap<String, String> = seeds
            .into_iter()
            .map(|(tag, text)| (tag.to_string(), text.to_string()))
            .collect();
        build_profiles(&corpus).expect("builtin seed corpora are valid")
    })
}

impl crate::eval::LanguageDetector for ProfileSet {
    fn detect(&self, text: &str) -> (String, f64) {
        ProfileSet::detect(self, text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_or_symbol_text_is_undecided() {
        let p = builtin();
        assert_eq!(p.detect(""), (UNDECIDED.to_string(), 0.0));
        assert_eq!(p.detect("1234 !!! ??"), (UNDECIDED.to_string(), 0.0));
    }

    #[test]
    fn hangul_is_korean_with_full_confidence() {
        let (tag, conf) = builtin().detect("안녕하세요 반갑습니다");
        assert_eq!(tag, "ko");
        assert_eq!(conf, 1.0);
    }

    #[test]
    fn devanagari_is_hindi() {
        let (tag, conf) = builtin().detect("नमस्ते दुनिया");
        assert_eq!(tag, "hi");
        assert_eq!(conf, 1.0);
    }

    #[test]
    fn kana_overrides_han_to_japanese() {
        let (tag, _) = builtin().detect("東京の天気はとてもいいです");
        assert_eq!(tag, "ja");
        // pure Han defaults to Chinese
        let (tag, _) = builtin().detect("今天天气很好我们去公园散步");
        assert_eq!(tag, "zh");
    }

    #[test]
    fn hebrew_maps_to_legacy_iw() {
        let (tag, conf) = builtin().detect("שלום עולם מה שלומך היום");
        assert_eq!(tag, "iw");
        assert_eq!(conf, 1.0);
    }

    #[test]
    fn latin_languages_resolved_by_trigrams() {
        let p = builtin();
        assert_eq!(
            p.detect("the weather is very nice today and we walked to the market")
                .0,
            "en"
        );
        assert_eq!(
            p.detect("el tiempo está muy bien hoy y caminamos juntos hasta el mercado")
                .0,
            "es"
        );
        assert_eq!(
            p.detect("cuaca hari ini sangat bagus dan kami berjalan kaki ke pasar bersama")
                .0,
            "id"
        );
    }

    #[test]
    fn profile_frequencies_sum_to_one() {
        for profile in builtin().profiles() {
            assert!(
                (profile.frequency_sum() - 1.0).abs() < 1e-9,
                "{} sums to {}",
                profile.tag,
                profile.frequency_sum()
            );
        }
    }

    #[test]
    fn build_rejects_small_corpora_and_unknown_tags() {
        let mut corpus = BTreeMap::new();
        corpus.insert("en".to_string(), "too short".to_string());
        assert!(matches!(
            build_profiles(&corpus),
            Err(LangIdError::InsufficientText { .. })
        ));
        let mut corpus = BTreeMap::new();
        corpus.insert("xx".to_string(), "z".repeat(20_000));
        assert!(matches!(
            build_profiles(&corpus),
            Err(LangIdError::UnsupportedTag(_))
        ));
    }

    #[test]
    fn build_is_deterministic() {
        let mut corpus = BTreeMap::new();
        corpus.insert(
            "en".to_string(),
            include_str!("../../data/langid/en.txt").to_string(),
        );
        let a = build_profiles(&corpus).unwrap();
        let b = build_profiles(&corpus).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn disjoint_script_corpora_have_disjoint_top_trigrams() {
        let p = builtin();
        let en = p.profiles().iter().find(|q| q.tag == "en").unwrap();
        let ru = p.profiles().iter().find(|q| q.tag == "ru").unwrap();
        let top = |prof: &LangProfile| {
            let mut grams: Vec<(&String, &f64)> = prof.trigrams.iter().collect();
            grams.sort_by(|a, b| b.1.partial_cmp(a.1).unwrap());
            grams
                .into_iter()
                .take(20)
                .map(|(g, _)| g.clone())
                .collect::<Vec<_>>()
        };
        let en_top = top(en);
        let ru_top = top(ru);
        assert!(en_top.iter().all(|g| !ru_top.contains(g)));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profiles.tsv");
        builtin().save(&path).unwrap();
        let loaded = ProfileSet::load(&path).unwrap();
        assert_eq!(loaded, *builtin());
    }

    #[test]
    fn training_corpora_self_classify() {
        // resubstitution: each seed corpus must detect as itself
        let p = builtin();
        for (tag, text) in [
            ("en", include_str!("../../data/langid/en.txt")),
            ("es", include_str!("../../data/langid/es.txt")),
            ("pt", include_str!("../../data/langid/pt.txt")),
            ("fr", include_str!("../../data/langid/fr.txt")),
            ("de", include_str!("../../data/langid/de.txt")),
            ("it", include_str!("../../data/langid/it.txt")),
            ("id", include_str!("../../data/langid/id.txt")),
            ("sw", include_str!("../../data/langid/sw.txt")),
            ("ru", include_str!("../../data/langid/ru.txt")),
            ("ar", include_str!("../../data/langid/ar.txt")),
        ] {
            assert_eq!(p.detect(text).0, tag, "seed corpus for {tag} misclassified");
        }
    }
}
