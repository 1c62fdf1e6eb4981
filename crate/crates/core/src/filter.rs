//! Heuristic quality gates and deduplication ahead of LLM scoring.
//!
//! Every stage here is idempotent (running it on its own output changes
//! nothing) and order-preserving.

use crate::types::{SourceRecord, StageManifest};
use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

pub const DROP_DUPLICATE: &str = "Duplicate";
pub const DROP_LOW_ALIGNMENT: &str = "LowAlignment";
pub const NOTE_UNSCORED: &str = "Unscored";

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("wordlist unavailable: {path}: {source}")]
    WordlistUnavailable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid filter config: {0}")]
    InvalidConfig(String),
    #[error("alignment scorer unavailable: {0}")]
    ScorerUnavailable(String),
}

/// Heuristic gate thresholds. The named criteria are fixed; every value is
/// configurable.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FilterConfig {
    pub min_dim_px: u32,
    pub max_aspect_ratio: f64,
    pub min_alt_chars: usize,
    pub max_alt_chars: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nsfw_terms: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offensive_terms: Option<PathBuf>,
    pub alignment_threshold: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_dim_px: 128,
            max_aspect_ratio: 3.0,
            min_alt_chars: 10,
            max_alt_chars: 2000,
            nsfw_terms: None,
            offensive_terms: None,
            alignment_threshold: 0.28,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        if self.min_dim_px == 0 {
            return Err(FilterError::InvalidConfig("min_dim_px must be > 0".into()));
        }
        if self.max_aspect_ratio < 1.0 {
            return Err(FilterError::InvalidConfig(
                "max_aspect_ratio must be >= 1".into(),
            ));
        }
        if self.min_alt_chars > self.max_alt_chars {
            return Err(FilterError::InvalidConfig(
                "min_alt_chars must be <= max_alt_chars".into(),
            ));
        }
        if !(-1.0..=1.0).contains(&self.alignment_threshold) {
            return Err(FilterError::InvalidConfig(
                "alignment_threshold must be in [-1, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Why a record was dropped, in fixed evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeuristicDrop {
    ImageTooSmall,
    AspectRatio,
    AltTooShort,
    AltTooLong,
    Nsfw,
    Offensive,
}

impl HeuristicDrop {
    pub fn as_str(&self) -> &'static str {
        match self {
            HeuristicDrop::ImageTooSmall => "ImageTooSmall",
            HeuristicDrop::AspectRatio => "AspectRatio",
            HeuristicDrop::AltTooShort => "AltTooShort",
            HeuristicDrop::AltTooLong => "AltTooLong",
            HeuristicDrop::Nsfw => "Nsfw",
            HeuristicDrop::Offensive => "Offensive",
        }
    }
}

impl fmt::Display for HeuristicDrop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDecision {
    Keep,
    Drop(HeuristicDrop),
}

/// One term per line, UTF-8, `#` comments.
#[derive(Debug, Clone, Default)]
pub struct Wordlist {
    terms: Vec<String>,
}

impl Wordlist {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, FilterError> {
        let path = path.as_ref().to_path_buf();
        let raw = fs::read_to_string(&path)
            .map_err(|source| FilterError::WordlistUnavailable { path, source })?;
        Ok(Self::from_text(&raw))
    }

    pub fn from_text(raw: &str) -> Self {
        let terms = raw
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(normalize_text)
            .collect();
        Wordlist { terms }
    }

    /// Substring match against already-normalized text.
    pub fn matches(&self, normalized_text: &str) -> bool {
        self.terms.iter().any(|t| normalized_text.contains(t))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// NFC, lowercase, whitespace collapsed: the normalization used for both
/// wordlist matching and the dedup key.
pub fn normalize_text(s: &str) -> String {
    let nfc: String = s.nfc().collect();
    nfc.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Apply the gates in fixed order: size, aspect, length, nsfw, offensive.
/// The first failing criterion determines the drop reason. Records missing
/// dimensions skip the size and aspect checks.
pub fn heuristic_filter(
    record: &SourceRecord,
    config: &FilterConfig,
    nsfw: Option<&Wordlist>,
    offensive: Option<&Wordlist>,
) -> FilterDecision {
    if let (Some(w), Some(h)) = (record.width_px, record.height_px) {
        if w < config.min_dim_px || h < config.min_dim_px {
            return FilterDecision::Drop(HeuristicDrop::ImageTooSmall);
        }
        let (long, short) = if w >= h { (w, h) } else { (h, w) };
        if f64::from(long) / f64::from(short) > config.max_aspect_ratio {
            return FilterDecision::Drop(HeuristicDrop::AspectRatio);
        }
    }
    let alt_chars = record.alt_text.chars().count();
    if alt_chars < config.min_alt_chars {
        return FilterDecision::Drop(HeuristicDrop::AltTooShort);
    }
    if alt_chars > config.max_alt_chars {
        return FilterDecision::Drop(HeuristicDrop::AltTooLong);
    }
    let normalized = normalize_text(&record.alt_text);
    if let Some(list) = nsfw {
        if list.matches(&normalized) {
            return FilterDecision::Drop(HeuristicDrop::Nsfw);
        }
    }
    if let Some(list) = offensive {
        if list.matches(&normalized) {
            return FilterDecision::Drop(HeuristicDrop::Offensive);
        }
    }
    FilterDecision::Keep
}

/// Run the heuristic gate over a corpus, loading wordlists if configured.
pub fn run_heuristic_stage(
    records: Vec<SourceRecord>,
    config: &FilterConfig,
    fingerprint: &str,
) -> Result<(Vec<SourceRecord>, StageManifest), FilterError> {
    config.validate()?;
    let nsfw = config.nsfw_terms.as_ref().map(Wordlist::load).transpose()?;
    let offensive = config
        .offensive_terms
        .as_ref()
        .map(Wordlist::load)
        .transpose()?;
    let mut manifest = StageManifest::new("filter", fingerprint);
    let mut kept = Vec::with_capacity(records.len());
    for record in records {
        match heuristic_filter(&record, config, nsfw.as_ref(), offensive.as_ref()) {
            FilterDecision::Keep => {
                manifest.record_kept();
                kept.push(record);
            }
            FilterDecision::Drop(reason) => manifest.record_drop(reason.as_str()),
        }
    }
    Ok((kept, manifest))
}

/// Exact-duplicate removal on the key (image_uri, normalized alt_text).
/// First occurrence wins; input order preserved.
pub fn dedup(records: Vec<SourceRecord>, fingerprint: &str) -> (Vec<SourceRecord>, StageManifest) {
    let mut manifest = StageManifest::new("dedup", fingerprint);
    let mut seen: HashSet<(String, String)> = HashSet::with_capacity(records.len());
    let mut kept = Vec::with_capacity(records.len());
    for record in records {
        let key = (record.image_uri.clone(), normalize_text(&record.alt_text));
        if seen.insert(key) {
            manifest.record_kept();
            kept.push(record);
        } else {
            manifest.record_drop(DROP_DUPLICATE);
        }
    }
    (kept, manifest)
}

/// Pluggable image-text similarity in [-1, 1].
pub trait AlignmentScorer: Send + Sync {
    fn score(&self, record: &SourceRecord) -> Result<f64, FilterError>;
}

/// Fixture scorer mapping record id -> score; unknown ids score 0.
pub struct FixtureScorer {
    scores: std::collections::HashMap<String, f64>,
}

impl FixtureScorer {
    pub fn new(scores: std::collections::HashMap<String, f64>) -> Self {
        FixtureScorer { scores }
    }

    /// Load from JSONL lines `{"id": ..., "score": ...}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, FilterError> {
        #[derive(serde::Deserialize)]
        struct Line {
            id: String,
            score: f64,
        }
        let lines: Vec<Line> = crate::jsonl::read_all(path.as_ref())
            .map_err(|e| FilterError::ScorerUnavailable(e.to_string()))?;
        Ok(FixtureScorer {
            scores: lines.into_iter().map(|l| (l.id, l.score)).collect(),
        })
    }
}

impl AlignmentScorer for FixtureScorer {
    fn score(&self, record: &SourceRecord) -> Result<f64, FilterError> {
        Ok(self.scores.get(&record.id).copied().unwrap_or(0.0))
    }
}

/// Keep records whose alignment score is >= tau (boundary inclusive).
/// With no scorer the gate is pass-through and records are noted Unscored.
pub fn alignment_gate(
    records: Vec<SourceRecord>,
    scorer: Option<&dyn AlignmentScorer>,
    tau: f64,
    fingerprint: &str,
) -> Result<(Vec<SourceRecord>, StageManifest), FilterError> {
    let mut manifest = StageManifest::new("alignment_gate", fingerprint);
    match scorer {
        None => {
            let n = records.len() as u64;
            for _ in &records {
                manifest.record_kept();
            }
            manifest.note_n(NOTE_UNSCORED, n);
            Ok((records, manifest))
        }
        Some(scorer) => {
            let mut kept = Vec::with_capacity(records.len());
            for record in records {
                if scorer.score(&record)? >= tau {
                    manifest.record_kept();
                    kept.push(record);
                } else {
                    manifest.record_drop(DROP_LOW_ALIGNMENT);
                }
            }
            Ok((kept, manifest))
        }
    }
}
