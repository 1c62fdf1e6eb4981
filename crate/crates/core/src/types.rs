//! Shared domain types, their invariants, and on-disk JSON schemas.
//!
//! All types are immutable after construction and safe to share across
//! workers. Serialization round-trips exactly: `parse(serialize(v)) == v`
//! for every valid value, and invalid on-disk data fails to parse rather
//! than producing an invalid value.

use crate::lang::LangTag;
use crate::util::collapse_whitespace;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// The literal image placeholder token used in conversation text.
pub const IMAGE_TOKEN: &str = "<image>";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TypeError {
    #[error("id must be nonempty")]
    EmptyId,
    #[error("{field} must be strictly positive")]
    NonPositiveDimension { field: &'static str },
    #[error("quality score {0} out of range 1..=5")]
    QualityOutOfRange(i64),
    #[error("unknown subject category: {0:?}")]
    UnknownSubject(String),
    #[error("unknown task type: {0:?}")]
    UnknownTaskType(String),
    #[error("unknown task category: {0:?}")]
    UnknownTaskCategory(String),
    #[error("country must be a nonempty string")]
    EmptyCountry,
    #[error("score{0}_description must be nonempty")]
    EmptyScoreDescription(u8),
    #[error("manifest accounting broken: kept {kept} + drops {drops} != input {input}")]
    ManifestImbalance { input: u64, kept: u64, drops: u64 },
}

// ---------------------------------------------------------------------------
// SourceRecord
// ---------------------------------------------------------------------------

/// One web image + alt-text candidate flowing through curation.
///
/// Serialized one record per JSONL line as
/// `{id, image_uri, alt_text, lang_hint?, width_px?, height_px?, meta?}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub id: String,
    pub image_uri: String,
    pub alt_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang_hint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_px: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_px: Option<u32>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl SourceRecord {
    /// Check the per-record invariants (id nonempty, dimensions positive).
    pub fn validate(&self) -> Result<(), TypeError> {
        if self.id.is_empty() {
            return Err(TypeError::EmptyId);
        }
        if self.width_px == Some(0) {
            return Err(TypeError::NonPositiveDimension { field: "width_px" });
        }
        if self.height_px == Some(0) {
            return Err(TypeError::NonPositiveDimension { field: "height_px" });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// SubjectCategory
// ---------------------------------------------------------------------------

/// The 11 subject categories the scoring prompt assigns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SubjectCategory {
    VehiclesAndTransportation,
    CookingAndFood,
    PeopleAndEverydayLife,
    SportsAndRecreation,
    PlantsAndAnimals,
    ObjectsMaterialsAndClothing,
    BrandsAndProducts,
    GeographyBuildingsAndLandmarks,
    TraditionArtAndHistory,
    PublicFigureAndPopCulture,
    Others,
}

impl SubjectCategory {
    pub const ALL: [SubjectCategory; 11] = [
        SubjectCategory::VehiclesAndTransportation,
        SubjectCategory::CookingAndFood,
        SubjectCategory::PeopleAndEverydayLife,
        SubjectCategory::SportsAndRecreation,
        SubjectCategory::PlantsAndAnimals,
        SubjectCategory::ObjectsMaterialsAndClothing,
        SubjectCategory::BrandsAndProducts,
        SubjectCategory::GeographyBuildingsAndLandmarks,
        SubjectCategory::TraditionArtAndHistory,
        SubjectCategory::PublicFigureAndPopCulture,
        SubjectCategory::Others,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SubjectCategory::VehiclesAndTransportation => "Vehicles and Transportation",
            SubjectCategory::CookingAndFood => "Cooking and Food",
            SubjectCategory::PeopleAndEverydayLife => "People and Everyday Life",
            SubjectCategory::SportsAndRecreation => "Sports and Recreation",
            SubjectCategory::PlantsAndAnimals => "Plants and Animals",
            SubjectCategory::ObjectsMaterialsAndClothing => "Objects, Materials, and Clothing",
            SubjectCategory::BrandsAndProducts => "Brands and Products",
            SubjectCategory::GeographyBuildingsAndLandmarks => {
                "Geography, Buildings, and Landmarks"
            }
            SubjectCategory::TraditionArtAndHistory => "Tradition, Art, and History",
            SubjectCategory::PublicFigureAndPopCulture => "Public Figure and Pop-Culture",
            SubjectCategory::Others => "Others",
        }
    }

    /// Exact match on the canonical spellings, insensitive to case and
    /// whitespace runs.
    pub fn parse(s: &str) -> Result<Self, TypeError> {
        let wanted = collapse_whitespace(s).to_lowercase();
        Self::ALL
            .iter()
            .find(|c| c.as_str().to_lowercase() == wanted)
            .copied()
            .ok_or_else(|| TypeError::UnknownSubject(s.to_string()))
    }
}

impl fmt::Display for SubjectCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SubjectCategory {
    type Err = TypeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SubjectCategory::parse(s)
    }
}

impl Serialize for SubjectCategory {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for SubjectCategory {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        SubjectCategory::parse(&raw).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// TaskType
// ---------------------------------------------------------------------------

/// The 13 instruction task types used in generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskType {
    CodingAndDebugging,
    InformationSeeking,
    CreativeWriting,
    CriticalReasoning,
    PlanningAndStrategy,
    MathematicalThinking,
    TextRevisionAndEditing,
    DataAnalysis,
    RolePlayingAndScenarios,
    BrainstormingAndIdeation,
    AdviceSeekingAndProblemSolving,
    LearningAndUnderstanding,
    CulturalInterpretation,
}

impl TaskType {
    pub const ALL: [TaskType; 13] = [
        TaskType::CodingAndDebugging,
        TaskType::InformationSeeking,
        TaskType::CreativeWriting,
        TaskType::CriticalReasoning,
        TaskType::PlanningAndStrategy,
        TaskType::MathematicalThinking,
        TaskType::TextRevisionAndEditing,
        TaskType::DataAnalysis,
        TaskType::RolePlayingAndScenarios,
        TaskType::BrainstormingAndIdeation,
        TaskType::AdviceSeekingAndProblemSolving,
        TaskType::LearningAndUnderstanding,
        TaskType::CulturalInterpretation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskType::CodingAndDebugging => "Coding & Debugging",
            TaskType::InformationSeeking => "Information Seeking",
            TaskType::CreativeWriting => "Creative Writing",
            TaskType::CriticalReasoning => "Critical Reasoning",
            TaskType::PlanningAndStrategy => "Planning & Strategy",
            TaskType::MathematicalThinking => "Mathematical Thinking",
            TaskType::TextRevisionAndEditing => "Text Revision & Editing",
            TaskType::DataAnalysis => "Data Analysis",
            TaskType::RolePlayingAndScenarios => "Role Playing & Scenarios",
            TaskType::BrainstormingAndIdeation => "Brainstorming & Ideation",
            TaskType::AdviceSeekingAndProblemSolving => "Advice Seeking & Problem-Solving",
            TaskType::LearningAndUnderstanding => "Learning & Understanding",
            TaskType::CulturalInterpretation => "Cultural Interpretation",
        }
    }

    /// Exact match on the canonical spellings after trimming.
    pub fn parse(s: &str) -> Result<Self, TypeError> {
        let wanted = s.trim();
        Self::ALL
            .iter()
            .find(|t| t.as_str() == wanted)
            .copied()
            .ok_or_else(|| TypeError::UnknownTaskType(s.to_string()))
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for TaskType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for TaskType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        TaskType::parse(&raw).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// CurationVerdict
// ---------------------------------------------------------------------------

/// Country/region attribution of an alt text.
///
/// `NoSpecificCountry` is a distinguished value; the literal string
/// "No specific country" is never stored as a country name.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Region {
    Country(String),
    NoSpecificCountry,
}

impl Region {
    /// Interpret a free-form region string. Any casing of
    /// "no specific country" maps to the distinguished value.
    pub fn parse(s: &str) -> Result<Self, TypeError> {
        let trimmed = collapse_whitespace(s);
        if trimmed.is_empty() {
            return Err(TypeError::EmptyCountry);
        }
        if trimmed.to_lowercase() == "no specific country" {
            Ok(Region::NoSpecificCountry)
        } else {
            Ok(Region::Country(trimmed))
        }
    }

    pub fn country(&self) -> Option<&str> {
        match self {
            Region::Country(c) => Some(c),
            Region::NoSpecificCountry => None,
        }
    }
}

impl Serialize for Region {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Region::Country(c) => serializer.serialize_some(c),
            Region::NoSpecificCountry => serializer.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for Region {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match Option::<String>::deserialize(deserializer)? {
            None => Ok(Region::NoSpecificCountry),
            Some(s) => Region::parse(&s).map_err(serde::de::Error::custom),
        }
    }
}

/// The LLM-scoring triple for one record: quality, subject, country/region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawVerdict")]
pub struct CurationVerdict {
    pub quality: u8,
    pub subject: SubjectCategory,
    pub region: Region,
}

#[derive(Deserialize)]
struct RawVerdict {
    quality: i64,
    subject: SubjectCategory,
    region: Region,
}

impl TryFrom<RawVerdict> for CurationVerdict {
    type Error = TypeError;
    fn try_from(raw: RawVerdict) -> Result<Self, Self::Error> {
        CurationVerdict::new(raw.quality, raw.subject, raw.region)
    }
}

impl CurationVerdict {
    pub fn new(quality: i64, subject: SubjectCategory, region: Region) -> Result<Self, TypeError> {
        if !(1..=5).contains(&quality) {
            return Err(TypeError::QualityOutOfRange(quality));
        }
        Ok(CurationVerdict {
            quality: quality as u8,
            subject,
            region,
        })
    }
}

// ---------------------------------------------------------------------------
// InstructionSample
// ---------------------------------------------------------------------------

/// Conversation side. Serialized as "human"/"gpt" on disk; "assistant" is
/// accepted on input for interoperability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Human,
    Assistant,
}

impl Role {
    pub fn wire_name(&self) -> &'static str {
        match self {
            Role::Human => "human",
            Role::Assistant => "gpt",
        }
    }
}

impl Serialize for Role {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.wire_name())
    }
}

impl<'de> Deserialize<'de> for Role {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        match raw.as_str() {
            "human" => Ok(Role::Human),
            "gpt" | "assistant" => Ok(Role::Assistant),
            other => Err(serde::de::Error::custom(format!(
                "unknown role {other:?}, expected \"human\" or \"gpt\""
            ))),
        }
    }
}

/// One conversation turn, serialized as `{from, value}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    #[serde(rename = "from")]
    pub role: Role,
    #[serde(rename = "value")]
    pub text: String,
}

impl Turn {
    pub fn human(text: impl Into<String>) -> Self {
        Turn {
            role: Role::Human,
            text: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Turn {
            role: Role::Assistant,
            text: text.into(),
        }
    }

    /// Occurrences of the `<image>` placeholder in this turn.
    pub fn image_token_count(&self) -> usize {
        self.text.matches(IMAGE_TOKEN).count()
    }
}

/// A multi-turn, possibly multi-image instruction/response conversation in
/// one language.
///
/// Serialized as `{id, images, conversations:[{from, value}], language,
/// task_types?, provenance}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionSample {
    pub id: String,
    #[serde(rename = "images", default)]
    pub image_refs: Vec<String>,
    #[serde(rename = "conversations")]
    pub turns: Vec<Turn>,
    pub language: LangTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_types: Option<Vec<TaskType>>,
    pub provenance: String,
}

/// A named invariant violation found by [`validate_sample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Violation {
    /// The conversation has no turns.
    EmptyTurns,
    /// Roles do not strictly alternate starting with a human turn.
    RoleAlternation,
    /// Total `<image>` tokens across human turns != number of image refs.
    ImageTokenMismatch,
}

impl Violation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Violation::EmptyTurns => "EmptyTurns",
            Violation::RoleAlternation => "RoleAlternation",
            Violation::ImageTokenMismatch => "ImageTokenMismatch",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Check every [`InstructionSample`] invariant; the empty list means the
/// sample is well-formed. Violations are data, not errors.
pub fn validate_sample(sample: &InstructionSample) -> Vec<Violation> {
    let mut violations = Vec::new();
    if sample.turns.is_empty() {
        violations.push(Violation::EmptyTurns);
        return violations;
    }
    let alternates = sample.turns.iter().enumerate().all(|(i, turn)| {
        let expected = if i % 2 == 0 {
            Role::Human
        } else {
            Role::Assistant
        };
        turn.role == expected
    });
    if !alternates {
        violations.push(Violation::RoleAlternation);
    }
    let token_count: usize = sample
        .turns
        .iter()
        .filter(|t| t.role == Role::Human)
        .map(Turn::image_token_count)
        .sum();
    if token_count != sample.image_refs.len() {
        violations.push(Violation::ImageTokenMismatch);
    }
    violations
}

// ---------------------------------------------------------------------------
// RubricInstance
// ---------------------------------------------------------------------------

/// The 10 open-ended chat evaluation task categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum XChatCategory {
    ArtExplanation,
    BarChartInterpretation,
    DefeasibleReasoning,
    FigurativeSpeechExplanation,
    IqTest,
    Ocr,
    GraphInterpretation,
    ImageHumorUnderstanding,
    ScienceFigureExplanation,
    UnusualImages,
}

impl XChatCategory {
    pub const ALL: [XChatCategory; 10] = [
        XChatCategory::ArtExplanation,
        XChatCategory::BarChartInterpretation,
        XChatCategory::DefeasibleReasoning,
        XChatCategory::FigurativeSpeechExplanation,
        XChatCategory::IqTest,
        XChatCategory::Ocr,
        XChatCategory::GraphInterpretation,
        XChatCategory::ImageHumorUnderstanding,
        XChatCategory::ScienceFigureExplanation,
        XChatCategory::UnusualImages,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            XChatCategory::ArtExplanation => "art_explanation",
            XChatCategory::BarChartInterpretation => "bar_chart_interpretation",
            XChatCategory::DefeasibleReasoning => "defeasible_reasoning",
            XChatCategory::FigurativeSpeechExplanation => "figurative_speech_explanation",
            XChatCategory::IqTest => "iq_test",
            XChatCategory::Ocr => "ocr",
            XChatCategory::GraphInterpretation => "graph_interpretation",
            XChatCategory::ImageHumorUnderstanding => "image_humor_understanding",
            XChatCategory::ScienceFigureExplanation => "science_figure_explanation",
            XChatCategory::UnusualImages => "unusual_images",
        }
    }

    pub fn parse(s: &str) -> Result<Self, TypeError> {
        let wanted = s.trim();
        Self::ALL
            .iter()
            .find(|c| c.as_str() == wanted)
            .copied()
            .ok_or_else(|| TypeError::UnknownTaskCategory(s.to_string()))
    }
}

impl fmt::Display for XChatCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for XChatCategory {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for XChatCategory {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        XChatCategory::parse(&raw).map_err(serde::de::Error::custom)
    }
}

/// A rubric-judged evaluation item: instruction, reference, criteria, and a
/// description for each score 1..=5.
///
/// Serialized as `{task_category, instruction, image, reference_answer,
/// criteria, score1_description..score5_description, language}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRubricInstance")]
pub struct RubricInstance {
    pub task_category: XChatCategory,
    pub instruction: String,
    #[serde(rename = "image")]
    pub image_ref: String,
    pub reference_answer: String,
    pub criteria: String,
    pub score1_description: String,
    pub score2_description: String,
    pub score3_description: String,
    pub score4_description: String,
    pub score5_description: String,
    pub language: LangTag,
}

#[derive(Deserialize)]
struct RawRubricInstance {
    task_category: XChatCategory,
    instruction: String,
    image: String,
    reference_answer: String,
    criteria: String,
    score1_description: String,
    score2_description: String,
    score3_description: String,
    score4_description: String,
    score5_description: String,
    language: LangTag,
}

impl TryFrom<RawRubricInstance> for RubricInstance {
    type Error = TypeError;
    fn try_from(raw: RawRubricInstance) -> Result<Self, Self::Error> {
        let inst = RubricInstance {
            task_category: raw.task_category,
            instruction: raw.instruction,
            image_ref: raw.image,
            reference_answer: raw.reference_answer,
            criteria: raw.criteria,
            score1_description: raw.score1_description,
            score2_description: raw.score2_description,
            score3_description: raw.score3_description,
            score4_description: raw.score4_description,
            score5_description: raw.score5_description,
            language: raw.language,
        };
        inst.validate()?;
        Ok(inst)
    }
}

impl RubricInstance {
    /// Description for a score in 1..=5.
    pub fn score_description(&self, score: u8) -> &str {
        match score {
            1 => &self.score1_description,
            2 => &self.score2_description,
            3 => &self.score3_description,
            4 => &self.score4_description,
            5 => &self.score5_description,
            _ => panic!("score out of range"),
        }
    }

    pub fn validate(&self) -> Result<(), TypeError> {
        for score in 1..=5u8 {
            if self.score_description(score).trim().is_empty() {
                return Err(TypeError::EmptyScoreDescription(score));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// StageManifest
// ---------------------------------------------------------------------------

/// Per-stage accounting: counts, drop-reason histogram, config fingerprint.
///
/// Invariant: `kept_count + sum(drops) == input_count`. Non-dropping
/// annotations (e.g. records kept but unprobed) go in `notes`, which is
/// outside the accounting equation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawManifest")]
pub struct StageManifest {
    pub stage: String,
    pub input_count: u64,
    pub kept_count: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub drops: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, u64>,
    pub config_fingerprint: String,
}

#[derive(Deserialize)]
struct RawManifest {
    stage: String,
    input_count: u64,
    kept_count: u64,
    #[serde(default)]
    drops: BTreeMap<String, u64>,
    #[serde(default)]
    notes: BTreeMap<String, u64>,
    config_fingerprint: String,
}

impl TryFrom<RawManifest> for StageManifest {
    type Error = TypeError;
    fn try_from(raw: RawManifest) -> Result<Self, Self::Error> {
        let manifest = StageManifest {
            stage: raw.stage,
            input_count: raw.input_count,
            kept_count: raw.kept_count,
            drops: raw.drops,
            notes: raw.notes,
            config_fingerprint: raw.config_fingerprint,
        };
        manifest.check()?;
        Ok(manifest)
    }
}

impl StageManifest {
    pub fn new(stage: impl Into<String>, config_fingerprint: impl Into<String>) -> Self {
        StageManifest {
            stage: stage.into(),
            input_count: 0,
            kept_count: 0,
            drops: BTreeMap::new(),
            notes: BTreeMap::new(),
            config_fingerprint: config_fingerprint.into(),
        }
    }

    /// Record one input record that was kept.
    pub fn record_kept(&mut self) {
        self.input_count += 1;
        self.kept_count += 1;
    }

    /// Record one input record dropped for `reason`.
    pub fn record_drop(&mut self, reason: &str) {
        self.input_count += 1;
        *self.drops.entry(reason.to_string()).or_insert(0) += 1;
    }

    /// Record a non-dropping annotation (does not affect accounting).
    pub fn note(&mut self, key: &str) {
        self.note_n(key, 1);
    }

    pub fn note_n(&mut self, key: &str, n: u64) {
        *self.notes.entry(key.to_string()).or_insert(0) += n;
    }

    pub fn dropped_total(&self) -> u64 {
        self.drops.values().sum()
    }

    /// Verify `kept + sum(drops) == input`.
    pub fn check(&self) -> Result<(), TypeError> {
        let drops = self.dropped_total();
        if self.kept_count + drops != self.input_count {
            return Err(TypeError::ManifestImbalance {
                input: self.input_count,
                kept: self.kept_count,
                drops,
            });
        }
        Ok(())
    }
}
