//! babelkit: a deterministic, stage-based toolkit for building multilingual
//! multimodal instruction corpora and evaluating models on them.
//!
//! The library is organized around pipeline stages. Each stage consumes and
//! produces JSON Lines files, writes a [`types::StageManifest`] accounting for
//! every input record, and reaches any remote model exclusively through the
//! pluggable, cached [`llm`] client so that runs are reproducible.

pub mod config;
pub mod curate;
pub mod eval;
pub mod filter;
pub mod generate;
pub mod ingest;
pub mod jsonl;
pub mod lang;
pub mod langid;
pub mod llm;
pub mod mix;
pub mod translate;
pub mod types;
pub mod util;

pub use types::{
    CurationVerdict, InstructionSample, Region, Role, RubricInstance, SourceRecord, StageManifest,
    SubjectCategory, TaskType, Turn, XChatCategory,
};
