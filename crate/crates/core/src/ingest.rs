//! Reading, validating, sharding, and accessibility-checking raw corpora.
//!
//! Web-crawl files are dirty; a bounded fraction of malformed lines is
//! tolerated and counted, but more than 1% aborts the stage rather than
//! silently shredding a corrupt file.

use crate::jsonl::JsonlError;
use crate::types::{SourceRecord, StageManifest};
use crate::util::stable_hash;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::Duration;
use thiserror::Error;

pub const DROP_MALFORMED: &str = "Malformed";
pub const DROP_INACCESSIBLE: &str = "Inaccessible";
pub const NOTE_UNPROBED: &str = "Unprobed";

/// Malformed-line budget: strictly more than this fraction aborts the read.
pub const MALFORMED_BUDGET: f64 = 0.01;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(
        "too many malformed lines: {fraction:.4} of {total} exceeds budget {MALFORMED_BUDGET}"
    )]
    TooManyMalformed { fraction: f64, total: u64 },
}

/// Streaming record reader. Yields valid records in file order while
/// counting malformed lines; call [`RecordStream::finish`] to obtain the
/// manifest and enforce the malformed budget.
pub struct RecordStream {
    path: PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    manifest: StageManifest,
}

impl RecordStream {
    pub fn open(path: impl AsRef<Path>, fingerprint: &str) -> Result<Self, IngestError> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|source| IngestError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(RecordStream {
            path,
            lines: BufReader::new(file).lines(),
            manifest: StageManifest::new("ingest", fingerprint),
        })
    }

    /// Accounting so far; complete only after the stream is drained.
    pub fn manifest(&self) -> &StageManifest {
        &self.manifest
    }

    /// Final manifest, enforcing the malformed budget.
    pub fn finish(self) -> Result<StageManifest, IngestError> {
        let malformed = self
            .manifest
            .drops
            .get(DROP_MALFORMED)
            .copied()
            .unwrap_or(0);
        let total = self.manifest.input_count;
        if total > 0 {
            let fraction = malformed as f64 / total as f64;
            if fraction > MALFORMED_BUDGET {
                return Err(IngestError::TooManyMalformed { fraction, total });
            }
        }
        Ok(self.manifest)
    }
}

impl Iterator for RecordStream {
    type Item = Result<SourceRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(source) => {
                    return Some(Err(IngestError::Io {
                        path: self.path.clone(),
                        source,
                    }))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Result<SourceRecord, _> = serde_json::from_str(&line);
            match parsed {
                Ok(record) if record.validate().is_ok() => {
                    self.manifest.record_kept();
                    return Some(Ok(record));
                }
                _ => {
                    self.manifest.record_drop(DROP_MALFORMED);
                }
            }
        }
    }
}

/// Read a whole file. Fails when the malformed fraction exceeds the budget.
pub fn read_records(
    path: impl AsRef<Path>,
    fingerprint: &str,
) -> Result<(Vec<SourceRecord>, StageManifest), IngestError> {
    let mut stream = RecordStream::open(path, fingerprint)?;
    let mut records = Vec::new();
    for item in &mut stream {
        records.push(item?);
    }
    let manifest = stream.finish()?;
    Ok((records, manifest))
}

// ---------------------------------------------------------------------------
// Sharding
// ---------------------------------------------------------------------------

/// Deterministic id -> shard assignment: `stable_hash(id) mod shard_count`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ShardPlan {
    pub shard_count: u32,
    pub assignment: BTreeMap<String, u32>,
}

pub fn shard_index(id: &str, shard_count: u32) -> u32 {
    (stable_hash(id.as_bytes()) % u64::from(shard_count)) as u32
}

pub fn shard<'a>(ids: impl IntoIterator<Item = &'a str>, shard_count: u32) -> ShardPlan {
    assert!(shard_count >= 1, "shard_count must be >= 1");
    let assignment = ids
        .into_iter()
        .map(|id| (id.to_string(), shard_index(id, shard_count)))
        .collect();
    ShardPlan {
        shard_count,
        assignment,
    }
}

// ---------------------------------------------------------------------------
// Accessibility check
// ---------------------------------------------------------------------------

/// Liveness probe for record URIs.
pub trait UriProber: Send + Sync {
    fn probe(&self, uri: &str, timeout: Duration) -> bool;
}

/// Probe configuration: live probing through a prober, or offline mode that
/// keeps everything and notes the records as unprobed.
pub enum ProbeMode<'a> {
    Live(&'a dyn UriProber),
    Offline,
}

/// Test/dev prober that fails a fixed set of URIs.
pub struct StubProber {
    failing: std::collections::HashSet<String>,
}

impl StubProber {
    pub fn failing(uris: impl IntoIterator<Item = String>) -> Self {
        StubProber {
            failing: uris.into_iter().collect(),
        }
    }
}

impl UriProber for StubProber {
    fn probe(&self, uri: &str, _timeout: Duration) -> bool {
        !self.failing.contains(uri)
    }
}

/// Network prober: HEAD with GET fallback, no retries.
pub struct HttpProber {
    agent: ureq::Agent,
}

impl HttpProber {
    pub fn new(timeout: Duration) -> Self {
        HttpProber {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl UriProber for HttpProber {
    fn probe(&self, uri: &str, _timeout: Duration) -> bool {
        match self.agent.head(uri).call() {
            Ok(_) => true,
            // some hosts reject HEAD outright; fall back to GET
            Err(ureq::Error::Status(405 | 501, _)) => self.agent.get(uri).call().is_ok(),
            Err(_) => false,
        }
    }
}

/// Drop records whose URI probe fails. Probes run with bounded parallelism;
/// output order equals input order regardless of probe completion order.
pub fn check_accessibility(
    records: Vec<SourceRecord>,
    mode: ProbeMode<'_>,
    timeout: Duration,
    fingerprint: &str,
) -> (Vec<SourceRecord>, StageManifest) {
    let mut manifest = StageManifest::new("check_accessibility", fingerprint);
    match mode {
        ProbeMode::Offline => {
            let n = records.len() as u64;
            for _ in &records {
                manifest.record_kept();
            }
            manifest.note_n(NOTE_UNPROBED, n);
            (records, manifest)
        }
        ProbeMode::Live(prober) => {
            let alive: Vec<bool> = records
                .par_iter()
                .map(|record| prober.probe(&record.image_uri, timeout))
                .collect();
            let mut kept = Vec::with_capacity(records.len());
            for (record, ok) in records.into_iter().zip(alive) {
                if ok {
                    manifest.record_kept();
                    kept.push(record);
                } else {
                    manifest.record_drop(DROP_INACCESSIBLE);
                }
            }
            (kept, manifest)
        }
    }
}
