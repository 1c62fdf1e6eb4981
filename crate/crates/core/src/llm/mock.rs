//! Fixture-backed mock backend for tests and replayed runs.

use super::{request_hash, BackendError, ChatBackend, ChatRequest};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Serves responses from a directory of `<request-digest>.txt` fixtures.
/// A request with no fixture is a hard [`BackendError::MockMiss`], so a test
/// can never silently fall through to a live service.
pub struct MockBackend {
    dir: PathBuf,
}

impl MockBackend {
    pub fn new(dir: impl AsRef<Path>) -> Self {
        MockBackend {
            dir: dir.as_ref().to_path_buf(),
        }
    }

    /// Record a fixture for `request`; used by tests to stage expectations.
    pub fn record(dir: impl AsRef<Path>, request: &ChatRequest, text: &str) -> io::Result<String> {
        fs::create_dir_all(dir.as_ref())?;
        let digest = request_hash(request);
        fs::write(dir.as_ref().join(format!("{digest}.txt")), text)?;
        Ok(digest)
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let digest = request_hash(request);
        match fs::read_to_string(self.dir.join(format!("{digest}.txt"))) {
            Ok(text) => Ok(text),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(BackendError::MockMiss { digest }),
            Err(e) => Err(BackendError::Cache(e)),
        }
    }

    fn name(&self) -> &str {
        "mock"
    }
}
