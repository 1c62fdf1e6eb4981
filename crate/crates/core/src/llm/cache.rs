//! Content-addressed response cache: one `<digest>.txt` file per response.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

/// Persistent request-digest -> response-text store.
///
/// Writes go through a temp file plus rename so concurrent workers never
/// observe a torn entry, and a hit is always byte-identical to what was
/// stored.
pub struct ResponseCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
    counter: AtomicU64,
}

impl ResponseCache {
    pub fn open(dir: impl AsRef<Path>) -> io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache {
            dir,
            write_lock: Mutex::new(()),
            counter: AtomicU64::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.txt"))
    }

    pub fn get(&self, digest: &str) -> io::Result<Option<String>> {
        match fs::read_to_string(self.entry_path(digest)) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn put(&self, digest: &str, text: &str) -> io::Result<()> {
        let _guard = self.write_lock.lock().unwrap();
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let tmp = self.dir.join(format!(".{digest}.{n}.tmp"));
        fs::write(&tmp, text)?;
        fs::rename(&tmp, self.entry_path(digest))
    }

    pub fn contains(&self, digest: &str) -> bool {
        self.entry_path(digest).exists()
    }
}
