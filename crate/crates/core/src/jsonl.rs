//! JSON Lines I/O: one record per line, UTF-8, no BOM.
//!
//! Parse failures carry the file path and 1-based line number so that a bad
//! record in a multi-gigabyte shard is findable.

use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Lines, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// Streaming reader yielding one parsed record per non-blank line.
pub struct JsonlReader<T> {
    path: PathBuf,
    lines: Lines<BufReader<File>>,
    line_no: usize,
    _marker: std::marker::PhantomData<T>,
}

impl<T: DeserializeOwned> JsonlReader<T> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, JsonlError> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|source| JsonlError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(JsonlReader {
            path,
            lines: BufReader::new(file).lines(),
            line_no: 0,
            _marker: std::marker::PhantomData,
        })
    }

    /// 1-based line number of the most recently yielded line.
    pub fn current_line(&self) -> usize {
        self.line_no
    }
}

impl<T: DeserializeOwned> Iterator for JsonlReader<T> {
    type Item = Result<T, JsonlError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(source) => {
                    return Some(Err(JsonlError::Io {
                        path: self.path.clone(),
                        source,
                    }))
                }
            };
            self.line_no += 1;
            // a BOM on the first line is an error, not silently skipped
            if line.trim().is_empty() {
                continue;
            }
            return Some(serde_json::from_str(&line).map_err(|e| JsonlError::Parse {
                path: self.path.clone(),
                line: self.line_no,
                message: e.to_string(),
            }));
        }
    }
}

/// Read a whole file, failing on the first malformed line.
pub fn read_all<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, JsonlError> {
    JsonlReader::open(path)?.collect()
}

/// Incremental writer producing one compact JSON object per line.
pub struct JsonlWriter {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl JsonlWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, JsonlError> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|source| JsonlError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(JsonlWriter {
            path,
            writer: BufWriter::new(file),
        })
    }

    pub fn write<T: Serialize>(&mut self, value: &T) -> Result<(), JsonlError> {
        let io_err = |source| JsonlError::Io {
            path: self.path.clone(),
            source,
        };
        let line = serde_json::to_string(value).map_err(|e| JsonlError::Parse {
            path: self.path.clone(),
            line: 0,
            message: e.to_string(),
        })?;
        self.writer.write_all(line.as_bytes()).map_err(io_err)?;
        self.writer.write_all(b"\n").map_err(io_err)
    }

    pub fn finish(mut self) -> Result<(), JsonlError> {
        self.writer.flush().map_err(|source| JsonlError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

/// Write all items and flush.
pub fn write_all<T: Serialize>(
    path: impl AsRef<Path>,
    items: impl IntoIterator<Item = T>,
) -> Result<(), JsonlError> {
    let mut writer = JsonlWriter::create(path)?;
    for item in items {
        writer.write(&item)?;
    }
    writer.finish()
}

/// Serialize then parse back; the identity law for every valid core value.
pub fn round_trip<T: Serialize + DeserializeOwned>(value: &T) -> Result<T, serde_json::Error> {
    serde_json::from_str(&serde_json::to_string(value)?)
}
