//! Declarative run configuration shared by every pipeline stage.
//!
//! One TOML file describes a run; flags may override it; environment
//! variables hold credentials only. The fingerprint of the effective config
//! is stamped into every stage manifest, so a manifest fully identifies the
//! run that produced it.

use crate::filter::FilterConfig;
use crate::llm::RetryPolicy;
use crate::util::sha256_hex;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("missing config key: {0}")]
    MissingKey(&'static str),
    #[error("invalid config value: {0}")]
    InvalidValue(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Deterministic built-in synthesizer; needs no network or fixtures.
    #[default]
    Scripted,
    /// Fixture directory; a request without a fixture is an error.
    Mock,
    /// Remote HTTP backend.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSettings {
    pub kind: BackendKind,
    pub endpoint: String,
    pub credential_env: String,
    pub model: String,
    pub fixtures_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub requests_per_second: f64,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    pub images_as_base64: bool,
}

impl Default for BackendSettings {
    fn default() -> Self {
        BackendSettings {
            kind: BackendKind::Scripted,
            endpoint: String::new(),
            credential_env: "PIPELINE_API_KEY".into(),
            model: "default-model".into(),
            fixtures_dir: None,
            cache_dir: None,
            requests_per_second: 4.0,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
            images_as_base64: false,
        }
    }
}

impl BackendSettings {
    /// Connection settings for the HTTP backend.
    pub fn connection(&self) -> crate::llm::BackendConfig {
        crate::llm::BackendConfig {
            endpoint: self.endpoint.clone(),
            credential_env: self.credential_env.clone(),
            model: self.model.clone(),
            max_in_flight: self.max_in_flight,
            requests_per_second: self.requests_per_second,
            retry: self.retry.clone(),
            images_as_base64: self.images_as_base64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSettings {
    /// Probe image URIs over the network; off keeps records and notes them
    /// unprobed.
    pub probe: bool,
    pub probe_timeout_secs: u64,
}

impl Default for IngestSettings {
    fn default() -> Self {
        IngestSettings {
            probe: false,
            probe_timeout_secs: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurateSettings {
    pub max_subject_share: f64,
}

impl Default for CurateSettings {
    fn default() -> Self {
        CurateSettings {
            max_subject_share: 0.20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSettings {
    /// Optional TSV of `country<TAB>language` overrides layered over the
    /// builtin table.
    pub country_language_overrides: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslateSettings {
    /// Forward translation candidates for round-trip selection.
    pub k_candidates: usize,
}

impl Default for TranslateSettings {
    fn default() -> Self {
        TranslateSettings { k_candidates: 3 }
    }
}

/// The whole run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub backend: BackendSettings,
    pub ingest: IngestSettings,
    pub filter: FilterConfig,
    pub curate: CurateSettings,
    pub generate: GenerateSettings,
    pub translate: TranslateSettings,
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref().to_path_buf();
        let raw = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
            path: path.clone(),
            source,
        })?;
        let config: PipelineConfig =
            toml::from_str(&raw).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.backend.kind == BackendKind::Http && self.backend.endpoint.is_empty() {
            return Err(ConfigError::MissingKey("backend.endpoint"));
        }
        if self.backend.kind == BackendKind::Mock && self.backend.fixtures_dir.is_none() {
            return Err(ConfigError::MissingKey("backend.fixtures_dir"));
        }
        if self.backend.requests_per_second.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(ConfigError::InvalidValue(
                "backend.requests_per_second must be positive".into(),
            ));
        }
        if self.backend.max_in_flight == 0 {
            return Err(ConfigError::InvalidValue(
                "backend.max_in_flight must be >= 1".into(),
            ));
        }
        if self.backend.retry.max_attempts == 0 {
            return Err(ConfigError::InvalidValue(
                "backend.retry.max_attempts must be >= 1".into(),
            ));
        }
        if !(self.curate.max_subject_share > 0.0 && self.curate.max_subject_share <= 1.0) {
            return Err(ConfigError::InvalidValue(
                "curate.max_subject_share must be in (0, 1]".into(),
            ));
        }
        if self.translate.k_candidates == 0 {
            return Err(ConfigError::InvalidValue(
                "translate.k_candidates must be >= 1".into(),
            ));
        }
        self.filter
            .validate()
            .map_err(|e| ConfigError::InvalidValue(e.to_string()))
    }

    /// Stable fingerprint of the effective configuration (including the
    /// seed), recorded in every stage manifest. Execution knobs that cannot
    /// change outputs (worker count) are deliberately not part of it.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        sha256_hex(canonical.as_bytes())[..16].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_fingerprint_stable() {
        let config = PipelineConfig::default();
        config.validate().unwrap();
        assert_eq!(config.fingerprint(), config.fingerprint());
        assert_eq!(config.fingerprint().len(), 16);
    }

    #[test]
    fn fingerprint_changes_with_seed() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.seed = 99;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = toml::from_str::<PipelineConfig>("[curate]\nmax_subject_shore = 0.2\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("max_subject_shore"), "{err}");
    }

    #[test]
    fn http_backend_requires_endpoint() {
        let config: PipelineConfig = toml::from_str("[backend]\nkind = \"http\"\n").unwrap();
        match config.validate() {
            Err(ConfigError::MissingKey(key)) => assert_eq!(key, "backend.endpoint"),
            other => panic!("expected MissingKey, got {other:?}"),
        }
    }

    #[test]
    fn load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "seed = 7\n[backend]\nkind = \"scripted\"\n[curate]\nmax_subject_share = 0.25\n",
        )
        .unwrap();
        let config = PipelineConfig::load(&path).unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.curate.max_subject_share, 0.25);
    }
}
