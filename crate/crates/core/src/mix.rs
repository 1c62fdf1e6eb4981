//! Mixture planning and corpus assembly: language-ratio enforcement,
//! seeded sampling, distribution statistics, and ratio-sweep planning.
//!
//! Counts are apportioned by the largest-remainder method so plans always
//! sum exactly to the requested total, with alphabetical tiebreak for
//! determinism.

use crate::types::StageManifest;
use crate::util::{derive_rng, round1};
use rand::seq::index::sample as index_sample;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const ENGLISH_TAG: &str = "en";

#[derive(Debug, Error)]
pub enum MixError {
    #[error("invalid mix spec: {0}")]
    InvalidSpec(String),
    #[error("insufficient pool for {language}: have {have}, need {need}")]
    InsufficientPool {
        language: String,
        have: usize,
        need: u64,
    },
}

/// A mixture request: total size, English fraction, and relative weights
/// over the non-English languages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub total_n: u64,
    pub english_fraction: f64,
    pub language_weights: BTreeMap<String, f64>,
    pub seed: u64,
}

impl MixSpec {
    pub fn validate(&self) -> Result<(), MixError> {
        if self.total_n == 0 {
            return Err(MixError::InvalidSpec("total_n must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.english_fraction) {
            return Err(MixError::InvalidSpec(format!(
                "english_fraction {} outside [0, 1]",
                self.english_fraction
            )));
        }
        if self
            .language_weights
            .values()
            .any(|&w| w < 0.0 || !w.is_finite())
        {
            return Err(MixError::InvalidSpec(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let weight_sum: f64 = self.language_weights.values().sum();
        if self.english_fraction < 1.0 && weight_sum <= 0.0 {
            return Err(MixError::InvalidSpec(
                "non-English weights must sum to a positive value when english_fraction < 1".into(),
            ));
        }
        if self.language_weights.contains_key(ENGLISH_TAG) {
            return Err(MixError::InvalidSpec(
                "language_weights cover the non-English set; do not include en".into(),
            ));
        }
        Ok(())
    }
}

/// Largest-remainder (Hamilton) apportionment of `total` over `weights`.
/// Counts sum exactly to `total`; remainder ties break alphabetically.
pub fn largest_remainder(total: u64, weights: &BTreeMap<String, f64>) -> BTreeMap<String, u64> {
    let weight_sum: f64 = weights.values().sum();
    if total == 0 || weight_sum <= 0.0 {
        return weights.keys().map(|k| (k.clone(), 0)).collect();
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    // (remainder, name) sorted descending by remainder, ascending by name
    let mut remainders: Vec<(f64, &String)> = Vec::with_capacity(weights.len());
    let mut allocated: u64 = 0;
    for (language, &weight) in weights {
        let quota = total as f64 * weight / weight_sum;
        let floor = quota.floor() as u64;
        allocated += floor;
        counts.insert(language.clone(), floor);
        remainders.push((quota - floor as f64, language));
    }
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(b.1)));
    let mut leftover = total - allocated;
    for (_, language) in remainders {
        if leftover == 0 {
            break;
        }
        *counts.get_mut(language).unwrap() += 1;
        leftover -= 1;
    }
    counts
}

/// Plan per-language counts: `round(p * N)` English, the rest apportioned by
/// largest remainder over the weights. Sums exactly to `N`.
pub fn plan_mixture(spec: &MixSpec) -> Result<BTreeMap<String, u64>, MixError> {
    spec.validate()?;
    let english = (spec.english_fraction * spec.total_n as f64).round() as u64;
    let english = english.min(spec.total_n);
    let rest = spec.total_n - english;
    let mut plan = largest_remainder(rest, &spec.language_weights);
    plan.insert(ENGLISH_TAG.to_string(), english);
    Ok(plan)
}

/// Uniform without-replacement seeded sampling per language.
/// Output order: languages ascending, then sampled order within a language.
pub fn sample_manifest(
    pool: &BTreeMap<String, Vec<String>>,
    plan: &BTreeMap<String, u64>,
    seed: u64,
    fingerprint: &str,
) -> Result<(Vec<String>, StageManifest), MixError> {
    for (language, &need) in plan {
        let have = pool.get(language).map_or(0, Vec::len);
        if (have as u64) < need {
            return Err(MixError::InsufficientPool {
                language: language.clone(),
                have,
                need,
            });
        }
    }
    let mut manifest = StageManifest::new("sample_manifest", fingerprint);
    let mut chosen = Vec::new();
    for (language, &need) in plan {
        if need == 0 {
            continue;
        }
        let ids = &pool[language];
        let mut rng = derive_rng(seed, language);
        let picked = index_sample(&mut rng, ids.len(), need as usize);
        for idx in picked {
            manifest.record_kept();
            chosen.push(ids[idx].clone());
        }
    }
    Ok((chosen, manifest))
}

/// Per-language counts and percentage distribution of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
}

impl CorpusStats {
    /// Percentage share of a language, rounded to one decimal (half up).
    pub fn percent(&self, language: &str) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let count = self.counts.get(language).copied().unwrap_or(0);
        round1(count as f64 / self.total as f64 * 100.0)
    }

    pub fn english_count(&self) -> u64 {
        self.counts.get(ENGLISH_TAG).copied().unwrap_or(0)
    }

    pub fn multilingual_count(&self) -> u64 {
        self.total - self.english_count()
    }

    pub fn english_percent(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        round1(self.english_count() as f64 / self.total as f64 * 100.0)
    }

    /// Aligned text table: language, count, percentage, with an en/multi
    /// summary row first.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:>12} {:>10}\n",
            "language", "count", "percent"
        ));
        out.push_str(&format!(
            "{:<12} {:>12} {:>10.1}\n",
            "en",
            self.english_count(),
            self.english_percent()
        ));
        out.push_str(&format!(
            "{:<12} {:>12} {:>10.1}\n",
            "multi",
            self.multilingual_count(),
            round1(self.multilingual_count() as f64 / self.total.max(1) as f64 * 100.0)
        ));
        for (language, count) in &self.counts {
            if language == ENGLISH_TAG {
                continue;
            }
            out.push_str(&format!(
                "{:<12} {:>12} {:>10.1}\n",
                language,
                count,
                self.percent(language)
            ));
        }
        out.push_str(&format!(
            "{:<12} {:>12} {:>10.1}\n",
            "total", self.total, 100.0
        ));
        out
    }
}

/// Count languages over an iterator of language tags.
pub fn corpus_stats(languages: impl IntoIterator<Item = String>) -> CorpusStats {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut total = 0;
    for language in languages {
        *counts.entry(language).or_insert(0) += 1;
        total += 1;
    }
    CorpusStats { counts, total }
}

/// Published per-language sizes (in thousands) of the reference corpus
/// distribution; the default production mixture weights.
pub fn reference_weights() -> BTreeMap<String, f64> {
    [
        ("am", 31.7),
        ("ar", 162.8),
        ("bg", 52.7),
        ("bn", 118.4),
        ("cs", 4.6),
        ("de", 132.2),
        ("el", 7.3),
        ("es", 126.6),
        ("fa", 8.4),
        ("fr", 193.8),
        ("ga", 34.7),
        ("hi", 163.5),
        ("id", 178.4),
        ("ig", 26.1),
        ("it", 68.8),
        ("iw", 168.3),
        ("ja", 403.3),
        ("jv", 35.2),
        ("ko", 182.5),
        ("mn", 37.6),
        ("ms", 39.2),
        ("nl", 4.5),
        ("no", 60.7),
        ("pl", 8.2),
        ("pt", 176.5),
        ("ro", 147.2),
        ("ru", 211.0),
        ("si", 0.6),
        ("su", 33.0),
        ("sw", 132.7),
        ("ta", 37.1),
        ("te", 64.6),
        ("th", 160.4),
        ("tr", 140.7),
        ("uk", 7.4),
        ("ur", 156.4),
        ("vi", 315.5),
        ("zh", 557.4),
    ]
    .into_iter()
    .map(|(tag, weight)| (tag.to_string(), weight))
    .collect()
}

/// Uniform weights over the alphabetically-first `k` supported non-English
/// languages.
pub fn uniform_weights(k_langs: usize) -> BTreeMap<String, f64> {
    crate::lang::supported_tags()
        .filter(|t| *t != ENGLISH_TAG)
        .take(k_langs)
        .map(|t| (t.to_string(), 1.0))
        .collect()
}

/// A planned sweep point: the spec and its per-language counts.
pub type SweepPlan = (MixSpec, BTreeMap<String, u64>);

/// One plan per English-ratio value, holding the total fixed; uniform weights
/// over `k_langs` languages.
pub fn plan_ratio_sweep(
    total_n: u64,
    ratios: &[f64],
    k_langs: usize,
    seed: u64,
) -> Result<Vec<SweepPlan>, MixError> {
    let weights = uniform_weights(k_langs);
    let mut plans = Vec::with_capacity(ratios.len());
    for &p in ratios {
        let spec = MixSpec {
            total_n,
            english_fraction: p,
            language_weights: weights.clone(),
            seed,
        };
        let plan = plan_mixture(&spec)?;
        plans.push((spec, plan));
    }
    Ok(plans)
}
