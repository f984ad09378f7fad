//! Configuration file and flag resolution. Precedence: flags, then the
//! file, then built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, NaiveDate, Utc};
use facter_core::gateway::{Endpoint, ProviderConfig};
use facter_core::index::{SearchParams, DEFAULT_MIN_SIMILARITY, DEFAULT_TOP_K};
use facter_core::osn::{default_since, OsnConfig};
use facter_core::tracking::{BinConfig, DatasetParams, DEFAULT_BIN_DAYS};
use facter_core::verdict::{Thresholds, DEFAULT_CONTRADICTION_THRESHOLD, DEFAULT_ENTAILMENT_THRESHOLD};
use serde::{Deserialize, Serialize};

/// Components kept when the PCA is fit from hoax texts, capped by the
/// sample count.
pub const DEFAULT_PCA_COMPONENTS: usize = 120;
pub const DEFAULT_INDEX_DIR: &str = "index";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Defaults {
    pub top_k: usize,
    pub min_similarity: f64,
    pub entailment_threshold: f64,
    pub contradiction_threshold: f64,
    pub bin_width_days: i64,
    pub date_floor: DateTime<Utc>,
    pub pca_components: usize,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
            min_similarity: DEFAULT_MIN_SIMILARITY,
            entailment_threshold: DEFAULT_ENTAILMENT_THRESHOLD,
            contradiction_threshold: DEFAULT_CONTRADICTION_THRESHOLD,
            bin_width_days: DEFAULT_BIN_DAYS,
            date_floor: default_since(),
            pca_components: DEFAULT_PCA_COMPONENTS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub provider: ProviderConfig,
    pub index: Option<PathBuf>,
    pub pca: Option<PathBuf>,
    pub defaults: Defaults,
    pub osn: OsnConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub provider: Option<String>,
    pub index: Option<PathBuf>,
    pub pca: Option<PathBuf>,
    pub top_k: Option<usize>,
    pub min_similarity: Option<f64>,
    pub entailment_threshold: Option<f64>,
    pub contradiction_threshold: Option<f64>,
    pub bin_width: Option<i64>,
    pub since: Option<String>,
}

/// Accepts `YYYY-MM-DD` (midnight UTC) or RFC 3339.
pub fn parse_instant(s: &str) -> Result<DateTime<Utc>> {
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc());
    }
    Ok(DateTime::parse_from_rfc3339(s).with_context(|| format!("{s:?} is neither YYYY-MM-DD nor RFC 3339"))?.with_timezone(&Utc))
}

impl Config {
    pub fn resolve(mut self, o: &Overrides) -> Result<Self> {
        if let Some(p) = &o.provider {
            self.provider.endpoint = p.parse::<Endpoint>()?;
        }
        if o.index.is_some() {
            self.index = o.index.clone();
        }
        if o.pca.is_some() {
            self.pca = o.pca.clone();
        }
        let d = &mut self.defaults;
        d.top_k = o.top_k.unwrap_or(d.top_k);
        d.min_similarity = o.min_similarity.unwrap_or(d.min_similarity);
        d.entailment_threshold = o.entailment_threshold.unwrap_or(d.entailment_threshold);
        d.contradiction_threshold = o.contradiction_threshold.unwrap_or(d.contradiction_threshold);
        d.bin_width_days = o.bin_width.unwrap_or(d.bin_width_days);
        if let Some(s) = &o.since {
            d.date_floor = parse_instant(s)?;
        }
        self.provider.validate()?;
        self.search()?;
        self.thresholds()?;
        self.bins()?;
        Ok(self)
    }

    pub fn search(&self) -> Result<SearchParams> {
        Ok(SearchParams::new(self.defaults.top_k, self.defaults.min_similarity)?)
    }

    pub fn thresholds(&self) -> Result<Thresholds> {
        Ok(Thresholds::new(self.defaults.entailment_threshold, self.defaults.contradiction_threshold)?)
    }

    pub fn dataset(&self) -> Result<DatasetParams> {
        let s = self.search()?;
        Ok(DatasetParams { top_k: s.top_k, min_similarity: s.min_similarity, thresholds: self.thresholds()? })
    }

    pub fn bins(&self) -> Result<BinConfig> {
        let days = self.defaults.bin_width_days;
        if days <= 0 {
            anyhow::bail!("bin width must be a positive number of days, got {days}");
        }
        Ok(BinConfig { bin_width_secs: days * 86_400, ..BinConfig::default() })
    }

    pub fn index_dir(&self) -> PathBuf {
        self.index.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_INDEX_DIR))
    }
}
