//! Fact-checked hoax store with exact cosine top-k retrieval.
//!
//! Embeddings are stored as `f32` (the persisted precision) and widened to
//! `f64` for scoring, so a reloaded index scores bit-identically.
//!
//! On disk an index is a directory holding `manifest.json`,
//! `entries.jsonl` (one record per line plus its `embedding`) and the PCA
//! model file named in the manifest.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use chrono::NaiveDate;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError};
use crate::pca::{PcaError, PcaModel};
use crate::similarity::{cosine, Embedding, SimilarityError};

pub const INDEX_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_MIN_SIMILARITY: f64 = 0.6;
const MANIFEST_FILE: &str = "manifest.json";
const ENTRIES_FILE: &str = "entries.jsonl";
const PCA_FILE: &str = "pca.json";

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("duplicate hoax id {0}")]
    DuplicateId(HoaxId),
    #[error("hoax {0} has empty text")]
    EmptyText(HoaxId),
    #[error("no hoaxes given")]
    EmptyInput,
    #[error("index is empty")]
    EmptyIndex,
    #[error("invalid search parameters: {0}")]
    InvalidParams(String),
    #[error("provider does not match the index: {0}")]
    ProviderSkew(String),
    #[error("embedding dimension {actual} does not match index dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding of hoax {0} has zero norm")]
    DegenerateEmbedding(HoaxId),
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("malformed index: {0}")]
    Format(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, IndexError>;

/// Hoax key: an integer or a string. Integers sort before strings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HoaxId {
    Num(u64),
    Str(String),
}

impl Ord for HoaxId {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (HoaxId::Num(a), HoaxId::Num(b)) => a.cmp(b),
            (HoaxId::Str(a), HoaxId::Str(b)) => a.cmp(b),
            (HoaxId::Num(_), HoaxId::Str(_)) => Ordering::Less,
            (HoaxId::Str(_), HoaxId::Num(_)) => Ordering::Greater,
        }
    }
}

impl PartialOrd for HoaxId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for HoaxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HoaxId::Num(n) => write!(f, "{n}"),
            HoaxId::Str(s) => f.write_str(s),
        }
    }
}

impl FromStr for HoaxId {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(s.parse::<u64>().map(HoaxId::Num).unwrap_or_else(|_| HoaxId::Str(s.to_string())))
    }
}

impl From<u64> for HoaxId {
    fn from(n: u64) -> Self {
        HoaxId::Num(n)
    }
}

impl From<&str> for HoaxId {
    fn from(s: &str) -> Self {
        HoaxId::Str(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoaxRecord {
    pub id: HoaxId,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alt_texts: Vec<String>,
    #[serde(default)]
    pub fact_checkers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_seen: Option<NaiveDate>,
}

impl HoaxRecord {
    pub fn new(id: impl Into<HoaxId>, text: impl Into<String>) -> Self {
        Self { id: id.into(), text: text.into(), alt_texts: Vec::new(), fact_checkers: Vec::new(), first_seen: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(IndexError::EmptyText(self.id.clone()));
        }
        Ok(())
    }
}

/// Parses a hoax JSONL stream; blank lines are skipped.
pub fn parse_hoaxes<R: BufRead>(reader: R, source: &str) -> Result<Vec<HoaxRecord>> {
    let mut out: Vec<HoaxRecord> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: HoaxRecord = serde_json::from_str(&line).map_err(|e| IndexError::Parse {
            path: source.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        rec.validate()?;
        if !seen.insert(rec.id.clone()) {
            return Err(IndexError::DuplicateId(rec.id));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_hoaxes(path: &Path) -> Result<Vec<HoaxRecord>> {
    parse_hoaxes(BufReader::new(File::open(path)?), &path.display().to_string())
}

/// One retrieval result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityHit {
    pub hoax_id: HoaxId,
    pub similarity: f64,
}

/// Retrieval parameters; the threshold is applied before truncation to `top_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchParams {
    pub top_k: usize,
    pub min_similarity: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self { top_k: DEFAULT_TOP_K, min_similarity: DEFAULT_MIN_SIMILARITY }
    }
}

impl SearchParams {
    pub fn new(top_k: usize, min_similarity: f64) -> Result<Self> {
        let p = Self { top_k, min_similarity };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(IndexError::InvalidParams("top_k must be at least 1".into()));
        }
        if !(-1.0..=1.0).contains(&self.min_similarity) {
            return Err(IndexError::InvalidParams(format!(
                "min_similarity {} is outside [-1, 1]",
                self.min_similarity
            )));
        }
        Ok(())
    }
}

/// Provenance fixed when the index is created.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub ensemble_model_ids: Vec<String>,
    /// SHA-256 fingerprint of the PCA model that produced the embeddings.
    pub pca_fingerprint: String,
    pub reduced_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub record: HoaxRecord,
    embedding: Vec<f32>,
}

impl IndexEntry {
    pub fn embedding(&self) -> &[f32] {
        &self.embedding
    }
}

/// Gateway plus PCA: text to reduced ensemble embedding.
#[derive(Debug, Clone, Copy)]
pub struct Encoder<'a> {
    pub gateway: &'a Gateway,
    pub pca: &'a PcaModel,
}

impl<'a> Encoder<'a> {
    pub fn new(gateway: &'a Gateway, pca: &'a PcaModel) -> Result<Self> {
        let cfg = gateway.config();
        if !pca.ensemble_model_ids().is_empty() && pca.ensemble_model_ids() != cfg.ensemble_model_ids.as_slice() {
            return Err(IndexError::ProviderSkew(format!(
                "PCA was fit on ensemble {:?}, provider serves {:?}",
                pca.ensemble_model_ids(),
                cfg.ensemble_model_ids
            )));
        }
        if pca.source_dim() != cfg.total_dim() {
            return Err(IndexError::ProviderSkew(format!(
                "PCA expects {}-dimensional input, ensemble produces {}",
                pca.source_dim(),
                cfg.total_dim()
            )));
        }
        Ok(Self { gateway, pca })
    }

    pub fn encode<S: AsRef<str> + Sync>(&self, texts: &[S]) -> Result<Vec<Embedding>> {
        self.gateway
            .embed_ensemble(texts)?
            .iter()
            .map(|e| Ok(self.pca.transform(e)?))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoaxIndex {
    meta: IndexMeta,
    entries: BTreeMap<HoaxId, IndexEntry>,
}

fn to_f32(e: &Embedding) -> Vec<f32> {
    e.as_slice().iter().map(|&x| x as f32).collect()
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

impl HoaxIndex {
    /// Embeds every hoax's canonical text; all-or-nothing.
    pub fn build(hoaxes: Vec<HoaxRecord>, gateway: &Gateway, pca: &PcaModel) -> Result<Self> {
        if hoaxes.is_empty() {
            return Err(IndexError::EmptyInput);
        }
        let encoder = Encoder::new(gateway, pca)?;
        let mut seen = std::collections::BTreeSet::new();
        for h in &hoaxes {
            h.validate()?;
            if !seen.insert(&h.id) {
                return Err(IndexError::DuplicateId(h.id.clone()));
            }
        }
        let texts: Vec<&str> = hoaxes.iter().map(|h| h.text.as_str()).collect();
        let embeddings = encoder.encode(&texts)?;
        let meta = IndexMeta {
            ensemble_model_ids: gateway.config().ensemble_model_ids.clone(),
            pca_fingerprint: pca.fingerprint(),
            reduced_dim: pca.n_components(),
        };
        Self::from_embeddings(meta, hoaxes.into_iter().zip(embeddings).collect())
    }

    /// Index over precomputed embeddings.
    pub fn from_embeddings(meta: IndexMeta, items: Vec<(HoaxRecord, Embedding)>) -> Result<Self> {
        let mut index = Self { meta, entries: BTreeMap::new() };
        for (record, embedding) in items {
            index.insert(record, &embedding)?;
        }
        Ok(index)
    }

    fn insert(&mut self, record: HoaxRecord, embedding: &Embedding) -> Result<()> {
        record.validate()?;
        if embedding.dim() != self.meta.reduced_dim {
            return Err(IndexError::DimensionMismatch { expected: self.meta.reduced_dim, actual: embedding.dim() });
        }
        if self.entries.contains_key(&record.id) {
            return Err(IndexError::DuplicateId(record.id));
        }
        let stored = to_f32(embedding);
        if stored.iter().all(|&x| x == 0.0) {
            return Err(IndexError::DegenerateEmbedding(record.id));
        }
        self.entries.insert(record.id.clone(), IndexEntry { record, embedding: stored });
        Ok(())
    }

    pub fn meta(&self) -> &IndexMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &HoaxId) -> Option<&IndexEntry> {
        self.entries.get(id)
    }

    /// Entries in ascending id order.
    pub fn entries(&self) -> impl Iterator<Item = &IndexEntry> {
        self.entries.values()
    }

    /// Fails unless `gateway` and `pca` are the ones the index was built with.
    pub fn check_provider<'a>(&self, gateway: &'a Gateway, pca: &'a PcaModel) -> Result<Encoder<'a>> {
        if gateway.config().ensemble_model_ids != self.meta.ensemble_model_ids {
            return Err(IndexError::ProviderSkew(format!(
                "index built with ensemble {:?}, provider serves {:?}",
                self.meta.ensemble_model_ids,
                gateway.config().ensemble_model_ids
            )));
        }
        if pca.fingerprint() != self.meta.pca_fingerprint {
            return Err(IndexError::ProviderSkew("PCA model differs from the one the index was built with".into()));
        }
        Encoder::new(gateway, pca)
    }

    pub fn add_hoax(&mut self, record: HoaxRecord, gateway: &Gateway, pca: &PcaModel) -> Result<()> {
        let encoder = self.check_provider(gateway, pca)?;
        record.validate()?;
        if self.entries.contains_key(&record.id) {
            return Err(IndexError::DuplicateId(record.id));
        }
        let embedding = encoder.encode(&[record.text.as_str()])?.remove(0);
        self.insert(record, &embedding)
    }

    pub fn search(&self, query: &str, params: SearchParams, gateway: &Gateway, pca: &PcaModel) -> Result<Vec<SimilarityHit>> {
        Ok(self.search_batch(&[query], params, gateway, pca)?.remove(0))
    }

    /// One provider round trip for all queries.
    pub fn search_batch<S: AsRef<str> + Sync>(
        &self,
        queries: &[S],
        params: SearchParams,
        gateway: &Gateway,
        pca: &PcaModel,
    ) -> Result<Vec<Vec<SimilarityHit>>> {
        params.validate()?;
        if self.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        let encoder = self.check_provider(gateway, pca)?;
        encoder.encode(queries)?.iter().map(|q| self.search_embedding(q, params)).collect()
    }

    /// Exhaustive scan: keep similarity >= threshold, sort by similarity
    /// descending then id ascending, truncate to `top_k`.
    pub fn search_embedding(&self, query: &Embedding, params: SearchParams) -> Result<Vec<SimilarityHit>> {
        params.validate()?;
        if self.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if query.dim() != self.meta.reduced_dim {
            return Err(IndexError::DimensionMismatch { expected: self.meta.reduced_dim, actual: query.dim() });
        }
        let mut hits = Vec::new();
        for (id, entry) in &self.entries {
            let similarity = cosine(query.as_slice(), &widen(&entry.embedding))?;
            if similarity >= params.min_similarity {
                hits.push(SimilarityHit { hoax_id: id.clone(), similarity });
            }
        }
        hits.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then_with(|| a.hoax_id.cmp(&b.hoax_id)));
        hits.truncate(params.top_k);
        Ok(hits)
    }

    /// Writes the manifest, entries and PCA model into `dir`.
    pub fn save(&self, dir: &Path, pca: &PcaModel) -> Result<()> {
        if pca.fingerprint() != self.meta.pca_fingerprint {
            return Err(IndexError::ProviderSkew("PCA model differs from the one the index was built with".into()));
        }
        fs::create_dir_all(dir)?;
        pca.save(&dir.join(PCA_FILE))?;
        let mut w = BufWriter::new(File::create(dir.join(ENTRIES_FILE))?);
        for entry in self.entries.values() {
            serde_json::to_writer(&mut w, &StoredEntry { record: entry.record.clone(), embedding: entry.embedding.clone() })?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        let manifest = Manifest {
            format_version: INDEX_FORMAT_VERSION,
            ensemble_model_ids: self.meta.ensemble_model_ids.clone(),
            pca_file: PCA_FILE.to_string(),
            pca_fingerprint: self.meta.pca_fingerprint.clone(),
            reduced_dim: self.meta.reduced_dim,
            count: self.entries.len(),
        };
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }

    /// Loads an index directory and its PCA model, verifying the fingerprint.
    pub fn load(dir: &Path) -> Result<(Self, PcaModel)> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        if manifest.format_version != INDEX_FORMAT_VERSION {
            return Err(IndexError::Format(format!("unsupported index format_version {}", manifest.format_version)));
        }
        let pca = PcaModel::load(&dir.join(&manifest.pca_file))?;
        if pca.fingerprint() != manifest.pca_fingerprint {
            return Err(IndexError::Format("PCA file fingerprint does not match the manifest".into()));
        }
        let meta = IndexMeta {
            ensemble_model_ids: manifest.ensemble_model_ids,
            pca_fingerprint: manifest.pca_fingerprint,
            reduced_dim: manifest.reduced_dim,
        };
        let mut index = Self { meta, entries: BTreeMap::new() };
        let path = dir.join(ENTRIES_FILE);
        for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let stored: StoredEntry = serde_json::from_str(&line).map_err(|e| IndexError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
            if stored.embedding.len() != index.meta.reduced_dim {
                return Err(IndexError::DimensionMismatch {
                    expected: index.meta.reduced_dim,
                    actual: stored.embedding.len(),
                });
            }
            if index.entries.contains_key(&stored.record.id) {
                return Err(IndexError::DuplicateId(stored.record.id));
            }
            index.entries.insert(stored.record.id.clone(), IndexEntry { record: stored.record, embedding: stored.embedding });
        }
        if index.entries.len() != manifest.count {
            return Err(IndexError::Format(format!(
                "manifest lists {} entries, found {}",
                manifest.count,
                index.entries.len()
            )));
        }
        Ok((index, pca))
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    ensemble_model_ids: Vec<String>,
    pca_file: String,
    pca_fingerprint: String,
    reduced_dim: usize,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct StoredEntry {
    #[serde(flatten)]
    record: HoaxRecord,
    embedding: Vec<f32>,
}

/// Index shared between concurrent readers and an occasional writer.
/// Writers embed outside the lock and insert under it, so a search never
/// sees a partial entry.
#[derive(Debug, Clone)]
pub struct SharedHoaxIndex(Arc<RwLock<HoaxIndex>>);

impl SharedHoaxIndex {
    pub fn new(index: HoaxIndex) -> Self {
        Self(Arc::new(RwLock::new(index)))
    }

    pub fn len(&self) -> usize {
        self.0.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.read().is_empty()
    }

    pub fn search(&self, query: &str, params: SearchParams, gateway: &Gateway, pca: &PcaModel) -> Result<Vec<SimilarityHit>> {
        let embedding = {
            let guard = self.0.read();
            guard.check_provider(gateway, pca)?.encode(&[query])?.remove(0)
        };
        self.0.read().search_embedding(&embedding, params)
    }

    pub fn add_hoax(&self, record: HoaxRecord, gateway: &Gateway, pca: &PcaModel) -> Result<()> {
        record.validate()?;
        let embedding = {
            let guard = self.0.read();
            if guard.entries.contains_key(&record.id) {
                return Err(IndexError::DuplicateId(record.id));
            }
            guard.check_provider(gateway, pca)?.encode(&[record.text.as_str()])?.remove(0)
        };
        self.0.write().insert(record, &embedding)
    }

    pub fn read(&self) -> parking_lot::RwLockReadGuard<'_, HoaxIndex> {
        self.0.read()
    }
}
