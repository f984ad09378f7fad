//! Search-API retrieval of posts from a Twitter-shaped network: date floor,
//! pagination, caps, checkpointed resumption, JSONL persistence and the
//! public export that carries no text or author fields.

pub mod mock;
pub mod twitter;

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::index::HoaxId;
use crate::tracking::LabeledTweet;
use crate::verdict::RelationLabel;

pub use mock::{FixtureClient, MockCatalog, MockServer, MockServerOptions, MockServerStats};
pub use twitter::{RateLimiter, TwitterClient};

/// Environment variable holding the API bearer token in real mode.
pub const BEARER_TOKEN_ENV: &str = "OSN_BEARER_TOKEN";
pub const SEARCH_PATH: &str = "/2/tweets/search/all";
pub const DEFAULT_PAGE_SIZE: usize = 100;
pub const MAX_PAGE_SIZE: usize = 500;
/// Pagination restarts allowed per job after an expired cursor.
pub const MAX_PAGE_LOSS_RESTARTS: usize = 2;

pub fn default_since() -> DateTime<Utc> {
    NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date").and_hms_opt(0, 0, 0).expect("valid time").and_utc()
}

#[derive(Debug, Error)]
pub enum OsnError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("rate limited; server asked to wait {retry_after:?}")]
    RateLimited { retry_after: Duration },
    #[error("authentication failed: {0}")]
    AuthFailed(String),
    #[error("query rejected by the server: {0}")]
    MalformedQuery(String),
    #[error("pagination cursor expired: {0}")]
    PageLoss(String),
    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed server response: {0}")]
    MalformedResponse(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, OsnError>;

/// A retrieved post. The author identifier is hashed at ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TweetRecord {
    pub id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub author_hash: String,
    pub lang: String,
    pub is_reply: bool,
}

/// Hex SHA-256 of `salt ‖ 0x1f ‖ author_id`.
pub fn hash_author(salt: &str, author_id: &str) -> String {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update([0x1f]);
    h.update(author_id.as_bytes());
    hex::encode(h.finalize())
}

/// Post as served by the search endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTweet {
    pub id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub author_id: String,
    #[serde(default)]
    pub lang: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_reply_to_user_id: Option<String>,
}

impl RawTweet {
    pub fn ingest(self, salt: &str) -> TweetRecord {
        TweetRecord {
            author_hash: hash_author(salt, &self.author_id),
            is_reply: self.in_reply_to_user_id.is_some(),
            lang: if self.lang.is_empty() { "und".into() } else { self.lang },
            id: self.id,
            text: self.text,
            created_at: self.created_at,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageMeta {
    #[serde(default)]
    pub result_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_token: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub data: Vec<RawTweet>,
    #[serde(default)]
    pub meta: PageMeta,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageRequest {
    pub query: String,
    pub start_time: DateTime<Utc>,
    pub end_time: Option<DateTime<Utc>>,
    pub max_results: usize,
    pub next_token: Option<String>,
}

/// One page fetch against a search endpoint. Rate-limit waits happen
/// inside the implementation.
pub trait OsnClient: Send + Sync {
    fn fetch_page(&self, request: &PageRequest) -> Result<Page>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchJob {
    pub hoax_id: HoaxId,
    pub query: String,
    #[serde(default = "default_since")]
    pub since: DateTime<Utc>,
    #[serde(default)]
    pub until: Option<DateTime<Utc>>,
    /// Cap on records returned by one run.
    #[serde(default)]
    pub max_results: Option<usize>,
    #[serde(default)]
    pub cursor: Option<String>,
}

impl SearchJob {
    pub fn new(hoax_id: impl Into<HoaxId>, query: impl Into<String>) -> Self {
        Self { hoax_id: hoax_id.into(), query: query.into(), since: default_since(), until: None, max_results: None, cursor: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.query.trim().is_empty() {
            return Err(OsnError::InvalidInput("query is empty".into()));
        }
        if let Some(until) = self.until {
            if until < self.since {
                return Err(OsnError::InvalidInput(format!("until {until} precedes since {}", self.since)));
            }
        }
        if self.max_results == Some(0) {
            return Err(OsnError::InvalidInput("max_results must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OsnConfig {
    /// `mock:<fixture dir>` for the in-process fixture client, or an
    /// http(s) base URL for real mode.
    pub endpoint: String,
    pub rate_limit_per_window: u32,
    pub window_seconds: f64,
    pub hash_salt: String,
    pub page_size: usize,
    pub max_attempts: u32,
    pub timeout_ms: u64,
}

impl Default for OsnConfig {
    fn default() -> Self {
        Self {
            endpoint: "mock:fixtures/osn".into(),
            rate_limit_per_window: 300,
            window_seconds: 900.0,
            hash_salt: "facter".into(),
            page_size: DEFAULT_PAGE_SIZE,
            max_attempts: 3,
            timeout_ms: 30_000,
        }
    }
}

impl OsnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rate_limit_per_window == 0 || !(self.window_seconds > 0.0 && self.window_seconds.is_finite()) {
            return Err(OsnError::InvalidConfig("rate limit and window must be positive".into()));
        }
        if self.page_size == 0 || self.page_size > MAX_PAGE_SIZE {
            return Err(OsnError::InvalidConfig(format!("page_size must lie in 1..={MAX_PAGE_SIZE}")));
        }
        if self.max_attempts == 0 {
            return Err(OsnError::InvalidConfig("max_attempts must be at least 1".into()));
        }
        if self.hash_salt.is_empty() {
            return Err(OsnError::InvalidConfig("hash_salt is empty".into()));
        }
        Ok(())
    }

    /// Fixture endpoints never touch the network; URL endpoints read the
    /// bearer token from [`BEARER_TOKEN_ENV`].
    pub fn connect(&self) -> Result<Box<dyn OsnClient>> {
        self.validate()?;
        if let Some(dir) = self.endpoint.strip_prefix("mock:") {
            return Ok(Box::new(FixtureClient::new(MockCatalog::load(Path::new(dir))?)));
        }
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(OsnError::InvalidConfig(format!("endpoint {:?} is neither mock:<dir> nor a URL", self.endpoint)));
        }
        let token = std::env::var(BEARER_TOKEN_ENV)
            .map_err(|_| OsnError::AuthFailed(format!("{BEARER_TOKEN_ENV} is not set")))?;
        Ok(Box::new(TwitterClient::new(&self.endpoint, &token, self)?))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SearchOutcome {
    pub records: Vec<TweetRecord>,
    /// Cursor to resume from; `None` when the search is exhausted.
    pub next_cursor: Option<String>,
    pub pages: usize,
    pub duplicates: usize,
    pub below_floor: usize,
    pub restarts: usize,
}

/// Fetches pages until exhausted or capped. Records are unique by id, lie
/// within `[since, until]` and keep page order.
pub fn run_search(job: &SearchJob, client: &dyn OsnClient, salt: &str, page_size: usize) -> Result<SearchOutcome> {
    search_pages(job, client, salt, page_size, HashSet::new(), |_, _| Ok(()))
}

fn search_pages(
    job: &SearchJob,
    client: &dyn OsnClient,
    salt: &str,
    page_size: usize,
    mut seen: HashSet<String>,
    mut on_page: impl FnMut(&[TweetRecord], Option<&str>) -> Result<()>,
) -> Result<SearchOutcome> {
    job.validate()?;
    if page_size == 0 {
        return Err(OsnError::InvalidInput("page_size must be at least 1".into()));
    }
    let cap = job.max_results.unwrap_or(usize::MAX);
    let mut out = SearchOutcome { next_cursor: job.cursor.clone(), ..Default::default() };
    loop {
        let remaining = cap - out.records.len();
        let request = PageRequest {
            query: job.query.clone(),
            start_time: job.since,
            end_time: job.until,
            max_results: remaining.min(page_size),
            next_token: out.next_cursor.clone(),
        };
        let page = match client.fetch_page(&request) {
            Err(OsnError::PageLoss(msg)) => {
                if out.restarts == MAX_PAGE_LOSS_RESTARTS {
                    return Err(OsnError::PageLoss(msg));
                }
                log::warn!("hoax {}: cursor expired ({msg}); restarting pagination", job.hoax_id);
                out.restarts += 1;
                out.next_cursor = None;
                continue;
            }
            other => other?,
        };
        out.pages += 1;
        let mut fresh = Vec::new();
        for raw in page.data {
            if raw.created_at < job.since || job.until.is_some_and(|u| raw.created_at > u) {
                out.below_floor += 1;
            } else if !seen.insert(raw.id.clone()) {
                out.duplicates += 1;
            } else {
                fresh.push(raw.ingest(salt));
            }
        }
        let truncated = fresh.len() > remaining;
        fresh.truncate(remaining);
        // A truncated page is re-requested on resume; duplicates are dropped then.
        out.next_cursor = if truncated { request.next_token.clone() } else { page.meta.next_token };
        on_page(&fresh, out.next_cursor.as_deref())?;
        out.records.extend(fresh);
        // A server that repeats the request cursor would loop forever.
        if out.next_cursor.is_none() || out.records.len() >= cap || out.next_cursor == request.next_token {
            return Ok(out);
        }
    }
}

/// Progress of a persisted search, rewritten after every page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub hoax_id: HoaxId,
    pub query: String,
    pub since: DateTime<Utc>,
    pub next_cursor: Option<String>,
    pub fetched: usize,
    pub done: bool,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Option<Self>> {
        match fs::read(path) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    fn matches(&self, job: &SearchJob) -> bool {
        self.hoax_id == job.hoax_id && self.query == job.query && self.since == job.since
    }
}

/// [`run_search`] that appends every page to `corpus` and then rewrites
/// `checkpoint`. A matching checkpoint resumes from its cursor; ids already
/// in the corpus are skipped.
pub fn run_search_persisted(
    job: &SearchJob,
    client: &dyn OsnClient,
    salt: &str,
    page_size: usize,
    corpus: &Path,
    checkpoint: &Path,
) -> Result<SearchOutcome> {
    let mut job = job.clone();
    let mut fetched = 0;
    if let Some(cp) = Checkpoint::load(checkpoint)?.filter(|cp| cp.matches(&job)) {
        if cp.done {
            return Ok(SearchOutcome::default());
        }
        job.cursor = cp.next_cursor;
        fetched = cp.fetched;
    }
    let seen: HashSet<String> = if corpus.exists() { load_tweets(corpus)?.records.into_iter().map(|r| r.id).collect() } else { HashSet::new() };
    let mut cp = Checkpoint { hoax_id: job.hoax_id.clone(), query: job.query.clone(), since: job.since, next_cursor: job.cursor.clone(), fetched, done: false };
    search_pages(&job, client, salt, page_size, seen, |records, cursor| {
        persist_tweets(records, corpus)?;
        cp.fetched += records.len();
        cp.next_cursor = cursor.map(str::to_string);
        cp.done = cursor.is_none();
        cp.save(checkpoint)
    })
}

/// Appends records as JSONL; returns the number written.
pub fn persist_tweets(records: &[TweetRecord], path: &Path) -> Result<usize> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(records.len())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadedCorpus {
    pub records: Vec<TweetRecord>,
    pub corrupt_lines: usize,
    pub duplicates: usize,
}

/// Reads JSONL, keeping the first record per id. Unparseable lines are
/// skipped with a warning and counted.
pub fn load_tweets(path: &Path) -> Result<LoadedCorpus> {
    let mut out = LoadedCorpus::default();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TweetRecord>(&line) {
            Ok(r) if seen.insert(r.id.clone()) => out.records.push(r),
            Ok(_) => out.duplicates += 1,
            Err(e) => {
                log::warn!("{}:{}: skipping corrupt line: {e}", path.display(), i + 1);
                out.corrupt_lines += 1;
            }
        }
    }
    Ok(out)
}

/// Public export line; carries no text and no author field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublicRecord {
    pub tweet_id: String,
    pub hoax_id: HoaxId,
    pub label: RelationLabel,
    pub similarity: f64,
}

pub fn export_public<W: Write>(labeled: &[LabeledTweet], mut out: W) -> Result<usize> {
    for t in labeled {
        let rec = PublicRecord { tweet_id: t.tweet_id.clone(), hoax_id: t.hoax_id.clone(), label: t.label, similarity: t.similarity };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(labeled.len())
}

/// Human-edited query per hoax, JSONL `{hoax_id, query}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryOverride {
    pub hoax_id: HoaxId,
    pub query: String,
}

pub fn load_query_overrides(path: &Path) -> Result<BTreeMap<HoaxId, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| OsnError::Parse { path: path.display().to_string(), line: i + 1, message };
        let rec: QueryOverride = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if rec.query.trim().is_empty() {
            return Err(parse_err("empty query".into()));
        }
        if out.insert(rec.hoax_id.clone(), rec.query).is_some() {
            return Err(parse_err(format!("duplicate hoax id {}", rec.hoax_id)));
        }
    }
    Ok(out)
}

/// Per-job corpus and checkpoint paths under a working directory.
pub fn job_paths(dir: &Path, hoax_id: &HoaxId) -> (PathBuf, PathBuf) {
    (dir.join(format!("hoax-{hoax_id}.jsonl")), dir.join(format!("hoax-{hoax_id}.checkpoint.json")))
}
