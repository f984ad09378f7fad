//! Labeled dataset construction (similarity filter, then NLI labeling) and
//! the temporal analyses over it: histograms, peaks and support/counter
//! comparison.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, NliPair, NliScores};
use crate::index::{HoaxId, HoaxIndex, IndexError, SearchParams};
use crate::osn::TweetRecord;
use crate::pca::PcaModel;
use crate::verdict::{label_relation, RelationLabel, Thresholds, VerdictError};

pub const DEFAULT_BIN_DAYS: i64 = 7;
/// Tweets processed between dataset checkpoints.
pub const DEFAULT_BLOCK: usize = 256;

#[derive(Debug, Error)]
pub enum TrackingError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("tweet {0} has no timestamp")]
    MissingTimestamp(String),
    #[error("series differ in bin width or origin")]
    BinMismatch,
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Verdict(#[from] VerdictError),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, TrackingError>;

/// A statement submitted for verification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub text: String,
    pub received_at: DateTime<Utc>,
}

impl Claim {
    pub fn new(text: impl Into<String>, received_at: DateTime<Utc>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(TrackingError::InvalidInput("claim text is empty".into()));
        }
        Ok(Self { text, received_at })
    }
}

/// One tweet assigned to one hoax. `label` is the argmax of `scores`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTweet {
    pub tweet_id: String,
    pub hoax_id: HoaxId,
    pub similarity: f64,
    #[serde(flatten)]
    pub scores: NliScores,
    pub label: RelationLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetParams {
    pub top_k: usize,
    pub min_similarity: f64,
    /// Carried for the verdict workflow; dataset labels are the argmax.
    pub thresholds: Thresholds,
}

impl Default for DatasetParams {
    fn default() -> Self {
        let s = SearchParams::default();
        Self { top_k: s.top_k, min_similarity: s.min_similarity, thresholds: Thresholds::default() }
    }
}

impl DatasetParams {
    pub fn search(&self) -> Result<SearchParams> {
        Ok(SearchParams::new(self.top_k, self.min_similarity)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.search()?;
        self.thresholds.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    /// Sorted by tweet id.
    pub labeled: Vec<LabeledTweet>,
    pub total: usize,
    /// Tweets with no hoax at or above the similarity threshold.
    pub dropped: usize,
}

/// Among hits of one tweet: maximal entailment, then higher similarity,
/// then lower hoax id.
pub fn select_assignment<'a>(candidates: &'a [(HoaxId, f64, NliScores)]) -> Option<&'a (HoaxId, f64, NliScores)> {
    candidates.iter().min_by(|a, b| {
        b.2.entailment.total_cmp(&a.2.entailment).then(b.1.total_cmp(&a.1)).then_with(|| a.0.cmp(&b.0))
    })
}

/// Retrieves top-k hoaxes per tweet, scores every passing (hoax, tweet)
/// pair and assigns the tweet to one hoax. Provider calls are batched and
/// run under the gateway's in-flight bound; the result does not depend on
/// corpus order.
pub fn build_dataset(
    corpus: &[TweetRecord],
    index: &HoaxIndex,
    gateway: &Gateway,
    pca: &PcaModel,
    params: DatasetParams,
) -> Result<Dataset> {
    params.validate()?;
    let mut ids = HashSet::new();
    if let Some(dup) = corpus.iter().find(|t| !ids.insert(t.id.as_str())) {
        return Err(TrackingError::InvalidInput(format!("tweet id {} repeats", dup.id)));
    }
    let mut out = Dataset { total: corpus.len(), ..Default::default() };
    if corpus.is_empty() {
        return Ok(out);
    }
    let texts: Vec<&str> = corpus.iter().map(|t| t.text.as_str()).collect();
    let hits = index.search_batch(&texts, params.search()?, gateway, pca)?;
    let mut pairs = Vec::new();
    for (tweet, hs) in corpus.iter().zip(&hits) {
        for h in hs {
            let hoax = index.get(&h.hoax_id).expect("hit comes from the index");
            pairs.push(NliPair::new(hoax.record.text.as_str(), tweet.text.as_str()));
        }
    }
    let mut scores = if pairs.is_empty() { Vec::new() } else { gateway.nli_batch(&pairs)? }.into_iter();
    for (tweet, hs) in corpus.iter().zip(&hits) {
        let candidates: Vec<(HoaxId, f64, NliScores)> =
            hs.iter().map(|h| (h.hoax_id.clone(), h.similarity, scores.next().expect("one score per pair"))).collect();
        match select_assignment(&candidates) {
            None => out.dropped += 1,
            Some((hoax_id, similarity, s)) => out.labeled.push(LabeledTweet {
                tweet_id: tweet.id.clone(),
                hoax_id: hoax_id.clone(),
                similarity: *similarity,
                scores: *s,
                label: label_relation(s),
            }),
        }
    }
    out.labeled.sort_by(|a, b| a.tweet_id.cmp(&b.tweet_id));
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetCheckpoint {
    pub processed: usize,
    pub labeled: usize,
    pub dropped: usize,
}

/// [`build_dataset`] in blocks of `block` tweets, appending labeled rows to
/// `out` and rewriting `checkpoint` after each block. An existing
/// checkpoint resumes after its processed prefix of `corpus`.
#[allow(clippy::too_many_arguments)]
pub fn build_dataset_to(
    corpus: &[TweetRecord],
    index: &HoaxIndex,
    gateway: &Gateway,
    pca: &PcaModel,
    params: DatasetParams,
    out: &Path,
    checkpoint: &Path,
    block: usize,
) -> Result<DatasetCheckpoint> {
    if block == 0 {
        return Err(TrackingError::InvalidInput("block must be at least 1".into()));
    }
    let mut cp: DatasetCheckpoint = match fs::read(checkpoint) {
        Ok(b) => serde_json::from_slice(&b)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => DatasetCheckpoint::default(),
        Err(e) => return Err(e.into()),
    };
    if cp.processed > corpus.len() {
        return Err(TrackingError::InvalidInput("checkpoint is ahead of the corpus".into()));
    }
    for chunk in corpus[cp.processed..].chunks(block) {
        let ds = build_dataset(chunk, index, gateway, pca, params)?;
        write_labeled(&ds.labeled, out, true)?;
        cp.processed += chunk.len();
        cp.labeled += ds.labeled.len();
        cp.dropped += ds.dropped;
        let tmp = checkpoint.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&cp)?)?;
        fs::rename(tmp, checkpoint)?;
    }
    Ok(cp)
}

pub fn write_labeled(rows: &[LabeledTweet], path: &Path, append: bool) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let file = OpenOptions::new().create(true).write(true).append(append).truncate(!append).open(path)?;
    let mut w = BufWriter::new(file);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_labeled(path: &Path) -> Result<Vec<LabeledTweet>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| TrackingError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinConfig {
    pub bin_width_secs: i64,
    pub origin: DateTime<Utc>,
}

impl Default for BinConfig {
    fn default() -> Self {
        Self {
            bin_width_secs: Duration::days(DEFAULT_BIN_DAYS).num_seconds(),
            origin: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date").and_hms_opt(0, 0, 0).expect("valid time").and_utc(),
        }
    }
}

impl BinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bin_width_secs <= 0 {
            return Err(TrackingError::InvalidInput("bin width must be positive".into()));
        }
        Ok(())
    }

    /// Floor division, so instants before the origin get negative bins.
    pub fn bin_of(&self, t: DateTime<Utc>) -> i64 {
        (t - self.origin).num_seconds().div_euclid(self.bin_width_secs)
    }

    pub fn bin_start(&self, bin: i64) -> DateTime<Utc> {
        self.origin + Duration::seconds(bin * self.bin_width_secs)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub entailment: usize,
    pub contradiction: usize,
    pub neutral: usize,
}

impl LabelCounts {
    pub fn add(&mut self, label: RelationLabel) {
        match label {
            RelationLabel::Entailment => self.entailment += 1,
            RelationLabel::Contradiction => self.contradiction += 1,
            RelationLabel::Neutral => self.neutral += 1,
        }
    }

    pub fn merge(&mut self, other: &LabelCounts) {
        self.entailment += other.entailment;
        self.contradiction += other.contradiction;
        self.neutral += other.neutral;
    }

    pub fn total(&self) -> usize {
        self.entailment + self.contradiction + self.neutral
    }
}

/// Counts per hoax, bin and label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeSeries {
    pub config: BinConfig,
    pub label_filter: Option<RelationLabel>,
    pub per_hoax: BTreeMap<HoaxId, BTreeMap<i64, LabelCounts>>,
}

impl TimeSeries {
    pub fn empty(config: BinConfig, label_filter: Option<RelationLabel>) -> Self {
        Self { config, label_filter, per_hoax: BTreeMap::new() }
    }

    pub fn total(&self) -> usize {
        self.per_hoax.values().flat_map(|b| b.values()).map(LabelCounts::total).sum()
    }

    pub fn aggregate(&self) -> BTreeMap<i64, LabelCounts> {
        let mut out: BTreeMap<i64, LabelCounts> = BTreeMap::new();
        for bins in self.per_hoax.values() {
            for (bin, c) in bins {
                out.entry(*bin).or_default().merge(c);
            }
        }
        out
    }

    pub fn for_hoax(&self, id: &HoaxId) -> TimeSeries {
        let per_hoax = self.per_hoax.get(id).map(|b| BTreeMap::from([(id.clone(), b.clone())])).unwrap_or_default();
        TimeSeries { per_hoax, ..self.clone() }
    }
}

/// Bins labeled tweets by the creation time of their tweet record.
pub fn temporal_histogram(
    labeled: &[LabeledTweet],
    tweets: &[TweetRecord],
    config: BinConfig,
    label_filter: Option<RelationLabel>,
) -> Result<TimeSeries> {
    config.validate()?;
    let times: HashMap<&str, DateTime<Utc>> = tweets.iter().map(|t| (t.id.as_str(), t.created_at)).collect();
    let mut series = TimeSeries::empty(config, label_filter);
    for l in labeled.iter().filter(|l| label_filter.is_none_or(|f| l.label == f)) {
        let t = times.get(l.tweet_id.as_str()).ok_or_else(|| TrackingError::MissingTimestamp(l.tweet_id.clone()))?;
        series.per_hoax.entry(l.hoax_id.clone()).or_default().entry(config.bin_of(*t)).or_default().add(l.label);
    }
    Ok(series)
}

fn peak(bins: &BTreeMap<i64, LabelCounts>) -> Option<i64> {
    // Ascending iteration with a strict comparison keeps the earliest maximum.
    bins.iter().filter(|(_, c)| c.total() > 0).fold(None, |best: Option<(i64, usize)>, (b, c)| match best {
        Some((_, n)) if n >= c.total() => best,
        _ => Some((*b, c.total())),
    })
    .map(|(b, _)| b)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    Aggregate,
    Hoax(HoaxId),
}

/// Bin with the largest count per hoax (or over all hoaxes); ties go to
/// the earliest bin. Empty series yield an empty map.
pub fn peak_bins(series: &TimeSeries, per_hoax: bool) -> BTreeMap<Scope, i64> {
    if per_hoax {
        series.per_hoax.iter().filter_map(|(id, bins)| peak(bins).map(|p| (Scope::Hoax(id.clone()), p))).collect()
    } else {
        peak(&series.aggregate()).map(|p| (Scope::Aggregate, p)).into_iter().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinPair {
    pub bin: i64,
    pub bin_start: DateTime<Utc>,
    pub support: usize,
    pub counter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesComparison {
    /// Every bin between the earliest and latest non-empty bin of either series.
    pub bins: Vec<BinPair>,
    pub support_total: usize,
    pub counter_total: usize,
    /// `counter_total / support_total`; null when there is no support.
    pub ratio: Option<f64>,
    /// Counter peak bin minus support peak bin; null when either is empty.
    pub lag_of_peaks: Option<i64>,
}

pub fn compare_series(support: &TimeSeries, counter: &TimeSeries) -> Result<SeriesComparison> {
    if support.config != counter.config {
        return Err(TrackingError::BinMismatch);
    }
    let (s, c) = (support.aggregate(), counter.aggregate());
    let count = |m: &BTreeMap<i64, LabelCounts>, b: i64| m.get(&b).map_or(0, LabelCounts::total);
    let used: Vec<i64> = s.iter().chain(c.iter()).filter(|(_, n)| n.total() > 0).map(|(b, _)| *b).collect();
    let bins = match (used.iter().min(), used.iter().max()) {
        (Some(&lo), Some(&hi)) => (lo..=hi)
            .map(|b| BinPair { bin: b, bin_start: support.config.bin_start(b), support: count(&s, b), counter: count(&c, b) })
            .collect(),
        _ => Vec::new(),
    };
    let support_total = support.total();
    let counter_total = counter.total();
    Ok(SeriesComparison {
        bins,
        support_total,
        counter_total,
        ratio: (support_total > 0).then(|| counter_total as f64 / support_total as f64),
        lag_of_peaks: peak(&c).zip(peak(&s)).map(|(pc, ps)| pc - ps),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoaxTotals {
    pub hoax_id: HoaxId,
    #[serde(flatten)]
    pub counts: LabelCounts,
    pub peak_bin: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub hoax_id: Option<HoaxId>,
    pub bin: i64,
    pub bin_start: DateTime<Utc>,
    pub entailment: usize,
    pub contradiction: usize,
    pub neutral: usize,
}

fn rows(series: &TimeSeries) -> Vec<SeriesRow> {
    let row = |id: Option<&HoaxId>, bin: i64, c: &LabelCounts| SeriesRow {
        hoax_id: id.cloned(),
        bin,
        bin_start: series.config.bin_start(bin),
        entailment: c.entailment,
        contradiction: c.contradiction,
        neutral: c.neutral,
    };
    series.per_hoax.iter().flat_map(|(id, bins)| bins.iter().map(move |(b, c)| row(Some(id), *b, c))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoaxComparison {
    pub hoax_id: HoaxId,
    #[serde(flatten)]
    pub comparison: SeriesComparison,
}

/// Everything derived from a labeled dataset; a pure function of its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub bins: BinConfig,
    pub dataset_size: usize,
    pub dropped: usize,
    pub totals: Vec<HoaxTotals>,
    pub aggregate_peak_bin: Option<i64>,
    /// ENTAILMENT-labeled tweets per hoax and bin.
    pub support: Vec<SeriesRow>,
    /// All fact-checker tweets per hoax and bin.
    pub counter: Vec<SeriesRow>,
    pub aggregate: Vec<SeriesRow>,
    pub comparisons: Vec<HoaxComparison>,
}

pub struct ReportInput<'a> {
    pub labeled: &'a [LabeledTweet],
    pub tweets: &'a [TweetRecord],
    pub dropped: usize,
    /// Fact-checker tweets and their labels, when available.
    pub counter: Option<(&'a [LabeledTweet], &'a [TweetRecord])>,
}

pub fn tracking_report(input: &ReportInput<'_>, bins: BinConfig) -> Result<TrackingReport> {
    let all = temporal_histogram(input.labeled, input.tweets, bins, None)?;
    let support = temporal_histogram(input.labeled, input.tweets, bins, Some(RelationLabel::Entailment))?;
    let counter = match input.counter {
        Some((l, t)) => temporal_histogram(l, t, bins, None)?,
        None => TimeSeries::empty(bins, None),
    };
    let peaks = peak_bins(&support, true);
    let totals = all
        .per_hoax
        .iter()
        .map(|(id, b)| {
            let mut counts = LabelCounts::default();
            b.values().for_each(|c| counts.merge(c));
            HoaxTotals { hoax_id: id.clone(), counts, peak_bin: peaks.get(&Scope::Hoax(id.clone())).copied() }
        })
        .collect();
    let mut comparisons = Vec::new();
    if input.counter.is_some() {
        let ids: std::collections::BTreeSet<&HoaxId> = support.per_hoax.keys().chain(counter.per_hoax.keys()).collect();
        for id in ids {
            comparisons.push(HoaxComparison {
                hoax_id: id.clone(),
                comparison: compare_series(&support.for_hoax(id), &counter.for_hoax(id))?,
            });
        }
    }
    let aggregate = support
        .aggregate()
        .iter()
        .map(|(b, c)| SeriesRow {
            hoax_id: None,
            bin: *b,
            bin_start: bins.bin_start(*b),
            entailment: c.entailment,
            contradiction: c.contradiction,
            neutral: c.neutral,
        })
        .collect();
    Ok(TrackingReport {
        bins,
        dataset_size: input.labeled.len(),
        dropped: input.dropped,
        totals,
        aggregate_peak_bin: peak_bins(&support, false).get(&Scope::Aggregate).copied(),
        support: rows(&support),
        counter: rows(&counter),
        aggregate,
        comparisons,
    })
}

/// Writes `report.json`, one CSV per series and `plot.json`, a list of
/// named series of `[bin_start, count]` points.
pub fn write_report(report: &TrackingReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), serde_json::to_vec_pretty(report)?)?;
    for (name, rows) in [("support", &report.support), ("counter", &report.counter), ("aggregate", &report.aggregate)] {
        let mut w = csv::Writer::from_path(dir.join(format!("{name}.csv")))?;
        w.write_record(["hoax_id", "bin", "bin_start", "entailment", "contradiction", "neutral"])?;
        for r in rows {
            w.write_record([
                r.hoax_id.as_ref().map(ToString::to_string).unwrap_or_default(),
                r.bin.to_string(),
                r.bin_start.to_rfc3339(),
                r.entailment.to_string(),
                r.contradiction.to_string(),
                r.neutral.to_string(),
            ])?;
        }
        w.flush()?;
    }
    let points = |rows: &[SeriesRow], id: Option<&HoaxId>| -> Vec<(DateTime<Utc>, usize)> {
        rows.iter()
            .filter(|r| id.is_none() || r.hoax_id.as_ref() == id)
            .map(|r| (r.bin_start, r.entailment + r.contradiction + r.neutral))
            .collect()
    };
    let mut series = vec![serde_json::json!({"name": "support/all", "points": points(&report.aggregate, None)})];
    for t in &report.totals {
        series.push(serde_json::json!({"name": format!("support/{}", t.hoax_id), "points": points(&report.support, Some(&t.hoax_id))}));
    }
    for c in &report.comparisons {
        series.push(serde_json::json!({"name": format!("counter/{}", c.hoax_id), "points": points(&report.counter, Some(&c.hoax_id))}));
    }
    let plot = serde_json::json!({"bin_width_secs": report.bins.bin_width_secs, "origin": report.bins.origin, "series": series});
    fs::write(dir.join("plot.json"), serde_json::to_vec_pretty(&plot)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tweet(id: &str, day: i64) -> TweetRecord {
        TweetRecord {
            id: id.into(),
            text: "t".into(),
            created_at: BinConfig::default().origin + Duration::days(day),
            author_hash: "h".into(),
            lang: "es".into(),
            is_reply: false,
        }
    }

    fn labeled(id: &str, hoax: u64, label: RelationLabel) -> LabeledTweet {
        let scores = match label {
            RelationLabel::Entailment => NliScores { entailment: 0.9, contradiction: 0.05, neutral: 0.05 },
            RelationLabel::Contradiction => NliScores { entailment: 0.05, contradiction: 0.9, neutral: 0.05 },
            RelationLabel::Neutral => NliScores { entailment: 0.05, contradiction: 0.05, neutral: 0.9 },
        };
        LabeledTweet { tweet_id: id.into(), hoax_id: hoax.into(), similarity: 0.8, scores, label }
    }

    #[test]
    fn histogram_basics() {
        let cfg = BinConfig::default();
        let s = temporal_histogram(&[labeled("a", 1, RelationLabel::Entailment)], &[tweet("a", 3)], cfg, None).unwrap();
        assert_eq!(s.aggregate().len(), 1);
        assert_eq!(s.total(), 1);
        let l = [labeled("a", 1, RelationLabel::Entailment), labeled("b", 1, RelationLabel::Entailment)];
        let s = temporal_histogram(&l, &[tweet("a", 1), tweet("b", 5)], cfg, None).unwrap();
        assert_eq!(s.aggregate()[&0].entailment, 2);
        assert!(matches!(temporal_histogram(&l, &[tweet("a", 1)], cfg, None), Err(TrackingError::MissingTimestamp(id)) if id == "b"));
        assert_eq!(cfg.bin_of(cfg.origin - Duration::seconds(1)), -1);
    }

    #[test]
    fn comparison_rules() {
        let cfg = BinConfig::default();
        let l = [labeled("a", 1, RelationLabel::Entailment), labeled("b", 1, RelationLabel::Entailment)];
        let t = [tweet("a", 1), tweet("b", 20)];
        let s = temporal_histogram(&l, &t, cfg, None).unwrap();
        let same = compare_series(&s, &s).unwrap();
        assert_eq!((same.ratio, same.lag_of_peaks), (Some(1.0), Some(0)));
        assert_eq!(same.bins.len(), 3);
        let zero = compare_series(&s, &TimeSeries::empty(cfg, None)).unwrap();
        assert_eq!((zero.ratio, zero.lag_of_peaks), (Some(0.0), None));
        let other = TimeSeries::empty(BinConfig { bin_width_secs: 86_400, ..cfg }, None);
        assert!(matches!(compare_series(&s, &other), Err(TrackingError::BinMismatch)));
    }

    #[test]
    fn peaks_prefer_earliest() {
        let cfg = BinConfig::default();
        let l = [labeled("a", 1, RelationLabel::Neutral), labeled("b", 1, RelationLabel::Neutral)];
        let s = temporal_histogram(&l, &[tweet("a", 0), tweet("b", 7)], cfg, None).unwrap();
        assert_eq!(peak_bins(&s, true)[&Scope::Hoax(1.into())], 0);
        assert_eq!(peak_bins(&s, false)[&Scope::Aggregate], 0);
        assert!(peak_bins(&TimeSeries::empty(cfg, None), true).is_empty());
    }

    #[test]
    fn assignment_tie_breaks() {
        let s = |e: f64| NliScores { entailment: e, contradiction: 0.0, neutral: 1.0 - e };
        let c = [(3.into(), 0.7, s(0.5)), (2.into(), 0.9, s(0.5)), (1.into(), 0.9, s(0.5))];
        assert_eq!(select_assignment(&c).unwrap().0, HoaxId::from(1));
        let c = [(3.into(), 0.6, s(0.8)), (1.into(), 0.9, s(0.5))];
        assert_eq!(select_assignment(&c).unwrap().0, HoaxId::from(3));
        assert!(select_assignment(&[]).is_none());
    }

    #[test]
    fn labeled_json_shape() {
        let j = serde_json::to_value(labeled("a", 4, RelationLabel::Contradiction)).unwrap();
        let keys: Vec<&str> = j.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, ["contradiction", "entailment", "hoax_id", "label", "neutral", "similarity", "tweet_id"]);
        assert_eq!(j["label"], "CONTRADICTION");
    }
}
