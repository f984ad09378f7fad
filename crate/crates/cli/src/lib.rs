//! Operator surface: index management, claim verification, keyword and
//! query tooling, social network retrieval, tracking reports and the
//! evaluation harness.
//!
//! Exit codes: 0 success (or SUPPORTS_HOAX), 10 UNVERIFIED,
//! 11 CONTRADICTS_HOAX, 1 runtime error, 2 usage error.

pub mod config;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use facter_core::eval::{
    classification_report, keyword_report, load_labels, load_sts_csv, render_classification_table, render_keyword_table,
    render_sts_table, sts_report,
};
use facter_core::gateway::server::{StubServer, StubServerOptions};
use facter_core::gateway::Gateway;
use facter_core::index::{load_hoaxes, HoaxId, HoaxIndex, HoaxRecord};
use facter_core::keywords::{
    build_query, extract_keywords, generalize_query, load_gold_keywords, ExtractOptions, ExtractionMode, KeywordError,
    QuerySpec, ScoredKeyword, SynonymTable, DEFAULT_NGRAM_MAX, DEFAULT_TOP_N,
};
use facter_core::osn::{
    export_public, job_paths, load_query_overrides, load_tweets, run_search_persisted, MockCatalog, MockServer,
    MockServerOptions, SearchJob, TweetRecord,
};
use facter_core::pca::{fit_pca, PcaModel};
use facter_core::tracking::{build_dataset, tracking_report, write_labeled, write_report, Dataset, ReportInput};
use facter_core::verdict::{verify_claim, VerdictLabel, VerdictRecord};
use serde::Serialize;

use crate::config::{Config, Overrides};

pub const EXIT_SUPPORTS: i32 = 0;
pub const EXIT_UNVERIFIED: i32 = 10;
pub const EXIT_CONTRADICTS: i32 = 11;

#[derive(Debug, Parser)]
#[command(name = "facter", version, about = "Verify claims against fact-checked hoaxes and track hoaxes on social networks")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Inference provider: "stub" or an http(s) base URL.
    #[arg(long, global = true)]
    pub provider: Option<String>,
    /// Index directory.
    #[arg(long, global = true)]
    pub index: Option<PathBuf>,
    /// PCA model file (FPCA binary).
    #[arg(long, global = true)]
    pub pca: Option<PathBuf>,
    /// Maximum hoaxes returned per search
    #[arg(long, global = true)]
    pub top_k: Option<usize>,
    /// Cosine similarity floor applied before top-k
    #[arg(long, global = true)]
    pub min_similarity: Option<f64>,
    /// Entailment score needed for SUPPORTS_HOAX
    #[arg(long, global = true)]
    pub entailment_threshold: Option<f64>,
    /// Contradiction score needed for CONTRADICTS_HOAX
    #[arg(long, global = true)]
    pub contradiction_threshold: Option<f64>,
    /// Tracking bin width in days.
    #[arg(long, global = true)]
    pub bin_width: Option<i64>,
    /// Date floor for retrieval and tracking (YYYY-MM-DD or RFC 3339).
    #[arg(long, global = true)]
    pub since: Option<String>,
    /// Output location: a directory for index, search and track, a file
    /// otherwise (instead of stdout).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a hoax index (and its PCA unless --pca is given).
    Index(IndexArgs),
    /// Verify one claim (exit 0/10/11) or a file of claims (JSONL).
    Verify(VerifyArgs),
    /// Extract scored keywords from a text.
    Keywords(KeywordArgs),
    /// Build a search query from a text's keywords.
    Query(QueryArgs),
    /// Retrieve posts for hoaxes and persist them with a resumable cursor.
    Search(SearchArgs),
    /// Build the labeled dataset and the temporal tracking report.
    Track(TrackArgs),
    /// Semantic textual similarity table from a score CSV.
    EvalSts(EvalStsArgs),
    /// Classification table from a prediction JSONL.
    EvalNli(EvalNliArgs),
    /// Keyword precision, recall and F1 against gold keywords.
    EvalKeywords(EvalKeywordsArgs),
    /// Serve the stub inference provider over HTTP.
    ServeStub(ServeStubArgs),
    /// Serve recorded search fixtures over HTTP.
    ServeMockOsn(ServeMockOsnArgs),
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Hoax JSONL: {id, text, alt_texts?, fact_checkers?, first_seen?}.
    pub hoaxes: PathBuf,
    /// Extra post corpus (JSONL) whose texts join the PCA fit set.
    #[arg(long)]
    pub fit_pca: Option<PathBuf>,
    /// PCA components when fitting; capped by the fit set size.
    #[arg(long)]
    pub components: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub claim: Option<String>,
    /// Read a single claim from stdin.
    #[arg(long, conflicts_with_all = ["claim", "batch"])]
    pub stdin: bool,
    /// File with one claim per line ("-" for stdin); prints one JSON line each.
    #[arg(long, conflicts_with = "claim")]
    pub batch: Option<PathBuf>,
    /// Include the claim text in the output record.
    #[arg(long)]
    pub include_claim: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    General,
    Twitter,
}

impl From<ModeArg> for ExtractionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::General => ExtractionMode::General,
            ModeArg::Twitter => ExtractionMode::Twitter,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long, value_enum, default_value = "twitter")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = DEFAULT_TOP_N)]
    pub top_n: usize,
    #[arg(long, default_value_t = DEFAULT_NGRAM_MAX)]
    pub ngram_max: usize,
}

impl ExtractArgs {
    fn options(&self) -> ExtractOptions {
        ExtractOptions { top_n: self.top_n, mode: self.mode.into(), ngram_max: self.ngram_max }
    }
}

#[derive(Debug, Args)]
pub struct KeywordArgs {
    pub text: String,
    #[command(flatten)]
    pub extract: ExtractArgs,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    pub text: String,
    #[command(flatten)]
    pub extract: ExtractArgs,
    /// Synonym JSONL: {term, synonyms}.
    #[arg(long)]
    pub synonyms: Option<PathBuf>,
    /// Also emit this many successively generalized queries.
    #[arg(long, default_value_t = 0)]
    pub generalize: usize,
}

#[derive(Debug, Args)]
pub struct OsnArgs {
    /// Query override JSONL: {hoax_id, query}.
    #[arg(long)]
    pub overrides: Option<PathBuf>,
    /// Single query, used with exactly one --hoax-id.
    #[arg(long, conflicts_with = "overrides")]
    pub query: Option<String>,
    /// Restrict to these hoaxes.
    #[arg(long, value_parser = parse_hoax_id)]
    pub hoax_id: Vec<HoaxId>,
    /// Maximum posts per hoax in this run.
    #[arg(long)]
    pub max_results: Option<usize>,
    /// "mock:<fixture dir>" or an http(s) base URL; overrides the config.
    #[arg(long)]
    pub osn_endpoint: Option<String>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub osn: OsnArgs,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Post corpus JSONL files.
    #[arg(long, required_unless_present = "search")]
    pub corpus: Vec<PathBuf>,
    /// Retrieve the corpus first (written under <out>/corpus).
    #[arg(long, conflicts_with = "corpus")]
    pub search: bool,
    #[command(flatten)]
    pub osn: OsnArgs,
    /// Counter-narrative corpus (e.g. fact-checker posts).
    #[arg(long)]
    pub counter: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Args)]
pub struct EvalStsArgs {
    /// CSV: pair_id,lang_pair,model_score,gold_score.
    pub scores: PathBuf,
    #[arg(long, default_value = "model")]
    pub model: String,
    #[arg(long, default_value_t = 0)]
    pub dims: usize,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct EvalNliArgs {
    /// JSONL: {id, gold, pred}.
    pub predictions: PathBuf,
    #[arg(long, default_value = "English")]
    pub language: String,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct EvalKeywordsArgs {
    /// Gold JSONL: {hoax_id, keywords}.
    #[arg(long)]
    pub gold: PathBuf,
    /// Predicted JSONL in the gold layout; extracted from --hoaxes if absent.
    #[arg(long, required_unless_present = "hoaxes")]
    pub pred: Option<PathBuf>,
    #[arg(long, conflicts_with = "pred")]
    pub hoaxes: Option<PathBuf>,
    #[command(flatten)]
    pub extract: ExtractArgs,
    #[arg(long, default_value = "stub")]
    pub model: String,
    #[arg(long, default_value = "Spanish")]
    pub scenario: String,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ServeStubArgs {
    #[arg(long, default_value = "127.0.0.1:8700")]
    pub addr: String,
}

#[derive(Debug, Args)]
pub struct ServeMockOsnArgs {
    #[arg(long, default_value = "fixtures/osn")]
    pub fixtures: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8701")]
    pub addr: String,
    /// Bearer token the server requires; any request passes if absent.
    #[arg(long)]
    pub token: Option<String>,
}

/// Numeric ids parse as numbers, anything else as a string key.
fn parse_hoax_id(s: &str) -> Result<HoaxId, std::convert::Infallible> {
    s.parse()
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            provider: self.provider.clone(),
            index: self.index.clone(),
            pca: self.pca.clone(),
            top_k: self.top_k,
            min_similarity: self.min_similarity,
            entailment_threshold: self.entailment_threshold,
            contradiction_threshold: self.contradiction_threshold,
            bin_width: self.bin_width,
            since: self.since.clone(),
        }
    }
}

/// Runs one command and returns its exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let file = match &cli.global.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let cfg = file.resolve(&cli.global.overrides())?;
    let out = cli.global.out.as_deref();
    match cli.command {
        Command::Index(a) => cmd_index(&cfg, &a, out),
        Command::Verify(a) => cmd_verify(&cfg, &a, out),
        Command::Keywords(a) => cmd_keywords(&cfg, &a, out),
        Command::Query(a) => cmd_query(&cfg, &a, out),
        Command::Search(a) => cmd_search(&cfg, &a, out),
        Command::Track(a) => cmd_track(&cfg, &a, out),
        Command::EvalSts(a) => cmd_eval_sts(&a, out),
        Command::EvalNli(a) => cmd_eval_nli(&a, out),
        Command::EvalKeywords(a) => cmd_eval_keywords(&cfg, &a, out),
        Command::ServeStub(a) => cmd_serve_stub(&cfg, &a),
        Command::ServeMockOsn(a) => cmd_serve_mock_osn(&a),
    }
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?))
        }
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn emit_json<T: Serialize>(w: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    emit_json(&mut std::io::stdout().lock(), value)
}

fn gateway(cfg: &Config) -> Result<Gateway> {
    Ok(Gateway::new(cfg.provider.clone())?)
}

/// The index with its PCA; an explicit --pca must be the one it was built with.
fn open_index(cfg: &Config) -> Result<(HoaxIndex, PcaModel)> {
    let dir = cfg.index_dir();
    if !dir.join("manifest.json").is_file() {
        bail!("no index at {}; build one with `facter index <hoaxes.jsonl> --out {}`", dir.display(), dir.display());
    }
    let (index, pca) = HoaxIndex::load(&dir).with_context(|| format!("loading index {}", dir.display()))?;
    if let Some(p) = &cfg.pca {
        let explicit = PcaModel::load(p).with_context(|| format!("loading PCA {}", p.display()))?;
        if explicit.fingerprint() != pca.fingerprint() {
            bail!("PCA {} differs from the one index {} was built with", p.display(), dir.display());
        }
    }
    Ok((index, pca))
}

#[derive(Serialize)]
struct IndexSummary {
    entries: usize,
    index: PathBuf,
    source_dim: usize,
    reduced_dim: usize,
    pca_fingerprint: String,
}

fn cmd_index(cfg: &Config, a: &IndexArgs, out: Option<&Path>) -> Result<i32> {
    let hoaxes = load_hoaxes(&a.hoaxes).with_context(|| format!("reading {}", a.hoaxes.display()))?;
    if hoaxes.is_empty() {
        bail!("no hoaxes in {}", a.hoaxes.display());
    }
    let gw = gateway(cfg)?;
    let pca = match &cfg.pca {
        Some(p) => PcaModel::load(p).with_context(|| format!("loading PCA {}", p.display()))?,
        None => fit_from_hoaxes(&gw, &hoaxes, a, cfg.defaults.pca_components)?,
    };
    let index = HoaxIndex::build(hoaxes, &gw, &pca)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.index_dir());
    index.save(&dir, &pca)?;
    print_json(&IndexSummary {
        entries: index.len(),
        index: dir,
        source_dim: pca.source_dim(),
        reduced_dim: pca.n_components(),
        pca_fingerprint: pca.fingerprint(),
    })?;
    Ok(0)
}

/// Fit set: canonical and alternative hoax texts plus an optional corpus.
fn fit_from_hoaxes(gw: &Gateway, hoaxes: &[HoaxRecord], a: &IndexArgs, default_k: usize) -> Result<PcaModel> {
    let mut texts: Vec<String> = hoaxes.iter().flat_map(|h| std::iter::once(&h.text).chain(&h.alt_texts)).cloned().collect();
    if let Some(p) = &a.fit_pca {
        texts.extend(load_tweets(p)?.records.into_iter().map(|t| t.text));
    }
    let samples = gw.embed_ensemble(&texts)?;
    let max = samples.len().saturating_sub(1).min(gw.config().total_dim());
    let k = a.components.unwrap_or(default_k).min(max);
    if k == 0 {
        bail!("{} texts are too few to fit a PCA; pass --pca", texts.len());
    }
    Ok(fit_pca(&samples, k, &gw.config().ensemble_model_ids)?)
}

fn read_claims(a: &VerifyArgs) -> Result<Vec<String>> {
    let lines = |r: Box<dyn BufRead>| -> Result<Vec<String>> {
        let mut out = Vec::new();
        for line in r.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                out.push(line);
            }
        }
        Ok(out)
    };
    match (&a.claim, a.stdin, &a.batch) {
        (Some(c), _, _) => Ok(vec![c.clone()]),
        (None, true, _) => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            Ok(vec![s.trim().to_string()])
        }
        (None, false, Some(p)) if p.as_os_str() == "-" => lines(Box::new(std::io::stdin().lock())),
        (None, false, Some(p)) => lines(Box::new(BufReader::new(File::open(p).with_context(|| format!("opening {}", p.display()))?))),
        (None, false, None) => bail!("give a claim, --stdin or --batch <file>"),
    }
}

fn cmd_verify(cfg: &Config, a: &VerifyArgs, out: Option<&Path>) -> Result<i32> {
    let claims = read_claims(a)?;
    let (index, pca) = open_index(cfg)?;
    let gw = gateway(cfg)?;
    let (search, thresholds) = (cfg.search()?, cfg.thresholds()?);
    let mut w = sink(out)?;
    let mut last = None;
    for claim in &claims {
        let check = verify_claim(claim, &index, &gw, &pca, search, thresholds)?;
        emit_json(&mut *w, &VerdictRecord::new(claim, &check.verdict, a.include_claim))?;
        last = Some(check.verdict.label);
    }
    w.flush()?;
    if a.batch.is_some() {
        return Ok(0);
    }
    Ok(match last {
        Some(VerdictLabel::SupportsHoax) => EXIT_SUPPORTS,
        Some(VerdictLabel::ContradictsHoax) => EXIT_CONTRADICTS,
        _ => EXIT_UNVERIFIED,
    })
}

/// TWITTER mode falls back to GENERAL when verbs were the only candidates.
fn extract(text: &str, gw: &Gateway, opts: ExtractOptions) -> Result<Vec<ScoredKeyword>> {
    match extract_keywords(text, gw, opts) {
        Err(KeywordError::NoCandidates) if opts.mode == ExtractionMode::Twitter => {
            eprintln!("no TWITTER-mode candidates in {text:?}; using GENERAL mode");
            Ok(extract_keywords(text, gw, ExtractOptions { mode: ExtractionMode::General, ..opts })?)
        }
        other => Ok(other?),
    }
}

fn cmd_keywords(cfg: &Config, a: &KeywordArgs, out: Option<&Path>) -> Result<i32> {
    let kws = extract(&a.text, &gateway(cfg)?, a.extract.options())?;
    let mut w = sink(out)?;
    emit_json(&mut *w, &kws)?;
    w.flush()?;
    Ok(0)
}

#[derive(Serialize)]
struct QueryOutput {
    query: String,
    groups: Vec<Vec<String>>,
    keywords: Vec<ScoredKeyword>,
    generalized: Vec<String>,
}

fn cmd_query(cfg: &Config, a: &QueryArgs, out: Option<&Path>) -> Result<i32> {
    let kws = extract(&a.text, &gateway(cfg)?, a.extract.options())?;
    let synonyms = match &a.synonyms {
        Some(p) => SynonymTable::load(p)?,
        None => SynonymTable::default(),
    };
    let spec = QuerySpec::from_keywords(&kws, &synonyms)?;
    let mut generalized = Vec::new();
    let mut current = spec.clone();
    for _ in 0..a.generalize {
        match generalize_query(&current, &kws) {
            Ok(next) => {
                generalized.push(build_query(&next)?);
                current = next;
            }
            Err(KeywordError::CannotGeneralize) => break,
            Err(e) => return Err(e.into()),
        }
    }
    let mut w = sink(out)?;
    emit_json(&mut *w, &QueryOutput { query: build_query(&spec)?, groups: spec.groups().to_vec(), keywords: kws, generalized })?;
    w.flush()?;
    Ok(0)
}

fn search_jobs(cfg: &Config, a: &OsnArgs) -> Result<Vec<SearchJob>> {
    let mut queries: BTreeMap<HoaxId, String> = match (&a.overrides, &a.query) {
        (Some(p), _) => load_query_overrides(p)?,
        (None, Some(q)) => match a.hoax_id.as_slice() {
            [id] => BTreeMap::from([(id.clone(), q.clone())]),
            _ => bail!("--query needs exactly one --hoax-id"),
        },
        (None, None) => bail!("give --overrides <file> or --query with one --hoax-id"),
    };
    if !a.hoax_id.is_empty() {
        let wanted: BTreeSet<&HoaxId> = a.hoax_id.iter().collect();
        if let Some(missing) = wanted.iter().find(|id| !queries.contains_key(**id)) {
            bail!("no query for hoax {missing}");
        }
        queries.retain(|id, _| wanted.contains(id));
    }
    Ok(queries
        .into_iter()
        .map(|(id, q)| {
            let mut job = SearchJob::new(id, q);
            job.since = cfg.defaults.date_floor;
            job.max_results = a.max_results;
            job
        })
        .collect())
}

#[derive(Serialize)]
struct SearchSummary {
    hoax_id: HoaxId,
    query: String,
    fetched: usize,
    pages: usize,
    duplicates: usize,
    restarts: usize,
    next_cursor: Option<String>,
    corpus: PathBuf,
}

/// Runs every job into `dir`, one corpus and checkpoint per hoax.
fn run_searches(cfg: &Config, a: &OsnArgs, dir: &Path) -> Result<Vec<SearchSummary>> {
    let mut osn = cfg.osn.clone();
    if let Some(e) = &a.osn_endpoint {
        osn.endpoint = e.clone();
    }
    let client = osn.connect()?;
    let mut out = Vec::new();
    for job in search_jobs(cfg, a)? {
        let (corpus, checkpoint) = job_paths(dir, &job.hoax_id);
        let o = run_search_persisted(&job, client.as_ref(), &osn.hash_salt, osn.page_size, &corpus, &checkpoint)
            .with_context(|| format!("searching hoax {}", job.hoax_id))?;
        out.push(SearchSummary {
            hoax_id: job.hoax_id,
            query: job.query,
            fetched: o.records.len(),
            pages: o.pages,
            duplicates: o.duplicates,
            restarts: o.restarts,
            next_cursor: o.next_cursor,
            corpus,
        });
    }
    Ok(out)
}

fn cmd_search(cfg: &Config, a: &SearchArgs, out: Option<&Path>) -> Result<i32> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("corpus"));
    for s in run_searches(cfg, &a.osn, &dir)? {
        print_json(&s)?;
    }
    Ok(0)
}

/// Concatenated corpora, first occurrence of each id, at or after `since`.
fn merge_corpora(paths: &[PathBuf], since: chrono::DateTime<chrono::Utc>) -> Result<Vec<TweetRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for p in paths {
        let loaded = load_tweets(p).with_context(|| format!("reading corpus {}", p.display()))?;
        if loaded.corrupt_lines > 0 {
            eprintln!("{}: skipped {} corrupt lines", p.display(), loaded.corrupt_lines);
        }
        out.extend(loaded.records.into_iter().filter(|t| t.created_at >= since && seen.insert(t.id.clone())));
    }
    Ok(out)
}

#[derive(Serialize)]
struct TrackSummary {
    tweets: usize,
    dataset_size: usize,
    dropped: usize,
    out_of_scope: usize,
    counter_size: usize,
    aggregate_peak_bin: Option<i64>,
    totals: Vec<facter_core::tracking::HoaxTotals>,
    out: PathBuf,
}

/// Keeps rows of the selected hoaxes; returns how many were removed.
fn restrict(ds: &mut Dataset, hoaxes: &[HoaxId]) -> usize {
    if hoaxes.is_empty() {
        return 0;
    }
    let before = ds.labeled.len();
    ds.labeled.retain(|l| hoaxes.contains(&l.hoax_id));
    before - ds.labeled.len()
}

fn cmd_track(cfg: &Config, a: &TrackArgs, out: Option<&Path>) -> Result<i32> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("report"));
    let (index, pca) = open_index(cfg)?;
    let gw = gateway(cfg)?;
    let corpora: Vec<PathBuf> = if a.search {
        run_searches(cfg, &a.osn, &dir.join("corpus"))?.into_iter().map(|s| s.corpus).collect()
    } else {
        a.corpus.clone()
    };
    let since = cfg.defaults.date_floor;
    let tweets = merge_corpora(&corpora, since)?;
    let params = cfg.dataset()?;
    let mut ds = build_dataset(&tweets, &index, &gw, &pca, params)?;
    let out_of_scope = restrict(&mut ds, &a.osn.hoax_id);
    write_labeled(&ds.labeled, &dir.join("labeled.jsonl"), false)?;
    let mut public = BufWriter::new(File::create(dir.join("public.jsonl"))?);
    export_public(&ds.labeled, &mut public)?;
    public.flush()?;

    let counter = if a.counter.is_empty() {
        None
    } else {
        let ct = merge_corpora(&a.counter, since)?;
        let mut cds = build_dataset(&ct, &index, &gw, &pca, params)?;
        restrict(&mut cds, &a.osn.hoax_id);
        write_labeled(&cds.labeled, &dir.join("counter_labeled.jsonl"), false)?;
        Some((cds, ct))
    };
    let input = ReportInput {
        labeled: &ds.labeled,
        tweets: &tweets,
        dropped: ds.dropped,
        counter: counter.as_ref().map(|(d, t)| (d.labeled.as_slice(), t.as_slice())),
    };
    let report = tracking_report(&input, cfg.bins()?)?;
    write_report(&report, &dir)?;
    print_json(&TrackSummary {
        tweets: tweets.len(),
        dataset_size: report.dataset_size,
        dropped: report.dropped,
        out_of_scope,
        counter_size: counter.as_ref().map_or(0, |(d, _)| d.labeled.len()),
        aggregate_peak_bin: report.aggregate_peak_bin,
        totals: report.totals,
        out: dir,
    })?;
    Ok(0)
}

fn write_output(out: Option<&Path>, format: Format, json: &impl Serialize, table: String) -> Result<i32> {
    let mut w = sink(out)?;
    match format {
        Format::Json => emit_json(&mut *w, json)?,
        Format::Table => w.write_all(table.as_bytes())?,
    }
    w.flush()?;
    Ok(0)
}

fn cmd_eval_sts(a: &EvalStsArgs, out: Option<&Path>) -> Result<i32> {
    let report = sts_report(&load_sts_csv(&a.scores)?)?;
    for e in &report.excluded {
        eprintln!("excluded {}: {}", e.lang_pair, e.reason);
    }
    let table = render_sts_table(&[(a.model.as_str(), a.dims, &report)]);
    write_output(out, a.format, &report, table)
}

fn cmd_eval_nli(a: &EvalNliArgs, out: Option<&Path>) -> Result<i32> {
    let (pred, gold) = load_labels(&a.predictions)?;
    let report = classification_report(&pred, &gold)?;
    let table = render_classification_table(&[(a.language.as_str(), &report)]);
    write_output(out, a.format, &report, table)
}

fn cmd_eval_keywords(cfg: &Config, a: &EvalKeywordsArgs, out: Option<&Path>) -> Result<i32> {
    let gold = load_gold_keywords(&a.gold)?;
    let pred = match (&a.pred, &a.hoaxes) {
        (Some(p), _) => load_gold_keywords(p)?,
        (None, Some(h)) => {
            let gw = gateway(cfg)?;
            let hoaxes = load_hoaxes(h)?;
            let mut pred = BTreeMap::new();
            for hoax in hoaxes.iter().filter(|h| gold.contains_key(&h.id)) {
                let kws = extract(&hoax.text, &gw, a.extract.options())?;
                pred.insert(hoax.id.clone(), kws.into_iter().map(|k| k.surface).collect());
            }
            pred
        }
        (None, None) => bail!("give --pred or --hoaxes"),
    };
    let report = keyword_report(&pred, &gold)?;
    let table = render_keyword_table(&a.scenario, &[(a.model.as_str(), &report)]);
    write_output(out, a.format, &report, table)
}

#[derive(Serialize)]
struct Listening {
    url: String,
}

fn cmd_serve_stub(cfg: &Config, a: &ServeStubArgs) -> Result<i32> {
    let server = StubServer::bind(&a.addr, StubServerOptions::new(cfg.provider.expected_dims.clone()))?;
    print_json(&Listening { url: server.url() })?;
    server.wait()?;
    Ok(0)
}

fn cmd_serve_mock_osn(a: &ServeMockOsnArgs) -> Result<i32> {
    let catalog = MockCatalog::load(&a.fixtures)?;
    let server = MockServer::bind(&a.addr, catalog, MockServerOptions { bearer_token: a.token.clone(), ..Default::default() })?;
    print_json(&Listening { url: server.url() })?;
    server.wait()?;
    Ok(0)
}
