//! Recorded search fixtures, served either in process or over HTTP.
//!
//! A fixture file is JSON `{request_matcher: {query}, pages: [{data, meta}]}`.
//! Cursors are opaque strings of the form `c<page>.<offset>`; the declared
//! `meta` of a fixture page is ignored in favour of computed pagination.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::net::{SocketAddr, TcpListener};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::oneshot;

use super::{OsnClient, OsnError, Page, PageMeta, PageRequest, Result, MAX_PAGE_SIZE, SEARCH_PATH};
use crate::keywords::parse_query;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestMatcher {
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockFixture {
    pub request_matcher: RequestMatcher,
    pub pages: Vec<Page>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MockCatalog {
    fixtures: BTreeMap<String, MockFixture>,
}

fn cursor(page: usize, offset: usize) -> String {
    format!("c{page}.{offset}")
}

fn parse_cursor(token: &str) -> Option<(usize, usize)> {
    let (p, o) = token.strip_prefix('c')?.split_once('.')?;
    Some((p.parse().ok()?, o.parse().ok()?))
}

impl MockCatalog {
    pub fn new(fixtures: impl IntoIterator<Item = MockFixture>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for f in fixtures {
            let q = f.request_matcher.query.clone();
            if map.insert(q.clone(), f).is_some() {
                return Err(OsnError::InvalidConfig(format!("two fixtures match query {q:?}")));
            }
        }
        Ok(Self { fixtures: map })
    }

    /// Loads every `*.json` file in `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut fixtures = Vec::new();
        for p in paths {
            let f: MockFixture = serde_json::from_slice(&fs::read(&p)?).map_err(|e| OsnError::Parse {
                path: p.display().to_string(),
                line: e.line(),
                message: e.to_string(),
            })?;
            fixtures.push(f);
        }
        Self::new(fixtures)
    }

    pub fn fixture(&self, query: &str) -> Option<&MockFixture> {
        self.fixtures.get(query)
    }

    /// Serves one page with the semantics of the search endpoint. Unknown
    /// queries yield an empty result.
    pub fn serve(&self, req: &PageRequest) -> Result<Page> {
        parse_query(&req.query).map_err(|e| OsnError::MalformedQuery(e.to_string()))?;
        if req.max_results == 0 || req.max_results > MAX_PAGE_SIZE {
            return Err(OsnError::MalformedQuery(format!("max_results must lie in 1..={MAX_PAGE_SIZE}")));
        }
        let Some(fixture) = self.fixtures.get(&req.query) else {
            return Ok(Page::default());
        };
        let (page, offset) = match &req.next_token {
            None => (0, 0),
            Some(t) => parse_cursor(t)
                .filter(|(p, _)| *p < fixture.pages.len())
                .ok_or_else(|| OsnError::PageLoss(format!("invalid next_token {t:?}")))?,
        };
        let in_window = |t: &DateTime<Utc>| *t >= req.start_time && req.end_time.is_none_or(|e| *t <= e);
        let visible: Vec<_> = fixture.pages.get(page).map_or(Vec::new(), |p| p.data.iter().filter(|t| in_window(&t.created_at)).collect());
        let data: Vec<_> = visible.iter().skip(offset).take(req.max_results).map(|t| (*t).clone()).collect();
        let consumed = offset + data.len();
        let next_token = if consumed < visible.len() {
            Some(cursor(page, consumed))
        } else if page + 1 < fixture.pages.len() {
            Some(cursor(page + 1, 0))
        } else {
            None
        };
        Ok(Page { meta: PageMeta { result_count: data.len(), next_token }, data })
    }
}

/// In-process client over a catalog; performs no network I/O.
#[derive(Debug, Default)]
pub struct FixtureClient {
    catalog: MockCatalog,
    requests: AtomicUsize,
}

impl FixtureClient {
    pub fn new(catalog: MockCatalog) -> Self {
        Self { catalog, requests: AtomicUsize::new(0) }
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl OsnClient for FixtureClient {
    fn fetch_page(&self, request: &PageRequest) -> Result<Page> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        self.catalog.serve(request)
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockServerOptions {
    /// Required bearer token; `None` accepts any request.
    pub bearer_token: Option<String>,
    /// Server-side limit of requests per sliding window; excess gets 429.
    pub rate_limit: Option<(u32, Duration)>,
    /// Number of initial requests answered with 429.
    pub throttle_first: usize,
    /// Reject the first request that carries a cursor as expired.
    pub expire_cursor_once: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MockServerStats {
    pub requests: usize,
    pub throttled: usize,
    pub auth_failures: usize,
    pub page_losses: usize,
    /// Largest number of requests seen inside one rate-limit window.
    pub max_in_window: usize,
}

struct Shared {
    catalog: MockCatalog,
    options: MockServerOptions,
    state: Mutex<ServerState>,
}

#[derive(Default)]
struct ServerState {
    stats: MockServerStats,
    arrivals: VecDeque<Instant>,
    throttle_remaining: usize,
    cursor_expired: bool,
}

/// HTTP mock of the search endpoint; stops when dropped.
pub struct MockServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl MockServer {
    pub fn start(catalog: MockCatalog, options: MockServerOptions) -> std::io::Result<Self> {
        Self::bind("127.0.0.1:0", catalog, options)
    }

    pub fn bind(addr: &str, catalog: MockCatalog, options: MockServerOptions) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let state = ServerState { throttle_remaining: options.throttle_first, ..Default::default() };
        let shared = Arc::new(Shared { catalog, options, state: Mutex::new(state) });
        let app = Router::new().route(SEARCH_PATH, get(search)).with_state(shared.clone());
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::Builder::new().name("osn-mock".into()).spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener)?;
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
            })
        })?;
        Ok(Self { addr, shared, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stats(&self) -> MockServerStats {
        self.shared.state.lock().stats.clone()
    }

    /// Blocks until the server thread exits.
    pub fn wait(mut self) -> std::io::Result<()> {
        match self.thread.take() {
            Some(t) => t.join().unwrap_or(Ok(())),
            None => Ok(()),
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn error(status: StatusCode, message: &str) -> Response {
    (status, Json(json!({"title": status.canonical_reason().unwrap_or(""), "errors": [{"message": message}]}))).into_response()
}

fn throttled(retry_after: Duration) -> Response {
    let reset = Utc::now().timestamp() + retry_after.as_secs_f64().ceil() as i64;
    let mut resp = error(StatusCode::TOO_MANY_REQUESTS, "Too Many Requests");
    let h = resp.headers_mut();
    h.insert("retry-after-ms", retry_after.as_millis().to_string().parse().expect("ascii"));
    h.insert("x-rate-limit-reset", reset.to_string().parse().expect("ascii"));
    resp
}

fn parse_request(q: &BTreeMap<String, String>) -> std::result::Result<PageRequest, String> {
    let time = |k: &str| -> std::result::Result<Option<DateTime<Utc>>, String> {
        q.get(k).map(|v| DateTime::parse_from_rfc3339(v).map(|t| t.with_timezone(&Utc)).map_err(|e| format!("{k}: {e}"))).transpose()
    };
    Ok(PageRequest {
        query: q.get("query").cloned().ok_or("query is required")?,
        start_time: time("start_time")?.unwrap_or(DateTime::<Utc>::MIN_UTC),
        end_time: time("end_time")?,
        max_results: q.get("max_results").map_or(Ok(10), |v| v.parse().map_err(|_| format!("max_results {v:?}")))?,
        next_token: q.get("next_token").cloned(),
    })
}

async fn search(State(shared): State<Arc<Shared>>, headers: HeaderMap, Query(q): Query<BTreeMap<String, String>>) -> Response {
    let now = Instant::now();
    {
        let mut st = shared.state.lock();
        st.stats.requests += 1;
        if let Some(expected) = &shared.options.bearer_token {
            let got = headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok());
            if got != Some(format!("Bearer {expected}").as_str()) {
                st.stats.auth_failures += 1;
                return error(StatusCode::UNAUTHORIZED, "Unauthorized");
            }
        }
        if let Some((limit, window)) = shared.options.rate_limit {
            st.arrivals.push_back(now);
            while st.arrivals.front().is_some_and(|t| now.duration_since(*t) >= window) {
                st.arrivals.pop_front();
            }
            st.stats.max_in_window = st.stats.max_in_window.max(st.arrivals.len());
            if st.arrivals.len() > limit as usize {
                st.stats.throttled += 1;
                let wait = window.saturating_sub(now.duration_since(st.arrivals[0]));
                return throttled(wait);
            }
        }
        if st.throttle_remaining > 0 {
            st.throttle_remaining -= 1;
            st.stats.throttled += 1;
            return throttled(Duration::from_millis(1));
        }
        if shared.options.expire_cursor_once && !st.cursor_expired && q.contains_key("next_token") {
            st.cursor_expired = true;
            st.stats.page_losses += 1;
            return error(StatusCode::BAD_REQUEST, "Invalid next_token: cursor expired");
        }
    }
    let req = match parse_request(&q) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, &e),
    };
    match shared.catalog.serve(&req) {
        Ok(page) => Json(page).into_response(),
        Err(OsnError::PageLoss(m)) => error(StatusCode::BAD_REQUEST, &format!("Invalid next_token: {m}")),
        Err(e) => error(StatusCode::BAD_REQUEST, &e.to_string()),
    }
}
