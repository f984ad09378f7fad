//! HTTP server exposing the stub provider over protocol v1.
//!
//! Used for contract tests of the HTTP client and by `facter serve-stub`.
//! Status codes: 400 malformed request, 422 unknown model id, 503 while
//! injected failures remain.

use std::collections::BTreeMap;
use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use parking_lot::Mutex;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio::sync::oneshot;

use super::protocol::{PROTOCOL_HEADER, PROTOCOL_VERSION, REQUEST_ID_HEADER};
use super::stub::StubBackend;
use super::{Backend, GatewayError};

#[derive(Debug, Clone)]
pub struct StubServerOptions {
    /// Model table served; may deliberately disagree with a client config.
    pub dims: BTreeMap<String, usize>,
    /// Delay added to every request.
    pub latency: Duration,
    /// Number of initial requests answered with 503.
    pub fail_first: usize,
}

impl StubServerOptions {
    pub fn new(dims: BTreeMap<String, usize>) -> Self {
        Self { dims, latency: Duration::ZERO, fail_first: 0 }
    }
}

/// Counters observed by the server.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StubServerStats {
    pub requests: usize,
    pub in_flight: usize,
    pub peak_in_flight: usize,
    /// `x-request-id` of each request in arrival order.
    pub request_ids: Vec<String>,
}

struct Shared {
    backend: StubBackend,
    latency: Duration,
    fail_remaining: Mutex<usize>,
    stats: Mutex<StubServerStats>,
}

struct InFlightGuard<'a>(&'a Shared);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        self.0.stats.lock().in_flight -= 1;
    }
}

/// A running stub server; stops when dropped.
pub struct StubServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl StubServer {
    /// Binds an ephemeral port on 127.0.0.1.
    pub fn start(options: StubServerOptions) -> std::io::Result<Self> {
        Self::bind("127.0.0.1:0", options)
    }

    pub fn bind(addr: &str, options: StubServerOptions) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            backend: StubBackend::new(options.dims),
            latency: options.latency,
            fail_remaining: Mutex::new(options.fail_first),
            stats: Mutex::new(StubServerStats::default()),
        });
        let app = Router::new()
            .route("/v1/embed", post(|s, h, b| handle(s, h, b, |be: &StubBackend, r| be.embed(r))))
            .route("/v1/nli", post(|s, h, b| handle(s, h, b, |be: &StubBackend, r| be.nli(r))))
            .route("/v1/annotate", post(|s, h, b| handle(s, h, b, |be: &StubBackend, r| be.annotate(r))))
            .route("/v1/health", get(|s, h| handle(s, h, Bytes::from_static(b"null"), |be: &StubBackend, _: &()| be.health())))
            .with_state(shared.clone());
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::Builder::new().name("stub-server".into()).spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build()?;
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

    pub fn stats(&self) -> StubServerStats {
        self.shared.stats.lock().clone()
    }

    /// Blocks until the server thread exits.
    pub fn wait(mut self) -> std::io::Result<()> {
        match self.thread.take() {
            Some(t) => t.join().unwrap_or(Ok(())),
            None => Ok(()),
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

async fn handle<Req, Resp>(
    State(shared): State<Arc<Shared>>,
    headers: HeaderMap,
    body: Bytes,
    op: impl FnOnce(&StubBackend, &Req) -> Result<Resp, GatewayError>,
) -> Response
where
    Req: DeserializeOwned,
    Resp: Serialize,
{
    {
        let mut st = shared.stats.lock();
        st.requests += 1;
        st.in_flight += 1;
        st.peak_in_flight = st.peak_in_flight.max(st.in_flight);
        let id = headers.get(REQUEST_ID_HEADER).and_then(|v| v.to_str().ok()).unwrap_or("").to_string();
        st.request_ids.push(id);
    }
    let _guard = InFlightGuard(&shared);
    if !shared.latency.is_zero() {
        tokio::time::sleep(shared.latency).await;
    }
    {
        let mut remaining = shared.fail_remaining.lock();
        if *remaining > 0 {
            *remaining -= 1;
            return (StatusCode::SERVICE_UNAVAILABLE, "loading").into_response();
        }
    }
    if let Some(v) = headers.get(PROTOCOL_HEADER) {
        if v.to_str().ok() != Some(PROTOCOL_VERSION.to_string().as_str()) {
            return (StatusCode::BAD_REQUEST, "unsupported protocol version").into_response();
        }
    }
    let req: Req = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return (StatusCode::BAD_REQUEST, format!("malformed request: {e}")).into_response(),
    };
    match op(&shared.backend, &req) {
        Ok(resp) => axum::Json(resp).into_response(),
        Err(GatewayError::Rejected { status, body }) => {
            (StatusCode::from_u16(status).unwrap_or(StatusCode::BAD_REQUEST), body).into_response()
        }
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}
