//! Blocking HTTP client for protocol v1.

use std::thread;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;
use uuid::Uuid;

use super::protocol::*;
use super::{Backend, GatewayError, ProviderConfig, Result, RetryPolicy};

/// Retries connection failures, timeouts, 429 and 5xx with exponential
/// backoff; every attempt of one call carries the same request id.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    base: String,
    client: Client,
    retry: RetryPolicy,
}

impl HttpBackend {
    pub fn new(base_url: &str, config: &ProviderConfig) -> Result<Self> {
        let client = Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| GatewayError::InvalidConfig(format!("cannot build HTTP client: {e}")))?;
        Ok(Self { base: base_url.trim_end_matches('/').to_string(), client, retry: config.retry })
    }

    fn call<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: Option<&Req>) -> Result<Resp> {
        let url = format!("{}{}", self.base, path);
        let request_id = Uuid::new_v4().to_string();
        let mut last_error = String::new();
        for attempt in 1..=self.retry.max_attempts {
            if attempt > 1 {
                thread::sleep(self.retry.backoff(attempt - 1));
            }
            let builder = match body {
                Some(b) => self.client.post(&url).json(b),
                None => self.client.get(&url),
            };
            let sent = builder
                .header(REQUEST_ID_HEADER, &request_id)
                .header(PROTOCOL_HEADER, PROTOCOL_VERSION.to_string())
                .send();
            let resp = match sent {
                Ok(r) => r,
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            let bytes = match resp.bytes() {
                Ok(b) => b,
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            };
            if status.is_success() {
                return serde_json::from_slice(&bytes)
                    .map_err(|e| GatewayError::MalformedResponse(format!("{path}: {e}")));
            }
            let text = String::from_utf8_lossy(&bytes).into_owned();
            if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
                last_error = format!("{path} returned {status}: {text}");
                continue;
            }
            return Err(GatewayError::Rejected { status: status.as_u16(), body: text });
        }
        Err(GatewayError::ProviderUnreachable { attempts: self.retry.max_attempts, last_error })
    }
}

impl Backend for HttpBackend {
    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse> {
        self.call("/v1/embed", Some(req))
    }

    fn nli(&self, req: &NliRequest) -> Result<NliResponse> {
        self.call("/v1/nli", Some(req))
    }

    fn annotate(&self, req: &AnnotateRequest) -> Result<AnnotateResponse> {
        self.call("/v1/annotate", Some(req))
    }

    fn health(&self) -> Result<HealthResponse> {
        self.call::<(), _>("/v1/health", None)
    }
}
