//! HTTP client for the search endpoint with a shared request budget.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{SecondsFormat, Utc};
use parking_lot::{Condvar, Mutex};
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;

use super::{OsnClient, OsnConfig, OsnError, Page, PageRequest, Result, MAX_PAGE_SIZE, SEARCH_PATH};

/// Smallest page the real endpoint accepts.
pub const MIN_REMOTE_PAGE: usize = 10;
const TWEET_FIELDS: &str = "created_at,author_id,lang,in_reply_to_user_id";
const BACKOFF_BASE: Duration = Duration::from_millis(100);

/// At most `limit` requests per sliding `window`. A slot is held from send
/// until the response completes and then for one more window, so arrivals
/// at the server are also at most `limit` per window.
#[derive(Debug)]
pub struct RateLimiter {
    limit: usize,
    window: Duration,
    state: Mutex<LimiterState>,
    released: Condvar,
}

#[derive(Debug, Default)]
struct LimiterState {
    in_flight: usize,
    completions: VecDeque<Instant>,
}

pub struct Permit<'a>(&'a RateLimiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.0.state.lock();
        st.in_flight -= 1;
        st.completions.push_back(Instant::now());
        self.0.released.notify_all();
    }
}

impl RateLimiter {
    pub fn new(limit: u32, window: Duration) -> Self {
        Self { limit: limit.max(1) as usize, window, state: Mutex::new(LimiterState::default()), released: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock();
        loop {
            let now = Instant::now();
            while st.completions.front().is_some_and(|t| now.duration_since(*t) >= self.window) {
                st.completions.pop_front();
            }
            if st.in_flight + st.completions.len() < self.limit {
                st.in_flight += 1;
                return Permit(self);
            }
            match st.completions.front() {
                Some(t) => {
                    let wait = self.window.saturating_sub(now.duration_since(*t));
                    self.released.wait_for(&mut st, wait);
                }
                None => self.released.wait(&mut st),
            }
        }
    }
}

pub struct TwitterClient {
    base: String,
    token: String,
    client: Client,
    limiter: Arc<RateLimiter>,
    max_attempts: u32,
    max_wait: Duration,
}

impl TwitterClient {
    pub fn new(base: &str, token: &str, config: &OsnConfig) -> Result<Self> {
        config.validate()?;
        let client = Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| OsnError::InvalidConfig(e.to_string()))?;
        let window = Duration::from_secs_f64(config.window_seconds);
        Ok(Self {
            base: base.trim_end_matches('/').to_string(),
            token: token.to_string(),
            client,
            limiter: Arc::new(RateLimiter::new(config.rate_limit_per_window, window)),
            max_attempts: config.max_attempts,
            max_wait: window,
        })
    }

    /// Shares one request budget between clients.
    pub fn with_limiter(mut self, limiter: Arc<RateLimiter>) -> Self {
        self.limiter = limiter;
        self
    }

    pub fn limiter(&self) -> Arc<RateLimiter> {
        self.limiter.clone()
    }

    fn send(&self, req: &PageRequest) -> reqwest::Result<Response> {
        let mut params = vec![
            ("query", req.query.clone()),
            ("start_time", req.start_time.to_rfc3339_opts(SecondsFormat::Secs, true)),
            ("max_results", req.max_results.clamp(MIN_REMOTE_PAGE, MAX_PAGE_SIZE).to_string()),
            ("tweet.fields", TWEET_FIELDS.to_string()),
        ];
        if let Some(end) = req.end_time {
            params.push(("end_time", end.to_rfc3339_opts(SecondsFormat::Secs, true)));
        }
        if let Some(t) = &req.next_token {
            params.push(("next_token", t.clone()));
        }
        self.client.get(format!("{}{SEARCH_PATH}", self.base)).bearer_auth(&self.token).query(&params).send()
    }

    fn retry_hint(&self, resp: &Response) -> Duration {
        let header = |name: &str| resp.headers().get(name).and_then(|v| v.to_str().ok()).and_then(|v| v.trim().parse::<i64>().ok());
        let hint = if let Some(ms) = header("retry-after-ms") {
            Duration::from_millis(ms.max(0) as u64)
        } else if let Some(reset) = header("x-rate-limit-reset") {
            Duration::from_secs((reset - Utc::now().timestamp()).max(0) as u64)
        } else if let Some(s) = header("retry-after") {
            Duration::from_secs(s.max(0) as u64)
        } else {
            BACKOFF_BASE
        };
        hint.min(self.max_wait)
    }
}

fn error_message(body: &str) -> String {
    serde_json::from_str::<serde_json::Value>(body)
        .ok()
        .and_then(|v| v["errors"][0]["message"].as_str().or(v["detail"].as_str()).map(str::to_string))
        .unwrap_or_else(|| body.chars().take(200).collect())
}

impl OsnClient for TwitterClient {
    fn fetch_page(&self, request: &PageRequest) -> Result<Page> {
        let mut last = String::new();
        for attempt in 1..=self.max_attempts {
            let permit = self.limiter.acquire();
            let outcome = self.send(request).and_then(|resp| {
                let status = resp.status();
                let hint = (status == StatusCode::TOO_MANY_REQUESTS).then(|| self.retry_hint(&resp));
                resp.text().map(|body| (status, hint, body))
            });
            drop(permit);
            let backoff = BACKOFF_BASE * 2u32.pow(attempt - 1);
            match outcome {
                Err(e) => last = e.to_string(),
                Ok((status, _, body)) if status.is_success() => {
                    return serde_json::from_str(&body).map_err(|e| OsnError::MalformedResponse(e.to_string()));
                }
                Ok((StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN, _, body)) => {
                    return Err(OsnError::AuthFailed(error_message(&body)));
                }
                Ok((StatusCode::BAD_REQUEST, _, body)) => {
                    let msg = error_message(&body);
                    return Err(if msg.contains("next_token") { OsnError::PageLoss(msg) } else { OsnError::MalformedQuery(msg) });
                }
                Ok((StatusCode::TOO_MANY_REQUESTS, hint, _)) => {
                    let wait = hint.unwrap_or(BACKOFF_BASE);
                    if attempt == self.max_attempts {
                        return Err(OsnError::RateLimited { retry_after: wait });
                    }
                    log::info!("rate limited; sleeping {wait:?}");
                    std::thread::sleep(wait);
                    continue;
                }
                Ok((status, _, body)) if status.is_server_error() => last = format!("{status}: {}", error_message(&body)),
                Ok((status, _, body)) => {
                    return Err(OsnError::MalformedResponse(format!("{status}: {}", error_message(&body))));
                }
            }
            if attempt < self.max_attempts {
                std::thread::sleep(backoff);
            }
        }
        Err(OsnError::Transport { attempts: self.max_attempts, message: last })
    }
}
