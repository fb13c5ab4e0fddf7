//! Minimal JSON-over-HTTP client shared by the remote embedder and the
//! remote classifier, with exponential-backoff retries.

use std::thread;
use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

/// Environment variable holding the bearer token for remote services.
pub const API_KEY_ENV: &str = "BUDGETRAG_API_KEY";

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("service returned HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("response is not valid JSON: {0}")]
    Decode(String),
}

impl HttpError {
    /// Rate limiting, server errors and transport failures are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            HttpError::Status { code, .. } => *code == 429 || *code >= 500,
            HttpError::Transport(_) => true,
            HttpError::Decode(_) => false,
        }
    }

    pub fn status(&self) -> Option<u16> {
        match self {
            HttpError::Status { code, .. } => Some(*code),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(500), factor: 2 }
    }
}

impl RetryPolicy {
    pub fn delay_for(&self, retry: u32) -> Duration {
        self.base_delay.saturating_mul(self.factor.saturating_pow(retry))
    }

    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, HttpError>) -> Result<T, HttpError> {
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt + 1 < self.max_attempts.max(1) => {
                    let delay = self.delay_for(attempt);
                    log::warn!("retrying after {delay:?}: {e}");
                    thread::sleep(delay);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct HttpClient {
    agent: ureq::Agent,
    bearer: Option<String>,
}

impl HttpClient {
    pub fn new(bearer: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        HttpClient { agent, bearer }
    }

    /// Client authenticated with the token in `BUDGETRAG_API_KEY`, if set.
    pub fn from_env(timeout: Duration) -> Self {
        let bearer = std::env::var(API_KEY_ENV).ok().filter(|t| !t.is_empty());
        Self::new(bearer, timeout)
    }

    pub fn post_json(&self, url: &str, body: &Value) -> Result<Value, HttpError> {
        let mut req = self.agent.post(url).set("Content-Type", "application/json");
        if let Some(token) = &self.bearer {
            req = req.set("Authorization", &format!("Bearer {token}"));
        }
        let resp = match req.send_string(&body.to_string()) {
            Ok(resp) => resp,
            Err(ureq::Error::Status(code, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                return Err(HttpError::Status { code, body });
            }
            Err(ureq::Error::Transport(t)) => return Err(HttpError::Transport(t.to_string())),
        };
        let text = resp.into_string().map_err(|e| HttpError::Transport(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| HttpError::Decode(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    fn fast() -> RetryPolicy {
        RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(1), factor: 2 }
    }

    #[test]
    fn default_backoff_schedule() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay_for(0), Duration::from_millis(500));
        assert_eq!(p.delay_for(1), Duration::from_millis(1000));
        assert_eq!(p.delay_for(2), Duration::from_millis(2000));
    }

    #[test]
    fn retries_transient_errors_up_to_limit() {
        let calls = Cell::new(0);
        let res: Result<(), _> = fast().run(|| {
            calls.set(calls.get() + 1);
            Err(HttpError::Status { code: 503, body: String::new() })
        });
        assert_eq!(calls.get(), 3);
        assert_eq!(res.unwrap_err().status(), Some(503));
    }

    #[test]
    fn does_not_retry_client_errors() {
        let calls = Cell::new(0);
        let res: Result<(), _> = fast().run(|| {
            calls.set(calls.get() + 1);
            Err(HttpError::Status { code: 400, body: String::new() })
        });
        assert!(res.is_err());
        assert_eq!(calls.get(), 1);
    }

    #[test]
    fn recovers_after_transient_failure() {
        let calls = Cell::new(0);
        let res = fast().run(|| {
            calls.set(calls.get() + 1);
            if calls.get() < 2 {
                Err(HttpError::Transport("reset".into()))
            } else {
                Ok(7)
            }
        });
        assert_eq!(res.unwrap(), 7);
    }
}
