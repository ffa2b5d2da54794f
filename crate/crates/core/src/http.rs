//! Blocking JSON-over-HTTP client with bounded retries, shared by the remote
//! embedding and chat-completion backends.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("request to {url} failed after {attempts} attempt(s): {message}")]
    Exhausted {
        url: String,
        attempts: u32,
        message: String,
    },
    #[error("request to {url} was rejected with status {status}: {body}")]
    Rejected {
        url: String,
        status: u16,
        body: String,
    },
    #[error("invalid response from {url}: {message}")]
    InvalidResponse { url: String, message: String },
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff
            .saturating_mul(2u32.saturating_pow(attempt.saturating_sub(1)))
    }
}

/// Configuration for an OpenAI-compatible endpoint.
#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>, api_key: Option<String>) -> Self {
        EndpointConfig {
            url: url.into(),
            api_key,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        }
    }
}

pub(crate) struct JsonClient {
    client: Client,
    config: EndpointConfig,
}

impl JsonClient {
    pub(crate) fn new(config: EndpointConfig) -> Result<Self, HttpError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| HttpError::InvalidResponse {
                url: config.url.clone(),
                message: format!("cannot build HTTP client: {e}"),
            })?;
        Ok(JsonClient { client, config })
    }

    pub(crate) fn url(&self) -> &str {
        &self.config.url
    }

    /// POSTs `body` and returns the decoded JSON response. Transport errors,
    /// 429 and 5xx responses are retried with exponential backoff; other
    /// non-success statuses fail immediately.
    pub(crate) fn post<B: Serialize>(&self, body: &B) -> Result<Value, HttpError> {
        let url = &self.config.url;
        let retry = self.config.retry;
        let mut last_error = String::new();
        for attempt in 1..=retry.max_attempts.max(1) {
            if attempt > 1 {
                std::thread::sleep(retry.backoff(attempt - 1));
            }
            let mut request = self.client.post(url).json(body);
            if let Some(key) = &self.config.api_key {
                request = request.bearer_auth(key);
            }
            let response = match request.send() {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("attempt {attempt} to {url} failed: {e}");
                    last_error = e.to_string();
                    continue;
                }
            };
            let status = response.status();
            let text = response.text().unwrap_or_default();
            if status.is_success() {
                return serde_json::from_str(&text).map_err(|e| HttpError::InvalidResponse {
                    url: url.clone(),
                    message: e.to_string(),
                });
            }
            if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
                log::warn!("attempt {attempt} to {url} returned {status}");
                last_error = format!("status {status}: {}", truncate(&text, 200));
                continue;
            }
            return Err(HttpError::Rejected {
                url: url.clone(),
                status: status.as_u16(),
                body: truncate(&text, 500),
            });
        }
        Err(HttpError::Exhausted {
            url: url.clone(),
            attempts: retry.max_attempts.max(1),
            message: last_error,
        })
    }
}

fn truncate(text: &str, max: usize) -> String {
    text.chars().take(max).collect()
}

#[cfg(test)]
pub(crate) mod testing {
    //! A tiny scripted HTTP server for exercising the clients.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};
    use std::thread::JoinHandle;

    pub struct ScriptedServer {
        pub url: String,
        pub requests: Arc<Mutex<Vec<String>>>,
        handle: Option<JoinHandle<()>>,
    }

    impl ScriptedServer {
        /// Serves one canned `(status, body)` response per incoming request.
        pub fn start(responses: Vec<(u16, String)>) -> Self {
            let listener = TcpListener::bind("127.0.0.1:0").unwrap();
            let url = format!("http://{}/v1/endpoint", listener.local_addr().unwrap());
            let requests = Arc::new(Mutex::new(Vec::new()));
            let seen = Arc::clone(&requests);
            let handle = std::thread::spawn(move || {
                for (status, body) in responses {
                    let Ok((mut stream, _)) = listener.accept() else {
                        return;
                    };
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut length = 0usize;
                    loop {
                        let mut line = String::new();
                        reader.read_line(&mut line).unwrap();
                        let trimmed = line.trim_end();
                        if trimmed.is_empty() {
                            break;
                        }
                        if let Some(v) = trimmed
                            .to_ascii_lowercase()
                            .strip_prefix("content-length:")
                        {
                            length = v.trim().parse().unwrap();
                        }
                    }
                    let mut payload = vec![0u8; length];
                    reader.read_exact(&mut payload).unwrap();
                    seen.lock()
                        .unwrap()
                        .push(String::from_utf8_lossy(&payload).into_owned());
                    let reply = format!(
                        "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                        body.len()
                    );
                    stream.write_all(reply.as_bytes()).unwrap();
                }
            });
            ScriptedServer {
                url,
                requests,
                handle: Some(handle),
            }
        }

        pub fn finish(mut self) -> Vec<String> {
            if let Some(h) = self.handle.take() {
                h.join().unwrap();
            }
            self.requests.lock().unwrap().clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testing::ScriptedServer;
    use super::*;

    fn fast(url: &str) -> EndpointConfig {
        EndpointConfig {
            url: url.to_string(),
            api_key: Some("secret".into()),
            timeout: Duration::from_secs(5),
            retry: RetryPolicy {
                max_attempts: 3,
                initial_backoff: Duration::from_millis(1),
            },
        }
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let server = ScriptedServer::start(vec![
            (503, "{}".into()),
            (429, "{}".into()),
            (200, r#"{"ok":true}"#.into()),
        ]);
        let client = JsonClient::new(fast(&server.url)).unwrap();
        let value = client.post(&serde_json::json!({"x": 1})).unwrap();
        assert_eq!(value["ok"], true);
        assert_eq!(server.finish().len(), 3);
    }

    #[test]
    fn gives_up_after_max_attempts() {
        let server = ScriptedServer::start(vec![(500, "{}".into()); 3]);
        let client = JsonClient::new(fast(&server.url)).unwrap();
        let err = client.post(&serde_json::json!({})).unwrap_err();
        assert!(matches!(err, HttpError::Exhausted { attempts: 3, .. }), "{err}");
        server.finish();
    }

    #[test]
    fn client_errors_are_not_retried() {
        let server = ScriptedServer::start(vec![(401, r#"{"error":"bad key"}"#.into())]);
        let client = JsonClient::new(fast(&server.url)).unwrap();
        let err = client.post(&serde_json::json!({})).unwrap_err();
        assert!(matches!(err, HttpError::Rejected { status: 401, .. }));
        assert_eq!(server.finish().len(), 1);
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        assert_eq!(p.backoff(1), Duration::from_secs(1));
        assert_eq!(p.backoff(2), Duration::from_secs(2));
        assert_eq!(p.backoff(3), Duration::from_secs(4));
    }
}
