//! Remote completion endpoint over HTTP(S) with bearer-token auth.
//!
//! Request body: `{"model", "prompt", "max_tokens", "temperature", "stop", "seed"}`.
//! The response may carry the text as `completion`, `text`, or
//! `choices[0].text`. 429 and 5xx statuses and network failures are retryable.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::backend::{BackendError, Capabilities, CompletionRequest, GenerationBackend};

pub const DEFAULT_TOKEN_ENV: &str = "NLE_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub token_env: String,
    pub timeout_secs: u64,
    /// Minimum spacing between request starts.
    pub min_interval_ms: u64,
    pub max_in_flight: usize,
    pub max_context: usize,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        HttpBackendConfig {
            endpoint: "https://api.openai.com/v1/completions".into(),
            model: "davinci".into(),
            token_env: DEFAULT_TOKEN_ENV.into(),
            timeout_secs: 60,
            min_interval_ms: 0,
            max_in_flight: 4,
            max_context: 2048,
        }
    }
}

/// Request-rate ceiling plus a bounded in-flight window.
#[derive(Debug)]
pub struct Throttle {
    min_interval: Duration,
    next_start: Mutex<Instant>,
    max_in_flight: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    throttle: &'a Throttle,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.throttle.in_flight.lock().expect("throttle lock");
        *n -= 1;
        self.throttle.freed.notify_one();
    }
}

impl Throttle {
    pub fn new(min_interval: Duration, max_in_flight: usize) -> Self {
        Throttle {
            min_interval,
            next_start: Mutex::new(Instant::now()),
            max_in_flight: max_in_flight.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    /// Blocks until a slot is free and the rate allows another request.
    pub fn acquire(&self) -> Permit<'_> {
        {
            let mut n = self.in_flight.lock().expect("throttle lock");
            while *n >= self.max_in_flight {
                n = self.freed.wait(n).expect("throttle lock");
            }
            *n += 1;
        }
        let wait = {
            let mut next = self.next_start.lock().expect("throttle lock");
            let now = Instant::now();
            let start = (*next).max(now);
            *next = start + self.min_interval;
            start - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
        Permit { throttle: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.in_flight.lock().expect("throttle lock")
    }
}

pub struct HttpBackend {
    id: String,
    config: HttpBackendConfig,
    token: String,
    agent: ureq::Agent,
    throttle: Throttle,
}

impl HttpBackend {
    /// Reads the token from `config.token_env`.
    pub fn from_env(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let token = std::env::var(&config.token_env).map_err(|_| {
            BackendError::Rejected(format!("environment variable {} is not set", config.token_env))
        })?;
        Ok(HttpBackend::with_token(config, token))
    }

    pub fn with_token(config: HttpBackendConfig, token: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let throttle = Throttle::new(
            Duration::from_millis(config.min_interval_ms),
            config.max_in_flight,
        );
        HttpBackend {
            id: format!("http:{}", config.model),
            config,
            token: token.into(),
            agent,
            throttle,
        }
    }
}

#[derive(Serialize)]
struct Body<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: usize,
    temperature: f64,
    stop: &'a [String],
    seed: u64,
}

fn extract_text(v: &serde_json::Value) -> Option<String> {
    v.get("completion")
        .or_else(|| v.get("text"))
        .or_else(|| v.pointer("/choices/0/text"))
        .and_then(|t| t.as_str())
        .map(String::from)
}

impl GenerationBackend for HttpBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            fine_tunable: false,
            max_context: self.config.max_context,
        }
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let _permit = self.throttle.acquire();
        let body = Body {
            model: &self.config.model,
            prompt: &request.prompt,
            max_tokens: request.max_tokens,
            temperature: request.temperature,
            stop: &request.stop,
            seed: request.seed,
        };
        let payload = serde_json::to_vec(&body).expect("request body serializes");
        let mut resp = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.token))
            .header("Content-Type", "application/json")
            .send(&payload[..])
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(BackendError::Transport(format!("HTTP {status}: {text}")));
        }
        if status >= 400 {
            return Err(BackendError::Rejected(format!("HTTP {status}: {text}")));
        }
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::Rejected(format!("malformed response: {e}")))?;
        extract_text(&value).ok_or_else(|| BackendError::Rejected("response has no completion text".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::Arc;

    /// Serves canned `(status, body)` responses in order and captures requests.
    fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut head = String::new();
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line.to_ascii_lowercase().starts_with("content-length:") {
                        len = line[15..].trim().parse().unwrap();
                    }
                    head.push_str(&line);
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                seen.push(format!("{head}{}", String::from_utf8(buf).unwrap()));
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            seen
        });
        (format!("http://{addr}/v1/completions"), handle)
    }

    fn req() -> CompletionRequest {
        CompletionRequest {
            prompt: "p question: h maybe why? ###".into(),
            max_tokens: 20,
            temperature: 0.0,
            stop: vec!["###".into()],
            seed: 4,
        }
    }

    #[test]
    fn sends_bearer_and_reads_choices() {
        let (url, handle) = serve(vec![(200, r#"{"choices":[{"text":" because ###"}]}"#.into())]);
        let backend = HttpBackend::with_token(
            HttpBackendConfig {
                endpoint: url,
                ..Default::default()
            },
            "sekrit",
        );
        assert_eq!(backend.complete(&req()).unwrap(), " because ###");
        let seen = handle.join().unwrap();
        assert!(seen[0].contains("Bearer sekrit"), "{}", seen[0]);
        assert!(seen[0].contains("\"max_tokens\":20"));
        assert!(seen[0].contains("\"stop\":[\"###\"]"));
    }

    #[test]
    fn status_classification() {
        let (url, handle) = serve(vec![
            (503, "{}".into()),
            (400, "{}".into()),
            (200, r#"{"completion":"ok"}"#.into()),
        ]);
        let backend = HttpBackend::with_token(
            HttpBackendConfig {
                endpoint: url,
                ..Default::default()
            },
            "t",
        );
        assert!(backend.complete(&req()).unwrap_err().is_retryable());
        assert!(!backend.complete(&req()).unwrap_err().is_retryable());
        assert_eq!(backend.complete(&req()).unwrap(), "ok");
        handle.join().unwrap();
    }

    #[test]
    fn missing_token_env_is_reported() {
        let err = HttpBackend::from_env(HttpBackendConfig {
            token_env: "NLE_TEST_TOKEN_THAT_IS_NOT_SET".into(),
            ..Default::default()
        })
        .err()
        .unwrap();
        assert!(err.to_string().contains("NLE_TEST_TOKEN_THAT_IS_NOT_SET"));
    }

    #[test]
    fn throttle_bounds_in_flight() {
        let throttle = Arc::new(Throttle::new(Duration::ZERO, 2));
        let peak = Arc::new(Mutex::new(0usize));
        std::thread::scope(|s| {
            for _ in 0..8 {
                let throttle = throttle.clone();
                let peak = peak.clone();
                s.spawn(move || {
                    let _p = throttle.acquire();
                    let now = throttle.in_flight();
                    let mut pk = peak.lock().unwrap();
                    *pk = (*pk).max(now);
                    drop(pk);
                    std::thread::sleep(Duration::from_millis(5));
                });
            }
        });
        assert!(*peak.lock().unwrap() <= 2);
        assert_eq!(throttle.in_flight(), 0);
    }

    #[test]
    fn throttle_spaces_request_starts() {
        let throttle = Throttle::new(Duration::from_millis(20), 4);
        let t0 = Instant::now();
        for _ in 0..3 {
            drop(throttle.acquire());
        }
        assert!(t0.elapsed() >= Duration::from_millis(40));
    }
}
