//! Sending requests over HTTP.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::model::{ApiRequest, HttpMethod};
use crate::verification::ApiResponse;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetworkError {
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Other(String),
}

pub trait HttpSender {
    fn send(&mut self, req: &ApiRequest) -> Result<ApiResponse, NetworkError>;
}

impl<T: HttpSender + ?Sized> HttpSender for Box<T> {
    fn send(&mut self, req: &ApiRequest) -> Result<ApiResponse, NetworkError> {
        (**self).send(req)
    }
}

/// Percent-encodes characters that are not allowed in a URI. Existing `%XX`
/// escapes and reserved characters are left as they are.
pub fn encode_uri(raw: &str) -> String {
    let bytes = raw.as_bytes();
    let mut out = String::with_capacity(raw.len());
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let keep = b.is_ascii_alphanumeric() || b"-._~:/?#[]@!$&'()*+,;=".contains(&b);
        if keep {
            out.push(b as char);
        } else if b == b'%'
            && bytes.get(i + 1).is_some_and(u8::is_ascii_hexdigit)
            && bytes.get(i + 2).is_some_and(u8::is_ascii_hexdigit)
        {
            out.push('%');
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
        i += 1;
    }
    out
}

/// Blocking sender over `ureq`. Redirects are not followed and every status
/// code is returned as a response.
pub struct UreqSender {
    agent: ureq::Agent,
}

impl UreqSender {
    pub fn new() -> Self {
        Self::with_timeout(DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .max_redirects(0)
            .build()
            .new_agent();
        UreqSender { agent }
    }
}

impl Default for UreqSender {
    fn default() -> Self {
        Self::new()
    }
}

fn map_error(e: ureq::Error) -> NetworkError {
    match e {
        ureq::Error::Timeout(_) => NetworkError::Timeout,
        ureq::Error::Io(io) => NetworkError::Connect(io.to_string()),
        ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
            NetworkError::Connect(e.to_string())
        }
        other => NetworkError::Other(other.to_string()),
    }
}

impl HttpSender for UreqSender {
    fn send(&mut self, req: &ApiRequest) -> Result<ApiResponse, NetworkError> {
        let url = encode_uri(&req.render());
        let started = Instant::now();
        let result = match req.method {
            HttpMethod::Get => self.agent.get(&url).call(),
            HttpMethod::Delete => self.agent.delete(&url).call(),
            m => {
                let body = req
                    .body
                    .clone()
                    .unwrap_or_else(|| serde_json::Value::Object(Default::default()))
                    .to_string();
                let builder = match m {
                    HttpMethod::Post => self.agent.post(&url),
                    HttpMethod::Put => self.agent.put(&url),
                    _ => self.agent.patch(&url),
                };
                builder
                    .header("Content-Type", "application/json")
                    .send(body.as_bytes())
            }
        };
        let mut resp = result.map_err(map_error)?;
        let header = |name: &str| {
            resp.headers()
                .get(name)
                .and_then(|v| v.to_str().ok())
                .map(str::to_string)
        };
        let content_type = header("content-type");
        let location = header("location");
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(16 * 1024 * 1024)
            .read_to_vec()
            .map_err(map_error)?;
        Ok(ApiResponse {
            status,
            content_type,
            body,
            elapsed_ms: started.elapsed().as_millis() as u64,
            location,
        })
    }
}
