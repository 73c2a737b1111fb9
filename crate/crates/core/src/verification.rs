//! Response validity oracle.
//!
//! A 2xx status alone does not make a request valid: short bodies that read
//! like error messages and HTML pages are soft errors.

use serde::{Deserialize, Serialize};

use crate::model::ApiRequest;
use crate::transport::{HttpSender, NetworkError};

/// Bodies shorter than this many characters are checked for error keywords.
pub const KEYWORD_BODY_LIMIT: usize = 200;
pub const ERROR_KEYWORDS: [&str; 4] = ["error", "not found", "invalid", "incorrect"];
/// Route and query sent to learn how the API reports invalid requests.
pub const INVALID_PROBE: &str = "/invalidRoute?invalidParam=invalidValue";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiResponse {
    pub status: u16,
    pub content_type: Option<String>,
    #[serde(with = "body_bytes")]
    pub body: Vec<u8>,
    pub elapsed_ms: u64,
    /// `Location` header, when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
}

mod body_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(body: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&String::from_utf8_lossy(body))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        Ok(String::deserialize(d)?.into_bytes())
    }
}

impl ApiResponse {
    pub fn new(status: u16, content_type: Option<&str>, body: impl Into<Vec<u8>>) -> Self {
        ApiResponse {
            status,
            content_type: content_type.map(str::to_string),
            body: body.into(),
            elapsed_ms: 0,
            location: None,
        }
    }

    pub fn json(status: u16, body: &str) -> Self {
        ApiResponse::new(status, Some("application/json"), body)
    }

    pub fn body_text(&self) -> Option<&str> {
        std::str::from_utf8(&self.body).ok()
    }

    /// Media type without parameters, lowercased.
    pub fn media_type(&self) -> Option<String> {
        self.content_type
            .as_deref()
            .map(|ct| ct.split(';').next().unwrap_or("").trim().to_ascii_lowercase())
            .filter(|ct| !ct.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VerdictClass {
    Valid,
    ClientError,
    ServerError,
    SoftError,
}

impl VerdictClass {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictClass::Valid => "Valid",
            VerdictClass::ClientError => "ClientError",
            VerdictClass::ServerError => "ServerError",
            VerdictClass::SoftError => "SoftError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Evidence {
    StatusRange,
    KeywordMatch,
    HtmlBody,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Verdict {
    pub class: VerdictClass,
    pub reason: Evidence,
}

impl Verdict {
    pub const fn new(class: VerdictClass, reason: Evidence) -> Self {
        Verdict { class, reason }
    }

    pub fn is_valid(&self) -> bool {
        self.class == VerdictClass::Valid
    }
}

pub fn is_html(resp: &ApiResponse) -> bool {
    if resp
        .content_type
        .as_deref()
        .is_some_and(|ct| ct.to_ascii_lowercase().contains("text/html"))
    {
        return true;
    }
    let Some(text) = resp.body_text() else {
        return false;
    };
    let head: String = text.trim_start().chars().take(14).collect::<String>().to_lowercase();
    head.starts_with("<!doctype html") || head.starts_with("<html")
}

/// Error keyword found in a short body, if any.
fn keyword_hit(resp: &ApiResponse) -> bool {
    let Some(text) = resp.body_text() else {
        return false;
    };
    if text.chars().count() >= KEYWORD_BODY_LIMIT {
        return false;
    }
    let lower = text.to_lowercase();
    ERROR_KEYWORDS.iter().any(|k| lower.contains(k))
}

pub fn classify_response(resp: &ApiResponse) -> Verdict {
    match resp.status {
        500..=599 => Verdict::new(VerdictClass::ServerError, Evidence::StatusRange),
        400..=499 => Verdict::new(VerdictClass::ClientError, Evidence::StatusRange),
        200..=299 => {
            if is_html(resp) {
                Verdict::new(VerdictClass::SoftError, Evidence::HtmlBody)
            } else if keyword_hit(resp) {
                Verdict::new(VerdictClass::SoftError, Evidence::KeywordMatch)
            } else {
                Verdict::new(VerdictClass::Valid, Evidence::None)
            }
        }
        _ => Verdict::new(VerdictClass::ClientError, Evidence::StatusRange),
    }
}

/// The response an API gives to a deliberately invalid request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorSchemaSample {
    pub status: u16,
    pub body: String,
    pub content_type: Option<String>,
}

impl From<&ApiResponse> for ErrorSchemaSample {
    fn from(resp: &ApiResponse) -> Self {
        ErrorSchemaSample {
            status: resp.status,
            body: String::from_utf8_lossy(&resp.body).into_owned(),
            content_type: resp.content_type.clone(),
        }
    }
}

/// The probe request used by [`probe_default_error_schema`].
pub fn invalid_probe_request(base_url: &str) -> ApiRequest {
    crate::model::parse_request(INVALID_PROBE, base_url).expect("probe literal parses")
}

pub fn probe_default_error_schema(
    base_url: &str,
    sender: &mut dyn HttpSender,
) -> Result<ErrorSchemaSample, NetworkError> {
    let resp = sender.send(&invalid_probe_request(base_url))?;
    Ok(ErrorSchemaSample::from(&resp))
}
