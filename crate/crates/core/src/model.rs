//! Structured HTTP requests, their canonical identity, and path generalization.
//!
//! A request is split the same way a reader splits a URL by eye: the base API
//! URL, the route (a list of path segments) and the query (an ordered list of
//! `name=value` pairs). Percent-encoding is carried verbatim in every part so
//! that a value proposed by the model reaches the server byte-for-byte.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Literal used for generalized numeric path segments.
pub const ID_PLACEHOLDER: &str = "{id}";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("malformed request `{raw}`: {reason}")]
    MalformedRequest { raw: String, reason: String },
    #[error("unsupported HTTP method `{0}`")]
    UnsupportedMethod(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HttpMethod {
    Get,
    Post,
    Put,
    Patch,
    Delete,
}

impl HttpMethod {
    pub const ALL: [HttpMethod; 5] = [
        HttpMethod::Get,
        HttpMethod::Post,
        HttpMethod::Put,
        HttpMethod::Patch,
        HttpMethod::Delete,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HttpMethod::Get => "GET",
            HttpMethod::Post => "POST",
            HttpMethod::Put => "PUT",
            HttpMethod::Patch => "PATCH",
            HttpMethod::Delete => "DELETE",
        }
    }

    /// Lowercase name used as an OpenAPI operation key.
    pub fn openapi_key(self) -> &'static str {
        match self {
            HttpMethod::Get => "get",
            HttpMethod::Post => "post",
            HttpMethod::Put => "put",
            HttpMethod::Patch => "patch",
            HttpMethod::Delete => "delete",
        }
    }

    pub fn carries_body(self) -> bool {
        matches!(self, HttpMethod::Post | HttpMethod::Put | HttpMethod::Patch)
    }
}

impl fmt::Display for HttpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HttpMethod {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HttpMethod::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ModelError::UnsupportedMethod(s.to_string()))
    }
}

/// The four placeholder tokens a seed can be masked with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MaskToken {
    Route,
    ParamPair,
    ParamName,
    ParamValue,
}

impl MaskToken {
    pub const ALL: [MaskToken; 4] = [
        MaskToken::Route,
        MaskToken::ParamPair,
        MaskToken::ParamName,
        MaskToken::ParamValue,
    ];

    pub fn literal(self) -> &'static str {
        match self {
            MaskToken::Route => "<route>",
            MaskToken::ParamPair => "<parameter=value>",
            MaskToken::ParamName => "<parameter>",
            MaskToken::ParamValue => "<value>",
        }
    }

    /// True if `text` contains any of the four token literals.
    pub fn any_in(text: &str) -> bool {
        MaskToken::ALL.iter().any(|t| text.contains(t.literal()))
    }
}

impl fmt::Display for MaskToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.literal())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiRequest {
    pub method: HttpMethod,
    pub base_url: String,
    pub path_segments: Vec<String>,
    pub query_params: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<serde_json::Value>,
}

impl ApiRequest {
    /// A bare GET on `base_url` with an empty path.
    pub fn get(base_url: &str) -> Self {
        ApiRequest {
            method: HttpMethod::Get,
            base_url: normalize_base_url(base_url),
            path_segments: Vec::new(),
            query_params: Vec::new(),
            body: None,
        }
    }

    pub fn with_segments<I, S>(mut self, segments: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.path_segments = segments.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_query<I, K, V>(mut self, pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        self.query_params = pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect();
        self
    }

    /// Changes the method; a body is dropped for methods that carry none.
    pub fn with_method(mut self, method: HttpMethod) -> Self {
        self.method = method;
        if !method.carries_body() {
            self.body = None;
        }
        self
    }

    pub fn with_body(mut self, body: serde_json::Value) -> Self {
        if self.method.carries_body() {
            self.body = Some(body);
        }
        self
    }

    /// Path and query relative to the base URL, e.g. `/users/25?name=john`.
    pub fn render_relative(&self) -> String {
        let mut out = String::new();
        for segment in &self.path_segments {
            out.push('/');
            out.push_str(segment);
        }
        if out.is_empty() {
            out.push('/');
        }
        push_query(&mut out, &self.query_params);
        out
    }

    /// Generalized route key, e.g. `/users/{id}`.
    pub fn route_key(&self) -> String {
        route_key(&generalize_id_segments(&self.path_segments))
    }

    pub fn canonical_key(&self) -> CanonicalKey {
        canonical_key(self)
    }

    pub fn render(&self) -> String {
        render(self)
    }

    /// Checks the structural invariants of the type.
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason: &str| ModelError::MalformedRequest {
            raw: render(self),
            reason: reason.to_string(),
        };
        if self
            .path_segments
            .iter()
            .any(|s| s.is_empty() || s.contains('/') || s.contains('?'))
        {
            return Err(fail("path segments must be non-empty and free of `/` and `?`"));
        }
        if self.query_params.iter().any(|(name, _)| name.is_empty()) {
            return Err(fail("query parameter names must be non-empty"));
        }
        if self.body.is_some() && !self.method.carries_body() {
            return Err(fail("GET and DELETE requests carry no body"));
        }
        Ok(())
    }
}

fn push_query(out: &mut String, pairs: &[(String, String)]) {
    for (i, (name, value)) in pairs.iter().enumerate() {
        out.push(if i == 0 { '?' } else { '&' });
        out.push_str(name);
        out.push('=');
        out.push_str(value);
    }
}

/// Strips trailing slashes so that joining with `/segment` is unambiguous.
pub fn normalize_base_url(base_url: &str) -> String {
    base_url.trim().trim_end_matches('/').to_string()
}

/// Splits `raw` (relative `/path?query` or absolute, starting with `base_url`)
/// into a GET request.
pub fn parse_request(raw: &str, base_url: &str) -> Result<ApiRequest, ModelError> {
    let base = normalize_base_url(base_url);
    let malformed = |reason: &str| ModelError::MalformedRequest {
        raw: raw.to_string(),
        reason: reason.to_string(),
    };

    let rest = if let Some(rest) = raw.strip_prefix(base.as_str()).filter(|_| !base.is_empty()) {
        if !(rest.is_empty() || rest.starts_with('/') || rest.starts_with('?')) {
            return Err(malformed("base URL is not followed by `/` or `?`"));
        }
        rest
    } else if raw.starts_with('/') {
        raw
    } else {
        return Err(malformed("request must start with `/` or the base URL"));
    };

    let (path, query) = match rest.split_once('?') {
        Some((path, query)) => (path, Some(query)),
        None => (rest, None),
    };

    let path_segments = path
        .split('/')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();

    let mut query_params = Vec::new();
    if let Some(query) = query.filter(|q| !q.is_empty()) {
        for item in query.split('&') {
            let (name, value) = item
                .split_once('=')
                .ok_or_else(|| malformed("query item without `=`"))?;
            if name.is_empty() {
                return Err(malformed("query item with an empty name"));
            }
            query_params.push((name.to_string(), value.to_string()));
        }
    }

    Ok(ApiRequest {
        method: HttpMethod::Get,
        base_url: base,
        path_segments,
        query_params,
        body: None,
    })
}

pub fn render(req: &ApiRequest) -> String {
    let mut out = req.base_url.clone();
    for segment in &req.path_segments {
        out.push('/');
        out.push_str(segment);
    }
    push_query(&mut out, &req.query_params);
    out
}

/// Dedup identity of a request: method, normalized path, sorted query multiset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanonicalKey(String);

impl CanonicalKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lowercases the scheme and host; the base path stays verbatim.
fn normalize_origin(base_url: &str) -> String {
    let (scheme, rest) = match base_url.split_once("://") {
        Some(parts) => parts,
        None => return base_url.to_string(),
    };
    let (host, path) = match rest.find('/') {
        Some(i) => rest.split_at(i),
        None => (rest, ""),
    };
    format!(
        "{}://{}{}",
        scheme.to_ascii_lowercase(),
        host.to_ascii_lowercase(),
        path
    )
}

pub fn canonical_key(req: &ApiRequest) -> CanonicalKey {
    let mut pairs: Vec<&(String, String)> = req.query_params.iter().collect();
    pairs.sort();
    let mut key = format!("{} {}", req.method, normalize_origin(&req.base_url));
    for segment in &req.path_segments {
        key.push('/');
        key.push_str(segment);
    }
    key.push('?');
    for (i, (name, value)) in pairs.into_iter().enumerate() {
        if i > 0 {
            key.push('&');
        }
        key.push_str(name);
        key.push('=');
        key.push_str(value);
    }
    CanonicalKey(key)
}

fn is_decimal_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Replaces every all-digit segment with `{id}`.
pub fn generalize_id_segments(path_segments: &[String]) -> Vec<String> {
    path_segments
        .iter()
        .map(|s| {
            if is_decimal_digits(s) {
                ID_PLACEHOLDER.to_string()
            } else {
                s.clone()
            }
        })
        .collect()
}

/// `["users", "{id}"]` -> `/users/{id}`; the empty path is `/`.
pub fn route_key(segments: &[String]) -> String {
    if segments.is_empty() {
        "/".to_string()
    } else {
        segments.iter().fold(String::new(), |mut acc, s| {
            acc.push('/');
            acc.push_str(s);
            acc
        })
    }
}

/// Observed type of a query parameter value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypeTag {
    Integer,
    Number,
    Boolean,
    Array,
    String,
}

impl TypeTag {
    /// Most specific type covering both observations.
    pub fn widen(self, other: TypeTag) -> TypeTag {
        use TypeTag::*;
        match (self, other) {
            (a, b) if a == b => a,
            (Integer, Number) | (Number, Integer) => Number,
            _ => String,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TypeTag::Integer => "integer",
            TypeTag::Number => "number",
            TypeTag::Boolean => "boolean",
            TypeTag::Array => "array",
            TypeTag::String => "string",
        }
    }
}

fn is_decimal_integer(s: &str) -> bool {
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    is_decimal_digits(digits)
}

fn is_decimal_float(s: &str) -> bool {
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], Some(&body[i + 1..])),
        None => (body, None),
    };
    let mantissa_ok = match mantissa.split_once('.') {
        Some((int, frac)) => {
            (!int.is_empty() || !frac.is_empty())
                && int.bytes().all(|b| b.is_ascii_digit())
                && frac.bytes().all(|b| b.is_ascii_digit())
        }
        None => is_decimal_digits(mantissa),
    };
    mantissa_ok && exponent.is_none_or(is_decimal_integer)
}

pub fn infer_value_type(value: &str) -> TypeTag {
    if is_decimal_integer(value) {
        TypeTag::Integer
    } else if is_decimal_float(value) {
        TypeTag::Number
    } else if value == "true" || value == "false" {
        TypeTag::Boolean
    } else if value.contains(',') && value.split(',').filter(|s| !s.trim().is_empty()).count() >= 2 {
        TypeTag::Array
    } else {
        TypeTag::String
    }
}
