//! Run configuration file.
//!
//! The file holds either one configuration object or an array of them, one
//! per API to analyze. LLM credentials are never stored inline: `llm_key_env`
//! names the environment variable that holds the key.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::HttpMethod;
use crate::mutation::SelectionMode;

pub const DEFAULT_RATE_LIMIT_MS: u64 = 1000;
pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_MAX_ITERATIONS: u32 = 10;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not valid JSON: {0}")]
    Parse(#[source] serde_json::Error),
    #[error("invalid config field `{field}`: {message}")]
    Validation { field: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LlmBackendKind {
    /// Any chat-completions compatible HTTPS endpoint.
    #[default]
    #[serde(rename = "chat-completions")]
    ChatCompletions,
    /// Canned completions from a JSON fixture file.
    #[serde(rename = "scripted")]
    Scripted,
}

/// Per-million-token prices used for cost accounting.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PriceTable {
    pub input_per_million: f64,
    pub output_per_million: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub api_name: String,
    pub server_url: Option<String>,
    pub api_key_param: Option<(String, String)>,
    pub rate_limit_ms: u64,
    pub temperature: f64,
    pub descriptions: bool,
    pub manual_seeds: Vec<String>,
    pub llm_backend: LlmBackendKind,
    pub llm_key_env: Option<String>,
    pub llm_endpoint: Option<String>,
    pub llm_model: Option<String>,
    pub llm_cache: bool,
    pub max_iterations: u32,
    pub seed_selection: SelectionMode,
    pub methods: Vec<HttpMethod>,
    pub prices: PriceTable,
}

impl RunConfig {
    /// A validated config with defaults for everything but the name.
    pub fn new(api_name: impl Into<String>) -> Self {
        RunConfig {
            api_name: api_name.into(),
            server_url: None,
            api_key_param: None,
            rate_limit_ms: DEFAULT_RATE_LIMIT_MS,
            temperature: DEFAULT_TEMPERATURE,
            descriptions: false,
            manual_seeds: Vec::new(),
            llm_backend: LlmBackendKind::default(),
            llm_key_env: None,
            llm_endpoint: None,
            llm_model: None,
            llm_cache: true,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            seed_selection: SelectionMode::RandomRoute,
            methods: vec![HttpMethod::Get],
            prices: PriceTable::default(),
        }
    }

    pub fn with_server_url(mut self, url: impl Into<String>) -> Self {
        self.server_url = Some(url.into());
        self
    }

    pub fn method_enabled(&self, method: HttpMethod) -> bool {
        self.methods.contains(&method)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    api_name: String,
    #[serde(default)]
    server_url: Option<String>,
    #[serde(default)]
    api_key_name: Option<String>,
    #[serde(default)]
    api_key_value: Option<String>,
    #[serde(default)]
    rate_limit_ms: Option<u64>,
    #[serde(default)]
    temperature: Option<f64>,
    #[serde(default)]
    descriptions: Option<bool>,
    #[serde(default)]
    seeds: Option<Vec<String>>,
    #[serde(default)]
    llm_backend: Option<LlmBackendKind>,
    #[serde(default)]
    llm_key_env: Option<String>,
    #[serde(default)]
    llm_endpoint: Option<String>,
    #[serde(default)]
    llm_model: Option<String>,
    #[serde(default)]
    llm_cache: Option<bool>,
    #[serde(default)]
    max_iterations: Option<u32>,
    #[serde(default)]
    seed_selection: Option<SelectionMode>,
    #[serde(default)]
    methods: Option<Vec<HttpMethod>>,
    #[serde(default)]
    price_input_per_million: Option<f64>,
    #[serde(default)]
    price_output_per_million: Option<f64>,
}

fn field(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

fn invalid(prefix: &str, name: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field(prefix, name),
        message: message.into(),
    }
}

fn is_http_url(s: &str) -> bool {
    match url::Url::parse(s) {
        Ok(u) => matches!(u.scheme(), "http" | "https") && u.has_host(),
        Err(_) => false,
    }
}

fn validate(raw: RawConfig, prefix: &str) -> Result<RunConfig, ConfigError> {
    if raw.api_name.trim().is_empty() {
        return Err(invalid(prefix, "api_name", "must be non-empty"));
    }
    let mut config = RunConfig::new(raw.api_name.trim());

    if let Some(url) = raw.server_url {
        if !is_http_url(&url) {
            return Err(invalid(prefix, "server_url", "must be an absolute http(s) URL"));
        }
        config.server_url = Some(url);
    }

    config.api_key_param = match (raw.api_key_name, raw.api_key_value) {
        (Some(name), Some(value)) if !name.is_empty() => Some((name, value)),
        (Some(_), Some(_)) => return Err(invalid(prefix, "api_key_name", "must be non-empty")),
        (None, None) => None,
        (Some(_), None) => {
            return Err(invalid(prefix, "api_key_value", "required with api_key_name"))
        }
        (None, Some(_)) => {
            return Err(invalid(prefix, "api_key_name", "required with api_key_value"))
        }
    };

    if let Some(ms) = raw.rate_limit_ms {
        config.rate_limit_ms = ms;
    }
    if let Some(t) = raw.temperature {
        if !(0.0..=2.0).contains(&t) {
            return Err(invalid(prefix, "temperature", "must be within [0, 2]"));
        }
        config.temperature = t;
    }
    if let Some(d) = raw.descriptions {
        config.descriptions = d;
    }
    if let Some(seeds) = raw.seeds {
        config.manual_seeds = seeds;
    }
    if let Some(b) = raw.llm_backend {
        config.llm_backend = b;
    }
    config.llm_key_env = raw.llm_key_env;
    if let Some(endpoint) = raw.llm_endpoint {
        if !is_http_url(&endpoint) {
            return Err(invalid(prefix, "llm_endpoint", "must be an absolute http(s) URL"));
        }
        config.llm_endpoint = Some(endpoint);
    }
    config.llm_model = raw.llm_model;
    if let Some(cache) = raw.llm_cache {
        config.llm_cache = cache;
    }
    if let Some(n) = raw.max_iterations {
        if n == 0 {
            return Err(invalid(prefix, "max_iterations", "must be positive"));
        }
        config.max_iterations = n;
    }
    if let Some(mode) = raw.seed_selection {
        config.seed_selection = mode;
    }
    if let Some(methods) = raw.methods {
        if methods.is_empty() {
            return Err(invalid(prefix, "methods", "must list at least one method"));
        }
        config.methods = methods;
    }
    for (name, price) in [
        ("price_input_per_million", raw.price_input_per_million),
        ("price_output_per_million", raw.price_output_per_million),
    ] {
        if let Some(p) = price {
            if !p.is_finite() || p < 0.0 {
                return Err(invalid(prefix, name, "must be a non-negative number"));
            }
        }
    }
    config.prices = PriceTable {
        input_per_million: raw.price_input_per_million.unwrap_or(0.0),
        output_per_million: raw.price_output_per_million.unwrap_or(0.0),
    };
    Ok(config)
}

fn from_value(value: serde_json::Value, prefix: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_value(value).map_err(|e| ConfigError::Validation {
        field: if prefix.is_empty() { "<root>".to_string() } else { prefix.to_string() },
        message: e.to_string(),
    })?;
    validate(raw, prefix)
}

/// Parses config bytes holding one object or an array of objects.
pub fn parse_config(text: &str) -> Result<Vec<RunConfig>, ConfigError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(ConfigError::Parse)?;
    match value {
        serde_json::Value::Array(items) => items
            .into_iter()
            .enumerate()
            .map(|(i, item)| from_value(item, &format!("[{i}]")))
            .collect(),
        other => Ok(vec![from_value(other, "")?]),
    }
}

pub fn load_config(path: &Path) -> Result<Vec<RunConfig>, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}
