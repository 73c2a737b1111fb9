//! Language-model access: prompt templates, backends, completion parsing and
//! token accounting.

mod backend;
mod parse;
mod prompt;

use std::collections::HashMap;

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use backend::{
    estimate_tokens, ChatCompletionsBackend, Completion, FixtureEntry, LlmBackend, LlmFixture,
    ScriptedBackend, TokenUsage,
};
pub use parse::{extract_json_object, parse_value_list};
pub use prompt::{build_prompt, Prompt, PromptContext, PromptKind};

use crate::model::HttpMethod;

/// Attempts allowed per base-data URL field.
pub const BASE_DATA_ATTEMPTS: usize = 3;
/// Descriptions are cut to this many characters.
pub const DESCRIPTION_MAX_CHARS: usize = 300;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("{kind} prompt needs context field `{field}`")]
    MissingContext {
        kind: PromptKind,
        field: &'static str,
    },
    #[error("language model backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("invalid LLM fixture: {0}")]
    Fixture(String),
}

/// Checks whether a URL answers at all.
pub trait UrlProber {
    fn probe(&mut self, url: &str) -> bool;
}

impl<F: FnMut(&str) -> bool> UrlProber for F {
    fn probe(&mut self, url: &str) -> bool {
        self(url)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseData {
    pub description: Option<String>,
    pub documentation_url: Option<String>,
    pub server_url: Option<String>,
}

/// Backend plus the per-run bookkeeping: temperature, cache and token usage.
pub struct LlmGateway {
    backend: Box<dyn LlmBackend>,
    temperature: f64,
    cache: Option<HashMap<[u8; 32], Completion>>,
    usage: TokenUsage,
    backend_calls: u64,
}

impl LlmGateway {
    pub fn new(backend: Box<dyn LlmBackend>, temperature: f64) -> Self {
        LlmGateway {
            backend,
            temperature,
            cache: Some(HashMap::new()),
            usage: TokenUsage::default(),
            backend_calls: 0,
        }
    }

    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }

    pub fn backend_identifier(&self) -> &str {
        self.backend.identifier()
    }

    pub fn usage(&self) -> TokenUsage {
        self.usage
    }

    pub fn backend_calls(&self) -> u64 {
        self.backend_calls
    }

    fn call_backend(&mut self, prompt: &Prompt) -> Result<Completion, LlmError> {
        let completion = self.backend.complete(prompt, self.temperature)?;
        self.backend_calls += 1;
        self.usage += completion.usage;
        Ok(completion)
    }

    /// Sends a prompt, answering repeats from the cache when enabled.
    pub fn complete(&mut self, prompt: &Prompt) -> Result<Completion, LlmError> {
        // base-data retries must reach the model every time
        let cacheable = prompt.kind != PromptKind::BaseData;
        let key: [u8; 32] = Sha256::digest(prompt.text.as_bytes()).into();
        if cacheable {
            if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
                return Ok(hit.clone());
            }
        }
        let completion = self.call_backend(prompt)?;
        if cacheable {
            if let Some(cache) = self.cache.as_mut() {
                cache.insert(key, completion.clone());
            }
        }
        Ok(completion)
    }

    pub fn ask_values(&mut self, kind: PromptKind, ctx: &PromptContext) -> Result<Vec<String>, LlmError> {
        let prompt = build_prompt(kind, ctx)?;
        Ok(parse_value_list(&self.complete(&prompt)?.text))
    }

    fn ask_object(
        &mut self,
        kind: PromptKind,
        ctx: &PromptContext,
    ) -> Result<serde_json::Map<String, serde_json::Value>, LlmError> {
        let prompt = build_prompt(kind, ctx)?;
        Ok(extract_json_object(&self.complete(&prompt)?.text).unwrap_or_default())
    }

    /// Asks for description, documentation URL and server URL, re-prompting
    /// for each URL the prober rejects, up to three attempts per field.
    pub fn fetch_base_data(
        &mut self,
        api_name: &str,
        prober: &mut dyn UrlProber,
    ) -> Result<BaseData, LlmError> {
        let ctx = PromptContext::new(api_name);
        let first = self.ask_object(PromptKind::BaseData, &ctx)?;
        let text_field = |obj: &serde_json::Map<String, serde_json::Value>, name: &str| {
            obj.get(name)
                .and_then(|v| v.as_str())
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
        };

        let mut data = BaseData {
            description: text_field(&first, "description"),
            ..Default::default()
        };
        for field in ["documentation_url", "server_url"] {
            let mut candidate = text_field(&first, field);
            let mut accepted = None;
            for attempt in 1..=BASE_DATA_ATTEMPTS {
                if let Some(url) = candidate.as_deref() {
                    if is_absolute_http(url) && prober.probe(url) {
                        accepted = Some(url.to_string());
                        break;
                    }
                }
                if attempt == BASE_DATA_ATTEMPTS {
                    break;
                }
                let previous = candidate.clone().unwrap_or_else(|| "none".to_string());
                let retry = ctx.clone().retry(field, previous);
                candidate = text_field(&self.ask_object(PromptKind::BaseData, &retry)?, field);
            }
            match field {
                "documentation_url" => data.documentation_url = accepted,
                _ => data.server_url = accepted,
            }
        }
        Ok(data)
    }

    /// Example JSON payload for a write request; `{}` when none can be parsed.
    pub fn fetch_payload_example(
        &mut self,
        api_name: &str,
        route: &str,
        method: HttpMethod,
    ) -> serde_json::Value {
        if !method.carries_body() {
            return serde_json::Value::Object(Default::default());
        }
        let ctx = PromptContext::new(api_name).route(route).method(method);
        match self.ask_object(PromptKind::PayloadExample, &ctx) {
            Ok(obj) => serde_json::Value::Object(obj),
            Err(e) => {
                warn!("payload example for {method} {route} unavailable: {e}");
                serde_json::Value::Object(Default::default())
            }
        }
    }

    /// A one-sentence description, or `None` for an empty completion.
    pub fn describe(&mut self, ctx: &PromptContext) -> Result<Option<String>, LlmError> {
        let prompt = build_prompt(PromptKind::Description, ctx)?;
        let text = self.complete(&prompt)?.text;
        let text = text.trim().trim_matches('"').trim();
        if text.is_empty() {
            return Ok(None);
        }
        Ok(Some(text.chars().take(DESCRIPTION_MAX_CHARS).collect()))
    }
}

fn is_absolute_http(s: &str) -> bool {
    url::Url::parse(s)
        .map(|u| matches!(u.scheme(), "http" | "https") && u.has_host())
        .unwrap_or(false)
}
