use std::collections::BTreeMap;
use std::fs;
use std::ops::AddAssign;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::prompt::Prompt;
use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        TokenUsage {
            input_tokens,
            output_tokens,
        }
    }

    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        self.input_tokens += rhs.input_tokens;
        self.output_tokens += rhs.output_tokens;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub usage: TokenUsage,
}

/// A language model that turns prompt text into a completion.
pub trait LlmBackend: Send {
    fn identifier(&self) -> &str;

    fn complete(&mut self, prompt: &Prompt, temperature: f64) -> Result<Completion, LlmError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for Box<B> {
    fn identifier(&self) -> &str {
        (**self).identifier()
    }

    fn complete(&mut self, prompt: &Prompt, temperature: f64) -> Result<Completion, LlmError> {
        (**self).complete(prompt, temperature)
    }
}

/// Rough token estimate for text without a tokenizer: one per four bytes.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_tokens: Option<u64>,
}

impl FixtureEntry {
    pub fn text(text: impl Into<String>) -> Self {
        FixtureEntry {
            text: text.into(),
            input_tokens: None,
            output_tokens: None,
        }
    }
}

/// Canned completions keyed by prompt digest.
///
/// Lookup tries the full digest first, then drops trailing `|field` parts one
/// at a time, so `MASK_FILL|<route>` answers every route-token fill that has
/// no more specific entry. A miss yields an empty completion.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmFixture {
    pub completions: BTreeMap<String, FixtureEntry>,
}

impl LlmFixture {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, digest: impl Into<String>, entry: FixtureEntry) {
        self.completions.insert(digest.into(), entry);
    }

    pub fn lookup(&self, digest: &str) -> Option<&FixtureEntry> {
        let mut key = digest;
        loop {
            if let Some(entry) = self.completions.get(key) {
                return Some(entry);
            }
            key = &key[..key.rfind('|')?];
        }
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path)
            .map_err(|e| LlmError::Fixture(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| LlmError::Fixture(format!("{}: {e}", path.display())))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("fixture serializes")
    }
}

/// Deterministic backend answering from an [`LlmFixture`].
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    fixture: LlmFixture,
    calls: Vec<String>,
}

impl ScriptedBackend {
    pub fn new(fixture: LlmFixture) -> Self {
        ScriptedBackend {
            fixture,
            calls: Vec::new(),
        }
    }

    /// Digests of every prompt received, in order.
    pub fn calls(&self) -> &[String] {
        &self.calls
    }
}

impl LlmBackend for ScriptedBackend {
    fn identifier(&self) -> &str {
        "scripted"
    }

    fn complete(&mut self, prompt: &Prompt, _temperature: f64) -> Result<Completion, LlmError> {
        self.calls.push(prompt.digest.clone());
        let (text, input, output) = match self.fixture.lookup(&prompt.digest) {
            Some(entry) => (entry.text.clone(), entry.input_tokens, entry.output_tokens),
            None => (String::new(), None, None),
        };
        let usage = TokenUsage::new(
            input.unwrap_or_else(|| estimate_tokens(&prompt.text)),
            output.unwrap_or_else(|| estimate_tokens(&text)),
        );
        Ok(Completion { text, usage })
    }
}

/// Chat-completions style HTTPS endpoint (`messages` in, `choices` out).
pub struct ChatCompletionsBackend {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    identifier: String,
}

impl ChatCompletionsBackend {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build()
            .into();
        let model = model.into();
        ChatCompletionsBackend {
            endpoint: endpoint.into(),
            identifier: format!("chat-completions:{model}"),
            model,
            api_key,
            agent,
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl LlmBackend for ChatCompletionsBackend {
    fn identifier(&self) -> &str {
        &self.identifier
    }

    fn complete(&mut self, prompt: &Prompt, temperature: f64) -> Result<Completion, LlmError> {
        let payload = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": temperature,
        });
        let mut request = self
            .agent
            .post(&self.endpoint)
            .content_type("application/json");
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let unavailable = |e: &dyn std::fmt::Display| LlmError::BackendUnavailable(e.to_string());
        let mut response = request
            .send(payload.to_string())
            .map_err(|e| unavailable(&e))?;
        let status = response.status();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| unavailable(&e))?;
        if !status.is_success() {
            return Err(LlmError::BackendUnavailable(format!("HTTP {status}: {body}")));
        }
        let parsed: ChatResponse = serde_json::from_str(&body)
            .map_err(|e| LlmError::BackendUnavailable(format!("unexpected response: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        let usage = match parsed.usage {
            Some(u) => TokenUsage::new(u.prompt_tokens, u.completion_tokens),
            None => TokenUsage::new(estimate_tokens(&prompt.text), estimate_tokens(&text)),
        };
        Ok(Completion { text, usage })
    }
}
