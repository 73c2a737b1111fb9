//! The inferred OpenAPI document: evidence recording, emission and a
//! structural lint.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::{IndexMap, IndexSet};
use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::llm::{LlmGateway, PromptContext};
use crate::model::{infer_value_type, ApiRequest, HttpMethod, TypeTag, ID_PLACEHOLDER};
use crate::verification::{ApiResponse, ErrorSchemaSample};

pub const OPENAPI_VERSION: &str = "3.0.3";
/// Bodies stored as examples are cut to this many bytes.
pub const EXAMPLE_BODY_LIMIT: usize = 4096;

#[derive(Debug, Error)]
pub enum SerializationError {
    #[error("JSON serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("YAML serialization failed: {0}")]
    Yaml(#[from] serde_yaml::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Yaml,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub type_tag: TypeTag,
    /// First value is the emitted `example`.
    pub example_values: IndexSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationEntry {
    pub success_status: u16,
    pub response_example: Value,
    pub response_content_type: String,
    pub invalid_behaviors: Vec<ErrorSchemaSample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_body_example: Option<Value>,
    pub parameters: IndexMap<String, ParamEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub operations: BTreeMap<HttpMethod, OperationEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecDocument {
    pub title: String,
    pub description: Option<String>,
    pub documentation_url: Option<String>,
    pub servers: Vec<String>,
    pub paths: BTreeMap<String, PathEntry>,
    pub default_error: Option<ErrorSchemaSample>,
    /// Name of the api-key query parameter, documented as a security scheme.
    pub api_key_param: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ChangeSummary {
    pub new_route: bool,
    pub new_operation: bool,
    pub new_params: usize,
    pub new_values: usize,
}

impl ChangeSummary {
    pub fn is_empty(&self) -> bool {
        *self == ChangeSummary::default()
    }
}

fn response_example(resp: &ApiResponse) -> (Value, String) {
    let media = resp.media_type();
    let Some(text) = resp.body_text() else {
        let ct = media.unwrap_or_else(|| "application/octet-stream".to_string());
        let stub = format!("<binary content: {ct}, {} bytes>", resp.body.len());
        return (Value::String(stub), ct);
    };
    if text.len() <= EXAMPLE_BODY_LIMIT {
        if let Ok(v) = serde_json::from_str::<Value>(text) {
            let ct = media.unwrap_or_else(|| "application/json".to_string());
            return (v, ct);
        }
    }
    let mut end = text.len().min(EXAMPLE_BODY_LIMIT);
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    let ct = media.unwrap_or_else(|| "text/plain".to_string());
    (Value::String(text[..end].to_string()), ct)
}

fn truncate_sample(sample: &ErrorSchemaSample) -> ErrorSchemaSample {
    let mut s = sample.clone();
    if s.body.len() > EXAMPLE_BODY_LIMIT {
        let mut end = EXAMPLE_BODY_LIMIT;
        while !s.body.is_char_boundary(end) {
            end -= 1;
        }
        s.body.truncate(end);
    }
    s
}

impl SpecDocument {
    /// An empty template for `title`.
    pub fn new(title: impl Into<String>) -> Self {
        SpecDocument {
            title: title.into(),
            description: None,
            documentation_url: None,
            servers: Vec::new(),
            paths: BTreeMap::new(),
            default_error: None,
            api_key_param: None,
        }
    }

    pub fn route_count(&self) -> usize {
        self.paths.len()
    }

    /// Unique parameter names over all operations.
    pub fn parameter_names(&self) -> BTreeSet<String> {
        self.paths
            .values()
            .flat_map(|p| p.operations.values())
            .flat_map(|op| op.parameters.keys().cloned())
            .collect()
    }

    pub fn operation(&self, path: &str, method: HttpMethod) -> Option<&OperationEntry> {
        self.paths.get(path)?.operations.get(&method)
    }

    /// Merges a valid exchange into the document.
    pub fn record_valid(&mut self, req: &ApiRequest, resp: &ApiResponse) -> ChangeSummary {
        let mut summary = ChangeSummary::default();
        let key = req.route_key();
        let path = self.paths.entry(key).or_insert_with(|| {
            summary.new_route = true;
            PathEntry::default()
        });
        let op = path.operations.entry(req.method).or_insert_with(|| {
            summary.new_operation = true;
            let (example, ct) = response_example(resp);
            OperationEntry {
                success_status: resp.status,
                response_example: example,
                response_content_type: ct,
                invalid_behaviors: Vec::new(),
                request_body_example: req.body.clone(),
                parameters: IndexMap::new(),
                description: None,
            }
        });
        for (name, value) in &req.query_params {
            let observed = infer_value_type(value);
            match op.parameters.get_mut(name) {
                Some(param) => {
                    param.type_tag = param.type_tag.widen(observed);
                    if param.example_values.insert(value.clone()) {
                        summary.new_values += 1;
                    }
                }
                None => {
                    op.parameters.insert(
                        name.clone(),
                        ParamEntry {
                            name: name.clone(),
                            type_tag: observed,
                            example_values: IndexSet::from([value.clone()]),
                            description: None,
                        },
                    );
                    summary.new_params += 1;
                    summary.new_values += 1;
                }
            }
        }
        summary
    }

    /// Documents an invalid exchange on an already documented path.
    pub fn record_invalid(&mut self, req: &ApiRequest, resp: &ApiResponse) -> bool {
        let Some(path) = self.paths.get_mut(&req.route_key()) else {
            return false;
        };
        let method = if path.operations.contains_key(&req.method) {
            req.method
        } else if path.operations.contains_key(&HttpMethod::Get) {
            HttpMethod::Get
        } else {
            match path.operations.keys().next() {
                Some(m) => *m,
                None => return false,
            }
        };
        let op = path.operations.get_mut(&method).expect("method chosen from keys");
        let sample = truncate_sample(&ErrorSchemaSample::from(resp));
        let duplicate = op
            .invalid_behaviors
            .iter()
            .any(|s| s.status == sample.status && s.content_type == sample.content_type);
        if !duplicate {
            op.invalid_behaviors.push(sample);
        }
        true
    }

    pub fn to_value(&self) -> Value {
        sorted(self.build_value())
    }

    /// Deterministic JSON or YAML text with sorted keys.
    pub fn emit(&self, format: Format) -> Result<String, SerializationError> {
        let value = self.to_value();
        Ok(match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&value)?;
                s.push('\n');
                s
            }
            Format::Yaml => serde_yaml::to_string(&value)?,
        })
    }

    fn build_value(&self) -> Value {
        let mut info = Map::new();
        info.insert("title".into(), json!(self.title));
        info.insert("version".into(), json!("1.0.0"));
        if let Some(d) = &self.description {
            info.insert("description".into(), json!(d));
        }

        let mut root = Map::new();
        root.insert("openapi".into(), json!(OPENAPI_VERSION));
        root.insert("info".into(), Value::Object(info));
        if let Some(url) = &self.documentation_url {
            root.insert("externalDocs".into(), json!({ "url": url }));
        }
        if !self.servers.is_empty() {
            let servers: Vec<Value> = self.servers.iter().map(|u| json!({ "url": u })).collect();
            root.insert("servers".into(), Value::Array(servers));
        }
        if let Some(name) = &self.api_key_param {
            root.insert(
                "components".into(),
                json!({ "securitySchemes": { "api_key": { "type": "apiKey", "in": "query", "name": name } } }),
            );
            root.insert("security".into(), json!([{ "api_key": [] }]));
        }

        let mut paths = Map::new();
        for (key, entry) in &self.paths {
            let (template, path_params) = emitted_path(key);
            let mut item = Map::new();
            if let Some(d) = &entry.description {
                item.insert("description".into(), json!(d));
            }
            for (method, op) in &entry.operations {
                item.insert(
                    method.openapi_key().into(),
                    self.operation_value(*method, &template, &path_params, op),
                );
            }
            paths.insert(template, Value::Object(item));
        }
        root.insert("paths".into(), Value::Object(paths));
        Value::Object(root)
    }

    fn operation_value(
        &self,
        method: HttpMethod,
        template: &str,
        path_params: &[String],
        op: &OperationEntry,
    ) -> Value {
        let mut params: Vec<Value> = path_params
            .iter()
            .map(|name| {
                json!({
                    "name": name,
                    "in": "path",
                    "required": true,
                    "schema": { "type": "integer" },
                })
            })
            .collect();
        for p in op.parameters.values() {
            params.push(param_value(p));
        }

        let mut responses = Map::new();
        let mut success = Map::new();
        success.insert("description".into(), json!("Successful response"));
        success.insert(
            "content".into(),
            json!({ &op.response_content_type: { "example": op.response_example } }),
        );
        responses.insert(op.success_status.to_string(), Value::Object(success));

        let mut soft = Vec::new();
        for sample in &op.invalid_behaviors {
            if (200..300).contains(&sample.status) {
                soft.push(sample_value(sample));
                continue;
            }
            let resp = responses
                .entry(sample.status.to_string())
                .or_insert_with(|| json!({ "description": "Invalid request" }));
            if let Some(ct) = &sample.content_type {
                let content = resp
                    .as_object_mut()
                    .expect("response is an object")
                    .entry("content")
                    .or_insert_with(|| json!({}));
                content
                    .as_object_mut()
                    .expect("content is an object")
                    .entry(media_of(ct))
                    .or_insert_with(|| json!({ "example": example_of(&sample.body) }));
            }
        }
        if let Some(err) = &self.default_error {
            let mut default = Map::new();
            default.insert(
                "description".into(),
                json!(format!("Default error response (observed status {})", err.status)),
            );
            if let Some(ct) = &err.content_type {
                default.insert(
                    "content".into(),
                    json!({ media_of(ct): { "example": example_of(&err.body) } }),
                );
            }
            responses.insert("default".into(), Value::Object(default));
        }

        let mut value = Map::new();
        value.insert("operationId".into(), json!(operation_id(method, template)));
        if let Some(d) = &op.description {
            value.insert("description".into(), json!(d));
        }
        if !params.is_empty() {
            value.insert("parameters".into(), Value::Array(params));
        }
        if let Some(body) = &op.request_body_example {
            value.insert(
                "requestBody".into(),
                json!({ "content": { "application/json": { "example": body } } }),
            );
        }
        value.insert("responses".into(), Value::Object(responses));
        if !soft.is_empty() {
            value.insert("x-soft-error-examples".into(), Value::Array(soft));
        }
        Value::Object(value)
    }

    /// Adds generated descriptions to paths, operations and parameters that
    /// lack one. On a backend failure the document is left as it was.
    pub fn attach_descriptions(&mut self, gateway: &mut LlmGateway) {
        let mut updated = self.clone();
        match fill_descriptions(&mut updated, gateway) {
            Ok(()) => *self = updated,
            Err(e) => warn!("descriptions skipped: {e}"),
        }
    }
}

fn fill_descriptions(doc: &mut SpecDocument, gateway: &mut LlmGateway) -> Result<(), crate::llm::LlmError> {
    let api = doc.title.clone();
    for (route, entry) in doc.paths.iter_mut() {
        let base = PromptContext::new(&api).route(route.clone());
        if entry.description.is_none() {
            entry.description = gateway.describe(&base)?;
        }
        for (method, op) in entry.operations.iter_mut() {
            let with_method = base.clone().method(*method);
            if op.description.is_none() {
                op.description = gateway.describe(&with_method)?;
            }
            for (name, param) in op.parameters.iter_mut() {
                if param.description.is_none() {
                    param.description = gateway.describe(&with_method.clone().parameter(name.clone()))?;
                }
            }
        }
    }
    Ok(())
}

/// Emitted path template and its path parameter names. Repeated `{id}`
/// placeholders become `{id}`, `{id2}`, ... so names stay unique.
pub fn emitted_path(key: &str) -> (String, Vec<String>) {
    let mut names = Vec::new();
    let mut out = String::new();
    for segment in key.split('/').filter(|s| !s.is_empty()) {
        out.push('/');
        if segment == ID_PLACEHOLDER {
            let name = if names.is_empty() {
                "id".to_string()
            } else {
                format!("id{}", names.len() + 1)
            };
            out.push_str(&format!("{{{name}}}"));
            names.push(name);
        } else {
            out.push_str(segment);
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    (out, names)
}

fn operation_id(method: HttpMethod, template: &str) -> String {
    let mut id = method.openapi_key().to_string();
    for segment in template.split('/').filter(|s| !s.is_empty()) {
        id.push('_');
        id.extend(segment.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }));
    }
    if template == "/" {
        id.push_str("_root");
    }
    id
}

fn typed_example(tag: TypeTag, value: &str) -> Value {
    match tag {
        TypeTag::Integer => value.parse::<i64>().map(Value::from).unwrap_or_else(|_| json!(value)),
        TypeTag::Number => value
            .parse::<f64>()
            .ok()
            .and_then(serde_json::Number::from_f64)
            .map(Value::Number)
            .unwrap_or_else(|| json!(value)),
        TypeTag::Boolean => json!(value == "true"),
        TypeTag::Array => Value::Array(
            value
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| json!(s.trim()))
                .collect(),
        ),
        TypeTag::String => json!(value),
    }
}

fn param_value(p: &ParamEntry) -> Value {
    let mut v = Map::new();
    v.insert("name".into(), json!(p.name));
    v.insert("in".into(), json!("query"));
    v.insert("required".into(), json!(false));
    let schema = match p.type_tag {
        TypeTag::Array => json!({ "type": "array", "items": { "type": "string" } }),
        t => json!({ "type": t.as_str() }),
    };
    v.insert("schema".into(), schema);
    if p.type_tag == TypeTag::Array {
        v.insert("style".into(), json!("form"));
        v.insert("explode".into(), json!(false));
    }
    if let Some(first) = p.example_values.first() {
        v.insert("example".into(), typed_example(p.type_tag, first));
    }
    v.insert(
        "x-observed-values".into(),
        Value::Array(p.example_values.iter().map(|s| json!(s)).collect()),
    );
    if let Some(d) = &p.description {
        v.insert("description".into(), json!(d));
    }
    Value::Object(v)
}

fn media_of(ct: &str) -> String {
    let m = ct.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
    if m.is_empty() {
        "text/plain".to_string()
    } else {
        m
    }
}

fn example_of(body: &str) -> Value {
    serde_json::from_str(body).unwrap_or_else(|_| json!(body))
}

fn sample_value(s: &ErrorSchemaSample) -> Value {
    json!({
        "status": s.status,
        "content_type": s.content_type,
        "example": example_of(&s.body),
    })
}

/// Rebuilds every object with its keys in lexicographic order.
fn sorted(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let ordered: BTreeMap<String, Value> =
                map.into_iter().map(|(k, v)| (k, sorted(v))).collect();
            Value::Object(ordered.into_iter().collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sorted).collect()),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LintIssue {
    pub pointer: String,
    pub message: String,
}

impl std::fmt::Display for LintIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.pointer, self.message)
    }
}

const OPERATION_KEYS: [&str; 8] = ["get", "put", "post", "delete", "options", "head", "patch", "trace"];

/// Structural checks for an OpenAPI 3.0 document. Returns no issues for a
/// well-formed document.
pub fn validate_openapi(doc: &Value) -> Vec<LintIssue> {
    let mut issues = Vec::new();
    let mut issue = |pointer: String, message: &str| {
        issues.push(LintIssue {
            pointer,
            message: message.to_string(),
        })
    };
    let Some(root) = doc.as_object() else {
        issue("/".into(), "document must be an object");
        return issues;
    };
    match root.get("openapi").and_then(Value::as_str) {
        Some(v) if v.starts_with("3.0.") => {}
        _ => issue("/openapi".into(), "must be a 3.0.x version string"),
    }
    match root.get("info").and_then(Value::as_object) {
        Some(info) => {
            for field in ["title", "version"] {
                if !info.get(field).is_some_and(Value::is_string) {
                    issue(format!("/info/{field}"), "required string");
                }
            }
        }
        None => issue("/info".into(), "required object"),
    }
    if let Some(servers) = root.get("servers") {
        match servers.as_array() {
            Some(list) => {
                for (i, s) in list.iter().enumerate() {
                    if !s.get("url").is_some_and(Value::is_string) {
                        issue(format!("/servers/{i}/url"), "required string");
                    }
                }
            }
            None => issue("/servers".into(), "must be an array"),
        }
    }
    let Some(paths) = root.get("paths").and_then(Value::as_object) else {
        issue("/paths".into(), "required object");
        return issues;
    };
    let mut operation_ids = BTreeSet::new();
    for (path, item) in paths {
        let esc = path.replace('~', "~0").replace('/', "~1");
        let base = format!("/paths/{esc}");
        if !path.starts_with('/') {
            issue(base.clone(), "path must start with `/`");
        }
        let placeholders: Vec<&str> = path
            .split('/')
            .filter_map(|s| s.strip_prefix('{').and_then(|s| s.strip_suffix('}')))
            .collect();
        let Some(item) = item.as_object() else {
            issue(base, "path item must be an object");
            continue;
        };
        for (key, op) in item {
            if !OPERATION_KEYS.contains(&key.as_str()) {
                if !matches!(key.as_str(), "summary" | "description" | "parameters" | "servers")
                    && !key.starts_with("x-")
                {
                    issue(format!("{base}/{key}"), "unknown path item field");
                }
                continue;
            }
            let at = format!("{base}/{key}");
            let Some(op) = op.as_object() else {
                issue(at, "operation must be an object");
                continue;
            };
            if let Some(id) = op.get("operationId").and_then(Value::as_str) {
                if !operation_ids.insert(id.to_string()) {
                    issue(format!("{at}/operationId"), "duplicate operationId");
                }
            }
            let mut declared = BTreeSet::new();
            let mut path_params = BTreeSet::new();
            if let Some(params) = op.get("parameters") {
                let Some(params) = params.as_array() else {
                    issue(format!("{at}/parameters"), "must be an array");
                    continue;
                };
                for (i, p) in params.iter().enumerate() {
                    let pat = format!("{at}/parameters/{i}");
                    let name = p.get("name").and_then(Value::as_str);
                    let location = p.get("in").and_then(Value::as_str);
                    let (Some(name), Some(location)) = (name, location) else {
                        issue(pat, "parameter needs `name` and `in`");
                        continue;
                    };
                    if !matches!(location, "query" | "header" | "path" | "cookie") {
                        issue(format!("{pat}/in"), "invalid parameter location");
                    }
                    if !declared.insert((name.to_string(), location.to_string())) {
                        issue(pat.clone(), "duplicate parameter");
                    }
                    if p.get("schema").is_none() && p.get("content").is_none() {
                        issue(pat.clone(), "parameter needs `schema` or `content`");
                    }
                    if location == "path" {
                        path_params.insert(name.to_string());
                        if p.get("required") != Some(&Value::Bool(true)) {
                            issue(format!("{pat}/required"), "path parameters must be required");
                        }
                        if !placeholders.contains(&name) {
                            issue(pat, "path parameter not in template");
                        }
                    }
                }
            }
            for name in &placeholders {
                if !path_params.contains(*name) {
                    issue(at.clone(), "template placeholder has no path parameter");
                }
            }
            match op.get("responses").and_then(Value::as_object) {
                Some(responses) if !responses.is_empty() => {
                    for (code, resp) in responses {
                        let valid_code = code == "default"
                            || (code.len() == 3
                                && (code.bytes().all(|b| b.is_ascii_digit())
                                    || code[1..] == *"XX"));
                        if !valid_code {
                            issue(format!("{at}/responses/{code}"), "invalid status code key");
                        }
                        if !resp.get("description").is_some_and(Value::is_string) {
                            issue(format!("{at}/responses/{code}/description"), "required string");
                        }
                    }
                }
                _ => issue(format!("{at}/responses"), "at least one response is required"),
            }
        }
    }
    issues
}
