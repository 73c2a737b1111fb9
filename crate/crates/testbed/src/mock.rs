//! Declarative mock REST APIs served over loopback HTTP.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use restmask_core::orchestrator::GroundTruth;

/// Body returned when a route's server-error predicate matches.
pub const SERVER_ERROR_BODY: &str =
    r#"{"code":500,"message":"There was an error processing your request. It has been logged."}"#;
/// First id handed out by a resource-creating route.
pub const FIRST_CREATED_ID: u64 = 101;

#[derive(Debug, Error)]
pub enum MockError {
    #[error("cannot bind mock server: {0}")]
    PortBind(String),
    #[error("cannot read mock spec: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid mock spec: {0}")]
    Invalid(String),
}

/// How the mock answers requests for routes it does not have.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    /// 404 with a JSON message.
    Http404,
    /// 200 with `{"error": "Endpoint not found"}`.
    Http200ErrorJson,
    /// 200 with an HTML error page.
    HtmlError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockParam {
    pub name: String,
    pub example: String,
}

fn get() -> String {
    "GET".to_string()
}

fn ok() -> u16 {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRoute {
    /// e.g. `/players/{id}/stats`; `{id}` matches digit segments.
    pub path: String,
    #[serde(default = "get")]
    pub method: String,
    #[serde(default)]
    pub required_params: Vec<MockParam>,
    #[serde(default)]
    pub optional_params: Vec<MockParam>,
    #[serde(default = "ok")]
    pub success_status: u16,
    #[serde(default)]
    pub success_body: Value,
    /// Answer 500 when all of these parameters are present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub server_error_when: Option<Vec<String>>,
    /// POST that creates a resource under `path/{id}`.
    #[serde(default)]
    pub creates_resource: bool,
    /// DELETE that removes a resource created earlier.
    #[serde(default)]
    pub deletes_resource: bool,
    /// Body the scripted model proposes for write requests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_example: Option<Value>,
}

impl MockRoute {
    pub fn params(&self) -> impl Iterator<Item = &MockParam> {
        self.required_params.iter().chain(&self.optional_params)
    }

    pub fn segments(&self) -> Vec<&str> {
        self.path.split('/').filter(|s| !s.is_empty()).collect()
    }

    fn matches_path(&self, segments: &[&str]) -> bool {
        let own = self.segments();
        own.len() == segments.len()
            && own.iter().zip(segments).all(|(t, s)| {
                if *t == "{id}" {
                    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
                } else {
                    t == s
                }
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockApiSpec {
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
    pub error_mode: ErrorMode,
    pub routes: Vec<MockRoute>,
}

impl MockApiSpec {
    pub fn from_json(text: &str) -> Result<Self, MockError> {
        let spec: MockApiSpec = serde_json::from_str(text).map_err(|e| MockError::Invalid(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, MockError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), MockError> {
        if self.routes.is_empty() {
            return Err(MockError::Invalid(format!("{}: no routes", self.name)));
        }
        for r in &self.routes {
            let mut names = BTreeSet::new();
            for p in r.params() {
                if !names.insert(&p.name) {
                    return Err(MockError::Invalid(format!("{}: duplicate parameter {}", r.path, p.name)));
                }
            }
        }
        Ok(())
    }

    /// Distinct route paths, in declaration order.
    pub fn paths(&self) -> Vec<String> {
        let mut seen = indexmap::IndexSet::new();
        for r in &self.routes {
            seen.insert(r.path.clone());
        }
        seen.into_iter().collect()
    }

    /// Unique parameter names across all routes.
    pub fn parameter_names(&self) -> BTreeSet<String> {
        self.routes
            .iter()
            .flat_map(|r| r.params().map(|p| p.name.clone()))
            .collect()
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            routes: self.paths(),
            parameters: self.parameter_names().into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordedRequest {
    pub method: String,
    pub path: String,
    pub query: Vec<(String, String)>,
    pub status: u16,
}

#[derive(Debug, Default)]
struct MockState {
    next_id: u64,
    created: BTreeSet<u64>,
    log: Vec<RecordedRequest>,
}

struct Reply {
    status: u16,
    content_type: &'static str,
    body: String,
    location: Option<String>,
}

impl Reply {
    fn json(status: u16, body: impl Into<String>) -> Self {
        Reply {
            status,
            content_type: "application/json",
            body: body.into(),
            location: None,
        }
    }
}

fn unknown_route(mode: ErrorMode) -> Reply {
    match mode {
        ErrorMode::Http404 => Reply::json(404, r#"{"message":"Not found"}"#),
        ErrorMode::Http200ErrorJson => Reply::json(200, r#"{"error":"Endpoint not found"}"#),
        ErrorMode::HtmlError => Reply {
            status: 200,
            content_type: "text/html; charset=utf-8",
            body: "<!DOCTYPE html><html><head><title>Oops</title></head><body><h1>Page not found</h1></body></html>".into(),
            location: None,
        },
    }
}

/// Answers one request. Pure apart from the resource counter and created set.
fn respond(spec: &MockApiSpec, state: &mut MockState, method: &str, path: &str, query: &[(String, String)], body: &str) -> Reply {
    let segments: Vec<&str> = path.split('/').filter(|s| !s.is_empty()).collect();
    let on_path: Vec<&MockRoute> = spec.routes.iter().filter(|r| r.matches_path(&segments)).collect();
    if on_path.is_empty() {
        return unknown_route(spec.error_mode);
    }
    let Some(route) = on_path.iter().find(|r| r.method.eq_ignore_ascii_case(method)) else {
        return Reply::json(405, r#"{"message":"Method not allowed"}"#);
    };
    let present = |name: &str| query.iter().any(|(n, _)| n == name);
    if let Some(missing) = route.required_params.iter().find(|p| !present(&p.name)) {
        return Reply::json(400, json!({ "message": format!("Missing required parameter: {}", missing.name) }).to_string());
    }
    if let Some(names) = &route.server_error_when {
        if names.iter().all(|n| present(n)) {
            return Reply::json(500, SERVER_ERROR_BODY);
        }
    }
    if route.creates_resource {
        if state.next_id == 0 {
            state.next_id = FIRST_CREATED_ID;
        }
        let id = state.next_id;
        state.next_id += 1;
        state.created.insert(id);
        let mut created = serde_json::from_str::<Value>(body)
            .ok()
            .filter(Value::is_object)
            .unwrap_or_else(|| json!({}));
        created["id"] = json!(id);
        let mut reply = Reply::json(route.success_status, created.to_string());
        reply.location = Some(format!("{}/{id}", path.trim_end_matches('/')));
        return reply;
    }
    if route.deletes_resource {
        let id = segments.last().and_then(|s| s.parse::<u64>().ok());
        return match id {
            Some(id) if state.created.remove(&id) => Reply {
                status: route.success_status,
                content_type: "application/json",
                body: String::new(),
                location: None,
            },
            _ => Reply::json(404, r#"{"message":"Not found"}"#),
        };
    }
    Reply::json(route.success_status, route.success_body.to_string())
}

/// A running mock; stopped on drop.
pub struct MockServer {
    server: Arc<tiny_http::Server>,
    state: Arc<Mutex<MockState>>,
    base_url: String,
    worker: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Serves `spec` on an ephemeral loopback port.
    pub fn start(spec: MockApiSpec) -> Result<Self, MockError> {
        Self::start_on(spec, 0)
    }

    pub fn start_on(spec: MockApiSpec, port: u16) -> Result<Self, MockError> {
        let server = tiny_http::Server::http(("127.0.0.1", port)).map_err(|e| MockError::PortBind(e.to_string()))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| MockError::PortBind("not an IP listener".into()))?;
        let server = Arc::new(server);
        let state = Arc::new(Mutex::new(MockState::default()));
        let worker = {
            let server = Arc::clone(&server);
            let state = Arc::clone(&state);
            std::thread::spawn(move || serve(&server, &spec, &state))
        };
        Ok(MockServer {
            server,
            state,
            base_url: format!("http://{addr}"),
            worker: Some(worker),
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// Requests received so far, in arrival order.
    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.state.lock().expect("mock state").log.clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

fn split_url(raw: &str) -> (String, Vec<(String, String)>) {
    let parsed = url::Url::parse("http://mock.invalid")
        .and_then(|b| b.join(raw))
        .expect("request target parses");
    let path = percent_decode(parsed.path());
    let query = parsed.query_pairs().map(|(k, v)| (k.into_owned(), v.into_owned())).collect();
    (path, query)
}

fn percent_decode(s: &str) -> String {
    percent_encoding::percent_decode_str(s).decode_utf8_lossy().into_owned()
}

fn serve(server: &tiny_http::Server, spec: &MockApiSpec, state: &Mutex<MockState>) {
    for mut request in server.incoming_requests() {
        let mut body = String::new();
        let _ = request.as_reader().read_to_string(&mut body);
        let method = request.method().as_str().to_ascii_uppercase();
        let (path, query) = split_url(request.url());
        let reply = {
            let mut st = state.lock().expect("mock state");
            let reply = respond(spec, &mut st, &method, &path, &query, &body);
            st.log.push(RecordedRequest {
                method: method.clone(),
                path: path.clone(),
                query: query.clone(),
                status: reply.status,
            });
            reply
        };
        let mut response = tiny_http::Response::from_string(reply.body)
            .with_status_code(reply.status)
            .with_header(
                tiny_http::Header::from_bytes("Content-Type", reply.content_type).expect("static header"),
            );
        if let Some(location) = reply.location {
            response.add_header(tiny_http::Header::from_bytes("Location", location.as_bytes()).expect("location header"));
        }
        let _ = request.respond(response);
    }
}
