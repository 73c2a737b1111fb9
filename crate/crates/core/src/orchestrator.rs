//! The end-to-end inference run: base data, error probe, the strategy loop
//! and the output files.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, LlmBackendKind, RunConfig};
use crate::llm::{
    BaseData, ChatCompletionsBackend, LlmBackend, LlmError, LlmFixture, LlmGateway, PromptContext,
    PromptKind, ScriptedBackend,
};
use crate::model::{parse_request, ApiRequest, CanonicalKey, HttpMethod, ID_PLACEHOLDER};
use crate::mutation::{apply_mask, instantiate, select_seed, MutationOperator, SeedList};
use crate::openapi::{Format, SerializationError, SpecDocument};
use crate::reporting::{
    finalize_report, now, IterationStats, LogEntry, RunReport, RunSnapshot, ServerErrorRecord,
    NETWORK_FAIL,
};
use crate::transport::{HttpSender, NetworkError};
use crate::verification::{classify_response, invalid_probe_request, ApiResponse, ErrorSchemaSample, VerdictClass};

pub const DEFAULT_CHAT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_CHAT_MODEL: &str = "gpt-4o-mini";
pub const DEFAULT_KEY_ENV: &str = "OPENAI_API_KEY";
/// Consecutive iterations without new routes or parameters that end a run.
pub const QUIET_ITERATIONS: u32 = 2;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{api}: no server URL configured and none could be inferred")]
    NoServerUrl { api: String },
    #[error("{api}: no valid seed request found and no manual seeds configured")]
    NoValidSeeds { api: String },
    #[error("LLM setup failed: {0}")]
    Llm(#[from] LlmError),
    #[error("cannot write outputs: {0}")]
    Output(#[from] std::io::Error),
    #[error(transparent)]
    Serialization(#[from] SerializationError),
    #[error("invalid ground truth file: {0}")]
    GroundTruth(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    InferAllBase,
    InferAllMutationsRoutes,
    InferAllMutationsRandom,
}

/// Routes and unique parameter names an API is known to have.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub routes: Vec<String>,
    pub parameters: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Recall {
    pub route_recall: f64,
    pub param_recall: f64,
}

impl Recall {
    pub fn is_complete(&self) -> bool {
        self.route_recall >= 1.0 && self.param_recall >= 1.0
    }
}

/// `/users/{userId}/posts/7` -> `/users/{id}/posts/{id}`.
pub fn normalize_route(route: &str) -> String {
    let segments: Vec<String> = route
        .split('/')
        .filter(|s| !s.is_empty())
        .map(|s| {
            let placeholder = s.starts_with('{') && s.ends_with('}');
            if placeholder || s.bytes().all(|b| b.is_ascii_digit()) {
                ID_PLACEHOLDER.to_string()
            } else {
                s.to_string()
            }
        })
        .collect();
    crate::model::route_key(&segments)
}

impl GroundTruth {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| RunError::GroundTruth(e.to_string()))
    }

    pub fn recall(&self, doc: &SpecDocument) -> Recall {
        let truth_routes: BTreeSet<String> = self.routes.iter().map(|r| normalize_route(r)).collect();
        let truth_params: BTreeSet<&str> = self.parameters.iter().map(String::as_str).collect();
        let found_routes: BTreeSet<String> = doc.paths.keys().map(|r| normalize_route(r)).collect();
        let found_params = doc.parameter_names();
        let fraction = |hit: usize, total: usize| if total == 0 { 1.0 } else { hit as f64 / total as f64 };
        Recall {
            route_recall: fraction(truth_routes.intersection(&found_routes).count(), truth_routes.len()),
            param_recall: fraction(
                truth_params.iter().filter(|p| found_params.contains(**p)).count(),
                truth_params.len(),
            ),
        }
    }
}

/// Sends requests at most once per `rate_limit`, with the api key appended,
/// writing every exchange to the request log.
pub struct PacedSender {
    inner: Box<dyn HttpSender>,
    rate_limit: Duration,
    last_send: Option<Instant>,
    api_key: Option<(String, String)>,
    /// Requests on this base URL receive the api key.
    keyed_base: Option<String>,
    api_name: String,
    log: Vec<LogEntry>,
    server_errors: Vec<ServerErrorRecord>,
    writer: Option<BufWriter<File>>,
}

impl PacedSender {
    pub fn new(inner: Box<dyn HttpSender>, api_name: impl Into<String>, rate_limit: Duration) -> Self {
        PacedSender {
            inner,
            rate_limit,
            last_send: None,
            api_key: None,
            keyed_base: None,
            api_name: api_name.into(),
            log: Vec::new(),
            server_errors: Vec::new(),
            writer: None,
        }
    }

    pub fn with_api_key(mut self, base_url: &str, name: &str, value: &str) -> Self {
        self.set_api_key(base_url, Some((name.to_string(), value.to_string())));
        self
    }

    fn set_api_key(&mut self, base_url: &str, key: Option<(String, String)>) {
        self.keyed_base = Some(crate::model::normalize_base_url(base_url));
        self.api_key = key;
    }

    /// Appends log lines to `path` as they are produced.
    pub fn log_to(&mut self, path: &Path) -> std::io::Result<()> {
        self.writer = Some(BufWriter::new(File::create(path)?));
        Ok(())
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn server_errors(&self) -> &[ServerErrorRecord] {
        &self.server_errors
    }

    pub fn send(&mut self, req: &ApiRequest) -> Result<ApiResponse, NetworkError> {
        if let Some(last) = self.last_send {
            let wait = self.rate_limit.saturating_sub(last.elapsed());
            if !wait.is_zero() {
                thread::sleep(wait);
            }
        }
        let mut outgoing = req.clone();
        if let (Some((name, value)), Some(base)) = (&self.api_key, &self.keyed_base) {
            if &outgoing.base_url == base && !outgoing.query_params.iter().any(|(n, _)| n == name) {
                outgoing.query_params.push((name.clone(), value.clone()));
            }
        }
        self.last_send = Some(Instant::now());
        let started = Instant::now();
        let result = self.inner.send(&outgoing);
        let url = outgoing.render();
        let entry = match &result {
            Ok(resp) => LogEntry {
                timestamp: now(),
                api: Some(self.api_name.clone()),
                method: outgoing.method.as_str().to_string(),
                url: url.clone(),
                status: Some(resp.status),
                content_type: resp.content_type.clone(),
                body_digest: Some(hex::encode(Sha256::digest(&resp.body))),
                verdict: classify_response(resp).class.as_str().to_string(),
                elapsed_ms: resp.elapsed_ms.max(started.elapsed().as_millis() as u64),
            },
            Err(e) => {
                warn!("{} {url}: {e}", outgoing.method);
                LogEntry {
                    timestamp: now(),
                    api: Some(self.api_name.clone()),
                    method: outgoing.method.as_str().to_string(),
                    url: url.clone(),
                    status: None,
                    content_type: None,
                    body_digest: None,
                    verdict: NETWORK_FAIL.to_string(),
                    elapsed_ms: started.elapsed().as_millis() as u64,
                }
            }
        };
        if let Ok(resp) = &result {
            if classify_response(resp).class == VerdictClass::ServerError {
                self.server_errors.push(ServerErrorRecord {
                    log_line: self.log.len() + 1,
                    timestamp: entry.timestamp.clone(),
                    method: entry.method.clone(),
                    url,
                    status: resp.status,
                    content_type: resp.content_type.clone(),
                    body: String::from_utf8_lossy(&resp.body).into_owned(),
                });
            }
        }
        if let Some(w) = self.writer.as_mut() {
            let line = serde_json::to_string(&entry).expect("log entry serializes");
            if let Err(e) = writeln!(w, "{line}").and_then(|_| w.flush()) {
                warn!("request log write failed: {e}");
            }
        }
        self.log.push(entry);
        result
    }
}

/// Lowercase name with runs of other characters replaced by `-`.
pub fn api_slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.trim().chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    let out = out.trim_matches('-').to_string();
    if out.is_empty() {
        "api".to_string()
    } else {
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: u64,
    /// Outputs go to `<out_dir>/<api slug>/`; nothing is written when absent.
    pub out_dir: Option<PathBuf>,
    pub ground_truth: Option<GroundTruth>,
    /// Overrides the configured iteration cap.
    pub max_iterations: Option<u32>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub document: SpecDocument,
    pub log: Vec<LogEntry>,
    pub server_errors: Vec<ServerErrorRecord>,
    pub output_dir: Option<PathBuf>,
    /// Set when a ground truth was given and fully recovered.
    pub fully_explored: bool,
}

impl RunOutcome {
    pub fn iterations(&self) -> usize {
        self.report.iterations.len()
    }
}

/// Builds the backend a config asks for. A fixture path forces the scripted
/// backend.
pub fn backend_for(config: &RunConfig, fixture: Option<&Path>) -> Result<Box<dyn LlmBackend>, RunError> {
    if let Some(path) = fixture {
        return Ok(Box::new(ScriptedBackend::new(LlmFixture::load(path)?)));
    }
    match config.llm_backend {
        LlmBackendKind::Scripted => Err(RunError::Llm(LlmError::Fixture(
            "the scripted backend needs a fixture file".into(),
        ))),
        LlmBackendKind::ChatCompletions => {
            let env = config.llm_key_env.as_deref().unwrap_or(DEFAULT_KEY_ENV);
            let key = std::env::var(env).ok().filter(|k| !k.is_empty());
            if key.is_none() {
                warn!("{}: environment variable {env} is not set", config.api_name);
            }
            Ok(Box::new(ChatCompletionsBackend::new(
                config.llm_endpoint.as_deref().unwrap_or(DEFAULT_CHAT_ENDPOINT),
                config.llm_model.as_deref().unwrap_or(DEFAULT_CHAT_MODEL),
                key,
            )))
        }
    }
}

struct Run<'a> {
    config: &'a RunConfig,
    base_url: String,
    gateway: LlmGateway,
    sender: PacedSender,
    seeds: SeedList,
    doc: SpecDocument,
    sent: HashSet<CanonicalKey>,
    rng: ChaCha8Rng,
    write_probed: BTreeSet<String>,
    attempted: HashSet<(MutationOperator, CanonicalKey)>,
    ground_truth: Option<&'a GroundTruth>,
}

impl Run<'_> {
    fn ctx(&self) -> PromptContext {
        PromptContext::new(&self.config.api_name)
    }

    fn ask(&mut self, kind: PromptKind, ctx: &PromptContext) -> Vec<String> {
        self.gateway.ask_values(kind, ctx).unwrap_or_else(|e| {
            warn!("{}: {kind} prompt failed: {e}", self.config.api_name);
            Vec::new()
        })
    }

    fn fully_explored(&self) -> bool {
        self.ground_truth.is_some_and(|gt| gt.recall(&self.doc).is_complete())
    }

    /// Sends a request unless it was already sent in this run, then routes
    /// the evidence to the seed list and the document.
    fn try_send(&mut self, req: ApiRequest, stats: &mut IterationStats) -> Option<(ApiResponse, VerdictClass)> {
        if req.validate().is_err() {
            return None;
        }
        let key = req.canonical_key();
        if !self.sent.insert(key.clone()) {
            return None;
        }
        stats.requests_sent += 1;
        let resp = match self.sender.send(&req) {
            Ok(resp) => resp,
            Err(_) => {
                *stats.verdict_histogram.entry(NETWORK_FAIL.to_string()).or_insert(0) += 1;
                self.seeds.mark_invalid(key);
                return None;
            }
        };
        let class = classify_response(&resp).class;
        *stats.verdict_histogram.entry(class.as_str().to_string()).or_insert(0) += 1;
        match class {
            VerdictClass::Valid => {
                let change = self.doc.record_valid(&req, &resp);
                stats.new_routes += u64::from(change.new_route);
                stats.new_params += change.new_params as u64;
                if req.method == HttpMethod::Get {
                    self.seeds.insert_valid(req);
                }
            }
            VerdictClass::ServerError => {
                self.seeds.mark_invalid(key);
            }
            VerdictClass::ClientError | VerdictClass::SoftError => {
                self.seeds.mark_invalid(key);
                self.doc.record_invalid(&req, &resp);
            }
        }
        Some((resp, class))
    }

    fn parse_route_candidate(&self, raw: &str) -> Option<ApiRequest> {
        let raw = raw.trim();
        if raw.is_empty() || raw.chars().any(char::is_whitespace) {
            return None;
        }
        let relative = if raw.starts_with('/') || raw.starts_with(&self.base_url) {
            raw.to_string()
        } else {
            format!("/{raw}")
        };
        parse_request(&relative, &self.base_url).ok()
    }

    fn infer_all_base(&mut self, stats: &mut IterationStats) -> Result<(), RunError> {
        for raw in self.config.manual_seeds.clone() {
            match parse_request(&raw, &self.base_url) {
                Ok(req) => {
                    self.try_send(req, stats);
                }
                Err(e) => warn!("{}: manual seed skipped: {e}", self.config.api_name),
            }
        }
        let routes = self.ask(PromptKind::RouteList, &self.ctx());
        for raw in routes {
            let Some(route_req) = self.parse_route_candidate(&raw) else {
                continue;
            };
            self.try_send(route_req.clone(), stats);
            let ctx = self.ctx().route(route_req.route_key());
            for item in self.ask(PromptKind::ParamList, &ctx) {
                let (name, value) = match item.split_once('=') {
                    Some((n, v)) => (n.trim().to_string(), v.trim().to_string()),
                    None => (item.trim().to_string(), "1".to_string()),
                };
                if name.is_empty() || value.is_empty() {
                    continue;
                }
                let mut req = route_req.clone();
                req.query_params.push((name, value));
                self.try_send(req, stats);
            }
        }
        if self.seeds.is_empty() && self.config.manual_seeds.is_empty() {
            return Err(RunError::NoValidSeeds {
                api: self.config.api_name.clone(),
            });
        }
        Ok(())
    }

    fn run_operator(&mut self, op: MutationOperator, seed: &ApiRequest, stats: &mut IterationStats) {
        if !op.is_applicable(seed) || !self.attempted.insert((op, seed.canonical_key())) {
            return;
        }
        let masked = match apply_mask(seed, op, &mut self.rng) {
            Ok(m) => m,
            Err(e) => {
                warn!("{e}");
                return;
            }
        };
        let values = match masked.token() {
            None => Vec::new(),
            Some(token) => {
                let ctx = self
                    .ctx()
                    .route(seed.route_key())
                    .mask(masked.rendered_template.clone(), token);
                self.ask(PromptKind::MaskFill, &ctx)
            }
        };
        for req in instantiate(&masked, &values) {
            self.try_send(req, stats);
        }
    }

    /// Every operator on one seed per known route, including routes found
    /// during the pass.
    fn infer_all_mutations_routes(&mut self, stats: &mut IterationStats) {
        let mut next = 0;
        loop {
            let routes = self.seeds.routes();
            let Some(route) = routes.get(next).cloned() else {
                break;
            };
            next += 1;
            let candidates = self.seeds.seeds_on_route(&route);
            let seed = candidates[self.rng.gen_range(0..candidates.len())].clone();
            for op in MutationOperator::ALL {
                self.run_operator(op, &seed, stats);
            }
        }
    }

    /// Every operator once, each on an independently selected seed.
    fn infer_all_mutations_random(&mut self, stats: &mut IterationStats) {
        for op in MutationOperator::ALL {
            let pool = self.seeds.routes();
            let seed = match select_seed(&self.seeds, self.config.seed_selection, &pool, &mut self.rng) {
                Ok(seed) => seed.clone(),
                Err(e) => {
                    warn!("{}: {e}", self.config.api_name);
                    return;
                }
            };
            self.run_operator(op, &seed, stats);
        }
    }

    fn delete_target(&self, post: &ApiRequest, resp: &ApiResponse) -> Option<ApiRequest> {
        if let Some(location) = &resp.location {
            let resolved = url::Url::parse(&post.render())
                .and_then(|u| u.join(location))
                .ok()
                .and_then(|abs| parse_request(abs.as_str(), &self.base_url).ok());
            if let Some(req) = resolved {
                return Some(req.with_method(HttpMethod::Delete));
            }
        }
        let body: serde_json::Value = serde_json::from_slice(&resp.body).ok()?;
        let id = body.get("id")?.as_u64()?;
        let mut req = post.clone().with_method(HttpMethod::Delete);
        req.query_params.clear();
        req.path_segments.push(id.to_string());
        Some(req)
    }

    /// POST (then DELETE of the created resource) on collection routes, PUT
    /// and PATCH on `{id}` routes, once per route.
    fn probe_write_methods(&mut self, stats: &mut IterationStats) {
        let writes = [HttpMethod::Post, HttpMethod::Put, HttpMethod::Patch, HttpMethod::Delete];
        if !writes.iter().any(|m| self.config.method_enabled(*m)) {
            return;
        }
        for route in self.seeds.routes() {
            if !self.write_probed.insert(route.clone()) {
                continue;
            }
            let Some(seed) = self.seeds.seeds_on_route(&route).first().map(|s| (*s).clone()) else {
                continue;
            };
            let mut target = seed.clone();
            target.query_params.clear();
            let item_route = route.ends_with(ID_PLACEHOLDER);
            let methods: &[HttpMethod] = if item_route {
                &[HttpMethod::Put, HttpMethod::Patch]
            } else {
                &[HttpMethod::Post]
            };
            for &method in methods {
                if !self.config.method_enabled(method) {
                    continue;
                }
                let payload = self.gateway.fetch_payload_example(&self.config.api_name, &route, method);
                let req = target.clone().with_method(method).with_body(payload);
                let Some((resp, class)) = self.try_send(req.clone(), stats) else {
                    continue;
                };
                if method == HttpMethod::Post
                    && class == VerdictClass::Valid
                    && self.config.method_enabled(HttpMethod::Delete)
                {
                    if let Some(delete) = self.delete_target(&req, &resp) {
                        self.try_send(delete, stats);
                    }
                }
            }
        }
    }

    fn strategy(&mut self, kind: StrategyKind, stats: &mut IterationStats) -> Result<(), RunError> {
        match kind {
            StrategyKind::InferAllBase => self.infer_all_base(stats)?,
            StrategyKind::InferAllMutationsRoutes => self.infer_all_mutations_routes(stats),
            StrategyKind::InferAllMutationsRandom => self.infer_all_mutations_random(stats),
        }
        self.probe_write_methods(stats);
        Ok(())
    }
}

fn fetch_base_data(gateway: &mut LlmGateway, sender: &mut PacedSender, api_name: &str) -> BaseData {
    let mut prober = |url: &str| sender.send(&ApiRequest::get(url)).is_ok();
    gateway.fetch_base_data(api_name, &mut prober).unwrap_or_else(|e| {
        warn!("{api_name}: base data unavailable: {e}");
        BaseData::default()
    })
}

pub fn run(
    config: &RunConfig,
    backend: Box<dyn LlmBackend>,
    sender: Box<dyn HttpSender>,
    options: &RunOptions,
) -> Result<RunOutcome, RunError> {
    let started_at = now();
    let api = config.api_name.clone();
    let mut gateway = LlmGateway::new(backend, config.temperature);
    if !config.llm_cache {
        gateway = gateway.without_cache();
    }
    let mut paced = PacedSender::new(sender, &api, Duration::from_millis(config.rate_limit_ms));

    let output_dir = match &options.out_dir {
        Some(root) => {
            let dir = root.join(api_slug(&api));
            fs::create_dir_all(&dir)?;
            paced.log_to(&dir.join("requests.jsonl"))?;
            Some(dir)
        }
        None => None,
    };

    let base = fetch_base_data(&mut gateway, &mut paced, &api);
    let base_url = config
        .server_url
        .clone()
        .or(base.server_url.clone())
        .map(|u| crate::model::normalize_base_url(&u))
        .ok_or_else(|| RunError::NoServerUrl { api: api.clone() })?;
    paced.set_api_key(&base_url, config.api_key_param.clone());

    let mut doc = SpecDocument::new(&api);
    doc.description = base.description;
    doc.documentation_url = base.documentation_url;
    doc.servers.push(base_url.clone());
    doc.api_key_param = config.api_key_param.as_ref().map(|(n, _)| n.clone());

    let mut sent = HashSet::new();
    let probe = invalid_probe_request(&base_url);
    sent.insert(probe.canonical_key());
    match paced.send(&probe) {
        Ok(resp) => doc.default_error = Some(ErrorSchemaSample::from(&resp)),
        Err(e) => warn!("{api}: default error probe failed: {e}"),
    }

    let mut state = Run {
        config,
        base_url,
        gateway,
        sender: paced,
        seeds: SeedList::new(),
        doc,
        sent,
        rng: ChaCha8Rng::seed_from_u64(options.seed),
        write_probed: BTreeSet::new(),
        attempted: HashSet::new(),
        ground_truth: options.ground_truth.as_ref(),
    };

    let max_iterations = options.max_iterations.unwrap_or(config.max_iterations);
    let mut iterations = Vec::new();
    let mut quiet = 0;
    let mut fully_explored = false;
    'run: for iteration in 1..=max_iterations {
        state.attempted.clear();
        let mut stats = IterationStats {
            iteration,
            ..Default::default()
        };
        let mut kinds = vec![StrategyKind::InferAllMutationsRoutes, StrategyKind::InferAllMutationsRandom];
        if iteration == 1 {
            kinds.insert(0, StrategyKind::InferAllBase);
        }
        for kind in kinds {
            state.strategy(kind, &mut stats)?;
            if state.fully_explored() {
                fully_explored = true;
                iterations.push(stats);
                break 'run;
            }
        }
        info!(
            "{api}: iteration {iteration}: {} requests, {} new routes, {} new params",
            stats.requests_sent, stats.new_routes, stats.new_params
        );
        let productive = stats.new_routes > 0 || stats.new_params > 0;
        iterations.push(stats);
        quiet = if productive { 0 } else { quiet + 1 };
        if quiet >= QUIET_ITERATIONS {
            break;
        }
    }

    if config.descriptions {
        state.doc.attach_descriptions(&mut state.gateway);
    }

    let report = finalize_report(
        RunSnapshot {
            api_name: &api,
            started_at,
            ended_at: now(),
            log: state.sender.log(),
            routes_found: state.doc.route_count() as u64,
            params_found: state.doc.parameter_names().len() as u64,
            token_usage: state.gateway.usage(),
            iterations,
            llm_backend: state.gateway.backend_identifier().to_string(),
        },
        config.prices,
    );

    if let Some(dir) = &output_dir {
        let slug = api_slug(&api);
        fs::write(dir.join(format!("{slug}.openapi.json")), state.doc.emit(Format::Json)?)?;
        fs::write(dir.join(format!("{slug}.openapi.yaml")), state.doc.emit(Format::Yaml)?)?;
        fs::write(
            dir.join("server_errors.json"),
            serde_json::to_string_pretty(state.sender.server_errors()).expect("records serialize") + "\n",
        )?;
        fs::write(
            dir.join("run_report.json"),
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        )?;
    }

    Ok(RunOutcome {
        report,
        document: state.doc,
        log: state.sender.log().to_vec(),
        server_errors: state.sender.server_errors().to_vec(),
        output_dir,
        fully_explored,
    })
}

/// Runs each config in its own thread. `setup` builds the backend and sender
/// for a config inside that thread.
pub fn run_many<F>(configs: &[RunConfig], options: &RunOptions, setup: F) -> Vec<Result<RunOutcome, RunError>>
where
    F: Fn(&RunConfig) -> Result<(Box<dyn LlmBackend>, Box<dyn HttpSender>), RunError> + Sync,
{
    thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|config| {
                let setup = &setup;
                scope.spawn(move || {
                    let (backend, sender) = setup(config)?;
                    run(config, backend, sender, options)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect()
    })
}

/// Groups histogram counts across iterations.
pub fn total_histogram(iterations: &[IterationStats]) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for it in iterations {
        for (k, v) in &it.verdict_histogram {
            *out.entry(k.clone()).or_insert(0) += v;
        }
    }
    out
}
