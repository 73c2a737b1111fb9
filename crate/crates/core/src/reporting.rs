//! Request log records, run reports and the status summary table.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PriceTable;
use crate::llm::TokenUsage;

/// Verdict marker for requests that got no HTTP response.
pub const NETWORK_FAIL: &str = "NetworkFail";

pub fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn now() -> String {
    timestamp(Utc::now())
}

/// One line of `requests.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api: Option<String>,
    pub method: String,
    pub url: String,
    pub status: Option<u16>,
    pub content_type: Option<String>,
    /// Hex SHA-256 of the response body.
    pub body_digest: Option<String>,
    /// `Valid`, `ClientError`, `ServerError`, `SoftError` or `NetworkFail`.
    pub verdict: String,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerErrorRecord {
    /// 1-based line in `requests.jsonl`.
    pub log_line: usize,
    pub timestamp: String,
    pub method: String,
    pub url: String,
    pub status: u16,
    pub content_type: Option<String>,
    pub body: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: u32,
    pub new_routes: u64,
    pub new_params: u64,
    pub requests_sent: u64,
    pub verdict_histogram: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub api_name: String,
    pub started_at: String,
    pub ended_at: String,
    pub requests_sent: u64,
    pub verdict_histogram: BTreeMap<String, u64>,
    pub routes_found: u64,
    pub params_found: u64,
    pub token_usage: TokenUsage,
    pub model_cost: f64,
    /// Log lines holding server errors.
    pub server_errors: Vec<usize>,
    pub iterations: Vec<IterationStats>,
    pub llm_backend: String,
}

/// Input price plus output price, both quoted per million tokens.
pub fn model_cost(usage: TokenUsage, prices: PriceTable) -> f64 {
    usage.input_tokens as f64 * prices.input_per_million / 1e6
        + usage.output_tokens as f64 * prices.output_per_million / 1e6
}

pub fn verdict_histogram(log: &[LogEntry]) -> BTreeMap<String, u64> {
    let mut h = BTreeMap::new();
    for e in log {
        *h.entry(e.verdict.clone()).or_insert(0) += 1;
    }
    h
}

pub struct RunSnapshot<'a> {
    pub api_name: &'a str,
    pub started_at: String,
    pub ended_at: String,
    pub log: &'a [LogEntry],
    pub routes_found: u64,
    pub params_found: u64,
    pub token_usage: TokenUsage,
    pub iterations: Vec<IterationStats>,
    pub llm_backend: String,
}

/// Builds the report; all request counters come from the log.
pub fn finalize_report(run: RunSnapshot<'_>, prices: PriceTable) -> RunReport {
    let server_errors = run
        .log
        .iter()
        .enumerate()
        .filter(|(_, e)| e.verdict == "ServerError")
        .map(|(i, _)| i + 1)
        .collect();
    RunReport {
        api_name: run.api_name.to_string(),
        started_at: run.started_at,
        ended_at: run.ended_at,
        requests_sent: run.log.len() as u64,
        verdict_histogram: verdict_histogram(run.log),
        routes_found: run.routes_found,
        params_found: run.params_found,
        token_usage: run.token_usage,
        model_cost: model_cost(run.token_usage, prices),
        server_errors,
        iterations: run.iterations,
        llm_backend: run.llm_backend,
    }
}

#[derive(Debug, Error)]
pub enum LogParseError {
    #[error("cannot read log: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StatusCounts {
    pub success: u64,
    pub client: u64,
    pub server: u64,
    pub soft: u64,
    pub other: u64,
    pub network: u64,
}

impl StatusCounts {
    pub fn total(&self) -> u64 {
        self.success + self.client + self.server + self.soft + self.other + self.network
    }

    fn add(&mut self, e: &LogEntry) {
        let slot = match (e.verdict.as_str(), e.status) {
            (NETWORK_FAIL, _) | (_, None) => &mut self.network,
            ("SoftError", _) => &mut self.soft,
            (_, Some(200..=299)) => &mut self.success,
            (_, Some(400..=499)) => &mut self.client,
            (_, Some(500..=599)) => &mut self.server,
            _ => &mut self.other,
        };
        *slot += 1;
    }
}

pub fn parse_log(text: &str) -> Result<Vec<LogEntry>, LogParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| LogParseError::Line {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Per-API counts; entries without an `api` field go under `default_api`.
pub fn summarize(log: &[LogEntry], default_api: &str) -> BTreeMap<String, StatusCounts> {
    let mut out: BTreeMap<String, StatusCounts> = BTreeMap::new();
    for e in log {
        let api = e.api.as_deref().unwrap_or(default_api);
        out.entry(api.to_string()).or_default().add(e);
    }
    if out.is_empty() {
        out.insert(default_api.to_string(), StatusCounts::default());
    }
    out
}

pub fn format_summary(rows: &BTreeMap<String, StatusCounts>) -> String {
    let header = ["API", "2xx", "4xx", "5xx", "soft", "other", "net", "total"];
    let mut table: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for (api, c) in rows {
        table.push(vec![
            api.clone(),
            c.success.to_string(),
            c.client.to_string(),
            c.server.to_string(),
            c.soft.to_string(),
            c.other.to_string(),
            c.network.to_string(),
            c.total().to_string(),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|i| table.iter().map(|r| r[i].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(cells.join(" | ").trim_end());
        out.push('\n');
    }
    out
}

/// Text table of response classes per API for a `requests.jsonl` file.
pub fn render_status_summary(log_path: &Path) -> Result<String, LogParseError> {
    let text = std::fs::read_to_string(log_path)?;
    let entries = parse_log(&text)?;
    let default_api = log_path
        .parent()
        .and_then(|p| p.file_name())
        .and_then(|n| n.to_str())
        .unwrap_or("-");
    Ok(format_summary(&summarize(&entries, default_api)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(status: Option<u16>, verdict: &str) -> LogEntry {
        LogEntry {
            timestamp: "2024-01-01T00:00:00.000Z".into(),
            api: Some("words".into()),
            method: "GET".into(),
            url: "http://h/x".into(),
            status,
            content_type: None,
            body_digest: None,
            verdict: verdict.into(),
            elapsed_ms: 1,
        }
    }

    #[test]
    fn cost_of_the_published_example() {
        let cost = model_cost(
            TokenUsage::new(4841, 2569),
            PriceTable { input_per_million: 0.27, output_per_million: 1.10 },
        );
        // 4841 * 0.27e-6 + 2569 * 1.10e-6
        let oracle = 0.00130707 + 0.0028259;
        assert!((cost - oracle).abs() < 1e-12);
        assert!((cost - 0.004).abs() <= 0.001);
    }

    #[test]
    fn cost_edge_cases() {
        let prices = PriceTable { input_per_million: 3.0, output_per_million: 6.0 };
        assert_eq!(model_cost(TokenUsage::default(), prices), 0.0);
        let c = model_cost(TokenUsage::new(7000, 2802), prices);
        assert!((c - (0.021 + 0.016812)).abs() < 1e-12);
        assert!((c - 0.037).abs() <= 0.002);
    }

    #[test]
    fn report_counts_come_from_the_log() {
        let log = vec![
            entry(Some(200), "Valid"),
            entry(Some(500), "ServerError"),
            entry(None, NETWORK_FAIL),
            entry(Some(200), "SoftError"),
        ];
        let report = finalize_report(
            RunSnapshot {
                api_name: "words",
                started_at: "2024-01-01T00:00:00.000Z".into(),
                ended_at: "2024-01-01T00:00:01.000Z".into(),
                log: &log,
                routes_found: 1,
                params_found: 2,
                token_usage: TokenUsage::new(10, 5),
                iterations: vec![],
                llm_backend: "scripted".into(),
            },
            PriceTable::default(),
        );
        assert_eq!(report.requests_sent, 4);
        assert_eq!(report.verdict_histogram.values().sum::<u64>(), report.requests_sent);
        assert_eq!(report.server_errors, vec![2]);
        assert_eq!(report.verdict_histogram[NETWORK_FAIL], 1);
        assert!(report.ended_at >= report.started_at);
    }

    #[test]
    fn timestamps_have_milliseconds() {
        let t = DateTime::parse_from_rfc3339("2024-05-06T07:08:09.123456Z").unwrap().with_timezone(&Utc);
        assert_eq!(timestamp(t), "2024-05-06T07:08:09.123Z");
    }

    #[test]
    fn empty_log_gives_a_zero_row() {
        let dir = tempfile::tempdir().unwrap();
        let api_dir = dir.path().join("words");
        std::fs::create_dir(&api_dir).unwrap();
        let path = api_dir.join("requests.jsonl");
        std::fs::write(&path, "").unwrap();
        let text = render_status_summary(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "API   | 2xx | 4xx | 5xx | soft | other | net | total");
        assert_eq!(lines[1], "words |   0 |   0 |   0 |    0 |     0 |   0 |     0");
    }

    #[test]
    fn bad_lines_report_their_number() {
        let good = serde_json::to_string(&entry(Some(200), "Valid")).unwrap();
        let text = format!("{good}\n{good}\nnot json\n");
        match parse_log(&text) {
            Err(LogParseError::Line { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn one_server_error_lands_in_its_column() {
        let c = summarize(&[entry(Some(500), "ServerError")], "x");
        assert_eq!(c["words"].server, 1);
        assert_eq!(c["words"].total(), 1);
    }

    proptest! {
        #[test]
        fn summary_matches_a_line_by_line_recount(
            rows in prop::collection::vec((prop::option::of(100u16..600), 0usize..5), 100)
        ) {
            let verdicts = ["Valid", "ClientError", "ServerError", "SoftError", NETWORK_FAIL];
            let log: Vec<LogEntry> = rows.iter().map(|(s, v)| entry(*s, verdicts[*v])).collect();
            let text: String = log.iter().map(|e| serde_json::to_string(e).unwrap() + "\n").collect();
            let parsed = parse_log(&text).unwrap();
            let counts = summarize(&parsed, "x")["words"];
            // independent recount over the raw lines
            let (mut ok, mut c4, mut c5, mut soft, mut net, mut other) = (0, 0, 0, 0, 0, 0);
            for line in text.lines() {
                let v: serde_json::Value = serde_json::from_str(line).unwrap();
                let verdict = v["verdict"].as_str().unwrap();
                match v["status"].as_u64() {
                    None => net += 1,
                    Some(_) if verdict == NETWORK_FAIL => net += 1,
                    Some(_) if verdict == "SoftError" => soft += 1,
                    Some(s) if s / 100 == 2 => ok += 1,
                    Some(s) if s / 100 == 4 => c4 += 1,
                    Some(s) if s / 100 == 5 => c5 += 1,
                    Some(_) => other += 1,
                }
            }
            prop_assert_eq!(
                (counts.success, counts.client, counts.server, counts.soft, counts.network, counts.other),
                (ok, c4, c5, soft, net, other)
            );
            prop_assert_eq!(counts.total(), 100);
        }
    }
}
