//! Scripted model answers derived from a mock API, and recall scoring.

use std::collections::BTreeSet;

use indexmap::IndexSet;
use serde_json::{json, Value};

use restmask_core::llm::{FixtureEntry, LlmFixture};
use restmask_core::orchestrator::Recall;
use restmask_core::openapi::SpecDocument;

use crate::mock::{MockApiSpec, MockRoute};

fn list(values: impl IntoIterator<Item = String>) -> FixtureEntry {
    let values: Vec<String> = values.into_iter().collect();
    FixtureEntry::text(serde_json::to_string(&values).expect("strings serialize"))
}

fn is_get(route: &MockRoute) -> bool {
    route.method.eq_ignore_ascii_case("GET")
}

/// Literal (non-`{id}`) path segments across all routes, first-seen order.
pub fn route_vocabulary(spec: &MockApiSpec) -> Vec<String> {
    let mut words = IndexSet::new();
    for r in &spec.routes {
        for s in r.segments() {
            if s != "{id}" {
                words.insert(s.to_string());
            }
        }
    }
    words.into_iter().collect()
}

/// Answers that know every route and parameter of `spec`.
pub fn build_full_knowledge_fixture(spec: &MockApiSpec) -> LlmFixture {
    build_partial_fixture(spec, &[])
}

/// Like the full-knowledge fixture, but the route names in `dropped` are
/// never proposed.
pub fn build_partial_fixture(spec: &MockApiSpec, dropped: &[&str]) -> LlmFixture {
    let keep = |w: &str| !dropped.contains(&w);
    let mut f = LlmFixture::new();

    let mut base = serde_json::Map::new();
    if let Some(d) = &spec.description {
        base.insert("description".into(), json!(d));
    }
    f.insert("BASE_DATA", FixtureEntry::text(Value::Object(base).to_string()));

    let mut top = IndexSet::new();
    for r in spec.routes.iter().filter(|r| is_get(r)) {
        if let Some(first) = r.segments().first() {
            if *first != "{id}" && keep(first) {
                top.insert(first.to_string());
            }
        }
    }
    f.insert("ROUTE_LIST", list(top));
    f.insert(
        "MASK_FILL|<route>",
        list(route_vocabulary(spec).into_iter().filter(|w| keep(w))),
    );

    for r in spec.routes.iter().filter(|r| is_get(r)) {
        let pairs: Vec<String> = r.params().map(|p| format!("{}={}", p.name, p.example)).collect();
        let names = r.params().map(|p| p.name.clone());
        let values = r.params().map(|p| p.example.clone());
        f.insert(format!("PARAM_LIST|{}", r.path), list(pairs.clone()));
        f.insert(format!("MASK_FILL|<parameter=value>|{}", r.path), list(pairs));
        f.insert(format!("MASK_FILL|<parameter>|{}", r.path), list(names));
        f.insert(format!("MASK_FILL|<value>|{}", r.path), list(values));
    }
    for r in spec.routes.iter().filter(|r| r.creates_resource) {
        let payload = r.payload_example.clone().unwrap_or_else(|| json!({ "name": "example" }));
        f.insert(
            format!("PAYLOAD_EXAMPLE|{}|{}", r.method.to_ascii_uppercase(), r.path),
            FixtureEntry::text(payload.to_string()),
        );
    }
    f
}

/// Share of the mock's routes and unique parameter names present in `doc`.
pub fn compute_recall(truth: &MockApiSpec, doc: &SpecDocument) -> Recall {
    truth.ground_truth().recall(doc)
}

/// Routes of `doc` that the mock does not have.
pub fn spurious_routes(truth: &MockApiSpec, doc: &SpecDocument) -> BTreeSet<String> {
    let known: BTreeSet<String> = truth.paths().into_iter().collect();
    doc.paths.keys().filter(|p| !known.contains(*p)).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mock::ErrorMode;
    use restmask_core::llm::parse_value_list;
    use restmask_core::model::parse_request;
    use restmask_core::verification::ApiResponse;

    fn soccer_like() -> MockApiSpec {
        MockApiSpec::from_json(
            &json!({
                "name": "Soccer",
                "error_mode": "http404",
                "routes": [
                    {"path": "/players", "optional_params": [{"name": "name", "example": "Messi"}]},
                    {"path": "/players/{id}"},
                    {"path": "/clubs", "required_params": [{"name": "country", "example": "es"}]},
                    {"path": "/leagues"}
                ]
            })
            .to_string(),
        )
        .unwrap()
    }

    fn text(f: &LlmFixture, key: &str) -> String {
        f.lookup(key).unwrap().text.clone()
    }

    #[test]
    fn full_knowledge_lists_the_top_level_routes() {
        let f = build_full_knowledge_fixture(&soccer_like());
        assert_eq!(parse_value_list(&text(&f, "ROUTE_LIST")), vec!["players", "clubs", "leagues"]);
        assert_eq!(parse_value_list(&text(&f, "PARAM_LIST|/clubs")), vec!["country=es"]);
        assert_eq!(parse_value_list(&text(&f, "MASK_FILL|<parameter>|/players")), vec!["name"]);
        assert_eq!(
            parse_value_list(&text(&f, "MASK_FILL|<route>|/players|/players/<route>")),
            vec!["players", "clubs", "leagues"]
        );
    }

    #[test]
    fn dropped_names_disappear() {
        let f = build_partial_fixture(&soccer_like(), &["clubs"]);
        assert_eq!(parse_value_list(&text(&f, "ROUTE_LIST")), vec!["players", "leagues"]);
        assert!(!text(&f, "MASK_FILL|<route>").contains("clubs"));
    }

    #[test]
    fn empty_spec_gives_empty_completions() {
        let spec = MockApiSpec {
            name: "Empty".into(),
            description: None,
            error_mode: ErrorMode::Http404,
            routes: vec![],
        };
        let f = build_full_knowledge_fixture(&spec);
        assert_eq!(parse_value_list(&text(&f, "ROUTE_LIST")), Vec::<String>::new());
        assert_eq!(parse_value_list(&text(&f, "MASK_FILL|<route>")), Vec::<String>::new());
    }

    #[test]
    fn recall_is_set_arithmetic() {
        let spec = soccer_like();
        let empty = compute_recall(&spec, &SpecDocument::new("S"));
        assert_eq!((empty.route_recall, empty.param_recall), (0.0, 0.0));

        let mut doc = SpecDocument::new("S");
        let ok = ApiResponse::json(200, "[]");
        for raw in ["/players?name=x", "/players/3", "/clubs?country=es", "/leagues"] {
            doc.record_valid(&parse_request(raw, "http://h").unwrap(), &ok);
        }
        let full = compute_recall(&spec, &doc);
        assert_eq!((full.route_recall, full.param_recall), (1.0, 1.0));

        doc.paths.remove("/leagues");
        doc.record_valid(&parse_request("/ghost", "http://h").unwrap(), &ok);
        let partial = compute_recall(&spec, &doc);
        assert_eq!(partial.route_recall, 3.0 / 4.0);
        assert_eq!(spurious_routes(&spec, &doc), BTreeSet::from(["/ghost".to_string()]));
    }
}
