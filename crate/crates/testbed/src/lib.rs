//! Mock REST APIs and scripted model fixtures for end-to-end runs.

pub mod fixture;
pub mod mock;

use std::path::PathBuf;

pub use fixture::{build_full_knowledge_fixture, build_partial_fixture, compute_recall, route_vocabulary};
pub use mock::{ErrorMode, MockApiSpec, MockError, MockServer, RecordedRequest, SERVER_ERROR_BODY};

/// The `fixtures/` directory shipped with this crate.
pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Loads `fixtures/mock_apis/<name>.json`.
pub fn load_mock(name: &str) -> Result<MockApiSpec, MockError> {
    MockApiSpec::load(&fixtures_dir().join("mock_apis").join(format!("{name}.json")))
}

/// Names of the bundled mock APIs.
pub const MOCK_APIS: [&str; 6] = ["soccer", "weather", "currency", "words", "petstore", "quiet"];
/// The three themed mocks with ten routes and ten parameters each.
pub const THEMED_MOCKS: [&str; 3] = ["soccer", "weather", "currency"];

/// Path of the committed full-knowledge fixture for a bundled mock.
pub fn llm_fixture_path(name: &str) -> PathBuf {
    fixtures_dir().join("llm").join(format!("{name}.full.json"))
}
