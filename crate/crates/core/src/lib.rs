//! Inference of OpenAPI documentation for REST APIs by masked-request
//! mutation, with language-model guesses for the masked parts.

pub mod config;
pub mod llm;
pub mod model;
pub mod mutation;
pub mod openapi;
pub mod orchestrator;
pub mod reporting;
pub mod transport;
pub mod verification;

pub use config::{load_config, parse_config, ConfigError, RunConfig};
pub use model::{ApiRequest, CanonicalKey, HttpMethod, MaskToken, TypeTag};
pub use verification::{classify_response, ApiResponse, Verdict, VerdictClass};
pub use openapi::{validate_openapi, Format, SpecDocument};
pub use orchestrator::{run, run_many, GroundTruth, RunError, RunOptions, RunOutcome};
pub use reporting::{render_status_summary, RunReport};
