use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{HttpMethod, MaskToken};

use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PromptKind {
    BaseData,
    RouteList,
    ParamList,
    MaskFill,
    PayloadExample,
    Description,
}

impl PromptKind {
    pub const ALL: [PromptKind; 6] = [
        PromptKind::BaseData,
        PromptKind::RouteList,
        PromptKind::ParamList,
        PromptKind::MaskFill,
        PromptKind::PayloadExample,
        PromptKind::Description,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::BaseData => "BASE_DATA",
            PromptKind::RouteList => "ROUTE_LIST",
            PromptKind::ParamList => "PARAM_LIST",
            PromptKind::MaskFill => "MASK_FILL",
            PromptKind::PayloadExample => "PAYLOAD_EXAMPLE",
            PromptKind::Description => "DESCRIPTION",
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything a template may draw on. Kinds declare which fields they need.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PromptContext {
    pub api_name: String,
    /// Generalized route, e.g. `/users/{id}`.
    pub route: Option<String>,
    pub masked_template: Option<String>,
    pub token: Option<MaskToken>,
    pub method: Option<HttpMethod>,
    pub parameter: Option<String>,
    /// Base-data field being re-asked (`server_url`, `documentation_url`).
    pub field: Option<String>,
    /// The rejected value from the previous attempt.
    pub previous_invalid: Option<String>,
}

impl PromptContext {
    pub fn new(api_name: impl Into<String>) -> Self {
        PromptContext {
            api_name: api_name.into(),
            ..Default::default()
        }
    }

    pub fn route(mut self, route: impl Into<String>) -> Self {
        self.route = Some(route.into());
        self
    }

    pub fn mask(mut self, template: impl Into<String>, token: MaskToken) -> Self {
        self.masked_template = Some(template.into());
        self.token = Some(token);
        self
    }

    pub fn method(mut self, method: HttpMethod) -> Self {
        self.method = Some(method);
        self
    }

    pub fn parameter(mut self, name: impl Into<String>) -> Self {
        self.parameter = Some(name.into());
        self
    }

    pub fn retry(mut self, field: impl Into<String>, previous: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self.previous_invalid = Some(previous.into());
        self
    }
}

/// A rendered prompt: its kind, a lookup digest for scripted backends, and the text.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Prompt {
    pub kind: PromptKind,
    /// `KIND|field|field...`, most significant field first.
    pub digest: String,
    pub text: String,
}

fn required<'a>(
    kind: PromptKind,
    name: &'static str,
    value: &'a Option<String>,
) -> Result<&'a str, LlmError> {
    value
        .as_deref()
        .ok_or(LlmError::MissingContext { kind, field: name })
}

fn token_noun(token: MaskToken) -> &'static str {
    match token {
        MaskToken::Route => "routes",
        MaskToken::ParamPair => "query parameters in the form parameter=value",
        MaskToken::ParamName => "query parameter names",
        MaskToken::ParamValue => "query parameter values",
    }
}

const LIST_ANSWER: &str = "Answer only with a JSON array of strings.";

pub fn build_prompt(kind: PromptKind, ctx: &PromptContext) -> Result<Prompt, LlmError> {
    let api = &ctx.api_name;
    let mut digest = vec![kind.as_str().to_string()];
    let text = match kind {
        PromptKind::BaseData => {
            let mut text = format!(
                "Give base data about the \"{api}\" REST API as a JSON object with the keys \
                 \"description\" (a short description of the API), \"documentation_url\" \
                 (the URL of its documentation) and \"server_url\" (the base URL of its server). \
                 Answer only with the JSON object."
            );
            if let Some(previous) = &ctx.previous_invalid {
                let field = required(kind, "field", &ctx.field)?;
                text.push_str(&format!(
                    " Note: the previous URL was invalid (\"{previous}\" for \"{field}\"); \
                     give a different, valid value for \"{field}\"."
                ));
                digest.push(field.to_string());
                digest.push(previous.clone());
            }
            text
        }
        PromptKind::RouteList => format!(
            "Give a list containing all routes that exist in the \"{api}\" REST API. {LIST_ANSWER}"
        ),
        PromptKind::ParamList => {
            let route = required(kind, "route", &ctx.route)?;
            digest.push(route.to_string());
            format!(
                "Give a list containing all query parameters that can be used with the route \
                 \"{route}\" and that exist in the \"{api}\" REST API. Write each one as \
                 parameter=value with an example value. {LIST_ANSWER}"
            )
        }
        PromptKind::MaskFill => {
            let template = required(kind, "masked_template", &ctx.masked_template)?;
            let token = ctx.token.ok_or(LlmError::MissingContext {
                kind,
                field: "token",
            })?;
            digest.push(token.literal().to_string());
            digest.push(ctx.route.clone().unwrap_or_default());
            digest.push(template.to_string());
            format!(
                "Return a list containing {noun} that can replace \"{token}\" in the following \
                 request: \"{template}\". The request is sent to the \"{api}\" REST API. {LIST_ANSWER}",
                noun = token_noun(token),
                token = token.literal(),
            )
        }
        PromptKind::PayloadExample => {
            let route = required(kind, "route", &ctx.route)?;
            let method = ctx.method.ok_or(LlmError::MissingContext {
                kind,
                field: "method",
            })?;
            digest.push(method.as_str().to_string());
            digest.push(route.to_string());
            format!(
                "Give a complete example of a data payload in the JSON format for a {method} \
                 request to the route \"{route}\" of the \"{api}\" REST API. \
                 Answer only with the JSON object."
            )
        }
        PromptKind::Description => {
            let route = required(kind, "route", &ctx.route)?;
            digest.push(route.to_string());
            let subject = match (ctx.method, &ctx.parameter) {
                (Some(m), Some(p)) => {
                    digest.push(m.as_str().to_string());
                    digest.push(p.clone());
                    format!("the query parameter \"{p}\" of the {m} \"{route}\" operation")
                }
                (Some(m), None) => {
                    digest.push(m.as_str().to_string());
                    format!("the {m} \"{route}\" operation")
                }
                (None, Some(p)) => {
                    digest.push(String::new());
                    digest.push(p.clone());
                    format!("the query parameter \"{p}\" of the route \"{route}\"")
                }
                (None, None) => format!("the route \"{route}\""),
            };
            format!(
                "Write a one-sentence human-readable description of {subject} in the \"{api}\" \
                 REST API. Answer only with the sentence."
            )
        }
    };
    Ok(Prompt {
        kind,
        digest: digest.join("|"),
        text,
    })
}
