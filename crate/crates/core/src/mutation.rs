//! Seed bookkeeping, mutation operators, masking and instantiation.
//!
//! A mutation takes a valid seed, hides one section of it behind a mask
//! token, and later replaces that token with each candidate value the model
//! proposes. The two `remove_*` operators hide nothing: their template is the
//! final request.

use std::fmt;

use indexmap::{IndexMap, IndexSet};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ApiRequest, CanonicalKey, MaskToken};

/// Candidate added to every route-token fill so `/{id}` routes are reachable.
pub const AUTO_ROUTE_CANDIDATE: &str = "1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MutationError {
    #[error("seed list is empty")]
    EmptySeedList,
    #[error("route pool is empty")]
    EmptyRoutePool,
    #[error("no seed matches route `{0}`")]
    NoSeedOnRoute(String),
    #[error("operator {operator} is not applicable to `{seed}`")]
    OperatorNotApplicable {
        operator: MutationOperator,
        seed: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationOperator {
    AddRoute,
    RemoveRoute,
    ModifyRoute,
    ResetRoute,
    AddParameter,
    RemoveParameter,
    ModifyParameter,
    ModifyParameterName,
    ModifyParameterValue,
    ResetParameter,
}

impl MutationOperator {
    pub const ALL: [MutationOperator; 10] = [
        MutationOperator::AddRoute,
        MutationOperator::RemoveRoute,
        MutationOperator::ModifyRoute,
        MutationOperator::ResetRoute,
        MutationOperator::AddParameter,
        MutationOperator::RemoveParameter,
        MutationOperator::ModifyParameter,
        MutationOperator::ModifyParameterName,
        MutationOperator::ModifyParameterValue,
        MutationOperator::ResetParameter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MutationOperator::AddRoute => "add_route",
            MutationOperator::RemoveRoute => "remove_route",
            MutationOperator::ModifyRoute => "modify_route",
            MutationOperator::ResetRoute => "reset_route",
            MutationOperator::AddParameter => "add_parameter",
            MutationOperator::RemoveParameter => "remove_parameter",
            MutationOperator::ModifyParameter => "modify_parameter",
            MutationOperator::ModifyParameterName => "modify_parameter_name",
            MutationOperator::ModifyParameterValue => "modify_parameter_value",
            MutationOperator::ResetParameter => "reset_parameter",
        }
    }

    /// The token this operator introduces; `None` for the removals.
    pub fn token(self) -> Option<MaskToken> {
        use MutationOperator::*;
        match self {
            RemoveRoute | RemoveParameter => None,
            AddRoute | ModifyRoute | ResetRoute => Some(MaskToken::Route),
            AddParameter | ModifyParameter | ResetParameter => Some(MaskToken::ParamPair),
            ModifyParameterName => Some(MaskToken::ParamName),
            ModifyParameterValue => Some(MaskToken::ParamValue),
        }
    }

    pub fn is_applicable(self, seed: &ApiRequest) -> bool {
        use MutationOperator::*;
        match self {
            RemoveRoute | ModifyRoute => !seed.path_segments.is_empty(),
            RemoveParameter | ModifyParameter | ModifyParameterName | ModifyParameterValue => {
                !seed.query_params.is_empty()
            }
            AddRoute | ResetRoute | AddParameter | ResetParameter => true,
        }
    }

    /// Number of sites the operator may target on `seed` (0 if not applicable).
    fn site_count(self, seed: &ApiRequest) -> usize {
        use MutationOperator::*;
        match self {
            ModifyRoute => seed.path_segments.len(),
            RemoveParameter | ModifyParameter | ModifyParameterName | ModifyParameterValue => {
                seed.query_params.len()
            }
            RemoveRoute => usize::from(!seed.path_segments.is_empty()),
            AddRoute | ResetRoute | AddParameter | ResetParameter => 1,
        }
    }
}

impl fmt::Display for MutationOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SelectionMode {
    #[serde(rename = "random-seed")]
    RandomSeed,
    #[default]
    #[serde(rename = "random-route")]
    RandomRoute,
}

/// Valid, unique requests plus the keys of requests found invalid.
#[derive(Debug, Clone, Default)]
pub struct SeedList {
    seeds: IndexMap<CanonicalKey, ApiRequest>,
    invalid_log: IndexSet<CanonicalKey>,
}

impl SeedList {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores a seed classified Valid; returns false if its key is known.
    pub fn insert_valid(&mut self, req: ApiRequest) -> bool {
        let key = req.canonical_key();
        if self.seeds.contains_key(&key) {
            return false;
        }
        self.seeds.insert(key, req);
        true
    }

    pub fn mark_invalid(&mut self, key: CanonicalKey) -> bool {
        self.invalid_log.insert(key)
    }

    pub fn is_invalid(&self, key: &CanonicalKey) -> bool {
        self.invalid_log.contains(key)
    }

    pub fn contains(&self, key: &CanonicalKey) -> bool {
        self.seeds.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn invalid_len(&self) -> usize {
        self.invalid_log.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ApiRequest> {
        self.seeds.values()
    }

    /// Distinct generalized routes of the stored seeds, in first-seen order.
    pub fn routes(&self) -> Vec<String> {
        let routes: IndexSet<String> = self.seeds.values().map(ApiRequest::route_key).collect();
        routes.into_iter().collect()
    }

    pub fn seeds_on_route(&self, route: &str) -> Vec<&ApiRequest> {
        self.seeds
            .values()
            .filter(|s| s.route_key() == route)
            .collect()
    }
}

/// Picks a seed: uniformly over all seeds, or uniformly over a route drawn
/// uniformly from `route_pool`.
pub fn select_seed<'a, R: Rng + ?Sized>(
    list: &'a SeedList,
    mode: SelectionMode,
    route_pool: &[String],
    rng: &mut R,
) -> Result<&'a ApiRequest, MutationError> {
    if list.is_empty() {
        return Err(MutationError::EmptySeedList);
    }
    match mode {
        SelectionMode::RandomSeed => {
            let index = rng.gen_range(0..list.len());
            Ok(&list.seeds[index])
        }
        SelectionMode::RandomRoute => {
            if route_pool.is_empty() {
                return Err(MutationError::EmptyRoutePool);
            }
            let route = &route_pool[rng.gen_range(0..route_pool.len())];
            let candidates = list.seeds_on_route(route);
            if candidates.is_empty() {
                return Err(MutationError::NoSeedOnRoute(route.clone()));
            }
            Ok(candidates[rng.gen_range(0..candidates.len())])
        }
    }
}

/// The section of the prototype request that holds the mask token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum MaskSlot {
    /// Nothing is masked (remove_* operators).
    None,
    Segment(usize),
    Pair(usize),
    PairName(usize),
    PairValue(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedRequest {
    pub base: ApiRequest,
    pub operator: MutationOperator,
    /// The seed after masking; the slot carries the token literal.
    pub prototype: ApiRequest,
    pub slot: MaskSlot,
    /// Index of the affected path segment or query pair in the seed.
    pub mask_site: usize,
    pub rendered_template: String,
}

impl MaskedRequest {
    pub fn token(&self) -> Option<MaskToken> {
        self.operator.token()
    }
}

fn render_template(prototype: &ApiRequest, slot: MaskSlot) -> String {
    let mut out = String::new();
    for segment in &prototype.path_segments {
        out.push('/');
        out.push_str(segment);
    }
    if out.is_empty() {
        out.push('/');
    }
    for (i, (name, value)) in prototype.query_params.iter().enumerate() {
        out.push(if i == 0 { '?' } else { '&' });
        if slot == MaskSlot::Pair(i) {
            out.push_str(MaskToken::ParamPair.literal());
        } else {
            out.push_str(name);
            out.push('=');
            out.push_str(value);
        }
    }
    out
}

/// Masks `seed` with `op`, choosing the target site uniformly at random.
pub fn apply_mask<R: Rng + ?Sized>(
    seed: &ApiRequest,
    op: MutationOperator,
    rng: &mut R,
) -> Result<MaskedRequest, MutationError> {
    let sites = op.site_count(seed);
    if sites == 0 {
        return Err(MutationError::OperatorNotApplicable {
            operator: op,
            seed: seed.render_relative(),
        });
    }
    let site = if sites == 1 { 0 } else { rng.gen_range(0..sites) };
    apply_mask_at(seed, op, site)
}

/// Masks `seed` at a given site index.
///
/// `site` is the segment index for `modify_route` and the pair index for the
/// parameter operators that target one pair; other operators ignore it.
pub fn apply_mask_at(
    seed: &ApiRequest,
    op: MutationOperator,
    site: usize,
) -> Result<MaskedRequest, MutationError> {
    use MutationOperator::*;
    let not_applicable = || MutationError::OperatorNotApplicable {
        operator: op,
        seed: seed.render_relative(),
    };
    if !op.is_applicable(seed) {
        return Err(not_applicable());
    }
    let pair_site = || {
        if site < seed.query_params.len() {
            Ok(site)
        } else {
            Err(not_applicable())
        }
    };

    let mut prototype = seed.clone();
    let route_token = MaskToken::Route.literal().to_string();
    let (slot, mask_site) = match op {
        AddRoute => {
            prototype.path_segments.push(route_token);
            let i = prototype.path_segments.len() - 1;
            (MaskSlot::Segment(i), i)
        }
        RemoveRoute => {
            prototype.path_segments.pop();
            (MaskSlot::None, seed.path_segments.len() - 1)
        }
        ModifyRoute => {
            if site >= seed.path_segments.len() {
                return Err(not_applicable());
            }
            prototype.path_segments[site] = route_token;
            (MaskSlot::Segment(site), site)
        }
        ResetRoute => {
            prototype.path_segments = vec![route_token];
            prototype.query_params.clear();
            (MaskSlot::Segment(0), 0)
        }
        AddParameter => {
            prototype.query_params.push((MaskToken::ParamPair.literal().into(), String::new()));
            let i = prototype.query_params.len() - 1;
            (MaskSlot::Pair(i), i)
        }
        RemoveParameter => {
            let i = pair_site()?;
            prototype.query_params.remove(i);
            (MaskSlot::None, i)
        }
        ModifyParameter => {
            let i = pair_site()?;
            prototype.query_params[i] = (MaskToken::ParamPair.literal().into(), String::new());
            (MaskSlot::Pair(i), i)
        }
        ModifyParameterName => {
            let i = pair_site()?;
            prototype.query_params[i].0 = MaskToken::ParamName.literal().into();
            (MaskSlot::PairName(i), i)
        }
        ModifyParameterValue => {
            let i = pair_site()?;
            prototype.query_params[i].1 = MaskToken::ParamValue.literal().into();
            (MaskSlot::PairValue(i), i)
        }
        ResetParameter => {
            prototype.query_params = vec![(MaskToken::ParamPair.literal().into(), String::new())];
            (MaskSlot::Pair(0), 0)
        }
    };

    let rendered_template = render_template(&prototype, slot);
    Ok(MaskedRequest {
        base: seed.clone(),
        operator: op,
        prototype,
        slot,
        mask_site,
        rendered_template,
    })
}

fn strip_quotes(s: &str) -> &str {
    let s = s.trim();
    for q in ['"', '\'', '`'] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return s[1..s.len() - 1].trim();
        }
    }
    s
}

/// Removes formatting noise from a model-proposed value.
pub fn clean_value(raw: &str, token: MaskToken) -> String {
    let value = strip_quotes(raw);
    match token {
        MaskToken::Route => value.trim_start_matches('/').trim_end_matches('/').to_string(),
        _ => value.to_string(),
    }
}

fn is_query_safe(s: &str) -> bool {
    !s.contains(['&', '#']) && !s.chars().any(char::is_whitespace)
}

/// Path segments for a route candidate, or `None` if it cannot be a route.
fn route_candidate(value: &str) -> Option<Vec<String>> {
    if value.is_empty()
        || value.contains(['?', '&', '#'])
        || value.chars().any(char::is_whitespace)
    {
        return None;
    }
    let segments: Vec<String> = value
        .split('/')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    (!segments.is_empty()).then_some(segments)
}

fn pair_candidate(value: &str) -> Option<(String, String)> {
    let (name, val) = value.split_once('=')?;
    let name = name.trim();
    let val = val.trim();
    (!name.is_empty() && is_query_safe(name) && !name.contains('=') && is_query_safe(val))
        .then(|| (name.to_string(), val.to_string()))
}

/// Builds one concrete request per usable candidate value.
pub fn instantiate(masked: &MaskedRequest, values: &[String]) -> Vec<ApiRequest> {
    let Some(token) = masked.token() else {
        return vec![masked.prototype.clone()];
    };

    let mut candidates: Vec<String> = values
        .iter()
        .map(|v| clean_value(v, token))
        .filter(|v| !v.is_empty() && !MaskToken::any_in(v))
        .collect();
    if token == MaskToken::Route && !candidates.iter().any(|c| c == AUTO_ROUTE_CANDIDATE) {
        candidates.push(AUTO_ROUTE_CANDIDATE.to_string());
    }

    let mut out: IndexMap<CanonicalKey, ApiRequest> = IndexMap::new();
    for candidate in &candidates {
        let mut req = masked.prototype.clone();
        let filled = match masked.slot {
            MaskSlot::None => unreachable!("token operators always carry a slot"),
            MaskSlot::Segment(i) => route_candidate(candidate).map(|segments| {
                req.path_segments.splice(i..=i, segments);
            }),
            MaskSlot::Pair(i) => pair_candidate(candidate).map(|pair| {
                req.query_params[i] = pair;
            }),
            MaskSlot::PairName(i) => (is_query_safe(candidate) && !candidate.contains('='))
                .then(|| req.query_params[i].0 = candidate.clone()),
            MaskSlot::PairValue(i) => {
                is_query_safe(candidate).then(|| req.query_params[i].1 = candidate.clone())
            }
        };
        if filled.is_some() {
            out.entry(req.canonical_key()).or_insert(req);
        }
    }
    out.into_values().collect()
}
