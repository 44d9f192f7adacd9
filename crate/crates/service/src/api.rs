use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use ontodss::dsl::{list_slot_options, DslError, SlotContext};
use ontodss::kb::{Assertion, Ontology};
use ontodss::notify::OutboxRecord;
use ontodss::rules::{explain_individual, Explanation};
use ontodss::runtime::{Event, Runtime};

/// One loaded scenario. The revision is the kb's mutation counter.
pub struct Session {
    pub runtime: Runtime,
}

impl Session {
    pub fn new(runtime: Runtime) -> Self {
        Session { runtime }
    }

    pub fn revision(&self) -> u64 {
        self.runtime.kb.revision()
    }

    fn fence(&self, client: Option<u64>) -> Result<(), ApiError> {
        match client {
            Some(r) if r != self.revision() => Err(ApiError::Stale { client: r, current: self.revision() }),
            _ => Ok(()),
        }
    }
}

pub type Shared = Arc<Mutex<Session>>;

#[derive(Debug)]
pub enum ApiError {
    Stale { client: u64, current: u64 },
    Invalid(Vec<DslError>),
    NotFound(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::Stale { client, current } => (
                StatusCode::CONFLICT,
                json!({ "error": "stale revision", "client_revision": client, "revision": current }),
            ),
            ApiError::Invalid(diagnostics) => {
                (StatusCode::BAD_REQUEST, json!({ "error": "invalid rule text", "diagnostics": diagnostics }))
            }
            ApiError::NotFound(what) => (StatusCode::NOT_FOUND, json!({ "error": what })),
            ApiError::Internal(what) => (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": what })),
        };
        (status, Json(body)).into_response()
    }
}

pub fn router(session: Session) -> Router {
    router_for(Arc::new(Mutex::new(session)))
}

/// Router over a session the caller keeps a handle to.
pub fn router_for(state: Shared) -> Router {
    Router::new()
        .route("/schema", get(schema))
        .route("/rules", get(list_rules).post(add_rules))
        .route("/findings", get(findings))
        .route("/notifications", get(notifications))
        .route("/step", post(step))
        .route("/explanations/{id}", get(explanation))
        .with_state(state)
}

fn lock(state: &Shared) -> std::sync::MutexGuard<'_, Session> {
    state.lock().unwrap_or_else(|p| p.into_inner())
}

#[derive(Serialize)]
struct SchemaView {
    revision: u64,
    classes: Vec<ontodss::kb::ClassDef>,
    relations: Vec<ontodss::kb::RelationDef>,
    templates: Vec<ontodss::dsl::Template>,
    /// Choices the rule editor may offer, keyed by cursor context.
    slot_options: SlotOptions,
}

#[derive(Serialize)]
struct SlotOptions {
    /// Template slot (`template.slot`) to admissible classes.
    slots: BTreeMap<String, Vec<String>>,
    /// Class to relations usable inside its block.
    properties: BTreeMap<String, Vec<String>>,
}

async fn schema(State(state): State<Shared>) -> Result<Json<SchemaView>, ApiError> {
    let s = lock(&state);
    let kb = &s.runtime.kb;
    let mut slots = BTreeMap::new();
    for t in &s.runtime.templates {
        for slot in t.condition.iter().chain(&t.result) {
            let ctx = SlotContext::SlotClass { roots: slot.classes.clone() };
            let opts = list_slot_options(kb, &ctx).map_err(|e| ApiError::Internal(e.to_string()))?;
            slots.insert(format!("{}.{}", t.name, slot.name), opts);
        }
    }
    let mut properties = BTreeMap::new();
    for c in kb.classes() {
        let ctx = SlotContext::Property { class: c.name.clone() };
        let opts = list_slot_options(kb, &ctx).map_err(|e| ApiError::Internal(e.to_string()))?;
        properties.insert(c.name.clone(), opts);
    }
    Ok(Json(SchemaView {
        revision: s.revision(),
        classes: kb.classes().cloned().collect(),
        relations: kb.relations().cloned().collect(),
        templates: s.runtime.templates.clone(),
        slot_options: SlotOptions { slots, properties },
    }))
}

#[derive(Serialize)]
struct RuleView {
    id: String,
    template: String,
    text: String,
}

async fn list_rules(State(state): State<Shared>) -> Json<serde_json::Value> {
    let s = lock(&state);
    let rules: Vec<RuleView> = s
        .runtime
        .rules
        .iter()
        .map(|r| RuleView { id: r.rule.id.clone(), template: r.instance.template.clone(), text: r.instance.to_string() })
        .collect();
    Json(json!({ "revision": s.revision(), "rules": rules }))
}

#[derive(Deserialize)]
pub struct AddRules {
    pub text: String,
    #[serde(default)]
    pub revision: Option<u64>,
}

#[derive(Serialize)]
struct FindingView {
    id: String,
    classes: Vec<String>,
    facts: Vec<Assertion>,
    explanation: Option<Explanation>,
}

fn finding_view(kb: &Ontology, id: &str) -> FindingView {
    FindingView {
        id: id.to_string(),
        classes: kb.individual(id).map(|i| i.classes.into_iter().collect()).unwrap_or_default(),
        facts: kb.assertions().into_iter().filter(|a| a.fact.subject() == id).collect(),
        explanation: explain_individual(kb, id).ok(),
    }
}

async fn add_rules(State(state): State<Shared>, Json(req): Json<AddRules>) -> Result<Json<serde_json::Value>, ApiError> {
    let mut s = lock(&state);
    s.fence(req.revision)?;
    let (added, derived) = s.runtime.add_rules(&req.text).map_err(|e| ApiError::Invalid(vec![e]))?;
    let kb = &s.runtime.kb;
    let derived: Vec<FindingView> = derived.iter().map(|id| finding_view(kb, id)).collect();
    Ok(Json(json!({ "revision": s.revision(), "added": added, "derived": derived })))
}

async fn findings(State(state): State<Shared>) -> Json<serde_json::Value> {
    let s = lock(&state);
    let kb = &s.runtime.kb;
    let views: Vec<FindingView> = kb.instances_of("Finding").map(|id| finding_view(kb, id)).collect();
    Json(json!({ "revision": s.revision(), "findings": views }))
}

#[derive(Deserialize)]
pub struct UserFilter {
    pub user: Option<String>,
}

async fn notifications(
    State(state): State<Shared>,
    Query(filter): Query<UserFilter>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let s = lock(&state);
    let records = s.runtime.outbox_records().map_err(|e| ApiError::Internal(e.to_string()))?;
    let mut users: BTreeMap<String, Vec<OutboxRecord>> = BTreeMap::new();
    for r in records {
        if filter.user.as_ref().is_none_or(|u| *u == r.user) {
            users.entry(r.user.clone()).or_default().push(r);
        }
    }
    Ok(Json(json!({ "revision": s.revision(), "users": users })))
}

#[derive(Deserialize, Default)]
pub struct StepRequest {
    #[serde(default)]
    pub revision: Option<u64>,
}

#[derive(Serialize)]
struct StepView {
    tick: u32,
    events: Vec<Event>,
    quiescent: bool,
    revision: u64,
}

async fn step(State(state): State<Shared>, body: Option<Json<StepRequest>>) -> Result<Json<StepView>, ApiError> {
    let mut s = lock(&state);
    s.fence(body.and_then(|Json(b)| b.revision))?;
    let tick = s.runtime.clock.tick;
    let events = s.runtime.step();
    Ok(Json(StepView { tick, events, quiescent: s.runtime.quiescent(), revision: s.revision() }))
}

async fn explanation(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let s = lock(&state);
    let kb = &s.runtime.kb;
    if !kb.contains_individual(&id) {
        return Err(ApiError::NotFound(format!("no individual `{id}`")));
    }
    let tree = explain_individual(kb, &id).map_err(|e| ApiError::NotFound(e.to_string()))?;
    let leaves: Vec<Assertion> = tree.leaves().into_iter().cloned().collect();
    Ok(Json(json!({ "id": id, "explanation": tree, "leaves": leaves })))
}
