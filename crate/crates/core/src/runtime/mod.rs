//! Deterministic multi-agent runtime driving the whole pipeline.
//!
//! Each tick runs the due scheduled tasks, then drains the mailboxes in the
//! fixed order IRA, DMA, OLAPA, KDA, NA, then fires kb-event triggers for the
//! individuals asserted during the tick. Envelopes sent to a role later in the
//! order are handled in the same tick; trigger envelopes wait for the next.
//! NA is only asked about individuals KDA derived, never about raw inputs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dsl::{self, DslError, DslErrorKind, Template, TemplateInstance};
use crate::kb::{load_ontology, Assertion, Fact, KbError, LoadError, Ontology, Value};
use crate::notify::{self, DeliveryPlan, MessageSpec, NotifyError, Outbox, OutboxRecord, Profiles, Status};
use crate::olap::{self, AnalysisModel, OlapError, StarSchema};
use crate::retrieval::{self, DirFetcher, Fetcher, PatternSet, RetrievalError, ShopRecord};
use crate::rules::{self, EngineConfig, EngineError, Rule};

mod config;
mod dma;

pub use config::{ExecutionPolicy, Period, ScenarioConfig, ScheduledTask, Trigger, TriggerAction};
pub use dma::dma_emit;

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error("scenario config: {0}")]
    Config(String),
    #[error("{}: {message}", .path.display())]
    Load { path: PathBuf, message: String },
    #[error("{}: {source}", .path.display())]
    Ontology { path: PathBuf, source: LoadError },
    #[error("{}:{}:{}: {}", .path.display(), .error.line, .error.column, .error)]
    Dsl { path: PathBuf, error: DslError },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Olap(#[from] OlapError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Notify(#[from] NotifyError),
    #[error("data mining stub row {row}: {message}")]
    Dma { row: usize, message: String },
    #[error("no mailbox for role `{0}`")]
    UnknownRecipient(Role),
    #[error("no quiescence within {0} ticks")]
    TickCap(u32),
}

/// Coarse error classes, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Parse,
    Validation,
    TickCap,
    Other,
}

impl RuntimeError {
    pub fn class(&self) -> ErrorClass {
        match self {
            RuntimeError::Config(_) | RuntimeError::Load { .. } => ErrorClass::Parse,
            RuntimeError::Ontology { source: LoadError::Parse(_), .. } => ErrorClass::Parse,
            RuntimeError::Dsl { error, .. } if error.kind == DslErrorKind::Syntax => ErrorClass::Parse,
            RuntimeError::Ontology { .. } | RuntimeError::Dsl { .. } => ErrorClass::Validation,
            RuntimeError::Engine(EngineError::Unsafe { .. }) | RuntimeError::Notify(_) => ErrorClass::Validation,
            RuntimeError::Olap(_) | RuntimeError::Retrieval(_) => ErrorClass::Validation,
            RuntimeError::TickCap(_) => ErrorClass::TickCap,
            _ => ErrorClass::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Ira,
    Dma,
    Olapa,
    Kda,
    Na,
}

impl Role {
    /// Mailbox drain order.
    pub const ORDER: [Role; 5] = [Role::Ira, Role::Dma, Role::Olapa, Role::Kda, Role::Na];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Ira => "ira",
            Role::Dma => "dma",
            Role::Olapa => "olapa",
            Role::Kda => "kda",
            Role::Na => "na",
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Performative {
    Request,
    Inform,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Content {
    /// Rerun the analysis models filtered on any of these brands.
    Rebuild { brands: Vec<String> },
    /// These individuals were newly asserted.
    Asserted { individuals: Vec<String> },
    /// Notify users about these individuals.
    Notify { individuals: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub id: String,
    pub sender: Role,
    pub recipient: Role,
    pub performative: Performative,
    pub content: Content,
    pub tick: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioClock {
    pub date: NaiveDate,
    pub tick: u32,
}

impl ScenarioClock {
    pub fn advance(&mut self) {
        self.tick += 1;
        self.date += Duration::days(1);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u32,
    pub date: NaiveDate,
    pub role: Role,
    pub kind: String,
    pub detail: serde_json::Value,
}

/// A rule loaded into the runtime, with its source instance when it came
/// from a rule file.
#[derive(Debug, Clone)]
pub struct LoadedRule {
    pub instance: TemplateInstance,
    pub rule: Rule,
}

pub struct Runtime {
    pub config: ScenarioConfig,
    pub kb: Ontology,
    pub clock: ScenarioClock,
    pub templates: Vec<Template>,
    pub rules: Vec<LoadedRule>,
    pub warehouse: BTreeMap<String, StarSchema>,
    pub patterns: Option<PatternSet>,
    pub profiles: Profiles,
    pub outbox: Outbox,
    pub shops: Vec<ShopRecord>,
    fetcher: Box<dyn Fetcher + Send + Sync>,
    mailboxes: BTreeMap<Role, VecDeque<Envelope>>,
    deferred: Vec<(MessageSpec, DeliveryPlan)>,
    log: Vec<Event>,
    next_envelope: u64,
    /// Class facts asserted during the current tick.
    tick_new: Vec<(String, String)>,
    tick_changed: bool,
}

fn read(path: &Path) -> Result<String, RuntimeError> {
    std::fs::read_to_string(path).map_err(|e| RuntimeError::Load { path: path.into(), message: e.to_string() })
}

fn new_individuals(added: &[Assertion]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    added
        .iter()
        .filter_map(|a| match &a.fact {
            Fact::Instance { individual, .. } if seen.insert(individual.clone()) => Some(individual.clone()),
            _ => None,
        })
        .collect()
}

impl Runtime {
    /// Loads everything the config names and checks it, without running.
    pub fn new(config: ScenarioConfig, outbox_dir: impl Into<PathBuf>) -> Result<Self, RuntimeError> {
        let kb = load_ontology(&read(&config.schema)?)
            .map_err(|source| RuntimeError::Ontology { path: config.schema.clone(), source })?;
        let mut templates = Vec::new();
        for p in &config.templates {
            templates.extend(
                dsl::parse_templates(&read(p)?, &kb).map_err(|error| RuntimeError::Dsl { path: p.clone(), error })?,
            );
        }
        let mut rules = Vec::new();
        for p in &config.rules {
            let text = read(p)?;
            rules.extend(Self::compile_rules(&text, &templates, &kb).map_err(|error| RuntimeError::Dsl { path: p.clone(), error })?);
        }
        let mut warehouse = BTreeMap::new();
        for p in &config.warehouse {
            let s = StarSchema::load(p)?;
            warehouse.insert(s.name.clone(), s);
        }
        for m in &config.models {
            let s = warehouse
                .get(&m.schema)
                .ok_or_else(|| RuntimeError::Config(format!("model `{}`: unknown star schema `{}`", m.id, m.schema)))?;
            m.check(s)?;
        }
        let patterns = config.patterns.as_deref().map(PatternSet::load).transpose()?;
        for t in &config.policy.schedule {
            match (&t.role, &t.model) {
                (Role::Olapa, Some(m)) if config.models.iter().any(|x| &x.id == m) => {}
                (Role::Olapa, _) => return Err(RuntimeError::Config(format!("OLAPA task needs a known model, got {:?}", t.model))),
                (Role::Ira, _) if patterns.is_none() => return Err(RuntimeError::Config("IRA task without a pattern file".into())),
                (Role::Dma, _) if config.dma.is_none() => return Err(RuntimeError::Config("DMA task without a stub file".into())),
                _ => {}
            }
        }
        for t in &config.policy.triggers {
            if kb.class(&t.class).is_none() {
                return Err(RuntimeError::Config(format!("trigger on unknown class `{}`", t.class)));
            }
        }
        for m in &config.messages {
            if kb.class(&m.class).is_none() {
                return Err(RuntimeError::Config(format!("message policy on unknown class `{}`", m.class)));
            }
        }
        for r in &config.routes {
            r.check()?;
        }
        let profiles = Profiles::new(config.profiles.clone())?;
        let fetcher: Box<dyn Fetcher + Send + Sync> =
            Box::new(DirFetcher::new(config.pages.clone().unwrap_or_else(|| PathBuf::from("pages"))));
        let outbox = Outbox::new(outbox_dir, config.channels.iter().copied());
        Ok(Runtime {
            clock: ScenarioClock { date: config.start, tick: 0 },
            config,
            kb,
            templates,
            rules,
            warehouse,
            patterns,
            profiles,
            outbox,
            shops: Vec::new(),
            fetcher,
            mailboxes: Role::ORDER.iter().map(|r| (*r, VecDeque::new())).collect(),
            deferred: Vec::new(),
            log: Vec::new(),
            next_envelope: 0,
            tick_new: Vec::new(),
            tick_changed: false,
        })
    }

    pub fn load(path: &Path, outbox_dir: impl Into<PathBuf>) -> Result<Self, RuntimeError> {
        Self::new(ScenarioConfig::load(path)?, outbox_dir)
    }

    pub fn with_fetcher(mut self, fetcher: Box<dyn Fetcher + Send + Sync>) -> Self {
        self.fetcher = fetcher;
        self
    }

    /// Parses, validates and compiles rule text; DL-safety is checked too.
    pub fn compile_rules(text: &str, templates: &[Template], kb: &Ontology) -> Result<Vec<LoadedRule>, DslError> {
        dsl::parse_rules(text, templates, kb)?
            .into_iter()
            .map(|instance| dsl::compile(&instance, kb).map(|rule| LoadedRule { instance, rule }))
            .collect()
    }

    pub fn log(&self) -> &[Event] {
        &self.log
    }

    /// Event log as JSON lines.
    pub fn log_jsonl(&self) -> String {
        self.log.iter().map(|e| serde_json::to_string(e).expect("events serialize") + "\n").collect()
    }

    pub fn mailbox(&self, role: Role) -> Option<&VecDeque<Envelope>> {
        self.mailboxes.get(&role)
    }

    /// Limits the runtime to these roles; envelopes for others are refused.
    pub fn register_only(&mut self, roles: &[Role]) {
        self.mailboxes.retain(|r, _| roles.contains(r));
    }

    pub fn is_idle(&self) -> bool {
        self.mailboxes.values().all(VecDeque::is_empty) && self.deferred.is_empty()
    }

    pub fn dispatch(&mut self, sender: Role, recipient: Role, content: Content) -> Result<(), RuntimeError> {
        let performative = match content {
            Content::Asserted { .. } => Performative::Inform,
            _ => Performative::Request,
        };
        let env = Envelope {
            id: format!("e{}", self.next_envelope),
            sender,
            recipient,
            performative,
            content,
            tick: self.clock.tick,
        };
        let tick = self.clock.tick;
        let date = self.clock.date;
        let mailbox = self.mailboxes.get_mut(&recipient).ok_or(RuntimeError::UnknownRecipient(recipient))?;
        self.next_envelope += 1;
        self.log.push(Event { tick, date, role: sender, kind: "dispatch".into(), detail: json!(env) });
        mailbox.push_back(env);
        self.tick_changed = true;
        Ok(())
    }

    fn event(&mut self, role: Role, kind: &str, detail: serde_json::Value) {
        self.log.push(Event { tick: self.clock.tick, date: self.clock.date, role, kind: kind.into(), detail });
    }

    fn record(&mut self, role: Role, added: &[Assertion]) -> Vec<String> {
        if added.is_empty() {
            return vec![];
        }
        self.tick_changed = true;
        for a in added {
            if let Fact::Instance { individual, class } = &a.fact {
                self.tick_new.push((individual.clone(), class.clone()));
            }
        }
        let inds = new_individuals(added);
        self.event(role, "asserted", json!({ "count": added.len(), "individuals": inds }));
        inds
    }

    /// Advances one tick and returns the events it produced.
    pub fn step(&mut self) -> Vec<Event> {
        let first = self.log.len();
        self.tick_new.clear();
        self.tick_changed = false;

        let mut due: Vec<ScheduledTask> =
            self.config.policy.schedule.iter().filter(|t| t.every.due(self.clock.tick)).cloned().collect();
        due.sort_by_key(|t| t.role);
        for t in due {
            self.event(t.role, "task", json!({ "model": t.model, "every": t.every }));
            let res = match t.role {
                Role::Ira => self.ira_scan(),
                Role::Dma => self.dma_task(),
                Role::Olapa => self.olapa_run(t.model.as_deref().into_iter().map(String::from).collect()),
                Role::Kda => self.kda(),
                Role::Na => Ok(()),
            };
            if let Err(e) = res {
                self.event(t.role, "error", json!(e.to_string()));
            }
        }

        for role in Role::ORDER {
            if role == Role::Na {
                if let Err(e) = self.flush_deferred() {
                    self.event(role, "error", json!(e.to_string()));
                }
            }
            let Some(mb) = self.mailboxes.get_mut(&role) else { continue };
            let batch: Vec<Envelope> = mb.drain(..).collect();
            if batch.is_empty() {
                continue;
            }
            self.tick_changed = true;
            let res = self.handle(role, batch);
            if let Err(e) = res {
                self.event(role, "error", json!(e.to_string()));
            }
        }

        self.fire_triggers();
        self.clock.advance();
        self.log[first..].to_vec()
    }

    /// True when the last step changed nothing and nothing is queued.
    pub fn quiescent(&self) -> bool {
        !self.tick_changed && self.is_idle()
    }

    /// Steps until quiescence.
    pub fn run(&mut self) -> Result<u32, RuntimeError> {
        loop {
            if self.clock.tick >= self.config.tick_cap {
                return Err(RuntimeError::TickCap(self.config.tick_cap));
            }
            self.step();
            if self.quiescent() {
                return Ok(self.clock.tick);
            }
        }
    }

    fn handle(&mut self, role: Role, batch: Vec<Envelope>) -> Result<(), RuntimeError> {
        let mut brands = BTreeSet::new();
        let mut individuals = Vec::new();
        for env in batch {
            match (role, env.content) {
                (Role::Olapa, Content::Rebuild { brands: b }) => brands.extend(b),
                (Role::Kda, Content::Asserted { individuals: i }) | (Role::Na, Content::Notify { individuals: i }) => {
                    individuals.extend(i)
                }
                (_, other) => self.event(role, "ignored", json!(other)),
            }
        }
        match role {
            Role::Olapa if !brands.is_empty() => {
                let models: Vec<String> = self
                    .config
                    .models
                    .iter()
                    .filter(|m| self.model_mentions(m, &brands))
                    .map(|m| m.id.clone())
                    .collect();
                self.event(role, "rebuild", json!({ "brands": brands, "models": models }));
                self.olapa_run(models)
            }
            Role::Kda => self.kda(),
            Role::Na => self.notify(individuals),
            _ => Ok(()),
        }
    }

    fn model_mentions(&self, model: &AnalysisModel, brands: &BTreeSet<String>) -> bool {
        let Some(schema) = self.warehouse.get(&model.schema) else { return false };
        model.filters.iter().any(|f| {
            schema
                .dimension(&f.dimension)
                .ok()
                .and_then(|d| d.member(&f.member))
                .is_some_and(|m| brands.contains(m.kb.as_deref().unwrap_or(&m.name)))
        })
    }

    fn ira_scan(&mut self) -> Result<(), RuntimeError> {
        let patterns = self.patterns.clone().ok_or_else(|| RuntimeError::Config("no pattern file".into()))?;
        let date = self.clock.date;
        let (found, diags) = retrieval::discover_shops(&patterns.discovery, &self.shops, self.fetcher.as_ref(), date)?;
        for d in diags {
            self.event(Role::Ira, "diagnostic", json!(d));
        }
        if !found.is_empty() {
            self.event(Role::Ira, "shops", json!(found.iter().map(|s| &s.id).collect::<Vec<_>>()));
            self.shops.extend(found);
        }
        let mut obs = Vec::new();
        for shop in self.shops.clone() {
            for search in &patterns.searches {
                for q in &patterns.queries {
                    let (o, diags) = retrieval::scrape(&shop, search, q, self.fetcher.as_ref(), date)?;
                    for d in diags {
                        self.event(Role::Ira, "diagnostic", json!(d));
                    }
                    obs.extend(o);
                }
            }
        }
        let found = retrieval::detect_new_phones(&obs, &mut self.kb, date)?;
        if !found.phones.is_empty() {
            self.event(Role::Ira, "new-phones", json!({ "phones": found.phones, "unknown_brands": found.unknown_brands }));
        }
        let mut added = found.assertions;
        for name in self.config.enrich.clone() {
            for schema in self.warehouse.values() {
                let Ok(dim) = schema.dimension(&name) else { continue };
                let (docs, diags) = retrieval::enrich_dimension(&mut self.kb, dim, self.fetcher.as_ref(), &patterns.snippets)?;
                for d in diags {
                    self.log.push(Event { tick: self.clock.tick, date, role: Role::Ira, kind: "diagnostic".into(), detail: json!(d) });
                }
                added.extend(docs);
            }
        }
        let inds = self.record(Role::Ira, &added);
        if !inds.is_empty() {
            self.dispatch(Role::Ira, Role::Kda, Content::Asserted { individuals: inds })?;
        }
        Ok(())
    }

    fn dma_task(&mut self) -> Result<(), RuntimeError> {
        let path = self.config.dma.clone().ok_or_else(|| RuntimeError::Config("no stub file".into()))?;
        let added = dma_emit(&read(&path)?, &mut self.kb)?;
        let inds = self.record(Role::Dma, &added);
        if !inds.is_empty() {
            self.dispatch(Role::Dma, Role::Kda, Content::Asserted { individuals: inds })?;
        }
        Ok(())
    }

    fn olapa_run(&mut self, models: Vec<String>) -> Result<(), RuntimeError> {
        let mut added = Vec::new();
        for id in models {
            let model = self.config.models.iter().find(|m| m.id == id).cloned().expect("checked at load");
            let schema = &self.warehouse[&model.schema];
            let time = schema.dimension(&model.time_dimension)?;
            let Some(period) = olap::last_complete_period(time, &model.grain, self.clock.date) else {
                self.event(Role::Olapa, "diagnostic", json!(format!("model `{id}`: no complete {} yet", model.grain)));
                continue;
            };
            let period = period.name.clone();
            let finding = match olap::compute_finding(&model, &period, schema) {
                Ok(f) => f,
                Err(e) => {
                    self.event(Role::Olapa, "diagnostic", json!(format!("model `{id}`: {e}")));
                    continue;
                }
            };
            let children = olap::drill(&model, &finding, schema);
            let summary = |f: &olap::OlapFinding| {
                json!({ "id": f.id, "direction": f.direction, "percent_change": f.percent_change.to_fixed(2),
                        "current": f.current.to_string(), "previous": f.previous.to_string() })
            };
            let detail = json!({ "finding": summary(&finding), "drill": children.iter().map(summary).collect::<Vec<_>>() });
            let schema = &self.warehouse[&model.schema];
            added.extend(olap::assert_findings(&mut self.kb, schema, std::slice::from_ref(&finding))?);
            self.event(Role::Olapa, "finding", detail);
        }
        let inds = self.record(Role::Olapa, &added);
        if !inds.is_empty() {
            self.dispatch(Role::Olapa, Role::Kda, Content::Asserted { individuals: inds })?;
        }
        Ok(())
    }

    fn kda(&mut self) -> Result<(), RuntimeError> {
        let rules: Vec<Rule> = self.rules.iter().map(|r| r.rule.clone()).collect();
        let outcome = rules::run_to_fixpoint(&mut self.kb, &rules, &EngineConfig::new(self.clock.date))?;
        for d in &outcome.diagnostics {
            self.event(Role::Kda, "diagnostic", json!(d));
        }
        let produced: Vec<Assertion> = outcome.derivations.iter().flat_map(|d| d.produced.clone()).collect();
        for d in &outcome.derivations {
            let inds = new_individuals(&d.produced);
            self.event(Role::Kda, "derived", json!({ "rule": d.rule, "individuals": inds, "count": d.produced.len() }));
        }
        let derived = self.record(Role::Kda, &produced);
        if !derived.is_empty() {
            self.dispatch(Role::Kda, Role::Na, Content::Notify { individuals: derived })?;
        }
        Ok(())
    }

    fn notify(&mut self, individuals: Vec<String>) -> Result<(), RuntimeError> {
        let messages = notify::messages_for(&self.kb, &individuals, &self.config.messages, self.clock.date);
        for msg in messages {
            let (plan, diags) = notify::route(&msg, &self.profiles, &self.config.routes, self.outbox.sinks());
            for d in diags {
                self.event(Role::Na, "diagnostic", json!(d));
            }
            let (now, later) = plan.defer_quiet(&self.profiles, self.clock.date);
            if !later.entries.is_empty() {
                self.event(Role::Na, "deferred", json!({ "message": msg.id, "users": later.users() }));
                self.deferred.push((msg.clone(), later));
            }
            self.deliver(&msg, &now)?;
        }
        Ok(())
    }

    fn flush_deferred(&mut self) -> Result<(), RuntimeError> {
        let pending = std::mem::take(&mut self.deferred);
        for (msg, plan) in pending {
            let (now, later) = plan.defer_quiet(&self.profiles, self.clock.date);
            if !later.entries.is_empty() {
                self.deferred.push((msg.clone(), later));
            }
            self.deliver(&msg, &now)?;
        }
        Ok(())
    }

    fn deliver(&mut self, msg: &MessageSpec, plan: &DeliveryPlan) -> Result<(), RuntimeError> {
        if plan.entries.is_empty() {
            return Ok(());
        }
        let kb = &self.kb;
        let explanations = msg
            .findings
            .iter()
            .map(|f| rules::explain_individual(kb, f))
            .collect::<Result<Vec<_>, _>>()?;
        let records = self.outbox.deliver(msg, plan, |r| notify::render(kb, msg, r, &explanations), self.clock.date)?;
        for r in records {
            self.tick_changed = true;
            self.event(
                Role::Na,
                "delivered",
                json!({ "message": r.message, "user": r.user, "channel": r.channel, "rendering": r.rendering,
                        "ok": r.status == Status::Delivered }),
            );
        }
        Ok(())
    }

    fn fire_triggers(&mut self) {
        for t in self.config.policy.triggers.clone() {
            let hits: BTreeSet<String> = self
                .tick_new
                .iter()
                .filter(|(_, c)| self.kb.is_subclass_of(c, &t.class))
                .map(|(i, _)| i.clone())
                .collect();
            if hits.is_empty() {
                continue;
            }
            let content = match t.action {
                TriggerAction::RebuildModels => {
                    let brands: BTreeSet<String> = hits
                        .iter()
                        .flat_map(|i| self.kb.objects(i, "hasCharacteristic").filter_map(Value::as_individual).map(String::from).collect::<Vec<_>>())
                        .collect();
                    if brands.is_empty() {
                        continue;
                    }
                    Content::Rebuild { brands: brands.into_iter().collect() }
                }
            };
            self.event(Role::Kda, "trigger", json!({ "class": t.class, "individuals": hits }));
            if let Err(e) = self.dispatch(Role::Kda, t.to, content) {
                self.event(Role::Kda, "error", json!(e.to_string()));
            }
        }
    }

    /// Adds rules from text and reruns the fixpoint; new derivations are
    /// queued for notification. Returns the ids of the added rules and of
    /// the individuals derived.
    pub fn add_rules(&mut self, text: &str) -> Result<(Vec<String>, Vec<String>), DslError> {
        let loaded = Self::compile_rules(text, &self.templates, &self.kb)?;
        if let Some(dup) = loaded.iter().find(|l| self.rules.iter().any(|r| r.rule.id == l.rule.id)) {
            return Err(DslError {
                kind: DslErrorKind::DuplicateRule,
                line: 1,
                column: 1,
                phrase: dup.rule.id.clone(),
                message: format!("rule `{}` already exists", dup.rule.id),
            });
        }
        let ids = loaded.iter().map(|l| l.rule.id.clone()).collect();
        self.rules.extend(loaded);
        let before = self.log.len();
        if let Err(e) = self.kda() {
            self.event(Role::Kda, "error", json!(e.to_string()));
        }
        let derived = self.log[before..]
            .iter()
            .filter(|e| e.kind == "derived")
            .flat_map(|e| e.detail["individuals"].as_array().cloned().unwrap_or_default())
            .filter_map(|v| v.as_str().map(String::from))
            .collect();
        Ok((ids, derived))
    }

    pub fn outbox_records(&self) -> Result<Vec<OutboxRecord>, RuntimeError> {
        Ok(self.outbox.records()?)
    }
}

/// Everything a finished scenario produced.
pub struct ScenarioResult {
    pub kb: Ontology,
    pub log: Vec<Event>,
    pub outbox: Vec<OutboxRecord>,
    pub ticks: u32,
}

/// Loads the scenario, runs it to quiescence and collects the artifacts.
pub fn run_scenario(config: &Path, outbox_dir: &Path) -> Result<ScenarioResult, RuntimeError> {
    let mut rt = Runtime::load(config, outbox_dir)?;
    let ticks = rt.run()?;
    Ok(ScenarioResult { outbox: rt.outbox_records()?, log: rt.log, kb: rt.kb, ticks })
}
