//! Routing findings to business users and keeping an outbox per channel.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::kb::Ontology;

mod render;

pub use render::{parse_fact_lines, render};

#[derive(Debug, thiserror::Error)]
pub enum NotifyError {
    #[error("duplicate user `{0}`")]
    DuplicateUser(String),
    #[error("user `{user}` has unknown superior `{superior}`")]
    UnknownSuperior { user: String, superior: String },
    #[error("superior chain through `{0}` is cyclic")]
    SuperiorCycle(String),
    #[error("user `{0}` has no channels or a repeated channel")]
    BadChannels(String),
    #[error("routing rule for topic `{0}` has no targets")]
    NoTargets(String),
    #[error("no sink configured for channel `{0}`")]
    NoSink(Channel),
    #[error("no explanation for `{0}`")]
    MissingExplanation(String),
    #[error("outbox: {0}")]
    Io(#[from] std::io::Error),
    #[error("outbox record: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Severity {
    Notification,
    Warning,
    CriticalAlert,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::Notification, Severity::Warning, Severity::CriticalAlert];

    pub fn label(self) -> &'static str {
        match self {
            Severity::Notification => "Notification",
            Severity::Warning => "Warning",
            Severity::CriticalAlert => "Critical alert",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OrgUnit {
    Marketing,
    Sales,
    HumanResources,
    #[serde(rename = "IT")]
    It,
    Finance,
    Executive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DecisionLevel {
    #[serde(rename = "CEO")]
    Ceo,
    #[serde(rename = "CIO")]
    Cio,
    #[serde(rename = "CFO")]
    Cfo,
    #[serde(rename = "CMO")]
    Cmo,
    #[serde(rename = "CAO")]
    Cao,
    #[serde(rename = "analyst")]
    Analyst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    Email,
    Sms,
    Rss,
    DesktopAlert,
    MobileAgent,
}

impl Channel {
    pub const ALL: [Channel; 5] = [Channel::Email, Channel::Sms, Channel::Rss, Channel::DesktopAlert, Channel::MobileAgent];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Email => "email",
            Channel::Sms => "sms",
            Channel::Rss => "rss",
            Channel::DesktopAlert => "desktop-alert",
            Channel::MobileAgent => "mobile-agent",
        }
    }

    /// Short channels get the one-line rendering.
    pub fn rendering(self) -> Rendering {
        match self {
            Channel::Sms | Channel::MobileAgent => Rendering::Truncated,
            _ => Rendering::Full,
        }
    }
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: String,
    pub unit: OrgUnit,
    pub level: DecisionLevel,
    #[serde(default)]
    pub superior: Option<String>,
    /// Most preferred first.
    pub channels: Vec<Channel>,
    /// Deliveries falling on these weekdays wait for the next allowed day.
    #[serde(default)]
    pub quiet_days: Vec<Weekday>,
}

/// A validated set of user profiles.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Profiles {
    users: BTreeMap<String, UserProfile>,
}

impl Profiles {
    pub fn new(users: Vec<UserProfile>) -> Result<Self, NotifyError> {
        let mut map = BTreeMap::new();
        for u in users {
            let distinct: BTreeSet<_> = u.channels.iter().collect();
            if u.channels.is_empty() || distinct.len() != u.channels.len() {
                return Err(NotifyError::BadChannels(u.id));
            }
            if map.contains_key(&u.id) {
                return Err(NotifyError::DuplicateUser(u.id));
            }
            map.insert(u.id.clone(), u);
        }
        for u in map.values() {
            if let Some(s) = &u.superior {
                if !map.contains_key(s) {
                    return Err(NotifyError::UnknownSuperior { user: u.id.clone(), superior: s.clone() });
                }
            }
            let mut seen = BTreeSet::from([u.id.as_str()]);
            let mut cur = u.superior.as_deref();
            while let Some(s) = cur {
                if !seen.insert(s) {
                    return Err(NotifyError::SuperiorCycle(u.id.clone()));
                }
                cur = map[s].superior.as_deref();
            }
        }
        Ok(Self { users: map })
    }

    pub fn get(&self, id: &str) -> Option<&UserProfile> {
        self.users.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &UserProfile> {
        self.users.values()
    }

    /// Everyone above `id` in the reporting chain, nearest first.
    pub fn superiors(&self, id: &str) -> Vec<&str> {
        let mut out = Vec::new();
        let mut cur = self.users.get(id).and_then(|u| u.superior.as_deref());
        while let Some(s) = cur {
            out.push(s);
            cur = self.users[s].superior.as_deref();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageSpec {
    pub id: String,
    pub severity: Severity,
    pub topic: String,
    /// Findings the message reports; each has an explanation tree in the kb.
    pub findings: Vec<String>,
    pub created: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub unit: OrgUnit,
    pub level: DecisionLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingRule {
    /// Exact topic, or `*` for any.
    pub topic: String,
    pub min_severity: Severity,
    pub targets: Vec<Target>,
}

impl RoutingRule {
    pub fn check(&self) -> Result<(), NotifyError> {
        if self.targets.is_empty() {
            return Err(NotifyError::NoTargets(self.topic.clone()));
        }
        Ok(())
    }

    fn matches(&self, msg: &MessageSpec) -> bool {
        (self.topic == "*" || self.topic == msg.topic) && msg.severity >= self.min_severity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rendering {
    Full,
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub user: String,
    pub channel: Channel,
    pub rendering: Rendering,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryPlan {
    pub entries: Vec<PlanEntry>,
}

impl DeliveryPlan {
    pub fn users(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.user.as_str()).collect()
    }

    /// Splits off entries whose user does not take deliveries on `day`.
    pub fn defer_quiet(self, profiles: &Profiles, day: NaiveDate) -> (DeliveryPlan, DeliveryPlan) {
        let (later, now): (Vec<_>, Vec<_>) = self
            .entries
            .into_iter()
            .partition(|e| profiles.get(&e.user).is_some_and(|u| u.quiet_days.contains(&day.weekday())));
        (DeliveryPlan { entries: now }, DeliveryPlan { entries: later })
    }
}

/// Recipients are users matching a rule for the message; for a critical
/// alert their superiors too. Each gets the first of their channels in
/// `available`.
pub fn route(
    msg: &MessageSpec,
    profiles: &Profiles,
    rules: &[RoutingRule],
    available: &BTreeSet<Channel>,
) -> (DeliveryPlan, Vec<String>) {
    let mut diags = Vec::new();
    let matching: Vec<&RoutingRule> = rules.iter().filter(|r| r.matches(msg)).collect();
    if matching.is_empty() {
        diags.push(format!("no routing rule for topic `{}` at {}", msg.topic, msg.severity.label()));
        return (DeliveryPlan::default(), diags);
    }
    let mut users: BTreeSet<&str> = profiles
        .iter()
        .filter(|u| matching.iter().any(|r| r.targets.iter().any(|t| t.unit == u.unit && t.level == u.level)))
        .map(|u| u.id.as_str())
        .collect();
    if msg.severity == Severity::CriticalAlert {
        let above: Vec<&str> = users.iter().flat_map(|u| profiles.superiors(u)).collect();
        users.extend(above);
    }
    let mut plan = DeliveryPlan::default();
    for id in users {
        let u = profiles.get(id).expect("selected from profiles");
        match u.channels.iter().find(|c| available.contains(c)) {
            Some(&channel) => plan.entries.push(PlanEntry { user: id.to_string(), channel, rendering: channel.rendering() }),
            None => diags.push(format!("user `{id}` has no available channel")),
        }
    }
    (plan, diags)
}

/// Which finding classes produce a message, and how loud.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessagePolicy {
    pub class: String,
    pub topic: String,
    pub severity: Severity,
}

/// Messages for individuals that newly became members of a policy class.
/// The first matching policy wins; message id is `Msg_<individual>`.
pub fn messages_for(
    kb: &Ontology,
    individuals: &[String],
    policies: &[MessagePolicy],
    today: NaiveDate,
) -> Vec<MessageSpec> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for id in individuals {
        if !seen.insert(id.as_str()) {
            continue;
        }
        if let Some(p) = policies.iter().find(|p| kb.instances_of(&p.class).any(|i| i == id)) {
            out.push(MessageSpec {
                id: format!("Msg_{id}"),
                severity: p.severity,
                topic: p.topic.clone(),
                findings: vec![id.clone()],
                created: today,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Delivered,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutboxRecord {
    pub message: String,
    pub user: String,
    pub channel: Channel,
    pub timestamp: NaiveDate,
    pub severity: Severity,
    pub rendering: Rendering,
    pub body: String,
    pub status: Status,
}

/// One JSON-lines file per channel sink under a directory.
#[derive(Debug, Clone)]
pub struct Outbox {
    dir: PathBuf,
    sinks: BTreeSet<Channel>,
}

impl Outbox {
    pub fn new(dir: impl Into<PathBuf>, sinks: impl IntoIterator<Item = Channel>) -> Self {
        Self { dir: dir.into(), sinks: sinks.into_iter().collect() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn sinks(&self) -> &BTreeSet<Channel> {
        &self.sinks
    }

    pub fn file(&self, channel: Channel) -> PathBuf {
        self.dir.join(format!("{channel}.jsonl"))
    }

    /// All records, channel by channel in file order.
    pub fn records(&self) -> Result<Vec<OutboxRecord>, NotifyError> {
        let mut out = Vec::new();
        for &c in &self.sinks {
            let path = self.file(c);
            if !path.is_file() {
                continue;
            }
            let text = std::fs::read_to_string(path)?;
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                out.push(serde_json::from_str(line)?);
            }
        }
        Ok(out)
    }

    /// Appends one record per plan entry not yet delivered for this message.
    /// A failed write is returned as a failed record and does not stop the rest.
    pub fn deliver(
        &self,
        msg: &MessageSpec,
        plan: &DeliveryPlan,
        body: impl Fn(Rendering) -> Result<String, NotifyError>,
        today: NaiveDate,
    ) -> Result<Vec<OutboxRecord>, NotifyError> {
        if let Some(e) = plan.entries.iter().find(|e| !self.sinks.contains(&e.channel)) {
            return Err(NotifyError::NoSink(e.channel));
        }
        let done: BTreeSet<(String, String)> = self
            .records()?
            .into_iter()
            .filter(|r| r.status == Status::Delivered)
            .map(|r| (r.message, r.user))
            .collect();
        let mut out = Vec::new();
        for e in &plan.entries {
            if done.contains(&(msg.id.clone(), e.user.clone())) {
                continue;
            }
            let mut rec = OutboxRecord {
                message: msg.id.clone(),
                user: e.user.clone(),
                channel: e.channel,
                timestamp: today,
                severity: msg.severity,
                rendering: e.rendering,
                body: body(e.rendering)?,
                status: Status::Delivered,
            };
            if self.append(&rec).is_err() {
                rec.status = Status::Failed;
            }
            out.push(rec);
        }
        Ok(out)
    }

    fn append(&self, rec: &OutboxRecord) -> Result<(), NotifyError> {
        std::fs::create_dir_all(&self.dir)?;
        let mut f = OpenOptions::new().create(true).append(true).open(self.file(rec.channel))?;
        writeln!(f, "{}", serde_json::to_string(rec)?)?;
        Ok(())
    }
}
