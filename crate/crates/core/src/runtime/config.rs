use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Role, RuntimeError};
use crate::notify::{Channel, MessagePolicy, RoutingRule, UserProfile};
use crate::olap::AnalysisModel;

/// When a scheduled task is due, counted in ticks from the start date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Period {
    Once,
    Every(u32),
}

impl Period {
    pub fn due(self, tick: u32) -> bool {
        match self {
            Period::Once => tick == 0,
            Period::Every(n) => tick.is_multiple_of(n),
        }
    }
}

impl FromStr for Period {
    type Err = String;

    /// `once`, `daily`, `every other day` or `every <n> days`.
    fn from_str(s: &str) -> Result<Self, String> {
        let words: Vec<&str> = s.split_whitespace().collect();
        match words.as_slice() {
            ["once"] => Ok(Period::Once),
            ["daily"] | ["every", "day"] => Ok(Period::Every(1)),
            ["every", "other", "day"] => Ok(Period::Every(2)),
            ["every", n, "days"] => match n.parse::<u32>() {
                Ok(n) if n > 0 => Ok(Period::Every(n)),
                _ => Err(format!("bad period `{s}`")),
            },
            _ => Err(format!("bad period `{s}`")),
        }
    }
}

impl TryFrom<String> for Period {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Period> for String {
    fn from(p: Period) -> String {
        match p {
            Period::Once => "once".into(),
            Period::Every(1) => "daily".into(),
            Period::Every(n) => format!("every {n} days"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledTask {
    pub role: Role,
    /// Analysis model to run, for OLAPA tasks.
    #[serde(default)]
    pub model: Option<String>,
    pub every: Period,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriggerAction {
    /// Ask OLAPA to rerun every model filtered on the brand of the new individuals.
    RebuildModels,
}

/// Sends `action` to `to` when individuals of `class` were asserted in a tick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trigger {
    pub class: String,
    pub to: Role,
    pub action: TriggerAction,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionPolicy {
    #[serde(default)]
    pub schedule: Vec<ScheduledTask>,
    #[serde(default, rename = "trigger")]
    pub triggers: Vec<Trigger>,
}

fn default_cap() -> u32 {
    50
}

fn all_channels() -> Vec<Channel> {
    Channel::ALL.to_vec()
}

/// Scenario file contents. Relative paths are resolved against the file's
/// directory by [`ScenarioConfig::load`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub start: NaiveDate,
    #[serde(default = "default_cap")]
    pub tick_cap: u32,
    pub schema: PathBuf,
    #[serde(default)]
    pub templates: Vec<PathBuf>,
    #[serde(default)]
    pub rules: Vec<PathBuf>,
    /// Star schema sidecar files.
    #[serde(default)]
    pub warehouse: Vec<PathBuf>,
    #[serde(default)]
    pub patterns: Option<PathBuf>,
    /// Directory of fixture pages served to IRA.
    #[serde(default)]
    pub pages: Option<PathBuf>,
    /// Dimensions IRA enriches with retrieved documents.
    #[serde(default)]
    pub enrich: Vec<String>,
    /// Data mining stub file read by DMA.
    #[serde(default)]
    pub dma: Option<PathBuf>,
    #[serde(default, rename = "model")]
    pub models: Vec<AnalysisModel>,
    #[serde(default)]
    pub policy: ExecutionPolicy,
    #[serde(default, rename = "profile")]
    pub profiles: Vec<UserProfile>,
    #[serde(default, rename = "route")]
    pub routes: Vec<RoutingRule>,
    #[serde(default, rename = "message")]
    pub messages: Vec<MessagePolicy>,
    /// Channels with an outbox sink.
    #[serde(default = "all_channels")]
    pub channels: Vec<Channel>,
}

impl ScenarioConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, RuntimeError> {
        let mut c: ScenarioConfig = toml::from_str(text).map_err(|e| RuntimeError::Config(e.to_string()))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut c.schema);
        c.templates.iter_mut().for_each(fix);
        c.rules.iter_mut().for_each(fix);
        c.warehouse.iter_mut().for_each(fix);
        c.patterns.iter_mut().for_each(fix);
        c.pages.iter_mut().for_each(fix);
        c.dma.iter_mut().for_each(fix);
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, RuntimeError> {
        let text = std::fs::read_to_string(path).map_err(|e| RuntimeError::Load { path: path.into(), message: e.to_string() })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}
