//! A small star-schema warehouse and the OLAP agent's analyses over it.
//!
//! Dimensions are described in a TOML sidecar; fact rows come from CSV with
//! `dim:<dimension>=<leaf level>` and `measure:<name>` columns. A dimension
//! may be declared as a calendar, in which case year/quarter/month members
//! are generated for the given date range.

mod analysis;

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::kb::{Decimal, KbError};

pub use analysis::{
    aggregate, assert_findings, compute_finding, drill, last_complete_period, previous_period, Aggregation,
    AnalysisModel, Direction, Filter, OlapFinding, Query,
};

#[derive(Debug, thiserror::Error)]
pub enum OlapError {
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("dimension `{dimension}` has no level `{level}`")]
    UnknownLevel { dimension: String, level: String },
    #[error("dimension `{dimension}` has no member `{member}`")]
    UnknownMember { dimension: String, member: String },
    #[error("unknown measure `{0}`")]
    UnknownMeasure(String),
    #[error("no baseline for {model} at {period}: previous period {previous} is zero")]
    UndefinedBaseline { model: String, period: String, previous: String },
    #[error("{member} has no preceding period at level `{level}`")]
    NoPreviousPeriod { member: String, level: String },
    #[error("invalid star schema: {0}")]
    Invalid(String),
    #[error("kb schema lacks class `{0}` needed for findings")]
    MissingClass(String),
    #[error("fact row {row}: {message}")]
    Row { row: usize, message: String },
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub name: String,
    pub level: String,
    #[serde(default)]
    pub parent: Option<String>,
    /// Display text; defaults to the name.
    #[serde(default)]
    pub label: Option<String>,
    /// Individual this member stands for in the kb.
    #[serde(default)]
    pub kb: Option<String>,
    #[serde(default)]
    pub start: Option<NaiveDate>,
    #[serde(default)]
    pub end: Option<NaiveDate>,
}

impl Member {
    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    /// Levels from the top (coarsest) down to the leaf level.
    pub levels: Vec<String>,
    /// kb class whose individuals the leaf members stand for; findings on
    /// a coarser member are related to an aggregate individual of this class.
    #[serde(default)]
    pub element_class: Option<String>,
    pub members: Vec<Member>,
}

impl Dimension {
    pub fn member(&self, name: &str) -> Option<&Member> {
        self.members.iter().find(|m| m.name == name)
    }

    pub fn leaf_level(&self) -> &str {
        self.levels.last().map(String::as_str).unwrap_or("")
    }

    pub fn level_index(&self, level: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == level)
    }

    pub fn children<'a>(&'a self, name: &str) -> impl Iterator<Item = &'a Member> + 'a {
        let name = name.to_string();
        self.members.iter().filter(move |m| m.parent.as_deref() == Some(name.as_str()))
    }

    /// Members of a level in declaration order (chronological for calendars).
    pub fn level_members<'a>(&'a self, level: &str) -> impl Iterator<Item = &'a Member> + 'a {
        let level = level.to_string();
        self.members.iter().filter(move |m| m.level == level)
    }

    /// Whether `member` is `ancestor` or lies below it.
    pub fn descends_from(&self, member: &str, ancestor: &str) -> bool {
        let mut cur = Some(member);
        while let Some(m) = cur {
            if m == ancestor {
                return true;
            }
            cur = self.member(m).and_then(|m| m.parent.as_deref());
        }
        false
    }

    pub fn is_calendar(&self) -> bool {
        self.members.iter().all(|m| m.start.is_some() && m.end.is_some())
    }

    /// Year, quarter and month members covering `from..=to`.
    pub fn calendar(name: &str, from: NaiveDate, to: NaiveDate) -> Dimension {
        const MONTHS: [&str; 12] = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"];
        const MONTH_NAMES: [&str; 12] = [
            "January", "February", "March", "April", "May", "June", "July", "August", "September", "October",
            "November", "December",
        ];
        let first = |y: i32, m: u32| NaiveDate::from_ymd_opt(y, m, 1).unwrap();
        let last = |d: NaiveDate, months: u32| d.checked_add_months(Months::new(months)).unwrap().pred_opt().unwrap();
        let mut members = Vec::new();
        for y in from.year()..=to.year() {
            let ys = first(y, 1);
            members.push(Member {
                name: format!("Y{y}"),
                level: "year".into(),
                parent: None,
                label: Some(y.to_string()),
                kb: None,
                start: Some(ys),
                end: Some(last(ys, 12)),
            });
            for q in 0..4u32 {
                let qs = first(y, q * 3 + 1);
                if last(qs, 3) < from || qs > to {
                    continue;
                }
                let qname = format!("Q{}_{y}", q + 1);
                members.push(Member {
                    name: qname.clone(),
                    level: "quarter".into(),
                    parent: Some(format!("Y{y}")),
                    label: Some(format!("Q{}, {y}", q + 1)),
                    kb: None,
                    start: Some(qs),
                    end: Some(last(qs, 3)),
                });
                for m in q * 3..q * 3 + 3 {
                    let ms = first(y, m + 1);
                    if last(ms, 1) < from || ms > to {
                        continue;
                    }
                    members.push(Member {
                        name: format!("{}_{y}", MONTHS[m as usize]),
                        level: "month".into(),
                        parent: Some(qname.clone()),
                        label: Some(format!("{} {y}", MONTH_NAMES[m as usize])),
                        kb: None,
                        start: Some(ms),
                        end: Some(last(ms, 1)),
                    });
                }
            }
        }
        // keep each level chronological
        members.sort_by_key(|m| (m.level != "year", m.level != "quarter", m.start));
        Dimension {
            name: name.into(),
            levels: vec!["year".into(), "quarter".into(), "month".into()],
            element_class: None,
            members,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measure {
    pub name: String,
    pub unit: String,
    #[serde(default)]
    pub label: Option<String>,
    /// kb individual (a Measure) representing this measure.
    #[serde(default)]
    pub kb: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactRow {
    /// Leaf member per dimension.
    pub members: BTreeMap<String, String>,
    pub values: BTreeMap<String, Decimal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StarSchema {
    pub name: String,
    pub dimensions: Vec<Dimension>,
    pub measures: Vec<Measure>,
    pub facts: Vec<FactRow>,
}

#[derive(Debug, Deserialize)]
struct Sidecar {
    name: String,
    #[serde(default)]
    facts: Option<String>,
    #[serde(default, rename = "measure")]
    measures: Vec<Measure>,
    #[serde(default, rename = "dimension")]
    dimensions: Vec<SidecarDimension>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SidecarDimension {
    name: String,
    #[serde(default)]
    levels: Vec<String>,
    #[serde(default)]
    element_class: Option<String>,
    #[serde(default)]
    calendar: Option<CalendarRange>,
    #[serde(default, rename = "member")]
    members: Vec<Member>,
}

#[derive(Debug, Deserialize)]
struct CalendarRange {
    from: NaiveDate,
    to: NaiveDate,
}

impl StarSchema {
    pub fn dimension(&self, name: &str) -> Result<&Dimension, OlapError> {
        self.dimensions.iter().find(|d| d.name == name).ok_or_else(|| OlapError::UnknownDimension(name.into()))
    }

    pub fn measure(&self, name: &str) -> Result<&Measure, OlapError> {
        self.measures.iter().find(|m| m.name == name).ok_or_else(|| OlapError::UnknownMeasure(name.into()))
    }

    /// Builds a schema from sidecar text and fact CSV text.
    pub fn parse(sidecar: &str, facts_csv: &str) -> Result<StarSchema, OlapError> {
        let side: Sidecar = toml::from_str(sidecar)?;
        let dimensions = side
            .dimensions
            .into_iter()
            .map(|d| match d.calendar {
                Some(c) => {
                    let mut dim = Dimension::calendar(&d.name, c.from, c.to);
                    dim.element_class = d.element_class;
                    dim
                }
                None => Dimension { name: d.name, levels: d.levels, element_class: d.element_class, members: d.members },
            })
            .collect();
        let mut schema = StarSchema { name: side.name, dimensions, measures: side.measures, facts: Vec::new() };
        schema.facts = schema.parse_facts(facts_csv)?;
        schema.check()?;
        Ok(schema)
    }

    /// Loads a sidecar file; its `facts` key names the CSV file relative to it.
    pub fn load(sidecar_path: &Path) -> Result<StarSchema, OlapError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|source| OlapError::Io { path: p.display().to_string(), source })
        };
        let text = read(sidecar_path)?;
        let side: Sidecar = toml::from_str(&text)?;
        let csv_name = side.facts.ok_or_else(|| OlapError::Invalid("sidecar has no `facts` file".into()))?;
        let csv_path = sidecar_path.parent().unwrap_or(Path::new(".")).join(csv_name);
        StarSchema::parse(&text, &read(&csv_path)?)
    }

    fn parse_facts(&self, text: &str) -> Result<Vec<FactRow>, OlapError> {
        enum Col {
            Dim(String),
            Measure(String),
        }
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut cols = Vec::new();
        for h in reader.headers()?.iter() {
            if let Some(rest) = h.strip_prefix("dim:") {
                let (dim, level) = rest.split_once('=').unwrap_or((rest, ""));
                let d = self.dimension(dim)?;
                if !level.is_empty() && level != d.leaf_level() {
                    return Err(OlapError::Invalid(format!("column `{h}` must use leaf level `{}`", d.leaf_level())));
                }
                cols.push(Col::Dim(dim.to_string()));
            } else if let Some(m) = h.strip_prefix("measure:") {
                self.measure(m)?;
                cols.push(Col::Measure(m.to_string()));
            } else {
                return Err(OlapError::Invalid(format!("unrecognised column `{h}`")));
            }
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let mut row = FactRow { members: BTreeMap::new(), values: BTreeMap::new() };
            for (col, field) in cols.iter().zip(rec.iter()) {
                match col {
                    Col::Dim(d) => {
                        row.members.insert(d.clone(), field.to_string());
                    }
                    Col::Measure(m) => {
                        let v = Decimal::parse_localized(field)
                            .map_err(|e| OlapError::Row { row: i + 1, message: format!("{m}: {e}") })?;
                        row.values.insert(m.clone(), v);
                    }
                }
            }
            rows.push(row);
        }
        Ok(rows)
    }

    /// Checks the structural invariants: parent links go exactly one level
    /// up and fact rows name existing leaf members of every dimension.
    pub fn check(&self) -> Result<(), OlapError> {
        for d in &self.dimensions {
            if d.levels.is_empty() {
                return Err(OlapError::Invalid(format!("dimension `{}` has no levels", d.name)));
            }
            let mut seen = std::collections::BTreeSet::new();
            for m in &d.members {
                if !seen.insert(&m.name) {
                    return Err(OlapError::Invalid(format!("duplicate member `{}` in `{}`", m.name, d.name)));
                }
                let li = d.level_index(&m.level).ok_or_else(|| OlapError::UnknownLevel {
                    dimension: d.name.clone(),
                    level: m.level.clone(),
                })?;
                match (&m.parent, li) {
                    (None, 0) => {}
                    (Some(_), 0) => {
                        return Err(OlapError::Invalid(format!("top-level member `{}` has a parent", m.name)));
                    }
                    (None, _) => return Err(OlapError::Invalid(format!("member `{}` has no parent", m.name))),
                    (Some(p), _) => {
                        let parent = d.member(p).ok_or_else(|| OlapError::UnknownMember {
                            dimension: d.name.clone(),
                            member: p.clone(),
                        })?;
                        if d.level_index(&parent.level) != Some(li - 1) {
                            return Err(OlapError::Invalid(format!(
                                "parent `{p}` of `{}` is not on the level above",
                                m.name
                            )));
                        }
                    }
                }
            }
        }
        for (i, row) in self.facts.iter().enumerate() {
            for d in &self.dimensions {
                let name = row.members.get(&d.name).ok_or_else(|| OlapError::Row {
                    row: i + 1,
                    message: format!("no member for dimension `{}`", d.name),
                })?;
                match d.member(name) {
                    Some(m) if m.level == d.leaf_level() => {}
                    _ => {
                        return Err(OlapError::Row {
                            row: i + 1,
                            message: format!("`{name}` is not a leaf member of `{}`", d.name),
                        })
                    }
                }
            }
        }
        Ok(())
    }
}
