use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Dimension, Member, OlapError, StarSchema};
use crate::kb::{Assertion, Decimal, Fact, Ontology, Provenance, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Filter {
    pub dimension: String,
    pub member: String,
}

impl Filter {
    pub fn new(dimension: impl Into<String>, member: impl Into<String>) -> Self {
        Filter { dimension: dimension.into(), member: member.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub measure: String,
    #[serde(default)]
    pub filters: Vec<Filter>,
    /// `(dimension, level)` to group by; `None` gives only the total.
    #[serde(default)]
    pub group: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggregation {
    /// One entry per member of the grouping level, in level order.
    pub groups: Vec<(String, Decimal)>,
    pub total: Decimal,
    /// Fact rows that passed the filters; zero means the result is empty.
    pub rows: usize,
}

impl Aggregation {
    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }
}

fn resolve_filters<'a>(schema: &'a StarSchema, filters: &[Filter]) -> Result<Vec<(&'a Dimension, String)>, OlapError> {
    filters
        .iter()
        .map(|f| {
            let d = schema.dimension(&f.dimension)?;
            d.member(&f.member).ok_or_else(|| OlapError::UnknownMember {
                dimension: f.dimension.clone(),
                member: f.member.clone(),
            })?;
            Ok((d, f.member.clone()))
        })
        .collect()
}

/// Sums a measure over fact rows whose leaf members lie under every filter
/// member, optionally grouped by the members of one level.
pub fn aggregate(schema: &StarSchema, query: &Query) -> Result<Aggregation, OlapError> {
    schema.measure(&query.measure)?;
    let filters = resolve_filters(schema, &query.filters)?;
    let group = match &query.group {
        Some((dim, level)) => {
            let d = schema.dimension(dim)?;
            d.level_index(level)
                .ok_or_else(|| OlapError::UnknownLevel { dimension: dim.clone(), level: level.clone() })?;
            Some((d, level.as_str()))
        }
        None => None,
    };
    let mut groups: Vec<(String, Decimal)> = match group {
        Some((d, level)) => d.level_members(level).map(|m| (m.name.clone(), Decimal::default())).collect(),
        None => Vec::new(),
    };
    let mut total = Decimal::default();
    let mut rows = 0;
    for row in &schema.facts {
        let passes = filters.iter().all(|(d, member)| {
            row.members.get(&d.name).is_some_and(|leaf| d.descends_from(leaf, member))
        });
        if !passes {
            continue;
        }
        rows += 1;
        let v = row.values.get(&query.measure).copied().unwrap_or_default();
        total = total + v;
        if let Some((d, level)) = group {
            let leaf = &row.members[&d.name];
            let mut cur = d.member(leaf);
            while let Some(m) = cur {
                if m.level == level {
                    if let Some(g) = groups.iter_mut().find(|g| g.0 == m.name) {
                        g.1 = g.1 + v;
                    }
                    break;
                }
                cur = m.parent.as_deref().and_then(|p| d.member(p));
            }
        }
    }
    Ok(Aggregation { groups, total, rows })
}

fn default_time_dimension() -> String {
    "date".into()
}

fn default_threshold() -> Decimal {
    Decimal::from_int(5)
}

/// A configured, schedulable comparison of one measure across periods.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisModel {
    pub id: String,
    pub schema: String,
    pub measure: String,
    #[serde(default)]
    pub filters: Vec<Filter>,
    #[serde(default = "default_time_dimension")]
    pub time_dimension: String,
    /// Time level compared period over period, e.g. `quarter`.
    pub grain: String,
    /// Percentage points of change that count as an anomaly worth drilling.
    #[serde(default = "default_threshold")]
    pub threshold: Decimal,
    /// Replaces the period's own label in reports, e.g. `last month`.
    #[serde(default)]
    pub period_label: Option<String>,
    /// Run every this many days; `None` means on demand only.
    #[serde(default)]
    pub every_days: Option<u32>,
}

impl AnalysisModel {
    pub fn check(&self, schema: &StarSchema) -> Result<(), OlapError> {
        if self.threshold <= Decimal::default() {
            return Err(OlapError::Invalid(format!("model `{}` needs a positive threshold", self.id)));
        }
        schema.measure(&self.measure)?;
        resolve_filters(schema, &self.filters)?;
        let d = schema.dimension(&self.time_dimension)?;
        d.level_index(&self.grain).ok_or_else(|| OlapError::UnknownLevel {
            dimension: d.name.clone(),
            level: self.grain.clone(),
        })?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Risen,
    Fallen,
    Steady,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OlapFinding {
    pub id: String,
    pub model: String,
    pub measure: String,
    /// Non-time members the finding is about.
    pub context: Vec<Filter>,
    pub period: String,
    pub previous_period: String,
    pub direction: Direction,
    /// Rounded half-up to two places.
    pub percent_change: Decimal,
    pub current: Decimal,
    pub previous: Decimal,
    /// The model's name for the period, if it has one.
    #[serde(default)]
    pub period_label: Option<String>,
}

/// The member just before `member` on its level.
pub fn previous_period<'a>(dim: &'a Dimension, member: &str) -> Option<&'a Member> {
    let m = dim.member(member)?;
    let mut prev = None;
    for x in dim.level_members(&m.level) {
        if x.name == member {
            return prev;
        }
        prev = Some(x);
    }
    None
}

/// The latest period on `level` that ended before `now`.
pub fn last_complete_period<'a>(dim: &'a Dimension, level: &str, now: NaiveDate) -> Option<&'a Member> {
    dim.level_members(level).filter(|m| m.end.is_some_and(|e| e < now)).max_by_key(|m| m.end)
}

fn finding_for(
    model: &AnalysisModel,
    context: &[Filter],
    id: String,
    period: &str,
    schema: &StarSchema,
) -> Result<OlapFinding, OlapError> {
    let time = schema.dimension(&model.time_dimension)?;
    let member = time.member(period).ok_or_else(|| OlapError::UnknownMember {
        dimension: time.name.clone(),
        member: period.into(),
    })?;
    if member.level != model.grain {
        return Err(OlapError::Invalid(format!("`{period}` is not a {} of `{}`", model.grain, time.name)));
    }
    let prev = previous_period(time, period)
        .ok_or_else(|| OlapError::NoPreviousPeriod { member: period.into(), level: model.grain.clone() })?;
    let total = |p: &str| -> Result<Decimal, OlapError> {
        let mut filters = context.to_vec();
        filters.push(Filter::new(&time.name, p));
        Ok(aggregate(schema, &Query { measure: model.measure.clone(), filters, group: None })?.total)
    };
    let current = total(period)?;
    let previous = total(&prev.name)?;
    let percent_change = Decimal::percent_change(current, previous).ok_or_else(|| OlapError::UndefinedBaseline {
        model: model.id.clone(),
        period: period.into(),
        previous: prev.name.clone(),
    })?;
    let direction = match percent_change.scaled() {
        0 => Direction::Steady,
        x if x > 0 => Direction::Risen,
        _ => Direction::Fallen,
    };
    Ok(OlapFinding {
        id,
        model: model.id.clone(),
        measure: model.measure.clone(),
        context: context.to_vec(),
        period: period.into(),
        previous_period: prev.name.clone(),
        direction,
        percent_change,
        current,
        previous,
        period_label: model.period_label.clone(),
    })
}

/// Compares `period` with the period before it under the model's filters.
pub fn compute_finding(model: &AnalysisModel, period: &str, schema: &StarSchema) -> Result<OlapFinding, OlapError> {
    let id = format!("Finding_{}_{period}", model.id);
    finding_for(model, &model.filters, id, period, schema)
}

/// Re-runs an anomalous finding one level lower in each filtered dimension.
/// Children whose own change reaches the threshold are drilled further.
pub fn drill(model: &AnalysisModel, finding: &OlapFinding, schema: &StarSchema) -> Vec<OlapFinding> {
    let mut out = Vec::new();
    if finding.percent_change.abs() < model.threshold {
        return out;
    }
    for (i, f) in finding.context.iter().enumerate() {
        let Ok(dim) = schema.dimension(&f.dimension) else { continue };
        for child in dim.children(&f.member) {
            let mut context = finding.context.clone();
            context[i] = Filter::new(&f.dimension, &child.name);
            let id = format!("{}_{}", finding.id, child.name);
            // a child without a baseline has nothing to report
            let Ok(c) = finding_for(model, &context, id, &finding.period, schema) else { continue };
            let deeper = drill(model, &c, schema);
            out.push(c);
            out.extend(deeper);
        }
    }
    out
}

const REQUIRED_CLASSES: [&str; 5] = ["Finding", "Increase", "Decrease", "Measure", "Dimension"];

/// Adds each finding to the kb as an Increase/Decrease (or plain Finding
/// when steady) individual related to its measure, period and context
/// members. Returns the assertions that were new.
pub fn assert_findings(
    kb: &mut Ontology,
    schema: &StarSchema,
    findings: &[OlapFinding],
) -> Result<Vec<Assertion>, OlapError> {
    if let Some(c) = REQUIRED_CLASSES.iter().find(|c| kb.class(c).is_none()) {
        return Err(OlapError::MissingClass(c.to_string()));
    }
    let mut added = Vec::new();
    let mut put = |kb: &mut Ontology, fact: Fact| -> Result<(), OlapError> {
        let a = Assertion::new(fact, Provenance::Olap);
        if kb.assert_fact(a.clone())? {
            added.push(a);
        }
        Ok(())
    };
    for f in findings {
        let class = match f.direction {
            Direction::Risen => "Increase",
            Direction::Fallen => "Decrease",
            Direction::Steady => "Finding",
        };
        put(kb, Fact::instance(&f.id, class))?;
        put(kb, Fact::property(&f.id, "hasValue", Value::dec(f.percent_change)))?;
        put(kb, Fact::property(&f.id, "hasUnit", Value::str("%")))?;

        let measure = schema.measure(&f.measure)?;
        let mid = measure.kb.clone().unwrap_or_else(|| measure.name.clone());
        if !kb.contains_individual(&mid) {
            put(kb, Fact::instance(&mid, "Measure"))?;
            put(kb, Fact::property(&mid, "hasName", Value::str(measure.label.as_deref().unwrap_or(&measure.name))))?;
        }
        put(kb, Fact::property(&f.id, "relatedTo", Value::ind(&mid)))?;

        let model_time = schema
            .dimensions
            .iter()
            .find(|d| d.member(&f.period).is_some() && d.is_calendar())
            .ok_or_else(|| OlapError::UnknownMember { dimension: "time".into(), member: f.period.clone() })?;
        let period = model_time.member(&f.period).expect("found above");
        let pid = period.kb.clone().unwrap_or_else(|| period.name.clone());
        if !kb.contains_individual(&pid) {
            put(kb, Fact::instance(&pid, "Dimension"))?;
            if let Some(start) = period.start {
                put(kb, Fact::property(&pid, "hasDate", Value::date(start)))?;
            }
            put(kb, Fact::property(&pid, "hasName", Value::str(period.label())))?;
        }
        put(kb, Fact::property(&f.id, "relatedTo", Value::ind(&pid)))?;
        if let (Some(label), Some(_)) = (&f.period_label, kb.relation("hasPeriodLabel")) {
            put(kb, Fact::property(&f.id, "hasPeriodLabel", Value::str(label)))?;
        }

        for c in &f.context {
            let dim = schema.dimension(&c.dimension)?;
            let Some(member) = dim.member(&c.member) else { continue };
            let Some(kid) = member.kb.clone() else { continue };
            if !kb.contains_individual(&kid) {
                return Err(OlapError::Kb(crate::kb::KbError::UnknownIndividual(kid)));
            }
            put(kb, Fact::property(&f.id, "relatedTo", Value::ind(&kid)))?;
            let Some(element) = &dim.element_class else { continue };
            if kb.instance_holds(&kid, element) {
                continue;
            }
            // a coarser member (e.g. a brand): relate an aggregate element
            // carrying it as characteristic
            let agg = format!("{element}_{kid}");
            put(kb, Fact::instance(&agg, element))?;
            put(kb, Fact::property(&agg, "hasCharacteristic", Value::ind(&kid)))?;
            put(kb, Fact::property(&f.id, "relatedTo", Value::ind(&agg)))?;
        }
    }
    Ok(added)
}
