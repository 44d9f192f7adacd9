use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{MessageSpec, NotifyError, Rendering};
use crate::dsl::split_camel;
use crate::kb::{Assertion, Fact, Literal, Ontology, Value};
use crate::rules::Explanation;

const FACT_BULLET: &str = "    * ";
pub(crate) const ON_REQUEST: &str = "explanation available on request";

fn class_label(class: &str) -> String {
    let mut s = split_camel(class).join(" ");
    if let Some(f) = s.get(..1) {
        s = f.to_uppercase() + &s[1..];
    }
    s
}

fn string_of<'a>(kb: &'a Ontology, id: &str, rel: &str) -> Option<&'a str> {
    kb.objects(id, rel).find_map(|v| match v.as_literal() {
        Some(Literal::String(s)) => Some(s.as_str()),
        _ => None,
    })
}

/// Display name of an individual: its `hasName`, the spelled-out prefix of
/// a generated id, or the id with underscores as spaces.
fn label(kb: &Ontology, id: &str) -> String {
    if let Some(n) = string_of(kb, id, "hasName") {
        return n.to_string();
    }
    if let Some((prefix, hash)) = id.rsplit_once('_') {
        if hash.len() == 8 && hash.chars().all(|c| c.is_ascii_hexdigit()) {
            return split_camel(prefix).join(" ");
        }
    }
    id.replace('_', " ")
}

fn main_class(kb: &Ontology, id: &str) -> Option<String> {
    kb.direct_classes(id).and_then(|c| c.keys().next().cloned())
}

fn related<'a>(kb: &'a Ontology, id: &str, class: &str) -> Option<&'a str> {
    kb.objects(id, "relatedTo").filter_map(Value::as_individual).find(|t| kb.is_instance_of(t, class).unwrap_or(false))
}

fn value_text(kb: &Ontology, id: &str, abs: bool) -> Option<String> {
    let v = kb.objects(id, "hasValue").find_map(|v| match v.as_literal() {
        Some(Literal::Decimal(d)) => Some(*d),
        _ => None,
    })?;
    let v = if abs { v.abs() } else { v };
    let n = if v.scaled() % 10_000 == 0 { v.to_fixed(0) } else { v.to_comma_string() };
    Some(format!("{n}{}", string_of(kb, id, "hasUnit").unwrap_or("")))
}

/// `[Phone] by brand [Nokia]` for an aggregate element, `[Phone] [Nokia 6300]` otherwise.
fn element_phrase(kb: &Ontology, el: &str) -> String {
    let class = main_class(kb, el).unwrap_or_default();
    let chars: Vec<&str> = kb.objects(el, "hasCharacteristic").filter_map(Value::as_individual).collect();
    let generated = chars.len() == 1 && el == format!("{class}_{}", chars[0]);
    if generated {
        let kind = main_class(kb, chars[0]).unwrap_or_default();
        let kind = kind.strip_prefix(&class).filter(|k| !k.is_empty()).unwrap_or(&kind);
        format!("[{}] by {} [{}]", class_label(&class), class_label(kind).to_lowercase(), label(kb, chars[0]))
    } else {
        format!("[{}] [{}]", class_label(&class), label(kb, el))
    }
}

fn is(kb: &Ontology, id: &str, class: &str) -> bool {
    kb.class(class).is_some() && kb.is_instance_of(id, class).unwrap_or(false)
}

/// One sentence describing an individual.
fn sentence(kb: &Ontology, id: &str) -> String {
    let class = main_class(kb, id).unwrap_or_default();
    if let Some(base) = class.strip_prefix("New").filter(|b| kb.class(b).is_some()) {
        if !is(kb, id, "Finding") && !is(kb, id, "Customer") {
            return format!("New [{}] [{}] is available on the market.", class_label(base), label(kb, id));
        }
    }
    if is(kb, id, "Increase") || is(kb, id, "Decrease") {
        let measure = related(kb, id, "Measure");
        let period = related(kb, id, "Dimension");
        let element = kb
            .objects(id, "relatedTo")
            .filter_map(Value::as_individual)
            .find(|t| is(kb, t, "DomainSpecificElement") && !is(kb, t, "DomainSpecificCharacteristic"));
        let verb = if is(kb, id, "Increase") { "risen" } else { "fallen" };
        if let (Some(m), Some(p), Some(v)) = (measure, period, value_text(kb, id, true)) {
            let when = string_of(kb, id, "hasPeriodLabel").map(str::to_string).unwrap_or_else(|| label(kb, p));
            let of = element.map(|e| format!(" of {}", element_phrase(kb, e))).unwrap_or_default();
            return format!("[{}]{of} and by date [{when}] have [{verb} by {v}].", label(kb, m));
        }
    }
    if is(kb, id, "DiscountPrice") {
        let customer = related(kb, id, "Customer");
        let offered = kb
            .objects(id, "relatedTo")
            .filter_map(Value::as_individual)
            .find(|t| is(kb, t, "DomainSpecificElement") && !is(kb, t, "Customer"));
        if let (Some(c), Some(o), Some(v)) = (customer, offered, value_text(kb, id, false)) {
            let base = main_class(kb, o).unwrap_or_default();
            let base = base.strip_prefix("New").filter(|b| kb.class(b).is_some()).unwrap_or(&base);
            return format!(
                "[{}] [{}] should be offered to [{}] and offered at [{}] of [{v}].",
                class_label(base),
                label(kb, o),
                label(kb, c),
                label(kb, id)
            );
        }
    }
    let mut s = format!("[{}] is [{}]", label(kb, id), class_label(&class));
    if let Some(v) = value_text(kb, id, false) {
        s.push_str(&format!(" of [{v}]"));
    }
    s.push('.');
    s
}

/// Leaves grouped under the individuals that headline the report: new
/// products and findings first, then anything left, by subject.
fn group_leaves<'a>(kb: &Ontology, leaves: &[&'a Assertion]) -> Vec<(String, Vec<&'a Assertion>)> {
    let subjects: BTreeSet<&str> = leaves.iter().map(|a| a.fact.subject()).collect();
    let rank = |s: &str| {
        let class = main_class(kb, s).unwrap_or_default();
        if class.strip_prefix("New").is_some_and(|b| kb.class(b).is_some()) && !is(kb, s, "Finding") && !is(kb, s, "Customer") {
            0
        } else if is(kb, s, "Finding") {
            1
        } else {
            2
        }
    };
    let mut heads: Vec<&str> = subjects.iter().copied().filter(|s| rank(s) < 2).collect();
    heads.sort_by_key(|s| (rank(s), *s));

    let mut edges: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for a in leaves {
        if let Fact::Property { subject, object: Value::Individual(o), .. } = &a.fact {
            edges.entry(subject.as_str()).or_default().push(o.as_str());
        }
    }
    // first head to reach a subject owns it
    let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
    for &h in &heads {
        let mut queue = VecDeque::from([h]);
        while let Some(s) = queue.pop_front() {
            if owner.contains_key(s) && s != h {
                continue;
            }
            if heads.contains(&s) && s != h {
                continue;
            }
            owner.entry(s).or_insert(h);
            for &n in edges.get(s).into_iter().flatten() {
                if !owner.contains_key(n) {
                    queue.push_back(n);
                }
            }
        }
    }
    let mut groups: Vec<(String, Vec<&Assertion>)> = heads.iter().map(|h| (h.to_string(), vec![])).collect();
    for a in leaves {
        let s = a.fact.subject();
        let key = owner.get(s).copied().unwrap_or(s);
        match groups.iter_mut().find(|(h, _)| h == key) {
            Some((_, g)) => g.push(a),
            None => groups.push((key.to_string(), vec![a])),
        }
    }
    groups
}

/// Full rendering: a FACTS section with one headline per group of leaf
/// assertions followed by the assertions themselves, then a CONCLUSION
/// line per reported finding. Truncated rendering: one line.
pub fn render(
    kb: &Ontology,
    msg: &MessageSpec,
    rendering: Rendering,
    explanations: &[Explanation],
) -> Result<String, NotifyError> {
    let conclusions: Vec<String> = msg.findings.iter().map(|f| sentence(kb, f)).collect();
    if rendering == Rendering::Truncated {
        return Ok(format!(
            "{}: {} ({ON_REQUEST}: {})",
            msg.severity.label(),
            conclusions.join(" "),
            msg.findings.join(", ")
        ));
    }
    let mut leaves: Vec<&Assertion> = Vec::new();
    for f in &msg.findings {
        let e = explanations
            .iter()
            .find(|e| e.assertion().fact.subject() == f)
            .ok_or_else(|| NotifyError::MissingExplanation(f.clone()))?;
        for l in e.leaves() {
            if !leaves.contains(&l) {
                leaves.push(l);
            }
        }
    }
    let mut out = format!("{}: {}\n\nFACTS\n", msg.severity.label(), msg.findings.join(", "));
    for (head, group) in group_leaves(kb, &leaves) {
        out.push_str(&format!("  {}\n", sentence(kb, &head)));
        for a in group {
            out.push_str(&format!("{FACT_BULLET}{}\n", a.fact));
        }
    }
    out.push_str("CONCLUSION\n");
    for c in conclusions {
        out.push_str(&format!("  {c}\n"));
    }
    Ok(out)
}

/// The assertion lines of a full report's FACTS section.
pub fn parse_fact_lines(report: &str) -> Vec<String> {
    report
        .lines()
        .skip_while(|l| *l != "FACTS")
        .take_while(|l| *l != "CONCLUSION")
        .filter_map(|l| l.strip_prefix(FACT_BULLET))
        .map(str::to_string)
        .collect()
}
