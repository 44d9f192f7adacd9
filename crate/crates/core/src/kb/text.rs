//! Line-oriented KB text format.
//!
//! ```text
//! # comment
//! class Phone sub DomainSpecificElement ns=common
//! rel hasValue dom=Finding rng=decimal
//! ind Nokia_E72 : NewPhone
//! fact Nokia_E72 hasCharacteristic Nokia
//! fact Finding309 hasValue 11.23
//! card Finding hasValue min=1 max=1
//! rule promotion_discount
//! ```
//!
//! `ind` and `fact` lines accept a trailing `@<provenance>` tag
//! (`@olap`, `@derived(rule_id)`, ...); untagged lines are `loaded`.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;

use super::{
    Assertion, Axiom, ClassDef, Datatype, Decimal, Fact, Literal, Namespace, Ontology, Provenance, Range,
    RelationDef, Value, Violation,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{} validation violation(s): {}", .0.len(), .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

enum Directive {
    Class(ClassDef),
    Relation(RelationDef),
    Individual { id: String, classes: Vec<String>, provenance: Provenance },
    Fact { subject: String, relation: String, object: Value, provenance: Provenance },
    Axiom(Axiom),
}

/// Parses and validates a KB document.
pub fn load_ontology(source: &str) -> Result<Ontology, LoadError> {
    let mut directives = Vec::new();
    for (i, raw) in source.lines().enumerate() {
        let line = i + 1;
        let tokens = tokenize(raw).map_err(|message| ParseError { line, message })?;
        if tokens.is_empty() {
            continue;
        }
        let d = parse_directive(&tokens).map_err(|message| ParseError { line, message })?;
        directives.push((line, d));
    }

    let mut kb = Ontology::new();
    let mut seen_individuals: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut seen_facts = BTreeSet::new();
    let dup = |line: usize, what: String| ParseError { line, message: format!("duplicate declaration of {what}") };

    // schema first so later lines may reference classes declared further down
    for (line, d) in &directives {
        match d {
            Directive::Class(def) => {
                if kb.class(&def.name).is_some() {
                    return Err(dup(*line, format!("class `{}`", def.name)).into());
                }
                kb.insert_class_unchecked(def.clone());
            }
            Directive::Relation(def) => {
                if kb.relation(&def.name).is_some() {
                    return Err(dup(*line, format!("relation `{}`", def.name)).into());
                }
                kb.insert_relation_unchecked(def.clone());
            }
            _ => {}
        }
    }
    for (line, d) in &directives {
        if let Directive::Individual { id, classes, provenance } = d {
            let seen = seen_individuals.entry(id.clone()).or_default();
            kb.declare_individual_unchecked(id);
            for c in classes {
                if !seen.insert(c.clone()) {
                    return Err(dup(*line, format!("individual `{id} : {c}`")).into());
                }
                kb.insert_unchecked(Assertion::new(Fact::instance(id, c), provenance.clone()));
            }
        }
    }
    for (line, d) in directives {
        match d {
            Directive::Fact { subject, relation, object, provenance } => {
                let fact = Fact::property(subject, relation, object);
                if !seen_facts.insert(fact.clone()) {
                    return Err(dup(line, format!("fact `{fact}`")).into());
                }
                kb.insert_unchecked(Assertion::new(fact, provenance));
            }
            Directive::Axiom(ax) => kb.add_axiom(ax),
            _ => {}
        }
    }
    let violations = kb.validate();
    if !violations.is_empty() {
        return Err(LoadError::Invalid(violations));
    }
    Ok(kb)
}

fn parse_directive(tokens: &[Token]) -> Result<Directive, String> {
    let words: Vec<&str> = tokens.iter().map(|t| t.text.as_str()).collect();
    match words[0] {
        "class" => {
            let name = ident(tokens.get(1), "class name")?;
            let mut parents = BTreeSet::new();
            let mut namespace = None;
            let mut rest = &tokens[2..];
            if rest.first().is_some_and(|t| !t.quoted && t.text == "sub") {
                rest = &rest[1..];
                while let Some(t) = rest.first() {
                    if t.text.starts_with("ns=") {
                        break;
                    }
                    parents.insert(ident(Some(t), "parent class")?);
                    rest = &rest[1..];
                }
                if parents.is_empty() {
                    return Err("`sub` needs at least one parent class".into());
                }
            }
            for t in rest {
                match t.text.strip_prefix("ns=") {
                    Some(ns) => {
                        namespace = Some(Namespace::parse(ns).ok_or_else(|| format!("unknown namespace `{ns}`"))?)
                    }
                    None => return Err(format!("unexpected token `{}`", t.text)),
                }
            }
            let namespace = namespace.ok_or("class declaration needs ns=<namespace>")?;
            Ok(Directive::Class(ClassDef { name, parents, namespace }))
        }
        "rel" => {
            let name = ident(tokens.get(1), "relation name")?;
            let mut domain = None;
            let mut range = None;
            for t in &tokens[2..] {
                if let Some(d) = t.text.strip_prefix("dom=") {
                    domain = Some(ident_str(d, "domain class")?);
                } else if let Some(r) = t.text.strip_prefix("rng=") {
                    range = Some(match Datatype::parse(r) {
                        Some(dt) => Range::Datatype(dt),
                        None => Range::Class(ident_str(r, "range")?),
                    });
                } else {
                    return Err(format!("unexpected token `{}`", t.text));
                }
            }
            Ok(Directive::Relation(RelationDef {
                name,
                domain: domain.ok_or("relation needs dom=<Class>")?,
                range: range.ok_or("relation needs rng=<Class|datatype>")?,
            }))
        }
        "ind" => {
            let id = ident(tokens.get(1), "individual id")?;
            if words.get(2) != Some(&":") {
                return Err("expected `:` after individual id".into());
            }
            let (body, provenance) = split_provenance(&tokens[3..])?;
            let joined: String = body.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join("");
            let classes = joined
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|c| ident_str(c, "class"))
                .collect::<Result<Vec<_>, _>>()?;
            if classes.is_empty() {
                return Err(format!("individual `{id}` needs at least one class"));
            }
            Ok(Directive::Individual { id, classes, provenance })
        }
        "fact" => {
            let (body, provenance) = split_provenance(&tokens[1..])?;
            if body.len() != 3 {
                return Err("fact needs <subject> <relation> <object>".into());
            }
            let subject = ident(Some(&body[0]), "subject")?;
            let relation = ident(Some(&body[1]), "relation")?;
            let object = object_token(&body[2])?;
            Ok(Directive::Fact { subject, relation, object, provenance })
        }
        "card" => {
            let class = ident(tokens.get(1), "class")?;
            let relation = ident(tokens.get(2), "relation")?;
            let mut min = None;
            let mut max = None;
            for t in &tokens[3..] {
                if let Some(v) = t.text.strip_prefix("min=") {
                    min = Some(v.parse().map_err(|_| format!("bad min `{v}`"))?);
                } else if let Some(v) = t.text.strip_prefix("max=") {
                    max = Some(v.parse().map_err(|_| format!("bad max `{v}`"))?);
                } else {
                    return Err(format!("unexpected token `{}`", t.text));
                }
            }
            Ok(Directive::Axiom(Axiom::Cardinality { class, relation, min: min.unwrap_or(0), max }))
        }
        "rule" => {
            let id = ident(tokens.get(1), "rule id")?;
            Ok(Directive::Axiom(Axiom::Rule { id }))
        }
        other => Err(format!("unknown directive `{other}`")),
    }
}

fn split_provenance(tokens: &[Token]) -> Result<(&[Token], Provenance), String> {
    match tokens.last() {
        Some(t) if !t.quoted && t.text.starts_with('@') => {
            let tag = &t.text[1..];
            let p = match tag {
                "loaded" => Provenance::Loaded,
                "olap" => Provenance::Olap,
                "retrieval" => Provenance::Retrieval,
                "dm" => Provenance::Dm,
                _ => match tag.strip_prefix("derived(").and_then(|r| r.strip_suffix(')')) {
                    Some(rule) => Provenance::Derived(ident_str(rule, "rule id")?),
                    None => return Err(format!("unknown provenance `{tag}`")),
                },
            };
            Ok((&tokens[..tokens.len() - 1], p))
        }
        _ => Ok((tokens, Provenance::Loaded)),
    }
}

fn ident(t: Option<&Token>, what: &str) -> Result<String, String> {
    match t {
        Some(t) if !t.quoted => ident_str(&t.text, what),
        Some(t) => Err(format!("expected {what}, found string \"{}\"", t.text)),
        None => Err(format!("missing {what}")),
    }
}

fn ident_str(s: &str, what: &str) -> Result<String, String> {
    if is_identifier(s) {
        Ok(s.to_string())
    } else {
        Err(format!("invalid {what} `{s}`"))
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn object_token(t: &Token) -> Result<Value, String> {
    if t.quoted {
        return Ok(Value::str(t.text.clone()));
    }
    if is_identifier(&t.text) && t.text != "true" && t.text != "false" {
        return Ok(Value::ind(t.text.clone()));
    }
    parse_literal_token(&t.text).map(Value::Literal)
}

/// Parses an unquoted literal: ISO-8601 date, plain decimal, or boolean.
pub fn parse_literal_token(s: &str) -> Result<Literal, String> {
    match s {
        "true" => return Ok(Literal::Boolean(true)),
        "false" => return Ok(Literal::Boolean(false)),
        _ => {}
    }
    if s.len() == 10 && s.as_bytes()[4] == b'-' && s.as_bytes()[7] == b'-' {
        return NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map(Literal::Date)
            .map_err(|_| format!("invalid date `{s}`"));
    }
    s.parse::<Decimal>().map(Literal::Decimal).map_err(|_| format!("invalid literal `{s}`"))
}

struct Token {
    text: String,
    quoted: bool,
}

fn tokenize(line: &str) -> Result<Vec<Token>, String> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c == '"' {
            chars.next();
            let mut s = String::new();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some('\\') => match chars.next() {
                        Some('n') => s.push('\n'),
                        Some(e @ ('"' | '\\')) => s.push(e),
                        Some(e) => return Err(format!("unknown escape `\\{e}`")),
                        None => return Err("unterminated string".into()),
                    },
                    Some(ch) => s.push(ch),
                    None => return Err("unterminated string".into()),
                }
            }
            out.push(Token { text: s, quoted: true });
            continue;
        }
        if c == ':' || c == ',' {
            chars.next();
            out.push(Token { text: c.to_string(), quoted: false });
            continue;
        }
        let mut s = String::new();
        while let Some(&ch) = chars.peek() {
            if ch.is_whitespace() || ch == ',' || ch == '#' || ch == '"' || (ch == ':' && !s.contains('=')) {
                break;
            }
            s.push(ch);
            chars.next();
        }
        out.push(Token { text: s, quoted: false });
    }
    Ok(out)
}

pub(super) fn to_text(kb: &Ontology) -> String {
    let mut out = String::new();
    let tag = |p: &Provenance| match p {
        Provenance::Loaded => String::new(),
        other => format!(" @{other}"),
    };
    for c in kb.classes() {
        out.push_str("class ");
        out.push_str(&c.name);
        if !c.parents.is_empty() {
            out.push_str(" sub");
            for p in &c.parents {
                out.push(' ');
                out.push_str(p);
            }
        }
        out.push_str(&format!(" ns={}\n", c.namespace.as_str()));
    }
    for r in kb.relations() {
        out.push_str(&format!("rel {} dom={} rng={}\n", r.name, r.domain, r.range));
    }
    for ax in kb.axioms() {
        match ax {
            Axiom::Rule { id } => out.push_str(&format!("rule {id}\n")),
            Axiom::Cardinality { class, relation, min, max } => {
                out.push_str(&format!("card {class} {relation} min={min}"));
                if let Some(m) = max {
                    out.push_str(&format!(" max={m}"));
                }
                out.push('\n');
            }
        }
    }
    for (id, classes) in &kb.individuals {
        let mut by_prov: BTreeMap<&Provenance, Vec<&str>> = BTreeMap::new();
        for (c, p) in classes {
            by_prov.entry(p).or_default().push(c);
        }
        for (p, cs) in by_prov {
            out.push_str(&format!("ind {id} : {}{}\n", cs.join(","), tag(p)));
        }
    }
    for a in kb.assertions() {
        if let Fact::Property { subject, relation, object } = &a.fact {
            out.push_str(&format!("fact {subject} {relation} {}{}\n", object.to_token(), tag(&a.provenance)));
        }
    }
    out
}
