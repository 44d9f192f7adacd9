//! Typed ontology knowledge base.
//!
//! An [`Ontology`] holds the schema (classes with a subclass taxonomy and
//! typed relations), named individuals, instance and property assertions
//! tagged with their provenance, and axioms (rule references and
//! cardinality constraints). All mutation goes through [`Ontology::assert_fact`],
//! which validates each assertion against the schema before storing it.
//! Assertions are never retracted.

mod decimal;
mod query;
mod text;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use decimal::{Decimal, DecimalParseError};
pub use query::{Binding, PatternAtom, Term};
pub use text::{is_identifier, load_ontology, parse_literal_token, LoadError, ParseError};

pub(crate) use query::{solve, FactDelta};

/// Ontology partition a declaration belongs to. Namespaces are tags, not
/// isolation boundaries: every agent reads the one merged knowledge base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Namespace {
    Common,
    Notifying,
    Retrieval,
    DmDw,
}

impl Namespace {
    pub fn as_str(self) -> &'static str {
        match self {
            Namespace::Common => "common",
            Namespace::Notifying => "notifying",
            Namespace::Retrieval => "retrieval",
            Namespace::DmDw => "dm-dw",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "common" => Namespace::Common,
            "notifying" => Namespace::Notifying,
            "retrieval" => Namespace::Retrieval,
            "dm-dw" => Namespace::DmDw,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Datatype {
    String,
    Decimal,
    Date,
    Boolean,
}

impl Datatype {
    pub fn as_str(self) -> &'static str {
        match self {
            Datatype::String => "string",
            Datatype::Decimal => "decimal",
            Datatype::Date => "date",
            Datatype::Boolean => "boolean",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "string" => Datatype::String,
            "decimal" => Datatype::Decimal,
            "date" => Datatype::Date,
            "boolean" => Datatype::Boolean,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDef {
    pub name: String,
    pub parents: BTreeSet<String>,
    pub namespace: Namespace,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Range {
    Class(String),
    Datatype(Datatype),
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Range::Class(c) => f.write_str(c),
            Range::Datatype(d) => f.write_str(d.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationDef {
    pub name: String,
    pub domain: String,
    pub range: Range,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Individual {
    pub id: String,
    pub classes: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum Literal {
    String(String),
    Decimal(Decimal),
    Date(NaiveDate),
    Boolean(bool),
}

impl Literal {
    pub fn datatype(&self) -> Datatype {
        match self {
            Literal::String(_) => Datatype::String,
            Literal::Decimal(_) => Datatype::Decimal,
            Literal::Date(_) => Datatype::Date,
            Literal::Boolean(_) => Datatype::Boolean,
        }
    }

    /// Text form used in KB files: strings are quoted and escaped.
    pub fn to_token(&self) -> String {
        match self {
            Literal::String(s) => {
                let mut out = String::with_capacity(s.len() + 2);
                out.push('"');
                for c in s.chars() {
                    match c {
                        '"' => out.push_str("\\\""),
                        '\\' => out.push_str("\\\\"),
                        '\n' => out.push_str("\\n"),
                        c => out.push(c),
                    }
                }
                out.push('"');
                out
            }
            other => other.to_string(),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::String(s) => f.write_str(s),
            Literal::Decimal(d) => write!(f, "{d}"),
            Literal::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            Literal::Boolean(b) => write!(f, "{b}"),
        }
    }
}

/// Object position of an assertion: a named individual or a typed literal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Value {
    Individual(String),
    Literal(Literal),
}

impl Value {
    pub fn ind(id: impl Into<String>) -> Self {
        Value::Individual(id.into())
    }

    pub fn str(s: impl Into<String>) -> Self {
        Value::Literal(Literal::String(s.into()))
    }

    pub fn dec(d: Decimal) -> Self {
        Value::Literal(Literal::Decimal(d))
    }

    pub fn date(d: NaiveDate) -> Self {
        Value::Literal(Literal::Date(d))
    }

    pub fn as_individual(&self) -> Option<&str> {
        match self {
            Value::Individual(id) => Some(id),
            Value::Literal(_) => None,
        }
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            Value::Literal(l) => Some(l),
            Value::Individual(_) => None,
        }
    }

    pub fn to_token(&self) -> String {
        match self {
            Value::Individual(id) => id.clone(),
            Value::Literal(l) => l.to_token(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Individual(id) => f.write_str(id),
            Value::Literal(l) => write!(f, "{}", l.to_token()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "rule")]
pub enum Provenance {
    Loaded,
    Olap,
    Retrieval,
    Dm,
    Derived(String),
}

impl Provenance {
    pub fn is_derived(&self) -> bool {
        matches!(self, Provenance::Derived(_))
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Loaded => f.write_str("loaded"),
            Provenance::Olap => f.write_str("olap"),
            Provenance::Retrieval => f.write_str("retrieval"),
            Provenance::Dm => f.write_str("dm"),
            Provenance::Derived(rule) => write!(f, "derived({rule})"),
        }
    }
}

/// A ground statement: class membership of an individual, or a property link.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Fact {
    Instance { individual: String, class: String },
    Property { subject: String, relation: String, object: Value },
}

impl Fact {
    pub fn instance(individual: impl Into<String>, class: impl Into<String>) -> Self {
        Fact::Instance { individual: individual.into(), class: class.into() }
    }

    pub fn property(subject: impl Into<String>, relation: impl Into<String>, object: Value) -> Self {
        Fact::Property { subject: subject.into(), relation: relation.into(), object }
    }

    pub fn subject(&self) -> &str {
        match self {
            Fact::Instance { individual, .. } => individual,
            Fact::Property { subject, .. } => subject,
        }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fact::Instance { individual, class } => write!(f, "{individual} : {class}"),
            Fact::Property { subject, relation, object } => write!(f, "{subject} {relation} {object}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Assertion {
    pub fact: Fact,
    pub provenance: Provenance,
}

impl Assertion {
    pub fn new(fact: Fact, provenance: Provenance) -> Self {
        Assertion { fact, provenance }
    }

    pub fn loaded(fact: Fact) -> Self {
        Assertion { fact, provenance: Provenance::Loaded }
    }
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} @{}", self.fact, self.provenance)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Axiom {
    /// Reference to an executable rule by id; rule bodies live in rule files.
    Rule { id: String },
    /// Every instance of `class` has between `min` and `max` values for `relation`.
    Cardinality { class: String, relation: String, min: u32, max: Option<u32> },
}

/// One rule application recorded for explanation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derivation {
    pub rule: String,
    pub binding: Binding,
    pub support: Vec<Assertion>,
    pub produced: Vec<Assertion>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub item: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.item, self.rule)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KbError {
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("unknown individual `{0}`")]
    UnknownIndividual(String),
    #[error("duplicate class `{0}`")]
    DuplicateClass(String),
    #[error("duplicate relation `{0}`")]
    DuplicateRelation(String),
    #[error("adding `{0}` would create a subclass cycle")]
    SubclassCycle(String),
    #[error("domain violation: `{subject}` is not a `{domain}` (relation `{relation}`)")]
    Domain { subject: String, relation: String, domain: String },
    #[error("range violation: `{object}` is not a `{range}` (relation `{relation}`)")]
    Range { object: String, relation: String, range: String },
    #[error("datatype error: relation `{relation}` expects {expected}, got {found} `{value}`")]
    Datatype { relation: String, expected: Datatype, found: String, value: String },
}

impl fmt::Display for Datatype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The knowledge base: schema, individuals, assertions and axioms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ontology {
    classes: BTreeMap<String, ClassDef>,
    relations: BTreeMap<String, RelationDef>,
    /// individual id -> direct class -> provenance of the membership
    individuals: BTreeMap<String, BTreeMap<String, Provenance>>,
    /// relation -> subject -> object -> provenance
    properties: BTreeMap<String, BTreeMap<String, BTreeMap<Value, Provenance>>>,
    axioms: Vec<Axiom>,
    derivations: Vec<Derivation>,
    produced_by: BTreeMap<Fact, usize>,
    /// reflexive-transitive superclasses, recomputed on schema change
    ancestors: BTreeMap<String, BTreeSet<String>>,
    revision: u64,
}

impl Ontology {
    pub fn new() -> Self {
        Self::default()
    }

    /// Monotonic counter bumped by every mutation.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    // ---------------------------------------------------------------- schema

    pub fn add_class(&mut self, def: ClassDef) -> Result<(), KbError> {
        if self.classes.contains_key(&def.name) {
            return Err(KbError::DuplicateClass(def.name));
        }
        for p in &def.parents {
            if !self.classes.contains_key(p) {
                return Err(KbError::UnknownClass(p.clone()));
            }
            if self.is_subclass_of(p, &def.name) {
                return Err(KbError::SubclassCycle(def.name));
            }
        }
        self.insert_class_unchecked(def);
        Ok(())
    }

    pub fn add_relation(&mut self, def: RelationDef) -> Result<(), KbError> {
        if self.relations.contains_key(&def.name) {
            return Err(KbError::DuplicateRelation(def.name));
        }
        if !self.classes.contains_key(&def.domain) {
            return Err(KbError::UnknownClass(def.domain));
        }
        if let Range::Class(c) = &def.range {
            if !self.classes.contains_key(c) {
                return Err(KbError::UnknownClass(c.clone()));
            }
        }
        self.insert_relation_unchecked(def);
        Ok(())
    }

    pub fn add_axiom(&mut self, axiom: Axiom) {
        if !self.axioms.contains(&axiom) {
            self.axioms.push(axiom);
            self.revision += 1;
        }
    }

    /// Removes a class declaration without cascading to dependents; the
    /// resulting dangling references surface through [`Ontology::validate`].
    pub fn remove_class(&mut self, name: &str) -> Option<ClassDef> {
        let removed = self.classes.remove(name);
        if removed.is_some() {
            self.recompute_ancestors();
            self.revision += 1;
        }
        removed
    }

    pub(crate) fn insert_class_unchecked(&mut self, def: ClassDef) {
        self.classes.insert(def.name.clone(), def);
        self.recompute_ancestors();
        self.revision += 1;
    }

    pub(crate) fn insert_relation_unchecked(&mut self, def: RelationDef) {
        self.relations.insert(def.name.clone(), def);
        self.revision += 1;
    }

    fn recompute_ancestors(&mut self) {
        let mut out = BTreeMap::new();
        for name in self.classes.keys() {
            let mut seen = BTreeSet::new();
            let mut stack = vec![name.clone()];
            while let Some(c) = stack.pop() {
                if !seen.insert(c.clone()) {
                    continue;
                }
                if let Some(def) = self.classes.get(&c) {
                    stack.extend(def.parents.iter().cloned());
                }
            }
            out.insert(name.clone(), seen);
        }
        self.ancestors = out;
    }

    pub fn classes(&self) -> impl Iterator<Item = &ClassDef> {
        self.classes.values()
    }

    pub fn class(&self, name: &str) -> Option<&ClassDef> {
        self.classes.get(name)
    }

    pub fn relations(&self) -> impl Iterator<Item = &RelationDef> {
        self.relations.values()
    }

    pub fn relation(&self, name: &str) -> Option<&RelationDef> {
        self.relations.get(name)
    }

    pub fn axioms(&self) -> &[Axiom] {
        &self.axioms
    }

    /// Reflexive-transitive subclass test. Unknown classes are only subclasses of themselves.
    pub fn is_subclass_of(&self, sub: &str, sup: &str) -> bool {
        if sub == sup {
            return true;
        }
        self.ancestors.get(sub).is_some_and(|a| a.contains(sup))
    }

    /// All declared classes that are (reflexively) below `class`, in name order.
    pub fn descendants(&self, class: &str) -> Vec<&str> {
        self.classes
            .keys()
            .filter(|c| self.is_subclass_of(c, class))
            .map(String::as_str)
            .collect()
    }

    /// Relations whose domain is `class` or one of its superclasses.
    pub fn relations_for(&self, class: &str) -> Vec<&RelationDef> {
        self.relations.values().filter(|r| self.is_subclass_of(class, &r.domain)).collect()
    }

    // ----------------------------------------------------------- individuals

    pub fn individual(&self, id: &str) -> Option<Individual> {
        self.individuals
            .get(id)
            .map(|cs| Individual { id: id.to_string(), classes: cs.keys().cloned().collect() })
    }

    pub fn individuals(&self) -> impl Iterator<Item = Individual> + '_ {
        self.individuals
            .iter()
            .map(|(id, cs)| Individual { id: id.clone(), classes: cs.keys().cloned().collect() })
    }

    pub fn contains_individual(&self, id: &str) -> bool {
        self.individuals.contains_key(id)
    }

    pub fn individual_count(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_instance_of(&self, ind: &str, cls: &str) -> Result<bool, KbError> {
        let direct = self.individuals.get(ind).ok_or_else(|| KbError::UnknownIndividual(ind.to_string()))?;
        if !self.classes.contains_key(cls) {
            return Err(KbError::UnknownClass(cls.to_string()));
        }
        Ok(direct.keys().any(|d| self.is_subclass_of(d, cls)))
    }

    pub(crate) fn instance_holds(&self, ind: &str, cls: &str) -> bool {
        self.individuals.get(ind).is_some_and(|d| d.keys().any(|c| self.is_subclass_of(c, cls)))
    }

    /// Individuals that are (transitively) instances of `cls`.
    pub fn instances_of<'a>(&'a self, cls: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.individuals
            .iter()
            .filter(move |(_, d)| d.keys().any(|c| self.is_subclass_of(c, cls)))
            .map(|(id, _)| id.as_str())
    }

    /// Direct (asserted) classes of an individual with the provenance of each membership.
    pub fn direct_classes(&self, ind: &str) -> Option<&BTreeMap<String, Provenance>> {
        self.individuals.get(ind)
    }

    // ------------------------------------------------------------ assertions

    /// Objects of `relation` for `subject`, in value order.
    pub fn objects<'a>(&'a self, subject: &str, relation: &str) -> impl Iterator<Item = &'a Value> + 'a {
        self.properties
            .get(relation)
            .and_then(|m| m.get(subject))
            .into_iter()
            .flat_map(|m| m.keys())
    }

    pub fn object(&self, subject: &str, relation: &str) -> Option<&Value> {
        self.objects(subject, relation).next()
    }

    /// Subjects linked to `object` through `relation`.
    pub fn subjects<'a>(&'a self, relation: &str, object: &'a Value) -> impl Iterator<Item = &'a str> + 'a {
        self.properties
            .get(relation)
            .into_iter()
            .flat_map(|m| m.iter())
            .filter(move |(_, objs)| objs.contains_key(object))
            .map(|(s, _)| s.as_str())
    }

    pub fn provenance(&self, fact: &Fact) -> Option<&Provenance> {
        match fact {
            Fact::Instance { individual, class } => self.individuals.get(individual)?.get(class),
            Fact::Property { subject, relation, object } => {
                self.properties.get(relation)?.get(subject)?.get(object)
            }
        }
    }

    pub fn contains(&self, fact: &Fact) -> bool {
        self.provenance(fact).is_some()
    }

    /// Every stored assertion, instance memberships first, in deterministic order.
    pub fn assertions(&self) -> Vec<Assertion> {
        let mut out = Vec::new();
        for (id, cs) in &self.individuals {
            for (c, p) in cs {
                out.push(Assertion::new(Fact::instance(id, c), p.clone()));
            }
        }
        for (rel, subjects) in &self.properties {
            for (s, objs) in subjects {
                for (o, p) in objs {
                    out.push(Assertion::new(Fact::property(s, rel, o.clone()), p.clone()));
                }
            }
        }
        out
    }

    pub fn fact_count(&self) -> usize {
        self.individuals.values().map(BTreeMap::len).sum::<usize>()
            + self.properties.values().flat_map(|m| m.values()).map(BTreeMap::len).sum::<usize>()
    }

    /// Checks an assertion against the schema without storing it.
    pub fn check_fact(&self, fact: &Fact) -> Result<(), KbError> {
        match fact {
            Fact::Instance { class, .. } => {
                if !self.classes.contains_key(class) {
                    return Err(KbError::UnknownClass(class.clone()));
                }
                Ok(())
            }
            Fact::Property { subject, relation, object } => {
                let rel = self.relations.get(relation).ok_or_else(|| KbError::UnknownRelation(relation.clone()))?;
                if !self.individuals.contains_key(subject) {
                    return Err(KbError::UnknownIndividual(subject.clone()));
                }
                if !self.instance_holds(subject, &rel.domain) {
                    return Err(KbError::Domain {
                        subject: subject.clone(),
                        relation: relation.clone(),
                        domain: rel.domain.clone(),
                    });
                }
                self.check_object(rel, object)
            }
        }
    }

    fn check_object(&self, rel: &RelationDef, object: &Value) -> Result<(), KbError> {
        match (&rel.range, object) {
            (Range::Class(c), Value::Individual(o)) => {
                if !self.individuals.contains_key(o) {
                    return Err(KbError::UnknownIndividual(o.clone()));
                }
                if !self.instance_holds(o, c) {
                    return Err(KbError::Range { object: o.clone(), relation: rel.name.clone(), range: c.clone() });
                }
                Ok(())
            }
            (Range::Class(c), Value::Literal(l)) => Err(KbError::Range {
                object: l.to_token(),
                relation: rel.name.clone(),
                range: c.clone(),
            }),
            (Range::Datatype(d), Value::Literal(l)) if l.datatype() == *d => Ok(()),
            (Range::Datatype(d), Value::Literal(l)) => Err(KbError::Datatype {
                relation: rel.name.clone(),
                expected: *d,
                found: l.datatype().as_str().to_string(),
                value: l.to_string(),
            }),
            (Range::Datatype(d), Value::Individual(o)) => Err(KbError::Datatype {
                relation: rel.name.clone(),
                expected: *d,
                found: "individual".to_string(),
                value: o.clone(),
            }),
        }
    }

    /// Validates and stores an assertion. Returns `false` when the fact was
    /// already present (the first provenance is kept). An instance assertion
    /// for an unknown id introduces that individual.
    pub fn assert_fact(&mut self, assertion: Assertion) -> Result<bool, KbError> {
        self.check_fact(&assertion.fact)?;
        Ok(self.insert_unchecked(assertion))
    }

    pub(crate) fn insert_unchecked(&mut self, assertion: Assertion) -> bool {
        fn put<K: Ord>(map: &mut BTreeMap<K, Provenance>, key: K, p: Provenance) -> bool {
            match map.entry(key) {
                std::collections::btree_map::Entry::Occupied(_) => false,
                std::collections::btree_map::Entry::Vacant(v) => {
                    v.insert(p);
                    true
                }
            }
        }
        let Assertion { fact, provenance } = assertion;
        let added = match fact {
            Fact::Instance { individual, class } => {
                put(self.individuals.entry(individual).or_default(), class, provenance)
            }
            Fact::Property { subject, relation, object } => {
                put(self.properties.entry(relation).or_default().entry(subject).or_default(), object, provenance)
            }
        };
        if added {
            self.revision += 1;
        }
        added
    }

    /// Declares an individual with no memberships; only used while loading,
    /// where an empty class list is reported by validation.
    pub(crate) fn declare_individual_unchecked(&mut self, id: &str) {
        self.individuals.entry(id.to_string()).or_default();
    }

    // ----------------------------------------------------------- derivations

    pub(crate) fn record_derivation(&mut self, derivation: Derivation) -> usize {
        let idx = self.derivations.len();
        for a in &derivation.produced {
            self.produced_by.entry(a.fact.clone()).or_insert(idx);
        }
        self.derivations.push(derivation);
        self.revision += 1;
        idx
    }

    pub fn derivations(&self) -> &[Derivation] {
        &self.derivations
    }

    /// The derivation that first produced `fact`, if it was derived.
    pub fn derivation_of(&self, fact: &Fact) -> Option<&Derivation> {
        self.produced_by.get(fact).map(|&i| &self.derivations[i])
    }

    // ------------------------------------------------------------ validation

    /// Lists every broken invariant; an empty list means the ontology is consistent.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let v = |item: String, rule: String| Violation { item, rule };

        for def in self.classes.values() {
            for p in &def.parents {
                if !self.classes.contains_key(p) {
                    out.push(v(format!("class {}", def.name), format!("unresolved parent class `{p}`")));
                }
            }
        }
        for cyc in self.cycle_members() {
            out.push(v(format!("class {cyc}"), "subclass cycle".to_string()));
        }
        for def in self.relations.values() {
            if !self.classes.contains_key(&def.domain) {
                out.push(v(format!("relation {}", def.name), format!("unresolved domain class `{}`", def.domain)));
            }
            if let Range::Class(c) = &def.range {
                if !self.classes.contains_key(c) {
                    out.push(v(format!("relation {}", def.name), format!("unresolved range class `{c}`")));
                }
            }
        }
        for (id, cs) in &self.individuals {
            if cs.is_empty() {
                out.push(v(format!("individual {id}"), "no class".to_string()));
            }
            for c in cs.keys() {
                if !self.classes.contains_key(c) {
                    out.push(v(format!("individual {id}"), format!("unresolved class `{c}`")));
                }
            }
        }
        for (rel, subjects) in &self.properties {
            for (s, objs) in subjects {
                for o in objs.keys() {
                    let fact = Fact::property(s, rel, o.clone());
                    if let Err(e) = self.check_fact(&fact) {
                        out.push(v(format!("assertion {fact}"), e.to_string()));
                    }
                }
            }
        }
        for ax in &self.axioms {
            if let Axiom::Cardinality { class, relation, min, max } = ax {
                if !self.classes.contains_key(class) {
                    out.push(v(format!("axiom card {class} {relation}"), format!("unresolved class `{class}`")));
                    continue;
                }
                if !self.relations.contains_key(relation) {
                    out.push(v(format!("axiom card {class} {relation}"), format!("unresolved relation `{relation}`")));
                    continue;
                }
                for ind in self.instances_of(class) {
                    let n = self.objects(ind, relation).count() as u32;
                    if n < *min || max.is_some_and(|m| n > m) {
                        let bound = match max {
                            Some(m) => format!("{min}..{m}"),
                            None => format!("{min}.."),
                        };
                        out.push(v(format!("individual {ind}"), format!("cardinality of `{relation}` is {n}, expected {bound}")));
                    }
                }
            }
        }
        out
    }

    /// Classes that lie on a subclass cycle (found as DFS back edges).
    fn cycle_members(&self) -> BTreeSet<String> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Open,
            Done,
        }
        fn visit(
            kb: &Ontology,
            c: &str,
            marks: &mut BTreeMap<String, Mark>,
            path: &mut Vec<String>,
            out: &mut BTreeSet<String>,
        ) {
            match marks.get(c) {
                Some(Mark::Done) => return,
                Some(Mark::Open) => {
                    if let Some(pos) = path.iter().position(|p| p == c) {
                        out.extend(path[pos..].iter().cloned());
                    }
                    return;
                }
                None => {}
            }
            marks.insert(c.to_string(), Mark::Open);
            path.push(c.to_string());
            if let Some(def) = kb.classes.get(c) {
                for p in &def.parents {
                    visit(kb, p, marks, path, out);
                }
            }
            path.pop();
            marks.insert(c.to_string(), Mark::Done);
        }
        let mut marks = BTreeMap::new();
        let mut out = BTreeSet::new();
        for c in self.classes.keys() {
            visit(self, c, &mut marks, &mut Vec::new(), &mut out);
        }
        out
    }

    /// Answers a conjunctive pattern. See [`query::query`].
    pub fn query(&self, pattern: &[PatternAtom]) -> Result<Vec<Binding>, KbError> {
        query::query(self, pattern)
    }

    /// Serializes the ontology to the line-oriented KB text format.
    pub fn to_text(&self) -> String {
        text::to_text(self)
    }
}

/// Writer handle over a shared ontology. Readers take cheap immutable
/// snapshots; the single writer copies on write when snapshots are alive.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    current: std::sync::Arc<Ontology>,
}

impl KnowledgeBase {
    pub fn new(ontology: Ontology) -> Self {
        KnowledgeBase { current: std::sync::Arc::new(ontology) }
    }

    pub fn snapshot(&self) -> std::sync::Arc<Ontology> {
        self.current.clone()
    }

    pub fn read(&self) -> &Ontology {
        &self.current
    }

    pub fn write(&mut self) -> &mut Ontology {
        std::sync::Arc::make_mut(&mut self.current)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny() -> Ontology {
        let mut kb = Ontology::new();
        let class = |n: &str, ps: &[&str]| ClassDef {
            name: n.into(),
            parents: ps.iter().map(|s| s.to_string()).collect(),
            namespace: Namespace::Common,
        };
        kb.add_class(class("Thing", &[])).unwrap();
        kb.add_class(class("Phone", &["Thing"])).unwrap();
        kb.add_class(class("NewPhone", &["Phone"])).unwrap();
        kb.add_class(class("PhoneBrand", &["Thing"])).unwrap();
        kb.add_class(class("Customer", &["Thing"])).unwrap();
        kb.add_class(class("Finding", &["Thing"])).unwrap();
        kb.add_relation(RelationDef {
            name: "hasCharacteristic".into(),
            domain: "Phone".into(),
            range: Range::Class("PhoneBrand".into()),
        })
        .unwrap();
        kb.add_relation(RelationDef {
            name: "hasValue".into(),
            domain: "Finding".into(),
            range: Range::Datatype(Datatype::Decimal),
        })
        .unwrap();
        kb.assert_fact(Assertion::loaded(Fact::instance("Nokia", "PhoneBrand"))).unwrap();
        kb.assert_fact(Assertion::loaded(Fact::instance("Nokia_E72", "NewPhone"))).unwrap();
        kb.assert_fact(Assertion::loaded(Fact::instance("Finding309", "Finding"))).unwrap();
        kb
    }

    #[test]
    fn brand_characteristic_accepted() {
        let mut kb = tiny();
        let added = kb
            .assert_fact(Assertion::loaded(Fact::property("Nokia_E72", "hasCharacteristic", Value::ind("Nokia"))))
            .unwrap();
        assert!(added);
        assert!(kb.validate().is_empty());
    }

    #[test]
    fn datatype_mismatch_rejected() {
        let mut kb = tiny();
        let err = kb
            .assert_fact(Assertion::loaded(Fact::property("Finding309", "hasValue", Value::str("abc"))))
            .unwrap_err();
        assert!(matches!(err, KbError::Datatype { .. }), "{err}");
    }

    #[test]
    fn domain_and_unknowns_rejected() {
        let mut kb = tiny();
        let f = |s: &str, r: &str, o: Value| Assertion::loaded(Fact::property(s, r, o));
        assert!(matches!(
            kb.assert_fact(f("Finding309", "hasCharacteristic", Value::ind("Nokia"))),
            Err(KbError::Domain { .. })
        ));
        assert!(matches!(
            kb.assert_fact(f("Nokia_E72", "hasCharacteristic", Value::ind("Finding309"))),
            Err(KbError::Range { .. })
        ));
        assert!(matches!(kb.assert_fact(f("Ghost", "hasValue", Value::dec(Decimal::ZERO))), Err(KbError::UnknownIndividual(_))));
        assert!(matches!(kb.assert_fact(f("Finding309", "nope", Value::dec(Decimal::ZERO))), Err(KbError::UnknownRelation(_))));
        assert!(matches!(kb.assert_fact(Assertion::loaded(Fact::instance("X", "Widget"))), Err(KbError::UnknownClass(_))));
    }

    #[test]
    fn reassert_is_idempotent() {
        let mut kb = tiny();
        let a = Assertion::loaded(Fact::property("Finding309", "hasValue", Value::dec("11.23".parse().unwrap())));
        assert!(kb.assert_fact(a.clone()).unwrap());
        let before = kb.assertions();
        assert!(!kb.assert_fact(Assertion::new(a.fact.clone(), Provenance::Olap)).unwrap());
        assert_eq!(kb.assertions(), before);
    }

    #[test]
    fn instance_checks() {
        let kb = tiny();
        assert!(kb.is_instance_of("Nokia_E72", "NewPhone").unwrap());
        assert!(kb.is_instance_of("Nokia_E72", "Phone").unwrap());
        assert!(!kb.is_instance_of("Nokia_E72", "Customer").unwrap());
        assert!(kb.is_instance_of("Ghost", "Phone").is_err());
        assert!(kb.is_instance_of("Nokia_E72", "Widget").is_err());
    }

    #[test]
    fn add_class_rejects_cycles_and_duplicates() {
        let mut kb = tiny();
        let dup = ClassDef { name: "Phone".into(), parents: BTreeSet::new(), namespace: Namespace::Retrieval };
        assert!(matches!(kb.add_class(dup), Err(KbError::DuplicateClass(_))));
    }

    #[test]
    fn removing_a_domain_class_surfaces_one_violation() {
        let mut kb = tiny();
        kb.add_class(ClassDef { name: "Orphan".into(), parents: BTreeSet::new(), namespace: Namespace::Common })
            .unwrap();
        kb.add_relation(RelationDef { name: "note".into(), domain: "Orphan".into(), range: Range::Datatype(Datatype::String) })
            .unwrap();
        assert!(kb.validate().is_empty());
        kb.remove_class("Orphan");
        let v = kb.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].item.contains("note"));
    }

    #[test]
    fn cardinality_axiom_checked() {
        let mut kb = tiny();
        kb.add_axiom(Axiom::Cardinality { class: "Finding".into(), relation: "hasValue".into(), min: 1, max: Some(1) });
        assert_eq!(kb.validate().len(), 1);
        kb.assert_fact(Assertion::loaded(Fact::property("Finding309", "hasValue", Value::dec(Decimal::from_int(1)))))
            .unwrap();
        assert!(kb.validate().is_empty());
    }

    #[test]
    fn snapshots_are_isolated_from_writes() {
        let mut handle = KnowledgeBase::new(tiny());
        let snap = handle.snapshot();
        handle.write().assert_fact(Assertion::loaded(Fact::instance("Acme", "Customer"))).unwrap();
        assert!(!snap.contains_individual("Acme"));
        assert!(handle.read().contains_individual("Acme"));
        let t = std::thread::spawn(move || snap.individual_count());
        assert_eq!(t.join().unwrap(), 3);
    }
}
