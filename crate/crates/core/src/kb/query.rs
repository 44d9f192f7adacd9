use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Fact, KbError, Ontology, Value};

/// Variable name (without the leading `?`) to bound value.
pub type Binding = BTreeMap<String, Value>;

/// Facts new since the previous evaluation round.
pub(crate) type FactDelta = BTreeSet<Fact>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Term {
    Var(String),
    Const(Value),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn ind(id: impl Into<String>) -> Self {
        Term::Const(Value::Individual(id.into()))
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }

    fn resolve<'a>(&'a self, binding: &'a Binding) -> Option<&'a Value> {
        match self {
            Term::Var(v) => binding.get(v),
            Term::Const(c) => Some(c),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

/// A query atom: class membership `C(t)` or property link `P(s, o)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PatternAtom {
    Class { class: String, term: Term },
    Property { relation: String, subject: Term, object: Term },
}

impl PatternAtom {
    pub fn class(class: impl Into<String>, term: Term) -> Self {
        PatternAtom::Class { class: class.into(), term }
    }

    pub fn property(relation: impl Into<String>, subject: Term, object: Term) -> Self {
        PatternAtom::Property { relation: relation.into(), subject, object }
    }

    pub fn terms(&self) -> Vec<&Term> {
        match self {
            PatternAtom::Class { term, .. } => vec![term],
            PatternAtom::Property { subject, object, .. } => vec![subject, object],
        }
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.terms().into_iter().filter_map(Term::as_var)
    }

    /// Grounds the atom under a binding; `None` if a variable is unbound or
    /// a class atom would hold a literal.
    pub fn ground(&self, binding: &Binding) -> Option<Fact> {
        match self {
            PatternAtom::Class { class, term } => {
                let id = term.resolve(binding)?.as_individual()?;
                Some(Fact::instance(id, class))
            }
            PatternAtom::Property { relation, subject, object } => {
                let s = subject.resolve(binding)?.as_individual()?;
                let o = object.resolve(binding)?.clone();
                Some(Fact::property(s, relation, o))
            }
        }
    }
}

impl fmt::Display for PatternAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternAtom::Class { class, term } => write!(f, "{class}({term})"),
            PatternAtom::Property { relation, subject, object } => write!(f, "{relation}({subject}, {object})"),
        }
    }
}

/// Answers a conjunctive pattern over stored assertions plus transitive class
/// membership. Results are set-valued and sorted by binding.
pub(super) fn query(kb: &Ontology, pattern: &[PatternAtom]) -> Result<Vec<Binding>, KbError> {
    for atom in pattern {
        match atom {
            PatternAtom::Class { class, .. } if kb.class(class).is_none() => {
                return Err(KbError::UnknownClass(class.clone()))
            }
            PatternAtom::Property { relation, .. } if kb.relation(relation).is_none() => {
                return Err(KbError::UnknownRelation(relation.clone()))
            }
            _ => {}
        }
    }
    let mut out = BTreeSet::new();
    solve(kb, pattern, None, Binding::new(), &mut |b, _| {
        out.insert(b.clone());
    });
    Ok(out.into_iter().collect())
}

/// Backtracking join over `atoms`. When `delta` is `Some((i, facts))`, atom
/// `i` may only be satisfied by a fact in `facts` (semi-naive restriction).
/// `emit` receives each complete binding with one supporting fact per atom,
/// in atom order.
pub(crate) fn solve(
    kb: &Ontology,
    atoms: &[PatternAtom],
    delta: Option<(usize, &FactDelta)>,
    init: Binding,
    emit: &mut dyn FnMut(&Binding, &[Fact]),
) {
    let mut state = Search {
        kb,
        atoms,
        delta,
        done: vec![false; atoms.len()],
        support: vec![None; atoms.len()],
        binding: init,
    };
    state.step(atoms.len(), emit);
}

struct Search<'a> {
    kb: &'a Ontology,
    atoms: &'a [PatternAtom],
    delta: Option<(usize, &'a FactDelta)>,
    done: Vec<bool>,
    support: Vec<Option<Fact>>,
    binding: Binding,
}

impl Search<'_> {
    fn pick(&self) -> usize {
        if let Some((d, _)) = self.delta {
            if !self.done[d] {
                return d;
            }
        }
        let mut best = None;
        for (i, atom) in self.atoms.iter().enumerate() {
            if self.done[i] {
                continue;
            }
            let bound = atom.terms().iter().filter(|t| t.resolve(&self.binding).is_some()).count();
            if best.is_none_or(|(_, b)| bound > b) {
                best = Some((i, bound));
            }
        }
        best.map(|(i, _)| i).expect("an unsolved atom remains")
    }

    fn step(&mut self, remaining: usize, emit: &mut dyn FnMut(&Binding, &[Fact])) {
        if remaining == 0 {
            let support: Vec<Fact> = self.support.iter().map(|f| f.clone().expect("every atom has support")).collect();
            emit(&self.binding, &support);
            return;
        }
        let idx = self.pick();
        let restricted = match self.delta {
            Some((d, facts)) if d == idx => Some(facts),
            _ => None,
        };
        let candidates = self.candidates(idx, restricted);
        self.done[idx] = true;
        for (fact, new_vars) in candidates {
            for (var, value) in &new_vars {
                self.binding.insert(var.clone(), value.clone());
            }
            self.support[idx] = Some(fact);
            self.step(remaining - 1, emit);
            for (var, _) in &new_vars {
                self.binding.remove(var);
            }
        }
        self.support[idx] = None;
        self.done[idx] = false;
    }

    /// Facts that satisfy atom `idx` under the current binding, each with the
    /// variable assignments it adds.
    fn candidates(&self, idx: usize, restricted: Option<&FactDelta>) -> Vec<(Fact, Vec<(String, Value)>)> {
        let kb = self.kb;
        let mut out = Vec::new();
        match &self.atoms[idx] {
            PatternAtom::Class { class, term } => match term.resolve(&self.binding) {
                Some(Value::Individual(id)) => {
                    if let Some(f) = self.class_support(id, class, restricted) {
                        out.push((f, vec![]));
                    }
                }
                Some(Value::Literal(_)) => {}
                None => {
                    let var = term.as_var().expect("unresolved term is a variable").to_string();
                    match restricted {
                        Some(delta) => {
                            let mut seen = BTreeSet::new();
                            for f in delta {
                                if let Fact::Instance { individual, class: d } = f {
                                    if kb.is_subclass_of(d, class) && seen.insert(individual.clone()) {
                                        out.push((f.clone(), vec![(var.clone(), Value::ind(individual))]));
                                    }
                                }
                            }
                        }
                        None => {
                            for (id, direct) in &kb.individuals {
                                if let Some(d) = direct.keys().find(|d| kb.is_subclass_of(d, class)) {
                                    out.push((Fact::instance(id, d), vec![(var.clone(), Value::ind(id))]));
                                }
                            }
                        }
                    }
                }
            },
            PatternAtom::Property { relation, subject, object } => {
                let s_val = subject.resolve(&self.binding).cloned();
                let o_val = object.resolve(&self.binding).cloned();
                if matches!(s_val, Some(Value::Literal(_))) {
                    return out;
                }
                let mut consider = |s: &str, o: &Value| {
                    if let Some(Value::Individual(bound)) = &s_val {
                        if bound != s {
                            return;
                        }
                    }
                    if let Some(bound) = &o_val {
                        if bound != o {
                            return;
                        }
                    }
                    let mut adds = Vec::new();
                    if s_val.is_none() {
                        adds.push((subject.as_var().unwrap().to_string(), Value::ind(s)));
                    }
                    if o_val.is_none() {
                        let ov = object.as_var().unwrap().to_string();
                        // P(?x, ?x): second occurrence must agree with the first
                        if let Some((v, val)) = adds.first() {
                            if *v == ov {
                                if val != o {
                                    return;
                                }
                            } else {
                                adds.push((ov, o.clone()));
                            }
                        } else {
                            adds.push((ov, o.clone()));
                        }
                    }
                    out.push((Fact::property(s, relation, o.clone()), adds));
                };
                match restricted {
                    Some(delta) => {
                        for f in delta {
                            if let Fact::Property { subject: s, relation: r, object: o } = f {
                                if r == relation {
                                    consider(s, o);
                                }
                            }
                        }
                    }
                    None => {
                        let Some(by_subject) = kb.properties.get(relation) else { return out };
                        match &s_val {
                            Some(Value::Individual(s)) => {
                                if let Some(objs) = by_subject.get(s) {
                                    match &o_val {
                                        Some(o) => {
                                            if objs.contains_key(o) {
                                                consider(s, o);
                                            }
                                        }
                                        None => objs.keys().for_each(|o| consider(s, o)),
                                    }
                                }
                            }
                            _ => {
                                for (s, objs) in by_subject {
                                    for o in objs.keys() {
                                        consider(s, o);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn class_support(&self, id: &str, class: &str, restricted: Option<&FactDelta>) -> Option<Fact> {
        let kb = self.kb;
        match restricted {
            Some(delta) => delta
                .range(Fact::instance(id, "")..)
                .take_while(|f| matches!(f, Fact::Instance { individual, .. } if individual == id))
                .find(|f| matches!(f, Fact::Instance { class: d, .. } if kb.is_subclass_of(d, class)))
                .cloned(),
            None => {
                let direct = kb.individuals.get(id)?;
                direct.keys().find(|d| kb.is_subclass_of(d, class)).map(|d| Fact::instance(id, d))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{Assertion, Decimal};

    fn kb() -> Ontology {
        crate::kb::tests::tiny()
    }

    #[test]
    fn subclass_transitivity() {
        let kb = kb();
        let r = kb.query(&[PatternAtom::class("Phone", Term::var("x"))]).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0]["x"], Value::ind("Nokia_E72"));
    }

    #[test]
    fn literal_values() {
        let mut kb = kb();
        kb.assert_fact(Assertion::loaded(Fact::property(
            "Finding309",
            "hasValue",
            Value::dec("11.23".parse::<Decimal>().unwrap()),
        )))
        .unwrap();
        let r = kb.query(&[PatternAtom::property("hasValue", Term::var("f"), Term::var("v"))]).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0]["f"], Value::ind("Finding309"));
        assert_eq!(r[0]["v"], Value::dec(Decimal::from_scaled(112_300)));
    }

    #[test]
    fn empty_kb_gives_nothing() {
        let mut empty = Ontology::new();
        empty
            .add_class(crate::kb::ClassDef {
                name: "Phone".into(),
                parents: Default::default(),
                namespace: crate::kb::Namespace::Common,
            })
            .unwrap();
        assert!(empty.query(&[PatternAtom::class("Phone", Term::var("x"))]).unwrap().is_empty());
    }

    #[test]
    fn unknown_predicate_is_error() {
        let kb = kb();
        assert!(kb.query(&[PatternAtom::class("Widget", Term::var("x"))]).is_err());
        assert!(kb.query(&[PatternAtom::property("nope", Term::var("x"), Term::var("y"))]).is_err());
    }

    #[test]
    fn join_through_shared_variable() {
        let mut kb = kb();
        kb.assert_fact(Assertion::loaded(Fact::property("Nokia_E72", "hasCharacteristic", Value::ind("Nokia"))))
            .unwrap();
        let r = kb
            .query(&[
                PatternAtom::class("NewPhone", Term::var("p")),
                PatternAtom::property("hasCharacteristic", Term::var("p"), Term::var("b")),
                PatternAtom::class("PhoneBrand", Term::var("b")),
            ])
            .unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0]["b"], Value::ind("Nokia"));
    }
}
