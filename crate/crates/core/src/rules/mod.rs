//! DL-safe forward chaining over the knowledge base.
//!
//! Rules are conjunctive: a body of class/property atoms plus comparison
//! builtins, and a head of class/property atoms. Head variables that do not
//! occur in the body are fresh individuals whose ids are derived
//! deterministically from the rule id and the body binding, so re-deriving
//! the same conclusion is a no-op. There is no negation and no retraction:
//! the assertion set only grows and the fixpoint does not depend on the order
//! rules are applied in.

mod engine;
mod explain;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kb::{Literal, Ontology, PatternAtom, Range, Term, Value, Violation};

pub use crate::kb::Derivation;
pub use engine::{
    fire, match_rule, run_to_fixpoint, Diagnostic, EngineConfig, EngineError, FiringRecord, FixpointOutcome, Match,
    Strategy,
};
pub use explain::{explain, explain_individual, Explanation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompareOp {
    GreaterThan,
    LessThan,
    Equals,
}

impl CompareOp {
    pub fn name(self) -> &'static str {
        match self {
            CompareOp::GreaterThan => "greater-than",
            CompareOp::LessThan => "less-than",
            CompareOp::Equals => "equals",
        }
    }
}

/// Builtin value expression.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expr {
    Term(Term),
    /// The run's injected clock date.
    Now,
    DateMinusDays(Box<Expr>, i64),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Self {
        Expr::Term(Term::Var(name.into()))
    }

    pub fn lit(l: Literal) -> Self {
        Expr::Term(Term::Const(Value::Literal(l)))
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Term(Term::Var(v)) => out.push(v),
            Expr::Term(Term::Const(_)) | Expr::Now => {}
            Expr::DateMinusDays(inner, _) => inner.collect_vars(out),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Term(t) => write!(f, "{t}"),
            Expr::Now => f.write_str("now()"),
            Expr::DateMinusDays(e, n) => write!(f, "date-minus-days({e}, {n})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Builtin {
    pub op: CompareOp,
    pub left: Expr,
    pub right: Expr,
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}, {})", self.op.name(), self.left, self.right)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Atom {
    Pattern(PatternAtom),
    Builtin(Builtin),
}

impl Atom {
    pub fn class(class: impl Into<String>, term: Term) -> Self {
        Atom::Pattern(PatternAtom::class(class, term))
    }

    pub fn property(relation: impl Into<String>, subject: Term, object: Term) -> Self {
        Atom::Pattern(PatternAtom::property(relation, subject, object))
    }

    pub fn builtin(op: CompareOp, left: Expr, right: Expr) -> Self {
        Atom::Builtin(Builtin { op, left, right })
    }

    pub fn vars(&self) -> Vec<&str> {
        match self {
            Atom::Pattern(p) => p.vars().collect(),
            Atom::Builtin(b) => {
                let mut out = Vec::new();
                b.left.collect_vars(&mut out);
                b.right.collect_vars(&mut out);
                out
            }
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Pattern(p) => write!(f, "{p}"),
            Atom::Builtin(b) => write!(f, "{b}"),
        }
    }
}

/// A head variable bound to a newly created individual.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreshIndividual {
    pub var: String,
    pub class: String,
    /// Id prefix; the id is `<prefix>_<8 hex digits>`.
    pub prefix: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub body: Vec<Atom>,
    pub head: Vec<PatternAtom>,
    pub fresh: Vec<FreshIndividual>,
}

impl Rule {
    pub fn patterns(&self) -> impl Iterator<Item = &PatternAtom> {
        self.body.iter().filter_map(|a| match a {
            Atom::Pattern(p) => Some(p),
            Atom::Builtin(_) => None,
        })
    }

    pub fn builtins(&self) -> impl Iterator<Item = &Builtin> {
        self.body.iter().filter_map(|a| match a {
            Atom::Builtin(b) => Some(b),
            Atom::Pattern(_) => None,
        })
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let body: Vec<String> = self.body.iter().map(|a| a.to_string()).collect();
        let head: Vec<String> = self.head.iter().map(|a| a.to_string()).collect();
        write!(f, "{}: {} -> {}", self.id, body.join(" ^ "), head.join(" ^ "))
    }
}

/// Checks DL-safety and schema resolution. An empty list means the rule is
/// safe to run.
pub fn check_dl_safe(rule: &Rule, schema: &Ontology) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |msg: String| out.push(Violation { item: format!("rule {}", rule.id), rule: msg });

    if rule.body.is_empty() {
        push("empty body".into());
    }
    if rule.head.is_empty() {
        push("empty head".into());
    }
    let bound: BTreeSet<&str> = rule.patterns().flat_map(|p| p.vars()).collect();
    if rule.patterns().next().is_none() && !rule.body.is_empty() {
        push("body has no class or property atom".into());
    }
    let mut unsafe_vars = BTreeSet::new();
    for b in rule.builtins() {
        for v in Atom::Builtin(b.clone()).vars() {
            if !bound.contains(v) {
                unsafe_vars.insert(v.to_string());
            }
        }
    }
    let fresh: BTreeSet<&str> = rule.fresh.iter().map(|f| f.var.as_str()).collect();
    for f in &rule.fresh {
        if bound.contains(f.var.as_str()) {
            push(format!("fresh variable ?{} also occurs in the body", f.var));
        }
        if schema.class(&f.class).is_none() {
            push(format!("unknown class `{}`", f.class));
        }
        if !crate::kb::is_identifier(&f.prefix) {
            push(format!("invalid id prefix `{}`", f.prefix));
        }
    }
    for h in &rule.head {
        for v in h.vars() {
            if !bound.contains(v) && !fresh.contains(v) {
                unsafe_vars.insert(v.to_string());
            }
        }
    }
    for v in unsafe_vars {
        push(format!("unsafe variable ?{v}"));
    }
    let atoms = rule.patterns().map(|p| (p, "body")).chain(rule.head.iter().map(|p| (p, "head")));
    for (p, part) in atoms {
        match p {
            PatternAtom::Class { class, term } => {
                if schema.class(class).is_none() {
                    push(format!("unknown class `{class}` in {part}"));
                }
                if let Term::Const(Value::Literal(l)) = term {
                    push(format!("class atom `{class}` applied to literal {}", l.to_token()));
                }
            }
            PatternAtom::Property { relation, subject, object } => {
                let Some(rel) = schema.relation(relation) else {
                    push(format!("unknown relation `{relation}` in {part}"));
                    continue;
                };
                if let Term::Const(Value::Literal(l)) = subject {
                    push(format!("subject of `{relation}` is literal {}", l.to_token()));
                }
                match (&rel.range, object) {
                    (Range::Datatype(d), Term::Const(Value::Literal(l))) if l.datatype() != *d => {
                        push(format!("`{relation}` expects {d}, got {} {}", l.datatype(), l.to_token()))
                    }
                    (Range::Datatype(d), Term::Const(Value::Individual(i))) => {
                        push(format!("`{relation}` expects {d}, got individual {i}"))
                    }
                    (Range::Class(c), Term::Const(Value::Literal(l))) => {
                        push(format!("`{relation}` expects a `{c}` individual, got {}", l.to_token()))
                    }
                    _ => {}
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Ontology {
        crate::kb::load_ontology(
            "class Thing ns=common\nclass Phone sub Thing ns=common\nclass NewPhone sub Phone ns=common\nclass Finding sub Thing ns=common\nrel hasValue dom=Finding rng=decimal\nrel relatedTo dom=Finding rng=Thing\nrel seenOn dom=Phone rng=date\n",
        )
        .unwrap()
    }

    #[test]
    fn unsafe_head_variable() {
        let rule = Rule {
            id: "r".into(),
            body: vec![Atom::class("Phone", Term::var("x"))],
            head: vec![PatternAtom::property("relatedTo", Term::var("z"), Term::var("x"))],
            fresh: vec![],
        };
        let v = check_dl_safe(&rule, &schema());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "unsafe variable ?z");
    }

    #[test]
    fn builtin_only_body() {
        let rule = Rule {
            id: "r".into(),
            body: vec![Atom::builtin(CompareOp::GreaterThan, Expr::Now, Expr::var("d"))],
            head: vec![PatternAtom::class("Finding", Term::ind("F"))],
            fresh: vec![],
        };
        let v = check_dl_safe(&rule, &schema());
        assert!(v.iter().any(|v| v.rule.contains("no class or property atom")), "{v:?}");
        assert!(v.iter().any(|v| v.rule == "unsafe variable ?d"), "{v:?}");
    }

    #[test]
    fn fresh_head_is_safe() {
        let rule = Rule {
            id: "r".into(),
            body: vec![
                Atom::class("NewPhone", Term::var("p")),
                Atom::property("seenOn", Term::var("p"), Term::var("d")),
                Atom::builtin(CompareOp::GreaterThan, Expr::var("d"), Expr::DateMinusDays(Box::new(Expr::Now), 14)),
            ],
            head: vec![
                PatternAtom::class("Finding", Term::var("f")),
                PatternAtom::property("relatedTo", Term::var("f"), Term::var("p")),
            ],
            fresh: vec![FreshIndividual { var: "f".into(), class: "Finding".into(), prefix: "Alert".into() }],
        };
        assert!(check_dl_safe(&rule, &schema()).is_empty());
    }

    #[test]
    fn schema_resolution() {
        let rule = Rule {
            id: "r".into(),
            body: vec![Atom::class("Widget", Term::var("x"))],
            head: vec![PatternAtom::property("hasValue", Term::var("x"), Term::Const(Value::str("ten")))],
            fresh: vec![],
        };
        let v = check_dl_safe(&rule, &schema());
        assert_eq!(v.len(), 2, "{v:?}");
    }
}
