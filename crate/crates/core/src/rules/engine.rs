use std::collections::{BTreeMap, BTreeSet, VecDeque};

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Builtin, CompareOp, Expr, Rule};
use crate::kb::{
    solve, Assertion, Binding, Derivation, Fact, FactDelta, KbError, Literal, Ontology, PatternAtom, Provenance, Term,
    Value,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Naive,
    SemiNaive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineConfig {
    /// Value of `now()`; fixed for a whole run.
    pub now: NaiveDate,
    /// Maximum number of productive firings before giving up.
    pub max_firings: usize,
    pub strategy: Strategy,
}

impl EngineConfig {
    pub fn new(now: NaiveDate) -> Self {
        EngineConfig { now, max_firings: 10_000, strategy: Strategy::SemiNaive }
    }
}

/// A body match: the binding plus one supporting fact per class/property atom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Match {
    pub binding: Binding,
    pub support: Vec<Fact>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub rule: String,
    pub message: String,
}

/// One record per firing, kept as the engine's diagnostics log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiringRecord {
    pub rule: String,
    pub binding: Binding,
    pub produced: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixpointOutcome {
    /// Derivations that produced at least one new assertion, in firing order.
    pub derivations: Vec<Derivation>,
    pub firings: Vec<FiringRecord>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("firing cap of {cap} exceeded; last firings: {}", .last.join(" | "))]
    IterationCap { cap: usize, last: Vec<String> },
    #[error("rule `{rule}` produced an assertion the schema rejects: {source}")]
    HeadViolation { rule: String, source: KbError },
    #[error("rule `{rule}` is not DL-safe: {}", .violations.join("; "))]
    Unsafe { rule: String, violations: Vec<String> },
    #[error("unknown assertion `{0}`")]
    UnknownAssertion(String),
}

/// All bindings of the rule body over `kb`. Builtins are evaluated once the
/// class/property atoms have bound every variable; a type error in a builtin
/// drops that candidate and is reported as a diagnostic.
pub fn match_rule(rule: &Rule, kb: &Ontology, now: NaiveDate) -> (Vec<Match>, Vec<Diagnostic>) {
    let patterns: Vec<PatternAtom> = rule.patterns().cloned().collect();
    collect_matches(rule, &patterns, kb, now, None)
}

fn collect_matches(
    rule: &Rule,
    patterns: &[PatternAtom],
    kb: &Ontology,
    now: NaiveDate,
    delta: Option<(usize, &FactDelta)>,
) -> (Vec<Match>, Vec<Diagnostic>) {
    let builtins: Vec<&Builtin> = rule.builtins().collect();
    let mut seen = BTreeSet::new();
    let mut matches = Vec::new();
    let mut diagnostics = Vec::new();
    solve(kb, patterns, delta, Binding::new(), &mut |binding, support| {
        for b in &builtins {
            match eval_builtin(b, binding, now) {
                Ok(true) => {}
                Ok(false) => return,
                Err(message) => {
                    diagnostics.push(Diagnostic { rule: rule.id.clone(), message });
                    return;
                }
            }
        }
        if seen.insert(binding.clone()) {
            matches.push(Match { binding: binding.clone(), support: support.to_vec() });
        }
    });
    (matches, diagnostics)
}

fn eval_expr(e: &Expr, binding: &Binding, now: NaiveDate) -> Result<Value, String> {
    match e {
        Expr::Term(Term::Const(v)) => Ok(v.clone()),
        Expr::Term(Term::Var(v)) => binding.get(v).cloned().ok_or_else(|| format!("unbound variable ?{v}")),
        Expr::Now => Ok(Value::date(now)),
        Expr::DateMinusDays(inner, days) => match eval_expr(inner, binding, now)? {
            Value::Literal(Literal::Date(d)) => Ok(Value::date(d - Duration::days(*days))),
            other => Err(format!("date-minus-days applied to non-date {other}")),
        },
    }
}

fn eval_builtin(b: &Builtin, binding: &Binding, now: NaiveDate) -> Result<bool, String> {
    let l = eval_expr(&b.left, binding, now)?;
    let r = eval_expr(&b.right, binding, now)?;
    let ordering = match (&l, &r) {
        (Value::Literal(Literal::Decimal(a)), Value::Literal(Literal::Decimal(b))) => a.cmp(b),
        (Value::Literal(Literal::Date(a)), Value::Literal(Literal::Date(b))) => a.cmp(b),
        _ if b.op == CompareOp::Equals => {
            return if std::mem::discriminant(&l) == std::mem::discriminant(&r)
                && l.as_literal().map(Literal::datatype) == r.as_literal().map(Literal::datatype)
            {
                Ok(l == r)
            } else {
                Err(format!("equals on mismatched types {l} and {r}"))
            };
        }
        _ => return Err(format!("{} on incomparable values {l} and {r}", b.op.name())),
    };
    Ok(match b.op {
        CompareOp::GreaterThan => ordering.is_gt(),
        CompareOp::LessThan => ordering.is_lt(),
        CompareOp::Equals => ordering.is_eq(),
    })
}

/// Deterministic id for a fresh head individual.
pub(crate) fn skolem_id(rule: &Rule, var: &str, prefix: &str, binding: &Binding) -> String {
    let mut h = Sha256::new();
    h.update(rule.id.as_bytes());
    h.update(b"\n");
    h.update(var.as_bytes());
    for (k, v) in binding {
        h.update(b"\n");
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.to_token().as_bytes());
    }
    let digest = h.finalize();
    format!("{prefix}_{}", hex::encode(&digest[..4]))
}

/// Applies the rule head under a match. Facts already in the kb are not
/// produced again, so re-firing the same match yields an empty derivation.
pub fn fire(rule: &Rule, m: &Match, kb: &mut Ontology) -> Result<Derivation, EngineError> {
    let mut full = m.binding.clone();
    for f in &rule.fresh {
        full.insert(f.var.clone(), Value::ind(skolem_id(rule, &f.var, &f.prefix, &m.binding)));
    }
    // class memberships first so property domain checks see them
    let mut facts: Vec<Fact> = Vec::new();
    for f in &rule.fresh {
        if let Some(Value::Individual(id)) = full.get(&f.var) {
            facts.push(Fact::instance(id, &f.class));
        }
    }
    let (classes, props): (Vec<&PatternAtom>, Vec<&PatternAtom>) =
        rule.head.iter().partition(|a| matches!(a, PatternAtom::Class { .. }));
    for atom in classes.into_iter().chain(props) {
        match atom.ground(&full) {
            Some(f) => {
                if !facts.contains(&f) {
                    facts.push(f)
                }
            }
            None => {
                return Err(EngineError::HeadViolation {
                    rule: rule.id.clone(),
                    source: KbError::UnknownIndividual(format!("unbound head atom {atom}")),
                })
            }
        }
    }
    let provenance = Provenance::Derived(rule.id.clone());
    let mut produced = Vec::new();
    for fact in facts {
        if kb.contains(&fact) {
            continue;
        }
        let a = Assertion::new(fact, provenance.clone());
        kb.assert_fact(a.clone()).map_err(|source| EngineError::HeadViolation { rule: rule.id.clone(), source })?;
        produced.push(a);
    }
    let mut support = Vec::new();
    for f in &m.support {
        let p = kb.provenance(f).cloned().unwrap_or(Provenance::Loaded);
        let a = Assertion::new(f.clone(), p);
        if !support.contains(&a) {
            support.push(a);
        }
    }
    let derivation = Derivation { rule: rule.id.clone(), binding: m.binding.clone(), support, produced };
    if !derivation.produced.is_empty() {
        kb.record_derivation(derivation.clone());
    }
    Ok(derivation)
}

struct Run<'a> {
    config: &'a EngineConfig,
    outcome: FixpointOutcome,
    productive: usize,
    recent: VecDeque<String>,
}

impl Run<'_> {
    /// Fires every match, returning the facts that were new.
    fn apply(&mut self, rule: &Rule, matches: Vec<Match>, kb: &mut Ontology) -> Result<Vec<Fact>, EngineError> {
        let mut new = Vec::new();
        for m in matches {
            let d = fire(rule, &m, kb)?;
            self.outcome.firings.push(FiringRecord {
                rule: rule.id.clone(),
                binding: m.binding.clone(),
                produced: d.produced.len(),
            });
            if d.produced.is_empty() {
                continue;
            }
            self.productive += 1;
            let label = format!(
                "{}{{{}}}",
                rule.id,
                m.binding.iter().map(|(k, v)| format!("{k}={}", v.to_token())).collect::<Vec<_>>().join(",")
            );
            if self.recent.len() == 10 {
                self.recent.pop_front();
            }
            self.recent.push_back(label);
            if self.productive > self.config.max_firings {
                return Err(EngineError::IterationCap {
                    cap: self.config.max_firings,
                    last: self.recent.iter().cloned().collect(),
                });
            }
            new.extend(d.produced.iter().map(|a| a.fact.clone()));
            self.outcome.derivations.push(d);
        }
        Ok(new)
    }
}

/// Applies `rules` until no rule has an unfired match. The final fact set
/// does not depend on the order of `rules`; a fact several rules derive is
/// credited to whichever fired first.
pub fn run_to_fixpoint(kb: &mut Ontology, rules: &[Rule], config: &EngineConfig) -> Result<FixpointOutcome, EngineError> {
    for rule in rules {
        let v = super::check_dl_safe(rule, kb);
        if !v.is_empty() {
            return Err(EngineError::Unsafe { rule: rule.id.clone(), violations: v.into_iter().map(|v| v.rule).collect() });
        }
    }
    let mut run = Run { config, outcome: FixpointOutcome::default(), productive: 0, recent: VecDeque::new() };
    match config.strategy {
        Strategy::Naive => loop {
            let mut changed = false;
            for rule in rules {
                let (matches, diags) = match_rule(rule, kb, config.now);
                run.outcome.diagnostics.extend(diags);
                changed |= !run.apply(rule, matches, kb)?.is_empty();
            }
            if !changed {
                break;
            }
        },
        Strategy::SemiNaive => {
            let mut delta: FactDelta = BTreeSet::new();
            for rule in rules {
                let (matches, diags) = match_rule(rule, kb, config.now);
                run.outcome.diagnostics.extend(diags);
                delta.extend(run.apply(rule, matches, kb)?);
            }
            while !delta.is_empty() {
                let mut next = BTreeSet::new();
                for rule in rules {
                    let patterns: Vec<PatternAtom> = rule.patterns().cloned().collect();
                    let mut matches = Vec::new();
                    let mut seen = BTreeSet::new();
                    for i in 0..patterns.len() {
                        if !touches(&patterns[i], &delta, kb) {
                            continue;
                        }
                        let (ms, diags) = collect_matches(rule, &patterns, kb, config.now, Some((i, &delta)));
                        run.outcome.diagnostics.extend(diags);
                        for m in ms {
                            if seen.insert(m.binding.clone()) {
                                matches.push(m);
                            }
                        }
                    }
                    next.extend(run.apply(rule, matches, kb)?);
                }
                delta = next;
            }
        }
    }
    dedup_diagnostics(&mut run.outcome.diagnostics);
    Ok(run.outcome)
}

/// Cheap pre-filter: can any delta fact satisfy this atom?
fn touches(atom: &PatternAtom, delta: &FactDelta, kb: &Ontology) -> bool {
    delta.iter().any(|f| match (atom, f) {
        (PatternAtom::Class { class, .. }, Fact::Instance { class: c, .. }) => kb.is_subclass_of(c, class),
        (PatternAtom::Property { relation, .. }, Fact::Property { relation: r, .. }) => r == relation,
        _ => false,
    })
}

fn dedup_diagnostics(d: &mut Vec<Diagnostic>) {
    let mut seen = BTreeMap::new();
    d.retain(|x| seen.insert((x.rule.clone(), x.message.clone()), ()).is_none());
}
