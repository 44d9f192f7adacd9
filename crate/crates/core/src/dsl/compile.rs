use std::collections::BTreeMap;

use chrono::NaiveDate;

use super::{
    pascal, ClassRef, Constraint, DslError, DslErrorKind, Link, Object, Operand, Pos, SlotBinding, Template,
    TemplateInstance, KEY_RELATIONS,
};
use crate::kb::{Datatype, Decimal, Literal, Ontology, PatternAtom, Range, Term, Value};
use crate::rules::{check_dl_safe, Atom, CompareOp, Expr, FreshIndividual, Rule};

#[derive(Debug, Clone, PartialEq, Eq)]
enum VarType {
    Individual(Vec<String>),
    Value(Datatype),
}

/// Relation through which individuals of `classes` are compared, with the
/// datatype it yields.
pub(crate) fn key_relation<'a>(schema: &'a Ontology, classes: &[String]) -> Option<(&'a str, Datatype)> {
    KEY_RELATIONS.iter().find_map(|k| {
        let r = schema.relation(k)?;
        let Range::Datatype(d) = r.range else { return None };
        classes.iter().any(|c| schema.is_subclass_of(c, &r.domain)).then_some((r.name.as_str(), d))
    })
}

pub(crate) fn typed_literal(raw: &str, d: Datatype) -> Result<Literal, String> {
    match d {
        Datatype::String => Ok(Literal::String(raw.to_string())),
        Datatype::Decimal => Decimal::parse_localized(raw).map(Literal::Decimal).map_err(|e| e.to_string()),
        Datatype::Date => NaiveDate::parse_from_str(raw, "%Y-%m-%d")
            .map(Literal::Date)
            .map_err(|_| format!("`{raw}` is not a date")),
        Datatype::Boolean => match raw {
            "true" => Ok(Literal::Boolean(true)),
            "false" => Ok(Literal::Boolean(false)),
            _ => Err(format!("`{raw}` is not a boolean")),
        },
    }
}

fn err(kind: DslErrorKind, at: Pos, phrase: impl Into<String>, message: impl Into<String>) -> DslError {
    DslError::new(kind, at, phrase, message)
}

struct Checker<'a> {
    schema: &'a Ontology,
    vars: BTreeMap<String, VarType>,
}

impl<'a> Checker<'a> {
    fn class(&self, c: &ClassRef) -> Result<(), DslError> {
        if self.schema.class(&c.name).is_none() {
            return Err(err(DslErrorKind::UnknownClass, c.at, &c.name, format!("class `{}` is not in the schema", c.name)));
        }
        if let Some(a) = &c.annotation {
            if self.schema.class(a).is_none() {
                return Err(err(DslErrorKind::UnknownClass, c.at, a, format!("class `{a}` is not in the schema")));
            }
            if !self.schema.is_subclass_of(&c.name, a) {
                return Err(err(
                    DslErrorKind::ClassMismatch,
                    c.at,
                    c.to_string(),
                    format!("`{}` is not a kind of `{a}`", c.name),
                ));
            }
        }
        Ok(())
    }

    fn bind_individual(&mut self, var: &str, class: &str, at: Pos, phrase: &str) -> Result<(), DslError> {
        match self.vars.get_mut(var) {
            None => {
                self.vars.insert(var.to_string(), VarType::Individual(vec![class.to_string()]));
                Ok(())
            }
            Some(VarType::Individual(cs)) => {
                if !cs.iter().any(|c| c == class) {
                    cs.push(class.to_string());
                }
                Ok(())
            }
            Some(VarType::Value(d)) => Err(err(
                DslErrorKind::TypeError,
                at,
                phrase,
                format!("`{var}` is a {d} value, not an individual"),
            )),
        }
    }

    /// Declarations in the IF part. Comparisons are checked afterwards so
    /// they may refer to variables declared further down.
    fn declare_block(&mut self, subject: &str, block: &[Constraint]) -> Result<(), DslError> {
        for c in block {
            let Constraint::Link(link) = c else { continue };
            self.declare_link(subject, link, true)?;
        }
        Ok(())
    }

    fn declare_link(&mut self, subject: &str, link: &Link, body: bool) -> Result<(), DslError> {
        let phrase = format!("{} {}", super::relation_phrase(&link.relation), object_text(&link.object));
        let rel = self.schema.relation(&link.relation).ok_or_else(|| {
            err(DslErrorKind::UnknownProperty, link.at, &phrase, format!("relation `{}` is not in the schema", link.relation))
        })?;
        match self.vars.get(subject) {
            Some(VarType::Individual(cs)) => {
                if !cs.iter().any(|c| self.schema.is_subclass_of(c, &rel.domain)) {
                    return Err(err(
                        DslErrorKind::ClassMismatch,
                        link.at,
                        &phrase,
                        format!("`{}` applies to {}, not to `{subject}` ({})", link.relation, rel.domain, cs.join(", ")),
                    ));
                }
            }
            Some(VarType::Value(d)) => {
                return Err(err(DslErrorKind::TypeError, link.at, &phrase, format!("`{subject}` is a {d} value and has no properties")))
            }
            None => {
                return Err(err(DslErrorKind::UnknownVariable, link.at, subject, format!("`{subject}` is not bound")))
            }
        }
        if let Some(c) = &link.class {
            self.class(c)?;
        }
        if !body && !link.block.is_empty() {
            return Err(err(DslErrorKind::Syntax, link.at, &phrase, "nested blocks are only allowed in the IF part"));
        }
        match (&rel.range, &link.object) {
            (Range::Class(r), Object::Literal(l)) => {
                Err(err(DslErrorKind::TypeError, link.at, &phrase, format!("`{}` expects a {r} individual, got \"{l}\"", link.relation)))
            }
            (Range::Datatype(d), Object::Literal(l)) => {
                typed_literal(l, *d).map_err(|m| err(DslErrorKind::TypeError, link.at, &phrase, m))?;
                if link.class.is_some() || !link.block.is_empty() {
                    return Err(err(DslErrorKind::Syntax, link.at, &phrase, "a literal cannot be described further"));
                }
                Ok(())
            }
            (Range::Class(r), Object::Var(v)) => {
                let class = link.class.as_ref().map(|c| c.name.clone()).unwrap_or_else(|| r.clone());
                if !self.schema.is_subclass_of(&class, r) {
                    return Err(err(
                        DslErrorKind::ClassMismatch,
                        link.at,
                        format!("{v} which is {class}"),
                        format!("`{}` expects a {r}, `{class}` is not one", link.relation),
                    ));
                }
                if !body && !self.vars.contains_key(v) {
                    return Err(err(DslErrorKind::UnknownVariable, link.at, v, format!("`{v}` is not bound in the IF part")));
                }
                if let Some(VarType::Individual(cs)) = self.vars.get(v) {
                    if link.class.is_none() && !cs.iter().any(|c| self.schema.is_subclass_of(c, r)) {
                        return Err(err(
                            DslErrorKind::ClassMismatch,
                            link.at,
                            &phrase,
                            format!("`{v}` ({}) is not a {r}", cs.join(", ")),
                        ));
                    }
                }
                self.bind_individual(v, &class, link.at, &phrase)?;
                self.declare_block(v, &link.block)
            }
            (Range::Datatype(d), Object::Var(v)) => {
                match self.vars.get(v) {
                    Some(VarType::Value(e)) if e == d => {}
                    Some(_) => {
                        return Err(err(DslErrorKind::TypeError, link.at, &phrase, format!("`{v}` is used with two different types")))
                    }
                    None if !body => {
                        return Err(err(DslErrorKind::UnknownVariable, link.at, v, format!("`{v}` is not bound in the IF part")))
                    }
                    None => {
                        self.vars.insert(v.clone(), VarType::Value(*d));
                    }
                }
                if let Some(c) = &link.class {
                    if key_relation(self.schema, std::slice::from_ref(&c.name)).map(|k| k.1) != Some(*d) {
                        return Err(err(
                            DslErrorKind::ClassMismatch,
                            c.at,
                            format!("{v} which is {}", c.name),
                            format!("a {d} value cannot be described as `{}`", c.name),
                        ));
                    }
                }
                if link.block.iter().any(|c| matches!(c, Constraint::Link(_))) {
                    return Err(err(DslErrorKind::TypeError, link.at, &phrase, format!("`{v}` is a {d} value and has no properties")));
                }
                Ok(())
            }
        }
    }

    fn comparable(&self, var: &str, at: Pos) -> Result<Datatype, DslError> {
        match self.vars.get(var) {
            None => Err(err(DslErrorKind::UnknownVariable, at, var, format!("`{var}` is not bound"))),
            Some(VarType::Value(d)) => Ok(*d),
            Some(VarType::Individual(cs)) => key_relation(self.schema, cs).map(|k| k.1).ok_or_else(|| {
                err(DslErrorKind::TypeError, at, var, format!("`{var}` ({}) has no value to compare", cs.join(", ")))
            }),
        }
    }

    fn check_compares(&self, subject: &str, block: &[Constraint]) -> Result<(), DslError> {
        for c in block {
            match c {
                Constraint::Link(l) => {
                    if let Object::Var(v) = &l.object {
                        self.check_compares(v, &l.block)?;
                    }
                }
                Constraint::Compare { op, target, at } => {
                    let phrase = format!("{subject} {} {target}", op.name());
                    let left = self.comparable(subject, *at).map_err(|e| DslError { phrase: phrase.clone(), ..e })?;
                    let right = match target {
                        Operand::Var(v) => self.comparable(v, *at).map_err(|e| DslError { phrase: phrase.clone(), ..e })?,
                        Operand::Literal(l) => typed_literal(l, left)
                            .map_err(|m| err(DslErrorKind::TypeError, *at, &phrase, format!("{m}; `{subject}` is a {left}")))?
                            .datatype(),
                        Operand::Now | Operand::NowMinusDays(_) => Datatype::Date,
                    };
                    if left != right {
                        return Err(err(DslErrorKind::TypeError, *at, &phrase, format!("cannot compare {left} with {right}")));
                    }
                    if *op != CompareOp::Equals && !matches!(left, Datatype::Date | Datatype::Decimal) {
                        return Err(err(DslErrorKind::TypeError, *at, &phrase, format!("{left} values are not ordered")));
                    }
                }
            }
        }
        Ok(())
    }

    fn check(inst: &TemplateInstance, schema: &'a Ontology) -> Result<Self, DslError> {
        let mut ck = Checker { schema, vars: BTreeMap::new() };
        if inst.conditions.is_empty() {
            return Err(err(DslErrorKind::Cardinality, Pos::default(), &inst.id, "the IF part needs at least one slot"));
        }
        if inst.results.is_empty() {
            return Err(err(DslErrorKind::Cardinality, Pos::default(), &inst.id, "the THEN part needs at least one slot"));
        }
        for s in &inst.conditions {
            ck.class(&s.class)?;
            if ck.vars.contains_key(&s.var) && inst.conditions.iter().filter(|o| o.var == s.var).count() > 1 {
                return Err(err(DslErrorKind::Syntax, s.at, &s.var, format!("`{}` fills two slots", s.var)));
            }
            ck.bind_individual(&s.var, &s.class.name, s.at, &s.var)?;
            ck.declare_block(&s.var, &s.block)?;
        }
        for s in &inst.conditions {
            ck.check_compares(&s.var, &s.block)?;
        }
        for s in &inst.results {
            ck.class(&s.class)?;
            if ck.vars.contains_key(&s.var) {
                return Err(err(
                    DslErrorKind::Syntax,
                    s.at,
                    &s.var,
                    format!("result `{}` must be a new individual, not a variable from the IF part", s.var),
                ));
            }
            ck.bind_individual(&s.var, &s.class.name, s.at, &s.var)?;
        }
        for s in &inst.results {
            for c in &s.block {
                match c {
                    Constraint::Link(l) => ck.declare_link(&s.var, l, false)?,
                    Constraint::Compare { at, .. } => {
                        return Err(err(DslErrorKind::Syntax, *at, &s.var, "comparisons are only allowed in the IF part"))
                    }
                }
            }
        }
        Ok(ck)
    }
}

fn object_text(o: &Object) -> String {
    match o {
        Object::Var(v) => v.clone(),
        Object::Literal(l) => format!("\"{l}\""),
    }
}

fn fit_slots(slots: &[SlotBinding], specs: &[super::SlotSpec], part: &str, schema: &Ontology) -> Result<(), DslError> {
    let mut counts = vec![0usize; specs.len()];
    for s in slots {
        let i = specs
            .iter()
            .position(|spec| spec.classes.iter().any(|c| schema.is_subclass_of(&s.class.name, c)))
            .ok_or_else(|| {
                let allowed: Vec<&str> = specs.iter().flat_map(|s| s.classes.iter().map(String::as_str)).collect();
                err(
                    DslErrorKind::ClassMismatch,
                    s.at,
                    format!("{} is {}", s.var, s.class.name),
                    format!("{part} slots accept {}, not `{}`", allowed.join(" or "), s.class.name),
                )
            })?;
        counts[i] += 1;
    }
    for (spec, n) in specs.iter().zip(counts) {
        if n < spec.min {
            return Err(err(
                DslErrorKind::Cardinality,
                Pos::default(),
                &spec.name,
                format!("{part} slot `{}` needs at least {} binding(s), got {n}", spec.name, spec.min),
            ));
        }
    }
    Ok(())
}

/// Checks an instance against its template and the schema.
pub fn validate(inst: &TemplateInstance, template: &Template, schema: &Ontology) -> Result<(), DslError> {
    if inst.template != template.name {
        return Err(err(
            DslErrorKind::UnknownTemplate,
            Pos::default(),
            &inst.template,
            format!("rule uses template `{}`, expected `{}`", inst.template, template.name),
        ));
    }
    Checker::check(inst, schema)?;
    fit_slots(&inst.conditions, &template.condition, "condition", schema)?;
    fit_slots(&inst.results, &template.result, "result", schema)?;
    compile(inst, schema).map(|_| ())
}

struct Builder<'a> {
    ck: &'a Checker<'a>,
    atoms: Vec<Atom>,
}

impl Builder<'_> {
    fn push(&mut self, a: Atom) {
        if !self.atoms.contains(&a) {
            self.atoms.push(a);
        }
    }

    fn object_term(&self, link: &Link) -> Term {
        match &link.object {
            Object::Var(v) => Term::var(v),
            Object::Literal(l) => {
                let Some(Range::Datatype(d)) = self.ck.schema.relation(&link.relation).map(|r| r.range.clone()) else {
                    unreachable!("checked")
                };
                Term::Const(Value::Literal(typed_literal(l, d).expect("checked")))
            }
        }
    }

    /// The value a variable is compared by: the variable itself for
    /// literals, or its key relation for individuals.
    fn value_expr(&mut self, var: &str) -> (Expr, Datatype) {
        match &self.ck.vars[var] {
            VarType::Value(d) => (Expr::var(var), *d),
            VarType::Individual(cs) => {
                let (key, d) = key_relation(self.ck.schema, cs).expect("checked");
                let kv = format!("{var}.{key}");
                self.push(Atom::property(key, Term::var(var), Term::var(&kv)));
                (Expr::var(kv), d)
            }
        }
    }

    fn block(&mut self, subject: &str, block: &[Constraint]) {
        for c in block {
            match c {
                Constraint::Link(l) => {
                    let obj = self.object_term(l);
                    self.push(Atom::property(&l.relation, Term::var(subject), obj));
                    if let Object::Var(v) = &l.object {
                        if let (Some(c), VarType::Individual(_)) = (&l.class, &self.ck.vars[v]) {
                            self.push(Atom::class(&c.name, Term::var(v)));
                        }
                        self.block(v, &l.block);
                    }
                }
                Constraint::Compare { op, target, .. } => {
                    let (left, d) = self.value_expr(subject);
                    let right = match target {
                        Operand::Var(v) => self.value_expr(v).0,
                        Operand::Literal(l) => Expr::lit(typed_literal(l, d).expect("checked")),
                        Operand::Now => Expr::Now,
                        Operand::NowMinusDays(n) => Expr::DateMinusDays(Box::new(Expr::Now), *n),
                    };
                    self.push(Atom::builtin(*op, left, right));
                }
            }
        }
    }
}

/// Translates an instance into an engine rule. Result slots become fresh
/// individuals named after the slot variable.
pub fn compile(inst: &TemplateInstance, schema: &Ontology) -> Result<Rule, DslError> {
    let ck = Checker::check(inst, schema)?;
    let mut b = Builder { ck: &ck, atoms: Vec::new() };
    for s in &inst.conditions {
        b.push(Atom::class(&s.class.name, Term::var(&s.var)));
        b.block(&s.var, &s.block);
    }
    let body = std::mem::take(&mut b.atoms);
    let mut fresh = Vec::new();
    for s in &inst.results {
        fresh.push(FreshIndividual { var: s.var.clone(), class: s.class.name.clone(), prefix: pascal(&[&s.var]) });
        b.push(Atom::class(&s.class.name, Term::var(&s.var)));
        for c in &s.block {
            if let Constraint::Link(l) = c {
                b.push(Atom::property(&l.relation, Term::var(&s.var), b.object_term(l)));
                if let (Some(c), Object::Var(v)) = (&l.class, &l.object) {
                    b.push(Atom::class(&c.name, Term::var(v)));
                }
            }
        }
    }
    let head = b
        .atoms
        .into_iter()
        .map(|a| match a {
            Atom::Pattern(p) => p,
            Atom::Builtin(_) => unreachable!("no builtins in the THEN part"),
        })
        .collect::<Vec<PatternAtom>>();
    let rule = Rule { id: inst.id.clone(), body, head, fresh };
    let violations = check_dl_safe(&rule, schema);
    if let Some(v) = violations.first() {
        return Err(err(DslErrorKind::Unsafe, Pos::default(), &inst.id, v.rule.clone()));
    }
    Ok(rule)
}
