//! Seeded generators shared by the property tests and the acceptance suite.

use chrono::{Duration, NaiveDate};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ontodss::dsl::{
    list_slot_options, ClassRef, Constraint, Link, Object, Operand, Pos, SlotBinding, SlotContext, Subject, Template,
    TemplateInstance,
};
use ontodss::kb::{load_ontology, Assertion, Decimal, Fact, Literal, Ontology, PatternAtom, Range, Term, Value};
use ontodss::rules::{Atom, CompareOp, Expr, FreshIndividual, Rule};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ------------------------------------------------------------ random engine

const RANDOM_SCHEMA: &str = "\
class Thing ns=common
class A sub Thing ns=common
class B sub Thing ns=common
class A1 sub A ns=common
class A2 sub A ns=common
class Made ns=common
rel p dom=Thing rng=Thing
rel q dom=Thing rng=Thing
rel r dom=A rng=Thing
rel score dom=Thing rng=decimal
rel madeFrom dom=Made rng=Thing
";

const LEAF_CLASSES: [&str; 4] = ["A1", "A2", "B", "Thing"];
const BODY_CLASSES: [&str; 5] = ["A", "A1", "A2", "B", "Thing"];

/// Up to 30 individuals with random classes, links and scores.
pub fn random_kb(rng: &mut impl Rng) -> Ontology {
    let mut kb = load_ontology(RANDOM_SCHEMA).unwrap();
    let n = rng.random_range(1..=30);
    for i in 0..n {
        let c = LEAF_CLASSES.choose(rng).unwrap();
        kb.assert_fact(Assertion::loaded(Fact::instance(format!("i{i}"), *c))).unwrap();
        if rng.random_bool(0.5) {
            let v = Decimal::from_int(rng.random_range(0..10));
            kb.assert_fact(Assertion::loaded(Fact::property(format!("i{i}"), "score", Value::dec(v)))).unwrap();
        }
    }
    for _ in 0..rng.random_range(0..=2 * n) {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        let rel = *["p", "q", "r"].choose(rng).unwrap();
        let fact = Fact::property(format!("i{a}"), rel, Value::ind(format!("i{b}")));
        // r needs an A subject; skip rejected facts
        let _ = kb.assert_fact(Assertion::loaded(fact));
    }
    kb
}

fn var(rng: &mut impl Rng, bound: &[String]) -> String {
    if !bound.is_empty() && rng.random_bool(0.7) {
        bound.choose(rng).unwrap().clone()
    } else {
        ["x", "y", "z", "w"].choose(rng).unwrap().to_string()
    }
}

/// A random DL-safe rule over the random schema. Fresh individuals are only
/// ever `Made`, which no body mentions, so every rule set terminates.
pub fn random_rule(rng: &mut impl Rng, id: usize) -> Rule {
    let mut body: Vec<Atom> = Vec::new();
    let mut bound: Vec<String> = Vec::new();
    let mut has_a = Vec::new();
    for _ in 0..rng.random_range(1..=3) {
        let s = var(rng, &bound);
        if rng.random_bool(0.4) {
            let c = *BODY_CLASSES.choose(rng).unwrap();
            if c == "A" || c == "A1" || c == "A2" {
                has_a.push(s.clone());
            }
            body.push(Atom::class(c, Term::var(&s)));
            bound.push(s);
        } else {
            let o = var(rng, &bound);
            let rel = *["p", "q"].choose(rng).unwrap();
            body.push(Atom::property(rel, Term::var(&s), Term::var(&o)));
            bound.push(s);
            bound.push(o);
        }
    }
    bound.sort();
    bound.dedup();
    if rng.random_bool(0.3) {
        let s = bound.choose(rng).unwrap().clone();
        let v = format!("{s}_score");
        body.push(Atom::property("score", Term::var(&s), Term::var(&v)));
        let op = *[CompareOp::GreaterThan, CompareOp::LessThan, CompareOp::Equals].choose(rng).unwrap();
        body.push(Atom::builtin(op, Expr::var(&v), Expr::lit(Literal::Decimal(Decimal::from_int(rng.random_range(0..10))))));
    }
    let mut head = Vec::new();
    let mut fresh = Vec::new();
    for _ in 0..rng.random_range(1..=2) {
        let s = bound.choose(rng).unwrap().clone();
        match rng.random_range(0..4) {
            0 => head.push(PatternAtom::class(*LEAF_CLASSES.choose(rng).unwrap(), Term::var(&s))),
            1 => {
                let o = bound.choose(rng).unwrap().clone();
                head.push(PatternAtom::property(*["p", "q"].choose(rng).unwrap(), Term::var(&s), Term::var(&o)));
            }
            2 if has_a.contains(&s) => {
                let o = bound.choose(rng).unwrap().clone();
                head.push(PatternAtom::property("r", Term::var(&s), Term::var(&o)));
            }
            _ => {
                let f = format!("m{}", fresh.len());
                head.push(PatternAtom::class("Made", Term::var(&f)));
                head.push(PatternAtom::property("madeFrom", Term::var(&f), Term::var(&s)));
                fresh.push(FreshIndividual { var: f, class: "Made".into(), prefix: "Made".into() });
            }
        }
    }
    Rule { id: format!("rule{id}"), body, head, fresh }
}

pub fn random_rules(rng: &mut impl Rng) -> Vec<Rule> {
    (0..rng.random_range(1..=5)).map(|i| random_rule(rng, i)).collect()
}

// ------------------------------------------------------ case-study variants

fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).unwrap()
}

/// The case-study schema with randomly generated brand findings, periods,
/// new phones and customers. Some shapes deliberately miss one condition of
/// the promotion rule.
pub fn random_case_kb(schema: &Ontology, rng: &mut impl Rng, now: NaiveDate) -> Ontology {
    let mut kb = schema.clone();
    let add = |kb: &mut Ontology, f: Fact| {
        kb.assert_fact(Assertion::loaded(f)).unwrap();
    };
    let brands: &[&str] = if rng.random_bool(0.5) { &["Nokia", "Apple"] } else { &["Nokia", "Apple", "SonyEricsson", "Samsung"] };
    let periods: Vec<(String, NaiveDate)> =
        (0..rng.random_range(2..=4)).map(|i| (format!("P{i}"), d(2009, 1, 1) + Duration::days(rng.random_range(0..500)))).collect();
    for (p, date) in &periods {
        add(&mut kb, Fact::instance(p, "Dimension"));
        add(&mut kb, Fact::property(p, "hasDate", Value::date(*date)));
    }
    for &b in brands {
        if rng.random_bool(0.6) {
            let agg = format!("Phone_{b}");
            add(&mut kb, Fact::instance(&agg, "Phone"));
            add(&mut kb, Fact::property(&agg, "hasCharacteristic", Value::ind(b)));
        }
    }
    for i in 0..rng.random_range(0..7) {
        let f = format!("F{i}");
        add(&mut kb, Fact::instance(&f, if rng.random_bool(0.85) { "Increase" } else { "Decrease" }));
        add(&mut kb, Fact::property(&f, "hasValue", Value::dec(Decimal::from_int(rng.random_range(1..20)))));
        if rng.random_bool(0.9) {
            add(&mut kb, Fact::property(&f, "relatedTo", Value::ind("AmountSold")));
        }
        let (p, _) = periods.choose(rng).unwrap();
        add(&mut kb, Fact::property(&f, "relatedTo", Value::ind(p)));
        let b = brands.choose(rng).unwrap();
        let agg = format!("Phone_{b}");
        if !kb.contains_individual(&agg) {
            add(&mut kb, Fact::instance(&agg, "Phone"));
            add(&mut kb, Fact::property(&agg, "hasCharacteristic", Value::ind(*b)));
        }
        add(&mut kb, Fact::property(&f, "relatedTo", Value::ind(&agg)));
    }
    if rng.random_bool(0.5) {
        // two findings for one brand, which the promotion rule looks for
        let b = brands.choose(rng).unwrap();
        let agg = format!("Phone_{b}");
        if !kb.contains_individual(&agg) {
            add(&mut kb, Fact::instance(&agg, "Phone"));
            add(&mut kb, Fact::property(&agg, "hasCharacteristic", Value::ind(*b)));
        }
        for (i, (p, _)) in periods.iter().take(2).enumerate() {
            let f = format!("G{i}");
            add(&mut kb, Fact::instance(&f, "Increase"));
            add(&mut kb, Fact::property(&f, "relatedTo", Value::ind("AmountSold")));
            add(&mut kb, Fact::property(&f, "relatedTo", Value::ind(p)));
            add(&mut kb, Fact::property(&f, "relatedTo", Value::ind(&agg)));
        }
    }
    for i in 0..rng.random_range(0..4) {
        let p = format!("New{i}");
        add(&mut kb, Fact::instance(&p, "NewPhone"));
        add(&mut kb, Fact::property(&p, "hasCharacteristic", Value::ind(*brands.choose(rng).unwrap())));
        let age = rng.random_range(0..20);
        add(&mut kb, Fact::property(&p, "hasDateOfAppearance", Value::date(now - Duration::days(age))));
    }
    for i in 0..rng.random_range(0..3).min(rng.random_range(1..3)) {
        add(&mut kb, Fact::instance(format!("Cust{i}"), "NewCustomer"));
    }
    kb
}

/// The promotion rule written directly against the engine.
pub fn promotion_rule_by_hand(id: &str) -> Rule {
    fn v(x: &str) -> Term {
        Term::var(x)
    }
    let class = |c: &str, x: &str| Atom::class(c, v(x));
    let prop = |r: &str, s: &str, o: &str| Atom::property(r, v(s), v(o));
    Rule {
        id: id.into(),
        body: vec![
            class("Increase", "f1"),
            prop("relatedTo", "f1", "m1"),
            class("Measure", "m1"),
            prop("relatedTo", "f1", "d1"),
            class("Dimension", "d1"),
            prop("relatedTo", "f1", "p1"),
            class("Phone", "p1"),
            prop("hasCharacteristic", "p1", "brand"),
            class("PhoneBrand", "brand"),
            class("Increase", "f2"),
            prop("relatedTo", "f2", "m2"),
            class("Measure", "m2"),
            prop("relatedTo", "f2", "d2"),
            class("Dimension", "d2"),
            prop("hasDate", "d2", "d2date"),
            prop("hasDate", "d1", "d1date"),
            Atom::builtin(CompareOp::GreaterThan, Expr::var("d2date"), Expr::var("d1date")),
            prop("relatedTo", "f2", "p2"),
            class("Phone", "p2"),
            prop("hasCharacteristic", "p2", "brand"),
            class("NewPhone", "np"),
            prop("hasCharacteristic", "np", "brand"),
            prop("hasDateOfAppearance", "np", "seen"),
            Atom::builtin(CompareOp::GreaterThan, Expr::var("seen"), Expr::DateMinusDays(Box::new(Expr::Now), 14)),
            class("NewCustomer", "c"),
        ],
        head: vec![
            PatternAtom::class("DiscountPrice", v("out")),
            PatternAtom::property("relatedTo", v("out"), v("c")),
            PatternAtom::property("relatedTo", v("out"), v("np")),
            PatternAtom::property("hasValue", v("out"), Term::Const(Value::dec(Decimal::from_int(10)))),
            PatternAtom::property("hasUnit", v("out"), Term::Const(Value::str("%"))),
        ],
        fresh: vec![FreshIndividual { var: "out".into(), class: "DiscountPrice".into(), prefix: "PromotionDiscount".into() }],
    }
}

// ----------------------------------------------------------- editor choices

fn pick(rng: &mut impl Rng, schema: &Ontology, ctx: SlotContext) -> Option<String> {
    list_slot_options(schema, &ctx).unwrap().choose(rng).cloned()
}

fn literal_for(rng: &mut impl Rng, dt: ontodss::kb::Datatype) -> String {
    use ontodss::kb::Datatype::*;
    match dt {
        String => format!("text {}", rng.random_range(0..100)),
        Decimal => format!("{}.{}", rng.random_range(0..100), rng.random_range(0..100)),
        Date => (d(2010, 1, 1) + Duration::days(rng.random_range(0..365))).format("%Y-%m-%d").to_string(),
        Boolean => if rng.random_bool(0.5) { "true" } else { "false" }.into(),
    }
}

struct Editor<'a, R> {
    schema: &'a Ontology,
    rng: &'a mut R,
    next: usize,
    /// Individual variables with their class, usable as THEN objects.
    individuals: Vec<(String, String)>,
}

impl<R: Rng> Editor<'_, R> {
    fn fresh_var(&mut self) -> String {
        self.next += 1;
        format!("v{}", self.next)
    }

    fn compare(&mut self, subject: Subject, d: ontodss::kb::Datatype) -> Option<Constraint> {
        let op = pick(self.rng, self.schema, SlotContext::Operator { subject })?;
        let op = match op.as_str() {
            "greater than" => CompareOp::GreaterThan,
            "less than" => CompareOp::LessThan,
            _ => CompareOp::Equals,
        };
        let target = if d == ontodss::kb::Datatype::Date && self.rng.random_bool(0.5) {
            Operand::NowMinusDays(self.rng.random_range(0..60))
        } else {
            Operand::Literal(literal_for(self.rng, d))
        };
        Some(Constraint::Compare { op, target, at: Pos::default() })
    }

    fn block(&mut self, class: &str, depth: usize) -> Vec<Constraint> {
        let mut out = Vec::new();
        let n = if depth > 2 { 0 } else { self.rng.random_range(0..=3 - depth) };
        for _ in 0..n {
            let Some(relation) = pick(self.rng, self.schema, SlotContext::Property { class: class.into() }) else {
                break;
            };
            let range = self.schema.relation(&relation).unwrap().range.clone();
            let ctx = SlotContext::LinkClass { class: Some(class.into()), relation: relation.clone() };
            match range {
                Range::Class(_) => {
                    let v = self.fresh_var();
                    let c = pick(self.rng, self.schema, ctx).unwrap();
                    self.individuals.push((v.clone(), c.clone()));
                    let block = self.block(&c, depth + 1);
                    out.push(Constraint::Link(Link {
                        relation,
                        object: Object::Var(v),
                        class: Some(ClassRef::new(c)),
                        block,
                        at: Pos::default(),
                    }));
                }
                Range::Datatype(d) => {
                    if self.rng.random_bool(0.5) {
                        let lit = literal_for(self.rng, d);
                        out.push(Constraint::Link(Link {
                            relation,
                            object: Object::Literal(lit),
                            class: None,
                            block: vec![],
                            at: Pos::default(),
                        }));
                    } else {
                        let v = self.fresh_var();
                        let class = pick(self.rng, self.schema, ctx).filter(|_| self.rng.random_bool(0.5)).map(ClassRef::new);
                        let block = self.compare(Subject::Value { datatype: d }, d).into_iter().collect();
                        out.push(Constraint::Link(Link { relation, object: Object::Var(v), class, block, at: Pos::default() }));
                    }
                }
            }
        }
        if self.rng.random_bool(0.3) {
            let key = ontodss::dsl::KEY_RELATIONS.iter().find_map(|k| {
                let r = self.schema.relation(k)?;
                match r.range {
                    Range::Datatype(d) if self.schema.is_subclass_of(class, &r.domain) => Some(d),
                    _ => None,
                }
            });
            if let Some(d) = key {
                out.extend(self.compare(Subject::Individual { class: class.into() }, d));
            }
        }
        out
    }
}

/// A rule assembled only from `list_slot_options` choices.
pub fn editor_instance(schema: &Ontology, template: &Template, rng: &mut impl Rng, id: usize) -> TemplateInstance {
    let mut ed = Editor { schema, rng, next: 0, individuals: Vec::new() };
    let mut conditions = Vec::new();
    for spec in &template.condition {
        for _ in 0..spec.min + ed.rng.random_range(0..2) {
            let class = pick(ed.rng, schema, SlotContext::SlotClass { roots: spec.classes.clone() }).unwrap();
            let var = ed.fresh_var();
            ed.individuals.push((var.clone(), class.clone()));
            let block = ed.block(&class, 0);
            conditions.push(SlotBinding { var, class: ClassRef::new(class), block, at: Pos::default() });
        }
    }
    let mut results = Vec::new();
    for spec in &template.result {
        for _ in 0..spec.min {
            let class = pick(ed.rng, schema, SlotContext::SlotClass { roots: spec.classes.clone() }).unwrap();
            let var = format!("result_{}", results.len());
            let mut block = Vec::new();
            for _ in 0..ed.rng.random_range(0..=3) {
                let relation = pick(ed.rng, schema, SlotContext::Property { class: class.clone() }).unwrap();
                let object = match &schema.relation(&relation).unwrap().range {
                    Range::Datatype(d) => Object::Literal(literal_for(ed.rng, *d)),
                    Range::Class(r) => {
                        let fits: Vec<&(String, String)> =
                            ed.individuals.iter().filter(|(_, c)| schema.is_subclass_of(c, r)).collect();
                        match fits.choose(ed.rng) {
                            Some((v, _)) => Object::Var(v.clone()),
                            None => continue,
                        }
                    }
                };
                block.push(Constraint::Link(Link { relation, object, class: None, block: vec![], at: Pos::default() }));
            }
            results.push(SlotBinding { var, class: ClassRef::new(class), block, at: Pos::default() });
        }
    }
    TemplateInstance { id: format!("edited_{id}"), template: template.name.clone(), conditions, results }
}

/// Derived assertions with fresh ids replaced by a description of the
/// individual, so rules that name their variables differently compare equal.
pub fn derived_signature(kb: &Ontology, fresh_prefix: &str) -> Vec<String> {
    let derived: Vec<Fact> =
        kb.assertions().into_iter().filter(|a| a.provenance.is_derived()).map(|a| a.fact).collect();
    let describe = |id: &str| -> String {
        let mut parts: Vec<String> = derived
            .iter()
            .filter(|f| f.subject() == id)
            .map(|f| match f {
                Fact::Instance { class, .. } => format!("a {class}"),
                Fact::Property { relation, object, .. } => format!("{relation} {}", object.to_token()),
            })
            .collect();
        parts.sort();
        format!("[{}]", parts.join("; "))
    };
    let name = |id: &str| if id.starts_with(fresh_prefix) { describe(id) } else { id.to_string() };
    let mut out: Vec<String> = derived
        .iter()
        .map(|f| match f {
            Fact::Instance { individual, class } => format!("{} : {class}", name(individual)),
            Fact::Property { subject, relation, object } => {
                let o = match object.as_individual() {
                    Some(i) => name(i),
                    None => object.to_token(),
                };
                format!("{} {relation} {o}", name(subject))
            }
        })
        .collect();
    out.sort();
    out
}

// ------------------------------------------------------------ star schemas

use ontodss::olap::{Dimension, FactRow, Measure, Member, StarSchema};

fn random_tree(rng: &mut impl Rng, name: &str, levels: &[&str]) -> Dimension {
    let mut members: Vec<Member> = Vec::new();
    let mut parents: Vec<String> = vec![];
    for (li, level) in levels.iter().enumerate() {
        let mut next = Vec::new();
        let owners: Vec<Option<String>> = if li == 0 { vec![None] } else { parents.iter().cloned().map(Some).collect() };
        for owner in owners {
            for _ in 0..rng.random_range(1..=3) {
                let m = format!("{name}_{level}{}", members.len());
                members.push(Member {
                    name: m.clone(),
                    level: level.to_string(),
                    parent: owner.clone(),
                    label: None,
                    kb: None,
                    start: None,
                    end: None,
                });
                next.push(m);
            }
        }
        parents = next;
    }
    Dimension { name: name.into(), levels: levels.iter().map(|l| l.to_string()).collect(), element_class: None, members }
}

/// Two or three dimensions of random shape and up to 200 fact rows.
pub fn random_star(rng: &mut impl Rng) -> StarSchema {
    let (np, nr) = (rng.random_range(1..=3), rng.random_range(1..=2));
    let mut dimensions = vec![
        random_tree(rng, "prod", &["brand", "line", "model"][..np]),
        random_tree(rng, "region", &["country", "city"][..nr]),
    ];
    if rng.random_bool(0.5) {
        let from = d(2009, rng.random_range(1..=12), 1);
        dimensions.push(Dimension::calendar("date", from, from + Duration::days(rng.random_range(0..400))));
    }
    let leaves: Vec<Vec<String>> = dimensions
        .iter()
        .map(|dim| dim.level_members(dim.leaf_level()).map(|m| m.name.clone()).collect())
        .collect();
    let facts = (0..rng.random_range(0..=200))
        .map(|_| FactRow {
            members: dimensions.iter().zip(&leaves).map(|(dim, l)| (dim.name.clone(), l.choose(rng).unwrap().clone())).collect(),
            values: [
                ("units".to_string(), Decimal::from_int(rng.random_range(0..1000))),
                ("revenue".to_string(), Decimal::from_scaled(rng.random_range(0..10_000_000))),
            ]
            .into_iter()
            .collect(),
        })
        .collect();
    let schema = StarSchema {
        name: "random".into(),
        dimensions,
        measures: vec![
            Measure { name: "units".into(), unit: "pcs".into(), label: None, kb: None },
            Measure { name: "revenue".into(), unit: "EUR".into(), label: None, kb: None },
        ],
        facts,
    };
    schema.check().unwrap();
    schema
}
