use std::collections::BTreeSet;

use chrono::NaiveDate;
use ontodss::kb::{load_ontology, Assertion, Fact, Ontology, PatternAtom, Term, Value};
use ontodss::rules::{run_to_fixpoint, Atom, EngineConfig, FreshIndividual, Rule, Strategy as EvalStrategy};
use proptest::prelude::*;

#[path = "common/gen.rs"]
#[allow(dead_code)]
mod gen;

const SCHEMA: &str = "\
class Node ns=common
class Reached sub Node ns=common
class Marker ns=common
rel edge dom=Node rng=Node
rel path dom=Node rng=Node
rel marks dom=Marker rng=Node
";

fn now() -> NaiveDate {
    NaiveDate::from_ymd_opt(2010, 5, 5).unwrap()
}

fn graph(n: usize, edges: &[(usize, usize)], seeds: &[usize]) -> Ontology {
    let mut kb = load_ontology(SCHEMA).unwrap();
    for i in 0..n {
        kb.assert_fact(Assertion::loaded(Fact::instance(format!("n{i}"), "Node"))).unwrap();
    }
    for &(a, b) in edges {
        kb.assert_fact(Assertion::loaded(Fact::property(format!("n{a}"), "edge", Value::ind(format!("n{b}")))))
            .unwrap();
    }
    for &s in seeds {
        kb.assert_fact(Assertion::loaded(Fact::instance(format!("n{s}"), "Reached"))).unwrap();
    }
    kb
}

fn v(name: &str) -> Term {
    Term::var(name)
}

fn rules() -> Vec<Rule> {
    vec![
        Rule {
            id: "base".into(),
            body: vec![Atom::property("edge", v("x"), v("y"))],
            head: vec![PatternAtom::property("path", v("x"), v("y"))],
            fresh: vec![],
        },
        Rule {
            id: "step".into(),
            body: vec![Atom::property("path", v("x"), v("y")), Atom::property("edge", v("y"), v("z"))],
            head: vec![PatternAtom::property("path", v("x"), v("z"))],
            fresh: vec![],
        },
        Rule {
            id: "spread".into(),
            body: vec![Atom::class("Reached", v("x")), Atom::property("edge", v("x"), v("y"))],
            head: vec![PatternAtom::class("Reached", v("y"))],
            fresh: vec![],
        },
        Rule {
            id: "mark".into(),
            body: vec![Atom::class("Reached", v("x"))],
            head: vec![PatternAtom::class("Marker", v("m")), PatternAtom::property("marks", v("m"), v("x"))],
            fresh: vec![FreshIndividual { var: "m".into(), class: "Marker".into(), prefix: "Mark".into() }],
        },
    ]
}

fn facts(kb: &Ontology) -> BTreeSet<Fact> {
    kb.assertions().into_iter().map(|a| a.fact).collect()
}

fn closure(n: usize, edges: &[(usize, usize)]) -> BTreeSet<(usize, usize)> {
    let mut reach = vec![vec![false; n]; n];
    for &(a, b) in edges {
        reach[a][b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| reach[i][j]).collect()
}

fn input() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<usize>)> {
    (1usize..8).prop_flat_map(|n| {
        (Just(n), prop::collection::vec((0..n, 0..n), 0..16), prop::collection::vec(0..n, 0..3))
    })
}

proptest! {
    #[test]
    fn semi_naive_matches_naive((n, edges, seeds) in input()) {
        let mut a = graph(n, &edges, &seeds);
        let mut b = a.clone();
        run_to_fixpoint(&mut a, &rules(), &EngineConfig { strategy: EvalStrategy::Naive, ..EngineConfig::new(now()) }).unwrap();
        run_to_fixpoint(&mut b, &rules(), &EngineConfig::new(now())).unwrap();
        prop_assert_eq!(facts(&a), facts(&b));
    }

    #[test]
    fn fixpoint_is_order_independent((n, edges, seeds) in input(), order in Just((0..4).collect::<Vec<usize>>()).prop_shuffle()) {
        let base = graph(n, &edges, &seeds);
        let mut a = base.clone();
        let mut b = base;
        let rs = rules();
        let shuffled: Vec<Rule> = order.iter().map(|&i| rs[i].clone()).collect();
        run_to_fixpoint(&mut a, &rs, &EngineConfig::new(now())).unwrap();
        run_to_fixpoint(&mut b, &shuffled, &EngineConfig::new(now())).unwrap();
        prop_assert_eq!(facts(&a), facts(&b));
    }

    #[test]
    fn path_is_transitive_closure((n, edges, seeds) in input()) {
        let mut kb = graph(n, &edges, &seeds);
        run_to_fixpoint(&mut kb, &rules(), &EngineConfig::new(now())).unwrap();
        let got: BTreeSet<(usize, usize)> = facts(&kb)
            .into_iter()
            .filter_map(|f| match f {
                Fact::Property { subject, relation, object } if relation == "path" => {
                    let o = object.as_individual().unwrap().to_string();
                    Some((subject[1..].parse().unwrap(), o[1..].parse().unwrap()))
                }
                _ => None,
            })
            .collect();
        prop_assert_eq!(got, closure(n, &edges));
    }

    #[test]
    fn second_run_adds_nothing((n, edges, seeds) in input()) {
        let mut kb = graph(n, &edges, &seeds);
        run_to_fixpoint(&mut kb, &rules(), &EngineConfig::new(now())).unwrap();
        let before = kb.assertions();
        let out = run_to_fixpoint(&mut kb, &rules(), &EngineConfig::new(now())).unwrap();
        prop_assert!(out.derivations.is_empty());
        prop_assert_eq!(kb.assertions(), before);
    }
}

#[test]
fn fresh_ids_do_not_depend_on_run() {
    let mut a = graph(3, &[(0, 1), (1, 2)], &[0]);
    let mut b = graph(3, &[(0, 1), (1, 2)], &[0]);
    run_to_fixpoint(&mut a, &rules(), &EngineConfig::new(now())).unwrap();
    let mut reversed = rules();
    reversed.reverse();
    run_to_fixpoint(&mut b, &reversed, &EngineConfig::new(now())).unwrap();
    let markers = |kb: &Ontology| kb.instances_of("Marker").map(str::to_string).collect::<Vec<_>>();
    assert_eq!(markers(&a).len(), 3);
    assert_eq!(markers(&a), markers(&b));
}

mod random {
    use super::*;

    use super::gen;

    proptest! {
        #[test]
        fn random_rules_confluent(seed in any::<u64>()) {
            let mut rng = gen::rng(seed);
            let kb = gen::random_kb(&mut rng);
            let rules = gen::random_rules(&mut rng);
            let mut oracle = kb.clone();
            run_to_fixpoint(&mut oracle, &rules, &EngineConfig { strategy: EvalStrategy::Naive, ..EngineConfig::new(now()) }).unwrap();
            let mut shuffled = rules.clone();
            shuffled.reverse();
            let mut semi = kb;
            run_to_fixpoint(&mut semi, &shuffled, &EngineConfig::new(now())).unwrap();
            prop_assert_eq!(facts(&oracle), facts(&semi));
        }
    }
}
