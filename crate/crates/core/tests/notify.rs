mod common;

use std::collections::BTreeSet;

use chrono::Weekday;
use ontodss::kb::{Fact, Ontology};
use ontodss::notify::{
    messages_for, parse_fact_lines, render, route, Channel, DecisionLevel, DeliveryPlan, MessagePolicy, MessageSpec,
    NotifyError, OrgUnit, Outbox, PlanEntry, Profiles, Rendering, RoutingRule, Severity, Status, Target, UserProfile,
};
use ontodss::rules::{explain_individual, run_to_fixpoint, EngineConfig};
use proptest::prelude::*;

use common::{case_study_kb, gen, now};

fn user(id: &str, unit: OrgUnit, level: DecisionLevel, sup: Option<&str>, ch: &[Channel]) -> UserProfile {
    UserProfile { id: id.into(), unit, level, superior: sup.map(String::from), channels: ch.to_vec(), quiet_days: vec![] }
}

fn profiles() -> Profiles {
    Profiles::new(vec![
        user("ceo", OrgUnit::Executive, DecisionLevel::Ceo, None, &[Channel::MobileAgent, Channel::Email]),
        user("cmo", OrgUnit::Marketing, DecisionLevel::Cmo, Some("ceo"), &[Channel::Email, Channel::Sms]),
        user("cao", OrgUnit::Sales, DecisionLevel::Cao, Some("ceo"), &[Channel::DesktopAlert, Channel::Email]),
    ])
    .unwrap()
}

fn rules() -> Vec<RoutingRule> {
    vec![RoutingRule {
        topic: "market-news".into(),
        min_severity: Severity::Notification,
        targets: vec![
            Target { unit: OrgUnit::Marketing, level: DecisionLevel::Cmo },
            Target { unit: OrgUnit::Sales, level: DecisionLevel::Cao },
        ],
    }]
}

fn all_channels() -> BTreeSet<Channel> {
    Channel::ALL.into_iter().collect()
}

fn msg(topic: &str, severity: Severity, finding: &str) -> MessageSpec {
    MessageSpec { id: format!("Msg_{finding}"), severity, topic: topic.into(), findings: vec![finding.into()], created: now() }
}

#[test]
fn warning_skips_the_superior() {
    let (plan, diags) = route(&msg("market-news", Severity::Warning, "Nokia_E72"), &profiles(), &rules(), &all_channels());
    assert!(diags.is_empty());
    assert_eq!(plan.users(), BTreeSet::from(["cao", "cmo"]));
}

#[test]
fn critical_alert_reaches_the_ceo() {
    let (plan, _) = route(&msg("market-news", Severity::CriticalAlert, "Nokia_E72"), &profiles(), &rules(), &all_channels());
    assert_eq!(plan.users(), BTreeSet::from(["cao", "ceo", "cmo"]));
    let ceo = plan.entries.iter().find(|e| e.user == "ceo").unwrap();
    assert_eq!((ceo.channel, ceo.rendering), (Channel::MobileAgent, Rendering::Truncated));
    let cmo = plan.entries.iter().find(|e| e.user == "cmo").unwrap();
    assert_eq!((cmo.channel, cmo.rendering), (Channel::Email, Rendering::Full));
}

#[test]
fn unmatched_topic() {
    let (plan, diags) = route(&msg("hr", Severity::CriticalAlert, "x"), &profiles(), &rules(), &all_channels());
    assert!(plan.entries.is_empty());
    assert_eq!(diags.len(), 1);
}

#[test]
fn falls_back_to_next_channel() {
    let available = BTreeSet::from([Channel::Sms, Channel::Email]);
    let (plan, diags) = route(&msg("market-news", Severity::CriticalAlert, "x"), &profiles(), &rules(), &available);
    assert!(diags.is_empty());
    let ceo = plan.entries.iter().find(|e| e.user == "ceo").unwrap();
    assert_eq!((ceo.channel, ceo.rendering), (Channel::Email, Rendering::Full));
    let (plan, diags) = route(&msg("market-news", Severity::Warning, "x"), &profiles(), &rules(), &BTreeSet::from([Channel::Rss]));
    assert!(plan.entries.is_empty());
    assert_eq!(diags.len(), 2);
}

fn discount(kb: &Ontology) -> String {
    let found: Vec<&str> = kb.instances_of("DiscountPrice").collect();
    assert_eq!(found.len(), 1);
    found[0].to_string()
}

#[test]
fn full_report_of_the_derived_finding() {
    let kb = case_study_kb();
    let id = discount(&kb);
    let e = explain_individual(&kb, &id).unwrap();
    let m = msg("promotion", Severity::CriticalAlert, &id);
    let report = render(&kb, &m, Rendering::Full, std::slice::from_ref(&e)).unwrap();
    let facts = report.split("CONCLUSION").next().unwrap();
    assert!(facts.contains("New [Phone] [Nokia E72] is available on the market."), "{report}");
    assert!(facts.contains("[Amount sold] of [Phone] by brand [Nokia] and by date [Q1, 2010] have [risen by 11,23%]."), "{report}");
    assert!(facts.contains("and by date [last month] have [risen by 5,87%]."), "{report}");
    let conclusion = report.split("CONCLUSION").nth(1).unwrap();
    assert_eq!(
        conclusion.trim(),
        "[Phone] [Nokia E72] should be offered to [new customer] and offered at [promotion discount] of [10%]."
    );

    let leaves: BTreeSet<String> = e.leaves().iter().map(|a| a.fact.to_string()).collect();
    let lines: Vec<String> = parse_fact_lines(&report);
    assert_eq!(lines.len(), leaves.len());
    assert_eq!(lines.into_iter().collect::<BTreeSet<_>>(), leaves);

    let short = render(&kb, &m, Rendering::Truncated, &[]).unwrap();
    assert_eq!(short.lines().count(), 1);
    assert!(short.contains("Nokia E72") && short.contains("10%") && short.contains("on request"));
}

#[test]
fn report_for_an_observed_fact() {
    let kb = case_study_kb();
    let e = explain_individual(&kb, "Nokia_E72").unwrap();
    let m = msg("market-news", Severity::Warning, "Nokia_E72");
    let report = render(&kb, &m, Rendering::Full, &[e]).unwrap();
    assert_eq!(parse_fact_lines(&report), ["Nokia_E72 : NewPhone"]);
    let conclusion = report.split("CONCLUSION").nth(1).unwrap();
    assert_eq!(conclusion.trim(), "New [Phone] [Nokia E72] is available on the market.");
    assert!(matches!(render(&kb, &m, Rendering::Full, &[]), Err(NotifyError::MissingExplanation(_))));
}

#[test]
fn policies_pick_messages() {
    let kb = case_study_kb();
    let id = discount(&kb);
    let policies = [
        MessagePolicy { class: "DiscountPrice".into(), topic: "promotion".into(), severity: Severity::CriticalAlert },
        MessagePolicy { class: "NewPhone".into(), topic: "market-news".into(), severity: Severity::Warning },
    ];
    let ms = messages_for(&kb, &[id.clone(), "Nokia_E72".into(), "Nokia_N95".into(), id.clone()], &policies, now());
    assert_eq!(ms.len(), 2);
    assert_eq!(ms[0].severity, Severity::CriticalAlert);
    assert_eq!(ms[0].id, format!("Msg_{id}"));
    assert_eq!(ms[1].topic, "market-news");
}

fn two_entry_plan() -> DeliveryPlan {
    DeliveryPlan {
        entries: vec![
            PlanEntry { user: "cmo".into(), channel: Channel::Email, rendering: Rendering::Full },
            PlanEntry { user: "ceo".into(), channel: Channel::MobileAgent, rendering: Rendering::Truncated },
        ],
    }
}

#[test]
fn outbox_delivery_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let outbox = Outbox::new(dir.path().join("outbox"), Channel::ALL);
    let m = msg("promotion", Severity::CriticalAlert, "F");
    let body = |r: Rendering| Ok(format!("{r:?}"));
    let recs = outbox.deliver(&m, &two_entry_plan(), body, now()).unwrap();
    assert_eq!(recs.len(), 2);
    assert!(outbox.file(Channel::Email).exists() && outbox.file(Channel::MobileAgent).exists());
    assert!(outbox.deliver(&m, &two_entry_plan(), body, now()).unwrap().is_empty());
    assert_eq!(outbox.records().unwrap().len(), 2);

    let no_sms = Outbox::new(dir.path().join("o2"), [Channel::Email]);
    match no_sms.deliver(&m, &two_entry_plan(), body, now()) {
        Err(NotifyError::NoSink(c)) => assert_eq!(c, Channel::MobileAgent),
        other => panic!("{other:?}"),
    }
}

#[test]
fn failed_sink_write() {
    let dir = tempfile::tempdir().unwrap();
    let outbox = Outbox::new(dir.path(), Channel::ALL);
    // the email sink cannot be opened for appending
    std::fs::create_dir(outbox.file(Channel::Email)).unwrap();
    let recs = outbox.deliver(&msg("t", Severity::Warning, "F"), &two_entry_plan(), |_| Ok("x".into()), now()).unwrap();
    let status: Vec<(Channel, Status)> = recs.iter().map(|r| (r.channel, r.status)).collect();
    assert_eq!(status, [(Channel::Email, Status::Failed), (Channel::MobileAgent, Status::Delivered)]);
    assert_eq!(outbox.records().unwrap().len(), 1);
}

#[test]
fn quiet_days_defer() {
    let mut users: Vec<UserProfile> = profiles().iter().cloned().collect();
    users.iter_mut().find(|u| u.id == "cmo").unwrap().quiet_days = vec![Weekday::Wed];
    let p = Profiles::new(users).unwrap();
    let (now_plan, later) = two_entry_plan().defer_quiet(&p, now());
    assert_eq!(now_plan.users(), BTreeSet::from(["ceo"]));
    assert_eq!(later.users(), BTreeSet::from(["cmo"]));
    let (thursday, none) = later.defer_quiet(&p, now().succ_opt().unwrap());
    assert_eq!(thursday.users(), BTreeSet::from(["cmo"]));
    assert!(none.entries.is_empty());
}

// ---------------------------------------------------------------- properties

const UNITS: [OrgUnit; 6] =
    [OrgUnit::Marketing, OrgUnit::Sales, OrgUnit::HumanResources, OrgUnit::It, OrgUnit::Finance, OrgUnit::Executive];
const LEVELS: [DecisionLevel; 6] =
    [DecisionLevel::Ceo, DecisionLevel::Cio, DecisionLevel::Cfo, DecisionLevel::Cmo, DecisionLevel::Cao, DecisionLevel::Analyst];

/// Profiles forming a forest (superior index always lower), random rules
/// over two topics, and a random set of available channels.
fn org(seed: u64) -> (Profiles, Vec<RoutingRule>, BTreeSet<Channel>) {
    use rand::seq::{IndexedRandom, SliceRandom};
    use rand::Rng;
    let mut rng = gen::rng(seed);
    let n = rng.random_range(1..12);
    let mut users = Vec::new();
    for i in 0..n {
        let sup = (i > 0 && rng.random_bool(0.7)).then(|| format!("u{}", rng.random_range(0..i)));
        let mut ch = Channel::ALL.to_vec();
        ch.shuffle(&mut rng);
        ch.truncate(rng.random_range(1..=5));
        users.push(UserProfile {
            id: format!("u{i}"),
            unit: *UNITS.choose(&mut rng).unwrap(),
            level: *LEVELS.choose(&mut rng).unwrap(),
            superior: sup,
            channels: ch,
            quiet_days: vec![],
        });
    }
    let rules = (0..rng.random_range(0..4))
        .map(|_| RoutingRule {
            topic: ["a", "b", "*"].choose(&mut rng).unwrap().to_string(),
            min_severity: *Severity::ALL.choose(&mut rng).unwrap(),
            targets: (0..rng.random_range(1..3))
                .map(|_| Target { unit: *UNITS.choose(&mut rng).unwrap(), level: *LEVELS.choose(&mut rng).unwrap() })
                .collect(),
        })
        .collect();
    let avail = Channel::ALL.into_iter().filter(|_| rng.random_bool(0.7)).collect();
    (Profiles::new(users).unwrap(), rules, avail)
}

proptest! {
    #[test]
    fn escalation_is_monotone(seed in any::<u64>(), topic in prop_oneof![Just("a"), Just("b")]) {
        let (p, r, avail) = org(seed);
        let mut prev: BTreeSet<String> = BTreeSet::new();
        for s in Severity::ALL {
            let (plan, _) = route(&msg(topic, s, "f"), &p, &r, &avail);
            let users: BTreeSet<String> = plan.users().into_iter().map(String::from).collect();
            prop_assert!(prev.is_subset(&users), "{:?} lost recipients at {:?}", prev, s);
            prev = users;
        }
    }

    #[test]
    fn superiors_only_on_critical(seed in any::<u64>(), topic in prop_oneof![Just("a"), Just("b")]) {
        let (p, r, _) = org(seed);
        let all = all_channels();
        for s in Severity::ALL {
            let m = msg(topic, s, "f");
            let (plan, _) = route(&m, &p, &r, &all);
            let users = plan.users();
            let direct: BTreeSet<&str> = p
                .iter()
                .filter(|u| r.iter().any(|rule| (rule.topic == "*" || rule.topic == topic) && s >= rule.min_severity
                    && rule.targets.iter().any(|t| t.unit == u.unit && t.level == u.level)))
                .map(|u| u.id.as_str())
                .collect();
            let above: BTreeSet<&str> = direct.iter().flat_map(|d| p.superiors(d)).filter(|x| !direct.contains(x)).collect();
            prop_assert!(direct.is_subset(&users));
            if s == Severity::CriticalAlert {
                prop_assert!(above.is_subset(&users));
            } else {
                prop_assert!(users.is_disjoint(&above));
            }
            prop_assert_eq!(users.len(), plan.entries.len());
        }
    }

    #[test]
    fn channels_are_legal(seed in any::<u64>()) {
        let (p, r, avail) = org(seed);
        let (plan, _) = route(&msg("a", Severity::CriticalAlert, "f"), &p, &r, &avail);
        for e in &plan.entries {
            let u = p.get(&e.user).unwrap();
            let pos = u.channels.iter().position(|c| *c == e.channel);
            prop_assert!(pos.is_some());
            prop_assert!(avail.contains(&e.channel));
            prop_assert!(u.channels[..pos.unwrap()].iter().all(|c| !avail.contains(c)));
            prop_assert_eq!(e.rendering, e.channel.rendering());
        }
    }

    #[test]
    fn full_report_lists_exactly_the_leaves(seed in any::<u64>()) {
        let mut rng = gen::rng(seed);
        let mut kb = gen::random_kb(&mut rng);
        let rules = gen::random_rules(&mut rng);
        run_to_fixpoint(&mut kb, &rules, &EngineConfig::new(now())).unwrap();
        let derived: BTreeSet<String> = kb
            .assertions()
            .into_iter()
            .filter(|a| a.provenance.is_derived())
            .map(|a| a.fact.subject().to_string())
            .collect();
        for id in derived.iter().take(5) {
            let e = explain_individual(&kb, id).unwrap();
            let report = render(&kb, &msg("a", Severity::Warning, id), Rendering::Full, std::slice::from_ref(&e)).unwrap();
            let lines = parse_fact_lines(&report);
            let leaves: BTreeSet<String> = e.leaves().iter().map(|a| a.fact.to_string()).collect();
            prop_assert_eq!(lines.len(), leaves.len());
            prop_assert_eq!(lines.into_iter().collect::<BTreeSet<_>>(), leaves);
        }
    }
}

#[test]
fn fact_lines_round_trip_display() {
    let f = Fact::instance("A", "B");
    let report = format!("X\n\nFACTS\n  head\n    * {f}\nCONCLUSION\n  c\n");
    assert_eq!(parse_fact_lines(&report), ["A : B"]);
}
