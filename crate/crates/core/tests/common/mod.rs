#![allow(dead_code)]

pub mod gen;

use std::path::PathBuf;

use ontodss::dsl::{parse_rules, parse_templates, Template, TemplateInstance};
use ontodss::kb::{load_ontology, Ontology};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/case-study")
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn schema() -> Ontology {
    load_ontology(&read_fixture("schema.kb")).unwrap()
}

pub fn templates(schema: &Ontology) -> Vec<Template> {
    parse_templates(&read_fixture("templates.brt"), schema).unwrap()
}

pub fn example_rule(schema: &Ontology) -> TemplateInstance {
    let t = templates(schema);
    parse_rules(&read_fixture("rules.brl"), &t, schema).unwrap().remove(0)
}

pub fn patterns() -> ontodss::retrieval::PatternSet {
    ontodss::retrieval::PatternSet::load(&fixture_dir().join("patterns.toml")).unwrap()
}

pub fn pages() -> ontodss::retrieval::DirFetcher {
    ontodss::retrieval::DirFetcher::new(fixture_dir().join("pages"))
}

pub fn now() -> chrono::NaiveDate {
    chrono::NaiveDate::from_ymd_opt(2010, 5, 5).unwrap()
}

pub fn nokia_model(id: &str, grain: &str, label: Option<&str>) -> ontodss::olap::AnalysisModel {
    ontodss::olap::AnalysisModel {
        id: id.into(),
        schema: "Sales".into(),
        measure: "amount_sold".into(),
        filters: vec![ontodss::olap::Filter::new("product", "Nokia")],
        time_dimension: "date".into(),
        grain: grain.into(),
        threshold: ontodss::kb::Decimal::from_int(5),
        period_label: label.map(String::from),
        every_days: None,
    }
}

/// The case-study kb after retrieval, both Nokia findings and the
/// promotion rule, assembled directly from the library operations.
pub fn case_study_kb() -> Ontology {
    use ontodss::olap::{assert_findings, compute_finding, StarSchema};
    use ontodss::retrieval::{detect_new_phones, discover_shops, scrape};
    use ontodss::rules::{run_to_fixpoint, EngineConfig};

    let mut kb = schema();
    let p = patterns();
    let (shops, _) = discover_shops(&p.discovery, &[], &pages(), now()).unwrap();
    let mut obs = Vec::new();
    for s in &shops {
        obs.extend(scrape(s, &p.searches[0], &p.queries[0], &pages(), now()).unwrap().0);
    }
    detect_new_phones(&obs, &mut kb, now()).unwrap();
    let sales = StarSchema::load(&fixture_dir().join("sales.toml")).unwrap();
    let findings = [
        compute_finding(&nokia_model("nokia_quarter", "quarter", None), "Q1_2010", &sales).unwrap(),
        compute_finding(&nokia_model("nokia_month", "month", Some("last month")), "Apr_2010", &sales).unwrap(),
    ];
    assert_findings(&mut kb, &sales, &findings).unwrap();
    let rule = ontodss::dsl::compile(&example_rule(&kb), &kb).unwrap();
    run_to_fixpoint(&mut kb, &[rule], &EngineConfig::new(now())).unwrap();
    kb
}
