use serde::Deserialize;

use super::RuntimeError;
use crate::kb::{Assertion, Decimal, Fact, Ontology, Provenance, Value};

#[derive(Debug, Deserialize)]
struct Row {
    id: String,
    class: String,
    #[serde(default)]
    related_to: String,
    #[serde(default)]
    value: String,
    #[serde(default)]
    unit: String,
}

/// Turns a stub CSV (`id,class,related_to,value,unit`, related ids separated
/// by `;`) into Finding individuals. Rows are checked before anything is
/// asserted.
pub fn dma_emit(text: &str, kb: &mut Ontology) -> Result<Vec<Assertion>, RuntimeError> {
    let mut facts = Vec::new();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let n = i + 2;
        let bad = |message: String| RuntimeError::Dma { row: n, message };
        let row = row.map_err(|e| bad(e.to_string()))?;
        if kb.class(&row.class).is_none() || !kb.is_subclass_of(&row.class, "Finding") {
            return Err(bad(format!("`{}` is not a kind of Finding", row.class)));
        }
        facts.push((n, Fact::instance(&row.id, &row.class)));
        for r in row.related_to.split(';').map(str::trim).filter(|r| !r.is_empty()) {
            if !kb.contains_individual(r) {
                return Err(bad(format!("unknown individual `{r}`")));
            }
            facts.push((n, Fact::property(&row.id, "relatedTo", Value::ind(r))));
        }
        if !row.value.is_empty() {
            let v = Decimal::parse_localized(&row.value).map_err(|_| bad(format!("bad value `{}`", row.value)))?;
            facts.push((n, Fact::property(&row.id, "hasValue", Value::dec(v))));
        }
        if !row.unit.is_empty() {
            facts.push((n, Fact::property(&row.id, "hasUnit", Value::str(&row.unit))));
        }
    }
    let mut trial = kb.clone();
    let mut added = Vec::new();
    for (row, f) in facts {
        let a = Assertion::new(f, Provenance::Dm);
        if trial.assert_fact(a.clone()).map_err(|e| RuntimeError::Dma { row, message: e.to_string() })? {
            added.push(a);
        }
    }
    *kb = trial;
    Ok(added)
}
