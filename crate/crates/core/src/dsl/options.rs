use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::compile::key_relation;
use super::{DslError, DslErrorKind, Pos};
use crate::kb::{Datatype, Ontology, Range};

/// What is being described at the editing cursor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Subject {
    Individual { class: String },
    Value { datatype: Datatype },
}

/// Cursor position inside a rule being edited.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SlotContext {
    /// `<var> is _` in a slot accepting subclasses of `roots`.
    SlotClass { roots: Vec<String> },
    /// `has _` / `is _` inside the block of an individual of `class`.
    Property { class: String },
    /// `<relation> <var> which is _`; `class` is the block's subject if known.
    LinkClass { class: Option<String>, relation: String },
    /// `is _ than` inside the block of `subject`.
    Operator { subject: Subject },
}

fn unknown(what: String) -> DslError {
    DslError::new(DslErrorKind::UnknownContext, Pos::default(), what.clone(), format!("`{what}` is not in the schema"))
}

/// Proper subclasses of `class`, or the class itself when it is a leaf.
fn refinements(schema: &Ontology, class: &str) -> Vec<String> {
    let below: Vec<String> = schema.descendants(class).into_iter().filter(|c| *c != class).map(str::to_string).collect();
    if below.is_empty() {
        vec![class.to_string()]
    } else {
        below
    }
}

/// Legal choices at the cursor, alphabetically ordered. Classes and
/// relations are returned by name; operators by their rule phrase.
pub fn list_slot_options(schema: &Ontology, ctx: &SlotContext) -> Result<Vec<String>, DslError> {
    let mut out = BTreeSet::new();
    match ctx {
        SlotContext::SlotClass { roots } => {
            for r in roots {
                if schema.class(r).is_some() {
                    out.extend(schema.descendants(r).into_iter().map(str::to_string));
                }
            }
        }
        SlotContext::Property { class } => {
            if schema.class(class).is_none() {
                return Err(unknown(class.clone()));
            }
            out.extend(schema.relations_for(class).into_iter().map(|r| r.name.clone()));
        }
        SlotContext::LinkClass { class, relation } => {
            let rel = schema.relation(relation).ok_or_else(|| unknown(relation.clone()))?;
            if let Some(c) = class {
                if schema.class(c).is_none() {
                    return Err(unknown(c.clone()));
                }
                if !schema.is_subclass_of(c, &rel.domain) {
                    return Err(DslError::new(
                        DslErrorKind::UnknownContext,
                        Pos::default(),
                        relation.clone(),
                        format!("`{relation}` does not apply to `{c}`"),
                    ));
                }
            }
            match &rel.range {
                Range::Class(r) => out.extend(refinements(schema, r)),
                Range::Datatype(d) => {
                    // classes whose members are compared by a value of this type
                    for k in super::KEY_RELATIONS {
                        if let Some(kr) = schema.relation(k) {
                            if kr.range == Range::Datatype(*d) {
                                out.extend(refinements(schema, &kr.domain).into_iter().filter(|c| {
                                    key_relation(schema, std::slice::from_ref(c)).map(|x| x.1) == Some(*d)
                                }));
                            }
                        }
                    }
                }
            }
        }
        SlotContext::Operator { subject } => {
            let d = match subject {
                Subject::Value { datatype } => Some(*datatype),
                Subject::Individual { class } => {
                    if schema.class(class).is_none() {
                        return Err(unknown(class.clone()));
                    }
                    key_relation(schema, std::slice::from_ref(class)).map(|k| k.1)
                }
            };
            match d {
                Some(Datatype::Date | Datatype::Decimal) => {
                    out.extend(["equal to", "greater than", "less than"].map(String::from));
                }
                Some(_) => {
                    out.insert("equal to".to_string());
                }
                None => {}
            }
        }
    }
    Ok(out.into_iter().collect())
}
