//! Business-rule templates and the near-natural-language rules written
//! against them.
//!
//! A template (`.brt`) constrains which classes may fill the IF and THEN
//! slots of a rule. A rule instance (`.brl`) binds named variables to those
//! slots and describes them with nested `which { ... }` blocks:
//!
//! ```text
//! RULE promotion_discount USING general_finding
//! IF
//!   found_phone is NewPhone which {
//!     has characteristic brand which is PhoneBrand AND
//!     has date of appearance found_date which is Dimension which {
//!       is greater than now - 14 days
//!     }
//!   }
//! THEN
//!   discount is DiscountPrice which {
//!     is related to found_phone AND
//!     has value "10"
//!   }
//! ```
//!
//! Property phrases map onto relation names by camel-casing: `has date of
//! appearance` is `hasDateOfAppearance`, `is related to` is `relatedTo`.
//! Multi-word class phrases are Pascal-cased (`Phone brand` is `PhoneBrand`).
//! A parenthesised annotation after a class names one of its ancestors and is
//! checked but has no effect on the compiled rule.

mod compile;
mod options;
mod parse;

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::rules::CompareOp;

pub use compile::{compile, validate};
pub use options::{list_slot_options, SlotContext, Subject};
pub use parse::{parse_rule, parse_rules, parse_template, parse_templates};

/// Relations used, in order of preference, to compare individuals:
/// `x is greater than y` on two dimension members compares their dates.
pub const KEY_RELATIONS: [&str; 2] = ["hasDate", "hasValue"];

/// Source position. Ignored by equality so that a re-parsed instance
/// compares equal to the original.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl PartialEq for Pos {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Pos {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub name: String,
    pub condition: Vec<SlotSpec>,
    pub result: Vec<SlotSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub name: String,
    /// Allowed root classes; a slot accepts any subclass of one of them.
    pub classes: Vec<String>,
    pub min: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateInstance {
    pub id: String,
    pub template: String,
    pub conditions: Vec<SlotBinding>,
    pub results: Vec<SlotBinding>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotBinding {
    pub var: String,
    pub class: ClassRef,
    pub block: Vec<Constraint>,
    #[serde(default)]
    pub at: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRef {
    pub name: String,
    pub annotation: Option<String>,
    #[serde(default)]
    pub at: Pos,
}

impl ClassRef {
    pub fn new(name: impl Into<String>) -> Self {
        ClassRef { name: name.into(), annotation: None, at: Pos::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Constraint {
    Link(Link),
    Compare {
        op: CompareOp,
        target: Operand,
        #[serde(default)]
        at: Pos,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub relation: String,
    pub object: Object,
    pub class: Option<ClassRef>,
    pub block: Vec<Constraint>,
    #[serde(default)]
    pub at: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Object {
    Var(String),
    /// Raw literal text, typed by the relation's range at validation.
    Literal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Operand {
    Var(String),
    Literal(String),
    Now,
    NowMinusDays(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DslErrorKind {
    Syntax,
    UnknownTemplate,
    UnknownClass,
    UnknownProperty,
    UnknownVariable,
    ClassMismatch,
    TypeError,
    Cardinality,
    Unsafe,
    UnknownContext,
    DuplicateRule,
}

impl DslErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DslErrorKind::Syntax => "syntax error",
            DslErrorKind::UnknownTemplate => "unknown template",
            DslErrorKind::UnknownClass => "unknown class",
            DslErrorKind::UnknownProperty => "unknown property",
            DslErrorKind::UnknownVariable => "unknown variable",
            DslErrorKind::ClassMismatch => "class mismatch",
            DslErrorKind::TypeError => "type error",
            DslErrorKind::Cardinality => "cardinality",
            DslErrorKind::Unsafe => "unsafe rule",
            DslErrorKind::UnknownContext => "unknown context",
            DslErrorKind::DuplicateRule => "duplicate rule",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{line}:{column}: {}: {message} (at `{phrase}`)", kind.as_str())]
pub struct DslError {
    pub kind: DslErrorKind,
    pub line: usize,
    pub column: usize,
    /// The offending source phrase.
    pub phrase: String,
    pub message: String,
}

impl DslError {
    pub(crate) fn new(kind: DslErrorKind, at: Pos, phrase: impl Into<String>, message: impl Into<String>) -> Self {
        DslError { kind, line: at.line, column: at.column, phrase: phrase.into(), message: message.into() }
    }
}

/// `has date of appearance` for `hasDateOfAppearance`, `is related to` for
/// `relatedTo`.
pub fn relation_phrase(relation: &str) -> String {
    let words = split_camel(relation);
    if words.first().map(String::as_str) == Some("has") || words.first().map(String::as_str) == Some("is") {
        words.join(" ")
    } else {
        format!("is {}", words.join(" "))
    }
}

pub(crate) fn split_camel(s: &str) -> Vec<String> {
    let mut words: Vec<String> = Vec::new();
    for c in s.chars() {
        if c.is_uppercase() || words.is_empty() {
            words.push(String::new());
        }
        words.last_mut().unwrap().extend(c.to_lowercase());
    }
    words
}

/// `Phone brand` to `PhoneBrand`.
pub(crate) fn pascal(words: &[&str]) -> String {
    words
        .iter()
        .flat_map(|w| w.split('_'))
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect::<String>(),
                None => String::new(),
            }
        })
        .collect()
}

fn op_phrase(op: CompareOp) -> &'static str {
    match op {
        CompareOp::GreaterThan => "is greater than",
        CompareOp::LessThan => "is less than",
        CompareOp::Equals => "is equal to",
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

impl fmt::Display for ClassRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if let Some(a) = &self.annotation {
            write!(f, " ({a})")?;
        }
        Ok(())
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Var(v) => f.write_str(v),
            Operand::Literal(l) => f.write_str(&quote(l)),
            Operand::Now => f.write_str("now"),
            Operand::NowMinusDays(n) => write!(f, "now - {n} days"),
        }
    }
}

fn write_block(out: &mut String, block: &[Constraint], depth: usize) {
    for (i, c) in block.iter().enumerate() {
        let pad = "  ".repeat(depth);
        match c {
            Constraint::Compare { op, target, .. } => {
                let _ = write!(out, "{pad}{} {target}", op_phrase(*op));
            }
            Constraint::Link(l) => {
                let obj = match &l.object {
                    Object::Var(v) => v.clone(),
                    Object::Literal(s) => quote(s),
                };
                let _ = write!(out, "{pad}{} {obj}", relation_phrase(&l.relation));
                if let Some(c) = &l.class {
                    let _ = write!(out, " which is {c}");
                }
                if !l.block.is_empty() {
                    out.push_str(" which {\n");
                    write_block(out, &l.block, depth + 1);
                    let _ = write!(out, "{pad}}}");
                }
            }
        }
        out.push_str(if i + 1 < block.len() { " AND\n" } else { "\n" });
    }
}

fn write_slots(out: &mut String, slots: &[SlotBinding]) {
    for (i, s) in slots.iter().enumerate() {
        let _ = write!(out, "  {} is {}", s.var, s.class);
        if !s.block.is_empty() {
            out.push_str(" which {\n");
            write_block(out, &s.block, 2);
            out.push_str("  }");
        }
        out.push_str(if i + 1 < slots.len() { " AND\n" } else { "\n" });
    }
}

/// Canonical text form; parses back to an equal instance.
impl fmt::Display for TemplateInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = format!("RULE {} USING {}\nIF\n", self.id, self.template);
        write_slots(&mut out, &self.conditions);
        out.push_str("THEN\n");
        write_slots(&mut out, &self.results);
        f.write_str(&out)
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let slots = |specs: &[SlotSpec]| {
            specs
                .iter()
                .map(|s| format!("  {} IN {} AT LEAST {}", s.name, s.classes.join(" UNION "), s.min))
                .collect::<Vec<_>>()
                .join(" AND\n")
        };
        write!(f, "TEMPLATE {}\nIF\n{}\nTHEN\n{}\n", self.name, slots(&self.condition), slots(&self.result))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phrases() {
        assert_eq!(relation_phrase("relatedTo"), "is related to");
        assert_eq!(relation_phrase("hasDateOfAppearance"), "has date of appearance");
        assert_eq!(relation_phrase("hasValue"), "has value");
        assert_eq!(pascal(&["Phone", "brand"]), "PhoneBrand");
        assert_eq!(pascal(&["promotion_discount"]), "PromotionDiscount");
    }
}
