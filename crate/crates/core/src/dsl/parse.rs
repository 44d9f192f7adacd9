use super::{
    pascal, validate, ClassRef, Constraint, DslError, DslErrorKind, Link, Object, Operand, Pos, SlotBinding, SlotSpec,
    Template, TemplateInstance,
};
use crate::kb::{is_identifier, Ontology};
use crate::rules::CompareOp;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    LBrace,
    RBrace,
    Paren(String),
    Minus,
}

impl Tok {
    fn text(&self) -> String {
        match self {
            Tok::Word(w) => w.clone(),
            Tok::Str(s) => format!("\"{s}\""),
            Tok::LBrace => "{".into(),
            Tok::RBrace => "}".into(),
            Tok::Paren(s) => format!("({s})"),
            Tok::Minus => "-".into(),
        }
    }
}

const KEYWORDS: &[&str] = &["IF", "THEN", "AND", "RULE", "USING", "TEMPLATE", "IN", "UNION", "AT", "LEAST", "which"];
const CLASS_STOP: &[&str] = &["which", "AND", "THEN", "RULE", "IF", "UNION", "AT", "IN"];

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, DslError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let at = Pos { line: n + 1, column: i + 1 };
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c == '#' {
                break;
            }
            let start = i;
            let tok = match c {
                '{' => {
                    i += 1;
                    Tok::LBrace
                }
                '}' => {
                    i += 1;
                    Tok::RBrace
                }
                '-' => {
                    i += 1;
                    Tok::Minus
                }
                '(' => {
                    let close = chars[i..].iter().position(|&c| c == ')').ok_or_else(|| {
                        DslError::new(DslErrorKind::Syntax, at, "(", "unclosed parenthesis")
                    })?;
                    let inner: String = chars[i + 1..i + close].iter().collect();
                    i += close + 1;
                    Tok::Paren(inner.trim().to_string())
                }
                '"' => {
                    let mut s = String::new();
                    i += 1;
                    loop {
                        match chars.get(i) {
                            None => return Err(DslError::new(DslErrorKind::Syntax, at, "\"", "unterminated string")),
                            Some('"') => {
                                i += 1;
                                break;
                            }
                            Some('\\') if i + 1 < chars.len() => {
                                s.push(chars[i + 1]);
                                i += 2;
                            }
                            Some(&c) => {
                                s.push(c);
                                i += 1;
                            }
                        }
                    }
                    Tok::Str(s)
                }
                c if c.is_ascii_digit() => {
                    while i < chars.len() && (chars[i].is_alphanumeric() || ".,-:".contains(chars[i])) {
                        i += 1;
                    }
                    Tok::Word(chars[start..i].iter().collect())
                }
                c if c.is_alphabetic() || c == '_' => {
                    while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                        i += 1;
                    }
                    Tok::Word(chars[start..i].iter().collect())
                }
                other => {
                    return Err(DslError::new(
                        DslErrorKind::Syntax,
                        at,
                        other.to_string(),
                        format!("unexpected character `{other}`"),
                    ))
                }
            };
            out.push((tok, at));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, Pos)>,
    i: usize,
    schema: &'a Ontology,
}

impl<'a> Parser<'a> {
    fn new(text: &str, schema: &'a Ontology) -> Result<Self, DslError> {
        Ok(Parser { toks: lex(text)?, i: 0, schema })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.0)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.i + k).map(|t| &t.0)
    }

    fn pos(&self) -> Pos {
        match self.toks.get(self.i) {
            Some((_, p)) => *p,
            None => self.toks.last().map(|(_, p)| Pos { line: p.line, column: p.column + 1 }).unwrap_or(Pos {
                line: 1,
                column: 1,
            }),
        }
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(x)) if x == w)
    }

    fn at_end(&self) -> bool {
        self.i >= self.toks.len()
    }

    fn error(&self, message: impl Into<String>) -> DslError {
        let phrase = self.peek().map(Tok::text).unwrap_or_else(|| "end of input".into());
        DslError::new(DslErrorKind::Syntax, self.pos(), phrase, message)
    }

    fn expect(&mut self, w: &str) -> Result<(), DslError> {
        if self.is_word(w) {
            self.i += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected `{w}`")))
        }
    }

    fn expect_tok(&mut self, t: Tok) -> Result<(), DslError> {
        if self.peek() == Some(&t) {
            self.i += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected `{}`", t.text())))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, DslError> {
        match self.peek() {
            Some(Tok::Word(w)) if is_identifier(w) && !KEYWORDS.contains(&w.as_str()) => {
                let w = w.clone();
                self.i += 1;
                Ok(w)
            }
            _ => Err(self.error(format!("expected {what}"))),
        }
    }

    /// Words up to the next keyword or punctuation.
    fn words(&mut self, stop: &[&str]) -> Vec<String> {
        let mut out = Vec::new();
        while let Some(Tok::Word(w)) = self.peek() {
            if stop.contains(&w.as_str()) {
                break;
            }
            out.push(w.clone());
            self.i += 1;
        }
        out
    }

    fn resolve_class(&self, words: &[String]) -> String {
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let name = pascal(&refs);
        let lower = name.to_lowercase();
        self.schema.classes().find(|c| c.name.to_lowercase() == lower).map(|c| c.name.clone()).unwrap_or(name)
    }

    fn class_ref(&mut self) -> Result<ClassRef, DslError> {
        let at = self.pos();
        let words = self.words(CLASS_STOP);
        if words.is_empty() {
            return Err(self.error("expected a class name"));
        }
        let name = self.resolve_class(&words);
        let annotation = match self.peek() {
            Some(Tok::Paren(inner)) => {
                let inner: Vec<String> = inner.split_whitespace().map(str::to_string).collect();
                self.i += 1;
                Some(self.resolve_class(&inner))
            }
            _ => None,
        };
        Ok(ClassRef { name, annotation, at })
    }

    fn resolve_relation(&self, lead: &str, words: &[String], at: Pos) -> Result<String, DslError> {
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let mut candidates = Vec::new();
        if lead == "is" {
            let mut camel = words[0].to_lowercase();
            camel.push_str(&pascal(&refs[1..]));
            candidates.push(camel);
        }
        candidates.push(format!("{lead}{}", pascal(&refs)));
        candidates
            .into_iter()
            .find(|c| self.schema.relation(c).is_some())
            .ok_or_else(|| {
                let phrase = format!("{lead} {}", words.join(" "));
                DslError::new(DslErrorKind::UnknownProperty, at, &phrase, format!("no relation matches `{phrase}`"))
            })
    }

    fn slots(&mut self, end: &[&str]) -> Result<Vec<SlotBinding>, DslError> {
        let mut out = Vec::new();
        loop {
            if self.at_end() || end.iter().any(|w| self.is_word(w)) {
                if out.is_empty() {
                    return Ok(out);
                }
                return Err(self.error("expected a slot after `AND`"));
            }
            let at = self.pos();
            let var = self.ident("a variable name")?;
            self.expect("is")?;
            let class = self.class_ref()?;
            let block = self.opt_block()?;
            out.push(SlotBinding { var, class, block, at });
            if self.is_word("AND") {
                self.i += 1;
            } else {
                return Ok(out);
            }
        }
    }

    fn opt_block(&mut self) -> Result<Vec<Constraint>, DslError> {
        if self.is_word("which") && self.peek_at(1) == Some(&Tok::LBrace) {
            self.i += 2;
            let mut block = Vec::new();
            loop {
                block.push(self.constraint()?);
                if self.is_word("AND") {
                    self.i += 1;
                } else {
                    break;
                }
            }
            self.expect_tok(Tok::RBrace)?;
            Ok(block)
        } else {
            Ok(Vec::new())
        }
    }

    fn constraint(&mut self) -> Result<Constraint, DslError> {
        let at = self.pos();
        let lead = match self.peek() {
            Some(Tok::Word(w)) if w == "is" || w == "has" => w.clone(),
            _ => return Err(self.error("expected `is` or `has`")),
        };
        self.i += 1;
        if lead == "is" {
            let op = if self.is_word("greater") || self.is_word("less") {
                let op = if self.is_word("greater") { CompareOp::GreaterThan } else { CompareOp::LessThan };
                self.i += 1;
                self.expect("than")?;
                Some(op)
            } else if self.is_word("equal") {
                self.i += 1;
                self.expect("to")?;
                Some(CompareOp::Equals)
            } else {
                None
            };
            if let Some(op) = op {
                let target = self.operand()?;
                return Ok(Constraint::Compare { op, target, at });
            }
        }
        let mut words = self.words(&["which", "AND"]);
        let object = match self.peek() {
            Some(Tok::Str(s)) => {
                let s = s.clone();
                self.i += 1;
                Object::Literal(s)
            }
            _ => {
                if words.len() < 2 {
                    return Err(self.error(format!("expected a property phrase and an object after `{lead}`")));
                }
                let last = words.pop().unwrap();
                if last.starts_with(|c: char| c.is_ascii_digit()) {
                    Object::Literal(last)
                } else {
                    Object::Var(last)
                }
            }
        };
        if words.is_empty() {
            return Err(self.error(format!("expected a property phrase after `{lead}`")));
        }
        let relation = self.resolve_relation(&lead, &words, at)?;
        let class = if self.is_word("which") && matches!(self.peek_at(1), Some(Tok::Word(w)) if w == "is") {
            self.i += 2;
            Some(self.class_ref()?)
        } else {
            None
        };
        let block = self.opt_block()?;
        Ok(Constraint::Link(Link { relation, object, class, block, at }))
    }

    fn operand(&mut self) -> Result<Operand, DslError> {
        match self.peek().cloned() {
            Some(Tok::Word(w)) if w == "now" => {
                self.i += 1;
                if self.peek() == Some(&Tok::Minus) {
                    self.i += 1;
                    let n = match self.peek() {
                        Some(Tok::Word(n)) => n.parse::<i64>().map_err(|_| self.error("expected a number of days"))?,
                        _ => return Err(self.error("expected a number of days")),
                    };
                    self.i += 1;
                    if self.is_word("days") || self.is_word("day") {
                        self.i += 1;
                    } else {
                        return Err(self.error("expected `days`"));
                    }
                    Ok(Operand::NowMinusDays(n))
                } else {
                    Ok(Operand::Now)
                }
            }
            Some(Tok::Str(s)) => {
                self.i += 1;
                Ok(Operand::Literal(s))
            }
            Some(Tok::Minus) => {
                self.i += 1;
                match self.peek().cloned() {
                    Some(Tok::Word(w)) if w.starts_with(|c: char| c.is_ascii_digit()) => {
                        self.i += 1;
                        Ok(Operand::Literal(format!("-{w}")))
                    }
                    _ => Err(self.error("expected a number")),
                }
            }
            Some(Tok::Word(w)) if w.starts_with(|c: char| c.is_ascii_digit()) => {
                self.i += 1;
                Ok(Operand::Literal(w))
            }
            Some(Tok::Word(_)) => Ok(Operand::Var(self.ident("a variable or value")?)),
            _ => Err(self.error("expected a variable, literal or `now`")),
        }
    }

    fn instance(&mut self) -> Result<TemplateInstance, DslError> {
        self.expect("RULE")?;
        let id = self.ident("a rule id")?;
        self.expect("USING")?;
        let template = self.ident("a template name")?;
        self.expect("IF")?;
        let conditions = self.slots(&["THEN"])?;
        self.expect("THEN")?;
        let results = self.slots(&["RULE"])?;
        Ok(TemplateInstance { id, template, conditions, results })
    }

    fn specs(&mut self, end: &[&str]) -> Result<Vec<SlotSpec>, DslError> {
        let mut out = Vec::new();
        loop {
            if self.at_end() || end.iter().any(|w| self.is_word(w)) {
                return if out.is_empty() { Ok(out) } else { Err(self.error("expected a slot after `AND`")) };
            }
            let at = self.pos();
            let name = self.ident("a slot name")?;
            self.expect("IN")?;
            let mut classes = Vec::new();
            loop {
                let words = self.words(CLASS_STOP);
                if words.is_empty() {
                    return Err(self.error("expected a class name"));
                }
                let class = self.resolve_class(&words);
                if self.schema.class(&class).is_none() {
                    return Err(DslError::new(
                        DslErrorKind::UnknownClass,
                        at,
                        words.join(" "),
                        format!("class `{class}` is not in the schema"),
                    ));
                }
                classes.push(class);
                if self.is_word("UNION") {
                    self.i += 1;
                } else {
                    break;
                }
            }
            self.expect("AT")?;
            self.expect("LEAST")?;
            let min = match self.peek() {
                Some(Tok::Word(n)) => n.parse::<usize>().map_err(|_| self.error("expected a cardinality"))?,
                _ => return Err(self.error("expected a cardinality")),
            };
            self.i += 1;
            if min < 1 {
                return Err(DslError::new(
                    DslErrorKind::Cardinality,
                    at,
                    &name,
                    "slot cardinality must be at least 1 (min cardinality 1)",
                ));
            }
            out.push(SlotSpec { name, classes, min });
            if self.is_word("AND") {
                self.i += 1;
            } else {
                return Ok(out);
            }
        }
    }

    fn template(&mut self) -> Result<Template, DslError> {
        let at = self.pos();
        self.expect("TEMPLATE")?;
        let name = self.ident("a template name")?;
        self.expect("IF")?;
        let condition = self.specs(&["THEN"])?;
        self.expect("THEN")?;
        let result = self.specs(&["TEMPLATE"])?;
        for (part, specs) in [("condition", &condition), ("result", &result)] {
            if specs.is_empty() {
                return Err(DslError::new(
                    DslErrorKind::Cardinality,
                    at,
                    &name,
                    format!("{part} needs at least one slot (min cardinality 1)"),
                ));
            }
        }
        let within = |specs: &[SlotSpec], roots: &[&str], part: &str| {
            for s in specs {
                for c in &s.classes {
                    if !roots.iter().any(|r| self.schema.is_subclass_of(c, r)) {
                        return Err(DslError::new(
                            DslErrorKind::ClassMismatch,
                            at,
                            c,
                            format!("{part} slot `{}` may only use subclasses of {}", s.name, roots.join(" or ")),
                        ));
                    }
                }
            }
            Ok(())
        };
        within(&condition, &["DomainSpecificElement", "Finding"], "condition")?;
        within(&result, &["Finding"], "result")?;
        Ok(Template { name, condition, result })
    }
}

/// Parses one template against the schema.
pub fn parse_template(text: &str, schema: &Ontology) -> Result<Template, DslError> {
    let mut p = Parser::new(text, schema)?;
    let t = p.template()?;
    if !p.at_end() {
        return Err(p.error("trailing input after template"));
    }
    Ok(t)
}

/// Parses a `.brt` file holding any number of templates.
pub fn parse_templates(text: &str, schema: &Ontology) -> Result<Vec<Template>, DslError> {
    let mut p = Parser::new(text, schema)?;
    let mut out = Vec::new();
    while !p.at_end() {
        out.push(p.template()?);
    }
    Ok(out)
}

/// Parses and validates one rule instance written against `template`.
pub fn parse_rule(text: &str, template: &Template, schema: &Ontology) -> Result<TemplateInstance, DslError> {
    let mut p = Parser::new(text, schema)?;
    let at = p.pos();
    let inst = p.instance()?;
    if !p.at_end() {
        return Err(p.error("trailing input after rule"));
    }
    if inst.template != template.name {
        return Err(DslError::new(
            DslErrorKind::UnknownTemplate,
            at,
            &inst.template,
            format!("rule uses template `{}`, expected `{}`", inst.template, template.name),
        ));
    }
    validate(&inst, template, schema)?;
    Ok(inst)
}

/// Parses and validates a `.brl` file; each rule names its template.
pub fn parse_rules(text: &str, templates: &[Template], schema: &Ontology) -> Result<Vec<TemplateInstance>, DslError> {
    let mut p = Parser::new(text, schema)?;
    let mut out: Vec<TemplateInstance> = Vec::new();
    while !p.at_end() {
        let at = p.pos();
        let inst = p.instance()?;
        let template = templates.iter().find(|t| t.name == inst.template).ok_or_else(|| {
            DslError::new(DslErrorKind::UnknownTemplate, at, &inst.template, format!("no template `{}`", inst.template))
        })?;
        if out.iter().any(|r| r.id == inst.id) {
            return Err(DslError::new(DslErrorKind::Syntax, at, &inst.id, format!("duplicate rule id `{}`", inst.id)));
        }
        validate(&inst, template, schema)?;
        out.push(inst);
    }
    Ok(out)
}
