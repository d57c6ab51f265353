//! Text forms of facts, examples and weighted rules.
//!
//! ```text
//! fact     ::= ident "(" subject "," time [ "," label ] ")" "."
//! example  ::= ("+" | "-") ident "(" subject "," time ")" "."
//! rule     ::= weight "::" ident "(A,B)" "<=" body "."
//! body     ::= "true" | group { "," group }
//! group    ::= item | "not" "[" item { "," item } "]"
//! item     ::= ident "(A,B)" | ident "(A,B," label ")" | "prev" "[" ident "(A,C)" "]"
//! ```
//!
//! Whitespace between tokens is ignored. `%` and `#` start a comment that runs
//! to the end of the line. Labels are resolved against the schema.

use std::fmt::Write as _;

use super::{BodyGroup, Conjunction, Literal, WeightedRule};
use crate::error::{Error, Result};
use crate::facts::{is_identifier, Fact, PredicateKind};
use crate::ingest::{is_subject_id, Example, Label, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RuleStyle {
    /// Canonical, re-parseable.
    #[default]
    Ascii,
    /// `¬`, `∧`, `≤`, `⇐` for reading.
    Unicode,
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Cursor {
            src,
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::parse(self.line, self.col, message)
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '%' || c == '#' {
                while !matches!(self.peek(), None | Some('\n')) {
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_trivia();
        self.peek().is_none()
    }

    fn expect(&mut self, token: &str) -> Result<()> {
        self.skip_trivia();
        if self.rest().starts_with(token) {
            for _ in token.chars() {
                self.bump();
            }
            Ok(())
        } else {
            let found: String = self.rest().chars().take(12).collect();
            Err(self.error(format!("expected `{token}`, found `{found}`")))
        }
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_trivia();
        if self.rest().starts_with(token) {
            for _ in token.chars() {
                self.bump();
            }
            true
        } else {
            false
        }
    }

    fn take_while(&mut self, mut pred: impl FnMut(char) -> bool) -> &'a str {
        let start = self.pos;
        while self.peek().is_some_and(&mut pred) {
            self.bump();
        }
        &self.src[start..self.pos]
    }

    fn ident(&mut self) -> Result<&'a str> {
        self.skip_trivia();
        let (line, col) = (self.line, self.col);
        let s = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
        if is_identifier(s) {
            Ok(s)
        } else {
            Err(Error::parse(line, col, format!("expected identifier, found `{s}`")))
        }
    }

    fn subject(&mut self) -> Result<&'a str> {
        self.skip_trivia();
        let (line, col) = (self.line, self.col);
        let s = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if is_subject_id(s) {
            Ok(s)
        } else {
            Err(Error::parse(line, col, "expected subject identifier"))
        }
    }

    fn time(&mut self) -> Result<u32> {
        self.skip_trivia();
        let (line, col) = (self.line, self.col);
        let s = self.take_while(|c| c.is_ascii_digit());
        s.parse()
            .map_err(|_| Error::parse(line, col, format!("expected non-negative hour, found `{s}`")))
    }

    fn label(&mut self) -> Result<&'a str> {
        self.skip_trivia();
        let s = self.take_while(|c| !c.is_whitespace() && !matches!(c, ',' | '(' | ')' | '[' | ']' | '%' | '#'));
        if s.is_empty() {
            Err(self.error("expected bin label"))
        } else {
            Ok(s)
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_trivia();
        let (line, col) = (self.line, self.col);
        let s = self.take_while(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
        match s.parse::<f64>() {
            Ok(w) if w.is_finite() => Ok(w),
            _ => Err(Error::parse(line, col, format!("expected finite weight, found `{s}`"))),
        }
    }
}

fn kind_of(schema: &Schema, name: &str) -> Result<PredicateKind> {
    if schema.parameter(name).is_some() {
        Ok(PredicateKind::Parameter)
    } else if schema.action(name).is_some() {
        Ok(PredicateKind::Event)
    } else {
        Err(Error::UnknownPredicate(name.to_string()))
    }
}

pub fn parse_facts(text: &str, schema: &Schema) -> Result<Vec<Fact>> {
    let mut cur = Cursor::new(text);
    let mut out = Vec::new();
    while !cur.at_end() {
        let (line, col) = (cur.line, cur.col);
        let name = cur.ident()?;
        cur.expect("(")?;
        let subject = cur.subject()?;
        cur.expect(",")?;
        let time = cur.time()?;
        let fact = match kind_of(schema, name)? {
            PredicateKind::Parameter => {
                cur.expect(",")?;
                let label = cur.label()?;
                let spec = schema.parameter(name).expect("kind_of checked");
                let bin = schema.resolve_label(name, label)?;
                Fact::parameter(spec.parameter().clone(), subject, time, bin)
            }
            PredicateKind::Event => {
                if cur.eat(",") {
                    return Err(Error::parse(line, col, format!("event `{name}` takes no bin argument")));
                }
                let spec = schema.action(name).expect("kind_of checked");
                Fact::event(spec.name.clone(), subject, time)
            }
        };
        cur.expect(")")?;
        cur.expect(".")?;
        out.push(fact);
    }
    Ok(out)
}

pub fn render_facts<'a>(facts: impl IntoIterator<Item = &'a Fact>, schema: &Schema) -> Result<String> {
    let mut out = String::new();
    for f in facts {
        match f.bin {
            Some(bin) => {
                let label = schema.label(f.predicate.name(), bin)?;
                let _ = writeln!(out, "{}({},{},{}).", f.predicate, f.subject, f.time, label);
            }
            None => {
                let _ = writeln!(out, "{}({},{}).", f.predicate, f.subject, f.time);
            }
        }
    }
    Ok(out)
}

pub fn parse_examples(text: &str, schema: &Schema) -> Result<Vec<Example>> {
    let mut cur = Cursor::new(text);
    let mut out = Vec::new();
    while !cur.at_end() {
        let label = if cur.eat("+") {
            Label::Positive
        } else if cur.eat("-") {
            Label::Negative
        } else {
            return Err(cur.error("expected `+` or `-`"));
        };
        let name = cur.ident()?;
        let action = schema
            .action(name)
            .ok_or_else(|| Error::UnknownPredicate(name.to_string()))?;
        cur.expect("(")?;
        let subject = cur.subject()?;
        cur.expect(",")?;
        let time = cur.time()?;
        cur.expect(")")?;
        cur.expect(".")?;
        out.push(Example::new(action.name.clone(), subject, time, label));
    }
    Ok(out)
}

pub fn render_examples<'a>(examples: impl IntoIterator<Item = &'a Example>) -> String {
    let mut out = String::new();
    for e in examples {
        let sign = if e.is_positive() { '+' } else { '-' };
        let _ = writeln!(out, "{sign}{}({},{}).", e.action, e.subject, e.time);
    }
    out
}

fn parse_item(cur: &mut Cursor<'_>, schema: &Schema) -> Result<Literal> {
    let (line, col) = (cur.line, cur.col);
    let name = cur.ident()?;
    if name == "prev" && cur.eat("[") {
        let event = cur.ident()?;
        if kind_of(schema, event)? != PredicateKind::Event {
            return Err(Error::parse(line, col, format!("prev[...] needs an event, `{event}` is a parameter")));
        }
        cur.expect("(")?;
        cur.expect("A")?;
        cur.expect(",")?;
        cur.expect("C")?;
        cur.expect(")")?;
        cur.expect("]")?;
        return Ok(Literal::previous(event));
    }
    cur.expect("(")?;
    cur.expect("A")?;
    cur.expect(",")?;
    cur.expect("B")?;
    let lit = match kind_of(schema, name)? {
        PredicateKind::Parameter => {
            cur.expect(",")?;
            let label = cur.label()?;
            Literal::bin_test(name, schema.resolve_label(name, label)?)
        }
        PredicateKind::Event => Literal::concurrent(name),
    };
    cur.expect(")")?;
    Ok(lit)
}

/// Parses a single literal in rule syntax, e.g. `map(A,B,60-70)` or `prev[e(A,C)]`.
pub fn parse_literal(text: &str, schema: &Schema) -> Result<Literal> {
    let mut cur = Cursor::new(text);
    let lit = parse_item(&mut cur, schema)?;
    if !cur.at_end() {
        return Err(cur.error("trailing input after literal"));
    }
    Ok(lit)
}

fn parse_rule(cur: &mut Cursor<'_>, schema: &Schema) -> Result<WeightedRule> {
    let weight = cur.number()?;
    cur.expect("::")?;
    let head = cur.ident()?;
    if schema.action(head).is_none() {
        return Err(Error::UnknownPredicate(head.to_string()));
    }
    cur.expect("(")?;
    cur.expect("A")?;
    cur.expect(",")?;
    cur.expect("B")?;
    cur.expect(")")?;
    cur.expect("<=")?;

    let mut body = Vec::new();
    let is_true = {
        cur.skip_trivia();
        let rest = cur.rest();
        rest.starts_with("true") && rest["true".len()..].trim_start().starts_with('.')
    };
    if is_true {
        cur.expect("true")?;
    } else {
        loop {
            cur.skip_trivia();
            if cur.rest().starts_with("not") && cur.rest()["not".len()..].trim_start().starts_with('[') {
                cur.expect("not")?;
                cur.expect("[")?;
                let mut lits = vec![parse_item(cur, schema)?];
                while cur.eat(",") {
                    lits.push(parse_item(cur, schema)?);
                }
                cur.expect("]")?;
                let conj = Conjunction::new(lits).map_err(|e| cur.error(e.to_string()))?;
                body.push(BodyGroup::Not(conj));
            } else {
                body.push(BodyGroup::Literal(parse_item(cur, schema)?));
            }
            if !cur.eat(",") {
                break;
            }
        }
    }
    cur.expect(".")?;
    Ok(WeightedRule {
        weight,
        head: head.to_string(),
        body,
    })
}

pub fn parse_rules(text: &str, schema: &Schema) -> Result<Vec<WeightedRule>> {
    let mut cur = Cursor::new(text);
    let mut out = Vec::new();
    while !cur.at_end() {
        out.push(parse_rule(&mut cur, schema)?);
    }
    Ok(out)
}

fn unicode_label(label: &str) -> String {
    label.replace("<=", "≤").replace(">=", "≥")
}

pub fn render_literal(lit: &Literal, schema: &Schema, style: RuleStyle) -> Result<String> {
    Ok(match (lit, style) {
        (Literal::BinTest { parameter, bin }, RuleStyle::Ascii) => {
            format!("{parameter}(A,B,{})", schema.label(parameter, *bin)?)
        }
        (Literal::BinTest { parameter, bin }, RuleStyle::Unicode) => {
            format!("{parameter}(A,B,{})", unicode_label(schema.label(parameter, *bin)?))
        }
        (Literal::Concurrent { event }, _) => format!("{event}(A,B)"),
        (Literal::Previous { event }, RuleStyle::Ascii) => format!("prev[{event}(A,C)]"),
        (Literal::Previous { event }, RuleStyle::Unicode) => format!("[∃C | B=C+1 ∧ {event}(A,C)]"),
    })
}

fn render_group(group: &BodyGroup, schema: &Schema, style: RuleStyle) -> Result<String> {
    match group {
        BodyGroup::Literal(l) => render_literal(l, schema, style),
        BodyGroup::Not(conj) => {
            let items = conj
                .literals()
                .iter()
                .map(|l| render_literal(l, schema, style))
                .collect::<Result<Vec<_>>>()?;
            Ok(match style {
                RuleStyle::Ascii => format!("not[{}]", items.join(", ")),
                RuleStyle::Unicode if items.len() == 1 => format!("¬{}", items[0]),
                RuleStyle::Unicode => format!("¬[{}]", items.join(" ∧ ")),
            })
        }
    }
}

pub fn render_rule(rule: &WeightedRule, schema: &Schema, style: RuleStyle) -> Result<String> {
    let body = if rule.body.is_empty() {
        "true".to_string()
    } else {
        let groups = rule
            .body
            .iter()
            .map(|g| render_group(g, schema, style))
            .collect::<Result<Vec<_>>>()?;
        match style {
            RuleStyle::Ascii => groups.join(", "),
            RuleStyle::Unicode => groups.join(" ∧ "),
        }
    };
    let arrow = match style {
        RuleStyle::Ascii => "<=",
        RuleStyle::Unicode => "⇐",
    };
    Ok(format!("{} :: {}(A,B) {arrow} {body}.", rule.weight, rule.head))
}
