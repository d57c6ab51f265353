//! The clause language.
//!
//! Every clause talks about one subject `A` at one hour `B`. A literal is
//! one of:
//!
//! * `p(A,B,bin)`: parameter `p` was measured at hour `B` and fell in `bin`,
//! * `e(A,B)`: event `e` holds at hour `B`,
//! * `prev[e(A,C)]`: `∃C. B = C+1 ∧ e(A,C)`, the event held in the previous hour.
//!
//! Evaluation is closed-world: a missing fact is false.

mod syntax;

pub use syntax::{
    parse_examples, parse_facts, parse_literal, parse_rules, render_examples, render_facts, render_literal,
    render_rule, RuleStyle,
};

use std::cmp::Ordering;
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::facts::{Bin, FactStore, PredicateKind};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    /// `p(A,B,bin)`
    BinTest { parameter: String, bin: Bin },
    /// `e(A,B)`
    Concurrent { event: String },
    /// `∃C. B = C+1 ∧ e(A,C)`
    Previous { event: String },
}

impl Literal {
    pub fn bin_test(parameter: impl Into<String>, bin: Bin) -> Self {
        Literal::BinTest {
            parameter: parameter.into(),
            bin,
        }
    }

    pub fn concurrent(event: impl Into<String>) -> Self {
        Literal::Concurrent { event: event.into() }
    }

    pub fn previous(event: impl Into<String>) -> Self {
        Literal::Previous { event: event.into() }
    }

    pub fn predicate(&self) -> &str {
        match self {
            Literal::BinTest { parameter, .. } => parameter,
            Literal::Concurrent { event } | Literal::Previous { event } => event,
        }
    }

    fn sort_key(&self) -> (&str, Option<Bin>, u8) {
        match self {
            Literal::BinTest { parameter, bin } => (parameter, Some(*bin), 0),
            Literal::Concurrent { event } => (event, None, 1),
            Literal::Previous { event } => (event, None, 2),
        }
    }

    fn expected_kind(&self) -> PredicateKind {
        match self {
            Literal::BinTest { .. } => PredicateKind::Parameter,
            _ => PredicateKind::Event,
        }
    }

    pub fn holds(&self, ctx: &QueryContext<'_>) -> Result<bool> {
        let kind = ctx.store.predicate(self.predicate())?.kind();
        if kind != self.expected_kind() {
            return Err(Error::MalformedFact(format!(
                "literal on `{}` expects a {:?} predicate",
                self.predicate(),
                self.expected_kind()
            )));
        }
        match self {
            Literal::BinTest { parameter, bin } => {
                Ok(ctx.store.bin_at(parameter, ctx.subject, ctx.time)? == Some(*bin))
            }
            Literal::Concurrent { event } => {
                if ctx.excluded == Some(event.as_str()) {
                    return Err(Error::LabelLeak(event.clone()));
                }
                ctx.store.has_event(event, ctx.subject, ctx.time)
            }
            Literal::Previous { event } => match ctx.time.checked_sub(1) {
                Some(c) => ctx.store.has_event(event, ctx.subject, c),
                None => Ok(false),
            },
        }
    }
}

/// Canonical order: predicate name, then bin, then kind.
impl Ord for Literal {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for Literal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A non-empty conjunction of distinct literals; the test at one tree node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Conjunction(Vec<Literal>);

impl Conjunction {
    pub fn new(literals: Vec<Literal>) -> Result<Self> {
        if literals.is_empty() {
            return Err(Error::MalformedFact("empty conjunction".into()));
        }
        let mut seen = HashSet::new();
        if !literals.iter().all(|l| seen.insert(l)) {
            return Err(Error::MalformedFact("duplicate literal in conjunction".into()));
        }
        Ok(Conjunction(literals))
    }

    pub fn single(literal: Literal) -> Self {
        Conjunction(vec![literal])
    }

    pub fn literals(&self) -> &[Literal] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Literal> for Conjunction {
    fn from(l: Literal) -> Self {
        Conjunction::single(l)
    }
}

/// Grounding of `A` (subject) and `B` (hour) against a store.
#[derive(Debug, Clone, Copy)]
pub struct QueryContext<'a> {
    pub store: &'a FactStore,
    pub subject: &'a str,
    pub time: u32,
    /// Target action, which may not be tested at hour `B`.
    pub excluded: Option<&'a str>,
}

impl<'a> QueryContext<'a> {
    pub fn new(store: &'a FactStore, subject: &'a str, time: u32) -> Self {
        QueryContext {
            store,
            subject,
            time,
            excluded: None,
        }
    }

    pub fn excluding(mut self, target: &'a str) -> Self {
        self.excluded = Some(target);
        self
    }
}

/// True iff every literal holds.
pub fn eval(conj: &Conjunction, ctx: &QueryContext<'_>) -> Result<bool> {
    let mut all = true;
    // No short-circuit: an unknown predicate is reported wherever it sits.
    for lit in conj.literals() {
        all &= lit.holds(ctx)?;
    }
    Ok(all)
}

/// Every literal usable in a node test for `target`, in canonical order.
pub fn candidate_literals<'a>(
    vocabulary: impl IntoIterator<Item = &'a crate::facts::PredicateId>,
    target: &str,
) -> Vec<Literal> {
    let mut out = Vec::new();
    for p in vocabulary {
        match p.kind() {
            PredicateKind::Parameter => out.extend(Bin::all().map(|b| Literal::bin_test(p.name(), b))),
            PredicateKind::Event => {
                if p.name() != target {
                    out.push(Literal::concurrent(p.name()));
                }
                out.push(Literal::previous(p.name()));
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Index combinations of `k` literals taken `1..=max_len` at a time: shorter
/// first, lexicographic within a length.
pub fn candidate_index_sets(k: usize, max_len: usize) -> Vec<Vec<usize>> {
    fn extend(start: usize, k: usize, len: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for i in start..k {
            cur.push(i);
            extend(i + 1, k, len, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for len in 1..=max_len.min(k) {
        extend(0, k, len, &mut Vec::with_capacity(len), &mut out);
    }
    out
}

/// All conjunctions of at most `max_len` candidate literals for `target`.
pub fn candidates<'a>(
    vocabulary: impl IntoIterator<Item = &'a crate::facts::PredicateId>,
    max_len: usize,
    target: &str,
) -> Vec<Conjunction> {
    let literals = candidate_literals(vocabulary, target);
    candidate_index_sets(literals.len(), max_len)
        .into_iter()
        .map(|idx| Conjunction(idx.into_iter().map(|i| literals[i].clone()).collect()))
        .collect()
}

/// One element of a rule body.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BodyGroup {
    Literal(Literal),
    /// `¬[l1 ∧ ... ∧ ln]`
    Not(Conjunction),
}

impl BodyGroup {
    pub fn holds(&self, ctx: &QueryContext<'_>) -> Result<bool> {
        match self {
            BodyGroup::Literal(l) => l.holds(ctx),
            BodyGroup::Not(c) => eval(c, ctx).map(|v| !v),
        }
    }
}

/// `weight :: head(A,B) <= body.`
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedRule {
    pub weight: f64,
    pub head: String,
    pub body: Vec<BodyGroup>,
}

impl WeightedRule {
    pub fn fires(&self, ctx: &QueryContext<'_>) -> Result<bool> {
        let mut all = true;
        for g in &self.body {
            all &= g.holds(ctx)?;
        }
        Ok(all)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facts::{Fact, PredicateId};

    fn bin(i: u8) -> Bin {
        Bin::new(i).unwrap()
    }

    fn store() -> FactStore {
        let mut s = FactStore::new();
        let map = PredicateId::parameter("map").unwrap();
        let rr = PredicateId::event("resp_ratedecr").unwrap();
        s.register(map.clone()).unwrap();
        s.register(rr.clone()).unwrap();
        s.register(PredicateId::event("mapincr").unwrap()).unwrap();
        s.add_fact(Fact::parameter(map, "subj1", 100, bin(2))).unwrap();
        s.add_fact(Fact::event(rr, "subj1", 99)).unwrap();
        s.frozen()
    }

    #[test]
    fn bin_test() {
        let s = store();
        let c = Conjunction::single(Literal::bin_test("map", bin(2)));
        assert!(eval(&c, &QueryContext::new(&s, "subj1", 100)).unwrap());
        assert!(!eval(&c, &QueryContext::new(&s, "subj1", 101)).unwrap());
        let other = Conjunction::single(Literal::bin_test("map", bin(3)));
        assert!(!eval(&other, &QueryContext::new(&s, "subj1", 100)).unwrap());
    }

    #[test]
    fn previous_hour_event() {
        let s = store();
        let c = Conjunction::single(Literal::previous("resp_ratedecr"));
        assert!(eval(&c, &QueryContext::new(&s, "subj1", 100)).unwrap());
        assert!(!eval(&c, &QueryContext::new(&s, "subj1", 99)).unwrap());
        assert!(!eval(&c, &QueryContext::new(&s, "subj1", 0)).unwrap());
    }

    #[test]
    fn missing_measurement_negation_is_true() {
        let s = store();
        let c = Conjunction::single(Literal::bin_test("map", bin(2)));
        let ctx = QueryContext::new(&s, "subj1", 50);
        assert!(!eval(&c, &ctx).unwrap());
        assert!(BodyGroup::Not(c).holds(&ctx).unwrap());
    }

    #[test]
    fn unknown_predicate_and_leak() {
        let s = store();
        let c = Conjunction::single(Literal::concurrent("po2incr"));
        assert!(matches!(
            eval(&c, &QueryContext::new(&s, "subj1", 1)),
            Err(Error::UnknownPredicate(_))
        ));
        let leak = Conjunction::single(Literal::concurrent("mapincr"));
        let ctx = QueryContext::new(&s, "subj1", 1).excluding("mapincr");
        assert!(matches!(eval(&leak, &ctx), Err(Error::LabelLeak(_))));
        let prev = Conjunction::single(Literal::previous("mapincr"));
        assert!(!eval(&prev, &ctx).unwrap());
    }

    #[test]
    fn conjunction_invariants() {
        assert!(Conjunction::new(vec![]).is_err());
        let l = Literal::concurrent("x");
        assert!(Conjunction::new(vec![l.clone(), l]).is_err());
    }

    #[test]
    fn candidate_counts() {
        let p = |n: &str| PredicateId::parameter(n).unwrap();
        let e = |n: &str| PredicateId::event(n).unwrap();
        assert_eq!(candidates(&[p("map")], 1, "mapincr").len(), 5);
        let vocab = [p("map"), p("ph"), e("mapincr"), e("phincr")];
        let c = candidates(&vocab, 1, "mapincr");
        assert_eq!(c.len(), 2 * 5 + 1 + 2);
        assert!(!c.iter().any(|c| c.literals().contains(&Literal::concurrent("mapincr"))));
        let k = 13;
        assert_eq!(candidates(&vocab, 2, "mapincr").len(), k + k * (k - 1) / 2);
    }

    #[test]
    fn canonical_order() {
        let p = |n: &str| PredicateId::parameter(n).unwrap();
        let e = |n: &str| PredicateId::event(n).unwrap();
        let lits = candidate_literals(&[e("b_ev"), p("a"), e("target")], "target");
        assert_eq!(lits[0], Literal::bin_test("a", bin(0)));
        assert_eq!(lits[4], Literal::bin_test("a", bin(4)));
        assert_eq!(lits[5], Literal::concurrent("b_ev"));
        assert_eq!(lits[6], Literal::previous("b_ev"));
        assert_eq!(lits[7], Literal::previous("target"));
        assert_eq!(lits.len(), 8);
    }
}
