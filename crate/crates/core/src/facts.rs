//! Grounded facts and the relational store that holds them.
//!
//! A fact is either a parameter measurement `name(subject, time, bin)` or an
//! event `name(subject, time)`. The store indexes facts by
//! `(predicate, subject, time)` and becomes read-only once frozen.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of ordinal bins every parameter is discretized into.
pub const N_BINS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredicateKind {
    /// `name(subject, time, bin)`
    Parameter,
    /// `name(subject, time)`
    Event,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PredicateId {
    name: String,
    kind: PredicateKind,
}

impl PredicateId {
    pub fn new(name: impl Into<String>, kind: PredicateKind) -> Result<Self> {
        let name = name.into();
        if !is_identifier(&name) {
            return Err(Error::MalformedFact(format!(
                "predicate name `{name}` must match [a-z][a-z0-9_]*"
            )));
        }
        Ok(PredicateId { name, kind })
    }

    pub fn parameter(name: impl Into<String>) -> Result<Self> {
        Self::new(name, PredicateKind::Parameter)
    }

    pub fn event(name: impl Into<String>) -> Result<Self> {
        Self::new(name, PredicateKind::Event)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> PredicateKind {
        self.kind
    }

    pub fn is_event(&self) -> bool {
        self.kind == PredicateKind::Event
    }
}

impl fmt::Display for PredicateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Ordinal bin index in `0..N_BINS`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Bin(u8);

impl Bin {
    pub fn new(index: u8) -> Option<Self> {
        ((index as usize) < N_BINS).then_some(Bin(index))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = Bin> {
        (0..N_BINS as u8).map(Bin)
    }
}

impl TryFrom<u8> for Bin {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        Bin::new(v).ok_or_else(|| format!("bin index {v} out of range"))
    }
}

impl From<Bin> for u8 {
    fn from(b: Bin) -> u8 {
        b.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fact {
    pub predicate: PredicateId,
    pub subject: String,
    pub time: u32,
    /// Present iff the predicate is a parameter.
    pub bin: Option<Bin>,
}

impl Fact {
    pub fn parameter(predicate: PredicateId, subject: impl Into<String>, time: u32, bin: Bin) -> Self {
        Fact {
            predicate,
            subject: subject.into(),
            time,
            bin: Some(bin),
        }
    }

    pub fn event(predicate: PredicateId, subject: impl Into<String>, time: u32) -> Self {
        Fact {
            predicate,
            subject: subject.into(),
            time,
            bin: None,
        }
    }

    fn check_arity(&self) -> Result<()> {
        match (self.predicate.kind(), self.bin) {
            (PredicateKind::Parameter, Some(_)) | (PredicateKind::Event, None) => Ok(()),
            (PredicateKind::Parameter, None) => Err(Error::MalformedFact(format!(
                "parameter fact {}({},{}) has no bin",
                self.predicate, self.subject, self.time
            ))),
            (PredicateKind::Event, Some(_)) => Err(Error::MalformedFact(format!(
                "event fact {}({},{}) carries a bin",
                self.predicate, self.subject, self.time
            ))),
        }
    }
}

/// Result of a store lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    /// Parameter predicate: the measured bin, absent if not measured that hour.
    Measured(Option<Bin>),
    /// Event predicate: whether the event holds.
    Event(bool),
}

type Series = BTreeMap<u32, Option<Bin>>;

#[derive(Debug, Clone, Default)]
pub struct FactStore {
    predicates: BTreeMap<String, PredicateId>,
    subjects: BTreeMap<String, u32>,
    series: HashMap<String, HashMap<String, Series>>,
    frozen: bool,
}

impl FactStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Store with every predicate in `vocabulary` registered.
    pub fn with_vocabulary<'a>(vocabulary: impl IntoIterator<Item = &'a PredicateId>) -> Result<Self> {
        let mut store = Self::new();
        for p in vocabulary {
            store.register(p.clone())?;
        }
        Ok(store)
    }

    pub fn register(&mut self, predicate: PredicateId) -> Result<()> {
        if self.frozen {
            return Err(Error::StoreFrozen);
        }
        match self.predicates.get(predicate.name()) {
            Some(existing) if existing.kind() != predicate.kind() => Err(Error::MalformedFact(format!(
                "predicate `{}` registered as {:?}, redeclared as {:?}",
                predicate.name(),
                existing.kind(),
                predicate.kind()
            ))),
            Some(_) => Ok(()),
            None => {
                self.predicates.insert(predicate.name().to_string(), predicate);
                Ok(())
            }
        }
    }

    pub fn add_fact(&mut self, fact: Fact) -> Result<()> {
        if self.frozen {
            return Err(Error::StoreFrozen);
        }
        fact.check_arity()?;
        let registered = self
            .predicates
            .get(fact.predicate.name())
            .ok_or_else(|| Error::UnknownPredicate(fact.predicate.name().to_string()))?;
        if registered.kind() != fact.predicate.kind() {
            return Err(Error::MalformedFact(format!(
                "`{}` is a {:?} predicate",
                registered.name(),
                registered.kind()
            )));
        }

        let series = self
            .series
            .entry(fact.predicate.name().to_string())
            .or_default()
            .entry(fact.subject.clone())
            .or_default();
        match series.get(&fact.time) {
            Some(existing) if *existing == fact.bin => return Ok(()),
            Some(existing) => {
                return Err(Error::ConflictingFact {
                    predicate: fact.predicate.name().to_string(),
                    subject: fact.subject,
                    time: fact.time,
                    existing: existing.map_or(0, Bin::index),
                    new: fact.bin.map_or(0, Bin::index),
                })
            }
            None => {
                series.insert(fact.time, fact.bin);
            }
        }
        let horizon = self.subjects.entry(fact.subject).or_insert(fact.time);
        *horizon = (*horizon).max(fact.time);
        Ok(())
    }

    /// Registers the subject without any facts (e.g. a trajectory with no measurements).
    pub fn add_subject(&mut self, subject: impl Into<String>) -> Result<()> {
        if self.frozen {
            return Err(Error::StoreFrozen);
        }
        self.subjects.entry(subject.into()).or_insert(0);
        Ok(())
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn frozen(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Unfrozen copy to which derived facts can be added.
    pub fn derive(&self) -> Self {
        FactStore {
            frozen: false,
            ..self.clone()
        }
    }

    pub fn predicate(&self, name: &str) -> Result<&PredicateId> {
        self.predicates
            .get(name)
            .ok_or_else(|| Error::UnknownPredicate(name.to_string()))
    }

    pub fn predicates(&self) -> impl Iterator<Item = &PredicateId> {
        self.predicates.values()
    }

    pub fn subjects(&self) -> impl Iterator<Item = &str> {
        self.subjects.keys().map(String::as_str)
    }

    pub fn horizon(&self, subject: &str) -> Option<u32> {
        self.subjects.get(subject).copied()
    }

    fn series(&self, name: &str, subject: &str) -> Option<&Series> {
        self.series.get(name)?.get(subject)
    }

    pub fn lookup(&self, name: &str, subject: &str, time: u32) -> Result<Observation> {
        let predicate = self.predicate(name)?;
        let hit = self.series(name, subject).and_then(|s| s.get(&time));
        Ok(match predicate.kind() {
            PredicateKind::Parameter => Observation::Measured(hit.copied().flatten()),
            PredicateKind::Event => Observation::Event(hit.is_some()),
        })
    }

    pub fn bin_at(&self, name: &str, subject: &str, time: u32) -> Result<Option<Bin>> {
        match self.lookup(name, subject, time)? {
            Observation::Measured(bin) => Ok(bin),
            Observation::Event(_) => Err(Error::MalformedFact(format!("`{name}` is an event predicate"))),
        }
    }

    pub fn has_event(&self, name: &str, subject: &str, time: u32) -> Result<bool> {
        match self.lookup(name, subject, time)? {
            Observation::Event(present) => Ok(present),
            Observation::Measured(_) => Err(Error::MalformedFact(format!("`{name}` is a parameter predicate"))),
        }
    }

    /// Time-ordered measurements of a parameter for one subject.
    pub fn measurements(&self, name: &str, subject: &str) -> Result<Vec<(u32, Bin)>> {
        let predicate = self.predicate(name)?;
        if predicate.is_event() {
            return Err(Error::MalformedFact(format!("`{name}` is an event predicate")));
        }
        Ok(self
            .series(name, subject)
            .map(|s| s.iter().filter_map(|(&t, b)| b.map(|b| (t, b))).collect())
            .unwrap_or_default())
    }

    /// Times at which an event holds for one subject.
    pub fn event_times(&self, name: &str, subject: &str) -> Result<Vec<u32>> {
        self.predicate(name)?;
        Ok(self
            .series(name, subject)
            .map(|s| s.keys().copied().collect())
            .unwrap_or_default())
    }

    /// All facts in canonical order (predicate, subject, time).
    pub fn facts(&self) -> Vec<Fact> {
        let mut out = Vec::new();
        for (name, predicate) in &self.predicates {
            for subject in self.subjects.keys() {
                if let Some(series) = self.series(name, subject) {
                    out.extend(series.iter().map(|(&time, &bin)| Fact {
                        predicate: predicate.clone(),
                        subject: subject.clone(),
                        time,
                        bin,
                    }));
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.series.values().flat_map(HashMap::values).map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
