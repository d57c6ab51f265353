//! Raw trajectories to facts, and facts to labelled action examples.

mod schema;

pub use schema::{default_directions, ActionSpec, BinSpec, Direction, Schema, DEFAULT_PARAMETERS};

use std::collections::BTreeMap;
use std::io::Read;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::facts::{Fact, FactStore, PredicateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn target(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => 0.0,
        }
    }
}

/// `±action(subject, time)`, where `time` is the earlier of the two
/// consecutive measurements that produced it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Example {
    pub action: PredicateId,
    pub subject: String,
    pub time: u32,
    pub label: Label,
}

impl Example {
    pub fn new(action: PredicateId, subject: impl Into<String>, time: u32, label: Label) -> Self {
        Example {
            action,
            subject: subject.into(),
            time,
            label,
        }
    }

    pub fn is_positive(&self) -> bool {
        self.label.is_positive()
    }
}

pub(crate) fn is_subject_id(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-'))
}

/// Reads `subject,time,parameter,value` rows into a frozen store.
///
/// Rows with an empty value are missing measurements and are skipped.
pub fn ingest_csv<R: Read>(input: R, schema: &Schema) -> Result<FactStore> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let mut store = FactStore::with_vocabulary(&schema.vocabulary())?;

    let mut records = reader.records();
    match records.next() {
        Some(Ok(header)) if header.iter().eq(["subject", "time", "parameter", "value"]) => {}
        Some(Ok(_)) => return Err(Error::parse(1, 1, "expected header `subject,time,parameter,value`")),
        Some(Err(e)) => return Err(Error::parse(1, 1, e.to_string())),
        None => return Err(Error::parse(1, 1, "empty input")),
    }

    for record in records {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(line, 1, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 4 {
            return Err(Error::parse(line, 1, format!("expected 4 fields, got {}", record.len())));
        }
        let subject = &record[0];
        if !is_subject_id(subject) {
            return Err(Error::parse(line, 1, format!("invalid subject `{subject}`")));
        }
        let time: u32 = record[1]
            .parse()
            .map_err(|_| Error::parse(line, 2, format!("invalid time `{}`", &record[1])))?;
        let spec = schema
            .parameter(&record[2])
            .ok_or_else(|| Error::UnknownParameter(record[2].to_string()))?;
        if record[3].is_empty() {
            store.add_subject(subject)?;
            continue;
        }
        let value: f64 = record[3]
            .parse()
            .map_err(|_| Error::parse(line, 4, format!("invalid value `{}`", &record[3])))?;
        let bin = spec
            .discretize(value)
            .map_err(|e| Error::parse(line, 4, e.to_string()))?;
        store.add_fact(Fact::parameter(spec.parameter().clone(), subject, time, bin))?;
    }
    Ok(store.frozen())
}

/// Frozen store holding `facts`, with every schema predicate registered.
pub fn store_from_facts(facts: impl IntoIterator<Item = Fact>, schema: &Schema) -> Result<FactStore> {
    let mut store = FactStore::with_vocabulary(&schema.vocabulary())?;
    for fact in facts {
        store.add_fact(fact)?;
    }
    Ok(store.frozen())
}

/// Labels every pair of consecutive recorded measurements of the action's parameter.
pub fn examples_for(store: &FactStore, spec: &ActionSpec) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for subject in store.subjects() {
        let series = store.measurements(spec.parameter.name(), subject)?;
        for pair in series.windows(2) {
            let ((t0, b0), (t1, b1)) = (pair[0], pair[1]);
            if spec.max_gap_hours.is_some_and(|gap| t1 - t0 > gap) {
                continue;
            }
            let label = if spec.fires(b0, b1) {
                Label::Positive
            } else {
                Label::Negative
            };
            out.push(Example::new(spec.name.clone(), subject, t0, label));
        }
    }
    Ok(out)
}

/// Examples for one action, plus a derived store in which every positive is
/// asserted as an event fact.
pub fn generate_examples(store: &FactStore, spec: &ActionSpec) -> Result<(Vec<Example>, FactStore)> {
    let examples = examples_for(store, spec)?;
    let mut derived = store.derive();
    derived.register(spec.name.clone())?;
    assert_events(&mut derived, &examples)?;
    Ok((examples, derived.frozen()))
}

/// Examples for every action in `specs`, with all their events asserted into one derived store.
pub fn generate_all(
    store: &FactStore,
    specs: &[ActionSpec],
) -> Result<(BTreeMap<String, Vec<Example>>, FactStore)> {
    let mut derived = store.derive();
    let mut by_action = BTreeMap::new();
    for spec in specs {
        let examples = examples_for(store, spec)?;
        derived.register(spec.name.clone())?;
        assert_events(&mut derived, &examples)?;
        by_action.insert(spec.name().to_string(), examples);
    }
    Ok((by_action, derived.frozen()))
}

fn assert_events(store: &mut FactStore, examples: &[Example]) -> Result<()> {
    for ex in examples.iter().filter(|e| e.is_positive()) {
        store.add_fact(Fact::event(ex.action.clone(), ex.subject.clone(), ex.time))?;
    }
    Ok(())
}

/// Keeps every positive and at most `ratio * positives` negatives, chosen by a
/// seeded shuffle. Relative order is preserved.
pub fn subsample_negatives(examples: &[Example], ratio: f64, seed: u64) -> Vec<Example> {
    let positives = examples.iter().filter(|e| e.is_positive()).count();
    let mut negatives: Vec<usize> = (0..examples.len()).filter(|&i| !examples[i].is_positive()).collect();
    let keep = ((ratio.max(0.0) * positives as f64).floor() as usize).min(negatives.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    negatives.shuffle(&mut rng);
    let mut kept = vec![false; examples.len()];
    for &i in &negatives[..keep] {
        kept[i] = true;
    }
    examples
        .iter()
        .enumerate()
        .filter(|(i, e)| e.is_positive() || kept[*i])
        .map(|(_, e)| e.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facts::Bin;

    fn bin(i: u8) -> Bin {
        Bin::new(i).unwrap()
    }

    fn store_with(param: &str, subject: &str, series: &[(u32, u8)]) -> FactStore {
        let schema = Schema::default_clinical();
        let mut s = FactStore::with_vocabulary(&schema.vocabulary()).unwrap();
        let p = schema.parameter(param).unwrap().parameter().clone();
        for &(t, b) in series {
            s.add_fact(Fact::parameter(p.clone(), subject, t, bin(b))).unwrap();
        }
        s.frozen()
    }

    #[test]
    fn csv_rows_become_facts() {
        let csv = "subject,time,parameter,value\nsubj1,100,map,65\nsubj1,101,map,\nsubj1,101,heart_rate,140\n";
        let s = ingest_csv(csv.as_bytes(), &Schema::default_clinical()).unwrap();
        assert!(s.is_frozen());
        assert_eq!(s.bin_at("map", "subj1", 100).unwrap(), Some(bin(2)));
        assert_eq!(s.bin_at("map", "subj1", 101).unwrap(), None);
        assert_eq!(s.bin_at("heart_rate", "subj1", 101).unwrap(), Some(bin(4)));
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn csv_bad_time_names_line() {
        let csv = "subject,time,parameter,value\nsubj1,100,map,65\nsubj1,x1,map,70\n";
        let err = ingest_csv(csv.as_bytes(), &Schema::default_clinical()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn csv_unknown_parameter() {
        let csv = "subject,time,parameter,value\nsubj1,100,pco2,65\n";
        let err = ingest_csv(csv.as_bytes(), &Schema::default_clinical()).unwrap_err();
        assert_eq!(err, Error::UnknownParameter("pco2".into()));
    }

    #[test]
    fn csv_requires_header() {
        let csv = "subj1,100,map,65\n";
        assert!(matches!(
            ingest_csv(csv.as_bytes(), &Schema::default_clinical()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn csv_conflict_propagates() {
        let csv = "subject,time,parameter,value\ns,1,map,65\ns,1,map,90\n";
        assert!(matches!(
            ingest_csv(csv.as_bytes(), &Schema::default_clinical()),
            Err(Error::ConflictingFact { .. })
        ));
    }

    #[test]
    fn two_bin_rise_is_positive() {
        let schema = Schema::default_clinical();
        let s = store_with("map", "subj1", &[(100, 2), (101, 4)]);
        let (ex, derived) = generate_examples(&s, schema.action("mapincr").unwrap()).unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!((ex[0].subject.as_str(), ex[0].time, ex[0].label), ("subj1", 100, Label::Positive));
        assert!(derived.has_event("mapincr", "subj1", 100).unwrap());
        assert!(!s.is_empty() && s.predicate("mapincr").is_ok());
    }

    #[test]
    fn one_bin_rise_is_negative() {
        let schema = Schema::default_clinical();
        let s = store_with("map", "subj1", &[(100, 2), (101, 3)]);
        let (ex, derived) = generate_examples(&s, schema.action("mapincr").unwrap()).unwrap();
        assert_eq!(ex[0].label, Label::Negative);
        assert!(!derived.has_event("mapincr", "subj1", 100).unwrap());
    }

    #[test]
    fn fall_is_not_an_increase() {
        let schema = Schema::default_clinical();
        let s = store_with("map", "subj1", &[(100, 4), (101, 1)]);
        let (ex, _) = generate_examples(&s, schema.action("mapincr").unwrap()).unwrap();
        assert_eq!(ex[0].label, Label::Negative);
    }

    #[test]
    fn heart_rate_decrease() {
        let schema = Schema::default_clinical();
        let s = store_with("heart_rate", "subj", &[(10, 4), (11, 1)]);
        let (ex, _) = generate_examples(&s, schema.action("heart_ratedecr").unwrap()).unwrap();
        assert_eq!((ex[0].time, ex[0].label), (10, Label::Positive));
    }

    #[test]
    fn gaps_still_pair_unless_limited() {
        let schema = Schema::default_clinical();
        let s = store_with("map", "a", &[(1, 0), (7, 2), (8, 2)]);
        let spec = schema.action("mapincr").unwrap().clone();
        let ex = examples_for(&s, &spec).unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!((ex[0].time, ex[0].label), (1, Label::Positive));
        let limited = examples_for(&s, &spec.with_max_gap(Some(3))).unwrap();
        assert_eq!(limited.len(), 1);
        assert_eq!(limited[0].time, 7);
    }

    #[test]
    fn subsampling_keeps_positives() {
        let a = PredicateId::event("mapincr").unwrap();
        let ex: Vec<Example> = (0..100)
            .map(|t| Example::new(a.clone(), "s", t, if t % 10 == 0 { Label::Positive } else { Label::Negative }))
            .collect();
        let sub = subsample_negatives(&ex, 2.0, 7);
        assert_eq!(sub.iter().filter(|e| e.is_positive()).count(), 10);
        assert_eq!(sub.len(), 30);
        assert!(sub.windows(2).all(|w| w[0].time < w[1].time));
        assert_eq!(sub, subsample_negatives(&ex, 2.0, 7));
    }
}
