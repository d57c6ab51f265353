//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relboost::facts::Bin;
use relboost::logic::{BodyGroup, Conjunction, Literal};
use relboost::{BoostedModel, Fact, FactStore, RegressionTree, Schema, TreeNode};

pub fn bin(i: u8) -> Bin {
    Bin::new(i).unwrap()
}

pub fn schema() -> Schema {
    Schema::default_clinical()
}

pub fn lit(schema: &Schema, parameter: &str, label: &str) -> Literal {
    Literal::bin_test(parameter, schema.resolve_label(parameter, label).unwrap())
}

fn conj(lits: Vec<Literal>) -> Conjunction {
    Conjunction::new(lits).unwrap()
}

fn leaf(w: f64) -> Box<TreeNode> {
    Box::new(TreeNode::Leaf { weight: w })
}

fn node(test: Conjunction, yes: Box<TreeNode>, no: Box<TreeNode>) -> Box<TreeNode> {
    Box::new(TreeNode::Interior { test, yes, no })
}

/// Reference mapincr tree; node tests keep the order of the golden rule file.
pub fn reference_tree() -> RegressionTree {
    let s = schema();
    let l = |p: &str, label: &str| lit(&s, p, label);
    let n8 = node(
        conj(vec![l("resp_rate", "20-30"), l("pressure_volume_sensor", "0-10")]),
        leaf(0.072),
        leaf(0.417),
    );
    let n7 = node(conj(vec![l("resp_rate", ">40"), l("heart_rate", ">130")]), leaf(-0.074), n8);
    let n6 = node(
        conj(vec![l("heart_rate", ">130"), Literal::previous("resp_ratedecr")]),
        leaf(0.821),
        leaf(0.069),
    );
    let n5 = node(conj(vec![Literal::concurrent("resp_rateincr")]), leaf(0.651), n6);
    let n4 = node(conj(vec![l("measured_flow", "50-100"), l("resp_rate", "<=15")]), n5, n7);
    let n3 = node(conj(vec![l("measured_flow", "100-150")]), leaf(0.095), n4);
    let n2 = node(
        conj(vec![l("measured_flow", "20-50"), l("pressure_volume_sensor", ">10")]),
        leaf(0.532),
        n3,
    );
    let n1 = node(conj(vec![l("map", "60-70")]), n2, leaf(0.112));
    RegressionTree { root: *n1 }
}

pub fn reference_model() -> BoostedModel {
    let mut m = BoostedModel::empty("mapincr", 0.0, schema());
    m.trees = vec![reference_tree()];
    m
}

pub const REFERENCE_RULES: &str = include_str!("../data/mapincr_reference.rules");

// ---------------------------------------------------------------------------
// Grounding oracle: evaluates bodies by scanning a flat fact list, enumerating
// every candidate binding for the existential time variable.

pub struct Ground<'a> {
    pub facts: &'a [Fact],
    pub horizon: u32,
}

impl Ground<'_> {
    fn exists(&self, name: &str, subject: &str, time: u32, bin: Option<Bin>) -> bool {
        self.facts
            .iter()
            .any(|f| f.predicate.name() == name && f.subject == subject && f.time == time && f.bin == bin)
    }

    pub fn literal(&self, l: &Literal, subject: &str, b: u32) -> bool {
        match l {
            Literal::BinTest { parameter, bin } => self.exists(parameter, subject, b, Some(*bin)),
            Literal::Concurrent { event } => self.exists(event, subject, b, None),
            Literal::Previous { event } => {
                (0..=self.horizon).any(|c| c + 1 == b && self.exists(event, subject, c, None))
            }
        }
    }

    pub fn conjunction(&self, c: &Conjunction, subject: &str, b: u32) -> bool {
        c.literals().iter().all(|l| self.literal(l, subject, b))
    }

    pub fn group(&self, g: &BodyGroup, subject: &str, b: u32) -> bool {
        match g {
            BodyGroup::Literal(l) => self.literal(l, subject, b),
            BodyGroup::Not(c) => !self.conjunction(c, subject, b),
        }
    }
}

// ---------------------------------------------------------------------------
// Random fixtures.

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small random store over the default schema: a few subjects, short
/// horizons, parameters measured with probability `density`, events sparse.
pub fn random_facts(r: &mut ChaCha8Rng, subjects: usize, horizon: u32, density: f64) -> Vec<Fact> {
    let s = schema();
    let mut out = Vec::new();
    for i in 0..subjects {
        let subject = format!("s{i}");
        for t in 0..=horizon {
            for p in s.parameters() {
                if r.gen_bool(density) {
                    out.push(Fact::parameter(p.parameter().clone(), subject.clone(), t, bin(r.gen_range(0..5))));
                }
            }
            for a in s.actions() {
                if r.gen_bool(density / 3.0) {
                    out.push(Fact::event(a.name.clone(), subject.clone(), t));
                }
            }
        }
    }
    out
}

pub fn store_of(facts: &[Fact]) -> FactStore {
    relboost::ingest::store_from_facts(facts.iter().cloned(), &schema()).unwrap()
}

pub fn random_literal(r: &mut ChaCha8Rng) -> Literal {
    let s = schema();
    match r.gen_range(0..3) {
        0 => {
            let p = &s.parameters()[r.gen_range(0..s.parameters().len())];
            Literal::bin_test(p.name(), bin(r.gen_range(0..5)))
        }
        1 => Literal::concurrent(s.actions()[r.gen_range(0..s.actions().len())].name()),
        _ => Literal::previous(s.actions()[r.gen_range(0..s.actions().len())].name()),
    }
}

pub fn random_conjunction(r: &mut ChaCha8Rng, max_len: usize) -> Conjunction {
    let mut lits: Vec<Literal> = Vec::new();
    let n = r.gen_range(1..=max_len);
    while lits.len() < n {
        let l = random_literal(r);
        if !lits.contains(&l) {
            lits.push(l);
        }
    }
    Conjunction::new(lits).unwrap()
}

pub fn random_body(r: &mut ChaCha8Rng) -> Vec<BodyGroup> {
    (0..r.gen_range(0..5))
        .map(|_| {
            if r.gen_bool(0.4) {
                BodyGroup::Not(random_conjunction(r, 3))
            } else {
                BodyGroup::Literal(random_literal(r))
            }
        })
        .collect()
}

pub fn random_tree(r: &mut ChaCha8Rng, depth: usize) -> TreeNode {
    if depth == 0 || r.gen_bool(0.3) {
        TreeNode::Leaf {
            weight: r.gen_range(-4.0..4.0),
        }
    } else {
        TreeNode::Interior {
            test: random_conjunction(r, 2),
            yes: Box::new(random_tree(r, depth - 1)),
            no: Box::new(random_tree(r, depth - 1)),
        }
    }
}

pub fn random_tree_without(r: &mut ChaCha8Rng, depth: usize, target: &str) -> TreeNode {
    loop {
        let t = random_tree(r, depth);
        let text = format!("{t:?}");
        if !text.contains(&format!("Concurrent {{ event: \"{target}\" }}")) {
            return t;
        }
    }
}

// ---------------------------------------------------------------------------
// Metric oracles.

/// Fraction of (positive, negative) pairs ordered correctly, ties ½.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                num += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / pairs
}

/// Step-interpolated area under the precision/recall curve, sweeping every
/// distinct score as a threshold (`score >= t` predicts positive).
pub fn sweep_auc_pr(scores: &[f64], labels: &[bool]) -> f64 {
    let total_pos = labels.iter().filter(|&&l| l).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (s, &l) in scores.iter().zip(labels) {
            if *s >= t {
                if l {
                    tp += 1.0
                } else {
                    fp += 1.0
                }
            }
        }
        let recall = tp / total_pos;
        let precision = tp / (tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    area
}
