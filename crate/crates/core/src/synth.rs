//! Synthetic hourly trajectories driven by a known stochastic policy.
//!
//! Every subject starts in uniformly random bins. Each hour the generator
//! records the parameters that were measured, asks the policy for the
//! probability of each action given what has been observed so far, and then
//! moves the state: an action shifts its parameter by exactly two bins, any
//! other parameter drifts by one bin with probability `drift`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facts::{Bin, Fact, FactStore, N_BINS};
use crate::ingest::{Example, Label, Schema};
use crate::logic::{eval, BodyGroup, Conjunction, Literal, QueryContext, WeightedRule};
use crate::rules::RuleSet;

/// One action fired with `p_true` when `condition` holds, `p_false` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricRule {
    pub action: String,
    pub condition: Conjunction,
    pub p_true: f64,
    pub p_false: f64,
}

impl ParametricRule {
    /// The same policy as a one-tree rule set with `ψ0 = 0`.
    pub fn to_ruleset(&self) -> RuleSet {
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let rule = |weight, body| WeightedRule {
            weight,
            head: self.action.clone(),
            body,
        };
        RuleSet {
            target: self.action.clone(),
            psi0: 0.0,
            trees: vec![vec![
                rule(
                    logit(self.p_true),
                    self.condition.literals().iter().cloned().map(BodyGroup::Literal).collect(),
                ),
                rule(logit(self.p_false), vec![BodyGroup::Not(self.condition.clone())]),
            ]],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Rules(Vec<RuleSet>),
    Parametric(Vec<ParametricRule>),
}

impl Policy {
    /// Built-in policy over the default clinical schema: each action depends on
    /// at most three literals.
    pub fn standard() -> Self {
        let b = |i| Bin::new(i).expect("bin");
        let bin = |p: &str, i| Literal::bin_test(p, b(i));
        let rule = |action: &str, lits: Vec<Literal>| ParametricRule {
            action: action.to_string(),
            condition: Conjunction::new(lits).expect("valid condition"),
            p_true: 0.85,
            p_false: 0.001,
        };
        Policy::Parametric(vec![
            rule("mapincr", vec![bin("map", 1)]),
            rule("resp_rateincr", vec![bin("resp_rate", 0), bin("ph", 2)]),
            rule("resp_ratedecr", vec![bin("resp_rate", 4)]),
            rule("heart_ratedecr", vec![bin("heart_rate", 4), bin("map", 3)]),
            rule("phincr", vec![bin("ph", 0)]),
            rule("phdecr", vec![bin("ph", 4), bin("resp_rate", 2)]),
            rule("po2incr", vec![bin("po2", 2), Literal::previous("po2decr")]),
            rule("po2decr", vec![bin("po2", 4)]),
            rule(
                "pressure_volume_sensorincr",
                vec![bin("pressure_volume_sensor", 1), bin("measured_flow", 2)],
            ),
            rule(
                "pressure_volume_sensordecr",
                vec![bin("pressure_volume_sensor", 3), bin("map", 3), bin("heart_rate", 2)],
            ),
            rule("measured_flowincr", vec![bin("measured_flow", 0)]),
            rule("measured_flowdecr", vec![bin("measured_flow", 4), bin("heart_rate", 2)]),
        ])
    }

    pub fn to_rulesets(&self) -> Vec<RuleSet> {
        match self {
            Policy::Rules(sets) => sets.clone(),
            Policy::Parametric(rules) => rules.iter().map(ParametricRule::to_ruleset).collect(),
        }
    }

    fn actions(&self) -> Vec<&str> {
        match self {
            Policy::Rules(sets) => sets.iter().map(|s| s.target.as_str()).collect(),
            Policy::Parametric(rules) => rules.iter().map(|r| r.action.as_str()).collect(),
        }
    }

    /// Probability of `action` at the context; 0 for actions the policy never mentions.
    fn probability(&self, action: &str, store: &FactStore, subject: &str, time: u32) -> Result<f64> {
        match self {
            Policy::Rules(sets) => match sets.iter().find(|s| s.target == action) {
                Some(set) => set.probability(store, subject, time),
                None => Ok(0.0),
            },
            Policy::Parametric(rules) => match rules.iter().find(|r| r.action == action) {
                Some(r) => {
                    let ctx = QueryContext::new(store, subject, time).excluding(action);
                    Ok(if eval(&r.condition, &ctx)? { r.p_true } else { r.p_false })
                }
                None => Ok(0.0),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub n_subjects: usize,
    pub hours_min: u32,
    pub hours_max: u32,
    pub missingness: f64,
    /// Per-parameter overrides of `missingness`.
    pub missingness_by_parameter: BTreeMap<String, f64>,
    pub drift: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_subjects: 50,
            hours_min: 200,
            hours_max: 200,
            missingness: 0.1,
            missingness_by_parameter: BTreeMap::new(),
            drift: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub params: SynthParams,
    pub schema: Schema,
    pub policy: Policy,
}

impl SynthConfig {
    pub fn new(params: SynthParams, schema: Schema, policy: Policy) -> Self {
        SynthConfig { params, schema, policy }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if p.n_subjects == 0 {
            return bad("n_subjects must be positive".into());
        }
        if p.hours_min < 2 || p.hours_max < p.hours_min {
            return bad(format!("hours range {}..{} must satisfy 2 <= min <= max", p.hours_min, p.hours_max));
        }
        let unit = |x: f64| (0.0..1.0).contains(&x);
        if !unit(p.missingness) || !unit(p.drift) {
            return bad("missingness and drift must lie in [0, 1)".into());
        }
        for (name, &rate) in &p.missingness_by_parameter {
            if self.schema.parameter(name).is_none() {
                return Err(Error::UnknownParameter(name.clone()));
            }
            if !unit(rate) {
                return bad(format!("missingness for `{name}` must lie in [0, 1)"));
            }
        }
        for action in self.policy.actions() {
            if self.schema.action(action).is_none() {
                return Err(Error::UnknownPredicate(action.to_string()));
            }
        }
        if let Policy::Parametric(rules) = &self.policy {
            for r in rules {
                if !unit(r.p_true) || !unit(r.p_false) || r.p_true <= 0.0 || r.p_false <= 0.0 {
                    return bad(format!("probabilities for `{}` must lie in (0, 1)", r.action));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    /// Observed parameter facts only.
    pub store: FactStore,
    /// Positive examples for every action the policy actually took.
    pub truth: Vec<Example>,
}

pub fn subject_name(index: usize) -> String {
    format!("s{index:03}")
}

struct Trajectory {
    facts: Vec<Fact>,
    truth: Vec<Example>,
}

fn simulate(cfg: &SynthConfig, index: usize) -> Result<Trajectory> {
    let schema = &cfg.schema;
    let p = &cfg.params;
    let subject = subject_name(index);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    rng.set_stream(index as u64);

    let hours = rng.gen_range(p.hours_min..=p.hours_max);
    let params = schema.parameters();
    let missing: Vec<f64> = params
        .iter()
        .map(|s| p.missingness_by_parameter.get(s.name()).copied().unwrap_or(p.missingness))
        .collect();
    let mut state: Vec<u8> = params.iter().map(|_| rng.gen_range(0..N_BINS as u8)).collect();

    let mut local = FactStore::with_vocabulary(&schema.vocabulary())?;
    local.add_subject(subject.clone())?;
    let mut facts = Vec::new();
    let mut truth = Vec::new();

    for t in 0..hours {
        for (i, spec) in params.iter().enumerate() {
            if rng.gen::<f64>() >= missing[i] {
                let fact = Fact::parameter(spec.parameter().clone(), subject.clone(), t, Bin::new(state[i]).expect("bin"));
                local.add_fact(fact.clone())?;
                facts.push(fact);
            }
        }
        if t + 1 == hours {
            break;
        }

        let mut shift = vec![0i8; params.len()];
        for action in schema.actions() {
            let prob = cfg.policy.probability(action.name(), &local, &subject, t)?;
            let fired = rng.gen::<f64>() < prob;
            if !fired {
                continue;
            }
            let i = params
                .iter()
                .position(|s| s.parameter() == &action.parameter)
                .expect("validated schema");
            let delta = 2 * action.direction.sign();
            let target = state[i] as i8 + delta;
            if shift[i] != 0 || !(0..N_BINS as i8).contains(&target) {
                continue;
            }
            shift[i] = delta;
            local.add_fact(Fact::event(action.name.clone(), subject.clone(), t))?;
            truth.push(Example::new(action.name.clone(), subject.clone(), t, Label::Positive));
        }

        for (i, s) in state.iter_mut().enumerate() {
            let (u, up) = (rng.gen::<f64>(), rng.gen::<bool>());
            let next = if shift[i] != 0 {
                *s as i8 + shift[i]
            } else if u < p.drift {
                *s as i8 + if up { 1 } else { -1 }
            } else {
                *s as i8
            };
            if (0..N_BINS as i8).contains(&next) {
                *s = next as u8;
            }
        }
    }
    Ok(Trajectory { facts, truth })
}

/// Deterministic given the seed; subjects are simulated in parallel.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let runs: Vec<Trajectory> = (0..cfg.params.n_subjects)
        .into_par_iter()
        .map(|i| simulate(cfg, i))
        .collect::<Result<_>>()?;
    let mut store = FactStore::with_vocabulary(cfg.schema.parameters().iter().map(|s| s.parameter()))?;
    let mut truth = Vec::new();
    for (i, run) in runs.into_iter().enumerate() {
        store.add_subject(subject_name(i))?;
        for fact in run.facts {
            store.add_fact(fact)?;
        }
        truth.extend(run.truth);
    }
    Ok(SynthOutput {
        store: store.frozen(),
        truth,
    })
}
