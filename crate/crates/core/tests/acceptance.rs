//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use relboost::ingest::{examples_for, generate_all, generate_examples};
use relboost::logic::{render_examples, render_facts, RuleStyle};
use relboost::metrics::{auc_pr, auc_roc, split_subjects, ActionReport, MetricsReport, SplitInfo};
use relboost::rules::{extract_rules, ruleset_contribution};
use relboost::{
    generate, predict, sigmoid, train, BoostedModel, Example, Fact, FactStore, Label, Policy, QueryContext,
    RegressionTree, RuleSet, ScoredExample, SynthConfig, SynthParams, TrainConfig,
};

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn discretization() -> Outcome {
    let s = schema();
    let map = s.parameter("map").unwrap();
    for (value, expect) in [(40.0, 0), (50.0, 0), (55.0, 1), (60.0, 1), (65.0, 2), (70.0, 2), (81.0, 4)] {
        let got = map.discretize(value).map_err(|e| e.to_string())?.index();
        check!(got == expect, "map {value} -> bin {got}, expected {expect}");
    }
    check!(map.discretize(f64::NAN).is_err(), "NaN accepted");
    Ok("map 50->0 55->1 60->1 65->2 81->4".into())
}

fn example_generation() -> Outcome {
    let s = schema();
    let map = s.parameter("map").unwrap().parameter().clone();
    let facts = vec![
        Fact::parameter(map.clone(), "subj1", 100, bin(2)),
        Fact::parameter(map.clone(), "subj1", 101, bin(4)),
        Fact::parameter(map.clone(), "subj1", 102, bin(4)),
        Fact::parameter(map.clone(), "subj2", 5, bin(1)),
        Fact::parameter(map, "subj2", 6, bin(2)),
    ];
    let store = store_of(&facts);
    let spec = s.action("mapincr").unwrap();
    let (examples, derived) = generate_examples(&store, spec).map_err(|e| e.to_string())?;
    let text = render_examples(&examples);
    let expect = "+mapincr(subj1,100).\n-mapincr(subj1,101).\n-mapincr(subj2,5).\n";
    check!(text == expect, "got\n{text}");
    check!(derived.has_event("mapincr", "subj1", 100).unwrap(), "positive not asserted as an event");
    let again = examples_for(&store, spec).map_err(|e| e.to_string())?;
    check!(again == examples, "examples_for disagrees with generate_examples");
    Ok("+mapincr(subj1,100); one-bin rise negative".into())
}

fn reference_rules() -> Outcome {
    let text = RuleSet::from_model(&reference_model())
        .render(&schema(), RuleStyle::Ascii, Some(0))
        .map_err(|e| e.to_string())?;
    let tokens = |t: &str| t.split_whitespace().map(str::to_string).collect::<Vec<_>>();
    check!(tokens(&text) == tokens(REFERENCE_RULES), "rendered rules differ from golden file:\n{text}");

    let s = schema();
    let p = |name: &str, label: &str, t| {
        let spec = s.parameter(name).unwrap();
        Fact::parameter(spec.parameter().clone(), "subj1", t, spec.bin_for_label(label).unwrap())
    };
    let mut facts = vec![
        p("map", "60-70", 10),
        p("measured_flow", "50-100", 10),
        p("pressure_volume_sensor", "0-10", 10),
        p("resp_rate", "<=15", 10),
        p("heart_rate", ">130", 10),
        p("map", "<=50", 20),
    ];
    facts.push(Fact::event(s.action("resp_ratedecr").unwrap().name.clone(), "subj1", 9));
    let store = store_of(&facts);
    let rules = extract_rules(&reference_tree(), "mapincr");
    let at = |t| {
        let ctx = QueryContext::new(&store, "subj1", t).excluding("mapincr");
        ruleset_contribution(&rules, &ctx).map_err(|e| e.to_string())
    };
    let (r5, r1) = (at(10)?, at(20)?);
    check!(r5 == 0.821 && r1 == 0.112, "contributions {r5} and {r1}");
    Ok("9 rules token-identical; contributions 0.821 and 0.112".into())
}

fn small_synth(seed: u64, subjects: usize, hours: u32) -> (FactStore, Vec<(String, Vec<Example>)>) {
    let params = SynthParams {
        n_subjects: subjects,
        hours_min: hours,
        hours_max: hours,
        seed,
        ..SynthParams::default()
    };
    let out = generate(&SynthConfig::new(params, schema(), Policy::standard())).unwrap();
    let (by_action, derived) = generate_all(&out.store, schema().actions()).unwrap();
    (derived, by_action.into_iter().collect())
}

fn trainable(by_action: &[(String, Vec<Example>)]) -> impl Iterator<Item = &(String, Vec<Example>)> {
    by_action.iter().filter(|(_, ex)| {
        let pos = ex.iter().filter(|e| e.is_positive()).count();
        pos >= 3 && pos < ex.len()
    })
}

fn rules_match_model() -> Outcome {
    let mut r = rng(401);
    let mut contexts = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let (store, by_action) = small_synth(seed, 8, 80);
        let cfg = TrainConfig {
            n_trees: 6,
            ..TrainConfig::default()
        };
        for (action, examples) in trainable(&by_action).take(4) {
            let model = train(&store, examples, action, &schema(), &cfg).map_err(|e| e.to_string())?;
            let set = RuleSet::from_model(&model);
            for _ in 0..4 {
                let facts = random_facts(&mut r, 3, 10, 0.4);
                let random_store = store_of(&facts);
                for _ in 0..25 {
                    let (st, subject, t) = if r.gen_bool(0.5) {
                        (&random_store, format!("s{}", r.gen_range(0..4)), r.gen_range(0..12))
                    } else {
                        (&store, relboost::synth::subject_name(r.gen_range(0..8)), r.gen_range(0..81))
                    };
                    let ctx = set.context(st, &subject, t);
                    for tree in &set.trees {
                        let fired = tree.iter().filter(|rule| rule.fires(&ctx).unwrap()).count();
                        check!(fired == 1, "{fired} rules fired for {action} at {subject},{t}");
                    }
                    let via_rules = sigmoid(set.potential(st, &subject, t).map_err(|e| e.to_string())?);
                    let direct = predict(&model, &subject, t, st).map_err(|e| e.to_string())?;
                    worst = worst.max((via_rules - direct).abs());
                    contexts += 1;
                }
            }
        }
    }
    check!(contexts >= 1000, "only {contexts} contexts");
    check!(worst <= 1e-12, "max deviation {worst:e} over {contexts} contexts");
    Ok(format!("{contexts} contexts, max deviation {worst:e}"))
}

fn grounding_agrees() -> Outcome {
    let mut r = rng(501);
    let mut queries = 0;
    let mut mismatches = 0;
    for _ in 0..500 {
        let facts = random_facts(&mut r, 2, 6, 0.5);
        let store = store_of(&facts);
        let ground = Ground { facts: &facts, horizon: 6 };
        let target = "po2decr";
        let mut model = BoostedModel::empty(target, r.gen_range(-1.0..1.0), schema());
        model.trees = (0..r.gen_range(1..4))
            .map(|_| RegressionTree { root: random_tree_without(&mut r, 4, target) })
            .collect();
        for subject in ["s0", "s1", "s2"] {
            for t in 0..8 {
                let mut psi = model.psi0;
                for tree in &model.trees {
                    for rule in extract_rules(tree, target) {
                        if rule.body.iter().all(|g| ground.group(g, subject, t)) {
                            psi += rule.weight;
                        }
                    }
                }
                let got = model.predict(&store, subject, t).map_err(|e| e.to_string())?;
                if (got - sigmoid(psi)).abs() > 1e-12 {
                    mismatches += 1;
                }
                queries += 1;
            }
        }
    }
    check!(mismatches == 0, "{mismatches} of {queries} queries disagree");
    Ok(format!("500 stores, {queries} queries, 0 mismatches"))
}

fn held_out_auc() -> Outcome {
    let start = Instant::now();
    let s = schema();
    check!(s.parameters().len() == 7, "{} parameters", s.parameters().len());
    let params = SynthParams {
        n_subjects: 50,
        hours_min: 200,
        hours_max: 200,
        missingness: 0.1,
        seed: 0,
        ..SynthParams::default()
    };
    let out = generate(&SynthConfig::new(params, s.clone(), Policy::standard())).map_err(|e| e.to_string())?;
    let (by_action, derived) = generate_all(&out.store, s.actions()).map_err(|e| e.to_string())?;
    let (_, test_subjects) = split_subjects(out.store.subjects(), 0.7, 0).map_err(|e| e.to_string())?;
    let mut lowest = (String::new(), f64::INFINITY);
    for (action, examples) in &by_action {
        let (test, train_set): (Vec<Example>, Vec<Example>) =
            examples.iter().cloned().partition(|e| test_subjects.contains(&e.subject));
        let model = train(&derived, &train_set, action, &s, &TrainConfig::default()).map_err(|e| e.to_string())?;
        check!(model.trees.len() == 20, "{action}: {} trees", model.trees.len());
        let scored: Vec<ScoredExample> = test
            .iter()
            .map(|e| ScoredExample { score: model.predict(&derived, &e.subject, e.time).unwrap(), example: e.clone() })
            .collect();
        let auc = auc_roc(&scored).map_err(|e| format!("{action}: {e}"))?;
        check!(auc >= 0.85, "{action}: held-out AUC-ROC {auc:.3}");
        if auc < lowest.1 {
            lowest = (action.clone(), auc);
        }
    }
    let elapsed = start.elapsed();
    check!(elapsed <= Duration::from_secs(120), "took {elapsed:?}");
    Ok(format!(
        "{} actions, lowest AUC-ROC {:.3} ({}), {:.1}s",
        by_action.len(),
        lowest.1,
        lowest.0,
        elapsed.as_secs_f64()
    ))
}

fn nll_never_increases() -> Outcome {
    let mut fits = 0;
    for seed in 0..4 {
        let (store, by_action) = small_synth(100 + seed, 10, 100);
        for (action, examples) in trainable(&by_action) {
            let model = train(&store, examples, action, &schema(), &TrainConfig::default()).map_err(|e| e.to_string())?;
            let trace = &model.trace;
            check!(
                trace.final_nll() < trace.initial_nll + 1e-6,
                "{action} seed {seed}: {} -> {}",
                trace.initial_nll,
                trace.final_nll()
            );

            let stumps = TrainConfig {
                max_interior_nodes: 0,
                ..TrainConfig::default()
            };
            let model = train(&store, examples, action, &schema(), &stumps).map_err(|e| e.to_string())?;
            let mut prev = model.trace.initial_nll;
            for (m, step) in model.trace.trees.iter().enumerate() {
                check!(step.nll <= prev + 1e-9, "{action} seed {seed} single-leaf tree {m}: {prev} -> {}", step.nll);
                prev = step.nll;
            }
            fits += 1;
        }
    }
    Ok(format!("{fits} fixtures, 20 trees and 20 single-leaf steps each"))
}

fn pipeline_bytes(seed: u64) -> Vec<String> {
    let s = schema();
    let (store, by_action) = small_synth(seed, 10, 80);
    let mut out = vec![render_facts(&store.facts(), &s).unwrap()];
    let (_, test_subjects) = split_subjects(store.subjects(), 0.7, seed).unwrap();
    let mut reports = Vec::new();
    for (action, examples) in trainable(&by_action).take(3) {
        out.push(render_examples(examples));
        let (test, train_set): (Vec<Example>, Vec<Example>) =
            examples.iter().cloned().partition(|e| test_subjects.contains(&e.subject));
        let cfg = TrainConfig {
            n_trees: 5,
            neg_pos_ratio: Some(2.0),
            seed,
            ..TrainConfig::default()
        };
        let model = train(&store, &train_set, action, &s, &cfg).unwrap();
        out.push(model.to_json().unwrap());
        out.push(RuleSet::from_model(&model).render(&s, RuleStyle::Ascii, None).unwrap());
        let scored: Vec<ScoredExample> = test
            .iter()
            .map(|e| ScoredExample { score: model.predict(&store, &e.subject, e.time).unwrap(), example: e.clone() })
            .collect();
        if let Ok(r) = ActionReport::new(action, &scored) {
            reports.push(r);
        }
    }
    let report = MetricsReport {
        split: Some(SplitInfo { test_subjects }),
        actions: reports,
    };
    out.push(report.to_json().unwrap());
    out
}

fn byte_identical() -> Outcome {
    let mut artifacts = 0;
    for seed in [3, 17] {
        let (a, b) = (pipeline_bytes(seed), pipeline_bytes(seed));
        check!(a.len() == b.len(), "seed {seed}: artifact counts differ");
        for (i, (x, y)) in a.iter().zip(&b).enumerate() {
            check!(x == y, "seed {seed}: artifact {i} differs");
        }
        artifacts += a.len();
    }
    Ok(format!("{artifacts} artifacts identical across repeated runs"))
}

fn metrics_match() -> Outcome {
    let mut r = rng(901);
    let a = relboost::facts::PredicateId::event("mapincr").unwrap();
    let make = |scores: &[f64], labels: &[bool]| -> Vec<ScoredExample> {
        scores
            .iter()
            .zip(labels)
            .map(|(&score, &l)| ScoredExample {
                example: Example::new(a.clone(), "s", 0, if l { Label::Positive } else { Label::Negative }),
                score,
            })
            .collect()
    };
    let (mut roc_dev, mut pr_dev): (f64, f64) = (0.0, 0.0);
    for case in 0..200 {
        let n = r.gen_range(2..120);
        let mut labels: Vec<bool> = (0..n).map(|_| r.gen_bool(0.35)).collect();
        labels[0] = true;
        labels[1] = false;
        let roc_scores: Vec<f64> = if case % 2 == 0 {
            (0..n).map(|_| r.gen_range(0..6) as f64 / 5.0).collect()
        } else {
            (0..n).map(|_| r.gen::<f64>()).collect()
        };
        let roc = auc_roc(&make(&roc_scores, &labels)).map_err(|e| e.to_string())?;
        roc_dev = roc_dev.max((roc - pairwise_auc(&roc_scores, &labels)).abs());
        let pr_scores: Vec<f64> = (0..n).map(|_| r.gen::<f64>()).collect();
        let pr = auc_pr(&make(&pr_scores, &labels)).map_err(|e| e.to_string())?;
        pr_dev = pr_dev.max((pr - sweep_auc_pr(&pr_scores, &labels)).abs());
    }
    check!(roc_dev <= 1e-12 && pr_dev <= 1e-12, "deviations roc {roc_dev:e} pr {pr_dev:e}");
    Ok(format!("200 sets, max deviation roc {roc_dev:e} pr {pr_dev:e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("discretization", discretization),
        ("example generation", example_generation),
        ("rule extraction golden file", reference_rules),
        ("rules reproduce predictions", rules_match_model),
        ("inference agrees with grounding", grounding_agrees),
        ("held-out AUC on synthetic policy", held_out_auc),
        ("training NLL non-increasing", nll_never_increases),
        ("byte-identical reruns", byte_identical),
        ("metrics agree with brute force", metrics_match),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
