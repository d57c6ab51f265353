//! Subject-level splits and ranking/calibration metrics.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Example;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredExample {
    pub example: Example,
    pub score: f64,
}

/// Train/test subject lists. `n_train = floor(frac * n)`, kept within `1..n`.
pub fn split_subjects<'a>(
    subjects: impl IntoIterator<Item = &'a str>,
    frac: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::InvalidConfig(format!("split fraction {frac} must lie in (0, 1)")));
    }
    let set: BTreeSet<&str> = subjects.into_iter().collect();
    let n = set.len();
    if n < 2 {
        return Err(Error::TooFewSubjects(n));
    }
    let mut order: Vec<String> = set.into_iter().map(str::to_string).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((frac * n as f64).floor() as usize).clamp(1, n - 1);
    let test = order.split_off(n_train);
    order.sort();
    let mut test = test;
    test.sort();
    Ok((order, test))
}

/// Partitions examples so that all of a subject's examples land on one side.
pub fn split_by_subject(examples: &[Example], frac: f64, seed: u64) -> Result<(Vec<Example>, Vec<Example>)> {
    let (train, _) = split_subjects(examples.iter().map(|e| e.subject.as_str()), frac, seed)?;
    let train: BTreeSet<&str> = train.iter().map(String::as_str).collect();
    Ok(examples.iter().cloned().partition(|e| train.contains(e.subject.as_str())))
}

fn class_counts(scored: &[ScoredExample]) -> (usize, usize) {
    let pos = scored.iter().filter(|s| s.example.is_positive()).count();
    (pos, scored.len() - pos)
}

fn check_scores(scored: &[ScoredExample]) -> Result<()> {
    match scored.iter().find(|s| !s.score.is_finite()) {
        Some(s) => Err(Error::NonFiniteValue(s.score)),
        None => Ok(()),
    }
}

/// Mann–Whitney AUC: P(score of a random positive > a random negative), ties count ½.
pub fn auc_roc(scored: &[ScoredExample]) -> Result<f64> {
    check_scores(scored)?;
    let (pos, neg) = class_counts(scored);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].score.total_cmp(&scored[b].score));
    // Average ranks over tie groups, 1-based.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].score == scored[order[i]].score {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        let tied_pos = order[i..=j].iter().filter(|&&k| scored[k].example.is_positive()).count();
        rank_sum_pos += avg * tied_pos as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision over the ranked list.
///
/// Ranking is by score descending; tied scores put positives first, then
/// input order. Each positive contributes its precision at that rank.
pub fn auc_pr(scored: &[ScoredExample]) -> Result<f64> {
    check_scores(scored)?;
    let (pos, _) = class_counts(scored);
    if pos == 0 {
        return Err(Error::NoPositives);
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        scored[b]
            .score
            .total_cmp(&scored[a].score)
            .then(scored[b].example.is_positive().cmp(&scored[a].example.is_positive()))
            .then(a.cmp(&b))
    });
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &k) in order.iter().enumerate() {
        if scored[k].example.is_positive() {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / pos as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub mean_score: Option<f64>,
    pub empirical_rate: Option<f64>,
    pub count: usize,
}

/// Equal-width bins over [0, 1]; a score of exactly 1 falls in the last bin.
pub fn calibration(scored: &[ScoredExample], n_bins: usize) -> Result<Vec<CalibrationBin>> {
    if n_bins == 0 {
        return Err(Error::InvalidConfig("calibration needs at least one bin".into()));
    }
    check_scores(scored)?;
    let mut sums = vec![(0.0, 0usize, 0usize); n_bins];
    for s in scored {
        let b = ((s.score.clamp(0.0, 1.0) * n_bins as f64).floor() as usize).min(n_bins - 1);
        sums[b].0 += s.score;
        sums[b].1 += usize::from(s.example.is_positive());
        sums[b].2 += 1;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(b, (score, pos, count))| CalibrationBin {
            bin: b,
            lower: b as f64 / n_bins as f64,
            upper: (b + 1) as f64 / n_bins as f64,
            mean_score: (count > 0).then(|| score / count as f64),
            empirical_rate: (count > 0).then(|| pos as f64 / count as f64),
            count,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionReport {
    pub action: String,
    pub n_examples: usize,
    pub n_positive: usize,
    pub auc_roc: f64,
    pub auc_pr: f64,
    pub calibration: Vec<CalibrationBin>,
}

impl ActionReport {
    pub fn new(action: &str, scored: &[ScoredExample]) -> Result<Self> {
        let (pos, _) = class_counts(scored);
        Ok(ActionReport {
            action: action.to_string(),
            n_examples: scored.len(),
            n_positive: pos,
            auc_roc: auc_roc(scored)?,
            auc_pr: auc_pr(scored)?,
            calibration: calibration(scored, 10)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: Option<SplitInfo>,
    pub actions: Vec<ActionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub test_subjects: Vec<String>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Model(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }
}

/// `action,subject,time,label,score` rows.
pub fn scores_csv(scored: &[ScoredExample]) -> String {
    let mut out = String::from("action,subject,time,label,score\n");
    for s in scored {
        let e = &s.example;
        let label = u8::from(e.is_positive());
        let _ = writeln!(out, "{},{},{},{},{}", e.action, e.subject, e.time, label, s.score);
    }
    out
}
