//! Functional gradient boosting of relational regression trees.
//!
//! Each action gets its own model. The potential of a query is
//! `ψ(x) = ψ0 + Σ_m tree_m(x)` and its probability is `sigmoid(ψ(x))`. Every
//! round fits a tree to the pointwise gradients `y − sigmoid(ψ)` of the
//! log-likelihood and adds it to the ensemble.

mod io;
mod tree;

pub use io::FORMAT_VERSION;
pub use tree::{
    best_split, grow_tree, sse, CandidateSpace, GrownTree, LiteralTable, RegressionTree, Split, TreeNode,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facts::FactStore;
use crate::ingest::{subsample_negatives, Example, Schema};
use crate::logic::{candidate_literals, QueryContext};

const HESSIAN_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub max_interior_nodes: usize,
    pub max_depth: usize,
    pub min_examples_per_leaf: usize,
    /// Maximum number of literals in one node test.
    pub max_conjunction_len: usize,
    pub min_gain: f64,
    pub weight_clamp: f64,
    /// Multiplies every leaf value; 1.0 adds each tree's raw fit.
    pub learning_rate: f64,
    pub initial_potential: f64,
    /// Start from the log-odds of the training prior instead of `initial_potential`.
    pub prior_potential: bool,
    /// Keep at most this many negatives per positive.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neg_pos_ratio: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_trees: 20,
            max_interior_nodes: 8,
            max_depth: 8,
            min_examples_per_leaf: 5,
            max_conjunction_len: 2,
            min_gain: 1e-6,
            weight_clamp: 4.0,
            learning_rate: 1.0,
            initial_potential: 0.0,
            prior_potential: false,
            neg_pos_ratio: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.max_depth == 0 || self.min_examples_per_leaf == 0 || self.max_conjunction_len == 0 {
            return bad("max_depth, min_examples_per_leaf and max_conjunction_len must be positive");
        }
        if !(self.min_gain >= 0.0) {
            return bad("min_gain must be >= 0");
        }
        if !(self.weight_clamp > 0.0 && self.weight_clamp.is_finite()) {
            return bad("weight_clamp must be positive and finite");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive and finite");
        }
        if !self.initial_potential.is_finite() {
            return bad("initial_potential must be finite");
        }
        if self.neg_pos_ratio.is_some_and(|r| !(r > 0.0)) {
            return bad("neg_pos_ratio must be positive");
        }
        Ok(())
    }
}

/// Logistic link, clamped into the open interval (0, 1).
pub fn sigmoid(x: f64) -> f64 {
    let p = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `y_i − sigmoid(ψ_i)`.
pub fn gradients(examples: &[Example], potentials: &[f64]) -> Result<Vec<f64>> {
    if examples.len() != potentials.len() {
        return Err(Error::LengthMismatch {
            left: examples.len(),
            right: potentials.len(),
        });
    }
    Ok(examples
        .iter()
        .zip(potentials)
        .map(|(e, &psi)| e.label.target() - sigmoid(psi))
        .collect())
}

/// Newton step for the logistic loss, `ΣΔ / (ΣP(1−P) + ε)`, clamped to `±clamp`.
pub fn leaf_value(gradients: &[f64], probabilities: &[f64], clamp: f64) -> f64 {
    if gradients.is_empty() {
        return 0.0;
    }
    let num: f64 = gradients.iter().sum();
    let den: f64 = probabilities.iter().map(|p| p * (1.0 - p)).sum();
    (num / (den + HESSIAN_EPS)).clamp(-clamp, clamp)
}

/// Mean negative log-likelihood of the labels under `sigmoid(ψ)`.
pub fn mean_nll(examples: &[Example], potentials: &[f64]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let total: f64 = examples
        .iter()
        .zip(potentials)
        .map(|(e, &psi)| if e.is_positive() { softplus(-psi) } else { softplus(psi) })
        .sum();
    total / examples.len() as f64
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeTrace {
    pub gains: Vec<f64>,
    pub leaf_sizes: Vec<usize>,
    pub nll: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub n_examples: usize,
    pub n_positive: usize,
    pub initial_nll: f64,
    pub trees: Vec<TreeTrace>,
}

impl TrainTrace {
    pub fn final_nll(&self) -> f64 {
        self.trees.last().map_or(self.initial_nll, |t| t.nll)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedModel {
    pub target: String,
    pub psi0: f64,
    pub trees: Vec<RegressionTree>,
    pub config: TrainConfig,
    pub schema: Schema,
    pub trace: TrainTrace,
}

impl BoostedModel {
    /// A model with no trees.
    pub fn empty(target: impl Into<String>, psi0: f64, schema: Schema) -> Self {
        BoostedModel {
            target: target.into(),
            psi0,
            trees: Vec::new(),
            config: TrainConfig {
                n_trees: 0,
                ..TrainConfig::default()
            },
            schema,
            trace: TrainTrace::default(),
        }
    }

    pub fn context<'a>(&'a self, store: &'a FactStore, subject: &'a str, time: u32) -> QueryContext<'a> {
        QueryContext::new(store, subject, time).excluding(&self.target)
    }

    /// `ψ0 + Σ tree contributions`, summed in tree order.
    pub fn potential(&self, store: &FactStore, subject: &str, time: u32) -> Result<f64> {
        let ctx = self.context(store, subject, time);
        let mut psi = self.psi0;
        for t in &self.trees {
            psi += t.evaluate(&ctx)?;
        }
        Ok(psi)
    }

    pub fn predict(&self, store: &FactStore, subject: &str, time: u32) -> Result<f64> {
        Ok(sigmoid(self.potential(store, subject, time)?))
    }
}

pub fn predict(model: &BoostedModel, subject: &str, time: u32, store: &FactStore) -> Result<f64> {
    model.predict(store, subject, time)
}

/// Examples for `target` with a candidate space and literal table ready for tree growth.
pub struct TrainingSet {
    pub examples: Vec<Example>,
    pub space: CandidateSpace,
    pub table: LiteralTable,
}

impl TrainingSet {
    pub fn new(store: &FactStore, examples: Vec<Example>, target: &str, max_conjunction_len: usize) -> Result<Self> {
        store.predicate(target)?;
        let literals = candidate_literals(store.predicates(), target);
        let space = CandidateSpace::new(literals, max_conjunction_len);
        let contexts: Vec<(&str, u32)> = examples.iter().map(|e| (e.subject.as_str(), e.time)).collect();
        let table = LiteralTable::build(&space, &contexts, store, target)?;
        Ok(TrainingSet { examples, space, table })
    }
}

/// Fits `cfg.n_trees` trees for `target`. Examples for other actions are ignored.
pub fn train(
    store: &FactStore,
    examples: &[Example],
    target: &str,
    schema: &Schema,
    cfg: &TrainConfig,
) -> Result<BoostedModel> {
    cfg.validate()?;
    let mut examples: Vec<Example> = examples.iter().filter(|e| e.action.name() == target).cloned().collect();
    if let Some(ratio) = cfg.neg_pos_ratio {
        examples = subsample_negatives(&examples, ratio, cfg.seed);
    }
    let n_pos = examples.iter().filter(|e| e.is_positive()).count();
    if n_pos == 0 || n_pos == examples.len() {
        return Err(Error::DegenerateExamples(target.to_string()));
    }
    let psi0 = if cfg.prior_potential {
        let p = n_pos as f64 / examples.len() as f64;
        (p / (1.0 - p)).ln()
    } else {
        cfg.initial_potential
    };

    let set = TrainingSet::new(store, examples, target, cfg.max_conjunction_len)?;
    let mut potentials = vec![psi0; set.examples.len()];
    let mut trace = TrainTrace {
        n_examples: set.examples.len(),
        n_positive: n_pos,
        initial_nll: mean_nll(&set.examples, &potentials),
        trees: Vec::with_capacity(cfg.n_trees),
    };
    let mut trees = Vec::with_capacity(cfg.n_trees);
    for _ in 0..cfg.n_trees {
        let grads = gradients(&set.examples, &potentials)?;
        let probs: Vec<f64> = potentials.iter().map(|&p| sigmoid(p)).collect();
        let grown = grow_tree(&grads, &probs, &set.space, &set.table, cfg);
        for (psi, w) in potentials.iter_mut().zip(&grown.contribution) {
            *psi += w;
        }
        trace.trees.push(TreeTrace {
            gains: grown.gains,
            leaf_sizes: grown.leaf_sizes,
            nll: mean_nll(&set.examples, &potentials),
        });
        trees.push(grown.tree);
    }

    Ok(BoostedModel {
        target: target.to_string(),
        psi0,
        trees,
        config: cfg.clone(),
        schema: schema.clone(),
        trace,
    })
}
