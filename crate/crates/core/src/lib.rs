//! Boosted relational regression trees for learning weighted first-order
//! action policies from discretized trajectories.
//!
//! The pipeline is: raw measurements are discretized into five-bin
//! parameter facts ([`ingest`]), consecutive measurements are labelled as
//! action examples, a boosted ensemble of relational regression trees is fit
//! per action ([`learner`]), and each tree is rendered as weighted clauses
//! ([`rules`]) that reproduce the ensemble's predictions exactly.

pub mod cli;
pub mod config;
pub mod error;
pub mod facts;
pub mod ingest;
pub mod learner;
pub mod logic;
pub mod metrics;
pub mod rules;
pub mod synth;

pub use error::{Error, Result};
pub use facts::{Bin, Fact, FactStore, PredicateId, PredicateKind};
pub use ingest::{ActionSpec, BinSpec, Direction, Example, Label, Schema};
pub use logic::{BodyGroup, Conjunction, Literal, QueryContext, WeightedRule};
pub use learner::{predict, sigmoid, train, BoostedModel, RegressionTree, TrainConfig, TreeNode};
pub use rules::{extract_rules, parse_rule_file, ruleset_contribution, RuleSet};
pub use synth::{generate, Policy, SynthConfig, SynthParams};
pub use metrics::{auc_pr, auc_roc, calibration, split_by_subject, MetricsReport, ScoredExample};
