//! Weighted first-order rules read off regression trees.
//!
//! Each root-to-leaf path becomes one clause. Walking into a `yes` child adds
//! the node's literals to the body; walking into a `no` child adds the negation
//! of the node's whole conjunction, `not[a, b]`. The rules of one tree are
//! mutually exclusive and exhaustive, so summing the weight of the firing rule
//! of every tree reproduces the ensemble's potential exactly.
//!
//! Rule file layout:
//!
//! ```text
//! # target mapincr psi0 0
//! # tree 0
//! 0.112 :: mapincr(A,B) <= not[map(A,B,60-70)].
//! 0.532 :: mapincr(A,B) <= map(A,B,60-70), measured_flow(A,B,20-50), pressure_volume_sensor(A,B,>10).
//! ...
//! ```

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::facts::FactStore;
use crate::ingest::Schema;
use crate::learner::{sigmoid, BoostedModel, RegressionTree, TreeNode};
use crate::logic::{parse_rules, render_rule, BodyGroup, QueryContext, RuleStyle, WeightedRule};

/// One rule per leaf.
///
/// Sibling order follows the usual tabular layout: a leaf child is listed
/// before an interior sibling, otherwise the `yes` branch comes first.
pub fn extract_rules(tree: &RegressionTree, head: &str) -> Vec<WeightedRule> {
    fn walk(node: &TreeNode, head: &str, path: &mut Vec<BodyGroup>, out: &mut Vec<WeightedRule>) {
        match node {
            TreeNode::Leaf { weight } => out.push(WeightedRule {
                weight: *weight,
                head: head.to_string(),
                body: path.clone(),
            }),
            TreeNode::Interior { test, yes, no } => {
                let depth = path.len();
                let visit_yes = |path: &mut Vec<BodyGroup>, out: &mut Vec<WeightedRule>| {
                    path.extend(test.literals().iter().cloned().map(BodyGroup::Literal));
                    walk(yes, head, path, out);
                    path.truncate(depth);
                };
                let visit_no = |path: &mut Vec<BodyGroup>, out: &mut Vec<WeightedRule>| {
                    path.push(BodyGroup::Not(test.clone()));
                    walk(no, head, path, out);
                    path.truncate(depth);
                };
                if no.is_leaf() && !yes.is_leaf() {
                    visit_no(path, out);
                    visit_yes(path, out);
                } else {
                    visit_yes(path, out);
                    visit_no(path, out);
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(&tree.root, head, &mut Vec::new(), &mut out);
    out
}

/// Weight of the single rule that fires for `ctx`.
pub fn ruleset_contribution(rules: &[WeightedRule], ctx: &QueryContext<'_>) -> Result<f64> {
    let mut fired = None;
    let mut count = 0;
    for r in rules {
        if r.fires(ctx)? {
            count += 1;
            fired.get_or_insert(r.weight);
        }
    }
    match (count, fired) {
        (1, Some(w)) => Ok(w),
        _ => Err(Error::InconsistentRuleSet {
            fired: count,
            subject: ctx.subject.to_string(),
            time: ctx.time,
        }),
    }
}

/// The clauses of a whole boosted model, one block per tree.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    pub target: String,
    pub psi0: f64,
    pub trees: Vec<Vec<WeightedRule>>,
}

impl RuleSet {
    pub fn from_model(model: &BoostedModel) -> Self {
        RuleSet {
            target: model.target.clone(),
            psi0: model.psi0,
            trees: model.trees.iter().map(|t| extract_rules(t, &model.target)).collect(),
        }
    }

    pub fn context<'a>(&'a self, store: &'a FactStore, subject: &'a str, time: u32) -> QueryContext<'a> {
        QueryContext::new(store, subject, time).excluding(&self.target)
    }

    /// `ψ0 + Σ_trees contribution`, summed in tree order.
    pub fn potential(&self, store: &FactStore, subject: &str, time: u32) -> Result<f64> {
        let ctx = self.context(store, subject, time);
        let mut psi = self.psi0;
        for rules in &self.trees {
            psi += ruleset_contribution(rules, &ctx)?;
        }
        Ok(psi)
    }

    pub fn probability(&self, store: &FactStore, subject: &str, time: u32) -> Result<f64> {
        Ok(sigmoid(self.potential(store, subject, time)?))
    }

    pub fn rule_count(&self) -> usize {
        self.trees.iter().map(Vec::len).sum()
    }

    /// Rule-file text. `only_tree` restricts output to one block.
    pub fn render(&self, schema: &Schema, style: RuleStyle, only_tree: Option<usize>) -> Result<String> {
        let mut out = String::new();
        let _ = writeln!(out, "# target {} psi0 {}", self.target, self.psi0);
        for (m, rules) in self.trees.iter().enumerate() {
            if only_tree.is_some_and(|t| t != m) {
                continue;
            }
            let _ = writeln!(out, "# tree {m}");
            out.push_str(&render_rules(rules, schema, style)?);
        }
        Ok(out)
    }
}

pub fn render_rules(rules: &[WeightedRule], schema: &Schema, style: RuleStyle) -> Result<String> {
    let mut out = String::new();
    for r in rules {
        out.push_str(&render_rule(r, schema, style)?);
        out.push('\n');
    }
    Ok(out)
}

enum Header {
    Target { name: String, psi0: f64 },
    Tree,
}

fn header(line: &str, line_no: usize) -> Result<Option<Header>> {
    let Some(rest) = line.trim().strip_prefix('#') else {
        return Ok(None);
    };
    let tokens: Vec<&str> = rest.split_whitespace().collect();
    match tokens.as_slice() {
        ["tree", n] if n.parse::<usize>().is_ok() => Ok(Some(Header::Tree)),
        ["target", name, "psi0", v] => {
            let psi0: f64 = v
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| Error::parse(line_no, 1, format!("bad psi0 `{v}`")))?;
            Ok(Some(Header::Target {
                name: name.to_string(),
                psi0,
            }))
        }
        ["target", name] => Ok(Some(Header::Target {
            name: name.to_string(),
            psi0: 0.0,
        })),
        _ => Ok(None),
    }
}

/// Reads a rule file into one rule set per target.
///
/// Rules before any `# tree` header form a single tree. A `# target` header is
/// optional; without it the target is taken from the rule heads and `ψ0 = 0`.
pub fn parse_rule_file(text: &str, schema: &Schema) -> Result<Vec<RuleSet>> {
    let mut sets: Vec<RuleSet> = Vec::new();
    let mut block = String::new();
    let mut block_line = 1;
    let mut started_tree = false;

    let flush = |sets: &mut Vec<RuleSet>, block: &mut String, block_line: usize, started: bool| -> Result<()> {
        let rules = parse_rules(block, schema).map_err(|e| match e {
            Error::Parse { line, column, message } => Error::Parse {
                line: line + block_line - 1,
                column,
                message,
            },
            other => other,
        })?;
        block.clear();
        if rules.is_empty() && !started {
            return Ok(());
        }
        let head = rules.first().map(|r| r.head.clone());
        if sets.is_empty() {
            let target = head.clone().unwrap_or_default();
            sets.push(RuleSet {
                target,
                psi0: 0.0,
                trees: Vec::new(),
            });
        }
        let set = sets.last_mut().expect("non-empty");
        if set.target.is_empty() {
            set.target = head.clone().unwrap_or_default();
        }
        if let Some(bad) = rules.iter().find(|r| r.head != set.target) {
            return Err(Error::parse(
                block_line,
                1,
                format!("rule head `{}` in block for target `{}`", bad.head, set.target),
            ));
        }
        set.trees.push(rules);
        Ok(())
    };

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        match header(line, line_no)? {
            Some(h) => {
                if started_tree || !block.trim().is_empty() {
                    flush(&mut sets, &mut block, block_line, started_tree)?;
                }
                match h {
                    Header::Target { name, psi0 } => {
                        sets.push(RuleSet {
                            target: name,
                            psi0,
                            trees: Vec::new(),
                        });
                        started_tree = false;
                    }
                    Header::Tree => started_tree = true,
                }
                block_line = line_no + 1;
            }
            None => {
                block.push_str(line);
                block.push('\n');
            }
        }
    }
    if started_tree || !block.trim().is_empty() {
        flush(&mut sets, &mut block, block_line, started_tree)?;
    }
    for set in &sets {
        if schema.action(&set.target).is_none() {
            return Err(Error::UnknownPredicate(set.target.clone()));
        }
    }
    Ok(sets)
}
