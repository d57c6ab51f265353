//! Relational regression trees and their greedy induction.

use std::collections::HashMap;

use rayon::prelude::*;

use super::{leaf_value, TrainConfig};
use crate::error::Result;
use crate::logic::{candidate_index_sets, eval, Conjunction, Literal, QueryContext};

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        weight: f64,
    },
    Interior {
        test: Conjunction,
        yes: Box<TreeNode>,
        no: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub root: TreeNode,
}

impl RegressionTree {
    pub fn leaf(weight: f64) -> Self {
        RegressionTree {
            root: TreeNode::Leaf { weight },
        }
    }

    /// Weight of the leaf `ctx` is routed to.
    pub fn evaluate(&self, ctx: &QueryContext<'_>) -> Result<f64> {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { weight } => return Ok(*weight),
                TreeNode::Interior { test, yes, no } => {
                    node = if eval(test, ctx)? { yes } else { no };
                }
            }
        }
    }

    /// Depth-first (yes before no) index of the leaf `ctx` is routed to.
    pub fn leaf_index(&self, ctx: &QueryContext<'_>) -> Result<usize> {
        let mut node = &self.root;
        let mut offset = 0;
        loop {
            match node {
                TreeNode::Leaf { .. } => return Ok(offset),
                TreeNode::Interior { test, yes, no } => {
                    if eval(test, ctx)? {
                        node = yes;
                    } else {
                        offset += count_leaves(yes);
                        node = no;
                    }
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        count_leaves(&self.root)
    }

    pub fn interior_count(&self) -> usize {
        self.leaf_count() - 1
    }

    /// Number of interior nodes on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Interior { yes, no, .. } => 1 + go(yes).max(go(no)),
            }
        }
        go(&self.root)
    }

    pub fn leaf_weights(&self) -> Vec<f64> {
        fn go(n: &TreeNode, out: &mut Vec<f64>) {
            match n {
                TreeNode::Leaf { weight } => out.push(*weight),
                TreeNode::Interior { yes, no, .. } => {
                    go(yes, out);
                    go(no, out);
                }
            }
        }
        let mut out = Vec::new();
        go(&self.root, &mut out);
        out
    }
}

fn count_leaves(n: &TreeNode) -> usize {
    match n {
        TreeNode::Leaf { .. } => 1,
        TreeNode::Interior { yes, no, .. } => count_leaves(yes) + count_leaves(no),
    }
}

/// The literals and conjunctions a node test may use, with lookup from a
/// sorted literal-index set to its candidate position.
#[derive(Debug, Clone)]
pub struct CandidateSpace {
    literals: Vec<Literal>,
    sets: Vec<Vec<usize>>,
    singles: Vec<usize>,
    pairs: Vec<usize>,
    larger: HashMap<Vec<usize>, usize>,
    max_len: usize,
}

impl CandidateSpace {
    pub fn new(literals: Vec<Literal>, max_len: usize) -> Self {
        let k = literals.len();
        let sets = candidate_index_sets(k, max_len);
        let mut singles = vec![usize::MAX; k];
        let mut pairs = if max_len >= 2 { vec![usize::MAX; k * k] } else { Vec::new() };
        let mut larger = HashMap::new();
        for (c, set) in sets.iter().enumerate() {
            match set.as_slice() {
                [i] => singles[*i] = c,
                [i, j] => pairs[i * k + j] = c,
                _ => {
                    larger.insert(set.clone(), c);
                }
            }
        }
        CandidateSpace {
            literals,
            sets,
            singles,
            pairs,
            larger,
            max_len,
        }
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn literal_set(&self, candidate: usize) -> &[usize] {
        &self.sets[candidate]
    }

    pub fn conjunction(&self, candidate: usize) -> Conjunction {
        let lits = self.sets[candidate].iter().map(|&i| self.literals[i].clone()).collect();
        Conjunction::new(lits).expect("candidate sets are non-empty and duplicate-free")
    }

    fn lookup(&self, set: &[usize]) -> usize {
        match set {
            [i] => self.singles[*i],
            [i, j] => self.pairs[i * self.literals.len() + j],
            _ => self.larger[set],
        }
    }

    /// Calls `f` with every candidate satisfied by a row whose true literals
    /// are `truths` (ascending).
    fn for_each_satisfied(&self, truths: &[usize], f: &mut impl FnMut(usize)) {
        fn go(
            space: &CandidateSpace,
            truths: &[usize],
            start: usize,
            cur: &mut Vec<usize>,
            f: &mut impl FnMut(usize),
        ) {
            for p in start..truths.len() {
                cur.push(truths[p]);
                f(space.lookup(cur));
                if cur.len() < space.max_len {
                    go(space, truths, p + 1, cur, f);
                }
                cur.pop();
            }
        }
        let mut cur = Vec::with_capacity(self.max_len);
        go(self, truths, 0, &mut cur, f);
    }
}

/// Truth of every candidate literal for every training example.
#[derive(Debug, Clone)]
pub struct LiteralTable {
    rows: Vec<Vec<usize>>,
}

impl LiteralTable {
    /// `contexts` are `(subject, time)` groundings; `target` is excluded from
    /// concurrent tests.
    pub fn build(
        space: &CandidateSpace,
        contexts: &[(&str, u32)],
        store: &crate::facts::FactStore,
        target: &str,
    ) -> Result<Self> {
        let rows = contexts
            .par_iter()
            .map(|&(subject, time)| {
                let ctx = QueryContext::new(store, subject, time).excluding(target);
                let mut truths = Vec::new();
                for (i, lit) in space.literals.iter().enumerate() {
                    if lit.holds(&ctx)? {
                        truths.push(i);
                    }
                }
                Ok(truths)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LiteralTable { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn true_literals(&self, row: usize) -> &[usize] {
        &self.rows[row]
    }

    pub fn satisfies(&self, row: usize, set: &[usize]) -> bool {
        let truths = &self.rows[row];
        set.iter().all(|i| truths.binary_search(i).is_ok())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub candidate: usize,
    pub gain: f64,
}

/// Sum of squared deviations from the mean.
pub fn sse(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean) * (x - mean)).sum()
}

/// Highest variance-reduction split of `members`.
///
/// `gain = SSE(all) − SSE(yes) − SSE(no)`, computed from per-side sums as
/// `S_yes²/n_yes + S_no²/n_no − S²/n`. Both sides need at least
/// `min_examples_per_leaf` members and the gain must exceed `min_gain`.
/// Candidates are scanned shortest first in canonical order and only a strictly
/// larger gain replaces the incumbent.
pub fn best_split(
    members: &[usize],
    gradients: &[f64],
    space: &CandidateSpace,
    table: &LiteralTable,
    cfg: &TrainConfig,
) -> Option<Split> {
    let n = members.len();
    let min_leaf = cfg.min_examples_per_leaf;
    if n < 2 * min_leaf || space.is_empty() {
        return None;
    }
    let mut sum = vec![0.0f64; space.len()];
    let mut count = vec![0usize; space.len()];
    let mut total = 0.0;
    for &m in members {
        let g = gradients[m];
        total += g;
        space.for_each_satisfied(table.true_literals(m), &mut |c| {
            sum[c] += g;
            count[c] += 1;
        });
    }

    let base = total * total / n as f64;
    let mut best: Option<Split> = None;
    for c in 0..space.len() {
        let (n_yes, s_yes) = (count[c], sum[c]);
        let n_no = n - n_yes;
        if n_yes < min_leaf || n_no < min_leaf {
            continue;
        }
        let s_no = total - s_yes;
        let gain = s_yes * s_yes / n_yes as f64 + s_no * s_no / n_no as f64 - base;
        if gain > cfg.min_gain && best.is_none_or(|b| gain > b.gain) {
            best = Some(Split { candidate: c, gain });
        }
    }
    best
}

/// A tree together with how the training members were routed.
#[derive(Debug, Clone)]
pub struct GrownTree {
    pub tree: RegressionTree,
    /// Leaf weight reached by each training example.
    pub contribution: Vec<f64>,
    /// Gains of the splits, in the order they were made.
    pub gains: Vec<f64>,
    /// Number of training examples per leaf, depth-first yes-before-no.
    pub leaf_sizes: Vec<usize>,
}

enum Slot {
    Open {
        members: Vec<usize>,
        depth: usize,
        split: Option<Split>,
    },
    Split {
        test: usize,
        yes: usize,
        no: usize,
    },
}

/// Grows one tree best-first: the open leaf with the largest available gain is
/// split next, until the interior-node budget is spent or no leaf can split.
pub fn grow_tree(
    gradients: &[f64],
    probabilities: &[f64],
    space: &CandidateSpace,
    table: &LiteralTable,
    cfg: &TrainConfig,
) -> GrownTree {
    let all: Vec<usize> = (0..table.len()).collect();
    let splittable = |members: &[usize], depth: usize| {
        if depth < cfg.max_depth && cfg.max_interior_nodes > 0 {
            best_split(members, gradients, space, table, cfg)
        } else {
            None
        }
    };
    let root_split = splittable(&all, 0);
    let mut slots = vec![Slot::Open {
        members: all,
        depth: 0,
        split: root_split,
    }];
    let mut gains = Vec::new();

    while gains.len() < cfg.max_interior_nodes {
        let mut pick: Option<(usize, f64)> = None;
        for (i, slot) in slots.iter().enumerate() {
            if let Slot::Open { split: Some(s), .. } = slot {
                if pick.is_none_or(|(_, g)| s.gain > g) {
                    pick = Some((i, s.gain));
                }
            }
        }
        let Some((i, gain)) = pick else { break };
        let Slot::Open { members, depth, split } = std::mem::replace(
            &mut slots[i],
            Slot::Split {
                test: 0,
                yes: 0,
                no: 0,
            },
        ) else {
            unreachable!()
        };
        let candidate = split.expect("picked slot has a split").candidate;
        let set = space.literal_set(candidate);
        let (yes, no): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&m| table.satisfies(m, set));
        let yes_split = splittable(&yes, depth + 1);
        let no_split = splittable(&no, depth + 1);
        slots.push(Slot::Open {
            members: yes,
            depth: depth + 1,
            split: yes_split,
        });
        slots.push(Slot::Open {
            members: no,
            depth: depth + 1,
            split: no_split,
        });
        let n = slots.len();
        slots[i] = Slot::Split {
            test: candidate,
            yes: n - 2,
            no: n - 1,
        };
        gains.push(gain);
    }

    let mut contribution = vec![0.0; gradients.len()];
    let mut leaf_sizes = Vec::new();
    let root = assemble(
        0,
        &slots,
        gradients,
        probabilities,
        space,
        cfg,
        &mut contribution,
        &mut leaf_sizes,
    );
    GrownTree {
        tree: RegressionTree { root },
        contribution,
        gains,
        leaf_sizes,
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    slot: usize,
    slots: &[Slot],
    gradients: &[f64],
    probabilities: &[f64],
    space: &CandidateSpace,
    cfg: &TrainConfig,
    contribution: &mut [f64],
    leaf_sizes: &mut Vec<usize>,
) -> TreeNode {
    match &slots[slot] {
        Slot::Open { members, .. } => {
            let g: Vec<f64> = members.iter().map(|&m| gradients[m]).collect();
            let p: Vec<f64> = members.iter().map(|&m| probabilities[m]).collect();
            let weight = leaf_value(&g, &p, cfg.weight_clamp) * cfg.learning_rate;
            for &m in members {
                contribution[m] = weight;
            }
            leaf_sizes.push(members.len());
            TreeNode::Leaf { weight }
        }
        Slot::Split { test, yes, no } => {
            let yes = assemble(*yes, slots, gradients, probabilities, space, cfg, contribution, leaf_sizes);
            let no = assemble(*no, slots, gradients, probabilities, space, cfg, contribution, leaf_sizes);
            TreeNode::Interior {
                test: space.conjunction(*test),
                yes: Box::new(yes),
                no: Box::new(no),
            }
        }
    }
}
