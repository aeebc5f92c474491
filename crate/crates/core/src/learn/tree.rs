//! Weighted CART classification trees grown best-first on Gini gain.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Maximum number of internal nodes.
    pub max_splits: usize,
    pub min_leaf: usize,
    /// Features sampled per split; `None` considers all of them.
    pub vars_per_split: Option<usize>,
}

impl TreeParams {
    pub fn new(max_splits: usize) -> Self {
        TreeParams { max_splits, min_leaf: 1, vars_per_split: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_splits < 1 {
            return Err(Error::Parameter("max_splits must be at least 1".into()));
        }
        if self.min_leaf < 1 {
            return Err(Error::Parameter("min_leaf must be at least 1".into()));
        }
        if self.vars_per_split == Some(0) {
            return Err(Error::Parameter("vars_per_split must be at least 1".into()));
        }
        Ok(())
    }
}

/// Training rows with per-feature sort orders computed once and shared by
/// every tree of an ensemble.
#[derive(Debug, Clone)]
pub struct TrainSet {
    x: Vec<f64>,
    labels: Vec<u8>,
    n: usize,
    p: usize,
    order: Vec<Vec<u32>>,
}

impl TrainSet {
    pub fn new(m: &FeatureMatrix) -> Self {
        let (n, p) = (m.n_rows(), m.n_cols());
        let x = m.data().to_vec();
        let order = (0..p)
            .map(|f| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| x[a as usize * p + f].total_cmp(&x[b as usize * p + f]).then(a.cmp(&b)));
                idx
            })
            .collect();
        TrainSet { x, labels: m.labels().iter().map(|l| l.index() as u8).collect(), n, p, order }
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.p
    }

    pub fn label(&self, r: usize) -> usize {
        self.labels[r] as usize
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.x[r * self.p..(r + 1) * self.p]
    }

    fn value(&self, r: u32, f: usize) -> f64 {
        self.x[r as usize * self.p + f]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { posterior: [f64; 4] },
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Class posterior of the leaf reached by `row`; `x <= threshold` goes left.
    pub fn posterior(&self, row: &[f64]) -> &[f64; 4] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { posterior } => return posterior,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[*feature as usize] <= *threshold { *left } else { *right } as usize;
                }
            }
        }
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }

    /// `(feature, threshold)` of each split in node order.
    pub fn splits(&self) -> Vec<(u32, f64)> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, threshold, .. } => Some((*feature, *threshold)),
                Node::Leaf { .. } => None,
            })
            .collect()
    }
}

/// Index of the largest score; ties go to the lowest class index.
pub fn argmax(scores: &[f64; 4]) -> usize {
    let mut best = 0;
    for c in 1..4 {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    best
}

#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Pending {
    node: usize,
    lists: Vec<Vec<u32>>,
    best: Option<Candidate>,
}

fn sum_sq_ratio(w: &[f64; 4], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    w.iter().map(|v| v * v).sum::<f64>() / total
}

fn best_split(
    set: &TrainSet,
    weights: &[f64],
    lists: &[Vec<u32>],
    totals: &[f64; 4],
    params: &TreeParams,
    rng: &mut Rng,
) -> Option<Candidate> {
    let count = lists[0].len();
    if count < 2 * params.min_leaf || totals.iter().filter(|&&w| w > 0.0).count() < 2 {
        return None;
    }
    let total: f64 = totals.iter().sum();
    let parent = sum_sq_ratio(totals, total);
    let features: Vec<usize> = match params.vars_per_split {
        Some(v) if v < set.p => {
            let mut f = sample(rng, set.p, v).into_vec();
            f.sort_unstable();
            f
        }
        _ => (0..set.p).collect(),
    };
    let mut best: Option<Candidate> = None;
    for f in features {
        let list = &lists[f];
        let mut left = [0.0; 4];
        let mut wl = 0.0;
        for i in 0..count - 1 {
            let r = list[i];
            let w = weights[r as usize];
            left[set.labels[r as usize] as usize] += w;
            wl += w;
            if i + 1 < params.min_leaf || count - i - 1 < params.min_leaf {
                continue;
            }
            let (a, b) = (set.value(r, f), set.value(list[i + 1], f));
            if b <= a {
                continue;
            }
            let mut right = [0.0; 4];
            for c in 0..4 {
                right[c] = totals[c] - left[c];
            }
            let gain = sum_sq_ratio(&left, wl) + sum_sq_ratio(&right, total - wl) - parent;
            if gain > 1e-12 * total && best.is_none_or(|c| gain > c.gain) {
                let mid = a + (b - a) / 2.0;
                let threshold = if mid < b { mid } else { a };
                best = Some(Candidate { feature: f, threshold, gain });
            }
        }
    }
    best
}

fn posterior(totals: &[f64; 4]) -> [f64; 4] {
    let t: f64 = totals.iter().sum();
    let mut p = [0.0; 4];
    if t > 0.0 {
        for c in 0..4 {
            p[c] = totals[c] / t;
        }
    }
    p
}

/// Grows one tree. Rows with zero weight are ignored; the node with the
/// largest Gini gain is split next until `max_splits` is reached or no
/// split improves impurity.
pub fn train_tree(set: &TrainSet, weights: &[f64], params: &TreeParams, rng: &mut Rng) -> Result<Tree> {
    params.validate()?;
    if weights.len() != set.n {
        return Err(Error::Training(format!("{} weights for {} rows", weights.len(), set.n)));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Training("row weights must be finite and non-negative".into()));
    }
    let lists: Vec<Vec<u32>> =
        set.order.iter().map(|o| o.iter().copied().filter(|&r| weights[r as usize] > 0.0).collect()).collect();
    let mut totals = [0.0; 4];
    for (r, &w) in weights.iter().enumerate() {
        totals[set.labels[r] as usize] += w;
    }
    if totals.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Training("all row weights are zero".into()));
    }

    let mut nodes = vec![Node::Leaf { posterior: posterior(&totals) }];
    if set.p == 0 {
        return Ok(Tree { nodes });
    }
    let best = best_split(set, weights, &lists, &totals, params, rng);
    let mut pending = vec![Pending { node: 0, lists, best }];
    let mut splits = 0;
    while splits < params.max_splits {
        let pick = pending.iter().enumerate().filter_map(|(i, p)| p.best.map(|b| (i, b.gain, p.node))).fold(
            None::<(usize, f64, usize)>,
            |acc, cur| match acc {
                Some(a) if a.1 > cur.1 || (a.1 == cur.1 && a.2 < cur.2) => Some(a),
                _ => Some(cur),
            },
        );
        let Some((idx, _, _)) = pick else { break };
        let leaf = pending.swap_remove(idx);
        let cand = leaf.best.expect("picked leaf has a split");
        let goes_left = |r: u32| set.value(r, cand.feature) <= cand.threshold;

        let mut l_lists = Vec::with_capacity(set.p);
        let mut r_lists = Vec::with_capacity(set.p);
        for list in &leaf.lists {
            let (l, r): (Vec<u32>, Vec<u32>) = list.iter().partition(|&&r| goes_left(r));
            l_lists.push(l);
            r_lists.push(r);
        }
        let mut l_tot = [0.0; 4];
        for &r in &l_lists[0] {
            l_tot[set.labels[r as usize] as usize] += weights[r as usize];
        }
        let mut r_tot = [0.0; 4];
        for &r in &r_lists[0] {
            r_tot[set.labels[r as usize] as usize] += weights[r as usize];
        }
        let (li, ri) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::Leaf { posterior: posterior(&l_tot) });
        nodes.push(Node::Leaf { posterior: posterior(&r_tot) });
        nodes[leaf.node] =
            Node::Split { feature: cand.feature as u32, threshold: cand.threshold, left: li as u32, right: ri as u32 };
        splits += 1;

        let lb = best_split(set, weights, &l_lists, &l_tot, params, rng);
        pending.push(Pending { node: li, lists: l_lists, best: lb });
        let rb = best_split(set, weights, &r_lists, &r_tot, params, rng);
        pending.push(Pending { node: ri, lists: r_lists, best: rb });
    }
    Ok(Tree { nodes })
}
