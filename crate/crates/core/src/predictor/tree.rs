//! Regression trees fit to boosting residuals by exact greedy splitting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self { nodes: vec![Node::Leaf { value }] }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.walk(|f| x[f])
    }

    pub(crate) fn predict_column(&self, cols: &Columns, row: usize) -> f64 {
        self.walk(|f| cols.cols[f][row])
    }

    fn walk(&self, value: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if value(*feature) <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn scale_leaves(&mut self, factor: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value } = n {
                *value *= factor;
            }
        }
    }

    pub fn splits(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, gain, .. } => Some((*feature, *gain)),
            Node::Leaf { .. } => None,
        })
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Structural check used when loading a model from disk.
    pub(crate) fn validate(&self, width: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            match n {
                Node::Split { feature, threshold, left, right, .. } => {
                    if *feature >= width {
                        return Err(format!("node {i} splits on feature {feature}, layout has {width}"));
                    }
                    if !threshold.is_finite() {
                        return Err(format!("node {i} has a non-finite threshold"));
                    }
                    if *left <= i || *right <= i || *left >= self.nodes.len() || *right >= self.nodes.len() {
                        return Err(format!("node {i} has invalid children"));
                    }
                }
                Node::Leaf { value } if !value.is_finite() => {
                    return Err(format!("node {i} has a non-finite leaf value"));
                }
                Node::Leaf { .. } => {}
            }
        }
        Ok(())
    }
}

/// Column-major feature matrix.
#[derive(Debug, Clone)]
pub(crate) struct Columns {
    pub n_rows: usize,
    pub cols: Vec<Vec<f64>>,
}

impl Columns {
    pub fn from_rows<'a>(width: usize, rows: impl ExactSizeIterator<Item = &'a [f64]>) -> Self {
        let n_rows = rows.len();
        let mut cols = vec![Vec::with_capacity(n_rows); width];
        for r in rows {
            for (c, v) in cols.iter_mut().zip(r) {
                c.push(*v);
            }
        }
        Self { n_rows, cols }
    }

    /// Row indices sorted by value for every feature; ties keep row order.
    pub fn presort(&self) -> Vec<Vec<u32>> {
        self.cols
            .par_iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..self.n_rows as u32).collect();
                idx.sort_by(|a, b| c[*a as usize].total_cmp(&c[*b as usize]));
                idx
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

struct Candidate {
    gain: f64,
    threshold: f64,
    left_count: usize,
}

/// Best variance-reduction split on one presorted feature, scanning
/// thresholds in ascending order so ties keep the lowest one.
fn best_split(col: &[f64], order: &[u32], residual: &[f64], total: f64, min_leaf: usize) -> Option<Candidate> {
    let n = order.len();
    if col[order[0] as usize] == col[order[n - 1] as usize] {
        return None;
    }
    let parent = total * total / n as f64;
    let mut best: Option<Candidate> = None;
    let mut s_left = 0.0;
    for pos in 0..n - 1 {
        let row = order[pos] as usize;
        s_left += residual[row];
        let n_left = pos + 1;
        if n - n_left < min_leaf {
            break;
        }
        let (lo, hi) = (col[row], col[order[pos + 1] as usize]);
        if n_left < min_leaf || lo == hi {
            continue;
        }
        let s_right = total - s_left;
        let gain = s_left * s_left / n_left as f64 + s_right * s_right / (n - n_left) as f64 - parent;
        if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
            let mid = lo + (hi - lo) / 2.0;
            let threshold = if mid < hi { mid } else { lo };
            best = Some(Candidate { gain, threshold, left_count: n_left });
        }
    }
    best
}

struct Builder<'a> {
    cols: &'a Columns,
    residual: &'a [f64],
    hessian: &'a [f64],
    params: TreeParams,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
}

impl Builder<'_> {
    fn leaf_value(&self, rows: &[u32]) -> f64 {
        let (mut g, mut h) = (0.0, 0.0);
        for r in rows {
            g += self.residual[*r as usize];
            h += self.hessian[*r as usize];
        }
        if h > 1e-12 {
            g / h
        } else {
            0.0
        }
    }

    fn grow(&mut self, lists: Vec<Vec<u32>>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let n = lists.first().map_or(0, Vec::len);
        let split = if depth < self.params.max_depth && n >= 2 * self.params.min_leaf.max(1) {
            self.find_split(&lists)
        } else {
            None
        };
        let Some((feature, cand)) = split else {
            let value = lists.first().map_or(0.0, |rows| self.leaf_value(rows));
            self.nodes[id] = Node::Leaf { value };
            return id;
        };

        let can_split = |rows: usize| depth + 1 < self.params.max_depth && rows >= 2 * self.params.min_leaf.max(1);
        let (left_lists, right_lists) = if can_split(cand.left_count) || can_split(n - cand.left_count) {
            self.partition(lists, feature, cand.left_count)
        } else {
            // Both children are leaves and only need their row sets.
            let mut rows = lists.into_iter().nth(feature).expect("feature list exists");
            let right = rows.split_off(cand.left_count);
            (vec![rows], vec![right])
        };

        let left = self.grow(left_lists, depth + 1);
        let right = self.grow(right_lists, depth + 1);
        self.nodes[id] = Node::Split { feature, threshold: cand.threshold, gain: cand.gain, left, right };
        id
    }

    fn partition(&mut self, lists: Vec<Vec<u32>>, feature: usize, left_count: usize) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
        let n = lists[feature].len();
        for r in &lists[feature][..left_count] {
            self.goes_left[*r as usize] = true;
        }
        let goes_left = &self.goes_left;
        let (left_lists, right_lists): (Vec<Vec<u32>>, Vec<Vec<u32>>) = lists
            .into_par_iter()
            .map(|l| {
                let mut left = Vec::with_capacity(left_count);
                let mut right = Vec::with_capacity(n - left_count);
                for r in l {
                    if goes_left[r as usize] {
                        left.push(r);
                    } else {
                        right.push(r);
                    }
                }
                (left, right)
            })
            .unzip();
        for r in &left_lists[feature] {
            self.goes_left[*r as usize] = false;
        }
        (left_lists, right_lists)
    }

    fn find_split(&self, lists: &[Vec<u32>]) -> Option<(usize, Candidate)> {
        let total: f64 = {
            let mut rows = lists[0].clone();
            rows.sort_unstable();
            rows.iter().map(|r| self.residual[*r as usize]).sum()
        };
        let per_feature: Vec<Option<Candidate>> = lists
            .par_iter()
            .enumerate()
            .map(|(f, order)| best_split(&self.cols.cols[f], order, self.residual, total, self.params.min_leaf.max(1)))
            .collect();
        let mut best: Option<(usize, Candidate)> = None;
        for (f, c) in per_feature.into_iter().enumerate() {
            if let Some(c) = c {
                if best.as_ref().is_none_or(|(_, b)| c.gain > b.gain) {
                    best = Some((f, c));
                }
            }
        }
        best
    }
}

/// Fit one tree to `residual` over the rows present in `lists` (one sorted
/// row list per feature). Leaves take the Newton step `Σr / Σh`.
pub(crate) fn fit_tree(
    cols: &Columns,
    lists: Vec<Vec<u32>>,
    residual: &[f64],
    hessian: &[f64],
    params: TreeParams,
) -> Tree {
    let mut b = Builder { cols, residual, hessian, params, nodes: Vec::new(), goes_left: vec![false; cols.n_rows] };
    b.grow(lists, 0);
    Tree { nodes: b.nodes }
}
