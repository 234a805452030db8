//! Least-squares gradient boosting with shallow regression trees.
//!
//! Each output dimension gets its own ensemble: start from the training
//! mean, then repeatedly fit a depth-limited tree to the current residuals
//! and add `shrinkage` times its prediction.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbtConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            rounds: 200,
            max_depth: 3,
            shrinkage: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

/// Axis-aligned regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

struct TreeBuilder<'a> {
    x: ArrayView2<'a, f64>,
    target: &'a [f64],
    max_depth: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    /// `sorted[f]` holds this node's sample indices ordered by feature `f`.
    fn grow(&mut self, sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let id = self.nodes.len();
        let members = &sorted[0];
        let n = members.len();
        let total: f64 = members.iter().map(|&i| self.target[i]).sum();
        let leaf_value = total / n as f64;
        self.nodes.push(Node::Leaf(leaf_value));
        if depth >= self.max_depth || n < 2 {
            return id;
        }

        let base = total * total / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        for (f, order) in sorted.iter().enumerate() {
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                let i = order[k];
                left_sum += self.target[i];
                let here = self.x[[i, f]];
                let next = self.x[[order[k + 1], f]];
                if here == next {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = (n - k - 1) as f64;
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl + right_sum * right_sum / nr - base;
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, 0.5 * (here + next)));
                }
            }
        }
        let Some((gain, feature, threshold)) = best else {
            return id;
        };
        if !(gain > 1e-12 * base.abs().max(f64::MIN_POSITIVE)) {
            return id;
        }

        let goes_left = |i: usize| self.x[[i, feature]] <= threshold;
        let (left, right): (Vec<Vec<usize>>, Vec<Vec<usize>>) = sorted
            .iter()
            .map(|order| order.iter().partition(|&&i| goes_left(i)))
            .unzip();
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left: l,
            right: r,
        };
        id
    }
}

fn presort(x: ArrayView2<f64>) -> Vec<Vec<usize>> {
    (0..x.ncols())
        .map(|f| {
            let mut idx: Vec<usize> = (0..x.nrows()).collect();
            idx.sort_by(|&a, &b| x[[a, f]].total_cmp(&x[[b, f]]).then(a.cmp(&b)));
            idx
        })
        .collect()
}

/// Boosted ensemble for a single output.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostedRegressor {
    pub init: f64,
    pub shrinkage: f64,
    pub trees: Vec<Tree>,
}

impl BoostedRegressor {
    /// Fits and returns the training MSE after each round.
    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>, cfg: &GbtConfig) -> (Self, Vec<f64>) {
        let n = y.len();
        let init = y.mean().expect("non-empty");
        let mut pred = vec![init; n];
        let sorted = presort(x);
        let mut trees = Vec::with_capacity(cfg.rounds);
        let mut history = Vec::with_capacity(cfg.rounds);
        let mut residual = vec![0.0; n];
        for _ in 0..cfg.rounds {
            for i in 0..n {
                residual[i] = y[i] - pred[i];
            }
            let mut b = TreeBuilder {
                x,
                target: &residual,
                max_depth: cfg.max_depth,
                nodes: Vec::new(),
            };
            b.grow(sorted.clone(), 0);
            let tree = Tree { nodes: b.nodes };
            for (i, p) in pred.iter_mut().enumerate() {
                *p += cfg.shrinkage * tree.predict_row(x.row(i));
            }
            history.push(
                pred.iter()
                    .zip(y.iter())
                    .map(|(p, t)| (t - p) * (t - p))
                    .sum::<f64>()
                    / n as f64,
            );
            trees.push(tree);
        }
        (
            BoostedRegressor {
                init,
                shrinkage: cfg.shrinkage,
                trees,
            },
            history,
        )
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        self.init
            + self
                .trees
                .iter()
                .map(|t| self.shrinkage * t.predict_row(row))
                .sum::<f64>()
    }
}

/// One boosted ensemble per output dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GbtModel {
    pub outputs: Vec<BoostedRegressor>,
}

impl GbtModel {
    pub fn fit(x: &Array2<f64>, y: &Array2<f64>, cfg: &GbtConfig) -> Result<Self> {
        Self::fit_with_history(x, y, cfg).map(|(m, _)| m)
    }

    /// Also returns, per output, the training MSE after each round.
    pub fn fit_with_history(
        x: &Array2<f64>,
        y: &Array2<f64>,
        cfg: &GbtConfig,
    ) -> Result<(Self, Vec<Vec<f64>>)> {
        if x.nrows() != y.nrows() {
            return Err(Error::Shape(format!("{} inputs vs {} targets", x.nrows(), y.nrows())));
        }
        if x.nrows() < 2 {
            return Err(Error::InvalidDataset("boosting needs at least 2 rows".into()));
        }
        if cfg.rounds == 0 || !(cfg.shrinkage > 0.0) {
            return Err(Error::HyperParams(
                "boosting needs at least one round and positive shrinkage".into(),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite feature".into()));
        }
        let fitted: Vec<(BoostedRegressor, Vec<f64>)> = (0..y.ncols())
            .into_par_iter()
            .map(|j| BoostedRegressor::fit(x.view(), y.column(j), cfg))
            .collect();
        let (outputs, history) = fitted.into_iter().unzip();
        Ok((GbtModel { outputs }, history))
    }

    pub fn predict(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.outputs.len()));
        for (i, row) in x.rows().into_iter().enumerate() {
            for (j, m) in self.outputs.iter().enumerate() {
                out[[i, j]] = m.predict_row(row);
            }
        }
        out
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> Array1<f64> {
        self.outputs.iter().map(|m| m.predict_row(row)).collect()
    }
}
