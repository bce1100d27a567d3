use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ProbabilityModel;
use crate::data::Dataset;
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: [u32; 2],
    },
}

/// A CART tree stored as a flat node array; node 0 is the root and a row goes
/// left when `x[feature] <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { .. } => return i,
            }
        }
    }

    /// Class-1 frequency of the leaf reached by `x`.
    pub fn proba1(&self, x: &[f64]) -> f64 {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { counts } => leaf_value(counts),
            Node::Split { .. } => unreachable!(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::invalid("empty tree"));
        }
        for n in &self.nodes {
            match n {
                Node::Split { left, right, .. } => {
                    if *left >= self.nodes.len() || *right >= self.nodes.len() {
                        return Err(Error::invalid("tree child index out of range"));
                    }
                }
                Node::Leaf { counts } => {
                    if counts[0] + counts[1] == 0 {
                        return Err(Error::invalid("leaf with no samples"));
                    }
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn leaf_value(counts: &[u32; 2]) -> f64 {
    counts[1] as f64 / (counts[0] + counts[1]) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 8,
            min_leaf: 2,
            seed: 0,
        }
    }
}

/// Bagged CART trees with soft voting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub params: ForestParams,
    pub n_features: usize,
    pub train_accuracy: f64,
    pub trees: Vec<Tree>,
}

impl TreeEnsemble {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::invalid("forest has no trees"));
        }
        self.trees.iter().try_for_each(Tree::validate)
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                got: x.len(),
            });
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("query entry {v}")));
        }
        Ok(())
    }

    /// Mean of per-tree leaf class frequencies, as `[p0, p1]`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<[f64; 2]> {
        self.check(x)?;
        let p1 = self.proba1(x);
        Ok([1.0 - p1, p1])
    }

    /// Argmax of [`predict_proba`](Self::predict_proba), ties to class 0.
    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        let [p0, p1] = self.predict_proba(x)?;
        Ok(u8::from(p1 > p0))
    }

    pub fn accuracy(&self, d: &Dataset) -> f64 {
        if d.is_empty() {
            return 0.0;
        }
        let hits = d
            .rows
            .iter()
            .zip(&d.labels)
            .filter(|(r, &l)| self.class_of(r) == l)
            .count();
        hits as f64 / d.len() as f64
    }
}

impl ProbabilityModel for TreeEnsemble {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn proba1(&self, x: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.proba1(x)).sum();
        s / self.trees.len() as f64
    }
}

/// Train a forest: bootstrap rows per tree, Gini splits at midpoints between
/// sorted unique values, `ceil(sqrt(D))` candidate features per split.
/// Each tree draws from its own stream seeded by `(seed, tree index)`.
pub fn fit_forest(train: &Dataset, params: ForestParams) -> Result<TreeEnsemble> {
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let [n0, n1] = train.class_counts();
    if n0 == 0 || n1 == 0 {
        return Err(Error::SingleClass);
    }
    if params.n_trees == 0 {
        return Err(Error::invalid("n_trees must be positive"));
    }
    let d = train.n_features();
    let mtry = ((d as f64).sqrt().ceil() as usize).clamp(1, d);
    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(rng::child_seed(params.seed, t as u64));
            let n = train.len();
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut b = Builder {
                data: train,
                mtry,
                params: &params,
                nodes: Vec::new(),
                rng: &mut rng,
            };
            b.grow(sample, 0);
            Tree { nodes: b.nodes }
        })
        .collect();
    let mut model = TreeEnsemble {
        params,
        n_features: d,
        train_accuracy: 0.0,
        trees,
    };
    model.train_accuracy = model.accuracy(train);
    Ok(model)
}

struct Builder<'a, R> {
    data: &'a Dataset,
    mtry: usize,
    params: &'a ForestParams,
    nodes: Vec<Node>,
    rng: &'a mut R,
}

fn gini(c0: f64, c1: f64) -> f64 {
    let n = c0 + c1;
    if n == 0.0 {
        return 0.0;
    }
    let p = c1 / n;
    2.0 * p * (1.0 - p)
}

impl<R: Rng> Builder<'_, R> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let mut counts = [0u32; 2];
        for &i in &idx {
            counts[self.data.labels[i] as usize] += 1;
        }
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { counts });
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || depth >= self.params.max_depth || idx.len() < 2 * self.params.min_leaf {
            return me;
        }
        let Some((feature, threshold)) = self.best_split(&idx, counts) else {
            return me;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.data.rows[i][feature] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.data.n_features();
        let mut all: Vec<usize> = (0..d).collect();
        // partial Fisher-Yates
        for i in 0..self.mtry {
            let j = self.rng.random_range(i..d);
            all.swap(i, j);
        }
        let mut chosen = all[..self.mtry].to_vec();
        chosen.sort_unstable();
        chosen
    }

    /// Best (feature, threshold) by weighted child Gini. Ties go to the lower
    /// feature index, then the lower threshold.
    fn best_split(&mut self, idx: &[usize], counts: [u32; 2]) -> Option<(usize, f64)> {
        let n = idx.len() as f64;
        let parent = gini(counts[0] as f64, counts[1] as f64);
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut pairs: Vec<(f64, u8)> = Vec::with_capacity(idx.len());
        for f in self.candidate_features() {
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (self.data.rows[i][f], self.data.labels[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = [0.0f64; 2];
            for k in 0..pairs.len() - 1 {
                left[pairs[k].1 as usize] += 1.0;
                if pairs[k].0 == pairs[k + 1].0 {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = n - nl;
                if (k + 1) < min_leaf || pairs.len() - (k + 1) < min_leaf {
                    continue;
                }
                let right = [counts[0] as f64 - left[0], counts[1] as f64 - left[1]];
                let child = (nl * gini(left[0], left[1]) + nr * gini(right[0], right[1])) / n;
                let gain = parent - child;
                let thr = 0.5 * (pairs[k].0 + pairs[k + 1].0);
                let better = match best {
                    None => true,
                    Some((g, _, _)) => gain > g + 1e-12,
                };
                if better {
                    best = Some((gain, f, thr));
                }
            }
        }
        best.filter(|&(g, _, _)| g > -1e-12).map(|(_, f, t)| (f, t))
    }
}
