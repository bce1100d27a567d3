//! Interventional Shapley attribution: classic values, pairwise interaction
//! indices and the pure main effects on the diagonal of the interaction
//! matrix.
//!
//! Everything is expressed over a [`CoalitionGame`], where the worth of a
//! coalition `S` is the model's mean class-1 probability over a background
//! set after the query's values are pasted onto the features in `S`.
//! Coalitions are `u64` bit masks, so at most 64 features are supported.
//!
//! Two games are provided. [`InterventionalGame`] evaluates any
//! [`ProbabilityModel`] by brute force. [`TreeGame`] walks each tree once per
//! background row and records, for every reachable leaf, which features must
//! be taken from the query and which from the background row. Each such leaf
//! is a tiny game of the form `1[on ⊆ S, off ∩ S = ∅]` whose Shapley values
//! have a closed form, so exact attribution costs one pass over the leaves
//! instead of `2^D` model calls.
//!
//! The main effect of feature `i` satisfies
//!
//! ```text
//! φ_ii = φ_i − ½ (v(N) − v(N∖i)) + ½ (v({i}) − v(∅))
//! ```
//!
//! because the off-diagonal row sum `Σ_j Φ_ij` telescopes to the first and
//! last marginal contributions. The sampling estimator relies on this: only
//! the classic values are sampled.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::models::{FnModel, LogisticModel, Node, ProbabilityModel, TreeEnsemble};
use crate::rng;
use crate::{Error, Result};

pub const MAX_FEATURES: usize = 64;

/// Reference rows for the interventional value function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSet {
    pub rows: Vec<Vec<f64>>,
    pub seed: u64,
}

impl BackgroundSet {
    pub fn new(rows: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("empty background set"));
        }
        Ok(BackgroundSet { rows, seed })
    }

    /// Draw `k` training rows without replacement (all rows when `k >= N`),
    /// kept in their original order.
    pub fn sample(train: &Dataset, k: usize, seed: u64) -> Result<Self> {
        if train.is_empty() || k == 0 {
            return Err(Error::invalid("empty background set"));
        }
        let mut idx: Vec<usize> = (0..train.len()).collect();
        if k < idx.len() {
            idx.shuffle(&mut rng::stream(seed));
            idx.truncate(k);
            idx.sort_unstable();
        }
        Self::new(idx.iter().map(|&i| train.rows[i].clone()).collect(), seed)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// A cooperative game over at most 64 players.
pub trait CoalitionGame {
    fn n_players(&self) -> usize;

    fn value(&self, coalition: u64) -> f64;

    /// Exact classic Shapley values, when the game knows a shortcut.
    fn closed_form_shapley(&self) -> Option<Vec<f64>> {
        None
    }

    /// Exact main effects, when the game knows a shortcut.
    fn closed_form_main_effects(&self) -> Option<Vec<f64>> {
        None
    }
}

fn full_mask(d: usize) -> u64 {
    if d == 64 {
        u64::MAX
    } else {
        (1u64 << d) - 1
    }
}

fn composite(x: &[f64], b: &[f64], coalition: u64, out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate() {
        *o = if coalition >> j & 1 == 1 { x[j] } else { b[j] };
    }
}

/// Brute-force interventional game for any model.
pub struct InterventionalGame<'a, M: ?Sized> {
    model: &'a M,
    x: &'a [f64],
    background: &'a BackgroundSet,
}

impl<'a, M: ProbabilityModel + ?Sized> InterventionalGame<'a, M> {
    pub fn new(model: &'a M, x: &'a [f64], background: &'a BackgroundSet) -> Result<Self> {
        check_inputs(model.n_features(), x, background)?;
        Ok(InterventionalGame {
            model,
            x,
            background,
        })
    }
}

fn check_inputs(d: usize, x: &[f64], background: &BackgroundSet) -> Result<()> {
    if x.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: x.len(),
        });
    }
    if d > MAX_FEATURES {
        return Err(Error::invalid(format!("attribution supports at most {MAX_FEATURES} features")));
    }
    if background.is_empty() {
        return Err(Error::invalid("empty background set"));
    }
    if let Some(r) = background.rows.iter().find(|r| r.len() != d) {
        return Err(Error::Dimension {
            expected: d,
            got: r.len(),
        });
    }
    Ok(())
}

impl<M: ProbabilityModel + ?Sized> CoalitionGame for InterventionalGame<'_, M> {
    fn n_players(&self) -> usize {
        self.x.len()
    }

    fn value(&self, coalition: u64) -> f64 {
        let mut z = vec![0.0; self.x.len()];
        let mut s = 0.0;
        for b in &self.background.rows {
            composite(self.x, b, coalition, &mut z);
            s += self.model.proba1(&z);
        }
        s / self.background.len() as f64
    }
}

/// One reachable leaf: worth `weight` for every coalition that contains all
/// of `on` and none of `off`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Term {
    on: u64,
    off: u64,
    weight: f64,
}

/// For each background chunk, tree and node: the rows of the chunk that go
/// left at that node.
type SplitMasks = Vec<Vec<Vec<u64>>>;

fn split_masks(forest: &TreeEnsemble, background: &BackgroundSet) -> SplitMasks {
    background
        .rows
        .chunks(64)
        .map(|chunk| {
            forest
                .trees
                .iter()
                .map(|tree| {
                    tree.nodes
                        .iter()
                        .map(|n| match n {
                            Node::Split { feature, threshold, .. } => chunk
                                .iter()
                                .enumerate()
                                .filter(|(_, b)| b[*feature] <= *threshold)
                                .fold(0u64, |m, (r, _)| m | 1 << r),
                            Node::Leaf { .. } => 0,
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Walk every tree against every background row and report each reachable
/// leaf as `(on, off, weight)`. Background rows travel in groups of up to 64
/// as a bit mask, so rows that agree with each other share one descent.
fn walk_leaves(
    forest: &TreeEnsemble,
    masks: &SplitMasks,
    n_rows: usize,
    x: &[f64],
    mut emit: impl FnMut(u64, u64, f64),
) {
    let per_row = 1.0 / (forest.n_trees() * n_rows) as f64;
    let mut stack: Vec<(usize, u64, u64, u64)> = Vec::new();
    for (ci, chunk_masks) in masks.iter().enumerate() {
        let all = full_mask((n_rows - 64 * ci).min(64));
        for (tree, left_rows) in forest.trees.iter().zip(chunk_masks) {
            stack.push((0, 0, 0, all));
            while let Some((i, on, off, rows)) = stack.pop() {
                match &tree.nodes[i] {
                    Node::Leaf { counts } => emit(
                        on,
                        off,
                        per_row * rows.count_ones() as f64 * crate::models::leaf_value_of(counts),
                    ),
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        let bit = 1u64 << feature;
                        let x_left = x[*feature] <= *threshold;
                        let (x_dir, other) = if x_left { (*left, *right) } else { (*right, *left) };
                        if on & bit != 0 {
                            stack.push((x_dir, on, off, rows));
                            continue;
                        }
                        let same = if x_left { rows & left_rows[i] } else { rows & !left_rows[i] };
                        let diff = rows & !same;
                        if same != 0 {
                            stack.push((x_dir, on, off, same));
                        }
                        if diff != 0 {
                            if off & bit != 0 {
                                stack.push((other, on, off, diff));
                            } else {
                                stack.push((x_dir, on | bit, off, diff));
                                stack.push((other, on, off | bit, diff));
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Interventional game of a tree ensemble, decomposed into leaf terms.
pub struct TreeGame {
    d: usize,
    terms: Vec<Term>,
}

impl TreeGame {
    pub fn new(forest: &TreeEnsemble, x: &[f64], background: &BackgroundSet) -> Result<Self> {
        check_inputs(forest.n_features, x, background)?;
        let masks = split_masks(forest, background);
        let mut terms = Vec::new();
        walk_leaves(forest, &masks, background.len(), x, |on, off, weight| {
            terms.push(Term { on, off, weight })
        });
        Ok(TreeGame {
            d: forest.n_features,
            terms,
        })
    }

    fn accumulate(&self) -> LeafSums {
        let mut acc = LeafSums::new(self.d);
        for t in &self.terms {
            acc.add(t.on, t.off, t.weight);
        }
        acc
    }
}

/// Running sums over leaf terms: closed-form Shapley values plus `v(∅)`,
/// `v(N)`, `v({i})` and `v(N∖i)`.
struct LeafSums {
    phi: Vec<f64>,
    empty: f64,
    full: f64,
    single: Vec<f64>,
    all_but: Vec<f64>,
    single_base: f64,
    all_but_base: f64,
}

impl LeafSums {
    fn new(d: usize) -> Self {
        LeafSums {
            phi: vec![0.0; d],
            empty: 0.0,
            full: 0.0,
            single: vec![0.0; d],
            all_but: vec![0.0; d],
            single_base: 0.0,
            all_but_base: 0.0,
        }
    }

    fn add(&mut self, on: u64, off: u64, w: f64) {
        let f = factorials();
        let a = on.count_ones() as usize;
        let c = off.count_ones() as usize;
        let m = a + c;
        if a > 0 {
            let share = w * f[a - 1] * f[c] / f[m];
            for i in bits(on) {
                self.phi[i] += share;
            }
        }
        if c > 0 {
            let share = w * f[a] * f[c - 1] / f[m];
            for i in bits(off) {
                self.phi[i] -= share;
            }
        }
        if on == 0 {
            self.empty += w;
            // contributes to v({i}) unless i is in `off`
            self.single_base += w;
            for i in bits(off) {
                self.single[i] -= w;
            }
        } else if a == 1 {
            self.single[on.trailing_zeros() as usize] += w;
        }
        if off == 0 {
            self.full += w;
            self.all_but_base += w;
            for i in bits(on) {
                self.all_but[i] -= w;
            }
        } else if c == 1 {
            self.all_but[off.trailing_zeros() as usize] += w;
        }
    }

    fn main_effects(&self) -> Vec<f64> {
        (0..self.phi.len())
            .map(|i| {
                let single = self.single[i] + self.single_base;
                let all_but = self.all_but[i] + self.all_but_base;
                self.phi[i] - 0.5 * (self.full - all_but) + 0.5 * (single - self.empty)
            })
            .collect()
    }
}

fn bits(mut m: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        }
    })
}

fn factorials() -> &'static [f64; MAX_FEATURES + 1] {
    static F: OnceLock<[f64; MAX_FEATURES + 1]> = OnceLock::new();
    F.get_or_init(|| {
        let mut f = [1.0; MAX_FEATURES + 1];
        for i in 1..=MAX_FEATURES {
            f[i] = f[i - 1] * i as f64;
        }
        f
    })
}

impl CoalitionGame for TreeGame {
    fn n_players(&self) -> usize {
        self.d
    }

    fn value(&self, coalition: u64) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.on & !coalition == 0 && t.off & coalition == 0)
            .map(|t| t.weight)
            .sum()
    }

    fn closed_form_shapley(&self) -> Option<Vec<f64>> {
        Some(self.accumulate().phi)
    }

    fn closed_form_main_effects(&self) -> Option<Vec<f64>> {
        Some(self.accumulate().main_effects())
    }
}

/// Exact-versus-sampling policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributionConfig {
    /// Largest feature count handled exactly.
    pub exact_limit: usize,
    /// Permutations for the sampling estimator; `None` disables sampling.
    pub permutations: Option<usize>,
    pub seed: u64,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            exact_limit: 12,
            permutations: Some(256),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionKind {
    Shapley,
    MainEffects,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    pub kind: AttributionKind,
    /// Per-feature attribution in class-1 probability units.
    pub values: Vec<f64>,
    /// `v(∅)`: mean background prediction.
    pub base_value: f64,
    /// Model class-1 probability at the query.
    pub fx: f64,
}

/// Table of `v(S)` for all `2^D` coalitions.
pub fn value_table<G: CoalitionGame + ?Sized>(game: &G) -> Vec<f64> {
    let d = game.n_players();
    (0..1u64 << d).map(|s| game.value(s)).collect()
}

fn shapley_weights(d: usize) -> Vec<f64> {
    let f = factorials();
    (0..d).map(|s| f[s] * f[d - s - 1] / f[d]).collect()
}

/// Classic Shapley values by enumeration over a full value table.
pub fn shapley_from_table(table: &[f64], d: usize) -> Vec<f64> {
    let w = shapley_weights(d);
    let mut phi = vec![0.0; d];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1u64 << i;
        for s in 0..table.len() as u64 {
            if s & bit == 0 {
                *p += w[s.count_ones() as usize] * (table[(s | bit) as usize] - table[s as usize]);
            }
        }
    }
    phi
}

/// Full Shapley interaction matrix by enumeration. Off-diagonal entries are
/// half the Shapley interaction index (so the matrix sums to
/// `v(N) − v(∅)`); the diagonal holds the main effects.
pub fn interactions_from_table(table: &[f64], d: usize) -> Vec<Vec<f64>> {
    let phi = shapley_from_table(table, d);
    let f = factorials();
    let mut m = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in i + 1..d {
            let (bi, bj) = (1u64 << i, 1u64 << j);
            let mut acc = 0.0;
            for s in 0..table.len() as u64 {
                if s & (bi | bj) != 0 {
                    continue;
                }
                let k = s.count_ones() as usize;
                let w = f[k] * f[d - k - 2] / (2.0 * f[d - 1]);
                let delta = table[(s | bi | bj) as usize] - table[(s | bi) as usize]
                    - table[(s | bj) as usize]
                    + table[s as usize];
                acc += w * delta;
            }
            m[i][j] = acc;
            m[j][i] = acc;
        }
    }
    for i in 0..d {
        let off: f64 = (0..d).filter(|&j| j != i).map(|j| m[i][j]).sum();
        m[i][i] = phi[i] - off;
    }
    m
}

/// Permutation-sampling Shapley estimate with antithetic (reversed) pairs.
pub fn sampled_shapley<G: CoalitionGame + ?Sized>(game: &G, permutations: usize, seed: u64) -> Vec<f64> {
    let d = game.n_players();
    let memo: RefCell<HashMap<u64, f64>> = RefCell::new(HashMap::new());
    let v = |s: u64| *memo.borrow_mut().entry(s).or_insert_with(|| game.value(s));
    let mut rng = rng::stream(seed);
    let mut phi = vec![0.0; d];
    let mut order: Vec<usize> = (0..d).collect();
    let empty = v(0);
    let mut done = 0;
    while done < permutations {
        order.shuffle(&mut rng);
        for pass in 0..2 {
            if done == permutations {
                break;
            }
            let mut mask = 0u64;
            let mut prev = empty;
            for k in 0..d {
                let p = if pass == 0 { order[k] } else { order[d - 1 - k] };
                mask |= 1 << p;
                let cur = v(mask);
                phi[p] += cur - prev;
                prev = cur;
            }
            done += 1;
        }
    }
    for p in &mut phi {
        *p /= permutations.max(1) as f64;
    }
    phi
}

fn main_effects_from_shapley<G: CoalitionGame + ?Sized>(game: &G, phi: &[f64]) -> Vec<f64> {
    let d = game.n_players();
    let full = full_mask(d);
    let vn = game.value(full);
    let v0 = game.value(0);
    (0..d)
        .map(|i| {
            let bit = 1u64 << i;
            phi[i] - 0.5 * (vn - game.value(full & !bit)) + 0.5 * (game.value(bit) - v0)
        })
        .collect()
}

enum Mode {
    Exact,
    Sampled(usize),
}

fn mode(d: usize, cfg: &AttributionConfig) -> Result<Mode> {
    if d <= cfg.exact_limit {
        Ok(Mode::Exact)
    } else {
        match cfg.permutations {
            Some(m) if m > 0 => Ok(Mode::Sampled(m)),
            _ => Err(Error::ExactLimit {
                d,
                limit: cfg.exact_limit,
            }),
        }
    }
}

/// Classic Shapley values of a game under `cfg`.
pub fn shapley_of<G: CoalitionGame + ?Sized>(game: &G, cfg: &AttributionConfig) -> Result<Vec<f64>> {
    let d = game.n_players();
    Ok(match mode(d, cfg)? {
        Mode::Exact => match game.closed_form_shapley() {
            Some(phi) => phi,
            None => shapley_from_table(&value_table(game), d),
        },
        Mode::Sampled(m) => sampled_shapley(game, m, cfg.seed),
    })
}

/// Main effects (interaction-matrix diagonal) of a game under `cfg`.
pub fn main_effects_of<G: CoalitionGame + ?Sized>(game: &G, cfg: &AttributionConfig) -> Result<Vec<f64>> {
    let d = game.n_players();
    match mode(d, cfg)? {
        Mode::Exact => match game.closed_form_main_effects() {
            Some(me) => Ok(me),
            None => {
                let m = interactions_from_table(&value_table(game), d);
                Ok((0..d).map(|i| m[i][i]).collect())
            }
        },
        Mode::Sampled(m) => {
            let phi = sampled_shapley(game, m, cfg.seed);
            Ok(main_effects_from_shapley(game, &phi))
        }
    }
}

/// Models that can build their own interventional game.
pub trait Attributable: ProbabilityModel {
    fn game<'a>(&'a self, x: &'a [f64], background: &'a BackgroundSet) -> Result<Box<dyn CoalitionGame + 'a>>;

    /// Exact main effects without materialising the game, when the model
    /// has a shortcut for them. The returned closure is prepared once for
    /// `background` and then called per point.
    fn direct_main_effects<'a>(&'a self, _background: &'a BackgroundSet) -> Option<MainEffectFn<'a>> {
        None
    }
}

/// Prepared main-effect evaluator, see [`Attributable::direct_main_effects`].
pub type MainEffectFn<'a> = Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync + 'a>;

impl Attributable for TreeEnsemble {
    fn game<'a>(&'a self, x: &'a [f64], background: &'a BackgroundSet) -> Result<Box<dyn CoalitionGame + 'a>> {
        Ok(Box::new(TreeGame::new(self, x, background)?))
    }

    fn direct_main_effects<'a>(&'a self, background: &'a BackgroundSet) -> Option<MainEffectFn<'a>> {
        let masks = split_masks(self, background);
        Some(Box::new(move |x| {
            check_inputs(self.n_features, x, background)?;
            let mut acc = LeafSums::new(self.n_features);
            walk_leaves(self, &masks, background.len(), x, |on, off, w| acc.add(on, off, w));
            Ok(acc.main_effects())
        }))
    }
}

impl Attributable for LogisticModel {
    fn game<'a>(&'a self, x: &'a [f64], background: &'a BackgroundSet) -> Result<Box<dyn CoalitionGame + 'a>> {
        Ok(Box::new(InterventionalGame::new(self, x, background)?))
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Attributable for FnModel<F> {
    fn game<'a>(&'a self, x: &'a [f64], background: &'a BackgroundSet) -> Result<Box<dyn CoalitionGame + 'a>> {
        Ok(Box::new(InterventionalGame::new(self, x, background)?))
    }
}

/// Interventional worth of the coalition `subset` (feature indices).
pub fn value_function<M: ProbabilityModel + ?Sized>(
    m: &M,
    x: &[f64],
    subset: &[usize],
    background: &BackgroundSet,
) -> Result<f64> {
    let game = InterventionalGame::new(m, x, background)?;
    let mut mask = 0u64;
    for &j in subset {
        if j >= x.len() {
            return Err(Error::invalid(format!("feature index {j} out of range")));
        }
        mask |= 1 << j;
    }
    Ok(game.value(mask))
}

/// Classic Shapley values at `x`.
pub fn shapley_values<M: Attributable + ?Sized>(
    m: &M,
    x: &[f64],
    background: &BackgroundSet,
    cfg: &AttributionConfig,
) -> Result<AttributionVector> {
    let game = m.game(x, background)?;
    Ok(AttributionVector {
        kind: AttributionKind::Shapley,
        values: shapley_of(game.as_ref(), cfg)?,
        base_value: game.value(0),
        fx: m.proba1(x),
    })
}

/// Pure main effects at `x`.
pub fn main_effects<M: Attributable + ?Sized>(
    m: &M,
    x: &[f64],
    background: &BackgroundSet,
    cfg: &AttributionConfig,
) -> Result<AttributionVector> {
    let game = m.game(x, background)?;
    Ok(AttributionVector {
        kind: AttributionKind::MainEffects,
        values: main_effect_evaluator(m, background, cfg)?(x)?,
        base_value: game.value(0),
        fx: m.proba1(x),
    })
}

/// A main-effect evaluator bound to `background`, taking the model's
/// shortcut in exact mode. Build it once and call it for many points.
pub fn main_effect_evaluator<'a, M: Attributable + ?Sized>(
    m: &'a M,
    background: &'a BackgroundSet,
    cfg: &'a AttributionConfig,
) -> Result<MainEffectFn<'a>> {
    if let Mode::Exact = mode(m.n_features(), cfg)? {
        if let Some(f) = m.direct_main_effects(background) {
            return Ok(f);
        }
    }
    Ok(Box::new(move |x| main_effects_of(m.game(x, background)?.as_ref(), cfg)))
}

/// Full interaction matrix at `x` (exact mode only).
pub fn interaction_matrix<M: Attributable + ?Sized>(
    m: &M,
    x: &[f64],
    background: &BackgroundSet,
    cfg: &AttributionConfig,
) -> Result<Vec<Vec<f64>>> {
    let game = m.game(x, background)?;
    let d = game.n_players();
    if d > cfg.exact_limit {
        return Err(Error::ExactLimit {
            d,
            limit: cfg.exact_limit,
        });
    }
    Ok(interactions_from_table(&value_table(game.as_ref()), d))
}
