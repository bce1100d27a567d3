//! NSGA-II for two minimized objectives under constraint domination.
//!
//! Feasible candidates beat infeasible ones, infeasible ones compare by total
//! violation, and feasible ones by Pareto dominance. Variation uses simulated
//! binary crossover and polynomial mutation; offspring are repaired by the
//! problem (e.g. snapping categorical genes) and near-duplicates are dropped.
//!
//! A run consumes one RNG stream in a fixed order. Fitness evaluation runs in
//! parallel but never touches the stream, so results do not depend on the
//! thread count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

/// Genomes closer than this (Euclidean) count as duplicates.
pub const DUPLICATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objectives: [f64; 2],
    /// Total constraint violation, `0` when feasible.
    pub violation: f64,
}

/// Point from which part of the initial population is seeded.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub point: Vec<f64>,
    /// Genes drawn at random when seeding from the anchor.
    pub free: Vec<usize>,
}

pub trait Problem: Sync {
    fn n_vars(&self) -> usize;

    /// Per-gene `(lower, upper)`.
    fn bounds(&self) -> Vec<(f64, f64)>;

    fn evaluate(&self, genome: &[f64]) -> Evaluation;

    /// Project a genome onto valid values after variation.
    fn repair(&self, _genome: &mut [f64]) {}

    fn anchor(&self) -> Option<Anchor> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Half seeded at the anchor with its free genes randomized, half uniform.
    Mixed,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MooConfig {
    pub pop_size: usize,
    pub generations: usize,
    pub sbx_prob: f64,
    pub sbx_eta: f64,
    /// Per-individual mutation probability; each gene mutates with
    /// `mut_prob / n_vars`.
    pub mut_prob: f64,
    pub mut_eta: f64,
    pub seed: u64,
    pub init: InitMode,
}

impl Default for MooConfig {
    fn default() -> Self {
        MooConfig {
            pop_size: 50,
            generations: 100,
            sbx_prob: 0.9,
            sbx_eta: 15.0,
            mut_prob: 0.9,
            mut_eta: 20.0,
            seed: 0,
            init: InitMode::Mixed,
        }
    }
}

impl MooConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pop_size < 2 {
            return Err(Error::invalid("pop_size must be at least 2"));
        }
        for (name, p) in [("sbx_prob", self.sbx_prob), ("mut_prob", self.mut_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        for (name, e) in [("sbx_eta", self.sbx_eta), ("mut_eta", self.mut_eta)] {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {e}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub genome: Vec<f64>,
    pub objectives: [f64; 2],
    pub violation: f64,
    pub rank: usize,
    /// May be `f64::INFINITY`, so it is left out of serialized output.
    #[serde(skip)]
    pub crowding: f64,
}

impl Candidate {
    pub fn new(genome: Vec<f64>, e: Evaluation) -> Self {
        Candidate {
            genome,
            objectives: e.objectives,
            violation: e.violation,
            rank: 0,
            crowding: 0.0,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.violation == 0.0
    }
}

/// Plain Pareto dominance for minimization.
pub fn dominates(a: &[f64; 2], b: &[f64; 2]) -> bool {
    a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1])
}

/// Dominance under constraint handling.
pub fn constrained_dominates(a: &Candidate, b: &Candidate) -> bool {
    match (a.is_feasible(), b.is_feasible()) {
        (true, false) => true,
        (false, true) => false,
        (false, false) => a.violation < b.violation,
        (true, true) => dominates(&a.objectives, &b.objectives),
    }
}

/// Fronts of mutually non-dominated indices, best first.
pub fn non_dominated_sort(pop: &[Candidate]) -> Vec<Vec<usize>> {
    let n = pop.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut count = vec![0usize; n];
    for i in 0..n {
        for j in i + 1..n {
            if constrained_dominates(&pop[i], &pop[j]) {
                dominated_by[i].push(j);
                count[j] += 1;
            } else if constrained_dominates(&pop[j], &pop[i]) {
                dominated_by[j].push(i);
                count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                count[j] -= 1;
                if count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of `front` (given as objective pairs).
pub fn crowding_distance(front: &[[f64; 2]]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    for m in 0..2 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| front[a][m].total_cmp(&front[b][m]).then(a.cmp(&b)));
        let lo = front[order[0]][m];
        let hi = front[order[n - 1]][m];
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let i = order[w];
            dist[i] += (front[order[w + 1]][m] - front[order[w - 1]][m]) / range;
        }
    }
    dist
}

/// SBX on one gene pair for a given uniform draw `u`.
pub fn sbx_gene(p1: f64, p2: f64, u: f64, eta: f64) -> (f64, f64) {
    let beta = if u <= 0.5 {
        (2.0 * u).powf(1.0 / (eta + 1.0))
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta + 1.0))
    };
    (
        0.5 * ((1.0 + beta) * p1 + (1.0 - beta) * p2),
        0.5 * ((1.0 - beta) * p1 + (1.0 + beta) * p2),
    )
}

/// Polynomial-mutation step for a given uniform draw `u`, before clipping.
pub fn mutate_gene(x: f64, lower: f64, upper: f64, u: f64, eta: f64) -> f64 {
    let delta = if u < 0.5 {
        (2.0 * u).powf(1.0 / (eta + 1.0)) - 1.0
    } else {
        1.0 - (2.0 * (1.0 - u)).powf(1.0 / (eta + 1.0))
    };
    x + delta * (upper - lower)
}

/// Simulated binary crossover. With probability `sbx_prob` the pair is
/// recombined, each unfrozen gene with probability one half.
pub fn sbx_crossover(
    p1: &[f64],
    p2: &[f64],
    bounds: &[(f64, f64)],
    frozen: &[bool],
    cfg: &MooConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    if rng.random::<f64>() >= cfg.sbx_prob {
        return (c1, c2);
    }
    for g in 0..p1.len() {
        if frozen[g] || rng.random::<f64>() >= 0.5 {
            continue;
        }
        let u: f64 = rng.random();
        if (p1[g] - p2[g]).abs() < 1e-14 {
            continue;
        }
        let (a, b) = sbx_gene(p1[g], p2[g], u, cfg.sbx_eta);
        let (lo, hi) = bounds[g];
        c1[g] = a.clamp(lo, hi);
        c2[g] = b.clamp(lo, hi);
    }
    (c1, c2)
}

/// Polynomial mutation, each unfrozen gene with probability
/// `mut_prob / n_vars`.
pub fn polynomial_mutation(
    genome: &mut [f64],
    bounds: &[(f64, f64)],
    frozen: &[bool],
    cfg: &MooConfig,
    rng: &mut ChaCha8Rng,
) {
    let rate = cfg.mut_prob / genome.len() as f64;
    for g in 0..genome.len() {
        if frozen[g] || rng.random::<f64>() >= rate {
            continue;
        }
        let u: f64 = rng.random();
        let (lo, hi) = bounds[g];
        genome[g] = mutate_gene(genome[g], lo, hi, u, cfg.mut_eta).clamp(lo, hi);
    }
}

/// Per-generation summary, used to check elitism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub min_violation: f64,
    pub feasible: usize,
    /// Smallest first objective among feasible members, if any.
    pub best_f0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveResult {
    /// Feasible first front, without duplicates, sorted by objectives.
    pub front: Vec<Candidate>,
    pub evaluations: usize,
    /// Feasible candidates seen over the whole run.
    pub feasible_seen: usize,
    pub history: Vec<GenerationStats>,
}

fn too_close(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() < DUPLICATE_TOL
}

fn evaluate_all<P: Problem + ?Sized>(problem: &P, genomes: Vec<Vec<f64>>) -> Result<Vec<Candidate>> {
    let evals: Vec<Evaluation> = genomes.par_iter().map(|g| problem.evaluate(g)).collect();
    genomes
        .into_iter()
        .zip(evals)
        .map(|(g, e)| {
            if e.objectives.iter().any(|v| !v.is_finite()) || !e.violation.is_finite() || e.violation < 0.0 {
                Err(Error::NonFinite(format!("evaluation {:?} at {:?}", e, g)))
            } else {
                Ok(Candidate::new(g, e))
            }
        })
        .collect()
}

/// Assign rank and crowding in place; returns the fronts.
fn rank_population(pop: &mut [Candidate]) -> Vec<Vec<usize>> {
    let fronts = non_dominated_sort(pop);
    for (r, f) in fronts.iter().enumerate() {
        let objs: Vec<[f64; 2]> = f.iter().map(|&i| pop[i].objectives).collect();
        for (&i, c) in f.iter().zip(crowding_distance(&objs)) {
            pop[i].rank = r;
            pop[i].crowding = c;
        }
    }
    fronts
}

/// Tournament comparator: violation, then rank, then crowding.
fn better(a: &Candidate, b: &Candidate) -> bool {
    if a.violation != b.violation {
        return a.violation < b.violation;
    }
    if a.rank != b.rank {
        return a.rank < b.rank;
    }
    a.crowding > b.crowding
}

fn tournament<'a>(pop: &'a [Candidate], rng: &mut ChaCha8Rng) -> &'a Candidate {
    let a = &pop[rng.random_range(0..pop.len())];
    let b = &pop[rng.random_range(0..pop.len())];
    if better(b, a) {
        b
    } else {
        a
    }
}

fn stats(pop: &[Candidate]) -> GenerationStats {
    let feasible: Vec<&Candidate> = pop.iter().filter(|c| c.is_feasible()).collect();
    GenerationStats {
        min_violation: pop.iter().map(|c| c.violation).fold(f64::INFINITY, f64::min),
        feasible: feasible.len(),
        best_f0: feasible.iter().map(|c| c.objectives[0]).reduce(f64::min),
    }
}

fn initial_genomes<P: Problem + ?Sized>(
    problem: &P,
    cfg: &MooConfig,
    bounds: &[(f64, f64)],
    frozen: &[bool],
    base: &[f64],
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let anchor = problem.anchor();
    let seeded = match (&anchor, cfg.init) {
        (Some(_), InitMode::Mixed) => cfg.pop_size / 2,
        _ => 0,
    };
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(cfg.pop_size);
    for i in 0..cfg.pop_size {
        let mut g = base.to_vec();
        if i < seeded {
            let a = anchor.as_ref().expect("seeded only with an anchor");
            for &j in &a.free {
                if !frozen[j] {
                    g[j] = rng.random_range(bounds[j].0..=bounds[j].1);
                }
            }
        } else {
            for j in 0..g.len() {
                if !frozen[j] {
                    g[j] = rng.random_range(bounds[j].0..=bounds[j].1);
                }
            }
        }
        problem.repair(&mut g);
        out.push(g);
    }
    out
}

/// Shrink a front to `target` members, repeatedly dropping the most crowded
/// one and recomputing distances, which spreads survivors more evenly than a
/// single sort.
fn prune_front(pop: &[Candidate], mut front: Vec<usize>, target: usize) -> Vec<usize> {
    while front.len() > target {
        let objs: Vec<[f64; 2]> = front.iter().map(|&i| pop[i].objectives).collect();
        let cd = crowding_distance(&objs);
        let worst = (0..front.len())
            .min_by(|&a, &b| cd[a].total_cmp(&cd[b]).then(b.cmp(&a)))
            .expect("front larger than target");
        front.remove(worst);
    }
    front
}

/// Run NSGA-II. Genes flagged in `frozen` stay at the anchor's values.
pub fn evolve<P: Problem + ?Sized>(problem: &P, cfg: &MooConfig, frozen: &[bool]) -> Result<EvolveResult> {
    cfg.validate()?;
    let d = problem.n_vars();
    let bounds = problem.bounds();
    if bounds.len() != d || frozen.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: if bounds.len() != d { bounds.len() } else { frozen.len() },
        });
    }
    if bounds.iter().any(|(lo, hi)| !(lo <= hi)) {
        return Err(Error::invalid("gene bounds must satisfy lower <= upper"));
    }
    let base: Vec<f64> = match problem.anchor() {
        Some(a) => {
            if a.point.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: a.point.len(),
                });
            }
            a.point
        }
        None if frozen.iter().any(|&f| f) => {
            return Err(Error::invalid("frozen genes need an anchor point"));
        }
        None => bounds.iter().map(|(lo, _)| *lo).collect(),
    };
    let mut rng = rng::stream(cfg.seed);

    let mut init = initial_genomes(problem, cfg, &bounds, frozen, &base, &mut rng);
    let mut unique: Vec<Vec<f64>> = Vec::with_capacity(init.len());
    for g in init.drain(..) {
        if !unique.iter().any(|u| too_close(u, &g)) {
            unique.push(g);
        }
    }
    let mut pop = evaluate_all(problem, unique)?;
    let mut evaluations = pop.len();
    let mut feasible_seen = pop.iter().filter(|c| c.is_feasible()).count();
    rank_population(&mut pop);
    let mut history = vec![stats(&pop)];

    for _ in 0..cfg.generations {
        let mut children: Vec<Vec<f64>> = Vec::with_capacity(cfg.pop_size);
        let mut attempts = 0;
        while children.len() < cfg.pop_size && attempts < 20 * cfg.pop_size {
            attempts += 1;
            let a = tournament(&pop, &mut rng);
            let b = tournament(&pop, &mut rng);
            let (mut c1, mut c2) = sbx_crossover(&a.genome, &b.genome, &bounds, frozen, cfg, &mut rng);
            for c in [&mut c1, &mut c2] {
                polynomial_mutation(c, &bounds, frozen, cfg, &mut rng);
                problem.repair(c);
            }
            for c in [c1, c2] {
                let dup = pop.iter().any(|p| too_close(&p.genome, &c)) || children.iter().any(|o| too_close(o, &c));
                if !dup && children.len() < cfg.pop_size {
                    children.push(c);
                }
            }
        }
        let offspring = evaluate_all(problem, children)?;
        evaluations += offspring.len();
        feasible_seen += offspring.iter().filter(|c| c.is_feasible()).count();

        let mut merged = std::mem::take(&mut pop);
        merged.extend(offspring);
        let fronts = rank_population(&mut merged);
        let mut keep: Vec<usize> = Vec::with_capacity(cfg.pop_size);
        for f in fronts {
            if keep.len() + f.len() <= cfg.pop_size {
                keep.extend(f);
            } else {
                keep.extend(prune_front(&merged, f, cfg.pop_size - keep.len()));
            }
            if keep.len() == cfg.pop_size {
                break;
            }
        }
        keep.sort_unstable();
        let mut slots: Vec<Option<Candidate>> = merged.into_iter().map(Some).collect();
        pop = keep.into_iter().map(|i| slots[i].take().expect("kept once")).collect();
        rank_population(&mut pop);
        history.push(stats(&pop));
    }

    let mut front: Vec<Candidate> = pop.into_iter().filter(|c| c.rank == 0 && c.is_feasible()).collect();
    front.sort_by(|a, b| {
        a.objectives[0]
            .total_cmp(&b.objectives[0])
            .then(a.objectives[1].total_cmp(&b.objectives[1]))
            .then_with(|| {
                a.genome
                    .iter()
                    .zip(&b.genome)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    debug_assert!(is_mutually_non_dominated(&front), "returned front has a dominated member");
    Ok(EvolveResult {
        front,
        evaluations,
        feasible_seen,
        history,
    })
}

/// True when no member of `front` dominates another.
pub fn is_mutually_non_dominated(front: &[Candidate]) -> bool {
    front.iter().enumerate().all(|(i, a)| {
        front
            .iter()
            .enumerate()
            .all(|(j, b)| i == j || !constrained_dominates(a, b))
    })
}
