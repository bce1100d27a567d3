//! The informative semi-factual search.
//!
//! For every actionable key feature `k` a constrained NSGA-II run maximizes
//! the change on `k` while keeping the other features close to the query,
//! the predicted class fixed and the joint log-density inside the
//! plausibility band. Each point on the resulting front is joined to the
//! query by a straight path; main effects are traced along it, oriented so
//! that larger always means "more support for the query's class", and the
//! trend of each feature is measured with Kendall's tau. Candidates whose key
//! trend falls below `epsilon` survive; the one with the most negative key
//! trend wins, and the feature whose trend rises most is the hidden feature.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{main_effect_evaluator, Attributable, AttributionConfig, BackgroundSet, MainEffectFn};
use crate::data::{Dataset, FeatureSchema};
use crate::density::{CopulaModel, PlausibilityBand};
use crate::evaluation::{self, EvaluationScores};
use crate::models::ProbabilityModel;
use crate::moo::{self, Anchor, Evaluation, MooConfig, Problem};
use crate::rng;
use crate::trend::{mann_kendall, TrendResult};
use crate::{Error, Result};

/// Closed interval of admissible key trends, used to generate stimuli of a
/// chosen strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendBand {
    pub low: f64,
    pub high: f64,
}

impl TrendBand {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(-1.0..0.0).contains(&low) || !(-1.0..0.0).contains(&high) || low > high {
            return Err(Error::invalid(format!("trend band [{low}, {high}] must lie inside [-1, 0)")));
        }
        Ok(TrendBand { low, high })
    }

    pub fn contains(&self, tau: f64) -> bool {
        self.low <= tau && tau <= self.high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsfConfig {
    pub epsilon: f64,
    pub theta: f64,
    /// Intermediate points between query and semi-factual.
    pub steps: usize,
    pub moo: MooConfig,
    pub trend_band: Option<TrendBand>,
    pub hidden_min_tau: f64,
    /// Off-key changes smaller than this are undone after the search.
    pub snap_tol: f64,
}

impl Default for IsfConfig {
    fn default() -> Self {
        IsfConfig {
            epsilon: -0.3,
            theta: 1.5,
            steps: 10,
            moo: MooConfig::default(),
            trend_band: None,
            hidden_min_tau: 0.3,
            snap_tol: 1e-3,
        }
    }
}

impl IsfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon < 0.0) {
            return Err(Error::invalid(format!("epsilon must be negative, got {}", self.epsilon)));
        }
        if !(self.theta > 0.0) {
            return Err(Error::invalid(format!("theta must be positive, got {}", self.theta)));
        }
        if self.steps < 3 {
            return Err(Error::invalid(format!("steps must be at least 3, got {}", self.steps)));
        }
        if let Some(b) = self.trend_band {
            TrendBand::new(b.low, b.high)?;
        }
        self.moo.validate()
    }

    /// Gate on the key trend: the band when one is set, else `tau < epsilon`.
    pub fn key_passes(&self, tau: f64) -> bool {
        match self.trend_band {
            Some(b) => b.contains(tau),
            None => tau < self.epsilon,
        }
    }
}

/// Everything the search needs besides the query.
pub struct Context<'a, M: ?Sized> {
    pub schema: &'a [FeatureSchema],
    pub model: &'a M,
    pub copula: &'a CopulaModel,
    pub background: &'a BackgroundSet,
    /// Training split, used by the metrics.
    pub train: &'a Dataset,
    pub attribution: AttributionConfig,
}

impl<M: ProbabilityModel + ?Sized> Context<'_, M> {
    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::Dimension {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query".into()));
        }
        Ok(())
    }
}

/// Change on the key feature.
pub fn objective_o1(x: &[f64], q: &[f64], k: usize) -> f64 {
    (x[k] - q[k]).abs()
}

/// Total change on every other feature.
pub fn objective_o2(x: &[f64], q: &[f64], k: usize) -> f64 {
    x.iter()
        .zip(q)
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, (a, b))| (a - b).abs())
        .sum()
}

/// `0` when `x` keeps the query's predicted class, `1` otherwise.
pub fn constraint_g1<M: ProbabilityModel + ?Sized>(m: &M, x: &[f64], q: &[f64]) -> u8 {
    u8::from(m.class_of(x) != m.class_of(q))
}

/// Straight path from the query (`t = 0`) to the semi-factual (`t = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationPath {
    pub points: Vec<Vec<f64>>,
}

/// `steps + 2` equally spaced points at `t = i / (steps + 1)`.
pub fn build_path(q: &[f64], x_sf: &[f64], steps: usize) -> Result<InterpolationPath> {
    if steps < 1 {
        return Err(Error::invalid("a path needs at least one intermediate point"));
    }
    if q.len() != x_sf.len() {
        return Err(Error::Dimension {
            expected: q.len(),
            got: x_sf.len(),
        });
    }
    let n = steps + 1;
    let points = (0..=n)
        .map(|i| {
            if i == 0 {
                return q.to_vec();
            }
            if i == n {
                return x_sf.to_vec();
            }
            let t = i as f64 / n as f64;
            q.iter().zip(x_sf).map(|(a, b)| (1.0 - t) * a + t * b).collect()
        })
        .collect();
    Ok(InterpolationPath { points })
}

/// Main effects along a path and their trends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionTrace {
    /// Class the effects are oriented toward.
    pub oriented_class: u8,
    /// `effects[p][j]`: main effect of feature `j` at path point `p`.
    pub effects: Vec<Vec<f64>>,
    pub trends: Vec<TrendResult>,
}

impl AttributionTrace {
    pub fn taus(&self) -> Vec<f64> {
        self.trends.iter().map(|t| t.tau).collect()
    }

    pub fn series(&self, j: usize) -> Vec<f64> {
        self.effects.iter().map(|row| row[j]).collect()
    }
}

fn orient(class: u8) -> f64 {
    if class == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Resolution of traced effects. Attribution sums leave round-off near
/// `1e-16`, which would turn a flat series into a spurious trend.
pub const TRACE_RESOLUTION: f64 = 1e-12;

fn denoise(v: f64) -> f64 {
    (v / TRACE_RESOLUTION).round() * TRACE_RESOLUTION
}

/// Trace main effects along `path`, flipping the sign for class-0 queries so
/// that effects always measure support for `query_class`.
pub fn trace_path<M: Attributable + ?Sized>(
    ctx: &Context<'_, M>,
    path: &InterpolationPath,
    query_class: u8,
) -> Result<AttributionTrace> {
    let effects = main_effect_evaluator(ctx.model, ctx.background, &ctx.attribution)?;
    trace_with(&effects, path, query_class)
}

fn trace_with(effects_at: &MainEffectFn<'_>, path: &InterpolationPath, query_class: u8) -> Result<AttributionTrace> {
    let sign = orient(query_class);
    let effects: Vec<Vec<f64>> = path
        .points
        .par_iter()
        .map(|x| Ok(effects_at(x)?.into_iter().map(|v| denoise(sign * v)).collect()))
        .collect::<Result<_>>()?;
    let d = effects.first().map_or(0, Vec::len);
    let trends = (0..d)
        .map(|j| mann_kendall(&effects.iter().map(|row| row[j]).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    Ok(AttributionTrace {
        oriented_class: query_class,
        effects,
        trends,
    })
}

/// A semi-factual together with the evidence for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformativeSemifactual {
    pub query: Vec<f64>,
    pub x_sf: Vec<f64>,
    pub query_class: u8,
    pub key_feature: usize,
    pub hidden_feature: usize,
    pub tau_key: f64,
    pub tau_hidden: f64,
    /// The hidden feature's trend is below `hidden_min_tau`.
    pub hidden_is_weak: bool,
    pub o1: f64,
    pub o2: f64,
    pub log_pdf: f64,
    pub path: InterpolationPath,
    pub trace: AttributionTrace,
    pub metrics: EvaluationScores,
    pub seed: u64,
}

/// What happened for one key feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyDiagnostics {
    pub key_feature: usize,
    pub evaluations: usize,
    pub feasible_seen: usize,
    pub front_size: usize,
    /// Front members that were valid after the clean-up pass and traced.
    pub traced: usize,
    pub passing: usize,
    /// Most negative key trend among traced members.
    pub best_tau_key: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyOutcome {
    pub candidate: Option<InformativeSemifactual>,
    pub diagnostics: KeyDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Found {
        explanation: Box<InformativeSemifactual>,
        diagnostics: Vec<KeyDiagnostics>,
    },
    NotFound {
        reason: String,
        diagnostics: Vec<KeyDiagnostics>,
    },
}

impl Outcome {
    pub fn explanation(&self) -> Option<&InformativeSemifactual> {
        match self {
            Outcome::Found { explanation, .. } => Some(explanation),
            Outcome::NotFound { .. } => None,
        }
    }

    pub fn diagnostics(&self) -> &[KeyDiagnostics] {
        match self {
            Outcome::Found { diagnostics, .. } | Outcome::NotFound { diagnostics, .. } => diagnostics,
        }
    }
}

struct KeyProblem<'a, 'c, M: ?Sized> {
    ctx: &'a Context<'c, M>,
    q: &'a [f64],
    k: usize,
    q_class: u8,
    band: PlausibilityBand,
    /// Range searched on the key gene: one side of the query.
    key_range: (f64, f64),
}

impl<M: ProbabilityModel + ?Sized> KeyProblem<'_, '_, M> {
    fn g2(&self, x: &[f64]) -> f64 {
        self.band.violation(self.ctx.copula.log_pdf(x).unwrap_or(f64::NEG_INFINITY))
    }

    fn is_valid(&self, x: &[f64]) -> bool {
        self.ctx.model.class_of(x) == self.q_class && self.g2(x) == 0.0
    }
}

impl<M: ProbabilityModel + ?Sized> Problem for KeyProblem<'_, '_, M> {
    fn n_vars(&self) -> usize {
        self.q.len()
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![(0.0, 1.0); self.q.len()];
        b[self.k] = self.key_range;
        b
    }

    fn evaluate(&self, x: &[f64]) -> Evaluation {
        let g1 = f64::from(u8::from(self.ctx.model.class_of(x) != self.q_class));
        Evaluation {
            objectives: [-objective_o1(x, self.q, self.k), objective_o2(x, self.q, self.k)],
            violation: g1 + self.g2(x),
        }
    }

    fn repair(&self, x: &mut [f64]) {
        for (v, f) in x.iter_mut().zip(self.ctx.schema) {
            *v = f.snap(*v);
        }
    }

    fn anchor(&self) -> Option<Anchor> {
        Some(Anchor {
            point: self.q.to_vec(),
            free: vec![self.k],
        })
    }
}

fn check_query<M: ProbabilityModel + ?Sized>(ctx: &Context<'_, M>, q: &[f64]) -> Result<()> {
    ctx.check_point(q)?;
    if ctx.model.n_features() != ctx.n_features() || ctx.copula.dim() != ctx.n_features() {
        return Err(Error::invalid("model, density and schema disagree on the feature count"));
    }
    if ctx.n_features() < 2 {
        return Err(Error::NoHiddenFeature);
    }
    Ok(())
}

struct Traced {
    x: Vec<f64>,
    changed: usize,
    o1: f64,
    o2: f64,
    path: InterpolationPath,
    trace: AttributionTrace,
}

/// Index of the largest trend other than `k`, ties to the lowest index.
fn strongest_other(taus: &[f64], k: usize) -> usize {
    (0..taus.len())
        .filter(|&j| j != k)
        .reduce(|a, j| if taus[j] > taus[a] { j } else { a })
        .expect("at least two features")
}

/// Search for a semi-factual that changes feature `k`.
///
/// Candidates passing the key gate are ranked by: a hidden feature reaching
/// `hidden_min_tau` first, then fewer changed features, then the most
/// negative key trend, then a longer key move, then less drift elsewhere.
pub fn explain_for_key<M: Attributable + ?Sized>(
    ctx: &Context<'_, M>,
    q: &[f64],
    k: usize,
    cfg: &IsfConfig,
) -> Result<KeyOutcome> {
    cfg.validate()?;
    check_query(ctx, q)?;
    if k >= ctx.n_features() {
        return Err(Error::invalid(format!("key index {k} out of range")));
    }
    let q_class = ctx.model.class_of(q);
    let band = PlausibilityBand::new(ctx.copula, cfg.theta)?;
    let frozen: Vec<bool> = ctx.schema.iter().map(|f| !f.actionable).collect();
    let seed = rng::child_seed(cfg.moo.seed, k as u64);
    let mut diagnostics = KeyDiagnostics {
        key_feature: k,
        evaluations: 0,
        feasible_seen: 0,
        front_size: 0,
        traced: 0,
        passing: 0,
        best_tau_key: None,
    };

    // Each side of the query is searched separately: a single run keeps only
    // the longer move, which is often the one away from the boundary.
    let mut cleaned: Vec<Vec<f64>> = Vec::new();
    for (side, key_range) in [(0.0, q[k]), (q[k], 1.0)].into_iter().enumerate() {
        if key_range.1 - key_range.0 <= evaluation::CHANGE_TOL {
            continue;
        }
        let problem = KeyProblem {
            ctx,
            q,
            k,
            q_class,
            band,
            key_range,
        };
        let moo_cfg = MooConfig {
            seed: rng::child_seed(seed, side as u64),
            ..cfg.moo
        };
        let run = moo::evolve(&problem, &moo_cfg, &frozen)?;
        diagnostics.evaluations += run.evaluations;
        diagnostics.feasible_seen += run.feasible_seen;
        diagnostics.front_size += run.front.len();

        // undo negligible off-key drift, keeping the raw point if that breaks it
        for c in &run.front {
            let snapped: Vec<f64> = c
                .genome
                .iter()
                .zip(q)
                .enumerate()
                .map(|(i, (&x, &qi))| if i != k && (x - qi).abs() < cfg.snap_tol { qi } else { x })
                .collect();
            let x = if problem.is_valid(&snapped) {
                snapped
            } else if problem.is_valid(&c.genome) {
                c.genome.clone()
            } else {
                continue;
            };
            if objective_o1(&x, q, k) <= evaluation::CHANGE_TOL || cleaned.contains(&x) {
                continue;
            }
            cleaned.push(x);
        }
    }

    // Trace in groups of increasing change count. A candidate with a strong
    // hidden feature outranks everything that changes more features, so
    // once a group yields one the remaining groups cannot win.
    let effects_at = main_effect_evaluator(ctx.model, ctx.background, &ctx.attribution)?;
    let tau_k = |t: &Traced| t.trace.trends[k].tau;
    let weak = |t: &Traced| {
        let taus = t.trace.taus();
        taus[strongest_other(&taus, k)] < cfg.hidden_min_tau
    };
    cleaned.sort_by_key(|x| evaluation::changed_features(q, x));
    let mut traced: Vec<Traced> = Vec::with_capacity(cleaned.len());
    for group in cleaned.chunk_by(|a, b| evaluation::changed_features(q, a) == evaluation::changed_features(q, b)) {
        let batch: Vec<Traced> = group
            .par_iter()
            .map(|x| {
                let path = build_path(q, x, cfg.steps)?;
                let trace = trace_with(&effects_at, &path, q_class)?;
                Ok(Traced {
                    changed: evaluation::changed_features(q, x),
                    o1: objective_o1(x, q, k),
                    o2: objective_o2(x, q, k),
                    x: x.clone(),
                    path,
                    trace,
                })
            })
            .collect::<Result<_>>()?;
        let settled = batch.iter().any(|t| cfg.key_passes(tau_k(t)) && !weak(t));
        traced.extend(batch);
        if settled {
            break;
        }
    }

    let best_tau_key = traced.iter().map(tau_k).reduce(f64::min);
    let mut passing: Vec<&Traced> = traced.iter().filter(|t| cfg.key_passes(tau_k(t))).collect();
    passing.sort_by(|a, b| {
        weak(a)
            .cmp(&weak(b))
            .then(a.changed.cmp(&b.changed))
            .then(tau_k(a).total_cmp(&tau_k(b)))
            .then(b.o1.total_cmp(&a.o1))
            .then(a.o2.total_cmp(&b.o2))
    });
    diagnostics.traced = traced.len();
    diagnostics.passing = passing.len();
    diagnostics.best_tau_key = best_tau_key;
    let candidate = match passing.first() {
        None => None,
        Some(best) => {
            let taus = best.trace.taus();
            let hidden = strongest_other(&taus, k);
            Some(InformativeSemifactual {
                query: q.to_vec(),
                x_sf: best.x.clone(),
                query_class: q_class,
                key_feature: k,
                hidden_feature: hidden,
                tau_key: taus[k],
                tau_hidden: taus[hidden],
                hidden_is_weak: taus[hidden] < cfg.hidden_min_tau,
                o1: best.o1,
                o2: best.o2,
                log_pdf: ctx.copula.log_pdf(&best.x)?,
                path: best.path.clone(),
                trace: best.trace.clone(),
                metrics: evaluation::score(q, &best.x, ctx.train, q_class)?,
                seed,
            })
        }
    };
    Ok(KeyOutcome { candidate, diagnostics })
}

/// Run every actionable key and keep the best candidate under the same
/// ranking as [`explain_for_key`]: strong hidden feature, fewer changed
/// features, most negative key trend, ties to the lowest key index.
pub fn explain<M: Attributable + ?Sized>(ctx: &Context<'_, M>, q: &[f64], cfg: &IsfConfig) -> Result<Outcome> {
    cfg.validate()?;
    check_query(ctx, q)?;
    let keys: Vec<usize> = (0..ctx.n_features()).filter(|&k| ctx.schema[k].actionable).collect();
    if keys.is_empty() {
        return Err(Error::invalid("no actionable feature"));
    }
    let outcomes: Vec<KeyOutcome> = keys
        .par_iter()
        .map(|&k| explain_for_key(ctx, q, k, cfg))
        .collect::<Result<_>>()?;
    let diagnostics: Vec<KeyDiagnostics> = outcomes.iter().map(|o| o.diagnostics.clone()).collect();
    let mut best: Option<InformativeSemifactual> = None;
    for o in outcomes {
        if let Some(c) = o.candidate {
            let rank = |e: &InformativeSemifactual| {
                (e.hidden_is_weak, evaluation::changed_features(&e.query, &e.x_sf))
            };
            let better = best
                .as_ref()
                .is_none_or(|b| (rank(&c), c.tau_key) < (rank(b), b.tau_key));
            if better {
                best = Some(c);
            }
        }
    }
    Ok(match best {
        Some(e) => Outcome::Found {
            explanation: Box::new(e),
            diagnostics,
        },
        None => Outcome::NotFound {
            reason: "no informative semi-factual: no key feature produced a candidate whose trend passes the gate".into(),
            diagnostics,
        },
    })
}

/// Re-check a returned explanation against the model, the density and a
/// fresh trace. Returns the list of broken invariants, empty when sound.
pub fn verify<M: Attributable + ?Sized>(
    ctx: &Context<'_, M>,
    e: &InformativeSemifactual,
    cfg: &IsfConfig,
) -> Result<Vec<String>> {
    let mut broken = Vec::new();
    if ctx.model.class_of(&e.x_sf) != ctx.model.class_of(&e.query) {
        broken.push("class changed".to_string());
    }
    let band = PlausibilityBand::new(ctx.copula, cfg.theta)?;
    if band.violation(ctx.copula.log_pdf(&e.x_sf)?) != 0.0 {
        broken.push("outside the plausibility band".to_string());
    }
    let path = build_path(&e.query, &e.x_sf, cfg.steps)?;
    let trace = trace_path(ctx, &path, ctx.model.class_of(&e.query))?;
    let taus = trace.taus();
    if !cfg.key_passes(taus[e.key_feature]) {
        broken.push(format!("key trend {} fails the gate", taus[e.key_feature]));
    }
    if e.hidden_feature == e.key_feature {
        broken.push("hidden feature equals the key".to_string());
    }
    let max_other = (0..taus.len())
        .filter(|&j| j != e.key_feature)
        .map(|j| taus[j])
        .fold(f64::NEG_INFINITY, f64::max);
    if taus[e.hidden_feature] != max_other {
        broken.push("hidden feature is not the strongest riser".to_string());
    }
    Ok(broken)
}
