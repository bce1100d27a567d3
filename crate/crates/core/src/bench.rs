//! Side-by-side benchmark of ISF and the baseline methods on a set of
//! queries: per-query metrics and seesaw verdicts, per-method means and
//! prevalence, and the best-of-ensemble column.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::Attributable;
use crate::baselines::{self, BaselineConfig, Method};
use crate::evaluation::{self, audit_seesaw, EvaluationScores, SeesawThresholds};
use crate::isf::{self, Context, InformativeSemifactual, IsfConfig};
use crate::rng;
use crate::{Error, Result};

/// A method that can appear in a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Explainer {
    Isf,
    Baseline(Method),
}

impl Explainer {
    pub fn name(self) -> &'static str {
        match self {
            Explainer::Isf => "isf",
            Explainer::Baseline(m) => m.name(),
        }
    }

    pub fn all() -> Vec<Explainer> {
        std::iter::once(Explainer::Isf)
            .chain(Method::ALL.into_iter().map(Explainer::Baseline))
            .collect()
    }
}

impl fmt::Display for Explainer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Explainer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Explainer::all()
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}`; expected one of isf, mdn, kleor, local_region, dser")))
    }
}

/// Name used for the best-of-baselines column.
pub const ENSEMBLE: &str = "ensemble_best";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessConfig {
    pub radius: f64,
    pub n_perturb: usize,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        RobustnessConfig {
            radius: 0.05,
            n_perturb: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub methods: Vec<Explainer>,
    pub isf: IsfConfig,
    pub baselines: BaselineConfig,
    pub seesaw: SeesawThresholds,
    /// Also score robustness and let it count in the ensemble. Costly: every
    /// method is re-run on each perturbation.
    pub robustness: Option<RobustnessConfig>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            methods: Explainer::all(),
            isf: IsfConfig::default(),
            baselines: BaselineConfig::default(),
            seesaw: SeesawThresholds::default(),
            robustness: None,
            seed: 0,
        }
    }
}

/// One table row. Query rows describe one method on one query; aggregate
/// rows summarise a method over all queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub level: String,
    pub method: String,
    pub query_index: Option<usize>,
    /// For the ensemble column, the method whose result was chosen.
    pub chosen: Option<String>,
    /// Queries attempted (aggregates) or 1.
    pub queries: usize,
    /// Queries with a result.
    pub found: usize,
    /// Share of results with the seesaw pattern, in percent (aggregates),
    /// or 100/0 for a single result.
    pub seesaw: Option<f64>,
    pub key_feature: Option<usize>,
    pub tau_key: Option<f64>,
    pub tau_hidden: Option<f64>,
    pub distance: Option<f64>,
    pub sparsity: Option<f64>,
    pub plausibility: Option<f64>,
    pub trustworthiness: Option<f64>,
    pub robustness: Option<f64>,
}

impl BenchRow {
    fn empty(level: &str, method: &str, query_index: Option<usize>) -> Self {
        BenchRow {
            level: level.into(),
            method: method.into(),
            query_index,
            chosen: None,
            queries: 1,
            found: 0,
            seesaw: None,
            key_feature: None,
            tau_key: None,
            tau_hidden: None,
            distance: None,
            sparsity: None,
            plausibility: None,
            trustworthiness: None,
            robustness: None,
        }
    }

    fn fill(&mut self, s: &EvaluationScores, v: &evaluation::SeesawVerdict) {
        self.found = 1;
        self.seesaw = Some(if v.has_seesaw { 100.0 } else { 0.0 });
        self.key_feature = Some(v.key_index);
        self.tau_key = Some(v.tau_key);
        self.tau_hidden = Some(v.tau_best_hidden);
        self.distance = Some(s.distance);
        self.sparsity = Some(s.sparsity);
        self.plausibility = Some(s.plausibility);
        self.trustworthiness = Some(s.trustworthiness);
        self.robustness = s.robustness;
    }
}

/// Everything produced for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query_index: usize,
    /// Rows in method order, then the ensemble row when baselines ran.
    pub rows: Vec<BenchRow>,
    #[serde(skip)]
    pub isf: Option<InformativeSemifactual>,
    #[serde(skip)]
    pub baselines: Vec<baselines::BaselineResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub queries: Vec<QueryResult>,
    pub aggregates: Vec<BenchRow>,
}

impl BenchReport {
    /// Query rows followed by aggregate rows.
    pub fn rows(&self) -> Vec<BenchRow> {
        self.queries
            .iter()
            .flat_map(|q| q.rows.iter().cloned())
            .chain(self.aggregates.iter().cloned())
            .collect()
    }

    pub fn aggregate(&self, method: &str) -> Option<&BenchRow> {
        self.aggregates.iter().find(|r| r.method == method)
    }
}

fn isf_cfg(cfg: &BenchConfig, qi: usize) -> IsfConfig {
    let mut c = cfg.isf;
    c.moo.seed = rng::child_seed(rng::child_seed(cfg.seed, qi as u64), 0);
    c
}

fn baseline_cfg(cfg: &BenchConfig, qi: usize) -> BaselineConfig {
    let mut c = cfg.baselines;
    c.dser.moo.seed = rng::child_seed(rng::child_seed(cfg.seed, qi as u64), 1);
    c
}

fn run_baseline<M: Attributable + ?Sized>(
    ctx: &Context<'_, M>,
    method: Method,
    x: &[f64],
    cfg: &BaselineConfig,
) -> Result<Option<baselines::BaselineResult>> {
    match method {
        Method::Mdn => baselines::mdn(x, ctx.train, ctx.model),
        Method::Kleor => baselines::kleor_attr_sim(x, ctx.train, ctx.model, cfg.k_nn),
        Method::LocalRegion => baselines::local_region(x, ctx.train, ctx.model, &cfg.local_region),
        Method::Dser => baselines::dser(x, ctx.model, ctx.schema, &cfg.dser),
    }
}

fn robustness_of<F>(explain_at: F, q: &[f64], rc: &RobustnessConfig, seed: u64) -> Result<f64>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    Ok(evaluation::metric_robustness(explain_at, q, rc.radius, rc.n_perturb, seed)?.value)
}

fn bench_query<M: Attributable + ?Sized>(ctx: &Context<'_, M>, qi: usize, q: &[f64], cfg: &BenchConfig) -> Result<QueryResult> {
    let class = ctx.model.class_of(q);
    let steps = cfg.isf.steps;
    let robust_seed = rng::child_seed(rng::child_seed(cfg.seed, qi as u64), 2);
    let mut rows = Vec::new();
    let mut isf_found = None;
    let mut found_baselines = Vec::new();
    let mut scored: Vec<(Method, EvaluationScores, evaluation::SeesawVerdict)> = Vec::new();

    for &method in &cfg.methods {
        let mut row = BenchRow::empty("query", method.name(), Some(qi));
        match method {
            Explainer::Isf => {
                let icfg = isf_cfg(cfg, qi);
                if let Some(e) = isf::explain(ctx, q, &icfg)?.explanation() {
                    let mut s = e.metrics;
                    if let Some(rc) = &cfg.robustness {
                        let at = |x: &[f64]| {
                            isf::explain(ctx, x, &icfg).ok().and_then(|o| o.explanation().map(|e| e.x_sf.clone()))
                        };
                        s.robustness = Some(robustness_of(at, q, rc, robust_seed)?);
                    }
                    let v = audit_seesaw(ctx, q, &e.x_sf, steps, &cfg.seesaw)?;
                    row.fill(&s, &v);
                    isf_found = Some(e.clone());
                }
            }
            Explainer::Baseline(m) => {
                let bcfg = baseline_cfg(cfg, qi);
                if let Some(r) = run_baseline(ctx, m, q, &bcfg)? {
                    let mut s = evaluation::score(q, &r.x_sf, ctx.train, class)?;
                    if let Some(rc) = &cfg.robustness {
                        let at = |x: &[f64]| run_baseline(ctx, m, x, &bcfg).ok().flatten().map(|r| r.x_sf);
                        s.robustness = Some(robustness_of(at, q, rc, robust_seed)?);
                    }
                    let v = audit_seesaw(ctx, q, &r.x_sf, steps, &cfg.seesaw)?;
                    row.fill(&s, &v);
                    scored.push((m, s, v));
                    found_baselines.push(r);
                }
            }
        }
        rows.push(row);
    }

    if cfg.methods.iter().any(|m| matches!(m, Explainer::Baseline(_))) {
        let mut row = BenchRow::empty("query", ENSEMBLE, Some(qi));
        let pairs: Vec<(Method, EvaluationScores)> = scored.iter().map(|(m, s, _)| (*m, *s)).collect();
        if let Some(i) = baselines::ensemble_best(&pairs, cfg.robustness.is_some()) {
            let (m, s, v) = &scored[i];
            row.fill(s, v);
            row.chosen = Some(m.name().into());
        }
        rows.push(row);
    }
    Ok(QueryResult {
        query_index: qi,
        rows,
        isf: isf_found,
        baselines: found_baselines,
    })
}

fn mean(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let xs: Vec<f64> = v.flatten().collect();
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

fn aggregate(method: &str, rows: &[&BenchRow]) -> BenchRow {
    let mut a = BenchRow::empty("aggregate", method, None);
    a.queries = rows.len();
    a.found = rows.iter().map(|r| r.found).sum();
    a.seesaw = mean(rows.iter().map(|r| r.seesaw));
    a.tau_key = mean(rows.iter().map(|r| r.tau_key));
    a.tau_hidden = mean(rows.iter().map(|r| r.tau_hidden));
    a.distance = mean(rows.iter().map(|r| r.distance));
    a.sparsity = mean(rows.iter().map(|r| r.sparsity));
    a.plausibility = mean(rows.iter().map(|r| r.plausibility));
    a.trustworthiness = mean(rows.iter().map(|r| r.trustworthiness));
    a.robustness = mean(rows.iter().map(|r| r.robustness));
    a
}

/// Run the benchmark. Queries are processed in parallel with per-query
/// seeds; output order follows the query order.
pub fn run_bench<M: Attributable + ?Sized>(ctx: &Context<'_, M>, queries: &[Vec<f64>], cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.methods.is_empty() {
        return Err(Error::invalid("no methods selected"));
    }
    cfg.isf.validate()?;
    let results: Vec<QueryResult> = queries
        .par_iter()
        .enumerate()
        .map(|(qi, q)| bench_query(ctx, qi, q, cfg))
        .collect::<Result<_>>()?;
    let mut names: Vec<&str> = cfg.methods.iter().map(|m| m.name()).collect();
    if cfg.methods.iter().any(|m| matches!(m, Explainer::Baseline(_))) {
        names.push(ENSEMBLE);
    }
    let aggregates = names
        .iter()
        .map(|name| {
            let rows: Vec<&BenchRow> = results
                .iter()
                .flat_map(|r| r.rows.iter())
                .filter(|r| r.method == *name)
                .collect();
            aggregate(name, &rows)
        })
        .collect();
    Ok(BenchReport {
        queries: results,
        aggregates,
    })
}
