//! Comparison semi-factual methods: three retrieval methods that return a
//! training row (MDN, KLEOR Attr-Sim, Local-Region) and one generator (DSER)
//! that searches with the NSGA-II engine in single-objective mode.
//!
//! Every method returns `Ok(None)` when it has no valid candidate, i.e. no
//! point that keeps the model's class for the query. Rows identical to the
//! query are never candidates since they explain nothing.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSchema};
use crate::evaluation::{changed_features, EvaluationScores, CHANGE_TOL};
use crate::models::{fit_logistic, ProbabilityModel};
use crate::moo::{self, Anchor, Evaluation, MooConfig, Problem};
use crate::rng;
use crate::{Error, Result};

/// Declaration order doubles as the ensemble tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mdn,
    Kleor,
    LocalRegion,
    Dser,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mdn, Method::Kleor, Method::LocalRegion, Method::Dser];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mdn => "mdn",
            Method::Kleor => "kleor",
            Method::LocalRegion => "local_region",
            Method::Dser => "dser",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub method: Method,
    pub x_sf: Vec<f64>,
    /// Method-native score: sfs for MDN, Attr-Sim for KLEOR, surrogate
    /// probability for Local-Region, total loss for DSER.
    pub score: f64,
    pub diagnostics: BTreeMap<String, String>,
}

fn result(method: Method, x_sf: Vec<f64>, score: f64, diagnostics: BTreeMap<String, String>) -> BaselineResult {
    BaselineResult {
        method,
        x_sf,
        score,
        diagnostics,
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn check_query<M: ProbabilityModel + ?Sized>(q: &[f64], train: &Dataset, m: &M) -> Result<()> {
    if q.len() != train.n_features() || m.n_features() != q.len() {
        return Err(Error::Dimension {
            expected: train.n_features(),
            got: q.len(),
        });
    }
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    Ok(())
}

/// Training rows a retrieval method may return: labelled with the query
/// class, predicted as the query class, and not identical to the query.
/// Also returns how many labelled rows failed the prediction check.
fn retrieval_pool<M: ProbabilityModel + ?Sized>(q: &[f64], train: &Dataset, m: &M, class: u8) -> (Vec<usize>, usize) {
    let mut pool = Vec::new();
    let mut rejected = 0;
    for (i, (r, &l)) in train.rows.iter().zip(&train.labels).enumerate() {
        if l != class || changed_features(q, r) == 0 {
            continue;
        }
        if m.class_of(r) == class {
            pool.push(i);
        } else {
            rejected += 1;
        }
    }
    (pool, rejected)
}

/// Population standard deviation of each column.
fn column_std(train: &Dataset) -> Vec<f64> {
    let n = train.len() as f64;
    (0..train.n_features())
        .map(|j| {
            let mean = train.rows.iter().map(|r| r[j]).sum::<f64>() / n;
            (train.rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect()
}

/// Share of a column's standard deviation within which MDN counts numeric
/// values as the same.
pub const MDN_SAME_FRACTION: f64 = 0.2;

/// Semi-factual score of `x` for key `f`: shared features over all
/// features, plus the key difference over the largest key difference in the
/// candidate's Higher or Lower set.
pub fn sfs(q: &[f64], x: &[f64], f: usize, diff_max: f64, same_tol: &[f64]) -> f64 {
    let same = q.iter().zip(x).zip(same_tol).filter(|((a, b), t)| (*a - *b).abs() <= **t).count();
    let diff = (x[f] - q[f]).abs();
    let ratio = if diff_max > 0.0 { diff / diff_max } else { 0.0 };
    same as f64 / q.len() as f64 + ratio
}

/// Most Distant Neighbour: for every feature, score the query-class rows
/// above and below the query on that feature and keep the best overall.
/// Ties go to the lower row index, then the lower feature index.
pub fn mdn<M: ProbabilityModel + ?Sized>(q: &[f64], train: &Dataset, m: &M) -> Result<Option<BaselineResult>> {
    check_query(q, train, m)?;
    let class = m.class_of(q);
    if !train.labels.contains(&class) {
        return Err(Error::invalid(format!("no training rows of query class {class}")));
    }
    let (pool, rejected) = retrieval_pool(q, train, m, class);
    let std = column_std(train);
    let same_tol: Vec<f64> = train
        .schema
        .iter()
        .zip(&std)
        .map(|(s, sd)| if s.is_categorical() { 0.0 } else { MDN_SAME_FRACTION * sd })
        .collect();

    let mut best: Option<(f64, usize, usize, &str)> = None;
    for f in 0..q.len() {
        for (side, higher) in [("higher", true), ("lower", false)] {
            let set: Vec<usize> = pool
                .iter()
                .copied()
                .filter(|&i| {
                    let d = train.rows[i][f] - q[f];
                    if higher {
                        d > CHANGE_TOL
                    } else {
                        d < -CHANGE_TOL
                    }
                })
                .collect();
            let diff_max = set.iter().map(|&i| (train.rows[i][f] - q[f]).abs()).fold(0.0, f64::max);
            for &i in &set {
                let s = sfs(q, &train.rows[i], f, diff_max, &same_tol);
                let wins = match best {
                    None => true,
                    Some((bs, bi, bf, _)) => s > bs || (s == bs && (i, f) < (bi, bf)),
                };
                if wins {
                    best = Some((s, i, f, side));
                }
            }
        }
    }
    Ok(best.map(|(s, i, f, side)| {
        let diagnostics = BTreeMap::from([
            ("row".to_string(), i.to_string()),
            ("key_feature".to_string(), train.schema[f].name.clone()),
            ("set".to_string(), side.to_string()),
            ("rejected_by_model".to_string(), rejected.to_string()),
        ]);
        result(Method::Mdn, train.rows[i].clone(), s, diagnostics)
    }))
}

/// KLEOR Attr-Sim score: similarity to the NUN (negative distance) plus the
/// number of features on which `x` is closer to the query than the NUN is.
/// The two terms are summed unscaled.
pub fn attr_sim(q: &[f64], x: &[f64], nun: &[f64]) -> f64 {
    let closer = (0..q.len()).filter(|&a| (q[a] - x[a]).abs() < (q[a] - nun[a]).abs()).count();
    -euclid(x, nun) + closer as f64
}

/// KLEOR Attr-Sim. The NUN is the nearest training row labelled with the
/// other class; `k_nn` neighbours vote on the query's class as a sanity
/// check that is reported, not enforced.
pub fn kleor_attr_sim<M: ProbabilityModel + ?Sized>(
    q: &[f64],
    train: &Dataset,
    m: &M,
    k_nn: usize,
) -> Result<Option<BaselineResult>> {
    check_query(q, train, m)?;
    if k_nn == 0 {
        return Err(Error::invalid("k_nn must be positive"));
    }
    let [n0, n1] = train.class_counts();
    if n0 == 0 || n1 == 0 {
        return Err(Error::SingleClass);
    }
    let class = m.class_of(q);
    let mut order: Vec<(f64, usize)> = train.rows.iter().enumerate().map(|(i, r)| (euclid(q, r), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let votes1 = order.iter().take(k_nn).filter(|&&(_, i)| train.labels[i] == 1).count();
    let knn_class = u8::from(2 * votes1 > k_nn.min(order.len()));
    let nun_idx = order
        .iter()
        .find(|&&(_, i)| train.labels[i] != class)
        .map(|&(_, i)| i)
        .expect("both classes present");
    let nun = &train.rows[nun_idx];

    let (pool, rejected) = retrieval_pool(q, train, m, class);
    let mut best: Option<(f64, usize)> = None;
    for &i in &pool {
        let s = attr_sim(q, &train.rows[i], nun);
        if best.is_none_or(|(bs, _)| s > bs) {
            best = Some((s, i));
        }
    }
    Ok(best.map(|(s, i)| {
        let diagnostics = BTreeMap::from([
            ("row".to_string(), i.to_string()),
            ("nun_row".to_string(), nun_idx.to_string()),
            ("knn_class".to_string(), knn_class.to_string()),
            ("knn_agrees".to_string(), (knn_class == class).to_string()),
            ("rejected_by_model".to_string(), rejected.to_string()),
        ]);
        result(Method::Kleor, train.rows[i].clone(), s, diagnostics)
    }))
}

/// Settings of the Local-Region surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalRegionConfig {
    pub min_per_class: usize,
    pub l2: f64,
    pub iters: usize,
    pub step: f64,
}

impl Default for LocalRegionConfig {
    fn default() -> Self {
        LocalRegionConfig {
            min_per_class: 200,
            l2: 1e-3,
            iters: 500,
            step: 1.0,
        }
    }
}

/// Local-Region: fit a logistic surrogate on the nearest rows of each class
/// and return the query-class row the surrogate finds most marginal.
pub fn local_region<M: ProbabilityModel + ?Sized>(
    q: &[f64],
    train: &Dataset,
    m: &M,
    cfg: &LocalRegionConfig,
) -> Result<Option<BaselineResult>> {
    check_query(q, train, m)?;
    if cfg.min_per_class == 0 {
        return Err(Error::invalid("min_per_class must be positive"));
    }
    let class = m.class_of(q);
    let mut order: Vec<(f64, usize)> = train.rows.iter().enumerate().map(|(i, r)| (euclid(q, r), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut region: Vec<usize> = Vec::new();
    let mut diagnostics = BTreeMap::new();
    for c in [0u8, 1] {
        let near: Vec<usize> = order
            .iter()
            .filter(|&&(_, i)| train.labels[i] == c)
            .take(cfg.min_per_class)
            .map(|&(_, i)| i)
            .collect();
        if near.len() < cfg.min_per_class {
            diagnostics.insert(
                format!("warning_class_{c}"),
                format!("only {} rows available, wanted {}", near.len(), cfg.min_per_class),
            );
        }
        region.extend(near);
    }
    region.sort_unstable();
    let rows: Vec<Vec<f64>> = region.iter().map(|&i| train.rows[i].clone()).collect();
    let labels: Vec<u8> = region.iter().map(|&i| train.labels[i]).collect();
    let surrogate = fit_logistic(&rows, &labels, cfg.l2, cfg.iters, cfg.step)?;

    let mut best: Option<(f64, usize)> = None;
    let mut rejected = 0;
    for &i in &region {
        let r = &train.rows[i];
        if train.labels[i] != class || changed_features(q, r) == 0 {
            continue;
        }
        if m.class_of(r) != class {
            rejected += 1;
            continue;
        }
        let p1 = surrogate.proba1(r);
        let p = if class == 1 { p1 } else { 1.0 - p1 };
        if best.is_none_or(|(bp, _)| p < bp) {
            best = Some((p, i));
        }
    }
    diagnostics.insert("region_size".into(), region.len().to_string());
    diagnostics.insert("rejected_by_model".into(), rejected.to_string());
    Ok(best.map(|(p, i)| {
        diagnostics.insert("row".into(), i.to_string());
        result(Method::LocalRegion, train.rows[i].clone(), p, diagnostics)
    }))
}

/// DSER loss weights and search settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DserConfig {
    /// Reject threshold on `r(x) = 1 − max class probability`.
    pub theta: f64,
    pub c_feasible: f64,
    pub c_sf: f64,
    pub c_sparse: f64,
    pub c_similar: f64,
    pub c_diverse: f64,
    /// Changed-feature allowance before the sparsity hinge bites.
    pub mu: f64,
    /// Number of diverse runs.
    pub runs: usize,
    /// Genes this close to the query snap back onto it.
    pub snap_tol: f64,
    pub moo: MooConfig,
}

impl Default for DserConfig {
    fn default() -> Self {
        DserConfig {
            theta: 0.4,
            c_feasible: 1.0,
            c_sf: 1.0,
            c_sparse: 1.0,
            c_similar: 1.0,
            c_diverse: 1.0,
            mu: 2.0,
            runs: 4,
            snap_tol: 1e-3,
            moo: MooConfig::default(),
        }
    }
}

/// Reject score: one minus the larger class probability.
pub fn reject_score<M: ProbabilityModel + ?Sized>(m: &M, x: &[f64]) -> f64 {
    let p1 = m.proba1(x);
    1.0 - p1.max(1.0 - p1)
}

/// The four DSER loss terms for a candidate, given `r(q)` and the features
/// already used by earlier runs.
pub fn dser_loss(cfg: &DserConfig, q: &[f64], x: &[f64], r_q: f64, r_x: f64, used: &[bool]) -> f64 {
    let feasible = cfg.c_feasible * (r_x - cfg.theta).max(0.0) + cfg.c_sf * (r_q - r_x).max(0.0);
    let sparse = cfg.c_sparse * (changed_features(q, x) as f64 - cfg.mu).max(0.0);
    let similar = -cfg.c_similar * euclid(x, q);
    let diverse = cfg.c_diverse
        * (0..q.len())
            .filter(|&j| used[j] && (x[j] - q[j]).abs() > CHANGE_TOL)
            .count() as f64;
    feasible + sparse + similar + diverse
}

struct DserProblem<'a, M: ?Sized> {
    m: &'a M,
    schema: &'a [FeatureSchema],
    q: &'a [f64],
    class: u8,
    r_q: f64,
    used: Vec<bool>,
    cfg: &'a DserConfig,
}

impl<M: ProbabilityModel + ?Sized> Problem for DserProblem<'_, M> {
    fn n_vars(&self) -> usize {
        self.q.len()
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(0.0, 1.0); self.q.len()]
    }

    fn evaluate(&self, x: &[f64]) -> Evaluation {
        let r_x = reject_score(self.m, x);
        Evaluation {
            objectives: [dser_loss(self.cfg, self.q, x, self.r_q, r_x, &self.used), 0.0],
            violation: f64::from(self.m.class_of(x) != self.class),
        }
    }

    fn repair(&self, x: &mut [f64]) {
        for ((v, &qi), s) in x.iter_mut().zip(self.q).zip(self.schema) {
            *v = if (*v - qi).abs() < self.cfg.snap_tol { qi } else { s.snap(*v) };
        }
    }

    fn anchor(&self) -> Option<Anchor> {
        // seeds start at the query so mutation explores sparse changes
        Some(Anchor {
            point: self.q.to_vec(),
            free: Vec::new(),
        })
    }
}

/// DSER: several single-objective runs, each penalising features used by
/// the previous outputs. Candidates must keep the query's class and must not
/// be more confident than the query (`r(x) ≥ r(q)`); the one with the lowest
/// loss wins.
pub fn dser<M: ProbabilityModel + ?Sized>(
    q: &[f64],
    m: &M,
    schema: &[FeatureSchema],
    cfg: &DserConfig,
) -> Result<Option<BaselineResult>> {
    if q.len() != schema.len() || m.n_features() != q.len() {
        return Err(Error::Dimension {
            expected: schema.len(),
            got: q.len(),
        });
    }
    if cfg.runs == 0 {
        return Err(Error::invalid("dser needs at least one run"));
    }
    let class = m.class_of(q);
    let r_q = reject_score(m, q);
    let frozen: Vec<bool> = schema.iter().map(|f| !f.actionable).collect();
    let mut used = vec![false; q.len()];
    let mut outputs: Vec<(f64, Vec<f64>, usize)> = Vec::new();
    let mut rejected = 0;
    for run in 0..cfg.runs {
        let problem = DserProblem {
            m,
            schema,
            q,
            class,
            r_q,
            used: used.clone(),
            cfg,
        };
        let moo_cfg = MooConfig {
            seed: rng::child_seed(cfg.moo.seed, run as u64),
            ..cfg.moo
        };
        let front = moo::evolve(&problem, &moo_cfg, &frozen)?.front;
        // the front is sorted by loss, so the first acceptable member is the best
        let pick = front.iter().find(|c| {
            let ok = changed_features(q, &c.genome) > 0
                && m.class_of(&c.genome) == class
                && reject_score(m, &c.genome) >= r_q;
            if !ok {
                rejected += 1;
            }
            ok
        });
        if let Some(c) = pick {
            for (j, u) in used.iter_mut().enumerate() {
                if (c.genome[j] - q[j]).abs() > CHANGE_TOL {
                    *u = true;
                }
            }
            outputs.push((c.objectives[0], c.genome.clone(), run));
        }
    }
    let n_outputs = outputs.len();
    let best = outputs
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
    Ok(best.map(|(loss, x, run)| {
        let diagnostics = BTreeMap::from([
            ("generated".to_string(), "true".to_string()),
            ("run".to_string(), run.to_string()),
            ("outputs".to_string(), n_outputs.to_string()),
            ("rejected".to_string(), rejected.to_string()),
            ("r_query".to_string(), format!("{r_q}")),
        ]);
        result(Method::Dser, x, loss, diagnostics)
    }))
}

/// Settings for running all four methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub k_nn: usize,
    pub local_region: LocalRegionConfig,
    pub dser: DserConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            k_nn: 3,
            local_region: LocalRegionConfig::default(),
            dser: DserConfig::default(),
        }
    }
}

/// Run every method on `q`. Methods without a candidate are left out; the
/// first hard error aborts.
pub fn run_all<M: ProbabilityModel + ?Sized>(
    q: &[f64],
    train: &Dataset,
    m: &M,
    cfg: &BaselineConfig,
) -> Result<Vec<BaselineResult>> {
    let found = [
        mdn(q, train, m)?,
        kleor_attr_sim(q, train, m, cfg.k_nn)?,
        local_region(q, train, m, &cfg.local_region)?,
        dser(q, m, &train.schema, &cfg.dser)?,
    ];
    Ok(found.into_iter().flatten().collect())
}

/// Pick the best of several scored results: each metric is min-max
/// normalised across the results, lower-is-better metrics (plausibility,
/// robustness) are inverted, and the normalised values are summed.
/// Robustness only counts when `use_robustness` is set and every result
/// has it. Ties go to the method order `mdn < kleor < local_region < dser`.
pub fn ensemble_best(scored: &[(Method, EvaluationScores)], use_robustness: bool) -> Option<usize> {
    if scored.is_empty() {
        return None;
    }
    let mut columns: Vec<(Vec<f64>, bool)> = vec![
        (scored.iter().map(|(_, s)| s.distance).collect(), true),
        (scored.iter().map(|(_, s)| s.sparsity).collect(), true),
        (scored.iter().map(|(_, s)| s.plausibility).collect(), false),
        (scored.iter().map(|(_, s)| s.trustworthiness).collect(), true),
    ];
    if use_robustness {
        if let Some(r) = scored.iter().map(|(_, s)| s.robustness).collect::<Option<Vec<f64>>>() {
            columns.push((r, false));
        }
    }
    let mut totals = vec![0.0; scored.len()];
    for (values, higher_better) in &columns {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo <= 0.0 {
            continue;
        }
        for (t, v) in totals.iter_mut().zip(values) {
            let n = (v - lo) / (hi - lo);
            *t += if *higher_better { n } else { 1.0 - n };
        }
    }
    (0..scored.len()).min_by(|&a, &b| {
        totals[b]
            .total_cmp(&totals[a])
            .then(scored[a].0.cmp(&scored[b].0))
            .then(a.cmp(&b))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FnModel;

    fn dataset(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Dataset {
        let d = rows[0].len();
        let schema = (0..d).map(|j| FeatureSchema::numeric(&format!("f{j}"), 0.0, 1.0)).collect();
        Dataset::new("t", schema, rows, labels).unwrap()
    }

    fn scores(distance: f64, sparsity: f64, plausibility: f64, trust: f64) -> EvaluationScores {
        EvaluationScores {
            distance,
            sparsity,
            plausibility,
            trustworthiness: trust,
            robustness: None,
        }
    }

    #[test]
    fn sfs_on_hand_worked_candidate() {
        let q = [1.0, 1.0, 1.0];
        let x = [1.0, 1.0, 5.0];
        let s = sfs(&q, &x, 2, 4.0, &[0.1, 0.1, 0.1]);
        assert!((s - (2.0 / 3.0 + 1.0)).abs() < 1e-12);
        // a candidate equal to the query scores one shared-feature point only
        assert!((sfs(&q, &q, 2, 4.0, &[0.1; 3]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mdn_prefers_far_key_move_and_breaks_ties_by_row() {
        // class 1 everywhere; rows 1 and 2 are mirror images around the query
        let m = FnModel { d: 2, f: |_: &[f64]| 0.9 };
        let rows = vec![vec![0.5, 0.5], vec![0.9, 0.5], vec![0.1, 0.5], vec![0.6, 0.5], vec![0.0, 0.0]];
        let train = dataset(rows, vec![1, 1, 1, 1, 0]);
        let r = mdn(&[0.5, 0.5], &train, &m).unwrap().unwrap();
        assert_eq!(r.diagnostics["row"], "1");
        assert_eq!(r.x_sf, vec![0.9, 0.5]);
    }

    #[test]
    fn kleor_on_a_line() {
        let m = FnModel { d: 1, f: |x: &[f64]| if x[0] < 0.8 { 1.0 } else { 0.0 } };
        let train = dataset(vec![vec![0.2], vec![0.6], vec![0.9]], vec![1, 1, 0]);
        let r = kleor_attr_sim(&[0.1], &train, &m, 3).unwrap().unwrap();
        assert_eq!(r.x_sf, vec![0.6]);
        assert!((r.score - (-0.3 + 1.0)).abs() < 1e-12);
        assert!((attr_sim(&[0.1], &[0.2], &[0.9]) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn local_region_warns_on_truncation_and_returns_marginal_row() {
        let m = FnModel { d: 1, f: |x: &[f64]| if x[0] < 0.5 { 1.0 } else { 0.0 } };
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 19.0]).collect();
        let labels = rows.iter().map(|r| u8::from(r[0] < 0.5)).collect();
        let train = dataset(rows, labels);
        let r = local_region(&[0.05], &train, &m, &LocalRegionConfig::default()).unwrap().unwrap();
        assert!(r.diagnostics.contains_key("warning_class_0"));
        assert!(r.diagnostics.contains_key("warning_class_1"));
        // the class-1 row nearest the boundary
        assert!((r.x_sf[0] - 9.0 / 19.0).abs() < 1e-12);
        assert!(r.score > 0.0 && r.score < 1.0);
    }

    #[test]
    fn local_region_needs_both_classes_in_region() {
        let m = FnModel { d: 1, f: |_: &[f64]| 1.0 };
        let train = dataset(vec![vec![0.2], vec![0.4]], vec![1, 1]);
        assert!(matches!(
            local_region(&[0.1], &train, &m, &LocalRegionConfig::default()),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn dser_loss_terms() {
        let cfg = DserConfig::default();
        let q = [0.5, 0.5, 0.5, 0.5];
        let no_used = [false; 4];
        // query itself: every term is zero
        assert_eq!(dser_loss(&cfg, &q, &q, 0.2, 0.2, &no_used), 0.0);
        // three changes with μ = 2 cost one sparsity unit
        let x = [0.6, 0.6, 0.6, 0.5];
        let d = euclid(&x, &q);
        assert!((dser_loss(&cfg, &q, &x, 0.2, 0.3, &no_used) - (1.0 - d)).abs() < 1e-12);
        // both feasibility hinges inactive at r(x)=0.3, r(q)=0.2, θ=0.4
        let used = [true, false, false, false];
        assert!((dser_loss(&cfg, &q, &x, 0.2, 0.3, &used) - (2.0 - d)).abs() < 1e-12);
    }

    #[test]
    fn dser_keeps_class_and_is_deterministic() {
        let m = FnModel { d: 2, f: |x: &[f64]| 1.0 / (1.0 + (-(8.0 * (0.7 - x[0]))).exp()) };
        let schema = vec![FeatureSchema::numeric("a", 0.0, 1.0), FeatureSchema::numeric("b", 0.0, 1.0)];
        let cfg = DserConfig {
            moo: MooConfig {
                pop_size: 20,
                generations: 20,
                ..MooConfig::default()
            },
            ..DserConfig::default()
        };
        let q = [0.2, 0.5];
        let a = dser(&q, &m, &schema, &cfg).unwrap().unwrap();
        let b = dser(&q, &m, &schema, &cfg).unwrap().unwrap();
        assert_eq!(a, b);
        assert_eq!(m.class_of(&a.x_sf), m.class_of(&q));
        assert!(reject_score(&m, &a.x_sf) >= reject_score(&m, &q));
    }

    #[test]
    fn ensemble_single_dominant_and_ties() {
        assert_eq!(ensemble_best(&[], false), None);
        assert_eq!(ensemble_best(&[(Method::Dser, scores(1.0, 1.0, 0.0, 2.0))], false), Some(0));
        let s = [
            (Method::LocalRegion, scores(0.2, 0.5, 0.3, 1.0)),
            (Method::Dser, scores(0.9, 1.0, 0.1, 3.0)),
        ];
        assert_eq!(ensemble_best(&s, false), Some(1));
        let tie = [
            (Method::Dser, scores(0.5, 0.5, 0.5, 1.0)),
            (Method::Kleor, scores(0.5, 0.5, 0.5, 1.0)),
        ];
        assert_eq!(ensemble_best(&tie, false), Some(1));
    }

    #[test]
    fn robustness_only_counts_behind_the_flag() {
        let mut a = scores(0.5, 0.5, 0.5, 1.0);
        let mut b = scores(0.5, 0.5, 0.5, 1.0);
        a.robustness = Some(3.0);
        b.robustness = Some(0.5);
        let s = [(Method::Mdn, a), (Method::Kleor, b)];
        assert_eq!(ensemble_best(&s, false), Some(0));
        assert_eq!(ensemble_best(&s, true), Some(1));
    }
}
