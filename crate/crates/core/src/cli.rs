//! The commands behind the `semifax` binary: `scenario`, `train`, `explain`,
//! `bench` and `audit`.
//!
//! Every command writes JSON (plus CSV projections for tables) that embeds
//! the tool version, seed, effective configuration and dataset hash. Output
//! contains no timings, so two identical invocations produce identical
//! files. Exit codes: 0 success, 2 usage or validation error, 3 no
//! explanation found.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::attribution::{AttributionConfig, BackgroundSet};
use crate::bench::{self, BenchConfig, BenchRow, Explainer, RobustnessConfig};
use crate::data::{self, Dataset, FeatureSchema, RawValue, SplitSpec};
use crate::density::{fit_copula, CopulaModel};
use crate::evaluation::{audit_seesaw, SeesawThresholds};
use crate::isf::{self, Context, IsfConfig, KeyDiagnostics, Outcome, TrendBand};
use crate::models::{fit_forest, ForestParams, TreeEnsemble};
use crate::{Error, Result};

pub const TOOL_VERSION: &str = concat!("semifax ", env!("CARGO_PKG_VERSION"));

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "SEMIFAX_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NOT_FOUND: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "semifax", version, about = "Informative semi-factual explanations for tabular classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic loan dataset and its schema.
    Scenario(ScenarioArgs),
    /// Fit the forest and density model and save them as an artifact.
    Train(TrainArgs),
    /// Explain one query.
    Explain(ExplainArgs),
    /// Compare ISF with the baselines on many queries.
    Bench(BenchArgs),
    /// Check (query, semi-factual) pairs for the seesaw pattern.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// CSV output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Schema output path; defaults to the CSV path with `.schema.json`.
    #[arg(long)]
    pub schema_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub n_trees: usize,
    #[arg(long, default_value_t = 8)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 2)]
    pub min_leaf: usize,
    #[arg(long, default_value_t = 0.25)]
    pub test_fraction: f64,
    /// Background rows for attribution.
    #[arg(long, default_value_t = 64)]
    pub background: usize,
    /// Display names of class 0 and class 1, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = ["0".to_string(), "1".to_string()])]
    pub class_names: Vec<String>,
}

/// Search flags shared by `explain` and `bench`.
#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, default_value_t = -0.3, allow_negative_numbers = true)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1.5)]
    pub theta: f64,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    #[arg(long, default_value_t = 50)]
    pub pop: usize,
    #[arg(long, default_value_t = 100)]
    pub gens: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Admissible key trend as `low:high`, e.g. `-1:-0.8`.
    #[arg(long, allow_hyphen_values = true)]
    pub trend_band: Option<String>,
}

impl SearchArgs {
    pub fn isf_config(&self) -> Result<IsfConfig> {
        let mut cfg = IsfConfig {
            epsilon: self.epsilon,
            theta: self.theta,
            steps: self.steps,
            ..IsfConfig::default()
        };
        cfg.moo.pop_size = self.pop;
        cfg.moo.generations = self.gens;
        cfg.moo.seed = self.seed;
        cfg.trend_band = self.trend_band.as_deref().map(parse_band).transpose()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Query as a JSON object of raw values keyed by feature name.
    #[arg(long, conflicts_with_all = ["query_csv", "test_index"])]
    pub query: Option<String>,
    /// CSV file of raw queries with a header row.
    #[arg(long, requires = "row")]
    pub query_csv: Option<PathBuf>,
    /// Zero-based data row of `--query-csv`.
    #[arg(long)]
    pub row: Option<usize>,
    /// Row of the artifact's test split.
    #[arg(long)]
    pub test_index: Option<usize>,
    /// Restrict the search to one key feature.
    #[arg(long)]
    pub key: Option<String>,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Queries from this CSV instead of the artifact's test split.
    #[arg(long, requires = "schema")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "isf,mdn,kleor,local_region,dser")]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 100)]
    pub n_queries: usize,
    /// Score robustness and let it count in the ensemble.
    #[arg(long)]
    pub robustness: bool,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with `q_<feature>` and `sf_<feature>` columns in raw units.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

fn parse_band(s: &str) -> Result<TrendBand> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| Error::invalid(format!("trend band `{s}` is not `low:high`")))?;
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| Error::invalid(format!("trend band bound `{t}` is not a number")))
    };
    TrendBand::new(num(lo)?, num(hi)?)
}

/// `good` for bands inside `[-1, -0.8]`, `bad` for bands inside
/// `[-0.6, -0.3]`, `custom` otherwise.
pub fn band_quality(b: &TrendBand) -> &'static str {
    if b.low >= -1.0 && b.high <= -0.8 {
        "good"
    } else if b.low >= -0.6 && b.high <= -0.3 {
        "bad"
    } else {
        "custom"
    }
}

/// Trained model plus everything needed to reproduce and explain with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub tool_version: String,
    pub dataset_name: String,
    pub dataset_hash: String,
    pub schema_hash: String,
    pub class_names: Vec<String>,
    pub split: SplitSpec,
    pub forest_params: ForestParams,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub forest: TreeEnsemble,
    pub copula: CopulaModel,
    pub background: BackgroundSet,
    pub attribution: AttributionConfig,
    pub train: Dataset,
    pub test: Dataset,
}

impl ModelArtifact {
    pub fn fit(
        data: &Dataset,
        split: SplitSpec,
        forest_params: ForestParams,
        background: usize,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if class_names.len() != 2 {
            return Err(Error::invalid("exactly two class names are needed"));
        }
        let (train, test) = data::split(data, split)?;
        let forest = fit_forest(&train, forest_params)?;
        let copula = fit_copula(&train)?;
        let background = BackgroundSet::sample(&train, background, forest_params.seed)?;
        Ok(ModelArtifact {
            tool_version: TOOL_VERSION.into(),
            dataset_name: data.name.clone(),
            dataset_hash: data.hash(),
            schema_hash: data::schema_hash(&data.schema),
            class_names,
            split,
            forest_params,
            train_accuracy: forest.accuracy(&train),
            test_accuracy: forest.accuracy(&test),
            forest,
            copula,
            background,
            attribution: AttributionConfig::default(),
            train,
            test,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let a: ModelArtifact = serde_json::from_str(&text)?;
        if data::schema_hash(&a.train.schema) != a.schema_hash {
            return Err(Error::SchemaHash);
        }
        a.forest.validate()?;
        Ok(a)
    }

    pub fn schema(&self) -> &[FeatureSchema] {
        &self.train.schema
    }

    pub fn context(&self) -> Context<'_, TreeEnsemble> {
        Context {
            schema: &self.train.schema,
            model: &self.forest,
            copula: &self.copula,
            background: &self.background,
            train: &self.train,
            attribution: self.attribution,
        }
    }

    pub fn class_name(&self, c: u8) -> &str {
        &self.class_names[c as usize]
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Raw value for humans: numbers rounded to two decimals.
pub fn display_raw(v: &RawValue) -> String {
    match v {
        RawValue::Number(x) => {
            let s = format!("{x:.2}");
            let s = s.trim_end_matches('0').trim_end_matches('.');
            if s == "-0" {
                "0".into()
            } else {
                s.into()
            }
        }
        RawValue::Category(c) => c.clone(),
    }
}

/// The one-line explanation shown to end users.
pub fn template_sentence(key: &str, value: &str, class: &str, hidden: &str) -> String {
    format!("Even if {key} were {value}, the outcome would still be {class}, because of your {hidden}.")
}

pub fn cmd_scenario(a: &ScenarioArgs) -> Result<()> {
    let d = data::gen_loan_scenario(a.seed, a.n)?;
    let mut buf = Vec::new();
    data::write_csv(&d, &mut buf)?;
    std::fs::write(&a.out, buf).map_err(|e| Error::io(&a.out, e))?;
    let schema_out = a.schema_out.clone().unwrap_or_else(|| a.out.with_extension("schema.json"));
    write_text(&schema_out, &to_json(&d.schema)?)?;
    println!("wrote {} rows to {}", d.len(), a.out.display());
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> Result<ModelArtifact> {
    let d = data::load_csv(&a.data, &a.schema)?;
    let params = ForestParams {
        n_trees: a.n_trees,
        max_depth: a.max_depth,
        min_leaf: a.min_leaf,
        seed: a.seed,
    };
    let split = SplitSpec {
        seed: a.seed,
        test_fraction: a.test_fraction,
    };
    let art = ModelArtifact::fit(&d, split, params, a.background, a.class_names.clone())?;
    write_text(&a.out, &to_json(&art)?)?;
    println!("train_accuracy {:.4}", art.train_accuracy);
    println!("test_accuracy {:.4}", art.test_accuracy);
    Ok(art)
}

/// Per-feature view of a query and its semi-factual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub name: String,
    pub query_raw: RawValue,
    pub query_encoded: f64,
    pub sf_raw: RawValue,
    pub sf_encoded: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub key_feature: String,
    pub hidden_feature: String,
    pub tau_key: f64,
    pub tau_hidden: f64,
    pub hidden_is_weak: bool,
    pub predicted_class: String,
    pub sentence: String,
    pub features: Vec<FeatureReport>,
    pub o1: f64,
    pub o2: f64,
    pub log_pdf: f64,
    pub path: Vec<Vec<f64>>,
    /// Oriented main effects, one row per path point.
    pub trace: Vec<Vec<f64>>,
    pub metrics: crate::evaluation::EvaluationScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainReport {
    pub tool_version: String,
    pub seed: u64,
    pub dataset_hash: String,
    pub schema_hash: String,
    pub parameters: IsfConfig,
    pub attribution: AttributionConfig,
    pub key_restriction: Option<String>,
    pub quality: Option<String>,
    pub query_encoded: Vec<f64>,
    pub status: String,
    pub reason: Option<String>,
    pub explanation: Option<ExplanationReport>,
    pub diagnostics: Vec<KeyDiagnostics>,
}

fn query_from_json(schema: &[FeatureSchema], text: &str) -> Result<Vec<f64>> {
    let obj: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)?;
    for k in obj.keys() {
        if !schema.iter().any(|f| &f.name == k) {
            return Err(Error::Schema(format!("query names unknown feature `{k}`")));
        }
    }
    let raw: Vec<RawValue> = schema
        .iter()
        .map(|f| match obj.get(&f.name) {
            Some(serde_json::Value::Number(n)) => Ok(RawValue::Number(n.as_f64().unwrap_or(f64::NAN))),
            Some(serde_json::Value::String(s)) => f.parse(s).map_err(Error::Schema),
            Some(other) => Err(Error::Schema(format!("feature `{}` has unsupported value {other}", f.name))),
            None => Err(Error::Schema(format!("query is missing feature `{}`", f.name))),
        })
        .collect::<Result<_>>()?;
    data::encode_row(schema, &raw)
}

fn query_from_csv(schema: &[FeatureSchema], path: &Path, row: usize) -> Result<Vec<f64>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let rec = rdr
        .records()
        .nth(row)
        .ok_or_else(|| Error::invalid(format!("{} has no data row {row}", path.display())))??;
    let raw: Vec<RawValue> = schema
        .iter()
        .map(|f| {
            let c = header.iter().position(|h| *h == f.name).ok_or_else(|| Error::Cell {
                row: 0,
                column: f.name.clone(),
                message: "missing column".into(),
            })?;
            f.parse(rec.get(c).unwrap_or("")).map_err(|message| Error::Cell {
                row: row + 1,
                column: f.name.clone(),
                message,
            })
        })
        .collect::<Result<_>>()?;
    data::encode_row(schema, &raw)
}

/// Run `explain`; the boolean is true when an explanation was found.
pub fn cmd_explain(a: &ExplainArgs) -> Result<(ExplainReport, bool)> {
    let art = ModelArtifact::load(&a.model)?;
    let schema = art.schema();
    let q = match (&a.query, &a.query_csv, a.test_index) {
        (Some(text), None, None) => query_from_json(schema, text)?,
        (None, Some(p), None) => query_from_csv(schema, p, a.row.unwrap_or(0))?,
        (None, None, Some(i)) => art
            .test
            .rows
            .get(i)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("test split has {} rows, index {i} requested", art.test.len())))?,
        _ => return Err(Error::invalid("give exactly one of --query, --query-csv or --test-index")),
    };
    let cfg = a.search.isf_config()?;
    let ctx = art.context();
    let outcome = match &a.key {
        None => isf::explain(&ctx, &q, &cfg)?,
        Some(name) => {
            let k = schema
                .iter()
                .position(|f| &f.name == name)
                .ok_or_else(|| Error::invalid(format!("unknown key feature `{name}`")))?;
            let o = isf::explain_for_key(&ctx, &q, k, &cfg)?;
            let diagnostics = vec![o.diagnostics];
            match o.candidate {
                Some(e) => Outcome::Found {
                    explanation: Box::new(e),
                    diagnostics,
                },
                None => Outcome::NotFound {
                    reason: format!("no candidate for key feature `{name}` passes the trend gate"),
                    diagnostics,
                },
            }
        }
    };
    let explanation = outcome.explanation().map(|e| {
        let features = schema
            .iter()
            .enumerate()
            .map(|(j, f)| FeatureReport {
                name: f.name.clone(),
                query_raw: f.decode(q[j]),
                query_encoded: q[j],
                sf_raw: f.decode(e.x_sf[j]),
                sf_encoded: e.x_sf[j],
                tau: e.trace.trends[j].tau,
            })
            .collect::<Vec<_>>();
        let key = &schema[e.key_feature].name;
        let hidden = &schema[e.hidden_feature].name;
        let class = art.class_name(e.query_class).to_string();
        ExplanationReport {
            key_feature: key.clone(),
            hidden_feature: hidden.clone(),
            tau_key: e.tau_key,
            tau_hidden: e.tau_hidden,
            hidden_is_weak: e.hidden_is_weak,
            sentence: template_sentence(key, &display_raw(&features[e.key_feature].sf_raw), &class, hidden),
            predicted_class: class,
            features,
            o1: e.o1,
            o2: e.o2,
            log_pdf: e.log_pdf,
            path: e.path.points.clone(),
            trace: e.trace.effects.clone(),
            metrics: e.metrics,
        }
    });
    let found = explanation.is_some();
    let report = ExplainReport {
        tool_version: TOOL_VERSION.into(),
        seed: cfg.moo.seed,
        dataset_hash: art.dataset_hash.clone(),
        schema_hash: art.schema_hash.clone(),
        parameters: cfg,
        attribution: art.attribution,
        key_restriction: a.key.clone(),
        quality: cfg.trend_band.as_ref().map(|b| band_quality(b).to_string()),
        query_encoded: q,
        status: if found { "found" } else { "not_found" }.into(),
        reason: match &outcome {
            Outcome::NotFound { reason, .. } => Some(reason.clone()),
            Outcome::Found { .. } => None,
        },
        explanation,
        diagnostics: outcome.diagnostics().to_vec(),
    };
    emit(a.out.as_deref(), &to_json(&report)?)?;
    Ok((report, found))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOutput {
    pub tool_version: String,
    pub seed: u64,
    pub dataset_hash: String,
    pub schema_hash: String,
    pub query_source: String,
    pub config: BenchConfig,
    pub warnings: Vec<String>,
    pub rows: Vec<BenchRow>,
}

fn rows_to_csv(rows: &[BenchRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(format!("csv is not UTF-8: {e}")))
}

pub fn cmd_bench(a: &BenchArgs) -> Result<BenchOutput> {
    let methods: Vec<Explainer> = a.methods.iter().map(|m| m.trim().parse()).collect::<Result<_>>()?;
    let art = ModelArtifact::load(&a.model)?;
    let (queries, source, dataset_hash) = match (&a.data, &a.schema) {
        (Some(d), Some(s)) => {
            let ds = data::load_csv(d, s)?;
            if data::schema_hash(&ds.schema) != art.schema_hash {
                return Err(Error::SchemaHash);
            }
            let h = ds.hash();
            (ds.rows, d.display().to_string(), h)
        }
        _ => (art.test.rows.clone(), "artifact test split".to_string(), art.dataset_hash.clone()),
    };
    let mut warnings = Vec::new();
    if a.n_queries > queries.len() {
        let w = format!("asked for {} queries, only {} available", a.n_queries, queries.len());
        eprintln!("warning: {w}");
        warnings.push(w);
    }
    let queries = &queries[..a.n_queries.min(queries.len())];
    let isf = a.search.isf_config()?;
    let mut cfg = BenchConfig {
        methods,
        isf,
        robustness: a.robustness.then(RobustnessConfig::default),
        seed: a.search.seed,
        ..BenchConfig::default()
    };
    cfg.baselines.dser.moo.pop_size = isf.moo.pop_size;
    cfg.baselines.dser.moo.generations = isf.moo.generations;
    let report = bench::run_bench(&art.context(), queries, &cfg)?;
    let out = BenchOutput {
        tool_version: TOOL_VERSION.into(),
        seed: cfg.seed,
        dataset_hash,
        schema_hash: art.schema_hash.clone(),
        query_source: source,
        config: cfg,
        warnings,
        rows: report.rows(),
    };
    let json = to_json(&out)?;
    match &a.out_json {
        Some(p) => write_text(p, &json)?,
        None if a.out_csv.is_none() => print!("{json}"),
        None => {}
    }
    if let Some(p) = &a.out_csv {
        write_text(p, &rows_to_csv(&out.rows)?)?;
    }
    for r in out.rows.iter().filter(|r| r.level == "aggregate") {
        eprintln!(
            "{:<14} found {:>4}/{:<4} seesaw {}",
            r.method,
            r.found,
            r.queries,
            r.seesaw.map_or("-".into(), |s| format!("{s:.1}%"))
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub pair_index: usize,
    pub valid: bool,
    pub has_seesaw: Option<bool>,
    pub key_feature: Option<String>,
    pub tau_key: Option<f64>,
    pub hidden_feature: Option<String>,
    pub tau_best_hidden: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditOutput {
    pub tool_version: String,
    pub dataset_hash: String,
    pub schema_hash: String,
    pub steps: usize,
    pub thresholds: SeesawThresholds,
    pub valid_pairs: usize,
    pub seesaw_pairs: usize,
    /// Percentage of valid pairs with the pattern, one decimal.
    pub seesaw_percentage: Option<f64>,
    pub rows: Vec<AuditRow>,
}

fn read_pairs(schema: &[FeatureSchema], path: &Path) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = |name: String| {
        header.iter().position(|h| *h == name).ok_or_else(|| Error::Cell {
            row: 0,
            column: name,
            message: "missing column".into(),
        })
    };
    let q_cols: Vec<usize> = schema.iter().map(|f| col(format!("q_{}", f.name))).collect::<Result<_>>()?;
    let sf_cols: Vec<usize> = schema.iter().map(|f| col(format!("sf_{}", f.name))).collect::<Result<_>>()?;
    let mut pairs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let side = |cols: &[usize]| -> Result<Vec<f64>> {
            let raw: Vec<RawValue> = schema
                .iter()
                .zip(cols)
                .map(|(f, &c)| {
                    f.parse(rec.get(c).unwrap_or("")).map_err(|message| Error::Cell {
                        row: i + 1,
                        column: header[c].clone(),
                        message,
                    })
                })
                .collect::<Result<_>>()?;
            data::encode_row(schema, &raw)
        };
        pairs.push((side(&q_cols)?, side(&sf_cols)?));
    }
    Ok(pairs)
}

pub fn cmd_audit(a: &AuditArgs) -> Result<AuditOutput> {
    let art = ModelArtifact::load(&a.model)?;
    let schema = art.schema();
    let pairs = read_pairs(schema, &a.pairs)?;
    if pairs.is_empty() {
        return Err(Error::invalid(format!("{} holds no pairs", a.pairs.display())));
    }
    let ctx = art.context();
    let th = SeesawThresholds::default();
    let rows: Vec<AuditRow> = pairs
        .iter()
        .enumerate()
        .map(|(i, (q, sf))| match audit_seesaw(&ctx, q, sf, a.steps, &th) {
            Ok(v) => AuditRow {
                pair_index: i,
                valid: true,
                has_seesaw: Some(v.has_seesaw),
                key_feature: Some(schema[v.key_index].name.clone()),
                tau_key: Some(v.tau_key),
                hidden_feature: Some(schema[v.hidden_index].name.clone()),
                tau_best_hidden: Some(v.tau_best_hidden),
                note: None,
            },
            Err(e) => AuditRow {
                pair_index: i,
                valid: false,
                has_seesaw: None,
                key_feature: None,
                tau_key: None,
                hidden_feature: None,
                tau_best_hidden: None,
                note: Some(e.to_string()),
            },
        })
        .collect();
    let valid = rows.iter().filter(|r| r.valid).count();
    let seesaw = rows.iter().filter(|r| r.has_seesaw == Some(true)).count();
    let pct = (valid > 0).then(|| (1000.0 * seesaw as f64 / valid as f64).round() / 10.0);
    let out = AuditOutput {
        tool_version: TOOL_VERSION.into(),
        dataset_hash: art.dataset_hash.clone(),
        schema_hash: art.schema_hash.clone(),
        steps: a.steps,
        thresholds: th,
        valid_pairs: valid,
        seesaw_pairs: seesaw,
        seesaw_percentage: pct,
        rows,
    };
    let json = to_json(&out)?;
    match &a.out_json {
        Some(p) => write_text(p, &json)?,
        None if a.out_csv.is_none() => print!("{json}"),
        None => {}
    }
    if let Some(p) = &a.out_csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &out.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv buffer: {e}")))?;
        std::fs::write(p, bytes).map_err(|e| Error::io(p, e))?;
    }
    match pct {
        Some(p) => eprintln!("seesaw {p:.1}% ({seesaw}/{valid} valid pairs)"),
        None => eprintln!("no valid pairs"),
    }
    Ok(out)
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n > 0 {
            // a second call in the same process keeps the first pool
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Parse `args` (including the program name), run the command and return
/// the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    configure_threads();
    let result = match &cli.command {
        Command::Scenario(a) => cmd_scenario(a).map(|_| EXIT_OK),
        Command::Train(a) => cmd_train(a).map(|_| EXIT_OK),
        Command::Explain(a) => cmd_explain(a).map(|(_, found)| if found { EXIT_OK } else { EXIT_NOT_FOUND }),
        Command::Bench(a) => cmd_bench(a).map(|_| EXIT_OK),
        Command::Audit(a) => cmd_audit(a).map(|_| EXIT_OK),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_parsing_and_quality() {
        let good = parse_band("-1:-0.8").unwrap();
        assert_eq!(band_quality(&good), "good");
        assert_eq!(band_quality(&parse_band("-0.6:-0.3").unwrap()), "bad");
        assert_eq!(band_quality(&parse_band("-0.9:-0.5").unwrap()), "custom");
        assert!(parse_band("-0.3").is_err());
        assert!(parse_band("-0.2:-0.5").is_err());
    }

    #[test]
    fn defaults_echo_the_documented_settings() {
        let cli = Cli::try_parse_from(["semifax", "explain", "--model", "m.json", "--test-index", "0"]).unwrap();
        let Command::Explain(a) = cli.command else { panic!("wrong command") };
        let cfg = a.search.isf_config().unwrap();
        assert_eq!(cfg.epsilon, -0.3);
        assert_eq!(cfg.theta, 1.5);
        assert_eq!(cfg.steps, 10);
        assert_eq!(cfg.moo.pop_size, 50);
        assert_eq!(cfg.moo.generations, 100);
    }

    #[test]
    fn negative_flags_parse() {
        let cli = Cli::try_parse_from([
            "semifax",
            "explain",
            "--model",
            "m.json",
            "--test-index",
            "0",
            "--epsilon",
            "-0.5",
            "--trend-band",
            "-1:-0.8",
        ])
        .unwrap();
        let Command::Explain(a) = cli.command else { panic!("wrong command") };
        let cfg = a.search.isf_config().unwrap();
        assert_eq!(cfg.epsilon, -0.5);
        assert_eq!(cfg.trend_band, Some(TrendBand { low: -1.0, high: -0.8 }));
    }

    #[test]
    fn sentence_and_raw_display() {
        assert_eq!(display_raw(&RawValue::Number(65.0)), "65");
        assert_eq!(display_raw(&RawValue::Number(64.987)), "64.99");
        assert_eq!(display_raw(&RawValue::Category("M".into())), "M");
        assert_eq!(
            template_sentence("loan_amount", "65", "accepted", "credit_score"),
            "Even if loan_amount were 65, the outcome would still be accepted, because of your credit_score."
        );
    }

    #[test]
    fn unknown_subcommand_is_a_usage_error() {
        assert_eq!(run(["semifax", "frobnicate"]), EXIT_INVALID);
    }

    fn s(p: &Path) -> String {
        p.to_string_lossy().into_owned()
    }

    /// Scenario data plus a small trained artifact in a temp dir.
    fn fixture() -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("loan.csv");
        let model = dir.path().join("model.json");
        assert_eq!(run(["semifax", "scenario", "--n", "300", "--out", &s(&csv)]), EXIT_OK);
        let schema = dir.path().join("loan.schema.json");
        assert!(schema.exists());
        let code = run([
            "semifax", "train", "--data", &s(&csv), "--schema", &s(&schema), "--out", &s(&model),
            "--n-trees", "20", "--class-names", "rejected,accepted",
        ]);
        assert_eq!(code, EXIT_OK);
        (dir, model)
    }

    #[test]
    fn train_explain_and_audit_round_trip() {
        let (dir, model) = fixture();
        let art = ModelArtifact::load(&model).unwrap();
        assert_eq!(art.class_names, ["rejected", "accepted"]);
        assert_eq!(art.test.len(), 75);

        let out = dir.path().join("explain.json");
        let query = r#"{"loan_amount": 20, "credit_score": 550}"#;
        let code = run([
            "semifax", "explain", "--model", &s(&model), "--query", query, "--pop", "20", "--gens", "20",
            "--out", &s(&out),
        ]);
        assert_eq!(code, EXIT_OK);
        let r: ExplainReport = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        let e = r.explanation.expect("found");
        assert!(e.sentence.starts_with("Even if "));
        assert!(e.sentence.contains("accepted"));
        assert_eq!(r.parameters.moo.pop_size, 20);
        assert_eq!(e.features.len(), 2);
        assert_eq!(e.trace.len(), 12);

        // same query and sf: valid; sf on the other side of the boundary: invalid
        let pairs = dir.path().join("pairs.csv");
        let sf = &e.features;
        let text = format!(
            "q_loan_amount,q_credit_score,sf_loan_amount,sf_credit_score\n20,550,{},{}\n20,550,99,300\n",
            display_raw(&sf[0].sf_raw),
            display_raw(&sf[1].sf_raw)
        );
        std::fs::write(&pairs, text).unwrap();
        let aj = dir.path().join("audit.json");
        let ac = dir.path().join("audit.csv");
        let code = run(["semifax", "audit", "--model", &s(&model), "--pairs", &s(&pairs), "--out-json", &s(&aj), "--out-csv", &s(&ac)]);
        assert_eq!(code, EXIT_OK);
        let a: AuditOutput = serde_json::from_str(&std::fs::read_to_string(&aj).unwrap()).unwrap();
        assert_eq!(a.rows.len(), 2);
        assert!(!a.rows[1].valid);
        assert_eq!(a.valid_pairs, 1);
        assert!(std::fs::read_to_string(&ac).unwrap().starts_with("pair_index,"));
    }

    #[test]
    fn exit_codes() {
        let (dir, model) = fixture();
        let m = s(&model);

        // a band no 12-point trend can land in
        let code = run([
            "semifax", "explain", "--model", &m, "--test-index", "0", "--pop", "10", "--gens", "5",
            "--trend-band", "-0.302:-0.301", "--out", &s(&dir.path().join("nf.json")),
        ]);
        assert_eq!(code, EXIT_NOT_FOUND);
        let nf: ExplainReport = serde_json::from_str(&std::fs::read_to_string(dir.path().join("nf.json")).unwrap()).unwrap();
        assert_eq!(nf.status, "not_found");
        assert!(nf.reason.is_some());
        assert_eq!(nf.quality.as_deref(), Some("bad"));

        let missing = dir.path().join("nope.schema.json");
        let csv = dir.path().join("loan.csv");
        let err = cmd_train(&TrainArgs {
            data: csv.clone(),
            schema: missing.clone(),
            out: dir.path().join("x.json"),
            seed: 0,
            n_trees: 5,
            max_depth: 3,
            min_leaf: 2,
            test_fraction: 0.25,
            background: 16,
            class_names: vec!["0".into(), "1".into()],
        })
        .unwrap_err();
        assert!(err.to_string().contains("nope.schema.json"), "{err}");
        assert_eq!(run(["semifax", "train", "--data", &s(&csv), "--schema", &s(&missing), "--out", "x.json"]), EXIT_INVALID);

        assert_eq!(run(["semifax", "bench", "--model", &m, "--methods", "isf,oracle"]), EXIT_INVALID);
        assert_eq!(run(["semifax", "explain", "--model", &m, "--test-index", "9999"]), EXIT_INVALID);
        assert_eq!(run(["semifax", "explain", "--model", &m, "--test-index", "0", "--key", "age"]), EXIT_INVALID);
        assert_eq!(run(["semifax", "explain", "--model", &m, "--test-index", "0", "--theta", "-1"]), EXIT_INVALID);

        let empty = dir.path().join("empty.csv");
        std::fs::write(&empty, "q_loan_amount,q_credit_score,sf_loan_amount,sf_credit_score\n").unwrap();
        assert_eq!(run(["semifax", "audit", "--model", &m, "--pairs", &s(&empty)]), EXIT_INVALID);
    }

    #[test]
    fn bench_warns_on_truncation_and_writes_both_tables() {
        let (dir, model) = fixture();
        let j = dir.path().join("b.json");
        let c = dir.path().join("b.csv");
        let code = run([
            "semifax", "bench", "--model", &s(&model), "--methods", "isf,mdn", "--n-queries", "500", "--pop", "10",
            "--gens", "5", "--out-json", &s(&j), "--out-csv", &s(&c),
        ]);
        assert_eq!(code, EXIT_OK);
        let b: BenchOutput = serde_json::from_str(&std::fs::read_to_string(&j).unwrap()).unwrap();
        assert_eq!(b.warnings.len(), 1);
        let aggregates: Vec<&str> = b.rows.iter().filter(|r| r.level == "aggregate").map(|r| r.method.as_str()).collect();
        assert_eq!(aggregates, ["isf", "mdn", bench::ENSEMBLE]);
        assert_eq!(b.rows.iter().filter(|r| r.level == "query" && r.method == "isf").count(), 75);
        let csv = std::fs::read_to_string(&c).unwrap();
        assert_eq!(csv.lines().count(), 1 + b.rows.len());
    }
}
