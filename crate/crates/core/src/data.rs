//! Tabular data: schemas, encoding, CSV ingestion, splits and the synthetic
//! loan scenario.
//!
//! Every feature is mapped into `[0, 1]`. Numeric features use the bounds
//! declared in the schema (not the observed range) so that points generated
//! outside the sample stay encodable. Categorical features are replaced by
//! frequency-rank ordinal codes (most frequent category first) and then
//! scaled by `1 / (categories - 1)`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

fn default_true() -> bool {
    true
}

/// One column of the feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub name: String,
    pub kind: FeatureKind,
    /// Lower bound in raw units (numeric features only).
    #[serde(default)]
    pub lower: f64,
    /// Upper bound in raw units (numeric features only).
    #[serde(default)]
    pub upper: f64,
    /// Category labels. After ingestion the order is the code order, so
    /// `categories[i]` encodes to `i / (len - 1)`.
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default = "default_true")]
    pub actionable: bool,
}

/// A cell in raw (user-facing) units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Number(f64),
    Category(String),
}

impl fmt::Display for RawValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawValue::Number(v) => write!(f, "{v}"),
            RawValue::Category(c) => f.write_str(c),
        }
    }
}

impl FeatureSchema {
    pub fn numeric(name: &str, lower: f64, upper: f64) -> Self {
        FeatureSchema {
            name: name.to_string(),
            kind: FeatureKind::Numeric,
            lower,
            upper,
            categories: Vec::new(),
            actionable: true,
        }
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        FeatureSchema {
            name: name.to_string(),
            kind: FeatureKind::Categorical,
            lower: 0.0,
            upper: 0.0,
            categories: categories.iter().map(|c| c.to_string()).collect(),
            actionable: true,
        }
    }

    pub fn with_actionable(mut self, actionable: bool) -> Self {
        self.actionable = actionable;
        self
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == FeatureKind::Categorical
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Schema("feature with empty name".into()));
        }
        match self.kind {
            FeatureKind::Numeric => {
                if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
                    return Err(Error::Schema(format!(
                        "`{}` needs finite bounds with lower < upper",
                        self.name
                    )));
                }
            }
            FeatureKind::Categorical => {
                if self.categories.is_empty() {
                    return Err(Error::Schema(format!("`{}` has no categories", self.name)));
                }
                let mut seen = std::collections::HashSet::new();
                for c in &self.categories {
                    if !seen.insert(c.as_str()) {
                        return Err(Error::Schema(format!(
                            "`{}` lists category `{c}` twice",
                            self.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn code_scale(&self) -> f64 {
        (self.categories.len().max(2) - 1) as f64
    }

    /// Encode a raw value into `[0, 1]`.
    pub fn encode(&self, raw: &RawValue) -> std::result::Result<f64, String> {
        match (self.kind, raw) {
            (FeatureKind::Numeric, RawValue::Number(v)) => {
                if !v.is_finite() {
                    return Err(format!("non-finite value {v}"));
                }
                if *v < self.lower || *v > self.upper {
                    return Err(format!(
                        "value {v} outside declared bounds [{}, {}]",
                        self.lower, self.upper
                    ));
                }
                Ok((v - self.lower) / (self.upper - self.lower))
            }
            (FeatureKind::Categorical, RawValue::Category(c)) => self
                .categories
                .iter()
                .position(|x| x == c)
                .map(|i| i as f64 / self.code_scale())
                .ok_or_else(|| format!("unknown category `{c}`")),
            (FeatureKind::Categorical, RawValue::Number(v)) => {
                // numeric-looking category labels
                self.encode(&RawValue::Category(format_number(*v)))
            }
            (FeatureKind::Numeric, RawValue::Category(c)) => Err(format!("`{c}` is not a number")),
        }
    }

    /// Parse a CSV/JSON cell as this feature's raw type.
    pub fn parse(&self, cell: &str) -> std::result::Result<RawValue, String> {
        let cell = cell.trim();
        if cell.is_empty() {
            return Err("missing value".into());
        }
        match self.kind {
            FeatureKind::Numeric => cell
                .parse::<f64>()
                .map(RawValue::Number)
                .map_err(|_| format!("cannot parse `{cell}` as a number")),
            FeatureKind::Categorical => Ok(RawValue::Category(cell.to_string())),
        }
    }

    /// Map an encoded value back to raw units. Categorical values snap to
    /// the nearest code.
    pub fn decode(&self, v: f64) -> RawValue {
        match self.kind {
            FeatureKind::Numeric => RawValue::Number(self.lower + v * (self.upper - self.lower)),
            FeatureKind::Categorical => {
                let i = self.snap_index(v);
                RawValue::Category(self.categories[i].clone())
            }
        }
    }

    fn snap_index(&self, v: f64) -> usize {
        let n = self.categories.len();
        if n <= 1 {
            return 0;
        }
        let i = (v.clamp(0.0, 1.0) * self.code_scale()).round() as usize;
        i.min(n - 1)
    }

    /// Nearest valid encoded value (identity for numeric features).
    pub fn snap(&self, v: f64) -> f64 {
        match self.kind {
            FeatureKind::Numeric => v.clamp(0.0, 1.0),
            FeatureKind::Categorical => self.snap_index(v) as f64 / self.code_scale(),
        }
    }
}

fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Encoded, normalized, binary-labelled tabular data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub schema: Vec<FeatureSchema>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl Dataset {
    /// Build a dataset from encoded rows, checking the invariants.
    pub fn new(
        name: impl Into<String>,
        schema: Vec<FeatureSchema>,
        rows: Vec<Vec<f64>>,
        labels: Vec<u8>,
    ) -> Result<Self> {
        let d = Dataset {
            name: name.into(),
            schema,
            rows,
            labels,
        };
        d.validate()?;
        Ok(d)
    }

    /// Encode raw rows. Categories are re-ordered by descending frequency
    /// (ties keep the declared order) before codes are assigned.
    pub fn from_raw(
        name: impl Into<String>,
        mut schema: Vec<FeatureSchema>,
        raw: &[Vec<RawValue>],
        labels: Vec<u8>,
    ) -> Result<Self> {
        for f in &schema {
            f.validate()?;
        }
        for (j, f) in schema.iter_mut().enumerate() {
            if !f.is_categorical() {
                continue;
            }
            let mut counts: HashMap<&str, usize> = HashMap::new();
            for row in raw {
                if let RawValue::Category(c) = &row[j] {
                    *counts.entry(c.as_str()).or_default() += 1;
                }
            }
            let mut order: Vec<(usize, String)> = f
                .categories
                .iter()
                .map(|c| (counts.get(c.as_str()).copied().unwrap_or(0), c.clone()))
                .collect();
            // stable: equal counts keep declared order
            order.sort_by(|a, b| b.0.cmp(&a.0));
            f.categories = order.into_iter().map(|(_, c)| c).collect();
        }
        let mut rows = Vec::with_capacity(raw.len());
        for (i, r) in raw.iter().enumerate() {
            if r.len() != schema.len() {
                return Err(Error::Dimension {
                    expected: schema.len(),
                    got: r.len(),
                });
            }
            let mut enc = Vec::with_capacity(r.len());
            for (f, v) in schema.iter().zip(r) {
                enc.push(f.encode(v).map_err(|message| Error::Cell {
                    row: i + 1,
                    column: f.name.clone(),
                    message,
                })?);
            }
            rows.push(enc);
        }
        Dataset::new(name, schema, rows, labels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() != self.labels.len() {
            return Err(Error::invalid(format!(
                "{} rows but {} labels",
                self.rows.len(),
                self.labels.len()
            )));
        }
        for f in &self.schema {
            f.validate()?;
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != self.schema.len() {
                return Err(Error::Dimension {
                    expected: self.schema.len(),
                    got: r.len(),
                });
            }
            for (v, f) in r.iter().zip(&self.schema) {
                if !(0.0..=1.0).contains(v) {
                    return Err(Error::Cell {
                        row: i + 1,
                        column: f.name.clone(),
                        message: format!("encoded value {v} outside [0, 1]"),
                    });
                }
            }
        }
        if let Some(l) = self.labels.iter().find(|&&l| l > 1) {
            return Err(Error::invalid(format!("label {l} is not binary")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0, 0];
        for &l in &self.labels {
            c[l as usize] += 1;
        }
        c
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            schema: self.schema.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|f| f.name == name)
    }

    /// Encode one raw row against this dataset's schema.
    pub fn encode_row(&self, raw: &[RawValue]) -> Result<Vec<f64>> {
        encode_row(&self.schema, raw)
    }

    pub fn decode_row(&self, x: &[f64]) -> Vec<RawValue> {
        decode_row(&self.schema, x)
    }

    /// SHA-256 over the schema, encoded rows and labels.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(schema_hash(&self.schema).as_bytes());
        for (r, l) in self.rows.iter().zip(&self.labels) {
            for v in r {
                h.update(v.to_le_bytes());
            }
            h.update([*l]);
        }
        hex::encode(h.finalize())
    }
}

pub fn encode_row(schema: &[FeatureSchema], raw: &[RawValue]) -> Result<Vec<f64>> {
    if raw.len() != schema.len() {
        return Err(Error::Dimension {
            expected: schema.len(),
            got: raw.len(),
        });
    }
    schema
        .iter()
        .zip(raw)
        .map(|(f, v)| {
            f.encode(v).map_err(|message| Error::Cell {
                row: 1,
                column: f.name.clone(),
                message,
            })
        })
        .collect()
}

pub fn decode_row(schema: &[FeatureSchema], x: &[f64]) -> Vec<RawValue> {
    schema.iter().zip(x).map(|(f, &v)| f.decode(v)).collect()
}

/// SHA-256 of the canonical JSON form of a schema.
pub fn schema_hash(schema: &[FeatureSchema]) -> String {
    let json = serde_json::to_string(schema).expect("schema serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

pub fn load_schema(path: &Path) -> Result<Vec<FeatureSchema>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let schema: Vec<FeatureSchema> = serde_json::from_str(&text)?;
    if schema.is_empty() {
        return Err(Error::Schema("schema lists no features".into()));
    }
    for f in &schema {
        f.validate()?;
    }
    Ok(schema)
}

/// Read a CSV file whose header names every schema feature plus exactly one
/// extra column holding the 0/1 label.
pub fn load_csv(path: &Path, schema_path: &Path) -> Result<Dataset> {
    let schema = load_schema(schema_path)?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(name, schema, file)
}

pub fn read_csv<R: std::io::Read>(
    name: impl Into<String>,
    schema: Vec<FeatureSchema>,
    reader: R,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut cols = Vec::with_capacity(schema.len());
    for f in &schema {
        let c = header
            .iter()
            .position(|h| *h == f.name)
            .ok_or_else(|| Error::Cell {
                row: 0,
                column: f.name.clone(),
                message: "missing column".into(),
            })?;
        cols.push(c);
    }
    let extra: Vec<usize> = (0..header.len()).filter(|c| !cols.contains(c)).collect();
    let label_col = match extra.as_slice() {
        [c] => *c,
        [] => {
            return Err(Error::Cell {
                row: 0,
                column: "label".into(),
                message: "missing label column".into(),
            })
        }
        many => {
            let names: Vec<&str> = many.iter().map(|&c| header[c].as_str()).collect();
            return Err(Error::Schema(format!(
                "expected one label column besides the features, found {names:?}"
            )));
        }
    };

    let mut raw = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let mut vals = Vec::with_capacity(schema.len());
        for (f, &c) in schema.iter().zip(&cols) {
            let cell = rec.get(c).unwrap_or("");
            let v = f.parse(cell).map_err(|message| Error::Cell {
                row,
                column: f.name.clone(),
                message,
            })?;
            // bounds and category membership are checked here so the error
            // carries the CSV coordinates
            f.encode(&v).map_err(|message| Error::Cell {
                row,
                column: f.name.clone(),
                message,
            })?;
            vals.push(v);
        }
        let cell = rec.get(label_col).unwrap_or("").trim();
        let label = match cell.parse::<f64>() {
            Ok(v) if v == 0.0 => 0,
            Ok(v) if v == 1.0 => 1,
            _ => {
                return Err(Error::Cell {
                    row,
                    column: header[label_col].clone(),
                    message: format!("label `{cell}` is not 0 or 1"),
                })
            }
        };
        raw.push(vals);
        labels.push(label);
    }
    Dataset::from_raw(name, schema, &raw, labels)
}

/// Write a dataset back to CSV in raw units with a trailing `label` column.
pub fn write_csv<W: std::io::Write>(d: &Dataset, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = d.schema.iter().map(|f| f.name.as_str()).collect();
    header.push("label");
    wtr.write_record(&header)?;
    for (r, l) in d.rows.iter().zip(&d.labels) {
        let mut rec: Vec<String> = d.decode_row(r).iter().map(|v| v.to_string()).collect();
        rec.push(l.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub test_fraction: f64,
}

/// Stratified train/test partition. Each class contributes
/// `round(n_c * test_fraction)` rows to the test side, clamped so both sides
/// keep at least one member. Row order within each side follows the input.
pub fn split(d: &Dataset, s: SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(s.test_fraction > 0.0 && s.test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test fraction {} not in (0, 1)",
            s.test_fraction
        )));
    }
    if d.len() < 2 {
        return Err(Error::invalid("need at least two rows to split"));
    }
    let mut rng = rng::stream(s.seed);
    let mut test = Vec::new();
    for class in 0..2u8 {
        let mut idx: Vec<usize> = (0..d.len()).filter(|&i| d.labels[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 2 {
            return Err(Error::invalid(format!(
                "class {class} has fewer than 2 members"
            )));
        }
        idx.shuffle(&mut rng);
        let k = ((idx.len() as f64 * s.test_fraction).round() as usize).clamp(1, idx.len() - 1);
        test.extend_from_slice(&idx[..k]);
    }
    test.sort_unstable();
    let mut is_test = vec![false; d.len()];
    for &i in &test {
        is_test[i] = true;
    }
    let train: Vec<usize> = (0..d.len()).filter(|&i| !is_test[i]).collect();
    Ok((d.subset(&train), d.subset(&test)))
}

/// Ground truth of the synthetic loan scenario.
///
/// The bank accepts when `loan <= LOAN_INTERCEPT + LOAN_SLOPE * credit`
/// (amounts in k$). At a credit score of 550 the limit is 67.5k, so 65k is
/// accepted and 70k is not.
pub mod loan {
    use super::*;

    pub const LOAN: &str = "loan_amount";
    pub const CREDIT: &str = "credit_score";

    pub const LOAN_INTERCEPT: f64 = -42.5;
    pub const LOAN_SLOPE: f64 = 0.2;

    pub fn schema() -> Vec<FeatureSchema> {
        vec![
            FeatureSchema::numeric(LOAN, 0.0, 100.0),
            FeatureSchema::numeric(CREDIT, 300.0, 850.0),
        ]
    }

    /// 1 = accepted.
    pub fn label(loan_k: f64, credit: f64) -> u8 {
        u8::from(loan_k <= LOAN_INTERCEPT + LOAN_SLOPE * credit)
    }

    /// Sample `n` applicants uniformly over the schema box.
    pub fn generate(seed: u64, n: usize) -> Result<Dataset> {
        if n < 50 {
            return Err(Error::invalid(format!("loan scenario needs n >= 50, got {n}")));
        }
        let schema = schema();
        let mut rng = rng::stream(seed);
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let raw: Vec<f64> = schema
                .iter()
                .map(|f| rng.random_range(f.lower..=f.upper))
                .collect();
            labels.push(label(raw[0], raw[1]));
            rows.push(
                schema
                    .iter()
                    .zip(&raw)
                    .map(|(f, &v)| (v - f.lower) / (f.upper - f.lower))
                    .collect(),
            );
        }
        Dataset::new("loan", schema, rows, labels)
    }
}

pub use loan::generate as gen_loan_scenario;

/// Summary of per-class counts, handy for reports.
pub fn class_summary(d: &Dataset) -> BTreeMap<String, usize> {
    let [n0, n1] = d.class_counts();
    BTreeMap::from([("class_0".to_string(), n0), ("class_1".to_string(), n1)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_schema() -> Vec<FeatureSchema> {
        vec![
            FeatureSchema::numeric("amount", 0.0, 100.0),
            FeatureSchema::categorical("grade", &["A", "B", "C"]),
        ]
    }

    #[test]
    fn numeric_midpoint_and_lower_bound() {
        let f = FeatureSchema::numeric("x", 0.0, 100.0);
        assert_eq!(f.encode(&RawValue::Number(50.0)).unwrap(), 0.5);
        assert_eq!(f.encode(&RawValue::Number(0.0)).unwrap(), 0.0);
        assert!(f.encode(&RawValue::Number(100.5)).is_err());
    }

    #[test]
    fn equally_frequent_categories_spread_over_unit_interval() {
        let text = "amount,grade,y\n1,A,0\n2,B,1\n3,C,0\n4,A,1\n5,B,0\n6,C,1\n";
        let d = read_csv("t", csv_schema(), text.as_bytes()).unwrap();
        let codes: Vec<f64> = d.rows.iter().map(|r| r[1]).collect();
        assert_eq!(codes, vec![0.0, 0.5, 1.0, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn most_frequent_category_gets_code_zero() {
        let text = "grade,amount,label\nC,1,0\nC,2,1\nB,3,0\n";
        let d = read_csv("t", csv_schema(), text.as_bytes()).unwrap();
        assert_eq!(d.schema[1].categories, vec!["C", "B", "A"]);
        assert_eq!(d.rows[0], vec![0.01, 0.0]);
        assert_eq!(d.rows[2][1], 0.5);
    }

    #[test]
    fn ingestion_errors_carry_coordinates() {
        let missing = "amount,y\n1,0\n";
        match read_csv("t", csv_schema(), missing.as_bytes()) {
            Err(Error::Cell { column, .. }) => assert_eq!(column, "grade"),
            other => panic!("{other:?}"),
        }
        let bad = "amount,grade,y\n1,A,0\nabc,B,1\n";
        match read_csv("t", csv_schema(), bad.as_bytes()) {
            Err(Error::Cell { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "amount")),
            other => panic!("{other:?}"),
        }
        let out_of_bounds = "amount,grade,y\n101,A,0\n";
        assert!(matches!(
            read_csv("t", csv_schema(), out_of_bounds.as_bytes()),
            Err(Error::Cell { row: 1, .. })
        ));
        let unknown = "amount,grade,y\n1,Z,0\n";
        assert!(read_csv("t", csv_schema(), unknown.as_bytes()).is_err());
        let empty_cell = "amount,grade,y\n,A,0\n";
        assert!(read_csv("t", csv_schema(), empty_cell.as_bytes()).is_err());
    }

    #[test]
    fn schema_rejects_bad_bounds_and_duplicates() {
        assert!(FeatureSchema::numeric("x", 1.0, 1.0).validate().is_err());
        assert!(FeatureSchema::categorical("c", &["a", "a"]).validate().is_err());
        assert!(FeatureSchema::categorical("c", &[]).validate().is_err());
    }

    fn toy(n: usize) -> Dataset {
        let rows = (0..n).map(|i| vec![i as f64 / n as f64]).collect();
        let labels = (0..n).map(|i| (i % 2) as u8).collect();
        Dataset::new("toy", vec![FeatureSchema::numeric("x", 0.0, 1.0)], rows, labels).unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = toy(10);
        let spec = SplitSpec {
            seed: 3,
            test_fraction: 0.2,
        };
        let (tr, te) = split(&d, spec).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        let (tr2, te2) = split(&d, spec).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);
        assert_eq!(te.class_counts(), [1, 1]);
    }

    #[test]
    fn split_rejects_bad_fraction_and_tiny_class() {
        let d = toy(10);
        assert!(split(&d, SplitSpec { seed: 0, test_fraction: 1.0 }).is_err());
        assert!(split(&d, SplitSpec { seed: 0, test_fraction: 0.0 }).is_err());
        let mut lonely = toy(6);
        lonely.labels = vec![0, 0, 0, 0, 0, 1];
        assert!(split(&lonely, SplitSpec { seed: 0, test_fraction: 0.3 }).is_err());
    }

    #[test]
    fn loan_anchors() {
        assert_eq!(loan::label(20.0, 550.0), 1);
        assert_eq!(loan::label(65.0, 550.0), 1);
        assert_eq!(loan::label(70.0, 550.0), 0);
        assert_eq!(loan::label(70.0, 300.0), 0);
        assert_eq!(loan::label(17.0, 700.0), 1);
    }

    #[test]
    fn loan_generator_is_deterministic_and_consistent() {
        let a = gen_loan_scenario(7, 200).unwrap();
        let b = gen_loan_scenario(7, 200).unwrap();
        assert_eq!(a, b);
        assert!(gen_loan_scenario(7, 49).is_err());
        for (r, &l) in a.rows.iter().zip(&a.labels) {
            let raw = a.decode_row(r);
            let (RawValue::Number(loan), RawValue::Number(cs)) = (&raw[0], &raw[1]) else {
                unreachable!()
            };
            assert_eq!(loan::label(*loan, *cs), l);
        }
        let [n0, n1] = a.class_counts();
        assert!(n0 > 0 && n1 > 0);
    }

    #[test]
    fn csv_round_trip_through_writer() {
        let d = gen_loan_scenario(1, 60).unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let back = read_csv("loan", d.schema.clone(), buf.as_slice()).unwrap();
        for (a, b) in d.rows.iter().zip(&back.rows) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert_eq!(d.labels, back.labels);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn numeric_round_trip(lo in -1e4f64..1e4, width in 1e-3f64..1e4, t in 0.0f64..=1.0) {
                let f = FeatureSchema::numeric("x", lo, lo + width);
                let raw = lo + t * width;
                let raw = raw.min(lo + width);
                let enc = f.encode(&RawValue::Number(raw)).unwrap();
                let RawValue::Number(back) = f.decode(enc) else { unreachable!() };
                prop_assert!((back - raw).abs() < 1e-9);
            }

            #[test]
            fn numeric_encoding_is_monotone(a in 0.0f64..100.0, b in 0.0f64..100.0) {
                let f = FeatureSchema::numeric("x", 0.0, 100.0);
                let ea = f.encode(&RawValue::Number(a)).unwrap();
                let eb = f.encode(&RawValue::Number(b)).unwrap();
                prop_assert_eq!(a <= b, ea <= eb);
            }
        }
    }
}
