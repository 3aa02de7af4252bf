//! Clinical-records CSV ingestion, z-score normalization and seeded
//! (optionally stratified) train/validation/test splitting.

use std::io::{self, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{DenseMatrix, DenseVector};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("missing column `{column}`")]
    MissingColumn { column: String },
    #[error("malformed number {value:?} at line {line}, column `{column}`")]
    MalformedNumber {
        line: usize,
        column: String,
        value: String,
    },
    #[error("label {value:?} at line {line} is not 0 or 1")]
    NonBinaryLabel { line: usize, value: String },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("stratified split needs at least one sample of each class (negatives {negatives}, positives {positives})")]
    InsufficientClassMembers { negatives: usize, positives: usize },
}

/// Column layout of a records file.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    feature_columns: Vec<String>,
    label_column: String,
    /// Raw label value mapped to class 1; must be 0 or 1.
    positive_label: f64,
}

impl Schema {
    pub fn new(
        feature_columns: Vec<String>,
        label_column: impl Into<String>,
    ) -> Result<Self, DataError> {
        Self::with_positive_label(feature_columns, label_column, 1.0)
    }

    pub fn with_positive_label(
        feature_columns: Vec<String>,
        label_column: impl Into<String>,
        positive_label: f64,
    ) -> Result<Self, DataError> {
        let label_column = label_column.into().trim().to_string();
        let feature_columns: Vec<String> = feature_columns
            .into_iter()
            .map(|c| c.trim().to_string())
            .collect();
        if feature_columns.is_empty() {
            return Err(DataError::InvalidSchema("no feature columns".into()));
        }
        if label_column.is_empty() || feature_columns.iter().any(String::is_empty) {
            return Err(DataError::InvalidSchema("empty column name".into()));
        }
        if let Some(c) = feature_columns.iter().find(|c| c.contains(',')) {
            return Err(DataError::InvalidSchema(format!(
                "column name `{c}` contains a comma"
            )));
        }
        if feature_columns.contains(&label_column) {
            return Err(DataError::InvalidSchema(format!(
                "label `{label_column}` is also a feature"
            )));
        }
        for (i, c) in feature_columns.iter().enumerate() {
            if feature_columns[..i].contains(c) {
                return Err(DataError::InvalidSchema(format!("duplicate column `{c}`")));
            }
        }
        if positive_label != 0.0 && positive_label != 1.0 {
            return Err(DataError::InvalidSchema(format!(
                "positive label must be 0 or 1, got {positive_label}"
            )));
        }
        Ok(Self {
            feature_columns,
            label_column,
            positive_label,
        })
    }

    /// Eight-feature subset of the public heart-failure clinical records
    /// file, in the column order of the published sample table.
    pub fn heart_failure() -> Self {
        Self::new(
            [
                "age",
                "anaemia",
                "diabetes",
                "high_blood_pressure",
                "platelets",
                "sex",
                "smoking",
                "time",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            "DEATH_EVENT",
        )
        .expect("static schema is valid")
    }

    pub fn feature_columns(&self) -> &[String] {
        &self.feature_columns
    }

    pub fn label_column(&self) -> &str {
        &self.label_column
    }

    pub fn positive_label(&self) -> f64 {
        self.positive_label
    }

    pub fn num_features(&self) -> usize {
        self.feature_columns.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DenseMatrix,
    /// 0/1 class labels.
    pub y: DenseVector,
    pub schema: Schema,
    /// 1-based line numbers in the source file (header is line 1).
    pub row_ids: Vec<usize>,
}

impl Dataset {
    pub fn new(
        x: DenseMatrix,
        y: DenseVector,
        schema: Schema,
        row_ids: Vec<usize>,
    ) -> Result<Self, DataError> {
        if x.rows() != y.len() || row_ids.len() != y.len() {
            return Err(DataError::SchemaMismatch(format!(
                "{} feature rows, {} labels, {} row ids",
                x.rows(),
                y.len(),
                row_ids.len()
            )));
        }
        if x.cols() != schema.num_features() {
            return Err(DataError::SchemaMismatch(format!(
                "{} feature columns for a schema with {}",
                x.cols(),
                schema.num_features()
            )));
        }
        if let Some(i) = y.iter().position(|&l| l != 0.0 && l != 1.0) {
            return Err(DataError::NonBinaryLabel {
                line: row_ids[i],
                value: y[i].to_string(),
            });
        }
        Ok(Self {
            x,
            y,
            schema,
            row_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&l| l == 1.0).count()
    }

    /// Labels as an `n × 1` target matrix.
    pub fn targets(&self) -> DenseMatrix {
        DenseMatrix::new(self.len(), 1, self.y.as_slice().to_vec()).expect("labels are finite")
    }

    /// Rows selected by position, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(indices),
            y: DenseVector::new(indices.iter().map(|&i| self.y[i]).collect())
                .expect("labels are finite"),
            schema: self.schema.clone(),
            row_ids: indices.iter().map(|&i| self.row_ids[i]).collect(),
        }
    }

    /// Writes the dataset as CSV with 17 significant digits per feature.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut header: Vec<&str> = self
            .schema
            .feature_columns
            .iter()
            .map(String::as_str)
            .collect();
        header.push(&self.schema.label_column);
        writeln!(out, "{}", header.join(","))?;
        let neg = 1.0 - self.schema.positive_label;
        for i in 0..self.len() {
            let mut fields: Vec<String> =
                self.x.row(i).iter().map(|v| format!("{v:.16e}")).collect();
            let raw = if self.y[i] == 1.0 {
                self.schema.positive_label
            } else {
                neg
            };
            fields.push(format!("{raw}"));
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// Features (and optionally labels) parsed from a CSV source.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub x: DenseMatrix,
    pub labels: Option<DenseVector>,
    pub row_ids: Vec<usize>,
}

fn parse_number(field: &str, line: usize, column: &str) -> Result<f64, DataError> {
    let t = field.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DataError::MalformedNumber {
            line,
            column: column.to_string(),
            value: t.to_string(),
        }),
    }
}

/// Parses a CSV with a header line, selecting schema columns by name.
/// The label column is required only when `require_label` is set; when it
/// is present it is always validated.
pub fn read_features<R: Read>(
    input: R,
    schema: &Schema,
    require_label: bool,
) -> Result<FeatureTable, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| DataError::Csv(e.to_string()))?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h == name);

    let mut feature_idx = Vec::with_capacity(schema.num_features());
    for col in &schema.feature_columns {
        feature_idx.push(find(col).ok_or_else(|| DataError::MissingColumn {
            column: col.clone(),
        })?);
    }
    let label_idx = match find(&schema.label_column) {
        Some(i) => Some(i),
        None if require_label => {
            return Err(DataError::MissingColumn {
                column: schema.label_column.clone(),
            })
        }
        None => None,
    };

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut row_ids = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        for (&idx, col) in feature_idx.iter().zip(&schema.feature_columns) {
            let field = record.get(idx).ok_or_else(|| DataError::MalformedNumber {
                line,
                column: col.clone(),
                value: String::new(),
            })?;
            data.push(parse_number(field, line, col)?);
        }
        if let Some(idx) = label_idx {
            let field = record.get(idx).unwrap_or("");
            let raw = field.trim().parse::<f64>().ok();
            let label = match raw {
                Some(v) if v == 0.0 || v == 1.0 => {
                    if v == schema.positive_label {
                        1.0
                    } else {
                        0.0
                    }
                }
                _ => {
                    return Err(DataError::NonBinaryLabel {
                        line,
                        value: field.trim().to_string(),
                    })
                }
            };
            labels.push(label);
        }
        row_ids.push(line);
    }

    let x = DenseMatrix::new(row_ids.len(), schema.num_features(), data)
        .map_err(|e| DataError::Csv(e.to_string()))?;
    let labels = label_idx.map(|_| DenseVector::new(labels).expect("labels are 0/1"));
    Ok(FeatureTable { x, labels, row_ids })
}

pub fn read_csv<R: Read>(input: R, schema: &Schema) -> Result<Dataset, DataError> {
    let table = read_features(input, schema, true)?;
    Dataset::new(
        table.x,
        table.labels.expect("label column required"),
        schema.clone(),
        table.row_ids,
    )
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(io::BufReader::new(file), schema)
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Standard deviation used when dividing; constant columns use 1.
    fn divisor(&self, j: usize) -> f64 {
        if self.std[j] == 0.0 {
            1.0
        } else {
            self.std[j]
        }
    }

    pub fn normalize_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| (v - self.mean[j]) / self.divisor(j))
            .collect()
    }

    pub fn normalize_matrix(&self, x: &DenseMatrix) -> Result<DenseMatrix, DataError> {
        if x.cols() != self.mean.len() {
            return Err(DataError::SchemaMismatch(format!(
                "{} columns, normalization has {}",
                x.cols(),
                self.mean.len()
            )));
        }
        let data = (0..x.rows())
            .flat_map(|i| self.normalize_row(x.row(i)))
            .collect();
        DenseMatrix::new(x.rows(), x.cols(), data).map_err(|e| DataError::Csv(e.to_string()))
    }
}

pub fn fit_normalization(ds: &Dataset) -> Result<NormStats, DataError> {
    if ds.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let n = ds.len() as f64;
    let cols = ds.x.cols();
    let mut mean = vec![0.0; cols];
    for i in 0..ds.len() {
        for (m, v) in mean.iter_mut().zip(ds.x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; cols];
    for i in 0..ds.len() {
        for ((s, v), m) in var.iter_mut().zip(ds.x.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    Ok(NormStats {
        names: ds.schema.feature_columns.clone(),
        mean,
        std: var.into_iter().map(|s| (s / n).sqrt()).collect(),
    })
}

pub fn apply_normalization(ds: &Dataset, stats: &NormStats) -> Result<Dataset, DataError> {
    if stats.names != ds.schema.feature_columns {
        return Err(DataError::SchemaMismatch(format!(
            "normalization fitted on {:?}, dataset has {:?}",
            stats.names, ds.schema.feature_columns
        )));
    }
    Ok(Dataset {
        x: stats.normalize_matrix(&ds.x)?,
        ..ds.clone()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.70,
            val_fraction: 0.15,
            test_fraction: 0.15,
            seed: 0,
            stratified: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let fr = [self.train_fraction, self.val_fraction, self.test_fraction];
        if let Some(f) = fr.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return Err(DataError::InvalidSplit(format!(
                "fractions must lie strictly between 0 and 1, got {f}"
            )));
        }
        let sum: f64 = fr.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidSplit(format!(
                "fractions sum to {sum}, not 1"
            )));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes for `n` rows: floors of each share, with
    /// the leftover rows going one each to validation, then test, then the
    /// rest to training.
    pub fn part_sizes(&self, n: usize) -> (usize, usize, usize) {
        let floor = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
        let (mut train, mut val, mut test) = (
            floor(self.train_fraction),
            floor(self.val_fraction),
            floor(self.test_fraction),
        );
        let mut rest = n.saturating_sub(train + val + test);
        if rest > 0 {
            val += 1;
            rest -= 1;
        }
        if rest > 0 {
            test += 1;
            rest -= 1;
        }
        train += rest;
        (train, val, test)
    }
}

/// Disjoint, exhaustive `(train, val, test)` partition. Each part keeps the
/// source row order.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset), DataError> {
    spec.validate()?;
    if ds.len() < 3 {
        return Err(DataError::InvalidSplit(format!(
            "need at least 3 rows, got {}",
            ds.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut parts: [Vec<usize>; 3] = Default::default();

    let groups: Vec<Vec<usize>> = if spec.stratified {
        let (neg, pos): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| ds.y[i] == 0.0);
        if neg.is_empty() || pos.is_empty() {
            return Err(DataError::InsufficientClassMembers {
                negatives: neg.len(),
                positives: pos.len(),
            });
        }
        vec![neg, pos]
    } else {
        vec![(0..ds.len()).collect()]
    };

    for mut group in groups {
        group.shuffle(&mut rng);
        let (n_train, n_val, _) = spec.part_sizes(group.len());
        parts[0].extend_from_slice(&group[..n_train]);
        parts[1].extend_from_slice(&group[n_train..n_train + n_val]);
        parts[2].extend_from_slice(&group[n_train + n_val..]);
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    let [train, val, test] = parts;
    Ok((ds.subset(&train), ds.subset(&val), ds.subset(&test)))
}
