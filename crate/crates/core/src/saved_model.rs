//! Text persistence for a trained model together with its schema and
//! normalization statistics.
//!
//! ```text
//! format = cardio-lm-model
//! version = 1
//! features = age,anaemia,...
//! label = DEATH_EVENT
//! positive_label = 1
//! layer_sizes = 8,6,1
//! hidden_activation = sigmoid
//! output_activation = sigmoid
//! [normalization]
//! age = <mean>, <std>
//! [parameters]
//! <one value per line, flatten() order>
//! ```
//!
//! Floats are written with 17 significant digits so every `f64` survives a
//! round trip exactly.

use std::fmt::Write as _;
use std::path::Path;
use std::{fs, io};

use thiserror::Error;

use crate::dataset::{DataError, NormStats, Schema};
use crate::linalg::{DenseMatrix, DenseVector, LinalgError};
use crate::mlp::{MlpError, MlpModel, MlpShape};

pub const FORMAT_NAME: &str = "cardio-lm-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("model file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("model file is missing `{0}`")]
    MissingKey(&'static str),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Model(#[from] MlpError),
    #[error(transparent)]
    Schema(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub schema: Schema,
    pub norm: NormStats,
    pub model: MlpModel,
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl SavedModel {
    pub fn new(schema: Schema, norm: NormStats, model: MlpModel) -> Result<Self, ModelFileError> {
        if norm.names != schema.feature_columns() {
            return Err(DataError::SchemaMismatch(
                "normalization names differ from schema features".into(),
            )
            .into());
        }
        if model.shape().input_dim() != schema.num_features() {
            return Err(DataError::SchemaMismatch(format!(
                "model takes {} inputs, schema has {} features",
                model.shape().input_dim(),
                schema.num_features()
            ))
            .into());
        }
        Ok(Self {
            schema,
            norm,
            model,
        })
    }

    pub fn to_text(&self) -> String {
        let shape = self.model.shape();
        let mut s = String::new();
        let sizes: Vec<String> = shape.layer_sizes().iter().map(usize::to_string).collect();
        // Writing to a String cannot fail.
        let _ = writeln!(s, "format = {FORMAT_NAME}");
        let _ = writeln!(s, "version = {FORMAT_VERSION}");
        let _ = writeln!(s, "features = {}", self.schema.feature_columns().join(","));
        let _ = writeln!(s, "label = {}", self.schema.label_column());
        let _ = writeln!(s, "positive_label = {}", self.schema.positive_label());
        let _ = writeln!(s, "layer_sizes = {}", sizes.join(","));
        let _ = writeln!(s, "hidden_activation = {}", shape.hidden_activation);
        let _ = writeln!(s, "output_activation = {}", shape.output_activation);
        s.push_str("[normalization]\n");
        for ((name, mean), std) in self
            .norm
            .names
            .iter()
            .zip(&self.norm.mean)
            .zip(&self.norm.std)
        {
            let _ = writeln!(s, "{name} = {}, {}", fmt_f64(*mean), fmt_f64(*std));
        }
        s.push_str("[parameters]\n");
        for p in self.model.flatten().iter() {
            s.push_str(&fmt_f64(*p));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, ModelFileError> {
        #[derive(PartialEq)]
        enum Section {
            Header,
            Norm,
            Params,
        }
        let err = |line: usize, message: String| ModelFileError::Parse { line, message };

        let mut section = Section::Header;
        let mut header: Vec<(String, String, usize)> = Vec::new();
        let mut norm = NormStats {
            names: Vec::new(),
            mean: Vec::new(),
            std: Vec::new(),
        };
        let mut params = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "[normalization]" => {
                    section = Section::Norm;
                    continue;
                }
                "[parameters]" => {
                    section = Section::Params;
                    continue;
                }
                _ => {}
            }
            match section {
                Section::Header => {
                    let (k, v) = line.split_once('=').ok_or_else(|| {
                        err(line_no, format!("expected `key = value`, got {line:?}"))
                    })?;
                    header.push((k.trim().to_string(), v.trim().to_string(), line_no));
                }
                Section::Norm => {
                    let (name, stats) = line
                        .rsplit_once('=')
                        .ok_or_else(|| err(line_no, "expected `name = mean, std`".into()))?;
                    let (mean, std) = stats
                        .split_once(',')
                        .ok_or_else(|| err(line_no, "expected `name = mean, std`".into()))?;
                    let num = |s: &str| {
                        s.trim()
                            .parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| err(line_no, format!("bad number {:?}", s.trim())))
                    };
                    let std = num(std)?;
                    if std < 0.0 {
                        return Err(err(line_no, "negative standard deviation".into()));
                    }
                    norm.names.push(name.trim().to_string());
                    norm.mean.push(num(mean)?);
                    norm.std.push(std);
                }
                Section::Params => {
                    let v = line
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| err(line_no, format!("bad parameter {line:?}")))?;
                    params.push(v);
                }
            }
        }

        let get = |key: &'static str| {
            header
                .iter()
                .find(|(k, _, _)| k == key)
                .map(|(_, v, l)| (v.as_str(), *l))
                .ok_or(ModelFileError::MissingKey(key))
        };

        let (format, l) = get("format")?;
        if format != FORMAT_NAME {
            return Err(err(l, format!("unknown format {format:?}")));
        }
        let (version, l) = get("version")?;
        let version: u32 = version
            .parse()
            .map_err(|_| err(l, format!("bad version {version:?}")))?;
        if version != FORMAT_VERSION {
            return Err(ModelFileError::UnsupportedVersion(version));
        }

        let features: Vec<String> = get("features")?.0.split(',').map(str::to_string).collect();
        let label = get("label")?.0.to_string();
        let (pos, l) = get("positive_label")?;
        let positive_label: f64 = pos
            .parse()
            .map_err(|_| err(l, format!("bad label value {pos:?}")))?;
        let schema = Schema::with_positive_label(features, label, positive_label)?;

        let (sizes, l) = get("layer_sizes")?;
        let sizes = sizes
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| err(l, format!("bad layer sizes {sizes:?}")))?;
        let shape = MlpShape::new(
            sizes,
            get("hidden_activation")?.0.parse()?,
            get("output_activation")?.0.parse()?,
        )?;

        let beta = DenseVector::new(params).map_err(|e: LinalgError| MlpError::from(e))?;
        let model = MlpModel::unflatten(&shape, &beta)?;
        Self::new(schema, norm, model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelFileError> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|source| ModelFileError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelFileError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ModelFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Score for one raw (unnormalized) feature row in schema order.
    pub fn score_row(&self, raw: &[f64]) -> Result<f64, MlpError> {
        if raw.len() != self.schema.num_features() {
            return Err(MlpError::DimensionMismatch(format!(
                "{} values for {} features",
                raw.len(),
                self.schema.num_features()
            )));
        }
        Ok(self.model.forward_slice(&self.norm.normalize_row(raw))[0])
    }

    /// Scores for every row of a raw feature matrix.
    pub fn score_matrix(&self, raw: &DenseMatrix) -> Result<DenseVector, ModelFileError> {
        let x = self.norm.normalize_matrix(raw)?;
        Ok(self.model.predict_scores(&x)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{init_model, InitSpec};

    fn sample() -> SavedModel {
        let schema = Schema::new(vec!["a".into(), "b c".into()], "y").unwrap();
        let norm = NormStats {
            names: schema.feature_columns().to_vec(),
            mean: vec![0.1, 265000.0],
            std: vec![1.0 / 3.0, 0.0],
        };
        let model = init_model(
            &MlpShape::sigmoid(vec![2, 3, 1]).unwrap(),
            InitSpec::seeded(4),
        );
        SavedModel::new(schema, norm, model).unwrap()
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = sample();
        let text = m.to_text();
        let back = SavedModel::parse(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
        assert!(text.contains("b c = 2.6500000000000000e5, 0.0000000000000000e0"));
    }

    #[test]
    fn rejects_wrong_parameter_count() {
        let text = sample().to_text();
        let truncated: String = text
            .lines()
            .take(text.lines().count() - 1)
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(matches!(
            SavedModel::parse(&truncated),
            Err(ModelFileError::Model(MlpError::ParameterCount { .. }))
        ));
    }

    #[test]
    fn rejects_bad_header() {
        let text = sample().to_text();
        assert!(matches!(
            SavedModel::parse(&text.replace("version = 1", "version = 9")),
            Err(ModelFileError::UnsupportedVersion(9))
        ));
        assert!(matches!(
            SavedModel::parse(&text.replace("label = y\n", "")),
            Err(ModelFileError::MissingKey("label"))
        ));
        assert!(matches!(
            SavedModel::parse(&text.replace("= sigmoid", "= relu")),
            Err(ModelFileError::Model(MlpError::UnknownActivation(_)))
        ));
    }

    #[test]
    fn score_row_applies_normalization() {
        let m = sample();
        let raw = [0.4, 265001.0];
        let z = m.norm.normalize_row(&raw);
        assert_eq!(z[1], 1.0);
        let expected = m.model.forward(&DenseVector::new(z).unwrap()).unwrap()[0];
        assert_eq!(m.score_row(&raw).unwrap(), expected);
        assert!(m.score_row(&[1.0]).is_err());
    }
}
