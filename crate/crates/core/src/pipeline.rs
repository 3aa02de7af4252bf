//! The `train`, `evaluate`, `predict` and `monitor` commands as library
//! functions. Every file they write is a pure function of the inputs and the
//! configuration.

use std::fs::{self, File};
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::dataset::{
    apply_normalization, fit_normalization, load_csv, read_features, split, DataError, Dataset,
};
use crate::linalg::DenseVector;
use crate::lm::{lm_train_with, predict_sse_curve, LmError, TrainHistory};
use crate::metrics::{
    accuracy_curve, evaluate as eval_model, write_accuracy_curve, EvalReport, MetricsError,
};
use crate::mlp::{init_model, InitSpec, MlpError, MlpModel, MlpProblem, MlpShape};
use crate::saved_model::{ModelFileError, SavedModel};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("I/O error: {0}")]
    Io(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training diverged: {0}")]
    Diverged(String),
}

impl CliError {
    /// 0 ok, 1 I/O, 2 data or configuration, 3 numeric divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Data(_) | CliError::Config(_) => 2,
            CliError::Diverged(_) => 3,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } => CliError::Io(e.to_string()),
            DataError::InvalidSplit(_) => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ModelFileError> for CliError {
    fn from(e: ModelFileError) -> Self {
        match e {
            ModelFileError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<MlpError> for CliError {
    fn from(e: MlpError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| io_err(path, e))
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::Config(format!("missing required --{flag}")))
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: SavedModel,
    pub history: TrainHistory,
    /// `(part name, report)` for every non-empty part.
    pub reports: Vec<(&'static str, EvalReport)>,
    pub model_path: PathBuf,
}

/// Load → split → normalize on the training part → LM fit → write the
/// model, history, curves and per-part reports into `out_dir`.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    let data_path = required(&cfg.data, "data")?;
    let dataset = load_csv(data_path, &cfg.schema)?;
    let (train_raw, val_raw, test_raw) = split(&dataset, &cfg.split)?;

    let stats = fit_normalization(&train_raw)?;
    let parts: [(&'static str, Dataset); 3] = [
        ("train", apply_normalization(&train_raw, &stats)?),
        ("val", apply_normalization(&val_raw, &stats)?),
        ("test", apply_normalization(&test_raw, &stats)?),
    ];

    let shape = MlpShape::sigmoid(cfg.layer_sizes())?;
    let initial = init_model(&shape, InitSpec::seeded(cfg.seed));
    let problem = MlpProblem::new(shape.clone(), parts[0].1.x.clone(), parts[0].1.targets())?;

    fs::create_dir_all(&cfg.out_dir).map_err(|e| io_err(&cfg.out_dir, e))?;
    let out = |name: &str| cfg.out_dir.join(name);

    let mut checkpoints: Vec<DenseVector> = vec![initial.flatten()];
    let result = lm_train_with(&problem, &initial.flatten(), &cfg.lm, |_, beta| {
        checkpoints.push(beta.clone())
    });
    let (beta, history) = match result {
        Ok(v) => v,
        Err(LmError::NonFiniteObjective { history }) => {
            write_file(&out("history.csv"), |w| history.write_csv(w))?;
            return Err(CliError::Diverged(format!(
                "objective became non-finite after {} proposals",
                history.records.len()
            )));
        }
        Err(e) => return Err(CliError::Config(e.to_string())),
    };

    let model = MlpModel::unflatten(&shape, &beta)?;
    let saved = SavedModel::new(cfg.schema.clone(), stats, model)?;
    let model_path = cfg.model.clone().unwrap_or_else(|| out("model.txt"));
    saved.save(&model_path)?;

    write_file(&out("history.csv"), |w| history.write_csv(w))?;
    write_file(&out("sse_curve.csv"), |w| {
        writeln!(w, "iteration,sse")?;
        for (i, s) in predict_sse_curve(&history) {
            writeln!(w, "{i},{s}")?;
        }
        Ok(())
    })?;

    let checkpoint_models = checkpoints
        .iter()
        .map(|b| MlpModel::unflatten(&shape, b))
        .collect::<Result<Vec<_>, _>>()?;

    let mut reports = Vec::new();
    for (name, part) in &parts {
        if part.is_empty() {
            continue;
        }
        let report = eval_model(&saved.model, part, cfg.threshold)?;
        write_file(&out(&format!("report_{name}.txt")), |w| {
            write!(w, "{report}")
        })?;
        write_file(&out(&format!("confusion_{name}.csv")), |w| {
            report.confusion.write_csv(w)
        })?;
        let curve = accuracy_curve(&checkpoint_models, part, cfg.threshold)?;
        write_file(&out(&format!("accuracy_{name}.csv")), |w| {
            write_accuracy_curve(&curve, w)
        })?;
        reports.push((*name, report));
    }

    Ok(TrainOutcome {
        model: saved,
        history,
        reports,
        model_path,
    })
}

fn load_model(cfg: &RunConfig) -> Result<SavedModel, CliError> {
    Ok(SavedModel::load(required(&cfg.model, "model")?)?)
}

/// Scores a labelled file with a saved model and writes `report.txt` and
/// `confusion.csv` into `out_dir`.
pub fn evaluate(cfg: &RunConfig) -> Result<EvalReport, CliError> {
    let saved = load_model(cfg)?;
    let data = load_csv(required(&cfg.data, "data")?, &saved.schema)?;
    let normalized = apply_normalization(&data, &saved.norm)?;
    let report = eval_model(&saved.model, &normalized, cfg.threshold)?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| io_err(&cfg.out_dir, e))?;
    write_file(&cfg.out_dir.join("report.txt"), |w| write!(w, "{report}"))?;
    write_file(&cfg.out_dir.join("confusion.csv"), |w| {
        report.confusion.write_csv(w)
    })?;
    Ok(report)
}

/// Writes `row_id,score,predicted` for every row; the label column is
/// optional. Returns the number of rows scored.
pub fn predict(cfg: &RunConfig) -> Result<usize, CliError> {
    let saved = load_model(cfg)?;
    let data_path = required(&cfg.data, "data")?;
    let file = File::open(data_path).map_err(|e| io_err(data_path, e))?;
    let table = read_features(io::BufReader::new(file), &saved.schema, false)?;
    let scores = saved.score_matrix(&table.x)?;
    let out_path = cfg
        .out
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("predictions.csv"));
    write_file(&out_path, |w| {
        writeln!(w, "row_id,score,predicted")?;
        for (id, s) in table.row_ids.iter().zip(scores.iter()) {
            writeln!(w, "{id},{s},{}", u8::from(*s >= cfg.threshold))?;
        }
        Ok(())
    })?;
    Ok(table.row_ids.len())
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct MonitorStats {
    pub scored: usize,
    pub rejected: usize,
}

/// Scores headerless feature rows from `input` one at a time, writing
/// `score,predicted,alert` per line and flushing after each. Bad lines are
/// reported on `errors` and skipped.
pub fn monitor<R: BufRead, W: Write, E: Write>(
    saved: &SavedModel,
    threshold: f64,
    input: R,
    mut output: W,
    mut errors: E,
) -> io::Result<MonitorStats> {
    let n = saved.schema.num_features();
    let mut stats = MonitorStats::default();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: Result<Vec<f64>, String> = line
            .split(',')
            .map(|f| {
                let f = f.trim();
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| format!("malformed number {f:?}"))
            })
            .collect();
        let score = parsed.and_then(|row| {
            if row.len() != n {
                Err(format!("expected {n} values, got {}", row.len()))
            } else {
                saved.score_row(&row).map_err(|e| e.to_string())
            }
        });
        match score {
            Ok(s) => {
                let p = u8::from(s >= threshold);
                writeln!(output, "{s},{p},{p}")?;
                output.flush()?;
                stats.scored += 1;
            }
            Err(msg) => {
                writeln!(errors, "error: line {}: {msg}", i + 1)?;
                errors.flush()?;
                stats.rejected += 1;
            }
        }
    }
    Ok(stats)
}
