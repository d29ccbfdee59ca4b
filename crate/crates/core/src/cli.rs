//! Command-line front end: `train`, `predict`, `xval` and `bench`.
//!
//! Exit codes: 0 on success, 2 for usage and data errors, 3 for numerical
//! failures.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{run_bench, BenchConfig};
use crate::data::{self, load_csv, ClassColumn, DataError, Schema, Standardizer, XvalOptions};
use crate::inference::classify;
use crate::mixture::{Backend, DegeneratePolicy, IgmnConfig, IgmnError, MixtureModel, ModelFile};

#[derive(Debug, Parser)]
#[command(name = "figmn", version, about = "Single-pass incremental Gaussian mixture classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stream a CSV once through the learner and save the model.
    Train(TrainArgs),
    /// Classify the rows of a CSV with a saved model.
    Predict(PredictArgs),
    /// Stratified cross-validation with an optional delta grid.
    Xval(XvalArgs),
    /// Time both backends on synthetic Gaussian data.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BackendArg {
    Fast,
    Reference,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Fast => Backend::Fast,
            BackendArg::Reference => Backend::Reference,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DegenerateArg {
    Clamp,
    Error,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "fast")]
    pub backend: BackendArg,
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    #[arg(long, default_value_t = 5.0)]
    pub vmin: f64,
    #[arg(long, default_value_t = 3.0)]
    pub spmin: f64,
    #[arg(long, value_enum, default_value = "clamp")]
    pub degenerate: DegenerateArg,
}

impl ModelArgs {
    fn config(&self) -> IgmnConfig {
        IgmnConfig {
            delta: self.delta,
            beta: self.beta,
            v_min: self.vmin,
            sp_min: self.spmin,
            backend: self.backend.into(),
            degenerate_policy: match self.degenerate {
                DegenerateArg::Clamp => DegeneratePolicy::Clamp,
                DegenerateArg::Error => DegeneratePolicy::Error,
            },
            ..IgmnConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Class column: `last`, a zero-based index, or a header name.
    #[arg(long, default_value = "last")]
    pub class_col: String,
    /// Where to write the model.
    #[arg(long)]
    pub model: PathBuf,
    /// Z-score features with the training statistics (stored in the model).
    #[arg(long)]
    pub standardize: bool,
    #[command(flatten)]
    pub model_args: ModelArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Feature CSV with a header; a column named like the training class
    /// column is ignored.
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct XvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "last")]
    pub class_col: String,
    #[arg(long, default_value_t = 2)]
    pub folds: usize,
    /// Comma-separated delta candidates (default: the value of --delta).
    #[arg(long, value_delimiter = ',')]
    pub grid_delta: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub standardize: bool,
    /// Also write the full report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model_args: ModelArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256,512")]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    /// Only this backend (default: both).
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the CSV here and print the table; otherwise the CSV goes to
    /// stdout and the table to stderr.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(DataError),
    #[error("numerical failure: {0}")]
    Numerical(IgmnError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 3,
            _ => 2,
        }
    }
}

impl From<IgmnError> for CliError {
    fn from(e: IgmnError) -> Self {
        match e {
            IgmnError::Degenerate { .. } | IgmnError::Numerical { .. } | IgmnError::Linalg(_) => CliError::Numerical(e),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Model(m) => m.into(),
            other => CliError::Data(other),
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

/// What a classifier model file carries besides the mixture itself.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskInfo {
    pub schema: Schema,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardizer: Option<Standardizer>,
}

/// A model file with the task section added under the `task` key; readers
/// that only want the mixture ignore it.
#[derive(Debug, Serialize, Deserialize)]
struct ClassifierFile {
    #[serde(flatten)]
    model: ModelFile,
    task: TaskInfo,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut stdout = std::io::stdout().lock();
    let text = match cli.command {
        Command::Train(a) => train(&a)?,
        Command::Predict(a) => predict(&a)?,
        Command::Xval(a) => xval(&a)?,
        Command::Bench(a) => bench(&a)?,
    };
    stdout.write_all(text.as_bytes()).map_err(io_err("writing to stdout"))
}

fn class_column(text: &str) -> ClassColumn {
    text.parse().unwrap_or(ClassColumn::Last)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(io_err(format!("writing {}", path.display())))
}

fn train(a: &TrainArgs) -> Result<String, CliError> {
    let ds = load_csv(&a.data, &class_column(&a.class_col))?;
    let mut features = ds.features.clone();
    let standardizer = if a.standardize {
        let s = Standardizer::fit(&features)?;
        s.apply_all(&mut features);
        Some(s)
    } else {
        None
    };
    let labelled = data::Dataset { features, ..ds.clone() };
    let (joint, _) = data::encode_for_igmn(&labelled);
    let mut model = MixtureModel::from_data(a.model_args.config(), &joint)?;
    let start = Instant::now();
    for x in &joint {
        model.learn_one(x)?;
    }
    let seconds = start.elapsed().as_secs_f64();
    let file = ClassifierFile {
        model: model.to_file(),
        task: TaskInfo {
            schema: ds.schema.clone(),
            standardizer,
        },
    };
    let json = serde_json::to_string(&file).map_err(|e| CliError::Usage(e.to_string()))?;
    write_file(&a.model, &json)?;
    let clamped: u32 = model.components().iter().map(|c| c.clamped_updates()).sum();
    Ok(format!(
        "trained on {} rows of {} ({} features, {} classes)\nK_final={}\ntrain_seconds={seconds:.6}\nclamped_updates={clamped}\nmodel written to {}\n",
        ds.len(),
        ds.name,
        ds.n_features(),
        ds.n_classes(),
        model.len(),
        a.model.display()
    ))
}

fn load_classifier(path: &Path) -> Result<(MixtureModel, TaskInfo), CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
    // Validates format and version before anything else.
    let model = MixtureModel::from_file(ModelFile::from_json(&text)?)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(e.to_string()))?;
    let task = value
        .get("task")
        .cloned()
        .ok_or_else(|| CliError::Usage(format!("{} has no task section; train it with `figmn train`", path.display())))?;
    let task: TaskInfo = serde_json::from_value(task).map_err(|e| CliError::Usage(format!("bad task section: {e}")))?;
    let expected = task.schema.width() + task.schema.n_classes();
    if model.dim() != expected {
        return Err(CliError::Usage(format!(
            "model dimension {} does not match its task ({expected})",
            model.dim()
        )));
    }
    Ok((model, task))
}

fn predict(a: &PredictArgs) -> Result<String, CliError> {
    let (model, task) = load_classifier(&a.model)?;
    let schema = &task.schema;
    let raw = std::fs::read(&a.data).map_err(io_err(format!("reading {}", a.data.display())))?;
    if raw.iter().all(u8::is_ascii_whitespace) {
        return finish_predict(a, String::new());
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(raw.as_slice());
    let header: Vec<String> = rdr.headers().map_err(DataError::from)?.iter().map(str::to_owned).collect();
    let skip = header.iter().position(|h| *h == schema.class_name);
    let width = header.len() - usize::from(skip.is_some());
    if width != schema.attributes.len() {
        return Err(DataError::WidthMismatch {
            expected: schema.attributes.len(),
            found: width,
        }
        .into());
    }
    let mut out = String::new();
    for record in rdr.records() {
        let record = record.map_err(DataError::from)?;
        let line = record.position().map_or(0, |p| p.line());
        let cells: Vec<&str> = record
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .map(|(_, c)| c)
            .collect();
        if cells.len() != width {
            return Err(DataError::Ragged {
                line,
                expected: header.len(),
                found: record.len(),
            }
            .into());
        }
        let mut x = schema.encode(&cells, line)?;
        if let Some(s) = &task.standardizer {
            s.apply(&mut x);
        }
        if out.is_empty() {
            out.push_str("predicted");
            for c in &schema.classes {
                let _ = write!(out, ",score_{c}");
            }
            out.push('\n');
        }
        let (label, scores) = classify(&model, &x, schema.n_classes())?;
        out.push_str(&schema.classes[label]);
        for s in scores {
            let _ = write!(out, ",{s}");
        }
        out.push('\n');
    }
    finish_predict(a, out)
}

fn finish_predict(a: &PredictArgs, csv: String) -> Result<String, CliError> {
    match &a.out {
        Some(path) => {
            write_file(path, &csv)?;
            Ok(String::new())
        }
        None => Ok(csv),
    }
}

fn xval(a: &XvalArgs) -> Result<String, CliError> {
    let ds = load_csv(&a.data, &class_column(&a.class_col))?;
    let deltas = if a.grid_delta.is_empty() {
        vec![a.model_args.delta]
    } else {
        a.grid_delta.clone()
    };
    let opts = XvalOptions {
        config: a.model_args.config(),
        folds: a.folds,
        seed: a.seed,
        deltas,
        standardize: a.standardize,
        nested: false,
    };
    let report = data::cross_validate(&ds, &opts)?;
    if let Some(path) = &a.out {
        let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Usage(e.to_string()))?;
        write_file(path, &json)?;
    }

    let mut out = format!(
        "{}: {} rows, {} features, {} classes, {}-fold, seed {}\n",
        ds.name,
        ds.len(),
        ds.n_features(),
        ds.n_classes(),
        a.folds,
        a.seed
    );
    if let Some(grid) = report.folds.first().and_then(|f| f.grid.as_ref()) {
        out.push_str("delta grid (mean weighted AUC):");
        for (d, m) in grid {
            let _ = write!(out, " {d}={m:.4}");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "{:>4} {:>8} {:>6} {:>12} {:>10}", "fold", "delta", "K", "weighted_auc", "accuracy");
    for f in &report.folds {
        let r = &f.result;
        let _ = writeln!(
            out,
            "{:>4} {:>8} {:>6} {:>12.4} {:>10.4}",
            f.fold, r.delta, r.k_final, r.weighted_auc, r.accuracy
        );
    }
    let _ = writeln!(
        out,
        "mean weighted AUC {:.4} +- {:.4}, mean accuracy {:.4}",
        report.mean_weighted_auc, report.std_weighted_auc, report.mean_accuracy
    );
    let (tr, te): (f64, f64) = report
        .folds
        .iter()
        .fold((0.0, 0.0), |(a, b), f| (a + f.result.train_seconds, b + f.result.test_seconds));
    let _ = writeln!(out, "time: train {tr:.4}s, test {te:.4}s");
    Ok(out)
}

fn bench(a: &BenchArgs) -> Result<String, CliError> {
    if a.dims.is_empty() || a.samples == 0 {
        return Err(CliError::Usage("bench needs at least one dimension and one sample".into()));
    }
    let cfg = BenchConfig {
        dims: a.dims.clone(),
        samples: a.samples,
        backends: match a.backend {
            Some(b) => vec![b.into()],
            None => vec![Backend::Fast, Backend::Reference],
        },
        seed: a.seed,
        ..BenchConfig::default()
    };
    let report = run_bench(&cfg)?;
    let csv = report.to_csv();
    match &a.out {
        Some(path) => {
            write_file(path, &csv)?;
            Ok(report.summary())
        }
        None => {
            eprint!("{}", report.summary());
            Ok(csv)
        }
    }
}
