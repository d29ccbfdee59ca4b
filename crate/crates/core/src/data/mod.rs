//! Datasets, fold splits, metrics and the cross-validation driver.

mod eval;
mod folds;
mod metrics;

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::SlicePlan;
use crate::mixture::IgmnError;

pub use eval::{cross_validate, evaluate_split, grid_search_delta, CvReport, EvalResult, FoldOutcome, GridSearch, XvalOptions};
pub use folds::{stratified_folds, FoldSplit};
pub use metrics::{auc_binary, auc_weighted, AucReport};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}, column {column:?}: cannot parse {value:?} as a number")]
    Parse { line: u64, column: String, value: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged { line: u64, expected: usize, found: usize },
    #[error("unknown level {value:?} for nominal column {column:?}")]
    UnknownLevel { column: String, value: String },
    #[error("class column {0} not found")]
    MissingClassColumn(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset needs at least {needed} {what}, found {found}")]
    TooSmall { what: &'static str, needed: usize, found: usize },
    #[error("width mismatch: model expects {expected} feature columns, data has {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("invalid fold setup: {0}")]
    InvalidFolds(String),
    #[error("AUC undefined: {0}")]
    UndefinedAuc(String),
    #[error(transparent)]
    Model(#[from] IgmnError),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// How the class column is picked out of the header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ClassColumn {
    Last,
    Name(String),
    Index(usize),
}

impl std::str::FromStr for ClassColumn {
    type Err = std::convert::Infallible;

    /// `last`, a zero-based index, or a column name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(if s.eq_ignore_ascii_case("last") {
            ClassColumn::Last
        } else if let Ok(i) = s.parse() {
            ClassColumn::Index(i)
        } else {
            ClassColumn::Name(s.to_owned())
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AttributeKind {
    Numeric,
    /// One-hot encoded, one indicator per level.
    Nominal { levels: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    #[serde(flatten)]
    pub kind: AttributeKind,
}

impl Attribute {
    fn width(&self) -> usize {
        match &self.kind {
            AttributeKind::Numeric => 1,
            AttributeKind::Nominal { levels } => levels.len(),
        }
    }
}

/// Column layout of a dataset: how raw CSV cells map to feature values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub attributes: Vec<Attribute>,
    pub class_name: String,
    pub classes: Vec<String>,
}

impl Schema {
    /// Number of encoded feature values.
    pub fn width(&self) -> usize {
        self.attributes.iter().map(Attribute::width).sum()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Encoded feature names; nominal levels become `name=level`.
    pub fn feature_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.width());
        for a in &self.attributes {
            match &a.kind {
                AttributeKind::Numeric => out.push(a.name.clone()),
                AttributeKind::Nominal { levels } => out.extend(levels.iter().map(|l| format!("{}={l}", a.name))),
            }
        }
        out
    }

    /// Encodes the attribute cells of one row (class cell excluded).
    pub fn encode(&self, cells: &[&str], line: u64) -> Result<Vec<f64>> {
        if cells.len() != self.attributes.len() {
            return Err(DataError::WidthMismatch {
                expected: self.attributes.len(),
                found: cells.len(),
            });
        }
        let mut out = Vec::with_capacity(self.width());
        for (a, cell) in self.attributes.iter().zip(cells) {
            match &a.kind {
                AttributeKind::Numeric => out.push(parse_number(cell).ok_or_else(|| DataError::Parse {
                    line,
                    column: a.name.clone(),
                    value: (*cell).to_owned(),
                })?),
                AttributeKind::Nominal { levels } => {
                    let hit = levels.iter().position(|l| l == cell).ok_or_else(|| DataError::UnknownLevel {
                        column: a.name.clone(),
                        value: (*cell).to_owned(),
                    })?;
                    out.extend((0..levels.len()).map(|i| if i == hit { 1.0 } else { 0.0 }));
                }
            }
        }
        Ok(out)
    }
}

/// A classification dataset with numeric features.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub schema: Schema,
    /// `N x width` encoded features.
    pub features: Vec<Vec<f64>>,
    /// Class index per row.
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.width()
    }

    pub fn n_classes(&self) -> usize {
        self.schema.n_classes()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows `indices` as a new dataset sharing the schema.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            schema: self.schema.clone(),
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "?"
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn load_csv(path: impl AsRef<Path>, class: &ClassColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_csv(file, &name, class)
}

/// Parses a headed CSV. A column is nominal when none of its cells is a
/// number; a column mixing numbers and other text is an error. Rows with a
/// missing cell (`?` or empty) are dropped.
pub fn read_csv<R: Read>(reader: R, name: &str, class: &ClassColumn) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let class_idx = match class {
        ClassColumn::Last => header.len().checked_sub(1),
        ClassColumn::Index(i) => Some(*i).filter(|&i| i < header.len()),
        ClassColumn::Name(n) => header.iter().position(|h| h == n),
    }
    .ok_or_else(|| DataError::MissingClassColumn(format!("{class:?}")))?;

    let mut rows: Vec<(u64, Vec<String>)> = Vec::new();
    let mut dropped = 0usize;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(DataError::Ragged {
                line,
                expected: header.len(),
                found: record.len(),
            });
        }
        if record.iter().any(is_missing) {
            dropped += 1;
            continue;
        }
        rows.push((line, record.iter().map(str::to_owned).collect()));
    }
    if dropped > 0 {
        log::warn!("{name}: dropped {dropped} rows with missing values");
    }
    if rows.is_empty() {
        return Err(DataError::EmptyDataset);
    }

    let mut attributes = Vec::new();
    for (c, col_name) in header.iter().enumerate() {
        if c == class_idx {
            continue;
        }
        let first_number = rows.iter().find(|(_, r)| parse_number(&r[c]).is_some());
        let first_text = rows.iter().find(|(_, r)| parse_number(&r[c]).is_none());
        let kind = match (first_number, first_text) {
            (_, None) => AttributeKind::Numeric,
            (None, Some(_)) => AttributeKind::Nominal {
                levels: levels_in_order(rows.iter().map(|(_, r)| r[c].as_str())),
            },
            (Some(_), Some((line, r))) => {
                return Err(DataError::Parse {
                    line: *line,
                    column: col_name.clone(),
                    value: r[c].clone(),
                })
            }
        };
        attributes.push(Attribute {
            name: col_name.clone(),
            kind,
        });
    }
    let classes = levels_in_order(rows.iter().map(|(_, r)| r[class_idx].as_str()));
    let schema = Schema {
        attributes,
        class_name: header[class_idx].clone(),
        classes,
    };
    let class_of: HashMap<&str, usize> = schema.classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();

    let mut features = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (line, r) in &rows {
        let cells: Vec<&str> = r
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != class_idx)
            .map(|(_, s)| s.as_str())
            .collect();
        features.push(schema.encode(&cells, *line)?);
        labels.push(class_of[r[class_idx].as_str()]);
    }
    let ds = Dataset {
        name: name.to_owned(),
        schema,
        features,
        labels,
    };
    if ds.len() < 2 {
        return Err(DataError::TooSmall {
            what: "rows",
            needed: 2,
            found: ds.len(),
        });
    }
    if ds.n_classes() < 2 {
        return Err(DataError::TooSmall {
            what: "classes",
            needed: 2,
            found: ds.n_classes(),
        });
    }
    Ok(ds)
}

/// Distinct values in order of first appearance.
fn levels_in_order<'a>(cells: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut levels: Vec<String> = Vec::new();
    for c in cells {
        if !levels.iter().any(|l| l == c) {
            levels.push(c.to_owned());
        }
    }
    levels
}

/// Joint vectors `[features | one-hot class]` and the plan that marks the
/// class block as targets.
pub fn encode_for_igmn(ds: &Dataset) -> (Vec<Vec<f64>>, SlicePlan) {
    let k = ds.n_classes();
    let rows = ds
        .features
        .iter()
        .zip(&ds.labels)
        .map(|(f, &l)| {
            let mut row = Vec::with_capacity(f.len() + k);
            row.extend_from_slice(f);
            row.extend((0..k).map(|c| if c == l { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    let plan = SlicePlan::targets_last(ds.n_features() + k, k).expect("class block fits the joint vector");
    (rows, plan)
}

/// Recovers class indices from the one-hot block of joint vectors.
pub fn decode_labels(rows: &[Vec<f64>], n_classes: usize) -> Vec<usize> {
    rows.iter()
        .map(|r| crate::inference::argmax(&r[r.len() - n_classes..]))
        .collect()
}

/// Per-feature z-scoring fitted on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let stats = crate::stats::RunningStats::from_rows(dim, rows.iter().map(Vec::as_slice)).map_err(IgmnError::from)?;
        Ok(Self {
            mean: stats.mean().to_vec(),
            // constant columns are centred but left unscaled
            std: stats
                .std_vector(0.0)
                .into_iter()
                .map(|s| if s > 0.0 { s } else { 1.0 })
                .collect(),
        })
    }

    pub fn apply(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    pub fn apply_all(&self, rows: &mut [Vec<f64>]) {
        for r in rows {
            self.apply(r);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "a,b,colour,class\n1,2,red,x\n3,?,blue,y\n4,5,blue,y\n6,7,red,x\n";

    #[test]
    fn nominal_columns_are_one_hot() {
        let ds = read_csv(SMALL.as_bytes(), "small", &ClassColumn::Last).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.schema.classes, vec!["x", "y"]);
        assert_eq!(ds.schema.feature_names(), vec!["a", "b", "colour=red", "colour=blue"]);
        assert_eq!(ds.features[1], vec![4.0, 5.0, 0.0, 1.0]);
        assert_eq!(ds.labels, vec![0, 1, 0]);
    }

    #[test]
    fn class_column_selection() {
        let by_name = read_csv(SMALL.as_bytes(), "s", &"class".parse().unwrap()).unwrap();
        let by_index = read_csv(SMALL.as_bytes(), "s", &"3".parse().unwrap()).unwrap();
        assert_eq!(by_name.labels, by_index.labels);
        let colour = read_csv(SMALL.as_bytes(), "s", &ClassColumn::Name("colour".into())).unwrap();
        assert_eq!(colour.schema.classes, vec!["red", "blue"]);
        assert!(matches!(
            read_csv(SMALL.as_bytes(), "s", &ClassColumn::Name("nope".into())),
            Err(DataError::MissingClassColumn(_))
        ));
    }

    #[test]
    fn garbage_in_numeric_column_names_the_cell() {
        let text = "a,b,class\n1,2,x\n3,oops,y\n";
        match read_csv(text.as_bytes(), "g", &ClassColumn::Last) {
            Err(DataError::Parse { line, column, value }) => {
                assert_eq!((line, column.as_str(), value.as_str()), (3, "b", "oops"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn degenerate_files() {
        assert!(matches!(read_csv("a,class\n".as_bytes(), "e", &ClassColumn::Last), Err(DataError::EmptyDataset)));
        assert!(matches!(
            read_csv("a,class\n1,x\n2,x\n".as_bytes(), "e", &ClassColumn::Last),
            Err(DataError::TooSmall { what: "classes", .. })
        ));
        assert!(matches!(
            read_csv("a,class\n1,x\n2\n".as_bytes(), "e", &ClassColumn::Last),
            Err(DataError::Csv(_) | DataError::Ragged { .. })
        ));
    }

    #[test]
    fn one_hot_round_trip() {
        let ds = read_csv(SMALL.as_bytes(), "s", &ClassColumn::Last).unwrap();
        let (rows, plan) = encode_for_igmn(&ds);
        assert_eq!(rows[0].len(), 6);
        assert_eq!(plan.targets(), &[4, 5]);
        assert_eq!(decode_labels(&rows, 2), ds.labels);
    }

    #[test]
    fn standardizer() {
        let mut rows = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(&rows).unwrap();
        s.apply_all(&mut rows);
        let r = 1.0 / 2f64.sqrt();
        assert!((rows[0][0] + r).abs() < 1e-15 && (rows[1][0] - r).abs() < 1e-15);
        assert_eq!(rows[0][1], 0.0);
    }
}
