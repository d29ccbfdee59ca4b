use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::inference::classify;
use crate::mixture::{IgmnConfig, MixtureModel};
use crate::par;

use super::{auc_weighted, encode_for_igmn, stratified_folds, DataError, Dataset, Result, Standardizer};

/// Scores of one trained model on one test set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalResult {
    pub delta: f64,
    pub per_class_auc: Vec<Option<f64>>,
    pub weighted_auc: f64,
    pub accuracy: f64,
    pub train_seconds: f64,
    pub test_seconds: f64,
    pub k_final: usize,
}

#[derive(Clone, Debug)]
pub struct XvalOptions {
    /// Base configuration; `delta` is overridden by the grid.
    pub config: IgmnConfig,
    pub folds: usize,
    pub seed: u64,
    /// Candidate `delta` values.
    pub deltas: Vec<f64>,
    pub standardize: bool,
    /// With several candidates: pick `delta` per outer fold by an inner
    /// cross-validation on that fold's training rows, instead of reporting
    /// the candidate with the best mean over the outer folds.
    pub nested: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FoldOutcome {
    pub fold: usize,
    /// Mean weighted AUC per candidate `delta`, when a grid search ran.
    pub grid: Option<Vec<(f64, f64)>>,
    pub result: EvalResult,
}

#[derive(Clone, Debug, Serialize)]
pub struct CvReport {
    pub dataset: String,
    pub folds: Vec<FoldOutcome>,
    pub mean_weighted_auc: f64,
    pub std_weighted_auc: f64,
    pub mean_accuracy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GridSearch {
    pub best_delta: f64,
    /// `(delta, mean weighted AUC, per-fold results)` in ascending `delta`.
    pub results: Vec<(f64, f64, Vec<EvalResult>)>,
}

fn shuffled(indices: &[usize], seed: u64) -> Vec<usize> {
    let mut v = indices.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

/// Trains on `train` (streamed in the given order) and scores `test`.
pub fn evaluate_split(ds: &Dataset, train: &[usize], test: &[usize], config: &IgmnConfig, standardize: bool) -> Result<EvalResult> {
    let train_ds = ds.subset(train);
    let mut test_ds = ds.subset(test);
    let (mut joint, _) = encode_for_igmn(&train_ds);
    if standardize {
        let s = Standardizer::fit(&train_ds.features)?;
        let f = ds.n_features();
        for row in &mut joint {
            s.apply(&mut row[..f]);
        }
        s.apply_all(&mut test_ds.features);
    }
    let mut model = MixtureModel::from_data(config.clone(), &joint)?;
    let start = Instant::now();
    for row in &joint {
        model.learn_one(row)?;
    }
    let train_seconds = start.elapsed().as_secs_f64();

    let k = ds.n_classes();
    let start = Instant::now();
    let mut scores = Vec::with_capacity(test.len());
    let mut correct = 0usize;
    for (x, &label) in test_ds.features.iter().zip(&test_ds.labels) {
        let (pred, s) = classify(&model, x, k)?;
        correct += usize::from(pred == label);
        scores.push(s);
    }
    let test_seconds = start.elapsed().as_secs_f64();
    let auc = auc_weighted(&scores, &test_ds.labels, k)?;
    Ok(EvalResult {
        delta: config.delta,
        per_class_auc: auc.per_class,
        weighted_auc: auc.weighted,
        accuracy: correct as f64 / test.len().max(1) as f64,
        train_seconds,
        test_seconds,
        k_final: model.len(),
    })
}

/// `k`-fold cross-validation of every candidate `delta`; the best mean
/// weighted AUC wins and ties go to the smallest value.
pub fn grid_search_delta(ds: &Dataset, deltas: &[f64], opts: &XvalOptions) -> Result<GridSearch> {
    if deltas.is_empty() {
        return Err(DataError::InvalidFolds("empty delta grid".into()));
    }
    let mut deltas = deltas.to_vec();
    deltas.sort_by(f64::total_cmp);
    deltas.dedup();
    let split = stratified_folds(&ds.labels, opts.folds, opts.seed)?;
    let cells: Vec<(usize, usize)> = (0..deltas.len())
        .flat_map(|d| (0..opts.folds).map(move |f| (d, f)))
        .collect();
    let results: Vec<EvalResult> = par::map_range(cells.len(), |c| {
        let (d, f) = cells[c];
        let config = IgmnConfig {
            delta: deltas[d],
            ..opts.config.clone()
        };
        let train = shuffled(&split.train_indices(f), opts.seed.wrapping_add(f as u64 + 1));
        evaluate_split(ds, &train, &split.test_indices(f), &config, opts.standardize)
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let mut table = Vec::with_capacity(deltas.len());
    let mut best = (deltas[0], f64::NEG_INFINITY);
    for (d, chunk) in deltas.iter().zip(results.chunks(opts.folds)) {
        let mean = chunk.iter().map(|r| r.weighted_auc).sum::<f64>() / chunk.len() as f64;
        if mean > best.1 {
            best = (*d, mean);
        }
        table.push((*d, mean, chunk.to_vec()));
    }
    Ok(GridSearch {
        best_delta: best.0,
        results: table,
    })
}

/// Stratified cross-validation. With several candidate `delta` values the
/// reported folds are those of the candidate with the best mean weighted AUC
/// (see [`grid_search_delta`]), or, with `nested`, each outer fold is scored
/// with the candidate its own inner grid search chose.
pub fn cross_validate(ds: &Dataset, opts: &XvalOptions) -> Result<CvReport> {
    if opts.deltas.is_empty() {
        return Err(DataError::InvalidFolds("empty delta grid".into()));
    }
    let folds = if opts.deltas.len() > 1 && !opts.nested {
        let search = grid_search_delta(ds, &opts.deltas, opts)?;
        let summary: Vec<(f64, f64)> = search.results.iter().map(|(d, m, _)| (*d, *m)).collect();
        let (_, _, best) = search
            .results
            .into_iter()
            .find(|(d, _, _)| *d == search.best_delta)
            .expect("best delta is one of the candidates");
        best.into_iter()
            .enumerate()
            .map(|(fold, result)| FoldOutcome {
                fold,
                grid: Some(summary.clone()),
                result,
            })
            .collect()
    } else {
        outer_folds(ds, opts)?
    };
    let aucs: Vec<f64> = folds.iter().map(|f| f.result.weighted_auc).collect();
    let n = aucs.len() as f64;
    let mean = aucs.iter().sum::<f64>() / n;
    let var = aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(CvReport {
        dataset: ds.name.clone(),
        mean_weighted_auc: mean,
        std_weighted_auc: var.sqrt(),
        mean_accuracy: folds.iter().map(|f| f.result.accuracy).sum::<f64>() / n,
        folds,
    })
}

fn outer_folds(ds: &Dataset, opts: &XvalOptions) -> Result<Vec<FoldOutcome>> {
    let split = stratified_folds(&ds.labels, opts.folds, opts.seed)?;
    let mut folds = Vec::with_capacity(opts.folds);
    for f in 0..opts.folds {
        let train_idx = split.train_indices(f);
        let (delta, grid) = if opts.deltas.len() == 1 {
            (opts.deltas[0], None)
        } else {
            let inner = XvalOptions {
                seed: opts.seed.wrapping_mul(31).wrapping_add(f as u64 + 1),
                ..opts.clone()
            };
            let search = grid_search_delta(&ds.subset(&train_idx), &opts.deltas, &inner)?;
            let summary = search.results.iter().map(|(d, m, _)| (*d, *m)).collect();
            (search.best_delta, Some(summary))
        };
        let config = IgmnConfig {
            delta,
            ..opts.config.clone()
        };
        let train = shuffled(&train_idx, opts.seed.wrapping_add(f as u64 + 1));
        let result = evaluate_split(ds, &train, &split.test_indices(f), &config, opts.standardize)?;
        folds.push(FoldOutcome { fold: f, grid, result });
    }
    Ok(folds)
}
