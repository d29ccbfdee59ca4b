use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{DataError, Result};

/// Assignment of every row to one of `n_folds` folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FoldSplit {
    pub assignment: Vec<usize>,
    pub n_folds: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl FoldSplit {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified `k`-fold split. Each class is shuffled and dealt round-robin;
/// the dealer continues where the previous class stopped so fold sizes stay
/// within one of each other. Falls back to an unstratified split when some
/// present class has fewer than `k` members.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(DataError::InvalidFolds(format!("need at least 2 folds, got {k}")));
    }
    if labels.len() < k {
        return Err(DataError::InvalidFolds(format!("{k} folds for {} rows", labels.len())));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let stratified = by_class.iter().all(|c| c.is_empty() || c.len() >= k);
    if !stratified {
        log::warn!("a class has fewer than {k} members; using an unstratified split");
        by_class = vec![(0..labels.len()).collect()];
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignment[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldSplit {
        assignment,
        n_folds: k,
        seed,
        stratified,
    })
}
