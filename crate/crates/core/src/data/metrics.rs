use serde::Serialize;

use super::{DataError, Result};

/// Area under the ROC curve from the rank-sum statistic, with tied scores
/// sharing their mean rank. `None` when either class is absent.
pub fn auc_binary(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AucReport {
    /// One-vs-rest AUC per class; `None` where undefined.
    pub per_class: Vec<Option<f64>>,
    /// Prevalence-weighted mean over the classes where AUC is defined.
    pub weighted: f64,
}

/// One-vs-rest AUC per class, averaged with class-prevalence weights.
/// `scores[i][c]` is row `i`'s score for class `c`.
pub fn auc_weighted(scores: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Result<AucReport> {
    let mut per_class = Vec::with_capacity(n_classes);
    let (mut total, mut weight) = (0.0, 0.0);
    for c in 0..n_classes {
        let col: Vec<f64> = scores.iter().map(|s| s[c]).collect();
        let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        let auc = auc_binary(&col, &pos);
        match auc {
            Some(a) => {
                let w = pos.iter().filter(|&&p| p).count() as f64;
                total += w * a;
                weight += w;
            }
            None => log::warn!("class {c}: AUC undefined on this fold, excluded from the weighted mean"),
        }
        per_class.push(auc);
    }
    if weight == 0.0 {
        return Err(DataError::UndefinedAuc("no class has both positives and negatives".into()));
    }
    Ok(AucReport {
        per_class,
        weighted: total / weight,
    })
}
