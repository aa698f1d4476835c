//! ROC-AUC by the rank (Mann–Whitney) method, and its support-weighted
//! one-vs-rest extension.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AucError {
    #[error("AUC needs both positive and negative labels")]
    SingleClass,
    #[error("non-finite score at position {0}")]
    NonFinite(usize),
    #[error("{labels} labels but {scores} scores")]
    Length { labels: usize, scores: usize },
}

/// Average 1-based ranks, ties sharing the mean of their positions.
fn average_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share rank (i + j) / 2 + 1
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// P(score⁺ > score⁻) + ½ P(tie).
pub fn roc_auc_binary(labels: &[bool], scores: &[f64]) -> Result<f64, AucError> {
    if labels.len() != scores.len() {
        return Err(AucError::Length { labels: labels.len(), scores: scores.len() });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(AucError::NonFinite(i));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(AucError::SingleClass);
    }
    let ranks = average_ranks(scores);
    let r_pos: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let np = n_pos as f64;
    Ok((r_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAuc {
    pub class: usize,
    pub support: usize,
    pub weight: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OvrAuc {
    pub value: f64,
    pub per_class: Vec<ClassAuc>,
    /// model classes that do not occur in `labels`
    pub excluded: Vec<usize>,
}

/// Weighted one-vs-rest AUC. `proba` columns follow `classes`; a label
/// whose class has no column is scored with zeros in its own one-vs-rest
/// problem.
pub fn roc_auc_weighted_ovr(labels: &[usize], proba: &[Vec<f64>], classes: &[usize]) -> Result<OvrAuc, AucError> {
    if labels.len() != proba.len() {
        return Err(AucError::Length { labels: labels.len(), scores: proba.len() });
    }
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(AucError::SingleClass);
    }
    let excluded: Vec<usize> = classes.iter().copied().filter(|c| present.binary_search(c).is_err()).collect();
    for c in &excluded {
        log::warn!("class {c} is absent from the evaluation labels; dropped from the weighted AUC");
    }
    let n = labels.len() as f64;
    let mut per_class = Vec::with_capacity(present.len());
    let mut value = 0.0;
    for &c in &present {
        let col = classes.iter().position(|&k| k == c);
        let scores: Vec<f64> = proba.iter().map(|r| col.map_or(0.0, |j| r[j])).collect();
        let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        let support = pos.iter().filter(|&&b| b).count();
        let auc = roc_auc_binary(&pos, &scores)?;
        let weight = support as f64 / n;
        value += weight * auc;
        per_class.push(ClassAuc { class: c, support, weight, auc });
    }
    Ok(OvrAuc { value, per_class, excluded })
}
