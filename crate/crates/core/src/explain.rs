//! Shapley feature attributions for any model output.
//!
//! A coalition's value is the model output averaged over background rows
//! with the absent features taken from the background row (interventional
//! expectation). `shapley_exact` enumerates all coalitions; `shapley_sampled`
//! averages marginal contributions over random feature orderings.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};

use crate::ml::TrainedModel;
use crate::rng;

pub const MAX_EXACT_FEATURES: usize = 12;
pub const MIN_PERMUTATIONS: usize = 50;
pub const DEFAULT_BACKGROUND: usize = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExplainError {
    #[error("exact enumeration supports at most {MAX_EXACT_FEATURES} features, got {0}; use the sampled estimator")]
    TooManyFeatures(usize),
    #[error("background set is empty")]
    EmptyBackground,
    #[error("need at least {MIN_PERMUTATIONS} permutations, got {0}")]
    TooFewPermutations(usize),
    #[error("row width {got} does not match {expected} features")]
    Width { expected: usize, got: usize },
    #[error("explanations disagree on the feature set")]
    InconsistentFeatures,
    #[error("no explanations to aggregate")]
    Empty,
    #[error("class index {index} out of range for {n} classes")]
    ClassIndex { index: usize, n: usize },
}

/// A scalar model output evaluated on a batch of rows.
pub trait OutputFn: Sync {
    fn outputs(&self, rows: &[Vec<f64>]) -> Vec<f64>;
}

impl<F: Fn(&[f64]) -> f64 + Sync> OutputFn for F {
    fn outputs(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self(r)).collect()
    }
}

/// Probability of one class (column index into `model.classes`).
pub struct ClassProbability<'a> {
    model: &'a TrainedModel,
    index: usize,
}

impl<'a> ClassProbability<'a> {
    pub fn new(model: &'a TrainedModel, index: usize) -> Result<Self, ExplainError> {
        if index >= model.classes.len() {
            return Err(ExplainError::ClassIndex { index, n: model.classes.len() });
        }
        Ok(Self { model, index })
    }

    /// Targets the class the model predicts for `sample`.
    pub fn predicted(model: &'a TrainedModel, sample: &[f64]) -> Result<Self, ExplainError> {
        let p = model.predict_proba(&[sample.to_vec()]).map_err(|_| ExplainError::Width {
            expected: model.n_features,
            got: sample.len(),
        })?;
        let mut best = 0;
        for (i, v) in p[0].iter().enumerate() {
            if *v > p[0][best] {
                best = i;
            }
        }
        Ok(Self { model, index: best })
    }

    pub fn index(&self) -> usize {
        self.index
    }
}

impl OutputFn for ClassProbability<'_> {
    fn outputs(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        self.model.predict_proba(rows).expect("rows validated before explanation").into_iter().map(|r| r[self.index]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub features: Vec<String>,
    /// mean model output over the background
    pub base: f64,
    /// model output for the explained sample
    pub output: f64,
    pub phi: Vec<f64>,
    /// per-feature standard error; zero for exact enumeration
    pub se: Vec<f64>,
}

impl Explanation {
    /// `output - base - Σφ`
    pub fn efficiency_gap(&self) -> f64 {
        self.output - self.base - self.phi.iter().sum::<f64>()
    }
}

struct Named<'a>(&'a [String], &'a [f64]);

impl Serialize for Named<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0.iter().zip(self.1) {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

/// `{base, phi: {feature: value}, se: {feature: value}}`, plus the output.
impl Serialize for Explanation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Explanation", 4)?;
        st.serialize_field("base", &self.base)?;
        st.serialize_field("output", &self.output)?;
        st.serialize_field("phi", &Named(&self.features, &self.phi))?;
        st.serialize_field("se", &Named(&self.features, &self.se))?;
        st.end()
    }
}

fn check(background: &[Vec<f64>], sample: &[f64], features: &[String]) -> Result<usize, ExplainError> {
    if background.is_empty() {
        return Err(ExplainError::EmptyBackground);
    }
    let p = sample.len();
    if features.len() != p {
        return Err(ExplainError::Width { expected: features.len(), got: p });
    }
    if let Some(b) = background.iter().find(|b| b.len() != p) {
        return Err(ExplainError::Width { expected: p, got: b.len() });
    }
    Ok(p)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean output over the background with the features in `mask` taken from `sample`.
fn coalition_value(f: &impl OutputFn, background: &[Vec<f64>], sample: &[f64], mask: u32) -> f64 {
    let rows: Vec<Vec<f64>> = background
        .iter()
        .map(|b| b.iter().enumerate().map(|(j, &v)| if mask >> j & 1 == 1 { sample[j] } else { v }).collect())
        .collect();
    mean(&f.outputs(&rows))
}

/// Exact Shapley values by enumerating all 2^p coalitions.
pub fn shapley_exact(
    f: &impl OutputFn,
    background: &[Vec<f64>],
    sample: &[f64],
    features: &[String],
) -> Result<Explanation, ExplainError> {
    let p = check(background, sample, features)?;
    if p > MAX_EXACT_FEATURES {
        return Err(ExplainError::TooManyFeatures(p));
    }
    let v: Vec<f64> = (0..1u32 << p).into_par_iter().map(|m| coalition_value(f, background, sample, m)).collect();
    // weight |S|! (p-|S|-1)! / p! for a coalition S not containing j
    let mut fact = vec![1.0f64; p + 1];
    for i in 1..=p {
        fact[i] = fact[i - 1] * i as f64;
    }
    let weight: Vec<f64> = (0..p).map(|s| fact[s] * fact[p - s - 1] / fact[p]).collect();
    let phi: Vec<f64> = (0..p)
        .map(|j| {
            let bit = 1u32 << j;
            (0..1u32 << p)
                .filter(|m| m & bit == 0)
                .map(|m| weight[m.count_ones() as usize] * (v[(m | bit) as usize] - v[m as usize]))
                .sum()
        })
        .collect();
    Ok(Explanation {
        features: features.to_vec(),
        base: v[0],
        output: f.outputs(&[sample.to_vec()])[0],
        phi,
        se: vec![0.0; p],
    })
}

/// Permutation-sampling estimate. Each ordering (one random stream per
/// ordering) adds features one by one and records the change in the
/// background-averaged output; standard errors come from the spread of
/// those marginal contributions.
pub fn shapley_sampled(
    f: &impl OutputFn,
    background: &[Vec<f64>],
    sample: &[f64],
    features: &[String],
    n_permutations: usize,
    seed: u64,
) -> Result<Explanation, ExplainError> {
    let p = check(background, sample, features)?;
    if n_permutations < MIN_PERMUTATIONS {
        return Err(ExplainError::TooFewPermutations(n_permutations));
    }
    let contributions: Vec<Vec<f64>> = (0..n_permutations)
        .into_par_iter()
        .map(|t| {
            let mut order: Vec<usize> = (0..p).collect();
            order.shuffle(&mut rng::stream(seed, t as u64));
            let mut rows: Vec<Vec<f64>> = Vec::with_capacity((p + 1) * background.len());
            let mut current: Vec<Vec<f64>> = background.to_vec();
            rows.extend(current.iter().cloned());
            for &j in &order {
                current.iter_mut().for_each(|r| r[j] = sample[j]);
                rows.extend(current.iter().cloned());
            }
            let out = f.outputs(&rows);
            let b = background.len();
            let level: Vec<f64> = out.chunks(b).map(mean).collect();
            let mut c = vec![0.0; p];
            for (step, &j) in order.iter().enumerate() {
                c[j] = level[step + 1] - level[step];
            }
            c
        })
        .collect();
    let n = n_permutations as f64;
    let phi: Vec<f64> = (0..p).map(|j| contributions.iter().map(|c| c[j]).sum::<f64>() / n).collect();
    let se: Vec<f64> = (0..p)
        .map(|j| {
            let ss: f64 = contributions.iter().map(|c| (c[j] - phi[j]).powi(2)).sum();
            (ss / (n - 1.0)).sqrt() / n.sqrt()
        })
        .collect();
    Ok(Explanation {
        features: features.to_vec(),
        base: coalition_value(f, background, sample, 0),
        output: f.outputs(&[sample.to_vec()])[0],
        phi,
        se,
    })
}

/// Up to `n` rows drawn without replacement by `seed`, in their original order.
pub fn background_sample(rows: &[Vec<f64>], n: usize, seed: u64) -> Vec<Vec<f64>> {
    if rows.len() <= n {
        return rows.to_vec();
    }
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.shuffle(&mut rng::stream(seed, 0));
    idx.truncate(n);
    idx.sort_unstable();
    idx.into_iter().map(|i| rows[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Importance {
    pub feature: String,
    pub mean_abs_phi: f64,
}

/// Mean |φ| per feature, largest first; equal values keep feature order.
pub fn aggregate_importance(explanations: &[Explanation]) -> Result<Vec<Importance>, ExplainError> {
    let first = explanations.first().ok_or(ExplainError::Empty)?;
    if explanations.iter().any(|e| e.features != first.features) {
        return Err(ExplainError::InconsistentFeatures);
    }
    let n = explanations.len() as f64;
    let mut out: Vec<Importance> = first
        .features
        .iter()
        .enumerate()
        .map(|(j, name)| Importance {
            feature: name.clone(),
            mean_abs_phi: explanations.iter().map(|e| e.phi[j].abs()).sum::<f64>() / n,
        })
        .collect();
    out.sort_by(|a, b| b.mean_abs_phi.total_cmp(&a.mean_abs_phi));
    Ok(out)
}
