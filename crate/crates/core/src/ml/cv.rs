//! Stratified folds, grid search, nested cross-validation and held-out
//! evaluation.
//!
//! Imputation and scaling are always fitted on the rows a model trains on,
//! never on the rows it is scored on.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use super::auc::roc_auc_weighted_ovr;
use super::models::{check_params, fit, format_params, HyperParams, TrainedModel};
use super::{MlError, ModelId, ModelSpec};
use crate::features::{FeatureTable, GradeSchema, MedianImputer, MinMaxScaler, TableError};
use crate::numfmt::score3;
use crate::rng;

/// Detection uses the binary view (grade > 0); grading uses grades as-is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Detection,
    Grading,
}

impl Task {
    pub fn labels(self, table: &FeatureTable) -> Vec<usize> {
        table
            .records
            .iter()
            .map(|r| match self {
                Task::Detection => GradeSchema::binary_view(r.grade) as usize,
                Task::Grading => r.grade as usize,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CvOptions {
    pub k_outer: usize,
    pub k_inner: usize,
    pub seed: u64,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self { k_outer: 6, k_inner: 4, seed: 0 }
    }
}

fn class_counts(y: &[usize]) -> BTreeMap<usize, usize> {
    let mut m = BTreeMap::new();
    for &c in y {
        *m.entry(c).or_insert(0) += 1;
    }
    m
}

/// Test indices of each fold. Within every class the members are shuffled
/// (one stream per class) and dealt round-robin, continuing the deal across
/// classes so fold sizes differ by at most one.
pub fn stratified_kfold(y: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, MlError> {
    let counts = class_counts(y);
    let deficient: Vec<(usize, usize)> = counts.iter().filter(|(_, &n)| n < k).map(|(&c, &n)| (c, n)).collect();
    if k < 2 || !deficient.is_empty() {
        return Err(MlError::Stratification { folds: k, deficient });
    }
    let mut folds = vec![Vec::new(); k];
    let mut deal = 0usize;
    for &c in counts.keys() {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        idx.shuffle(&mut rng::stream(seed, c as u64));
        for i in idx {
            folds[deal % k].push(i);
            deal += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

fn complement(n: usize, test: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    test.iter().for_each(|&i| mask[i] = false);
    (0..n).filter(|&i| mask[i]).collect()
}

fn pick<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PointScore {
    pub params: HyperParams,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridResult {
    pub model_id: ModelId,
    pub k: usize,
    pub best: HyperParams,
    pub best_score: f64,
    pub scores: Vec<PointScore>,
    /// invalid points with the reason they were skipped
    pub skipped: Vec<(String, String)>,
}

/// Exhaustive search over `spec`'s grid, scored by the mean weighted OvR
/// AUC over `k` stratified folds. The first point (in odometer order) with
/// the highest mean wins.
pub fn grid_search(spec: &ModelSpec, x: &[Vec<f64>], y: &[usize], k: usize, seed: u64) -> Result<GridResult, MlError> {
    if !spec.model_id.is_runnable() {
        return Err(MlError::Unsupported(spec.model_id));
    }
    let folds = stratified_kfold(y, k, seed)?;
    let mut valid = Vec::new();
    let mut skipped = Vec::new();
    for p in spec.points() {
        match check_params(spec.model_id, &p) {
            Ok(()) => valid.push(p),
            Err(e @ MlError::BadValue { .. }) => {
                log::warn!("skipping grid point {{{}}}: {e}", format_params(&p));
                skipped.push((format_params(&p), e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    if valid.is_empty() {
        return Err(MlError::EmptyGrid(spec.model_id));
    }
    let splits: Vec<(Vec<usize>, Vec<usize>)> = folds.iter().map(|t| (complement(y.len(), t), t.clone())).collect();
    let units: Vec<(usize, usize)> = (0..valid.len()).flat_map(|p| (0..k).map(move |f| (p, f))).collect();
    let results: Vec<Result<f64, MlError>> = units
        .par_iter()
        .map(|&(p, f)| {
            let (tr, te) = &splits[f];
            let m = fit(spec.model_id, &valid[p], &pick(x, tr), &pick(y, tr), rng::derive(seed, f as u64))?;
            let proba = m.predict_proba(&pick(x, te))?;
            Ok(roc_auc_weighted_ovr(&pick(y, te), &proba, &m.classes)?.value)
        })
        .collect();
    let mut flat = results.into_iter();
    let mut scores = Vec::with_capacity(valid.len());
    for params in valid {
        let fold_scores = (0..k).map(|_| flat.next().unwrap()).collect::<Result<Vec<f64>, _>>()?;
        let mean = fold_scores.iter().sum::<f64>() / k as f64;
        scores.push(PointScore { params, fold_scores, mean });
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.mean > scores[best].mean {
            best = i;
        }
    }
    Ok(GridResult {
        model_id: spec.model_id,
        k,
        best: scores[best].params.clone(),
        best_score: scores[best].mean,
        scores,
        skipped,
    })
}

/// Median imputation followed by min-max scaling, fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Preprocessor {
    pub imputer: MedianImputer,
    pub scaler: MinMaxScaler,
}

impl Preprocessor {
    pub fn fit(rows: &[Vec<Option<f64>>]) -> Result<Self, TableError> {
        let imputer = MedianImputer::fit(rows)?;
        let scaler = MinMaxScaler::fit(&imputer.transform(rows)?)?;
        Ok(Self { imputer, scaler })
    }

    pub fn transform(&self, rows: &[Vec<Option<f64>>]) -> Result<Vec<Vec<f64>>, TableError> {
        self.scaler.transform(&self.imputer.transform(rows)?)
    }
}

/// Preprocessing plus a fitted model.
#[derive(Debug, Clone, Serialize)]
pub struct FittedPipeline {
    pub preprocessor: Preprocessor,
    pub model: TrainedModel,
}

impl FittedPipeline {
    pub fn predict_proba(&self, rows: &[Vec<Option<f64>>]) -> Result<Vec<Vec<f64>>, MlError> {
        self.model.predict_proba(&self.preprocessor.transform(rows)?)
    }
}

/// Largest fold count `<= requested` that every class can fill.
fn feasible_folds(y: &[usize], requested: usize) -> usize {
    class_counts(y).values().copied().min().unwrap_or(0).min(requested)
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub params: HyperParams,
    pub inner_score: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub model_id: ModelId,
    pub seed: u64,
    pub k_outer: usize,
    pub k_inner: usize,
    /// set when the requested fold counts were lowered to fit small classes
    pub fold_reduction: Option<String>,
    pub folds: Vec<FoldResult>,
    pub mean: f64,
    /// population standard deviation over the outer folds
    pub std: f64,
    pub skipped_points: usize,
    pub train_minutes: f64,
}

impl EvalReport {
    pub fn fold_scores(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.score).collect()
    }

    /// `.mmm±.sss`
    pub fn mean_std(&self) -> String {
        format_mean_std(self.mean, self.std)
    }
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{}±{}", score3(mean), score3(std))
}

/// Minutes with three decimals, leading zero dropped below one (`.048`).
pub fn format_minutes(m: f64) -> String {
    score3(m)
}

/// Outer/inner fold counts actually usable for `y`, and a note when they
/// differ from the request.
fn plan_folds(y: &[usize], opts: &CvOptions) -> Result<(usize, usize, Option<String>), MlError> {
    let k_outer = feasible_folds(y, opts.k_outer);
    if k_outer < 2 {
        return Err(MlError::Stratification { folds: opts.k_outer, deficient: deficient(y, 2) });
    }
    // smallest class count left in any outer-train split
    let min_train = class_counts(y).values().map(|&n| n - n.div_ceil(k_outer)).min().unwrap_or(0);
    let k_inner = opts.k_inner.min(min_train);
    if k_inner < 2 {
        return Err(MlError::Stratification { folds: opts.k_inner, deficient: deficient(y, 2 * k_outer) });
    }
    let note = (k_outer != opts.k_outer || k_inner != opts.k_inner).then(|| {
        format!(
            "folds reduced from {}x{} to {}x{} (smallest class has {} members)",
            opts.k_outer,
            opts.k_inner,
            k_outer,
            k_inner,
            class_counts(y).values().min().unwrap()
        )
    });
    if let Some(n) = &note {
        log::warn!("{n}");
    }
    Ok((k_outer, k_inner, note))
}

fn deficient(y: &[usize], need: usize) -> Vec<(usize, usize)> {
    class_counts(y).into_iter().filter(|(_, n)| *n < need).collect()
}

/// Test indices of the outer folds `nested_cv` uses for `y` and `opts`.
pub fn outer_folds(y: &[usize], opts: &CvOptions) -> Result<Vec<Vec<usize>>, MlError> {
    let (k_outer, _, _) = plan_folds(y, opts)?;
    stratified_kfold(y, k_outer, rng::derive(opts.seed, 1))
}

/// Nested cross-validation: the outer folds estimate performance, the inner
/// folds pick hyperparameters on each outer-train split.
pub fn nested_cv(spec: &ModelSpec, rows: &[Vec<Option<f64>>], y: &[usize], opts: &CvOptions) -> Result<EvalReport, MlError> {
    let start = Instant::now();
    let (k_outer, k_inner, fold_reduction) = plan_folds(y, opts)?;
    let outer = stratified_kfold(y, k_outer, rng::derive(opts.seed, 1))?;
    debug_assert_eq!(outer, outer_folds(y, opts)?);
    let mut folds = Vec::with_capacity(k_outer);
    let mut skipped_points = 0;
    for (f, test) in outer.iter().enumerate() {
        let train = complement(y.len(), test);
        let pre = Preprocessor::fit(&pick(rows, &train))?;
        let (xtr, ytr) = (pre.transform(&pick(rows, &train))?, pick(y, &train));
        let xte = pre.transform(&pick(rows, test))?;
        let fold_seed = rng::derive(opts.seed, 100 + f as u64);
        let grid = grid_search(spec, &xtr, &ytr, k_inner, fold_seed)?;
        skipped_points = grid.skipped.len();
        let model = fit(spec.model_id, &grid.best, &xtr, &ytr, rng::derive(fold_seed, 0xF17))?;
        let score = roc_auc_weighted_ovr(&pick(y, test), &model.predict_proba(&xte)?, &model.classes)?.value;
        folds.push(FoldResult {
            fold: f,
            n_train: train.len(),
            n_test: test.len(),
            params: grid.best,
            inner_score: grid.best_score,
            score,
        });
    }
    let (mean, std) = mean_std(&folds.iter().map(|f| f.score).collect::<Vec<_>>());
    Ok(EvalReport {
        model_id: spec.model_id,
        seed: opts.seed,
        k_outer,
        k_inner,
        fold_reduction,
        folds,
        mean,
        std,
        skipped_points,
        train_minutes: start.elapsed().as_secs_f64() / 60.0,
    })
}

/// Final model for held-out evaluation: a grid search on the whole training
/// table picks the hyperparameters, then the model is refitted on all of it.
pub fn fit_final(spec: &ModelSpec, rows: &[Vec<Option<f64>>], y: &[usize], opts: &CvOptions) -> Result<(FittedPipeline, GridResult), MlError> {
    let k = feasible_folds(y, opts.k_inner);
    let pre = Preprocessor::fit(rows)?;
    let x = pre.transform(rows)?;
    let seed = rng::derive(opts.seed, 2);
    let grid = grid_search(spec, &x, y, k, seed)?;
    let model = fit(spec.model_id, &grid.best, &x, y, rng::derive(seed, 0xF17))?;
    Ok((FittedPipeline { preprocessor: pre, model }, grid))
}

/// The `k` reports with the highest outer-fold mean; ties keep input order.
pub fn top_k(reports: &[EvalReport], k: usize) -> Vec<&EvalReport> {
    let mut order: Vec<&EvalReport> = reports.iter().collect();
    order.sort_by(|a, b| b.mean.total_cmp(&a.mean));
    order.truncate(k);
    order
}

#[derive(Debug, Clone, Serialize)]
pub struct TestReport {
    pub rank: usize,
    pub model_id: ModelId,
    pub params: HyperParams,
    pub test_score: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub train_minutes: f64,
}

/// Refits each spec on the full training table and scores it on the test
/// table. Output is ranked by test score (ties keep input order).
pub fn evaluate_test(
    specs: &[ModelSpec],
    train: &FeatureTable,
    test: &FeatureTable,
    task: Task,
    opts: &CvOptions,
) -> Result<Vec<TestReport>, MlError> {
    let train_ids: std::collections::HashSet<&str> = train.records.iter().map(|r| r.image_id.as_str()).collect();
    let mut overlap: Vec<String> =
        test.records.iter().filter(|r| train_ids.contains(r.image_id.as_str())).map(|r| r.image_id.clone()).collect();
    if !overlap.is_empty() {
        overlap.sort();
        return Err(TableError::Leakage(overlap).into());
    }
    if train.feature_names != test.feature_names {
        return Err(MlError::Shape("train and test tables have different feature columns".into()));
    }
    let (rtr, _) = train.rows();
    let (rte, _) = test.rows();
    let (ytr, yte) = (task.labels(train), task.labels(test));
    let mut out = Vec::with_capacity(specs.len());
    for spec in specs {
        let start = Instant::now();
        let (pipe, grid) = fit_final(spec, &rtr, &ytr, opts)?;
        let minutes = start.elapsed().as_secs_f64() / 60.0;
        let score = roc_auc_weighted_ovr(&yte, &pipe.predict_proba(&rte)?, &pipe.model.classes)?.value;
        out.push(TestReport {
            rank: 0,
            model_id: spec.model_id,
            params: grid.best,
            test_score: score,
            n_train: rtr.len(),
            n_test: rte.len(),
            train_minutes: minutes,
        });
    }
    out.sort_by(|a, b| b.test_score.total_cmp(&a.test_score));
    out.iter_mut().enumerate().for_each(|(i, r)| r.rank = i + 1);
    Ok(out)
}
