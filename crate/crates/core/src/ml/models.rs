//! Classifier roster: k-nearest neighbors, decision tree, random forest,
//! gradient-boosted trees (softmax), Gaussian naive Bayes, AdaBoost (SAMME),
//! quadratic discriminant analysis and multinomial logistic regression.
//!
//! Probability columns follow the sorted class ids seen in training.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lbfgs::{minimize, LbfgsOptions};
use super::trees::{build_cart, build_grad_tree, CartParams, Criterion, GradParams, Tree};
use super::MlError;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelId {
    KNC,
    XGB,
    RFC,
    MLP,
    DTC,
    GNB,
    GPC,
    ABC,
    QDA,
    LR,
    SVC,
}

impl ModelId {
    pub const RUNNABLE: [ModelId; 8] = [
        ModelId::KNC,
        ModelId::XGB,
        ModelId::RFC,
        ModelId::DTC,
        ModelId::GNB,
        ModelId::ABC,
        ModelId::QDA,
        ModelId::LR,
    ];

    pub fn is_runnable(self) -> bool {
        Self::RUNNABLE.contains(&self)
    }

    /// Hyperparameter names accepted in grids.
    pub fn known_params(self) -> &'static [&'static str] {
        match self {
            ModelId::KNC => &["weights", "algorithm", "n_neighbors"],
            ModelId::XGB => &["learning_rate", "n_estimators", "max_depth"],
            ModelId::RFC => &["max_depth", "n_estimators", "min_samples_split"],
            ModelId::MLP => &["hidden_layer_sizes"],
            ModelId::DTC => &["max_depth", "min_samples_split", "criterion"],
            ModelId::GNB => &["var_smoothing"],
            ModelId::GPC => &["max_iter_predict"],
            ModelId::ABC => &["n_estimators", "learning_rate"],
            ModelId::QDA => &["tol"],
            ModelId::LR => &["max_iter", "C"],
            ModelId::SVC => &["C", "kernel"],
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for ModelId {
    type Err = MlError;
    fn from_str(s: &str) -> Result<Self, MlError> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "KNC" => ModelId::KNC,
            "XGB" => ModelId::XGB,
            "RFC" => ModelId::RFC,
            "MLP" => ModelId::MLP,
            "DTC" => ModelId::DTC,
            "GNB" => ModelId::GNB,
            "GPC" => ModelId::GPC,
            "ABC" => ModelId::ABC,
            "QDA" => ModelId::QDA,
            "LR" => ModelId::LR,
            "SVC" => ModelId::SVC,
            _ => return Err(MlError::UnknownModel(s.to_string())),
        })
    }
}

/// A hyperparameter value as written in grid files (`null` is Python's None).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Null,
    Int(i64),
    Float(f64),
    Str(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Null => f.write_str("None"),
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(v) => write!(f, "{v:?}"),
            ParamValue::Str(s) => f.write_str(s),
        }
    }
}

pub type HyperParams = IndexMap<String, ParamValue>;

/// `name: value` pairs joined by commas, e.g. `learning_rate: 0.01, n_estimators: 140`.
pub fn format_params(p: &HyperParams) -> String {
    p.iter().map(|(k, v)| format!("{k}: {v}")).collect::<Vec<_>>().join(", ")
}

struct Getter<'a> {
    model: ModelId,
    params: &'a HyperParams,
}

impl Getter<'_> {
    fn bad(&self, name: &str, why: &str) -> MlError {
        MlError::BadValue {
            model: self.model,
            name: name.to_string(),
            value: self.params.get(name).map(ToString::to_string).unwrap_or_default(),
            reason: why.to_string(),
        }
    }

    fn f64(&self, name: &str, default: f64) -> Result<f64, MlError> {
        match self.params.get(name) {
            None => Ok(default),
            Some(ParamValue::Int(i)) => Ok(*i as f64),
            Some(ParamValue::Float(v)) if v.is_finite() => Ok(*v),
            Some(_) => Err(self.bad(name, "expected a number")),
        }
    }

    fn positive(&self, name: &str, default: f64) -> Result<f64, MlError> {
        let v = self.f64(name, default)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.bad(name, "must be positive"))
        }
    }

    fn count(&self, name: &str, default: usize, min: usize) -> Result<usize, MlError> {
        match self.params.get(name) {
            None => Ok(default),
            Some(ParamValue::Int(i)) if *i >= min as i64 => Ok(*i as usize),
            Some(ParamValue::Int(_)) => Err(self.bad(name, &format!("must be >= {min}"))),
            Some(_) => Err(self.bad(name, "expected an integer")),
        }
    }

    fn opt_count(&self, name: &str, min: usize) -> Result<Option<usize>, MlError> {
        match self.params.get(name) {
            None | Some(ParamValue::Null) => Ok(None),
            _ => self.count(name, 0, min).map(Some),
        }
    }

    fn choice(&self, name: &str, default: &'static str, allowed: &[&'static str]) -> Result<&'static str, MlError> {
        match self.params.get(name) {
            None => Ok(default),
            Some(ParamValue::Str(s)) => {
                let norm = s.replace(' ', "_");
                allowed
                    .iter()
                    .find(|a| **a == norm)
                    .copied()
                    .ok_or_else(|| self.bad(name, &format!("expected one of {allowed:?}")))
            }
            Some(_) => Err(self.bad(name, "expected a string")),
        }
    }
}

/// Checks names and values of a hyperparameter point without fitting.
pub fn check_params(model: ModelId, params: &HyperParams) -> Result<(), MlError> {
    for k in params.keys() {
        if !model.known_params().contains(&k.as_str()) {
            return Err(MlError::UnknownHyperparameter { model, name: k.clone() });
        }
    }
    if !model.is_runnable() {
        return Err(MlError::Unsupported(model));
    }
    Config::from_params(model, params).map(|_| ())
}

#[derive(Debug, Clone, Copy)]
enum Config {
    Knc { k: usize, distance: bool },
    Xgb { lr: f64, rounds: usize, depth: usize },
    Rfc { trees: usize, depth: Option<usize>, min_split: usize },
    Dtc { depth: Option<usize>, min_split: usize, criterion: Criterion },
    Gnb { var_smoothing: f64 },
    Abc { rounds: usize, lr: f64 },
    Qda { tol: f64 },
    Lr { c: f64, max_iter: usize },
}

impl Config {
    fn from_params(model: ModelId, params: &HyperParams) -> Result<Self, MlError> {
        let g = Getter { model, params };
        Ok(match model {
            ModelId::KNC => {
                g.choice("algorithm", "auto", &["auto", "ball_tree", "kd_tree", "brute"])?;
                Config::Knc {
                    k: g.count("n_neighbors", 5, 1)?,
                    distance: g.choice("weights", "uniform", &["uniform", "distance"])? == "distance",
                }
            }
            ModelId::XGB => Config::Xgb {
                lr: g.positive("learning_rate", 0.3)?,
                rounds: g.count("n_estimators", 100, 1)?,
                depth: g.count("max_depth", 6, 1)?,
            },
            ModelId::RFC => Config::Rfc {
                trees: g.count("n_estimators", 100, 1)?,
                depth: g.opt_count("max_depth", 1)?,
                min_split: g.count("min_samples_split", 2, 2)?,
            },
            ModelId::DTC => Config::Dtc {
                depth: g.opt_count("max_depth", 1)?,
                min_split: g.count("min_samples_split", 2, 2)?,
                criterion: match g.choice("criterion", "gini", &["gini", "entropy"])? {
                    "gini" => Criterion::Gini,
                    _ => Criterion::Entropy,
                },
            },
            ModelId::GNB => Config::Gnb { var_smoothing: g.f64("var_smoothing", 1e-9)?.max(0.0) },
            ModelId::ABC => Config::Abc {
                rounds: g.count("n_estimators", 50, 1)?,
                lr: g.positive("learning_rate", 1.0)?,
            },
            ModelId::QDA => Config::Qda { tol: g.positive("tol", 1e-4)? },
            ModelId::LR => Config::Lr { c: g.positive("C", 1.0)?, max_iter: g.count("max_iter", 100, 1)? },
            other => return Err(MlError::Unsupported(other)),
        })
    }
}

#[derive(Debug, Clone)]
enum State {
    Knn { x: Vec<Vec<f64>>, y: Vec<usize>, k: usize, distance: bool },
    Tree(Tree),
    Forest(Vec<Tree>),
    Boost { rounds: Vec<Vec<Tree>>, lr: f64 },
    Gnb { mean: Vec<Vec<f64>>, var: Vec<Vec<f64>>, log_prior: Vec<f64> },
    Ada { stumps: Vec<(Tree, f64)> },
    Qda { mean: Vec<Vec<f64>>, axes: Vec<DMatrix<f64>>, eig: Vec<Vec<f64>>, log_prior: Vec<f64> },
    Lr { w: Vec<f64> },
}

/// A fitted classifier. Probability columns follow `classes`.
#[derive(Debug, Clone, Serialize)]
pub struct TrainedModel {
    pub model_id: ModelId,
    pub params: HyperParams,
    pub seed: u64,
    pub classes: Vec<usize>,
    pub n_features: usize,
    #[serde(skip)]
    state: State,
}

fn check_x(x: &[Vec<f64>], p: Option<usize>) -> Result<usize, MlError> {
    let p = p.unwrap_or_else(|| x.first().map_or(0, Vec::len));
    for (i, row) in x.iter().enumerate() {
        if row.len() != p {
            return Err(MlError::Shape(format!("row {i} has {} features, expected {p}", row.len())));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(MlError::NonFinite { row: i, column: j });
        }
    }
    Ok(p)
}

fn softmax_inplace(v: &mut [f64]) {
    let m = v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    v.iter_mut().for_each(|x| *x /= s);
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn class_stats(x: &[Vec<f64>], y: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let p = x[0].len();
    let mut mean = vec![vec![0.0; p]; k];
    let mut n = vec![0usize; k];
    for (row, &c) in x.iter().zip(y) {
        n[c] += 1;
        for j in 0..p {
            mean[c][j] += row[j];
        }
    }
    for c in 0..k {
        for v in &mut mean[c] {
            *v /= n[c].max(1) as f64;
        }
    }
    (mean, n)
}

/// Fits `model` with the given hyperparameters. `y` holds class ids (grades).
pub fn fit(
    model: ModelId,
    params: &HyperParams,
    x: &[Vec<f64>],
    y: &[usize],
    seed: u64,
) -> Result<TrainedModel, MlError> {
    check_params(model, params)?;
    let cfg = Config::from_params(model, params)?;
    if x.len() != y.len() {
        return Err(MlError::Shape(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let p = check_x(x, None)?;
    let mut classes: Vec<usize> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(MlError::SingleClass);
    }
    let k = classes.len();
    let yi: Vec<usize> = y.iter().map(|c| classes.binary_search(c).unwrap()).collect();
    let n = x.len();

    let state = match cfg {
        Config::Knc { k: nn, distance } => State::Knn { x: x.to_vec(), y: yi, k: nn.min(n), distance },
        Config::Dtc { depth, min_split, criterion } => {
            let cp = CartParams { criterion, max_depth: depth, min_samples_split: min_split, max_features: None };
            State::Tree(build_cart(x, &yi, &vec![1.0; n], k, &cp, None))
        }
        Config::Rfc { trees, depth, min_split } => {
            let mf = ((p as f64).sqrt().floor() as usize).max(1);
            let cp =
                CartParams { criterion: Criterion::Gini, max_depth: depth, min_samples_split: min_split, max_features: Some(mf) };
            let forest = (0..trees)
                .into_par_iter()
                .map(|t| {
                    let mut r = rng::stream(seed, t as u64);
                    let mut w = vec![0.0; n];
                    for _ in 0..n {
                        w[r.random_range(0..n)] += 1.0;
                    }
                    build_cart(x, &yi, &w, k, &cp, Some(&mut r))
                })
                .collect();
            State::Forest(forest)
        }
        Config::Xgb { lr, rounds, depth } => {
            let gp = GradParams { max_depth: depth, lambda: 1.0, min_child_weight: 1.0, min_gain: 1e-6 };
            let mut margin = vec![vec![0.0; k]; n];
            let mut all = Vec::with_capacity(rounds);
            for _ in 0..rounds {
                let prob: Vec<Vec<f64>> = margin
                    .iter()
                    .map(|m| {
                        let mut v = m.clone();
                        softmax_inplace(&mut v);
                        v
                    })
                    .collect();
                let round: Vec<Tree> = (0..k)
                    .into_par_iter()
                    .map(|c| {
                        let g: Vec<f64> = (0..n).map(|i| prob[i][c] - (yi[i] == c) as u8 as f64).collect();
                        let h: Vec<f64> = (0..n).map(|i| (2.0 * prob[i][c] * (1.0 - prob[i][c])).max(1e-16)).collect();
                        build_grad_tree(x, &g, &h, &gp)
                    })
                    .collect();
                for (i, row) in x.iter().enumerate() {
                    for (c, t) in round.iter().enumerate() {
                        margin[i][c] += lr * t.leaf(row)[0];
                    }
                }
                all.push(round);
            }
            State::Boost { rounds: all, lr }
        }
        Config::Gnb { var_smoothing } => {
            let (mean, counts) = class_stats(x, &yi, k);
            let overall: Vec<f64> = (0..p)
                .map(|j| {
                    let m = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
                    x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n as f64
                })
                .collect();
            let mut eps = var_smoothing * overall.iter().fold(0.0f64, |a, &b| a.max(b));
            if eps <= 0.0 {
                eps = var_smoothing.max(f64::MIN_POSITIVE);
            }
            let mut var = vec![vec![0.0; p]; k];
            for (row, &c) in x.iter().zip(&yi) {
                for j in 0..p {
                    var[c][j] += (row[j] - mean[c][j]).powi(2);
                }
            }
            for c in 0..k {
                for v in &mut var[c] {
                    *v = *v / counts[c] as f64 + eps;
                }
            }
            let log_prior = counts.iter().map(|&c| (c as f64 / n as f64).ln()).collect();
            State::Gnb { mean, var, log_prior }
        }
        Config::Abc { rounds, lr } => {
            let cp = CartParams { criterion: Criterion::Gini, max_depth: Some(1), min_samples_split: 2, max_features: None };
            let mut w = vec![1.0 / n as f64; n];
            let mut stumps = Vec::new();
            for m in 0..rounds {
                let stump = build_cart(x, &yi, &w, k, &cp, None);
                let miss: Vec<bool> = x.iter().zip(&yi).map(|(r, &c)| argmax(stump.leaf(r)) != c).collect();
                let wsum: f64 = w.iter().sum();
                let err = miss.iter().zip(&w).filter(|(m, _)| **m).map(|(_, w)| w).sum::<f64>() / wsum;
                if err <= 0.0 {
                    stumps.push((stump, 1.0));
                    break;
                }
                if err >= 1.0 - 1.0 / k as f64 {
                    if m == 0 {
                        stumps.push((stump, 1.0));
                    }
                    break;
                }
                let alpha = lr * (((1.0 - err) / err).ln() + (k as f64 - 1.0).ln());
                for (wi, &mi) in w.iter_mut().zip(&miss) {
                    if mi {
                        *wi *= alpha.exp();
                    }
                }
                let s: f64 = w.iter().sum();
                w.iter_mut().for_each(|v| *v /= s);
                stumps.push((stump, alpha));
            }
            State::Ada { stumps }
        }
        Config::Qda { tol } => {
            let (mean, counts) = class_stats(x, &yi, k);
            let mut axes = Vec::with_capacity(k);
            let mut eig = Vec::with_capacity(k);
            for c in 0..k {
                let mut cov = DMatrix::<f64>::zeros(p, p);
                for (row, _) in x.iter().zip(&yi).filter(|(_, &yc)| yc == c) {
                    let d: Vec<f64> = row.iter().zip(&mean[c]).map(|(a, b)| a - b).collect();
                    for a in 0..p {
                        for b in 0..p {
                            cov[(a, b)] += d[a] * d[b];
                        }
                    }
                }
                if counts[c] > 1 {
                    cov /= (counts[c] - 1) as f64;
                }
                let se = SymmetricEigen::new(cov);
                eig.push(se.eigenvalues.iter().map(|&l| l.max(tol)).collect());
                axes.push(se.eigenvectors);
            }
            let log_prior = counts.iter().map(|&c| (c as f64 / n as f64).ln()).collect();
            State::Qda { mean, axes, eig, log_prior }
        }
        Config::Lr { c, max_iter } => {
            let dim = k * (p + 1);
            let inv_n = 1.0 / n as f64;
            let objective = |w: &[f64], grad: &mut [f64]| -> f64 {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let mut loss = 0.0;
                let mut z = vec![0.0; k];
                for (row, &yc) in x.iter().zip(&yi) {
                    for cl in 0..k {
                        let base = cl * (p + 1);
                        z[cl] = w[base + p] + (0..p).map(|j| w[base + j] * row[j]).sum::<f64>();
                    }
                    let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                    loss += lse - z[yc];
                    for cl in 0..k {
                        let d = (z[cl] - lse).exp() - (cl == yc) as u8 as f64;
                        let base = cl * (p + 1);
                        for j in 0..p {
                            grad[base + j] += d * row[j];
                        }
                        grad[base + p] += d;
                    }
                }
                let mut pen = 0.0;
                for cl in 0..k {
                    for j in 0..p {
                        let v = w[cl * (p + 1) + j];
                        pen += v * v;
                        grad[cl * (p + 1) + j] += v / c;
                    }
                }
                grad.iter_mut().for_each(|g| *g *= inv_n);
                (loss + pen / (2.0 * c)) * inv_n
            };
            let res = minimize(objective, vec![0.0; dim], &LbfgsOptions { max_iter, gtol: 1e-4, memory: 10 });
            if !res.converged {
                log::debug!("LR stopped after {} iterations at loss {:.6} without reaching the gradient tolerance", res.iterations, res.value);
            }
            State::Lr { w: res.x }
        }
    };
    Ok(TrainedModel { model_id: model, params: params.clone(), seed, classes, n_features: p, state })
}

impl TrainedModel {
    /// Class probabilities, one row per input row; rows sum to 1.
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, MlError> {
        check_x(x, Some(self.n_features))?;
        let k = self.classes.len();
        Ok(x.iter().map(|row| self.proba_row(row, k)).collect())
    }

    /// Most probable class id per row (ties go to the smaller id).
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<usize>, MlError> {
        Ok(self.predict_proba(x)?.iter().map(|p| self.classes[argmax(p)]).collect())
    }

    fn proba_row(&self, row: &[f64], k: usize) -> Vec<f64> {
        match &self.state {
            State::Knn { x, y, k: nn, distance } => {
                let mut d: Vec<(f64, usize)> = x
                    .iter()
                    .enumerate()
                    .map(|(i, r)| (r.iter().zip(row).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), i))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let nb = &d[..*nn];
                let mut out = vec![0.0; k];
                let exact = nb.iter().any(|(dist, _)| *dist == 0.0);
                for &(dist, i) in nb {
                    let w = if !*distance {
                        1.0
                    } else if exact {
                        (dist == 0.0) as u8 as f64
                    } else {
                        1.0 / dist
                    };
                    out[y[i]] += w;
                }
                let s: f64 = out.iter().sum();
                out.iter_mut().for_each(|v| *v /= s);
                out
            }
            State::Tree(t) => t.leaf(row).to_vec(),
            State::Forest(ts) => {
                let mut out = vec![0.0; k];
                for t in ts {
                    for (o, v) in out.iter_mut().zip(t.leaf(row)) {
                        *o += v;
                    }
                }
                out.iter_mut().for_each(|v| *v /= ts.len() as f64);
                out
            }
            State::Boost { rounds, lr } => {
                let mut m = vec![0.0; k];
                for round in rounds {
                    for (c, t) in round.iter().enumerate() {
                        m[c] += lr * t.leaf(row)[0];
                    }
                }
                softmax_inplace(&mut m);
                m
            }
            State::Gnb { mean, var, log_prior } => {
                let mut z: Vec<f64> = (0..k)
                    .map(|c| {
                        log_prior[c]
                            - 0.5
                                * row
                                    .iter()
                                    .enumerate()
                                    .map(|(j, v)| {
                                        (2.0 * std::f64::consts::PI * var[c][j]).ln()
                                            + (v - mean[c][j]).powi(2) / var[c][j]
                                    })
                                    .sum::<f64>()
                    })
                    .collect();
                softmax_inplace(&mut z);
                z
            }
            State::Ada { stumps } => {
                let total: f64 = stumps.iter().map(|(_, a)| a).sum();
                let mut d = vec![0.0; k];
                for (t, a) in stumps {
                    d[argmax(t.leaf(row))] += a / total;
                }
                let scale = (k as f64 - 1.0).max(1.0);
                d.iter_mut().for_each(|v| *v /= scale);
                softmax_inplace(&mut d);
                d
            }
            State::Qda { mean, axes, eig, log_prior } => {
                let mut z: Vec<f64> = (0..k)
                    .map(|c| {
                        let diff: Vec<f64> = row.iter().zip(&mean[c]).map(|(a, b)| a - b).collect();
                        let mut maha = 0.0;
                        let mut logdet = 0.0;
                        for (i, &l) in eig[c].iter().enumerate() {
                            let proj: f64 = (0..diff.len()).map(|a| axes[c][(a, i)] * diff[a]).sum();
                            maha += proj * proj / l;
                            logdet += l.ln();
                        }
                        log_prior[c] - 0.5 * (logdet + maha)
                    })
                    .collect();
                softmax_inplace(&mut z);
                z
            }
            State::Lr { w } => {
                let p = row.len();
                let mut z: Vec<f64> = (0..k)
                    .map(|c| {
                        let base = c * (p + 1);
                        w[base + p] + (0..p).map(|j| w[base + j] * row[j]).sum::<f64>()
                    })
                    .collect();
                softmax_inplace(&mut z);
                z
            }
        }
    }
}
