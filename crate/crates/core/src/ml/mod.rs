//! Classifiers, model selection and embedding.

mod lbfgs;
mod trees;

pub mod auc;
pub mod cv;
pub mod models;
pub mod tsne;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use auc::{roc_auc_binary, roc_auc_weighted_ovr, AucError, ClassAuc, OvrAuc};
pub use cv::{
    evaluate_test, fit_final, format_mean_std, format_minutes, grid_search, mean_std, nested_cv, outer_folds, stratified_kfold,
    top_k, CvOptions, EvalReport, FittedPipeline, FoldResult, GridResult, PointScore, Preprocessor, Task, TestReport,
};
pub use models::{check_params, fit, format_params, HyperParams, ModelId, ParamValue, TrainedModel};
pub use tsne::{tsne_embed, TsneOptions, TsneResult};

#[derive(Debug, thiserror::Error)]
pub enum MlError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("{0} is parsed but not implemented; remove it from the grid")]
    Unsupported(ModelId),
    #[error("{model} has no hyperparameter `{name}`")]
    UnknownHyperparameter { model: ModelId, name: String },
    #[error("{model}: {name} = {value}: {reason}")]
    BadValue { model: ModelId, name: String, value: String, reason: String },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("non-finite feature value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cannot stratify into {folds} folds; classes with too few members: {deficient:?}")]
    Stratification { folds: usize, deficient: Vec<(usize, usize)> },
    #[error("every grid point of {0} is invalid")]
    EmptyGrid(ModelId),
    #[error(transparent)]
    Auc(#[from] AucError),
    #[error(transparent)]
    Table(#[from] crate::features::TableError),
    #[error("perplexity {perplexity} is infeasible for {n} points; maximum is {max}")]
    Perplexity { perplexity: f64, n: usize, max: f64 },
    #[error("grid config: {0}")]
    Config(String),
}

/// Hyperparameter grid for one model; values keep the listed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: ModelId,
    pub grid: IndexMap<String, Vec<ParamValue>>,
}

impl ModelSpec {
    pub fn new(model_id: ModelId, grid: IndexMap<String, Vec<ParamValue>>) -> Result<Self, MlError> {
        for (k, v) in &grid {
            if !model_id.known_params().contains(&k.as_str()) {
                return Err(MlError::UnknownHyperparameter { model: model_id, name: k.clone() });
            }
            if v.is_empty() {
                return Err(MlError::Config(format!("{model_id}: `{k}` has no values")));
            }
        }
        Ok(ModelSpec { model_id, grid })
    }

    /// A single-point grid.
    pub fn fixed(model_id: ModelId, params: &HyperParams) -> Result<Self, MlError> {
        Self::new(model_id, params.iter().map(|(k, v)| (k.clone(), vec![v.clone()])).collect())
    }

    pub fn n_points(&self) -> usize {
        self.grid.values().map(Vec::len).product()
    }

    /// Grid points in odometer order: the last listed hyperparameter varies fastest.
    pub fn points(&self) -> Vec<HyperParams> {
        let keys: Vec<&String> = self.grid.keys().collect();
        let mut out = Vec::with_capacity(self.n_points());
        let mut idx = vec![0usize; keys.len()];
        loop {
            out.push(keys.iter().zip(&idx).map(|(k, &i)| ((*k).clone(), self.grid[*k][i].clone())).collect());
            let mut d = keys.len();
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < self.grid[keys[d]].len() {
                    break;
                }
                idx[d] = 0;
            }
        }
    }
}

/// The built-in grids, as listed for every model including the ones that
/// cannot be run.
pub const DEFAULT_GRIDS_JSON: &str = include_str!("default_grids.json");

/// Parses a grids file: `{ "MODEL": { "param": [values...] } }`.
pub fn parse_grids(json: &str) -> Result<Vec<ModelSpec>, MlError> {
    let raw: IndexMap<String, IndexMap<String, Vec<ParamValue>>> =
        serde_json::from_str(json).map_err(|e| MlError::Config(e.to_string()))?;
    raw.into_iter().map(|(m, grid)| ModelSpec::new(m.parse()?, grid)).collect()
}

pub fn default_grids() -> Vec<ModelSpec> {
    parse_grids(DEFAULT_GRIDS_JSON).expect("built-in grids parse")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids_cover_roster() {
        let g = default_grids();
        assert_eq!(g.len(), 11);
        let rfc = g.iter().find(|s| s.model_id == ModelId::RFC).unwrap();
        assert_eq!(rfc.n_points(), 240);
        let xgb = g.iter().find(|s| s.model_id == ModelId::XGB).unwrap();
        assert_eq!(xgb.grid["learning_rate"], vec![ParamValue::Float(1e-3), ParamValue::Float(1e-2), ParamValue::Float(1e-1)]);
        assert_eq!(xgb.grid["n_estimators"], vec![ParamValue::Int(100), ParamValue::Int(120), ParamValue::Int(140)]);
        let lr = g.iter().find(|s| s.model_id == ModelId::LR).unwrap();
        assert_eq!(lr.grid["C"].len(), 7);
        assert!(lr.grid["C"].contains(&ParamValue::Float(0.1)));
    }

    #[test]
    fn odometer_order() {
        let spec = parse_grids(r#"{"DTC": {"max_depth": [1, null], "criterion": ["gini", "entropy"]}}"#).unwrap();
        let pts: Vec<String> = spec[0].points().iter().map(format_params).collect();
        assert_eq!(
            pts,
            [
                "max_depth: 1, criterion: gini",
                "max_depth: 1, criterion: entropy",
                "max_depth: None, criterion: gini",
                "max_depth: None, criterion: entropy"
            ]
        );
    }

    #[test]
    fn unknown_names_rejected() {
        assert!(matches!(parse_grids(r#"{"DTC": {"depth": [1]}}"#), Err(MlError::UnknownHyperparameter { .. })));
        assert!(matches!(parse_grids(r#"{"NB": {}}"#), Err(MlError::UnknownModel(_))));
    }
}
