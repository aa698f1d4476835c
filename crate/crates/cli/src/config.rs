//! Run configuration: a JSON file whose fields all have defaults, overridden
//! by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use retina_vasc::features::Disease;
use retina_vasc::ml::{default_grids, parse_grids, ModelId, ModelSpec, Task};
use retina_vasc::vessel::{ZoneId, ZoneSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub disease: Disease,
    /// measurement zones by letter, e.g. `["B", "C"]`
    pub zones: Vec<String>,
    /// grids file; the built-in grids when absent
    pub grid_file: Option<PathBuf>,
    pub seed: u64,
    pub k_outer: usize,
    pub k_inner: usize,
    pub task: Task,
    /// restrict training to these models (runnable ones only)
    pub models: Option<Vec<ModelId>>,
    pub top_k: usize,
    pub explain_samples: usize,
    pub background_size: usize,
    pub permutations: usize,
    pub top_features: usize,
    pub perplexity: f64,
    pub tsne_iterations: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            disease: Disease::Dr,
            zones: vec!["B".into(), "C".into()],
            grid_file: None,
            seed: 0,
            k_outer: 6,
            k_inner: 4,
            task: Task::Grading,
            models: None,
            top_k: 4,
            explain_samples: 20,
            background_size: 100,
            permutations: 200,
            top_features: 15,
            perplexity: 30.0,
            tsne_iterations: 1000,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // a relative grid file is resolved against the config's directory
        if let Some(g) = &cfg.grid_file {
            if g.is_relative() {
                cfg.grid_file = Some(path.parent().unwrap_or(Path::new(".")).join(g));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if let Some(g) = &self.grid_file {
            if !g.is_file() {
                bail!("grid file {} does not exist", g.display());
            }
        }
        self.zone_specs()?;
        if self.k_outer < 2 || self.k_inner < 2 {
            bail!("fold counts must be at least 2 (got {}x{})", self.k_outer, self.k_inner);
        }
        if self.top_k == 0 {
            bail!("top_k must be positive");
        }
        Ok(())
    }

    pub fn zone_specs(&self) -> anyhow::Result<Vec<ZoneSpec>> {
        if self.zones.is_empty() {
            bail!("at least one zone is required");
        }
        self.zones
            .iter()
            .map(|z| {
                let mut c = z.chars();
                match (c.next().and_then(ZoneId::from_letter), c.next()) {
                    (Some(id), None) => Ok(ZoneSpec::standard(id)),
                    _ => bail!("unknown zone {z:?}; expected A, B or C"),
                }
            })
            .collect()
    }

    /// Every grid in the grid file (runnable or not).
    pub fn all_grids(&self) -> anyhow::Result<Vec<ModelSpec>> {
        match &self.grid_file {
            None => Ok(default_grids()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading grid file {}", p.display()))?;
                Ok(parse_grids(&text)?)
            }
        }
    }

    /// Grids to train: the selected models, or every runnable model in the
    /// grid file. Selecting a model that cannot run is an error.
    pub fn training_grids(&self) -> anyhow::Result<Vec<ModelSpec>> {
        let all = self.all_grids()?;
        match &self.models {
            None => Ok(all.into_iter().filter(|s| s.model_id.is_runnable()).collect()),
            Some(ids) => ids
                .iter()
                .map(|id| {
                    if !id.is_runnable() {
                        bail!("{id} is parsed but not implemented");
                    }
                    all.iter().find(|s| s.model_id == *id).cloned().with_context(|| format!("no grid for {id}"))
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.training_grids().unwrap().len(), 8);
    }

    #[test]
    fn partial_files_and_unknown_keys() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 9, "task": "detection"}"#).unwrap();
        assert_eq!((c.seed, c.task, c.k_outer), (9, Task::Detection, 6));
        assert!(serde_json::from_str::<RunConfig>(r#"{"sead": 9}"#).is_err());
        let bad = RunConfig { models: Some(vec![ModelId::SVC]), ..Default::default() };
        assert!(bad.training_grids().is_err());
        let bad = RunConfig { zones: vec!["D".into()], ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
