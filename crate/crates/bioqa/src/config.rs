//! Run configuration: models, providers, policies, and paths.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleConfig;
use crate::error::{Error, Result};
use crate::fewshot::ShotPolicy;
use crate::gateway::ModelSpec;
use crate::retrieval::{EmbeddingProviderSpec, DEFAULT_SNIPPET_K};
use crate::summary::ScorerSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunPaths {
    pub batch: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub store: Option<PathBuf>,
    pub out_dir: PathBuf,
}

/// Everything a run needs; loaded from a single JSON document. Relative
/// paths are resolved against the config file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub embedding: EmbeddingProviderSpec,
    #[serde(default)]
    pub scorer: ScorerSpec,
    #[serde(default)]
    pub shots: ShotPolicy,
    #[serde(default = "default_snippet_k")]
    pub snippet_k: usize,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub paths: RunPaths,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_dir: Option<PathBuf>,
}

fn default_snippet_k() -> usize {
    DEFAULT_SNIPPET_K
}

fn default_parallelism() -> usize {
    1
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&path);
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig = serde_json::from_slice(&raw)
            .map_err(|e| Error::Config(format!("cannot parse {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        resolve(&base, &mut config.paths.batch);
        resolve(&base, &mut config.paths.out_dir);
        if let Some(store) = &mut config.paths.store {
            resolve(&base, store);
        }
        if let Some(dir) = &mut config.template_dir {
            resolve(&base, dir);
        }
        for model in &mut config.models {
            if let Some(fixtures) = &mut model.fixtures {
                resolve(&base, fixtures);
            }
        }
        // Default priority is the configured model order.
        if config.ensemble.model_priority.is_empty() {
            config.ensemble.model_priority = config.models.iter().map(|m| m.name.clone()).collect();
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("at least one model is required".into()));
        }
        let mut names = BTreeSet::new();
        for model in &self.models {
            model.validate()?;
            if !names.insert(model.name.as_str()) {
                return Err(Error::Config(format!("duplicate model name {}", model.name)));
            }
        }
        if self.snippet_k < 1 {
            return Err(Error::Config("snippet_k must be at least 1".into()));
        }
        if self.parallelism < 1 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        self.embedding.validate()?;
        self.scorer.validate()?;
        self.ensemble.validate()?;
        // Priority must be a permutation of the configured models.
        let priority: BTreeSet<&str> = self.ensemble.model_priority.iter().map(String::as_str).collect();
        if priority.len() != self.ensemble.model_priority.len() || priority != names {
            return Err(Error::Config(
                "ensemble.model_priority must list every configured model exactly once".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ChatProviderKind;

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("config.json");
        fs::write(&path, body).unwrap();
        path
    }

    const MINIMAL: &str = r#"{
        "models": [
            {"name": "m1", "kind": "constant", "response": "{\"answer\":\"yes\"}"}
        ],
        "paths": {"batch": "batch.json", "out_dir": "out"}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), MINIMAL);
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(config.snippet_k, 10);
        assert_eq!(config.parallelism, 1);
        assert_eq!(config.shots.factoid, 3);
        assert_eq!(config.shots.yesno, 0);
        assert_eq!(config.ensemble.threshold, 2);
        assert_eq!(config.ensemble.model_priority, vec!["m1".to_string()]);
        assert_eq!(config.paths.batch, dir.path().join("batch.json"));
    }

    #[test]
    fn priority_must_cover_models_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"{
            "models": [
                {"name": "m1", "kind": "constant", "response": "x"},
                {"name": "m2", "kind": "constant", "response": "x"}
            ],
            "ensemble": {"model_priority": ["m1"]},
            "paths": {"batch": "b.json", "out_dir": "out"}
        }"#;
        let path = write_config(dir.path(), body);
        assert!(matches!(RunConfig::load(&path), Err(Error::Config(_))));
    }

    #[test]
    fn http_model_without_endpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"{
            "models": [{"name": "m1", "kind": "http-chat"}],
            "paths": {"batch": "b.json", "out_dir": "out"}
        }"#;
        let path = write_config(dir.path(), body);
        assert!(matches!(RunConfig::load(&path), Err(Error::Config(_))));
    }

    #[test]
    fn replay_fixture_paths_resolve_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"{
            "models": [{"name": "m1", "kind": "replay", "fixtures": "fx/m1.json"}],
            "paths": {"batch": "b.json", "out_dir": "out"}
        }"#;
        let path = write_config(dir.path(), body);
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(config.models[0].kind, ChatProviderKind::Replay);
        assert_eq!(config.models[0].fixtures.as_deref(), Some(dir.path().join("fx/m1.json").as_path()));
    }
}
