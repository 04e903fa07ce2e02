//! The declarative run file and its resolution against CLI overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use polysim::config::ExperimentConfig;
use polysim::embedstore::Casing;
use polysim::encoder::BackendConfig;
use polysim::metrics::Pooling;
use polysim::translation::EngineId;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub languages: Vec<String>,
    #[serde(default = "default_engine")]
    pub engine: String,
    #[serde(default)]
    pub pooling: Pooling,
    /// Re-translate with sentinels when exact and fuzzy matching fail.
    #[serde(default = "yes")]
    pub marker: bool,
    pub backend: BackendConfig,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub vectors: BTreeMap<String, VectorSource>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum VectorSource {
    Path(PathBuf),
    Detailed {
        path: PathBuf,
        limit: Option<usize>,
        #[serde(default)]
        casing: CasingName,
    },
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CasingName {
    #[default]
    Lower,
    Preserve,
}

impl VectorSource {
    pub fn path(&self) -> &Path {
        match self {
            VectorSource::Path(p) | VectorSource::Detailed { path: p, .. } => p,
        }
    }

    pub fn limit(&self) -> Option<usize> {
        match self {
            VectorSource::Path(_) => None,
            VectorSource::Detailed { limit, .. } => *limit,
        }
    }

    pub fn casing(&self) -> Casing {
        match self {
            VectorSource::Detailed {
                casing: CasingName::Preserve,
                ..
            } => Casing::Preserve,
            _ => Casing::Lower,
        }
    }
}

fn default_engine() -> String {
    "fixture".into()
}

fn yes() -> bool {
    true
}

/// Flags that override fields of the run file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub languages: Option<Vec<String>>,
    pub engine: Option<String>,
    pub seed: Option<u64>,
    pub pooling: Option<Pooling>,
}

/// A loaded run file. Relative paths are resolved against its directory.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub settings: Settings,
    pub base_dir: PathBuf,
    pub experiment: ExperimentConfig,
}

impl Resolved {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        let mut settings: Settings =
            toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if let Some(a) = overrides.alpha {
            settings.alpha = a;
        }
        if let Some(b) = overrides.beta {
            settings.beta = b;
        }
        if let Some(l) = &overrides.languages {
            settings.languages = l.clone();
        }
        if let Some(e) = &overrides.engine {
            settings.engine = e.clone();
        }
        if let Some(p) = overrides.pooling {
            settings.pooling = p;
        }
        if let Some(seed) = overrides.seed {
            match &mut settings.backend {
                BackendConfig::SyntheticHash { seed: s, .. } => *s = seed,
                _ => log::warn!("--seed only affects the synthetic-hash backend; ignored"),
            }
        }
        let engine = EngineId::new(settings.engine.clone()).map_err(|e| CliError::usage(e.to_string()))?;
        let experiment = ExperimentConfig {
            alpha: settings.alpha,
            beta: settings.beta,
            languages: settings.languages.clone(),
            engine,
            backend: settings.backend.clone(),
        };
        experiment.validate().map_err(|e| CliError::usage(e.to_string()))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Resolved {
            settings,
            base_dir,
            experiment,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn dataset_path(&self) -> Result<PathBuf, CliError> {
        let p = self.settings.paths.dataset.as_ref();
        p.map(|p| self.resolve(p))
            .ok_or_else(|| CliError::usage("run file lacks paths.dataset"))
    }

    pub fn cache_path(&self) -> Result<PathBuf, CliError> {
        let p = self.settings.paths.cache.as_ref();
        p.map(|p| self.resolve(p))
            .ok_or_else(|| CliError::usage("run file lacks paths.cache"))
    }

    /// The backend with file paths made absolute.
    pub fn backend(&self) -> BackendConfig {
        match &self.experiment.backend {
            BackendConfig::FixtureFile { path } => BackendConfig::FixtureFile { path: self.resolve(path) },
            other => other.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RUN: &str = r#"
alpha = 0.7
beta = 0.3
languages = ["it", "pt"]

[backend]
kind = "synthetic-hash"
dim = 8
seed = 1

[paths]
dataset = "data/dataset.jsonl"

[vectors]
en = "vec/en.vec"
it = { path = "vec/it.vec", limit = 100, casing = "preserve" }
"#;

    fn write(content: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        fs::write(&p, content).unwrap();
        (dir, p)
    }

    #[test]
    fn loads_and_resolves() {
        let (dir, p) = write(RUN);
        let r = Resolved::load(&p, &Overrides::default()).unwrap();
        assert_eq!(r.experiment.engine.as_str(), "fixture");
        assert_eq!(r.dataset_path().unwrap(), dir.path().join("data/dataset.jsonl"));
        assert_eq!(r.settings.vectors["it"].limit(), Some(100));
        assert_eq!(r.settings.vectors["it"].casing(), Casing::Preserve);
        assert_eq!(r.settings.vectors["en"].casing(), Casing::Lower);
        assert!(r.settings.marker);
        assert!(r.cache_path().is_err());
    }

    #[test]
    fn overrides_apply() {
        let (_dir, p) = write(RUN);
        let o = Overrides {
            alpha: Some(1.0),
            beta: Some(0.0),
            seed: Some(99),
            languages: Some(vec![]),
            ..Default::default()
        };
        let r = Resolved::load(&p, &o).unwrap();
        assert_eq!((r.experiment.alpha, r.experiment.beta), (1.0, 0.0));
        assert_eq!(r.experiment.backend, BackendConfig::SyntheticHash { dim: 8, seed: 99 });
        assert!(r.experiment.languages.is_empty());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_weights() {
        let (_dir, p) = write(&format!("{RUN}\nbogus = 1\n").replace("[vectors]", "bogus = 1\n[vectors]"));
        assert!(Resolved::load(&p, &Overrides::default()).is_err());
        let (_dir, p) = write(&RUN.replace("alpha = 0.7", "alpha = 0.0").replace("beta = 0.3", "beta = 0.0"));
        assert_eq!(Resolved::load(&p, &Overrides::default()).unwrap_err().code(), 1);
    }
}
