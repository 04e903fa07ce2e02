//! Loader for the committed five-instance fixture.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use polysim::config::ExperimentConfig;
use polysim::dataset::{parse_dataset, DatasetFormat, ParseMode};
use polysim::embedstore::{load_text_vectors, Casing};
use polysim::encoder::{BackendConfig, FixtureEncoder};
use polysim::scoring::{score_dataset, ScoreRun, VectorStores};
use polysim::translation::{build_views, EngineId, FixtureEngine, Sentinels, TranslatedView, TranslationCache};
use polysim::Instance;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub struct Fixture {
    pub instances: Vec<Instance>,
    pub cache: TranslationCache,
    pub stores: VectorStores,
    pub encoder: FixtureEncoder,
}

impl Fixture {
    pub fn load() -> Self {
        let dir = fixture_dir();
        let instances = parse_dataset(dir.join("dataset.jsonl"), &DatasetFormat::Canonical, ParseMode::Strict)
            .expect("fixture dataset")
            .instances;
        let cache = TranslationCache::load(dir.join("translations.jsonl")).expect("fixture cache");
        let mut stores = VectorStores::new();
        for lang in ["en", "it", "pt"] {
            let (store, _) = load_text_vectors(dir.join(format!("vectors/{lang}.vec")), lang, None, Casing::Lower)
                .expect("fixture vectors");
            stores.insert(lang.to_string(), store);
        }
        let encoder = FixtureEncoder::load(dir.join("encodings.jsonl")).expect("fixture encodings");
        Fixture {
            instances,
            cache,
            stores,
            encoder,
        }
    }

    pub fn config(&self, alpha: f64, beta: f64, languages: &[&str]) -> ExperimentConfig {
        ExperimentConfig {
            alpha,
            beta,
            languages: languages.iter().map(|l| l.to_string()).collect(),
            engine: EngineId::fixture(),
            backend: BackendConfig::FixtureFile {
                path: "encodings.jsonl".into(),
            },
        }
    }

    pub fn views(&self, instances: &[Instance], languages: &[&str]) -> Vec<TranslatedView> {
        let langs: Vec<String> = languages.iter().map(|l| l.to_string()).collect();
        let out = build_views(instances, &langs, &FixtureEngine::new(), &self.cache, Some(&Sentinels::default()));
        assert!(out.ledger.is_empty(), "fixture cache incomplete: {:?}", out.ledger);
        out.views
    }

    pub fn score(&self, instances: &[Instance], config: &ExperimentConfig) -> ScoreRun {
        let langs: Vec<&str> = config.languages.iter().map(String::as_str).collect();
        let views = self.views(instances, &langs);
        score_dataset(instances, &views, &self.stores, &self.encoder, config)
            .expect("fixture scores")
            .0
    }
}

/// Rows of a tab-separated file after its header.
pub fn read_tsv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .expect("tsv")
        .lines()
        .skip(1)
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}
