//! Declarative run configuration: TOML file with defaults, overridden by
//! command-line flags. The effective values are frozen into the run
//! manifest.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use satd_core::categorizer::CategorizerConfig;
use satd_core::corpus::{ArtifactSource, DatasetFormat};
use satd_core::gateway::{GatewayConfig, GatewayKind};
use satd_core::identifier::IdentifierConfig;
use satd_core::preprocess::PreprocessConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct DatasetSection {
    pub path: Option<PathBuf>,
    /// csv or jsonl; inferred from the extension when omitted.
    pub format: Option<String>,
    /// Restrict the run to one artifact source (CC, IS, PS, CM).
    pub artifact: Option<String>,
}


#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSection {
    pub ratios: [f64; 3],
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            ratios: satd_core::corpus::DEFAULT_SPLIT_RATIOS,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSection {
    pub max_retries: u32,
    pub concurrency: usize,
}

impl Default for AugmentSection {
    fn default() -> Self {
        AugmentSection {
            max_retries: 3,
            concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct IdentifierSection {
    #[serde(flatten)]
    pub config: IdentifierConfig,
    /// Pretrained static word-embedding table (token v1 .. vd per line).
    pub embedding_path: Option<PathBuf>,
}


#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct KeywordsSection {
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub top_k: usize,
    pub diversity: f64,
    pub embedder_dim: usize,
    /// Optional word-embedding table; the hashed embedder is the default.
    pub embedder_table: Option<PathBuf>,
    /// Cap on documents per group at extraction time; 0 means no cap.
    pub max_documents_per_group: usize,
}

impl Default for KeywordsSection {
    fn default() -> Self {
        KeywordsSection {
            ngram_min: 1,
            ngram_max: 2,
            top_k: 10,
            diversity: 0.0,
            embedder_dim: 1024,
            embedder_table: None,
            max_documents_per_group: 5000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct AppConfig {
    /// Master seed; per-stage seeds fan out from it deterministically.
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Feed the categorizer raw instead of preprocessed text.
    pub categorizer_raw_text: bool,
    pub dataset: DatasetSection,
    pub split: SplitSection,
    pub preprocess: PreprocessConfig,
    pub augment: AugmentSection,
    pub gateway: GatewayConfig,
    pub identifier: IdentifierSection,
    pub categorizer: CategorizerConfig,
    pub keywords: KeywordsSection,
}

/// Flag overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub client: Option<String>,
    pub artifact: Option<String>,
    pub out: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub format: Option<String>,
}

impl AppConfig {
    pub fn load(path: Option<&PathBuf>, overrides: &Overrides) -> Result<AppConfig> {
        let mut config: AppConfig = match path {
            Some(path) => {
                let content = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config {}", path.display()))?;
                toml::from_str(&content)
                    .with_context(|| format!("cannot parse config {}", path.display()))?
            }
            None => AppConfig::default(),
        };
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(client) = &overrides.client {
            config.gateway.kind = match client.as_str() {
                "mock" => GatewayKind::Mock,
                "remote" => GatewayKind::Remote,
                other => bail!("unknown client {other:?}; expected mock or remote"),
            };
        }
        if let Some(artifact) = &overrides.artifact {
            config.dataset.artifact = Some(artifact.clone());
        }
        if let Some(out) = &overrides.out {
            config.out_dir = Some(out.clone());
        }
        if let Some(dataset) = &overrides.dataset {
            config.dataset.path = Some(dataset.clone());
        }
        if let Some(format) = &overrides.format {
            config.dataset.format = Some(format.clone());
        }
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        self.preprocess
            .validate()
            .map_err(|e| anyhow::anyhow!("preprocess config: {e}"))?;
        if let Some(artifact) = &self.dataset.artifact {
            if ArtifactSource::from_code(artifact).is_none() {
                bail!("unknown artifact {artifact:?}; expected CC, IS, PS, or CM");
            }
        }
        if let Some(format) = &self.dataset.format {
            if format.parse::<DatasetFormat>().is_err() {
                bail!("unknown dataset format {format:?}; expected csv or jsonl");
            }
        }
        let (min, max) = (self.keywords.ngram_min, self.keywords.ngram_max);
        if min < 1 || min > max || max > 3 {
            bail!("keywords ngram range must satisfy 1 <= min <= max <= 3");
        }
        Ok(())
    }

    pub fn artifact_filter(&self) -> Option<ArtifactSource> {
        self.dataset
            .artifact
            .as_deref()
            .and_then(ArtifactSource::from_code)
    }

    pub fn dataset_format(&self) -> Option<DatasetFormat> {
        match &self.dataset.format {
            Some(f) => f.parse().ok(),
            None => self
                .dataset
                .path
                .as_deref()
                .and_then(DatasetFormat::from_path),
        }
    }

    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
