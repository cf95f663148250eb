//! Pipeline configuration: one TOML file whose sections mirror the stage
//! settings. Relative paths resolve against the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agentic::client::{ChatClientSpec, ClientKind};
use crate::agentic::prompts::PromptTemplates;
use crate::autoencoder::{CompressionRatio, TrainingConfig};
use crate::corpus::CorpusFormat;
use crate::embedding::{dimension_preset, EmbeddingProviderSpec, ProviderKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_run_dir")]
    pub run_dir: PathBuf,
    #[serde(default = "default_run_id")]
    pub run_id: String,
    pub corpus: CorpusSection,
    pub provider: ProviderSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub svd: SvdSection,
    #[serde(default)]
    pub cluster: ClusterSection,
    #[serde(default)]
    pub sample: SampleSection,
    pub agentic: AgenticSection,
}

fn default_run_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_run_id() -> String {
    "run".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSection {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: CorpusFormat,
    #[serde(default)]
    pub tag_variants: Vec<String>,
    #[serde(default = "default_true")]
    pub tags_case_insensitive: bool,
    #[serde(default)]
    pub language: Option<String>,
}

fn default_format() -> CorpusFormat {
    CorpusFormat::Jsonl
}

fn default_true() -> bool {
    true
}

/// Dimension as a number or a named preset (small/medium/large).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DimensionSpec {
    Number(usize),
    Preset(String),
}

impl DimensionSpec {
    pub fn resolve(&self) -> Result<usize> {
        match self {
            DimensionSpec::Number(n) => Ok(*n),
            DimensionSpec::Preset(name) => dimension_preset(name).ok_or_else(|| {
                Error::Config(format!(
                    "unknown dimension preset {name:?}; expected small, medium, or large"
                ))
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderSection {
    #[serde(default = "default_provider_name")]
    pub name: String,
    pub kind: ProviderKind,
    pub dimension: DimensionSpec,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_id: Option<String>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default)]
    pub noise: f64,
}

fn default_provider_name() -> String {
    "provider".into()
}

fn default_batch() -> usize {
    64
}

fn default_separation() -> f64 {
    10.0
}

impl ProviderSection {
    pub fn to_spec(&self) -> Result<EmbeddingProviderSpec> {
        let spec = EmbeddingProviderSpec {
            name: self.name.clone(),
            dimension: self.dimension.resolve()?,
            kind: self.kind,
            endpoint: self.endpoint.clone(),
            model_id: self.model_id.clone(),
            batch_size: self.batch_size,
            seed: self.seed,
            separation: self.separation,
            noise: self.noise,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_train_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ratios")]
    pub ratios: Vec<CompressionRatio>,
    /// z-score embedding columns before autoencoder training and encoding.
    #[serde(default)]
    pub standardize: bool,
}

fn default_epochs() -> usize {
    40
}

fn default_train_batch() -> usize {
    32
}

fn default_lr() -> f64 {
    0.05
}

fn default_val_fraction() -> f64 {
    0.2
}

fn default_ratios() -> Vec<CompressionRatio> {
    CompressionRatio::ALL.to_vec()
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            epochs: default_epochs(),
            batch_size: default_train_batch(),
            learning_rate: default_lr(),
            val_fraction: default_val_fraction(),
            seed: 0,
            ratios: default_ratios(),
            standardize: false,
        }
    }
}

impl TrainingSection {
    pub fn to_config(&self) -> TrainingConfig {
        TrainingConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            val_fraction: self.val_fraction,
            seed: self.seed,
            ratios: self.ratios.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvdSection {
    #[serde(default = "default_threshold")]
    pub variance_threshold: f64,
}

fn default_threshold() -> f64 {
    0.90
}

impl Default for SvdSection {
    fn default() -> Self {
        SvdSection {
            variance_threshold: default_threshold(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSection {
    #[serde(default = "default_k_range")]
    pub k_range: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_k_range() -> Vec<usize> {
    (1..=8).collect()
}

fn default_max_iter() -> usize {
    100
}

fn default_tol() -> f64 {
    1e-6
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection {
            k_range: default_k_range(),
            seed: 0,
            max_iter: default_max_iter(),
            tol: default_tol(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSection {
    #[serde(default = "default_z")]
    pub z: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_e")]
    pub e: f64,
}

fn default_z() -> f64 {
    1.64
}

fn default_p() -> f64 {
    0.5
}

fn default_e() -> f64 {
    0.1
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection {
            z: default_z(),
            p: default_p(),
            e: default_e(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgenticSection {
    #[serde(default = "default_quality")]
    pub quality_threshold: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    pub llm1: ClientSection,
    pub llm2: ClientSection,
    /// Optional third model that isolates score + feedback from the grader's
    /// verdict; without it the deterministic parser handles the verdict.
    #[serde(default)]
    pub extractor: Option<ClientSection>,
    #[serde(default)]
    pub prompts: PromptPaths,
}

fn default_quality() -> f64 {
    0.8
}

fn default_max_iterations() -> usize {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientSection {
    pub kind: ClientKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_id: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_client_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub script: Option<Vec<String>>,
    /// JSON file holding an array of scripted response strings.
    #[serde(default)]
    pub script_path: Option<PathBuf>,
}

fn default_client_retries() -> u32 {
    3
}

impl ClientSection {
    pub fn to_spec(&self) -> Result<ChatClientSpec> {
        let script = match (&self.script, &self.script_path) {
            (Some(s), _) => Some(s.clone()),
            (None, Some(path)) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let list: Vec<String> = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("bad script file {path:?}: {e}")))?;
                Some(list)
            }
            (None, None) => None,
        };
        let spec = ChatClientSpec {
            kind: self.kind,
            endpoint: self.endpoint.clone(),
            model_id: self.model_id.clone(),
            temperature: self.temperature,
            max_retries: self.max_retries,
            script,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PromptPaths {
    #[serde(default)]
    pub keywords: Option<PathBuf>,
    #[serde(default)]
    pub groups: Option<PathBuf>,
    #[serde(default)]
    pub themes: Option<PathBuf>,
    #[serde(default)]
    pub grader: Option<PathBuf>,
    #[serde(default)]
    pub extract_score: Option<PathBuf>,
}

impl PipelineConfig {
    /// Parses, resolves relative paths against the config file's directory,
    /// and validates every section.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {path:?}: {e}")))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.run_dir);
        fix(&mut self.corpus.path);
        let mut clients = vec![&mut self.agentic.llm1, &mut self.agentic.llm2];
        if let Some(extractor) = self.agentic.extractor.as_mut() {
            clients.push(extractor);
        }
        for client in clients {
            if let Some(p) = client.script_path.as_mut() {
                fix(p);
            }
        }
        for p in [
            &mut self.agentic.prompts.keywords,
            &mut self.agentic.prompts.groups,
            &mut self.agentic.prompts.themes,
            &mut self.agentic.prompts.grader,
            &mut self.agentic.prompts.extract_score,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty() || self.run_id.contains(std::path::is_separator) {
            return Err(Error::Config("run_id must be a non-empty path segment".into()));
        }
        if !self.corpus.path.exists() {
            return Err(Error::Config(format!(
                "corpus path {:?} does not exist",
                self.corpus.path
            )));
        }
        self.provider.to_spec().map_err(as_config)?;
        let t = &self.training;
        if t.learning_rate <= 0.0 || !(0.0 < t.val_fraction && t.val_fraction < 1.0) {
            return Err(Error::Config("invalid training section".into()));
        }
        if t.ratios.is_empty() {
            return Err(Error::Config("training.ratios must be non-empty".into()));
        }
        if !(0.0 < self.svd.variance_threshold && self.svd.variance_threshold <= 1.0) {
            return Err(Error::Config("svd.variance_threshold must lie in (0,1]".into()));
        }
        if self.cluster.k_range.len() < 3 {
            return Err(Error::Config("cluster.k_range needs at least 3 entries".into()));
        }
        if self.cluster.k_range.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("cluster.k_range must be strictly ascending".into()));
        }
        crate::sampling::SamplePlan::new(self.sample.z, self.sample.p, self.sample.e)
            .map_err(as_config)?;
        if !(0.0..=1.0).contains(&self.agentic.quality_threshold) {
            return Err(Error::Config("agentic.quality_threshold must lie in [0,1]".into()));
        }
        if self.agentic.max_iterations == 0 {
            return Err(Error::Config("agentic.max_iterations must be >= 1".into()));
        }
        self.agentic.llm1.to_spec().map_err(as_config)?;
        self.agentic.llm2.to_spec().map_err(as_config)?;
        if let Some(extractor) = &self.agentic.extractor {
            extractor.to_spec().map_err(as_config)?;
        }
        for p in [
            &self.agentic.prompts.keywords,
            &self.agentic.prompts.groups,
            &self.agentic.prompts.themes,
            &self.agentic.prompts.grader,
            &self.agentic.prompts.extract_score,
        ]
        .into_iter()
        .flatten()
        {
            if !p.exists() {
                return Err(Error::Config(format!("prompt template {p:?} does not exist")));
            }
        }
        Ok(())
    }

    pub fn prompt_templates(&self) -> Result<PromptTemplates> {
        let mut templates = PromptTemplates::default();
        let pairs = [
            ("keywords", &self.agentic.prompts.keywords),
            ("groups", &self.agentic.prompts.groups),
            ("themes", &self.agentic.prompts.themes),
            ("grader", &self.agentic.prompts.grader),
            ("extract_score", &self.agentic.prompts.extract_score),
        ];
        for (which, path) in pairs {
            if let Some(p) = path {
                templates.load_override(which, p)?;
            }
        }
        Ok(templates)
    }

    pub fn run_path(&self) -> PathBuf {
        self.run_dir.join(&self.run_id)
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(m),
        other => Error::Config(other.to_string()),
    }
}
