//! Post embeddings through a pluggable provider.
//!
//! Three provider kinds: `http` speaks an OpenAI-style embeddings endpoint in
//! batches with retry/backoff, `synthetic` derives a deterministic unit vector
//! from a stable hash of the text, and `planted` places posts on separated
//! topic axes (plus seeded noise) for desk-scale runs and the bundled corpus.
//! Planted topics are read from the post id prefix `t<digit>_`, which the
//! bundled corpus generator emits.

use std::fs;
use std::path::Path;
use std::time::Duration;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Http,
    Synthetic,
    Planted,
}

/// Provider identity and transport settings. `dimension` accepts the named
/// presets small=384, medium=768, large=1024 in config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingProviderSpec {
    pub name: String,
    pub dimension: usize,
    pub kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Seed for the synthetic and planted kinds.
    #[serde(default)]
    pub seed: u64,
    /// Planted-topic geometry; ignored by other kinds.
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default)]
    pub noise: f64,
}

fn default_batch_size() -> usize {
    64
}

fn default_separation() -> f64 {
    10.0
}

pub const DIMENSION_PRESETS: &[(&str, usize)] =
    &[("small", 384), ("medium", 768), ("large", 1024)];

pub fn dimension_preset(name: &str) -> Option<usize> {
    DIMENSION_PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, d)| *d)
}

impl EmbeddingProviderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Config("provider dimension must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("provider batch_size must be > 0".into()));
        }
        if self.kind == ProviderKind::Http && (self.endpoint.is_none() || self.model_id.is_none())
        {
            return Err(Error::Config(
                "http provider requires endpoint and model_id".into(),
            ));
        }
        if self.kind == ProviderKind::Planted && self.separation <= 0.0 {
            return Err(Error::Config("planted separation must be > 0".into()));
        }
        if self.kind == ProviderKind::Planted && self.noise < 0.0 {
            return Err(Error::Config("planted noise must be >= 0".into()));
        }
        Ok(())
    }
}

/// n×d embedding matrix, row-aligned with the corpus that produced it.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix<T: Scalar> {
    pub rows: Array2<T>,
    pub post_ids: Vec<String>,
    pub provider: EmbeddingProviderSpec,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn d(&self) -> usize {
        self.rows.ncols()
    }

    /// Checks row/id alignment, provider dimension, and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.rows.nrows() != self.post_ids.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} ids", self.rows.nrows()),
                got: format!("{} ids", self.post_ids.len()),
            });
        }
        if self.rows.ncols() != self.provider.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.provider.dimension,
                got: self.rows.ncols(),
                context: "embedding matrix columns".into(),
            });
        }
        if self.rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition(
                "embedding matrix contains non-finite values".into(),
            ));
        }
        Ok(())
    }
}

/// Stable 64-bit FNV-1a over the seed and text; identical across runs and
/// platforms, unlike the std hasher.
fn stable_hash(text: &str, seed: u64) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in seed.to_le_bytes().iter().chain(text.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// Deterministic stand-in for a pre-trained model: unit-norm Gaussian vector
/// seeded from a stable hash of `(text, seed)`.
pub fn synthetic_embed<T: Scalar>(text: &str, dimension: usize, seed: u64) -> Array1<T> {
    assert!(dimension > 0, "dimension must be > 0");
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(text, seed));
    let mut v: Vec<f64> = (0..dimension).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    } else {
        v[0] = 1.0;
    }
    Array1::from_iter(v.into_iter().map(T::from_f64_c))
}

/// Test-corpus embedding: `separation` along the topic's basis axis plus
/// `noise` times a seeded Gaussian perturbation.
pub fn topic_planted_embed<T: Scalar>(
    text: &str,
    topic_label: usize,
    dimension: usize,
    separation: f64,
    noise: f64,
    seed: u64,
) -> Result<Array1<T>> {
    if topic_label >= dimension {
        return Err(Error::Precondition(format!(
            "topic_label {topic_label} must be < dimension {dimension}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(text, seed));
    let mut v = vec![0.0f64; dimension];
    v[topic_label] = separation;
    if noise > 0.0 {
        for x in &mut v {
            let z: f64 = rng.sample(StandardNormal);
            *x += noise * z;
        }
    }
    Ok(Array1::from_iter(v.into_iter().map(T::from_f64_c)))
}

/// Parses the planted-topic label from a post id of the form `t<digits>_...`.
pub fn planted_topic_of_id(id: &str) -> Option<usize> {
    let rest = id.strip_prefix('t')?;
    let underscore = rest.find('_')?;
    rest[..underscore].parse().ok()
}

/// Embeds every post of a corpus, one row per post in corpus order.
pub fn embed_corpus<T: Scalar>(
    corpus: &Corpus,
    provider: &EmbeddingProviderSpec,
) -> Result<EmbeddingMatrix<T>> {
    provider.validate().map_err(|e| match e {
        Error::Config(m) => Error::Precondition(m),
        other => other,
    })?;
    for p in corpus.posts() {
        if p.clean_text.is_empty() {
            return Err(Error::Precondition(format!(
                "post {:?} has empty clean_text; run the cleaning pass first",
                p.id
            )));
        }
    }
    let d = provider.dimension;
    let n = corpus.len();
    let mut rows = Array2::<T>::zeros((n, d));
    match provider.kind {
        ProviderKind::Synthetic => {
            for (i, post) in corpus.posts().iter().enumerate() {
                let v = synthetic_embed::<T>(&post.clean_text, d, provider.seed);
                rows.row_mut(i).assign(&v);
            }
        }
        ProviderKind::Planted => {
            for (i, post) in corpus.posts().iter().enumerate() {
                let label = planted_topic_of_id(&post.id).ok_or_else(|| {
                    Error::Precondition(format!(
                        "planted provider expects ids like t<topic>_..., got {:?}",
                        post.id
                    ))
                })?;
                let v = topic_planted_embed::<T>(
                    &post.clean_text,
                    label,
                    d,
                    provider.separation,
                    provider.noise,
                    provider.seed,
                )?;
                rows.row_mut(i).assign(&v);
            }
        }
        ProviderKind::Http => {
            let texts: Vec<&str> = corpus.posts().iter().map(|p| p.clean_text.as_str()).collect();
            let mut row_idx = 0usize;
            for (batch_idx, chunk) in texts.chunks(provider.batch_size).enumerate() {
                let vectors = fetch_http_batch(provider, chunk, batch_idx)?;
                for v in vectors {
                    if v.len() != d {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            got: v.len(),
                            context: format!("http provider row {row_idx}"),
                        });
                    }
                    for (j, x) in v.iter().enumerate() {
                        rows[(row_idx, j)] = T::from_f64_c(*x);
                    }
                    row_idx += 1;
                }
            }
            if row_idx != n {
                return Err(Error::Provider {
                    batch: 0,
                    msg: format!("provider returned {row_idx} rows for {n} inputs"),
                });
            }
        }
    }
    let matrix = EmbeddingMatrix {
        rows,
        post_ids: corpus.posts().iter().map(|p| p.id.clone()).collect(),
        provider: provider.clone(),
    };
    matrix.validate()?;
    Ok(matrix)
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
}

pub const API_KEY_ENV: &str = "BEYONDWORDS_API_KEY";
const MAX_RETRIES: u32 = 3;
const BACKOFF_BASE_MS: u64 = 100;

fn fetch_http_batch(
    provider: &EmbeddingProviderSpec,
    texts: &[&str],
    batch_idx: usize,
) -> Result<Vec<Vec<f64>>> {
    let endpoint = provider.endpoint.as_deref().expect("validated");
    let model_id = provider.model_id.as_deref().expect("validated");
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(60))
        .build()
        .map_err(|e| Error::Provider {
            batch: batch_idx,
            msg: e.to_string(),
        })?;
    let body = EmbedRequest {
        model: model_id,
        input: texts,
    };
    let mut last_err = String::new();
    for attempt in 0..=MAX_RETRIES {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(BACKOFF_BASE_MS << (attempt - 1)));
        }
        let mut req = client.post(endpoint).json(&body);
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            req = req.bearer_auth(key);
        }
        match req.send() {
            Ok(resp) => {
                let status = resp.status();
                if status.is_success() {
                    let parsed: EmbedResponse = resp.json().map_err(|e| Error::Provider {
                        batch: batch_idx,
                        msg: format!("bad response body: {e}"),
                    })?;
                    return Ok(parsed.data.into_iter().map(|d| d.embedding).collect());
                }
                if status.as_u16() == 429 || status.is_server_error() {
                    last_err = format!("status {status}");
                    continue;
                }
                return Err(Error::Provider {
                    batch: batch_idx,
                    msg: format!("status {status}"),
                });
            }
            Err(e) => {
                last_err = e.to_string();
                continue;
            }
        }
    }
    Err(Error::Provider {
        batch: batch_idx,
        msg: format!("gave up after {MAX_RETRIES} retries: {last_err}"),
    })
}

/// Sidecar metadata for a persisted embedding matrix.
#[derive(Debug, Serialize, Deserialize)]
pub struct EmbeddingSidecar {
    pub n: usize,
    pub d: usize,
    pub provider: EmbeddingProviderSpec,
    pub dtype: String,
    pub layout: String,
    pub endianness: String,
    pub post_ids: Vec<String>,
}

/// Writes `<stem>.json` + `<stem>.bin` (row-major little-endian f32).
pub fn write_embeddings<T: Scalar>(dir: &Path, stem: &str, m: &EmbeddingMatrix<T>) -> Result<()> {
    m.validate()?;
    let sidecar = EmbeddingSidecar {
        n: m.n(),
        d: m.d(),
        provider: m.provider.clone(),
        dtype: "f32".into(),
        layout: "row-major".into(),
        endianness: "little".into(),
        post_ids: m.post_ids.clone(),
    };
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&json_path, serde_json::to_string_pretty(&sidecar)?)
        .map_err(|e| Error::io(&json_path, e))?;
    binio::write_matrix_f32(&dir.join(format!("{stem}.bin")), &m.rows)
}

pub fn read_embeddings<T: Scalar>(dir: &Path, stem: &str) -> Result<EmbeddingMatrix<T>> {
    let json_path = dir.join(format!("{stem}.json"));
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let sidecar: EmbeddingSidecar = serde_json::from_str(&text)?;
    let rows = binio::read_matrix_f32::<T>(&dir.join(format!("{stem}.bin")), sidecar.n, sidecar.d)?;
    let m = EmbeddingMatrix {
        rows,
        post_ids: sidecar.post_ids,
        provider: sidecar.provider,
    };
    m.validate()?;
    Ok(m)
}
