//! Stage execution: a strict chain ingest → embed → compress → factorize →
//! cluster → sample → themes → report, with hash-verified artifact caching.
//!
//! Each stage records the artifacts it produced, the config subset it ran
//! under, and the input artifacts it consumed. A stage is skipped only when
//! all three still verify; `--force` overrides. One run directory belongs to
//! one process at a time (lock file).

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::agentic::{run_all_clusters, ChatClientSpec, ClusterSample};
use crate::autoencoder::{self, CompressionRatio};
use crate::binio;
use crate::corpus::{Corpus, Post};
use crate::embedding;
use crate::error::{Error, Result};
use crate::latent::quality::{cluster_quality, silhouette, ClusterQuality};
use crate::latent::{elbow_select, kmeans, truncated_svd, ElbowResult, SvdFactors};
use crate::latent::svd::{explained_variance, select_rank};
use crate::pipeline::config::PipelineConfig;
use crate::pipeline::manifest::{hash_config, ArtifactEntry, RunManifest};
use crate::report::{self, ClusterReportInput, Curves, MetricsSummary, MetricsTable, ReportInputs};
use crate::sampling::{select_representatives_with_scores, SamplePlan};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Embed,
    Compress,
    Factorize,
    Cluster,
    Sample,
    Themes,
    Report,
}

pub const STAGE_ORDER: [Stage; 8] = [
    Stage::Ingest,
    Stage::Embed,
    Stage::Compress,
    Stage::Factorize,
    Stage::Cluster,
    Stage::Sample,
    Stage::Themes,
    Stage::Report,
];

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Embed => "embed",
            Stage::Compress => "compress",
            Stage::Factorize => "factorize",
            Stage::Cluster => "cluster",
            Stage::Sample => "sample",
            Stage::Themes => "themes",
            Stage::Report => "report",
        }
    }

    pub fn deps(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Embed => &[Stage::Ingest],
            Stage::Compress => &[Stage::Embed],
            Stage::Factorize => &[Stage::Compress],
            Stage::Cluster => &[Stage::Factorize, Stage::Embed],
            Stage::Sample => &[Stage::Cluster, Stage::Factorize, Stage::Ingest],
            Stage::Themes => &[Stage::Sample, Stage::Cluster],
            Stage::Report => &[
                Stage::Compress,
                Stage::Factorize,
                Stage::Cluster,
                Stage::Sample,
                Stage::Themes,
            ],
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        STAGE_ORDER
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Exclusive ownership of a run directory for the lifetime of the guard.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(Error::RunLocked { path }),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Serialize)]
struct ThemesRelevant<'a> {
    quality_threshold: f64,
    max_iterations: usize,
    llm1: &'a ChatClientSpec,
    llm2: &'a ChatClientSpec,
    extractor: Option<&'a ChatClientSpec>,
    prompts: [&'a str; 5],
}

fn stage_config_hash(cfg: &PipelineConfig, stage: Stage) -> Result<String> {
    match stage {
        Stage::Ingest => hash_config(&cfg.corpus),
        Stage::Embed => hash_config(&cfg.provider.to_spec()?),
        Stage::Compress => hash_config(&cfg.training),
        Stage::Factorize => hash_config(&cfg.svd),
        Stage::Cluster => hash_config(&(&cfg.cluster, &cfg.svd)),
        Stage::Sample => hash_config(&cfg.sample),
        Stage::Themes => {
            let llm1 = cfg.agentic.llm1.to_spec()?;
            let llm2 = cfg.agentic.llm2.to_spec()?;
            let extractor = match &cfg.agentic.extractor {
                Some(section) => Some(section.to_spec()?),
                None => None,
            };
            let templates = cfg.prompt_templates()?;
            hash_config(&ThemesRelevant {
                quality_threshold: cfg.agentic.quality_threshold,
                max_iterations: cfg.agentic.max_iterations,
                llm1: &llm1,
                llm2: &llm2,
                extractor: extractor.as_ref(),
                prompts: [
                    &templates.keywords,
                    &templates.groups,
                    &templates.themes,
                    &templates.grader,
                    &templates.extract_score,
                ],
            })
        }
        Stage::Report => hash_config(&"report-v1"),
    }
}

fn dep_inputs(
    cfg: &PipelineConfig,
    manifest: &RunManifest,
    run_dir: &Path,
    stage: Stage,
) -> Result<Vec<ArtifactEntry>> {
    let mut inputs = Vec::new();
    for dep in stage.deps() {
        let entry = manifest.stage_entry(dep.name()).ok_or_else(|| Error::MissingArtifact {
            stage: dep.name().into(),
            msg: "stage has not run".into(),
        })?;
        if entry.config_hash != stage_config_hash(cfg, *dep)? {
            return Err(Error::MissingArtifact {
                stage: dep.name().into(),
                msg: "config changed since the stage ran; rerun it".into(),
            });
        }
        if !manifest.stage_artifacts_valid(dep.name(), run_dir) {
            return Err(Error::MissingArtifact {
                stage: dep.name().into(),
                msg: "artifacts missing or hash-invalid".into(),
            });
        }
        inputs.extend(entry.artifacts.iter().cloned());
    }
    Ok(inputs)
}

fn execute_stage(
    cfg: &PipelineConfig,
    stage: Stage,
    force: bool,
    manifest: &mut RunManifest,
    run_dir: &Path,
) -> Result<bool> {
    let config_hash = stage_config_hash(cfg, stage)?;
    let inputs = dep_inputs(cfg, manifest, run_dir, stage)?;

    if !force {
        if let Some(entry) = manifest.stage_entry(stage.name()) {
            if entry.config_hash == config_hash
                && entry.inputs == inputs
                && manifest.stage_artifacts_valid(stage.name(), run_dir)
            {
                println!("stage {stage}: up to date, skipping");
                return Ok(false);
            }
        }
    }

    println!("stage {stage}: running");
    let artifacts = match stage {
        Stage::Ingest => run_ingest(cfg, run_dir)?,
        Stage::Embed => run_embed(cfg, run_dir)?,
        Stage::Compress => run_compress(cfg, run_dir)?,
        Stage::Factorize => run_factorize(cfg, run_dir)?,
        Stage::Cluster => run_cluster(cfg, run_dir)?,
        Stage::Sample => run_sample(cfg, run_dir)?,
        Stage::Themes => run_themes(cfg, run_dir)?,
        Stage::Report => run_report(cfg, run_dir)?,
    };
    manifest.record_stage(stage.name(), config_hash, inputs, run_dir, &artifacts)?;
    manifest.save(run_dir)?;
    Ok(true)
}

fn stamp_invocation(manifest: &mut RunManifest, cfg: &PipelineConfig) -> Result<()> {
    manifest.config = serde_json::to_value(cfg)?;
    manifest.seeds = [
        ("provider".to_string(), cfg.provider.seed),
        ("training".to_string(), cfg.training.seed),
        ("cluster".to_string(), cfg.cluster.seed),
    ]
    .into_iter()
    .collect();
    Ok(())
}

/// Runs a single stage (honoring the cache unless `force`).
pub fn stage_run(cfg: &PipelineConfig, stage: Stage, force: bool) -> Result<()> {
    let run_dir = cfg.run_path();
    fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    let _lock = RunLock::acquire(&run_dir)?;
    let mut manifest = RunManifest::load_or_new(&run_dir, &cfg.run_id)?;
    stamp_invocation(&mut manifest, cfg)?;
    execute_stage(cfg, stage, force, &mut manifest, &run_dir)?;
    Ok(())
}

/// Runs every stage in order; the first failure aborts, leaving completed
/// artifacts in place.
pub fn run_all(cfg: &PipelineConfig) -> Result<()> {
    let run_dir = cfg.run_path();
    fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    let _lock = RunLock::acquire(&run_dir)?;
    let mut manifest = RunManifest::load_or_new(&run_dir, &cfg.run_id)?;
    stamp_invocation(&mut manifest, cfg)?;
    for stage in STAGE_ORDER {
        execute_stage(cfg, stage, false, &mut manifest, &run_dir)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// stage bodies

#[derive(Serialize, Deserialize)]
struct CorpusMeta {
    source_path: String,
    filters_applied: Vec<String>,
    n_posts: usize,
}

fn run_ingest(cfg: &PipelineConfig, run_dir: &Path) -> Result<Vec<String>> {
    let mut corpus = Corpus::load(&cfg.corpus.path, cfg.corpus.format)?;
    if !cfg.corpus.tag_variants.is_empty() {
        corpus = corpus.filter_by_tags(&cfg.corpus.tag_variants, cfg.corpus.tags_case_insensitive)?;
    }
    if let Some(lang) = &cfg.corpus.language {
        corpus = corpus.filter_language(lang);
    }
    let corpus = corpus.cleaned().drop_empty_clean();

    let mut jsonl = String::new();
    for post in corpus.posts() {
        jsonl.push_str(&serde_json::to_string(post)?);
        jsonl.push('\n');
    }
    let clean_path = run_dir.join("corpus.clean.jsonl");
    fs::write(&clean_path, jsonl).map_err(|e| Error::io(&clean_path, e))?;

    let meta = CorpusMeta {
        source_path: corpus.source_path.clone(),
        filters_applied: corpus.filters_applied.clone(),
        n_posts: corpus.len(),
    };
    let meta_path = run_dir.join("corpus.meta.json");
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)
        .map_err(|e| Error::io(&meta_path, e))?;
    Ok(vec!["corpus.clean.jsonl".into(), "corpus.meta.json".into()])
}

fn load_clean_corpus(run_dir: &Path) -> Result<Corpus> {
    let path = run_dir.join("corpus.clean.jsonl");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut posts = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let post: Post = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            path: path.clone(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        posts.push(post);
    }
    Corpus::from_posts(posts, path.display().to_string())
}

fn run_embed(cfg: &PipelineConfig, run_dir: &Path) -> Result<Vec<String>> {
    let corpus = load_clean_corpus(run_dir)?;
    if corpus.is_empty() {
        return Err(Error::Precondition(
            "corpus is empty after filtering; nothing to embed".into(),
        ));
    }
    let spec = cfg.provider.to_spec()?;
    let matrix = embedding::embed_corpus::<Real>(&corpus, &spec)?;
    embedding::write_embeddings(run_dir, "embeddings", &matrix)?;
    Ok(vec!["embeddings.json".into(), "embeddings.bin".into()])
}

fn ratio_dir(ratio: CompressionRatio) -> String {
    format!("autoencoder/ratio_{}", ratio.label().replace('/', "_"))
}

#[derive(Serialize, Deserialize)]
struct CompressedSidecar {
    n: usize,
    k: usize,
    ratio: CompressionRatio,
    #[serde(default)]
    standardized: bool,
    post_ids: Vec<String>,
    dtype: String,
    layout: String,
    endianness: String,
}

fn run_compress(cfg: &PipelineConfig, run_dir: &Path) -> Result<Vec<String>> {
    let matrix = embedding::read_embeddings::<Real>(run_dir, "embeddings")?;
    let inputs = if cfg.training.standardize {
        autoencoder::standardize_columns(&matrix.rows)
    } else {
        matrix.rows.clone()
    };
    let tc = cfg.training.to_config();
    let outcome = autoencoder::train(&inputs, &tc)?;

    let mut artifacts = Vec::new();
    for (ratio, params) in &outcome.models {
        let dir = ratio_dir(*ratio);
        autoencoder::write_params(&run_dir.join(&dir), params, *ratio)?;
        artifacts.push(format!("{dir}/params.json"));
        for i in 0..params.encoder.len() {
            artifacts.push(format!("{dir}/enc{i}_w.bin"));
            artifacts.push(format!("{dir}/enc{i}_b.bin"));
        }
        for i in 0..params.decoder.len() {
            artifacts.push(format!("{dir}/dec{i}_w.bin"));
            artifacts.push(format!("{dir}/dec{i}_b.bin"));
        }
    }

    let report_path = run_dir.join("autoencoder/training_report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&outcome.report)?)
        .map_err(|e| Error::io(&report_path, e))?;
    artifacts.push("autoencoder/training_report.json".into());

    let best = outcome.report.selected_ratio;
    let params = &outcome
        .models
        .iter()
        .find(|(r, _)| *r == best)
        .expect("selected ratio was trained")
        .1;
    let z = autoencoder::encode(params, &inputs)?;
    let sidecar = CompressedSidecar {
        n: z.nrows(),
        k: z.ncols(),
        ratio: best,
        standardized: cfg.training.standardize,
        post_ids: matrix.post_ids.clone(),
        dtype: "f32".into(),
        layout: "row-major".into(),
        endianness: "little".into(),
    };
    let sc_path = run_dir.join("autoencoder/compressed.json");
    fs::write(&sc_path, serde_json::to_string_pretty(&sidecar)?)
        .map_err(|e| Error::io(&sc_path, e))?;
    binio::write_matrix_f32(&run_dir.join("autoencoder/compressed.bin"), &z)?;
    artifacts.push("autoencoder/compressed.json".into());
    artifacts.push("autoencoder/compressed.bin".into());
    Ok(artifacts)
}

fn load_compressed(run_dir: &Path) -> Result<(Array2<Real>, CompressedSidecar)> {
    let sc_path = run_dir.join("autoencoder/compressed.json");
    let text = fs::read_to_string(&sc_path).map_err(|e| Error::io(&sc_path, e))?;
    let sidecar: CompressedSidecar = serde_json::from_str(&text)?;
    let z = binio::read_matrix_f32::<Real>(
        &run_dir.join("autoencoder/compressed.bin"),
        sidecar.n,
        sidecar.k,
    )?;
    Ok((z, sidecar))
}

#[derive(Serialize, Deserialize)]
struct SvdMeta {
    n: usize,
    k: usize,
    rank: usize,
    variance_threshold: f64,
    /// Full spectrum, before truncation.
    singular_values: Vec<f64>,
    explained_variance: Vec<f64>,
}

fn run_factorize(cfg: &PipelineConfig, run_dir: &Path) -> Result<Vec<String>> {
    let (z, _) = load_compressed(run_dir)?;
    let (n, k) = z.dim();
    let full = truncated_svd(&z, n.min(k))?;
    let variance = explained_variance(&full.s)?;
    let rank = select_rank(&variance, cfg.svd.variance_threshold)?;

    let u = full.u.slice(ndarray::s![.., ..rank]).to_owned();
    let s = full.s.slice(ndarray::s![..rank]).to_owned();
    let v = full.v.slice(ndarray::s![.., ..rank]).to_owned();
    let truncated = SvdFactors { u, s, v, rank };
    truncated.validate()?;

    let svd_dir = run_dir.join("svd");
    fs::create_dir_all(&svd_dir).map_err(|e| Error::io(&svd_dir, e))?;
    let meta = SvdMeta {
        n,
        k,
        rank,
        variance_threshold: cfg.svd.variance_threshold,
        singular_values: full.s.iter().copied().collect(),
        explained_variance: variance,
    };
    let meta_path = svd_dir.join("factors.json");
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)
        .map_err(|e| Error::io(&meta_path, e))?;
    binio::write_matrix_f32(&svd_dir.join("u.bin"), &truncated.u)?;
    binio::write_vector_f32(&svd_dir.join("s.bin"), &truncated.s)?;
    binio::write_matrix_f32(&svd_dir.join("v.bin"), &truncated.v)?;
    Ok(vec![
        "svd/factors.json".into(),
        "svd/u.bin".into(),
        "svd/s.bin".into(),
        "svd/v.bin".into(),
    ])
}

fn load_svd_meta(run_dir: &Path) -> Result<SvdMeta> {
    let path = run_dir.join("svd/factors.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn load_u(run_dir: &Path) -> Result<(Array2<Real>, SvdMeta)> {
    let meta = load_svd_meta(run_dir)?;
    let u = binio::read_matrix_f32::<Real>(&run_dir.join("svd/u.bin"), meta.n, meta.rank)?;
    Ok((u, meta))
}

#[derive(Serialize, Deserialize)]
struct ClusterMeta {
    k: usize,
    rank: usize,
    seed: u64,
    inertia: f64,
    n: usize,
    degenerate_elbow: bool,
}

#[derive(Serialize, Deserialize)]
struct QualityMeta {
    with_autoencoder: MetricsSummary,
    without_autoencoder: MetricsSummary,
    k: usize,
    with_rank: usize,
    without_rank: usize,
}

fn finite_or_max(v: Real) -> f64 {
    if v.is_finite() {
        v
    } else if v > 0.0 {
        f64::MAX
    } else {
        f64::MIN
    }
}

fn summary_of(q: &ClusterQuality<Real>) -> MetricsSummary {
    MetricsSummary {
        ch_index: finite_or_max(q.ch_index),
        db_index: finite_or_max(q.db_index),
        silhouette: q.mean_silhouette,
    }
}

fn run_cluster(cfg: &PipelineConfig, run_dir: &Path) -> Result<Vec<String>> {
    let (u, svd_meta) = load_u(run_dir)?;
    let cl = &cfg.cluster;
    let elbow = elbow_select(&u, &cl.k_range, cl.seed, cl.max_iter, cl.tol)?;
    let model = kmeans(&u, elbow.selected_k, cl.seed, cl.max_iter, cl.tol)?;
    let quality_with = cluster_quality(&u, &model.assignments)?;

    // comparison arm: identical SVD + k-means on the raw embeddings
    let raw = embedding::read_embeddings::<Real>(run_dir, "embeddings")?;
    let (n, d) = raw.rows.dim();
    let raw_full = truncated_svd(&raw.rows, n.min(d))?;
    let raw_variance = explained_variance(&raw_full.s)?;
    let raw_rank = select_rank(&raw_variance, cfg.svd.variance_threshold)?;
    let u_raw = raw_full.u.slice(ndarray::s![.., ..raw_rank]).to_owned();
    let model_raw = kmeans(&u_raw, elbow.selected_k, cl.seed, cl.max_iter, cl.tol)?;
    let quality_without = cluster_quality(&u_raw, &model_raw.assignments)?;

    let dir = run_dir.join("clusters");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let meta = ClusterMeta {
        k: model.k,
        rank: svd_meta.rank,
        seed: model.seed,
        inertia: model.inertia,
        n: u.nrows(),
        degenerate_elbow: elbow.degenerate,
    };
    fs::write(dir.join("model.json"), serde_json::to_string_pretty(&meta)?)
        .map_err(|e| Error::io(&dir, e))?;
    binio::write_matrix_f32(&dir.join("centroids.bin"), &model.centroids)?;

    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["post_id", "cluster"])
        .map_err(|e| Error::Config(format!("csv write: {e}")))?;
    for (id, a) in raw.post_ids.iter().zip(model.assignments.iter()) {
        wtr.write_record([id.as_str(), &a.to_string()])
            .map_err(|e| Error::Config(format!("csv write: {e}")))?;
    }
    let csv_bytes = wtr
        .into_inner()
        .map_err(|e| Error::Config(format!("csv flush: {e}")))?;
    fs::write(dir.join("assignments.csv"), csv_bytes).map_err(|e| Error::io(&dir, e))?;

    fs::write(dir.join("elbow.json"), serde_json::to_string_pretty(&elbow)?)
        .map_err(|e| Error::io(&dir, e))?;
    let quality = QualityMeta {
        with_autoencoder: summary_of(&quality_with),
        without_autoencoder: summary_of(&quality_without),
        k: model.k,
        with_rank: svd_meta.rank,
        without_rank: raw_rank,
    };
    fs::write(dir.join("quality.json"), serde_json::to_string_pretty(&quality)?)
        .map_err(|e| Error::io(&dir, e))?;

    Ok(vec![
        "clusters/model.json".into(),
        "clusters/centroids.bin".into(),
        "clusters/assignments.csv".into(),
        "clusters/elbow.json".into(),
        "clusters/quality.json".into(),
    ])
}

fn load_cluster_meta(run_dir: &Path) -> Result<ClusterMeta> {
    let path = run_dir.join("clusters/model.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn load_assignments(run_dir: &Path) -> Result<Vec<(String, usize)>> {
    let path = run_dir.join("clusters/assignments.csv");
    let mut rdr = csv::Reader::from_path(&path)
        .map_err(|e| Error::ArtifactCorrupt { path: path.clone(), msg: e.to_string() })?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let rec = row.map_err(|e| Error::ArtifactCorrupt {
            path: path.clone(),
            msg: e.to_string(),
        })?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let cluster: usize = rec
            .get(1)
            .unwrap_or_default()
            .parse()
            .map_err(|e| Error::ArtifactCorrupt {
                path: path.clone(),
                msg: format!("bad cluster column: {e}"),
            })?;
        out.push((id, cluster));
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct SampleMember {
    post_id: String,
    silhouette: f64,
    clean_text: String,
}

#[derive(Serialize, Deserialize)]
struct SampleExport {
    cluster_id: usize,
    plan: SamplePlan,
    members: Vec<SampleMember>,
}

fn run_sample(cfg: &PipelineConfig, run_dir: &Path) -> Result<Vec<String>> {
    let (u, _) = load_u(run_dir)?;
    let cluster_meta = load_cluster_meta(run_dir)?;
    let rows = load_assignments(run_dir)?;
    let corpus = load_clean_corpus(run_dir)?;
    let text_of: std::collections::HashMap<&str, &str> = corpus
        .posts()
        .iter()
        .map(|p| (p.id.as_str(), p.clean_text.as_str()))
        .collect();

    let ids: Vec<String> = rows.iter().map(|(id, _)| id.clone()).collect();
    let assignments: Vec<usize> = rows.iter().map(|(_, c)| *c).collect();
    let plan = SamplePlan::new(cfg.sample.z, cfg.sample.p, cfg.sample.e)?;
    let scores = silhouette(&u, &assignments)?;

    let dir = run_dir.join("samples");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut artifacts = Vec::new();
    for cluster_id in 0..cluster_meta.k {
        let rep = select_representatives_with_scores(
            cluster_id,
            &assignments,
            &scores.per_point,
            &ids,
            &plan,
        )?;
        let members = rep
            .members
            .iter()
            .map(|(post_id, sil)| {
                let clean_text = text_of.get(post_id.as_str()).copied().ok_or_else(|| {
                    Error::ArtifactCorrupt {
                        path: run_dir.join("corpus.clean.jsonl"),
                        msg: format!("post {post_id:?} missing from corpus"),
                    }
                })?;
                Ok(SampleMember {
                    post_id: post_id.clone(),
                    silhouette: *sil,
                    clean_text: clean_text.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let export = SampleExport {
            cluster_id,
            plan: plan.clone(),
            members,
        };
        let rel = format!("samples/cluster_{cluster_id}.json");
        let path = run_dir.join(&rel);
        fs::write(&path, serde_json::to_string_pretty(&export)?)
            .map_err(|e| Error::io(&path, e))?;
        artifacts.push(rel);
    }
    Ok(artifacts)
}

fn load_sample(run_dir: &Path, cluster_id: usize) -> Result<SampleExport> {
    let path = run_dir.join(format!("samples/cluster_{cluster_id}.json"));
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn run_themes(cfg: &PipelineConfig, run_dir: &Path) -> Result<Vec<String>> {
    let cluster_meta = load_cluster_meta(run_dir)?;
    let mut samples = Vec::new();
    for cluster_id in 0..cluster_meta.k {
        let export = load_sample(run_dir, cluster_id)?;
        samples.push(ClusterSample {
            cluster_id,
            texts: export.members.iter().map(|m| m.clean_text.clone()).collect(),
        });
    }
    let llm1 = cfg.agentic.llm1.to_spec()?;
    let llm2 = cfg.agentic.llm2.to_spec()?;
    let templates = cfg.prompt_templates()?;
    let extractor = match &cfg.agentic.extractor {
        Some(section) => Some(section.to_spec()?),
        None => None,
    };
    let outcome = run_all_clusters(
        &samples,
        &llm1,
        &llm2,
        cfg.agentic.quality_threshold,
        cfg.agentic.max_iterations,
        &templates,
        extractor.as_ref(),
    )?;

    let dir = run_dir.join("transcripts");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut artifacts = Vec::new();
    for transcript in &outcome.transcripts {
        let rel = format!("transcripts/cluster_{}.json", transcript.cluster_id);
        let path = run_dir.join(&rel);
        fs::write(&path, serde_json::to_string_pretty(transcript)?)
            .map_err(|e| Error::io(&path, e))?;
        artifacts.push(rel);
    }
    for (cluster_id, rounds) in &outcome.partials {
        let path = run_dir.join(format!("transcripts/cluster_{cluster_id}.partial.json"));
        fs::write(&path, serde_json::to_string_pretty(rounds)?)
            .map_err(|e| Error::io(&path, e))?;
    }
    if !outcome.failures.is_empty() {
        let summary = outcome
            .failures
            .iter()
            .map(|f| format!("cluster {}: {}", f.cluster_id, f.message))
            .collect::<Vec<_>>()
            .join("; ");
        let external = outcome.failures.iter().any(|f| f.external);
        return Err(if external {
            Error::ChatClient {
                msg: format!("theme extraction failed for {summary}"),
            }
        } else {
            let first = &outcome.failures[0];
            Error::ClusterFailed {
                cluster_id: first.cluster_id,
                rounds_completed: first.rounds_completed,
                msg: summary,
            }
        });
    }
    Ok(artifacts)
}

fn run_report(_cfg: &PipelineConfig, run_dir: &Path) -> Result<Vec<String>> {
    let cluster_meta = load_cluster_meta(run_dir)?;

    let mut clusters = Vec::new();
    for cluster_id in 0..cluster_meta.k {
        let t_path = run_dir.join(format!("transcripts/cluster_{cluster_id}.json"));
        if !t_path.exists() {
            return Err(Error::MissingArtifact {
                stage: "themes".into(),
                msg: format!("transcript missing for cluster {cluster_id}"),
            });
        }
        let text = fs::read_to_string(&t_path).map_err(|e| Error::io(&t_path, e))?;
        let transcript: crate::agentic::RefinementTranscript = serde_json::from_str(&text)?;
        let sample = load_sample(run_dir, cluster_id)?;
        let final_score = transcript
            .rounds
            .last()
            .map(|r| r.evaluation.score)
            .unwrap_or(0.0);
        clusters.push(ClusterReportInput {
            cluster_id,
            final_themes: transcript.final_themes.clone(),
            rounds: transcript.rounds.len(),
            final_score,
            terminal_reason: transcript.terminal_reason,
            sample_texts: sample.members.into_iter().map(|m| m.clean_text).collect(),
        });
    }

    let q_path = run_dir.join("clusters/quality.json");
    let q_text = fs::read_to_string(&q_path).map_err(|e| Error::io(&q_path, e))?;
    let quality: QualityMeta = serde_json::from_str(&q_text)?;
    let metrics = MetricsTable::new(quality.with_autoencoder, quality.without_autoencoder);

    let tr_path = run_dir.join("autoencoder/training_report.json");
    let tr_text = fs::read_to_string(&tr_path).map_err(|e| Error::io(&tr_path, e))?;
    let training: autoencoder::TrainingReport = serde_json::from_str(&tr_text)?;
    let autoencoder_loss = training
        .curves
        .iter()
        .map(|c| {
            (
                c.ratio.label().to_string(),
                c.train.iter().copied().zip(c.val.iter().copied()).collect(),
            )
        })
        .collect();

    let svd_meta = load_svd_meta(run_dir)?;
    let e_path = run_dir.join("clusters/elbow.json");
    let e_text = fs::read_to_string(&e_path).map_err(|e| Error::io(&e_path, e))?;
    let elbow: ElbowResult = serde_json::from_str(&e_text)?;

    let inputs = ReportInputs {
        clusters,
        metrics,
        curves: Curves {
            autoencoder_loss,
            explained_variance: svd_meta.explained_variance,
            elbow_inertia: elbow.inertias,
        },
    };
    report::write_report(&run_dir.join("report"), &inputs)?;
    Ok(vec![
        "report/themes.json".into(),
        "report/wordcloud.json".into(),
        "report/sankey.json".into(),
        "report/metrics.json".into(),
        "report/curves/autoencoder_loss.csv".into(),
        "report/curves/explained_variance.csv".into(),
        "report/curves/elbow_inertia.csv".into(),
    ])
}
