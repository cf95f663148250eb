//! Stage-machinery tests: dependency ordering, artifact caching and
//! invalidation, the run-directory lock, and failure isolation when the
//! theme stage's endpoint is unreachable.

mod common;

use std::fs;
use std::path::{Path, PathBuf};

use beyondwords_core::pipeline::{self, stages::RunLock, PipelineConfig, Stage};
use beyondwords_core::Error;

fn scripted_fixture(base: &Path, run_id: &str) -> PathBuf {
    let posts = pipeline::synth::generate_posts(60, 3, 5).unwrap();
    pipeline::synth::write_jsonl(&base.join("corpus.jsonl"), &posts).unwrap();
    fs::create_dir_all(base.join("scripts")).unwrap();
    let llm1 = vec![
        "===BEGIN===\nkeywords:\nburnout | common\nsupport | common\n===END===".to_string(),
        "===BEGIN===\ngroups:\nWellbeing | burnout, support\n===END===".to_string(),
        "===BEGIN===\nthemes:\nWellbeing talk | coping and support | Wellbeing\n===END===".to_string(),
    ];
    let llm2 = vec!["===BEGIN===\nscore: 9\nfeedback: solid.\n===END===".to_string()];
    fs::write(base.join("scripts/llm1.json"), serde_json::to_string(&llm1).unwrap()).unwrap();
    fs::write(base.join("scripts/llm2.json"), serde_json::to_string(&llm2).unwrap()).unwrap();
    let config = format!(
        r##"
run_id = "{run_id}"

[corpus]
path = "corpus.jsonl"

[provider]
kind = "planted"
dimension = 16
seed = 5
separation = 10.0
noise = 1.0

[training]
epochs = 10
batch_size = 16
learning_rate = 0.05
val_fraction = 0.2
seed = 5

[cluster]
k_range = [1, 2, 3, 4, 5, 6, 7, 8]
seed = 5

[agentic]
[agentic.llm1]
kind = "scripted"
script_path = "scripts/llm1.json"
[agentic.llm2]
kind = "scripted"
script_path = "scripts/llm2.json"
"##
    );
    let path = base.join("config.toml");
    fs::write(&path, config).unwrap();
    path
}

#[test]
fn stage_out_of_order_names_missing_dependency() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::load(&scripted_fixture(dir.path(), "order")).unwrap();
    match pipeline::stage_run(&cfg, Stage::Cluster, false) {
        Err(Error::MissingArtifact { stage, .. }) => assert_eq!(stage, "factorize"),
        other => panic!("expected MissingArtifact, got {other:?}"),
    }
}

#[test]
fn unchanged_stage_is_skipped_and_force_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::load(&scripted_fixture(dir.path(), "cache")).unwrap();
    pipeline::stage_run(&cfg, Stage::Ingest, false).unwrap();
    let run_dir = cfg.run_path();
    let stamp = |run_dir: &Path| {
        let m = fs::read_to_string(run_dir.join("manifest.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&m).unwrap();
        v["stages"]["ingest"]["completed_at"].as_str().unwrap().to_string()
    };
    let first = stamp(&run_dir);
    std::thread::sleep(std::time::Duration::from_millis(1100));
    pipeline::stage_run(&cfg, Stage::Ingest, false).unwrap();
    assert_eq!(stamp(&run_dir), first, "unchanged stage must be skipped");
    pipeline::stage_run(&cfg, Stage::Ingest, true).unwrap();
    assert_ne!(stamp(&run_dir), first, "--force must re-run the stage");
}

#[test]
fn config_change_invalidates_dependents() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::load(&scripted_fixture(dir.path(), "invalidate")).unwrap();
    pipeline::stage_run(&cfg, Stage::Ingest, false).unwrap();
    pipeline::stage_run(&cfg, Stage::Embed, false).unwrap();

    let mut changed = cfg.clone();
    changed.provider.seed = 99;
    // compress now sees a stale embed stage
    match pipeline::stage_run(&changed, Stage::Compress, false) {
        Err(Error::MissingArtifact { stage, .. }) => assert_eq!(stage, "embed"),
        other => panic!("expected MissingArtifact, got {other:?}"),
    }
    // re-running embed under the new config clears the path
    pipeline::stage_run(&changed, Stage::Embed, false).unwrap();
    pipeline::stage_run(&changed, Stage::Compress, false).unwrap();
}

#[test]
fn tampered_artifact_fails_hash_verification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::load(&scripted_fixture(dir.path(), "tamper")).unwrap();
    pipeline::stage_run(&cfg, Stage::Ingest, false).unwrap();
    let target = cfg.run_path().join("corpus.clean.jsonl");
    let mut text = fs::read_to_string(&target).unwrap();
    text.push('\n');
    fs::write(&target, text).unwrap();
    match pipeline::stage_run(&cfg, Stage::Embed, false) {
        Err(Error::MissingArtifact { stage, .. }) => assert_eq!(stage, "ingest"),
        other => panic!("expected MissingArtifact, got {other:?}"),
    }
}

#[test]
fn run_directory_lock_is_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::load(&scripted_fixture(dir.path(), "lock")).unwrap();
    let run_dir = cfg.run_path();
    fs::create_dir_all(&run_dir).unwrap();
    let guard = RunLock::acquire(&run_dir).unwrap();
    match pipeline::stage_run(&cfg, Stage::Ingest, false) {
        Err(Error::RunLocked { .. }) => {}
        other => panic!("expected RunLocked, got {other:?}"),
    }
    drop(guard);
    pipeline::stage_run(&cfg, Stage::Ingest, false).unwrap();
}

#[test]
fn second_run_all_is_fully_cached() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::load(&scripted_fixture(dir.path(), "rerun")).unwrap();
    pipeline::run_all(&cfg).unwrap();
    let manifest_before = fs::read_to_string(cfg.run_path().join("manifest.json")).unwrap();
    pipeline::run_all(&cfg).unwrap();
    let manifest_after = fs::read_to_string(cfg.run_path().join("manifest.json")).unwrap();
    assert_eq!(manifest_before, manifest_after);
}

#[test]
fn unreachable_theme_endpoint_preserves_prior_stages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = scripted_fixture(dir.path(), "isolate");
    let mut cfg = PipelineConfig::load(&cfg_path).unwrap();
    cfg.agentic.llm1.kind = beyondwords_core::agentic::ClientKind::Http;
    cfg.agentic.llm1.endpoint = Some("http://127.0.0.1:9".into());
    cfg.agentic.llm1.model_id = Some("m".into());
    cfg.agentic.llm1.script_path = None;
    cfg.agentic.llm1.max_retries = 1;

    let err = pipeline::run_all(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 3, "external-service failure class, got {err}");

    let run_dir = cfg.run_path();
    for artifact in [
        "corpus.meta.json",
        "embeddings.bin",
        "autoencoder/compressed.bin",
        "svd/u.bin",
        "clusters/model.json",
        "samples/cluster_0.json",
    ] {
        assert!(run_dir.join(artifact).exists(), "{artifact} should persist");
    }
    assert!(!run_dir.join("report/themes.json").exists());

    let manifest = fs::read_to_string(run_dir.join("manifest.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert!(v["stages"]["sample"].is_object());
    assert!(v["stages"]["themes"].is_null());
}

#[test]
fn empty_filtered_corpus_fails_embed_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = scripted_fixture(dir.path(), "empty");
    let mut cfg = PipelineConfig::load(&cfg_path).unwrap();
    cfg.corpus.tag_variants = vec!["#nomatch".into()];
    pipeline::stage_run(&cfg, Stage::Ingest, false).unwrap();
    assert!(pipeline::stage_run(&cfg, Stage::Embed, false).is_err());
}
