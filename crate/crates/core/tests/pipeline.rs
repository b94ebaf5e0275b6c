use std::path::Path;
use std::time::Instant;

use taskspace_core::pipeline::{emit_figure_data, Manifest, Pipeline, PipelineConfig, Stage, FIGURES};
use taskspace_core::synth::{write_mini_corpus, MiniSpec};
use taskspace_core::Error;

fn mini(dir: &Path) -> PipelineConfig {
    write_mini_corpus(dir, &MiniSpec::default()).unwrap();
    PipelineConfig::load(&dir.join("pipeline.conf"), None).unwrap()
}

#[test]
fn full_run_writes_every_stage_and_figure() {
    let _ = env_logger::builder().is_test(true).try_init();
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let pipeline = Pipeline::new(mini(data.path()), out.path());
    let start = Instant::now();
    let manifests = pipeline.run_all().unwrap();
    eprintln!("all stages in {:?}", start.elapsed());
    assert_eq!(manifests.len(), Stage::ALL.len());
    for m in &manifests {
        assert_eq!(m.config_hash, pipeline.config.hash());
        assert_eq!(Manifest::read(&out.path().join(&m.stage)).unwrap(), *m);
    }
    for (id, _, _) in FIGURES {
        let path = emit_figure_data(id, out.path()).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.lines().count() >= 2, "{id} has no rows:\n{text}");
    }
    let fig4b = std::fs::read_to_string(out.path().join("figures/fig4b.csv")).unwrap();
    assert!(fig4b.starts_with("year,language,top_task_count\n"));
    let results = std::fs::read_to_string(out.path().join("econ/results.json")).unwrap();
    eprintln!("{results}");
}

#[test]
fn missing_upstream_stage_is_named() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let pipeline = Pipeline::new(mini(data.path()), out.path());
    match pipeline.run(Stage::Econ) {
        Err(Error::MissingArtifact { stage, .. }) => assert_eq!(stage, "ingest"),
        other => panic!("{other:?}"),
    }
    pipeline.run(Stage::Ingest).unwrap();
    pipeline.run(Stage::Sbm).unwrap();
    pipeline.run(Stage::Taxonomy).unwrap();
    match pipeline.run(Stage::Econ) {
        Err(Error::MissingArtifact { stage, .. }) => assert_eq!(stage, "relatedness"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn rerunning_a_downstream_stage_leaves_upstream_untouched() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let pipeline = Pipeline::new(mini(data.path()), out.path());
    for s in [Stage::Ingest, Stage::Sbm, Stage::Taxonomy] {
        pipeline.run(s).unwrap();
    }
    let before = Manifest::read(&out.path().join("sbm")).unwrap();
    std::fs::remove_dir_all(out.path().join("taxonomy")).unwrap();
    pipeline.run(Stage::Taxonomy).unwrap();
    assert_eq!(Manifest::read(&out.path().join("sbm")).unwrap(), before);
    assert_eq!(taskspace_core::pipeline::hash_outputs(&out.path().join("sbm")).unwrap(), before.outputs);
}
