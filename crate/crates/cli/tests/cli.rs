use std::path::Path;
use std::process::{Command, Output};

use taskspace_core::synth::{write_mini_corpus, MiniSpec};

fn taskspace(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taskspace"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn mini() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let spec = MiniSpec {
        n_questions: 400,
        n_users: 60,
        ..MiniSpec::default()
    };
    write_mini_corpus(dir.path(), &spec).unwrap();
    dir
}

#[test]
fn missing_upstream_exits_two_and_names_stage() {
    let data = mini();
    let out = tempfile::tempdir().unwrap();
    let conf = data.path().join("pipeline.conf");
    let conf = conf.to_str().unwrap();
    let o = taskspace(&["econ", "--config", conf], out.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`ingest`"));
    assert!(taskspace(&["--stage", "ingest", "--config", conf], out.path()).status.success());
}

#[test]
fn invalid_config_and_unknown_ids_exit_one() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let conf = data.path().join("bad.conf");
    std::fs::write(&conf, "seed = 1\nmystery = 3\n").unwrap();
    let conf = conf.to_str().unwrap();
    assert_eq!(taskspace(&["ingest", "--config", conf], out.path()).status.code(), Some(1));
    assert_eq!(taskspace(&["--figure", "fig9z"], out.path()).status.code(), Some(1));
    assert_eq!(taskspace(&["plot", "--config", conf], out.path()).status.code(), Some(1));
}

#[test]
fn seed_override_changes_manifest_and_figures_follow_stages() {
    let data = mini();
    let conf = data.path().join("pipeline.conf");
    let conf = conf.to_str().unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(taskspace(&["all", "--config", conf, "--figure", "fig4b", "--figure", "fig2b"], a.path()).status.success());
    assert!(taskspace(&["ingest", "--config", conf, "--seed", "99"], b.path()).status.success());
    let ma = std::fs::read_to_string(a.path().join("ingest/manifest.json")).unwrap();
    let mb = std::fs::read_to_string(b.path().join("ingest/manifest.json")).unwrap();
    assert_ne!(ma, mb);
    let fig = std::fs::read_to_string(a.path().join("figures/fig4b.csv")).unwrap();
    assert_eq!(fig.lines().next(), Some("year,language,top_task_count"));
    let fig = std::fs::read_to_string(a.path().join("figures/fig2b.csv")).unwrap();
    assert_eq!(fig.lines().count(), 11);
}
