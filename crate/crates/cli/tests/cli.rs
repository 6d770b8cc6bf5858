use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn golden() -> PathBuf {
    fixtures().join("golden/seven_plates.json")
}

fn smc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_motifsmith"))
        .current_dir(dir)
        .env_clear()
        .env("PATH", std::env::var_os("PATH").unwrap_or_default())
        .arg("--fixtures")
        .arg(fixtures())
        .arg("--assets")
        .arg(fixtures().join("assets/manifest.jsonl"))
        .args(["--library", "lib"])
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn learn(dir: &Path) {
    let o = smc(dir, &["learn", golden().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn learn_then_generate_books() {
    let dir = tempfile::tempdir().unwrap();
    let o = smc(
        dir.path(),
        &["learn", golden().to_str().unwrap(), "--out", "learned.json"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("create_stack"));
    assert!(dir.path().join("lib/stack/meta.py").is_file());
    let learned: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("learned.json")).unwrap()).unwrap();
    assert_eq!(learned["report"]["llm_calls"], 15);

    let o = smc(
        dir.path(),
        &["generate", "a stack of four books", "--out", "books.json"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let layout: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("books.json")).unwrap()).unwrap();
    let objs = layout["objects"].as_array().unwrap();
    assert_eq!(objs.len(), 4);
    assert!(objs.iter().all(|o| o["label"] == "book"));
}

#[test]
fn generate_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    learn(dir.path());
    let run = |name: &str| {
        let o = smc(
            dir.path(),
            &["generate", "a stack of four books", "--seed", "0", "--out", name],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        std::fs::read(dir.path().join(name)).unwrap()
    };
    assert_eq!(run("a.json"), run("b.json"));
}

#[test]
fn merged_mesh_export() {
    let dir = tempfile::tempdir().unwrap();
    learn(dir.path());
    let o = smc(
        dir.path(),
        &[
            "generate",
            "a stack of four books",
            "--export",
            "merged-mesh",
            "--out",
            "books.obj",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let obj = std::fs::read_to_string(dir.path().join("books.obj")).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("o ")).count(), 4);

    let o = smc(dir.path(), &["export", golden().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        String::from_utf8_lossy(&o.stdout)
            .lines()
            .filter(|l| l.starts_with("o "))
            .count(),
        7
    );
}

#[test]
fn classify_and_index() {
    let dir = tempfile::tempdir().unwrap();
    let o = smc(dir.path(), &["classify", "a stack of four books"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "stack");

    let o = smc(dir.path(), &["assets", "index"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(out.starts_with("8 assets"), "{out}");
    assert!(out.contains("book: 6"));
}

#[test]
fn validate_reports_each_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let mut layout: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(golden()).unwrap()).unwrap();
    std::fs::write(dir.path().join("same.json"), layout.to_string()).unwrap();
    let o = smc(
        dir.path(),
        &["validate", golden().to_str().unwrap(), "--trace", "same.json"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let x = layout["objects"][2]["position"][0].as_f64().unwrap();
    layout["objects"][2]["position"][0] = (x + 0.1).into();
    std::fs::write(dir.path().join("moved.json"), layout.to_string()).unwrap();
    let o = smc(
        dir.path(),
        &["validate", golden().to_str().unwrap(), "--trace", "moved.json"],
    );
    assert_eq!(code(&o), 4);
    let out = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(out.contains("FAIL placements"), "{out}");
    assert!(out.contains("obj_3"), "{out}");
    assert_eq!(out.matches("FAIL").count(), 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // configuration
    let o = smc(dir.path(), &["--backend", "live", "classify", "x"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    std::fs::write(dir.path().join("bad.toml"), "jobs = \"many\"").unwrap();
    let o = smc(dir.path(), &["--config", "bad.toml", "classify", "x"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    // unreadable input
    let o = smc(dir.path(), &["learn", "missing.json"]);
    assert_eq!(code(&o), 3);
    std::fs::write(dir.path().join("broken.json"), "{\"objects\": [").unwrap();
    let o = smc(dir.path(), &["learn", "broken.json"]);
    assert_eq!(code(&o), 3);
    // no recorded reply for this conversation
    let o = smc(dir.path(), &["classify", "a row of chairs"]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("missing_fixture"));
    // nothing learned yet
    let o = smc(dir.path(), &["generate", "a stack of four books"]);
    assert_eq!(code(&o), 6, "{}", stderr(&o));
}

#[test]
fn talks_to_a_running_service() {
    let dir = tempfile::tempdir().unwrap();
    let rt = tokio::runtime::Runtime::new().unwrap();
    let cfg = motifsmith_service::ServiceConfig {
        library: dir.path().join("served"),
        backend: motifsmith_service::BackendConfig::Replay {
            fixtures: fixtures().join("llm"),
        },
        executor: motifsmith_service::ExecutorConfig::Fixtures {
            dir: fixtures().join("traces"),
        },
        ..Default::default()
    };
    let addr = rt.block_on(async {
        let state = motifsmith_service::AppState::new(cfg).unwrap();
        motifsmith_service::spawn("127.0.0.1:0".parse().unwrap(), state)
            .await
            .unwrap()
            .0
    });
    let url = format!("http://{addr}");
    let o = smc(dir.path(), &["--server", &url, "classify", "a stack of four books"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "stack");
    drop(rt);
}
