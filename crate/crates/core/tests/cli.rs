use std::process::Command;

fn kgcdr(dir: &std::path::Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_kgcdr"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn synth_then_evaluate_a_baseline() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        r#"
[paths]
ratings_source = "synth/data/ratings_S.tsv"
ratings_target = "synth/data/ratings_T.tsv"
output = "eval"

[experiment]
models = ["cmf"]
seeds = [0]

[experiment.factor]
max_epochs = 3

[synthetic]
n_users = 50
n_items = [40, 40]
density = [0.2, 0.1]
"#,
    )
    .unwrap();
    let out = kgcdr(dir.path(), &["synth", "-c", "run.toml", "-o", "synth"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = kgcdr(dir.path(), &["evaluate", "-c", "run.toml"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("cmf"), "{table}");
    assert!(dir.path().join("eval/reports/report.jsonl").is_file());
    assert!(dir.path().join("eval/config.toml").is_file());
}

#[test]
fn failures_print_one_categorized_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = kgcdr(dir.path(), &["evaluate", "-o", "never"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[config]: paths.ratings_source is required"), "{err}");
    assert!(!dir.path().join("never").exists());

    std::fs::write(dir.path().join("bad.toml"), "[experiment]\nseeds = \"x\"\n").unwrap();
    let out = kgcdr(dir.path(), &["train", "-c", "bad.toml"]);
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error[config]: "));

    let out = kgcdr(dir.path(), &["pretrain", "-c", "missing.toml"]);
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error[io]: missing.toml"));
}
