use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY_WORLD: &str = "\
broad_categories = 2
fine_per_broad = 3
items_per_fine = 8
tags_per_fine = 2
id_pairs = 120
ood_pairs = 60
";

const TINY_RUN: &str = "\
[run]
ensemble_size = 3
outer_folds = 3
fold_limit = 2

[sampling]
per_category_queries = 3
per_query_candidates = 8

[classifier]
l2_grid = [0.01]
max_iters = 60
";

fn relact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relact"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn relact")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn make_world(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("world.toml");
    fs::write(&cfg, TINY_WORLD).unwrap();
    let world = dir.join("world");
    let o = relact(&["genworld", "--config", p(&cfg), "--seed", "7", "--out", p(&world)]);
    assert!(o.status.success(), "{}", stderr(&o));
    world
}

#[test]
fn help_lists_every_subcommand() {
    let o = relact(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for cmd in ["genworld", "import-labels", "runloop", "resume", "evaluate", "report", "annotate-once"] {
        assert!(text.contains(cmd), "missing {cmd} in:\n{text}");
    }
    let o = relact(&["runloop", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for flag in ["--strategy", "--rounds", "--seed", "--world", "--annotator", "--llm-endpoint", "--out"] {
        assert!(text.contains(flag), "missing {flag} in:\n{text}");
    }
    assert!(text.contains("random, qbc, margin"), "{text}");
}

#[test]
fn misspelled_strategy_is_a_usage_error() {
    let o = relact(&["runloop", "--strategy", "qcb", "--out", "unused"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("qcb") && err.contains("qbc"), "{err}");
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    assert_eq!(relact(&[]).status.code(), Some(1));
    assert_eq!(relact(&["runloop"]).status.code(), Some(1));
}

#[test]
fn unknown_item_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let world = make_world(dir.path());
    let o = relact(&["annotate-once", "--world", p(&world), "--x", "no-such-item", "--y", "it00001"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("error:") && err.contains("no-such-item"), "{err}");
}

#[test]
fn resume_without_a_run_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = relact(&["resume", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn annotate_once_prints_draws_and_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let world = make_world(dir.path());
    let o = relact(&["annotate-once", "--world", p(&world), "--x", "it00000", "--y", "it00001"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("pair: it00000 | it00001"), "{text}");
    assert!(text.lines().any(|l| l.starts_with("draws: ") && l.split(", ").count() == 3), "{text}");
    assert!(text.contains("adopted: ") || text.contains("not adopted"), "{text}");
}

#[test]
fn import_labels_normalizes_a_label_file() {
    let dir = tempfile::tempdir().unwrap();
    let world = make_world(dir.path());
    let out = dir.path().join("labels.csv");
    let o = relact(&[
        "import-labels",
        "--items",
        p(&world.join("items.jsonl")),
        "--labels",
        p(&world.join("id_labels.csv")),
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = fs::read_to_string(world.join("id_labels.csv")).unwrap().lines().count() - 1;
    assert!(stdout(&o).starts_with(&format!("{rows} pairs")), "{}", stdout(&o));
    assert!(out.is_file());
}

#[test]
fn runloop_report_resume_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let world = make_world(dir.path());
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, TINY_RUN).unwrap();
    let run = dir.path().join("run");
    let o = relact(&[
        "runloop",
        "--config",
        p(&cfg),
        "--world",
        p(&world),
        "--strategy",
        "qbc",
        "--rounds",
        "2",
        "--seed",
        "3",
        "--out",
        p(&run),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    assert_eq!(table.lines().filter(|l| l.contains("qbc")).count(), 3, "{table}");
    for f in ["config.json", "reports.csv", "gains.csv", "manifest.json", "round_0002/checkpoint.json"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }

    let o = relact(&["report", "--out", p(&run)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("OOD: correlation"), "{}", stdout(&o));

    let before = fs::read(run.join("manifest.json")).unwrap();
    let o = relact(&["resume", "--out", p(&run)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(run.join("manifest.json")).unwrap(), before);

    let o = relact(&["evaluate", "--out", p(&run), "--labels", p(&world.join("ood_labels.csv"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.contains("macro-F1")).count(), 2, "{}", stdout(&o));

    let o = relact(&["runloop", "--config", p(&cfg), "--world", p(&world), "--out", p(&run)]);
    assert_eq!(o.status.code(), Some(2), "starting over an existing run must fail");
}
