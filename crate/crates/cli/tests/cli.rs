use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn newsrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_newsrec"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

const SMALL: &[&str] = &[
    "-s", "n_articles=60", "-s", "n_categories=4", "-s", "n_users=300", "-s", "n_sessions=300", "-s", "hours=6",
    "-s", "word_dim=8", "-s", "conv_filters=4", "-s", "content_dim=6", "-s", "acr_epochs=2",
    "-s", "item_dim=8", "-s", "lstm_units=5", "-s", "nar_batch_size=16", "-s", "buffer_size=200",
    "-s", "eval_negatives=10",
];

fn run(args: &[&str]) -> Output {
    let mut all: Vec<&str> = SMALL.to_vec();
    all.extend_from_slice(args);
    newsrec(&all)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic data plus a trained repository in `dir`.
fn prepare(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let o = run(&["synth", "-o", s(dir)]);
    assert!(o.status.success(), "{}", text(&o));
    let (articles, clicks) = (dir.join("articles.jsonl"), dir.join("clicks.jsonl"));
    let o = run(&["acr-train", "-o", s(dir), "--articles", s(&articles), "--categories", s(&dir.join("categories.txt"))]);
    assert!(o.status.success(), "{}", text(&o));
    (articles, clicks, dir.join("embeddings.txt"))
}

#[test]
fn synth_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = run(&["synth", "-o", s(d.path())]);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    }
    for f in ["articles.jsonl", "clicks.jsonl", "categories.txt"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn synth_rejects_zero_hours() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["synth", "-o", s(d.path()), "--hours", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("hours"), "{}", text(&o));
}

#[test]
fn unknown_key_and_bad_flags_are_usage_errors() {
    assert_eq!(newsrec(&["-s", "nonsense=1", "synth"]).status.code(), Some(1));
    assert_eq!(newsrec(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(newsrec(&["--help"]).status.code(), Some(0));
}

#[test]
fn acr_train_errors() {
    let d = tempfile::tempdir().unwrap();
    let missing = d.path().join("nope.jsonl");
    let o = run(&["acr-train", "-o", s(d.path()), "--articles", s(&missing)]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    assert!(text(&o).contains("nope.jsonl"));

    let corrupt = d.path().join("bad.jsonl");
    std::fs::write(
        &corrupt,
        "{\"article_id\":\"a\",\"text\":\"x y\",\"publisher\":\"p\",\"category\":\"c\",\"published_at\":0}\n{oops\n",
    )
    .unwrap();
    let o = run(&["acr-train", "-o", s(d.path()), "--articles", s(&corrupt)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("line 2"), "{}", text(&o));
}

#[test]
fn full_pipeline() {
    let d = tempfile::tempdir().unwrap();
    let (articles, clicks, repo) = prepare(d.path());
    let repo_text = std::fs::read_to_string(&repo).unwrap();
    assert!(repo_text.starts_with("ACR-EMB v1 60 6"), "{}", &repo_text[..40]);

    // Same seed gives the same repository bytes.
    let again = tempfile::tempdir().unwrap();
    let o = run(&["acr-train", "-o", s(again.path()), "--articles", s(&articles), "--categories", s(&d.path().join("categories.txt"))]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(again.path().join("embeddings.txt")).unwrap(), repo_text.as_bytes());

    let out = |name: &str| d.path().join(name);
    std::fs::create_dir(out("t1")).unwrap();
    std::fs::create_dir(out("t2")).unwrap();
    let eval = |dir: &Path, threads: &str| {
        run(&[
            "evaluate", "-o", s(dir), "--threads", threads, "--articles", s(&articles), "--clicks", s(&clicks),
            "--repository", s(&repo), "--methods", "all", "--records",
        ])
    };
    let o = eval(&out("t1"), "1");
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("0 temporal violations"));
    let o = eval(&out("t2"), "3");
    assert!(o.status.success(), "{}", text(&o));
    let m1 = std::fs::read_to_string(out("t1/metrics.tsv")).unwrap();
    assert_eq!(m1.as_bytes(), std::fs::read(out("t2/metrics.tsv")).unwrap());
    assert!(m1.lines().count() > 7 * 3);
    assert!(out("t1/records.jsonl").exists() && out("t1/nar.ckpt").exists());

    // The echoed config reproduces the run.
    std::fs::create_dir(out("t3")).unwrap();
    let o = newsrec(&["evaluate", "-c", s(&out("t1/evaluate.conf")), "-o", s(&out("t3"))]);
    assert!(o.status.success(), "{}", text(&o));
    assert_eq!(m1.as_bytes(), std::fs::read(out("t3/metrics.tsv")).unwrap());

    let o = run(&["report", s(&out("t1/metrics.tsv")), "-o", s(&out("rep"))]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("median_hr"));
    let series: Vec<_> = std::fs::read_dir(out("rep/series")).unwrap().collect();
    assert_eq!(series.len(), 2 * 7);
}

#[test]
fn recpop_only_needs_no_repository() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["synth", "-o", s(d.path())]);
    assert!(o.status.success());
    let o = run(&[
        "evaluate", "-o", s(d.path()), "--articles", s(&d.path().join("articles.jsonl")), "--clicks",
        s(&d.path().join("clicks.jsonl")), "--methods", "recpop",
    ]);
    assert!(o.status.success(), "{}", text(&o));
    let m = std::fs::read_to_string(d.path().join("metrics.tsv")).unwrap();
    assert!(m.lines().skip(1).all(|l| l.split('\t').nth(1) == Some("recpop")));
    assert!(m.lines().count() >= 5);
}

#[test]
fn evaluate_usage_errors() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["evaluate", "--methods", "nar,gru4rec", "--articles", "x", "--clicks", "y"]);
    assert_eq!(o.status.code(), Some(1));
    let msg = text(&o);
    assert!(msg.contains("gru4rec") && msg.contains("cooccurrence, sr, itemknn, vsknn, recpop, content"), "{msg}");
    let o = run(&["evaluate", "-o", s(d.path()), "--methods", "sr"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("articles"));
}

#[test]
fn report_errors() {
    let d = tempfile::tempdir().unwrap();
    let empty = d.path().join("empty.tsv");
    std::fs::write(&empty, "hour_id\tmethod\thr@5\tmrr@5\tsteps\tflags\n").unwrap();
    let o = newsrec(&["report", s(&empty), "-o", s(d.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("no metrics rows"));

    let bad = d.path().join("bad.tsv");
    std::fs::write(&bad, "hour_id\tmethod\thr@5\tmrr@5\tsteps\tflags\n1\tsr\t0.5\t0.1\t4\t-\n2\tsr\t0.5\n").unwrap();
    let o = newsrec(&["report", s(&bad), "-o", s(d.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("line 3"), "{}", text(&o));
}

#[test]
fn environment_overrides_file_and_flags_override_environment() {
    let d = tempfile::tempdir().unwrap();
    let conf = d.path().join("run.conf");
    std::fs::write(&conf, "hours = 3\nseed = 4\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_newsrec"))
        .args(["-c", s(&conf), "-s", "n_articles=40", "-s", "n_sessions=50", "-s", "n_users=50", "--seed", "5", "synth", "-o", s(d.path())])
        .env("NEWSREC_HOURS", "2")
        .env("NEWSREC_SEED", "6")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", text(&o));
    let echo = std::fs::read_to_string(d.path().join("synth.conf")).unwrap();
    assert!(echo.contains("hours = 2\n") && echo.contains("seed = 5\n"), "{echo}");
}
