use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hesitancy_core::synth::{generate, planted_count, SynthConfig, PLANTED_FIGURES, PLANTED_TRENDS};

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn hesitancy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hesitancy"))
        .args(args)
        .env_remove("HESITANCY_LOG")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> Output {
    let o = hesitancy(args);
    assert_eq!(o.status.code(), Some(0), "{args:?} failed: {}", stderr(&o));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small fixture, ingested, embedded and vectorized under `dir`.
fn small_vectors(dir: &Path) -> PathBuf {
    ok(&["fixture", "--out-dir", s(dir), "--posts", "300", "--seed", "5"]);
    let clean = dir.join("before.clean.jsonl");
    ok(&["ingest", "--input", s(&dir.join("before.jsonl")), "--tag", "a", "--out", s(&clean)]);
    let model = dir.join("embed.bin");
    ok(&["embed", "train", "--input", s(&clean), "--out", s(&model), "--seed", "3"]);
    let vectors = dir.join("vectors.jsonl");
    ok(&["embed", "apply", "--model", s(&model), "--input", s(&clean), "--out", s(&vectors)]);
    vectors
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(hesitancy(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(hesitancy(&[]).status.code(), Some(1));
    assert_eq!(hesitancy(&["cluster", "fit", "--k", "3"]).status.code(), Some(1));
    assert_eq!(hesitancy(&["terms", "track", "--a", "x", "--b", "y"]).status.code(), Some(1));
}

#[test]
fn help_and_version_exit_0() {
    let o = ok(&["--help"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("pipeline"));
    ok(&["--version"]);
}

#[test]
fn missing_input_exits_2_naming_the_path() {
    let o = hesitancy(&["ingest", "--input", "/no/such/corpus.jsonl", "--tag", "x", "--out", "/tmp/x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/corpus.jsonl"), "{}", stderr(&o));

    let o = hesitancy(&["pipeline", "run", "--config", "/no/such/paper.toml", "--out", "/tmp/x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/paper.toml"));
}

#[test]
fn cluster_fit_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let vectors = small_vectors(dir.path());
    let (m1, m2, m3) = (dir.path().join("m1.json"), dir.path().join("m2.json"), dir.path().join("m3.json"));
    for m in [&m1, &m2] {
        ok(&["cluster", "fit", "--vectors", s(&vectors), "--k", "7", "--seed", "42", "--out", s(m)]);
    }
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
    ok(&["cluster", "fit", "--vectors", s(&vectors), "--k", "7", "--seed", "42", "--threads", "4", "--out", s(&m3)]);
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m3).unwrap());

    let sample = ok(&["cluster", "sample", "--model", s(&m1), "--cluster", "0", "--n", "5", "--seed", "1"]);
    let again = ok(&["cluster", "sample", "--model", s(&m1), "--cluster", "0", "--n", "5", "--seed", "1"]);
    assert_eq!(sample.stdout, again.stdout);
    let o = hesitancy(&["cluster", "sample", "--model", s(&m1), "--cluster", "7"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn terms_sentiment_and_reports_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["fixture", "--out-dir", s(d), "--posts", "1000"]);
    for side in ["before", "after"] {
        let clean = d.join(format!("{side}.clean.jsonl"));
        ok(&["ingest", "--input", s(&d.join(format!("{side}.jsonl"))), "--tag", side, "--out", s(&clean)]);
        ok(&["terms", "rank", "--input", s(&clean), "--out", s(&d.join(format!("{side}.kw.csv")))]);
        ok(&["sentiment", "figures", "--input", s(&clean), "--out", s(&d.join(format!("{side}.fig.csv")))]);
    }
    let track = d.join("orgs.csv");
    ok(&[
        "terms", "track", "--a", s(&d.join("before.kw.csv")), "--b", s(&d.join("after.kw.csv")),
        "--set", "organizations", "--out", s(&track),
    ]);
    let text = std::fs::read_to_string(&track).unwrap();
    let moderna = text.lines().find(|l| l.starts_with("moderna,")).unwrap();
    let pp: f64 = moderna.split(',').nth(5).unwrap().parse().unwrap();
    assert!((pp - 1.0).abs() < 1e-9, "{moderna}");

    let rank = d.join("rank.csv");
    ok(&[
        "terms", "diff", "--a", s(&d.join("before.kw.csv")), "--b", s(&d.join("after.kw.csv")),
        "--top-n", "10", "--out", s(&rank),
    ]);
    let svg = ok(&["report", "bump", "--deltas", s(&rank), "--top-n", "10"]);
    assert!(String::from_utf8_lossy(&svg.stdout).starts_with("<?xml") || String::from_utf8_lossy(&svg.stdout).starts_with("<svg"));
    let bars = ok(&["report", "bars", "--deltas", s(&track), "--mode", "relative"]);
    assert!(String::from_utf8_lossy(&bars.stdout).contains("relative change"));
    assert_eq!(hesitancy(&["report", "bars", "--deltas", s(&track), "--mode", "log"]).status.code(), Some(1));

    let tables = d.join("tables");
    ok(&[
        "report", "tables", "--figures", s(&d.join("before.fig.csv")), "--figures-b", s(&d.join("after.fig.csv")),
        "--deltas", s(&track), "--out-dir", s(&tables),
    ]);
    let figures = std::fs::read_to_string(tables.join("figures.csv")).unwrap();
    assert!(figures.lines().any(|l| l.starts_with("biden,")), "{figures}");
    assert!(tables.join("deltas.txt").exists());
    assert_eq!(hesitancy(&["report", "tables", "--out-dir", s(&tables)]).status.code(), Some(1));

    let extremes = ok(&[
        "sentiment", "extremes", "--input", s(&d.join("after.clean.jsonl")), "--figure", "trump",
        "--polarity", "negative", "--n", "3",
    ]);
    let picked: serde_json::Value = serde_json::from_slice(&extremes.stdout).unwrap();
    let picked = picked.as_array().unwrap();
    assert_eq!(picked.len(), 3);
    assert!(picked.iter().all(|p| p["compound"].as_f64().unwrap() < -0.9));

    let stats = ok(&[
        "stats", "--input", s(&d.join("before.clean.jsonl")), "--compare", s(&d.join("after.clean.jsonl")),
    ]);
    assert!(String::from_utf8_lossy(&stats.stdout).contains("1,000 / 1,000"));
}

#[test]
fn committed_fixture_matches_generator() {
    let fx = generate(&SynthConfig::default());
    let root = workspace().join("fixtures");
    assert_eq!(std::fs::read_to_string(root.join("before.jsonl")).unwrap(), fx.before.to_jsonl());
    assert_eq!(std::fs::read_to_string(root.join("after.jsonl")).unwrap(), fx.after.to_jsonl());
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

/// End to end over the bundled fixture; the expected values are the planted
/// ones, not a snapshot of a previous run.
#[test]
fn pipeline_recovers_planted_signals() {
    let out = tempfile::tempdir().unwrap();
    let config = workspace().join("paper.toml");
    ok(&["pipeline", "run", "--config", s(&config), "--out", s(out.path())]);
    let o = out.path();

    let n = SynthConfig::default().posts_per_corpus;
    let stats = std::fs::read_to_string(o.join("tables/stats.txt")).unwrap();
    assert!(stats.lines().last().unwrap().contains("5,000 / 5,000"), "{stats}");

    let deltas = csv_rows(&o.join("terms/shared_keywords.csv"));
    for trend in PLANTED_TRENDS {
        let row = deltas.iter().find(|r| r[0] == trend.term).unwrap();
        let pp: f64 = row[5].parse().unwrap();
        assert!((pp - 100.0 * (trend.share_after - trend.share_before)).abs() < 0.05, "{row:?}");
    }

    let figures = csv_rows(&o.join("sentiment/figures_spring2021.csv"));
    for f in PLANTED_FIGURES {
        let row = figures.iter().find(|r| r[0] == f.figure).unwrap();
        let total: usize = row.last().unwrap().parse().unwrap();
        let planted: usize = f.after.iter().map(|&share| planted_count(share, n)).sum();
        assert_eq!(total, planted, "{row:?}");
    }

    for tag in ["fall2020", "spring2021"] {
        let model: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(o.join(format!("cluster/{tag}.json"))).unwrap()).unwrap();
        assert_eq!(model["assignments"].as_object().unwrap().len(), n);
    }
    let bars = std::fs::read_to_string(o.join("figures/organizations.svg")).unwrap();
    assert!(bars.contains("percentage points"));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(o.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["inputs"][0]["path"], "fixtures/before.jsonl");
    assert!(manifest["outputs"].as_object().unwrap().contains_key("figures/keyword_bump.svg"));
}

#[test]
fn env_overrides_reach_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["fixture", "--out-dir", s(d), "--posts", "200"]);
    std::fs::write(
        d.join("run.toml"),
        "[before]\npath = \"before.jsonl\"\ntag = \"a\"\nk = 3\n[after]\npath = \"after.jsonl\"\ntag = \"b\"\nk = 3\n\
         [embed]\nbucket_count = 4096\nepochs = 1\n",
    )
    .unwrap();
    let run = |out: &str, seed: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_hesitancy"));
        cmd.args(["pipeline", "run", "--config", s(&d.join("run.toml")), "--out", s(&d.join(out))]);
        if let Some(seed) = seed {
            cmd.env("HESITANCY_RUN_SEED", seed);
        }
        let o = cmd.output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let m: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(d.join(out).join("manifest.json")).unwrap()).unwrap();
        m
    };
    let plain = run("r1", None);
    let seeded = run("r2", Some("77"));
    assert_eq!(plain["seed"], 0);
    assert_eq!(seeded["seed"], 77);
    assert_ne!(plain["config_sha256"], seeded["config_sha256"]);

    let o = Command::new(env!("CARGO_BIN_EXE_hesitancy"))
        .args(["pipeline", "run", "--config", s(&d.join("run.toml")), "--out", s(&d.join("r3"))])
        .env("HESITANCY_EMBED_DIMS", "3")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
