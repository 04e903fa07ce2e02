use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn polysim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polysim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn run_toml() -> String {
    fixtures().join("run.toml").display().to_string()
}

fn score_into(dir: &Path) -> Output {
    polysim(&["--config", &run_toml(), "--out", dir.to_str().unwrap(), "score"])
}

fn json_score(out: &Output) -> f64 {
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).expect("json line");
    v["score"].as_f64().expect("score field")
}

#[test]
fn score_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = score_into(dir);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["subtask1.tsv", "subtask2.tsv", "channels.jsonl", "sheets.jsonl", "manifest.txt"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(manifest.contains("scored=5\n"), "{manifest}");
    assert!(manifest.contains("command=score\n"));

    let golden = fs::read_to_string(fixtures().join("golden_subtask1.tsv")).unwrap();
    let got = fs::read_to_string(a.join("subtask1.tsv")).unwrap();
    for (g, w) in got.lines().zip(golden.lines()).skip(1) {
        let (g, w) = (g.split_once('\t').unwrap(), w.split_once('\t').unwrap());
        assert_eq!(g.0, w.0);
        let diff = g.1.parse::<f64>().unwrap() - w.1.parse::<f64>().unwrap();
        assert!(diff.abs() < 1e-12, "{g:?} vs {w:?}");
    }
}

#[test]
fn own_predictions_evaluate_against_fixture_gold() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&score_into(tmp.path())), 0);
    let gold = fixtures().join("dataset.jsonl");
    for (subtask, file) in [("1", "subtask1.tsv"), ("2", "subtask2.tsv")] {
        let pred = tmp.path().join(file);
        let out = polysim(&[
            "evaluate",
            "--subtask",
            subtask,
            "--pred",
            pred.to_str().unwrap(),
            "--gold",
            gold.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let table = String::from_utf8_lossy(&out.stdout).to_string();
        let metric = if subtask == "1" { "uncentered_pearson" } else { "harmonic_mean" };
        assert!(table.lines().any(|l| l.starts_with(metric)), "{table}");
        assert!(table.lines().any(|l| l.split_whitespace().collect::<Vec<_>>() == ["n", "5"]), "{table}");
    }
}

#[test]
fn perfect_predictions_score_one() {
    let tmp = tempfile::tempdir().unwrap();
    let gold_path = fixtures().join("dataset.jsonl");
    let records: Vec<serde_json::Value> = fs::read_to_string(&gold_path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let mut change = String::from("id\tchange\n");
    let mut sims = String::from("id\tsim_context1\tsim_context2\n");
    for r in &records {
        let (id, s1, s2) = (r["id"].as_str().unwrap(), r["gold_sim1"].as_f64().unwrap(), r["gold_sim2"].as_f64().unwrap());
        change.push_str(&format!("{id}\t{}\n", s2 - s1));
        sims.push_str(&format!("{id}\t{s1}\t{s2}\n"));
    }
    for (subtask, content) in [("1", change), ("2", sims)] {
        let pred = tmp.path().join(format!("p{subtask}.tsv"));
        fs::write(&pred, content).unwrap();
        let out = polysim(&[
            "evaluate",
            "--subtask",
            subtask,
            "--pred",
            pred.to_str().unwrap(),
            "--gold",
            gold_path.to_str().unwrap(),
            "--json",
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert!((json_score(&out) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn unprimed_fixture_cache_is_an_external_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run.toml");
    fs::write(
        &run,
        format!(
            "alpha = 0.5\nbeta = 0.5\nlanguages = [\"de\"]\n\n[backend]\nkind = \"synthetic-hash\"\ndim = 8\nseed = 3\n\n[paths]\ndataset = {:?}\ncache = \"empty-cache.jsonl\"\n",
            fixtures().join("dataset.jsonl").display().to_string()
        ),
    )
    .unwrap();
    let out = polysim(&["--config", run.to_str().unwrap(), "--out", tmp.path().to_str().unwrap(), "translate"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!tmp.path().join("empty-cache.jsonl").exists(), "fixture engine never writes the cache");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&polysim(&[])), 1);
    assert_eq!(code(&polysim(&["no-such-command"])), 1);
    assert_eq!(code(&polysim(&["score"])), 1, "score needs a run file");
    assert_eq!(code(&polysim(&["--config", &run_toml(), "--alpha", "-1", "score"])), 1);
    assert_eq!(code(&polysim(&["--config", &run_toml(), "--alpha", "0", "--beta", "0", "score"])), 1);
    assert_eq!(code(&polysim(&["evaluate", "--subtask", "3", "--pred", "x"])), 1);
    assert_eq!(code(&polysim(&["--help"])), 0);
}

#[test]
fn unreadable_data_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let pred = tmp.path().join("p.tsv");
    fs::write(&pred, "id\tchange\n1\t0.5\n").unwrap();
    let missing = tmp.path().join("nope.jsonl");
    let out = polysim(&[
        "evaluate",
        "--subtask",
        "1",
        "--pred",
        pred.to_str().unwrap(),
        "--gold",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    fs::write(&pred, "id\tchange\n1\tnot-a-number\n").unwrap();
    let gold = fixtures().join("dataset.jsonl");
    let out = polysim(&["evaluate", "--subtask", "1", "--pred", pred.to_str().unwrap(), "--gold", gold.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn experiment_commands_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().to_str().unwrap();
    let base = ["--config", &run_toml(), "--out", out_dir];
    let run = |extra: &[&str]| {
        let args: Vec<&str> = base.iter().copied().chain(extra.iter().copied()).collect();
        let out = polysim(&args);
        assert_eq!(code(&out), 0, "{extra:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    run(&["sweep", "--grid", "1:0,0.5:0.5,0:1"]);
    let sweep = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 6, "{sweep}");
    run(&["greedy-langs", "--candidates", "it,pt"]);
    assert!(tmp.path().join("greedy.csv").exists());
    run(&["compare-engines", "--engine", "fixture"]);
    assert!(tmp.path().join("engines.csv").exists());
    run(&["official", "none"]);
    assert!(tmp.path().join("official-none/report.jsonl").exists());
    // rows needing untranslated languages fail as a missing external input
    let args: Vec<&str> = base.iter().copied().chain(["official", "all"]).collect();
    assert_eq!(code(&polysim(&args)), 3);
}

#[test]
fn ingest_and_embed_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let tsv = tmp.path().join("task.tsv");
    fs::write(
        &tsv,
        "word1\tword2\tcontext1\tcontext2\nCell\troom\tHer <strong>cell</strong> was near her <strong>room</strong>\tA <strong>room</strong> full of <strong>cells</strong>\n",
    )
    .unwrap();
    let out_dir = tmp.path().to_str().unwrap();
    let out = polysim(&["--out", out_dir, "ingest", tsv.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let canonical = fs::read_to_string(tmp.path().join("dataset.jsonl")).unwrap();
    assert_eq!(canonical.lines().count(), 1, "{canonical}");

    let vec = fixtures().join("vectors/en.vec");
    let out = polysim(&["--out", out_dir, "embed", "--lang", "en", "--input", vec.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("vectors/en.bin").exists());
}
