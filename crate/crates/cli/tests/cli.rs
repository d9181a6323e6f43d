use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn covsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covsel")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = covsel(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn gen(dir: &Path) -> (String, String) {
    let feats = dir.join("train.emb").display().to_string();
    let labels = dir.join("train.lbl").display().to_string();
    ok(&[
        "gen", "--means", "0,0;4,0;0,4", "--stddevs", "0.6", "--n", "240", "--seed", "3", "--out", &feats,
        "--labels-out", &labels,
    ]);
    (feats, labels)
}

#[test]
fn select_writes_budget_distinct_indices() {
    let dir = tempfile::tempdir().unwrap();
    let (feats, _) = gen(dir.path());
    let labeled = dir.path().join("labeled.txt");
    fs::write(&labeled, "0\n5\n").unwrap();
    for method in ["random", "maxherding", "kernelherding", "probcover", "coreset", "typiclust", "kmedoids"] {
        let out = dir.path().join(format!("{method}.txt"));
        ok(&[
            "select", "--features", &feats, "--method", method, "--budget", "6", "--labeled",
            labeled.to_str().unwrap(), "--out", out.to_str().unwrap(),
        ]);
        let picks: Vec<usize> = fs::read_to_string(&out).unwrap().lines().map(|l| l.parse().unwrap()).collect();
        let mut unique = picks.clone();
        unique.sort_unstable();
        unique.dedup();
        assert_eq!(unique.len(), 6, "{method}");
        assert!(!picks.contains(&0) && !picks.contains(&5));
        let config = fs::read_to_string(dir.path().join(format!("{method}.txt.config"))).unwrap();
        assert!(config.contains(&format!("method={method}")));
    }
}

#[test]
fn uncertainty_select_reads_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let feats = dir.path().join("f.csv");
    fs::write(&feats, "0,0\n1,0\n2,0\n").unwrap();
    let probs = dir.path().join("p.csv");
    fs::write(&probs, "0.9,0.1\n0.5,0.5\n0.7,0.3\n").unwrap();
    let f = feats.to_str().unwrap();
    let p = probs.to_str().unwrap();
    for method in ["uncertainty", "entropy", "margin"] {
        assert_eq!(ok(&["select", "--features", f, "--method", method, "--budget", "2", "--probs", p]), "1\n2\n");
    }
    let out = covsel(&["select", "--features", f, "--method", "margin", "--budget", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[ConfigError]"));
}

#[test]
fn errors_name_their_class() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.emb");
    fs::write(&bad, b"NOPE0000000000000000000000000000").unwrap();
    let out = covsel(&["select", "--features", bad.to_str().unwrap(), "--budget", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[FormatError]"));

    let (feats, _) = gen(dir.path());
    let out = covsel(&["select", "--features", &feats, "--budget", "241"]);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[ConfigError]"));
}

#[test]
fn loop_is_reproducible_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (feats, labels) = gen(dir.path());
    let run = |jobs: &str, name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "loop", "--train-features", &feats, "--train-labels", &labels, "--method", "maxherding", "--budget",
            "4", "--iters", "3", "--seeds", "1,2,3", "--jobs", jobs, "--no-timing", "--out",
            out.to_str().unwrap(),
        ]);
        fs::read_to_string(out).unwrap()
    };
    let serial = run("1", "a.jsonl");
    let parallel = run("3", "b.jsonl");
    assert_eq!(serial, parallel);
    assert_eq!(serial.lines().count(), 9);
    let first = serial.lines().next().unwrap();
    for key in ["run_id", "iteration", "labeled_size", "accuracy", "coverage", "wall_ms", "method", "seed"] {
        assert!(first.contains(&format!("\"{key}\"")));
    }
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (feats, _) = gen(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("# comment\nfeatures={feats}\nmethod=coreset\nbudget=7\nseed=2\n")).unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(ok(&["select", "--config", c]).lines().count(), 7);
    assert_eq!(ok(&["select", "--config", c, "--budget", "3"]).lines().count(), 3);

    // The resolved config replays to the same selection.
    let out = dir.path().join("sel.txt");
    ok(&["select", "--config", c, "--out", out.to_str().unwrap()]);
    let replay = dir.path().join("sel.txt.config");
    let again = ok(&["select", "--config", replay.to_str().unwrap(), "--out", dir.path().join("x.txt").to_str().unwrap()]);
    assert!(again.is_empty());
    assert_eq!(fs::read_to_string(&out).unwrap(), fs::read_to_string(dir.path().join("x.txt")).unwrap());

    fs::write(&cfg, "budgett=3\n").unwrap();
    let out = covsel(&["select", "--config", c, "--features", &feats, "--budget", "1"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key `budgett`"));
}

#[test]
fn purity_reports_sweep_and_choice() {
    let dir = tempfile::tempdir().unwrap();
    let (feats, _) = gen(dir.path());
    let text = ok(&["purity", "--features", &feats, "--classes", "3", "--no-normalize", "--grid-steps", "5"]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "value,purity_rate");
    assert_eq!(lines.len(), 7);
    assert!(lines[6].starts_with("chosen,"));
}

#[test]
fn bench_and_sweep_emit_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (feats, labels) = gen(dir.path());
    let bench = ok(&["bench", "--features", &feats, "--methods", "random,coreset", "--budget", "3", "--iters", "2"]);
    assert_eq!(bench.lines().next(), Some("method,iteration,ms_per_selection"));
    assert_eq!(bench.lines().count(), 5);

    let mut headers = Vec::new();
    for method in ["probcover", "maxherding"] {
        let csv = ok(&[
            "sweep", "--train-features", &feats, "--train-labels", &labels, "--method", method, "--budget", "3",
            "--iters", "2", "--grid", "0.5,1.0", "--classes", "3",
        ]);
        assert_eq!(csv.lines().count(), 1 + 2 * 2);
        headers.push(csv.lines().next().unwrap().to_string());
    }
    assert_eq!(headers[0], headers[1]);
}

#[test]
fn gen_longtail_subsamples_classes() {
    let dir = tempfile::tempdir().unwrap();
    let (feats, labels) = gen(dir.path());
    let out = dir.path().join("lt.csv");
    let lout = dir.path().join("lt.lbl");
    ok(&[
        "gen", "--features", &feats, "--labels", &labels, "--rho", "0.1", "--out", out.to_str().unwrap(),
        "--labels-out", lout.to_str().unwrap(),
    ]);
    let rows = fs::read_to_string(&out).unwrap().lines().count();
    assert!(rows < 240 && rows > 0);
}
