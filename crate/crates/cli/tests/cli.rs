use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn symreg(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symreg"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn line_csv(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("line.csv");
    fs::write(&p, "x1,y\n0,1\n1,3\n2,5\n3,7\n4,9\n").unwrap();
    p
}

#[test]
fn gen_is_deterministic_and_snapshots_config() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(symreg(&a, &["gen", "--pairs", "240"]).status.success());
    // Replaying the snapshot reproduces the dataset byte for byte.
    let snap = a.join("config.txt");
    let o = symreg(&b, &["--config", snap.to_str().unwrap(), "gen"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["dataset.jsonl", "split.json", "config.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    assert!(symreg(&c, &["--seed", "8", "gen", "--pairs", "240"]).status.success());
    assert_ne!(fs::read(a.join("dataset.jsonl")).unwrap(), fs::read(c.join("dataset.jsonl")).unwrap());
}

#[test]
fn flags_override_set_which_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "# comment\ndata.pairs = 480\nseed = 3\n").unwrap();
    let out = dir.path().join("o");
    let o = symreg(
        &out,
        &["--config", cfg.to_str().unwrap(), "--set", "data.pairs=360", "gen", "--pairs", "240"],
    );
    assert!(o.status.success());
    let snap = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(snap.contains("data.pairs = 240\n"), "{snap}");
    assert!(snap.contains("seed = 3\n"), "{snap}");
    let o = symreg(&out, &["--config", cfg.to_str().unwrap(), "--set", "data.pairs=360", "gen"]);
    assert!(o.status.success());
    assert!(fs::read_to_string(out.join("config.txt")).unwrap().contains("data.pairs = 360\n"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(symreg(out, &["gen", "--pairs", "10"]).status.code(), Some(1));
    assert_eq!(symreg(out, &["--set", "no.such.key=1", "gen"]).status.code(), Some(1));
    assert_eq!(symreg(out, &["--set", "data.pairs=many", "gen"]).status.code(), Some(1));
    assert_eq!(symreg(out, &["frobnicate"]).status.code(), Some(1));
    let table = line_csv(out);
    let t = table.to_str().unwrap();
    assert_eq!(symreg(out, &["fit", "--equation", "( w1 *", "--table", t]).status.code(), Some(1));
    assert_eq!(symreg(out, &["fit", "--equation", "( w1 * x2 )", "--table", t]).status.code(), Some(1));
    assert_eq!(symreg(out, &["predict", "--table", t]).status.code(), Some(1));
    assert_eq!(symreg(out, &["--help"]).status.code(), Some(0));
}

#[test]
fn fit_reports_parameters_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let table = line_csv(dir.path());
    let o = symreg(
        dir.path(),
        &["fit", "--equation", "( ( w1 * x1 ) + w2 )", "--table", table.to_str().unwrap()],
    );
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("equation: ( ( w1 * x1 ) + w2 )"), "{text}");
    assert!(text.contains("converged = true"), "{text}");
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("fit.json")).unwrap()).unwrap();
    assert!((json["params"]["w1"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert!((json["params"]["w2"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!(json["sse"].as_f64().unwrap() < 1e-12);
}

#[test]
fn non_finite_fit_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("neg.csv");
    fs::write(&p, "x1,y\n-1,1\n-2,2\n-3,3\n").unwrap();
    let o = symreg(
        dir.path(),
        &["fit", "--equation", "log ( ( x1 - ( w1 * w1 ) ) )", "--table", p.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
}

#[test]
fn train_predict_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = symreg(&out, &["--set", "data.pairs=240", "train", "--epochs", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["dataset.jsonl", "final.ckpt.json", "best.ckpt.json", "metrics.csv", "metrics.json", "config.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(csv.lines().count() > 1);

    // One epoch of training cannot produce equations, so predict reports the tokens.
    let table = line_csv(dir.path());
    let o = symreg(&out, &["predict", "--table", table.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("tokens:"));

    let o = symreg(&out, &["eval"]);
    assert!(o.status.success());
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("eval.json")).unwrap()).unwrap();
    assert_eq!(json["stimuli"].as_u64(), Some(240));
    assert!(json["loss"].as_f64().unwrap().is_finite());

    // A dataset encoded with a different layout is refused.
    let other = dir.path().join("other");
    assert!(symreg(&other, &["--set", "data.max_param=7", "gen", "--pairs", "240"]).status.success());
    let ds = other.join("dataset.jsonl");
    assert_eq!(symreg(&out, &["eval", "--dataset", ds.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn casestudy_runs_end_to_end_on_a_tiny_budget() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cs");
    let o = symreg(
        &out,
        &[
            "--set", "casestudy.pairs=100",
            "--set", "casestudy.epochs=1",
            "--set", "casestudy.tables=2",
            "casestudy",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("parse rate"));
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("casestudy.json")).unwrap()).unwrap();
    assert_eq!(json["tables"].as_array().unwrap().len(), 2);

    let csv = dir.path().join("g.csv");
    fs::write(&csv, "choice,p1,V1,p2,V2\n1,0.9,10,0.1,5\n0,0.2,1,0.8,6\n1,0.5,8,0.5,2\n").unwrap();
    let ckpt = out.join("casestudy.ckpt.json");
    let o = symreg(
        &out,
        &["casestudy", "--checkpoint", ckpt.to_str().unwrap(), "--csv", csv.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
