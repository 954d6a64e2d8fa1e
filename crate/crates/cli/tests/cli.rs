use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_discner");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["count", "--k", "0"]).status.code(), Some(1));
    assert_eq!(
        run(&["count", "--linear-exact", "9"]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&["eval", "--gold", "/nonexistent", "--pred", "/nonexistent"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        "{\"tokens\":[\"a\"],\"mentions\":[{\"label\":\"D\",\"spans\":[[0,3]]}]}\n",
    )
    .unwrap();
    let o = run(&[
        "encode",
        "--model",
        "shared",
        "--input",
        bad.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn synth_honors_seed() {
    let a = run(&["synth", "--seed", "4", "--sentences", "20"]);
    let b = run(&["synth", "--seed", "4", "--sentences", "20"]);
    let c = run(&["synth", "--seed", "5", "--sentences", "20"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    assert_eq!(stdout(&a).lines().count(), 20);
}

#[test]
fn encode_decode_round_trip_is_complete() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    let o = run(&[
        "synth",
        "--seed",
        "1",
        "--sentences",
        "40",
        "--out",
        corpus.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    for model in ["linear", "shared", "split"] {
        let enc = dir.path().join(format!("{model}.enc"));
        let o = run(&[
            "encode",
            "--model",
            model,
            "--input",
            corpus.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::write(&enc, &o.stdout).unwrap();
        let dec = dir.path().join(format!("{model}.jsonl"));
        let o = run(&[
            "decode",
            "--model",
            model,
            "--heuristic",
            "all",
            "--input",
            enc.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::write(&dec, &o.stdout).unwrap();
        let o = run(&[
            "eval",
            "--gold",
            corpus.to_str().unwrap(),
            "--pred",
            dec.to_str().unwrap(),
        ]);
        let prf: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(prf["recall"].as_f64(), Some(1.0), "{model}");
    }
}

#[test]
fn count_single_schema_and_linear_bound() {
    let o = run(&["count", "--schema", "linear", "--n-max", "4"]);
    let lines: Vec<String> = stdout(&o).lines().map(str::to_owned).collect();
    assert_eq!(lines, ["n\tM_Li", "1\t2", "2\t8", "3\t46", "4\t<=4096"]);
}

#[test]
fn spectrum_reports_grid_rate() {
    let o = run(&["spectrum", "--schema", "grid"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["growth_rate"].as_f64().unwrap() - (3.0 + 5f64.sqrt())).abs() < 1e-6);
}

#[test]
fn bench_first_row_is_baseline() {
    let o = run(&[
        "bench",
        "--types",
        "1,2",
        "--sentences",
        "4",
        "--passes",
        "1",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split('\t').collect())
        .collect();
    assert_eq!(rows.len(), 6);
    for r in rows.iter().filter(|r| r[1] == "1") {
        assert_eq!(r[3], "1.000");
    }
}
