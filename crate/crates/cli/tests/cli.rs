use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_synthcurate"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path) -> (String, String) {
    let syn = dir.join("syn.sycu");
    let test = dir.join("test.sycu");
    let o = run(&[
        "simulate", "--preset", "basic-like", "--n-per-class", "30", "--corrupt-fraction", "0.2",
        "--seed", "4", "--out", p(&syn),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&[
        "simulate", "--preset", "real-like", "--n-per-class", "30", "--split", "real-test",
        "--seed", "4", "--out", p(&test),
    ]);
    assert_eq!(code(&o), 0);
    (p(&syn).to_string(), p(&test).to_string())
}

#[test]
fn score_writes_one_row_per_synthetic_sample() {
    let dir = tempfile::tempdir().unwrap();
    let (syn, _) = simulate(dir.path());
    let out = dir.path().join("u.csv");
    let o = run(&["score", "--dataset", &syn, "--w", "0.3", "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    let prov = lines.next().unwrap();
    assert!(prov.starts_with("# ") && prov.contains("w=0.3") && prov.contains("command=score"));
    assert_eq!(lines.next().unwrap(), "id,entropy_raw,entropy_norm,epsilon");
    assert_eq!(lines.count(), 300);
    assert!(std::fs::metadata(dir.path().join("syn.sycu.corrupted.json")).is_ok());
}

#[test]
fn drop_fraction_out_of_range_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let (syn, _) = simulate(dir.path());
    let report = dir.path().join("u.csv");
    assert_eq!(code(&run(&["score", "--dataset", &syn, "--out", p(&report)])), 0);
    let o = run(&[
        "curate", "--dataset", &syn, "--report", p(&report), "--strategy", "UF",
        "--drop-fraction", "1.5", "--out", p(&dir.path().join("plan.csv")),
    ]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("(0,1)"), "{err}");
    assert!(o.stdout.is_empty());
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&run(&["no-such-command"])), 1);
    assert_eq!(code(&run(&["score", "--no-such-flag"])), 1);
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn missing_input_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "score", "--dataset", p(&dir.path().join("absent.sycu")), "--out",
        p(&dir.path().join("u.csv")),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn full_pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (syn, test) = simulate(dir.path());
    let mut outputs = Vec::new();
    for _ in 0..2 {
        // same paths both rounds: they are part of the echoed config
        let f = |name: &str| dir.path().join(name);
        let (u, plan, probe, eval) = (f("u.csv"), f("plan.csv"), f("probe.bin"), f("eval.json"));
        assert_eq!(code(&run(&["score", "--dataset", &syn, "--logit-scale", "10", "--out", p(&u)])), 0);
        assert_eq!(
            code(&run(&[
                "curate", "--dataset", &syn, "--report", p(&u), "--strategy", "UL", "--out", p(&plan),
            ])),
            0
        );
        assert_eq!(
            code(&run(&[
                "train", "--dataset", &syn, "--plan", p(&plan), "--epochs", "5", "--seed", "2",
                "--out", p(&probe),
            ])),
            0
        );
        let o = run(&["eval", "--probe", p(&probe), "--dataset", &test, "--out", p(&eval)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(
            [&u, &plan, &probe]
                .iter()
                .map(|f| std::fs::read(f).unwrap())
                .collect::<Vec<_>>(),
        );
        let json: serde_json::Value =
            serde_json::from_slice(&std::fs::read(&eval).unwrap()).unwrap();
        assert_eq!(json["n"], 300);
        assert_eq!(json["config"]["command"], "eval");
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn eval_without_out_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let (syn, test) = simulate(dir.path());
    let probe = dir.path().join("probe.bin");
    assert_eq!(
        code(&run(&["train", "--dataset", &syn, "--epochs", "2", "--out", p(&probe)])),
        0
    );
    let o = run(&["eval", "--probe", p(&probe), "--dataset", &test]);
    assert_eq!(code(&o), 0);
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(json["top1"].as_f64().unwrap() >= 0.0);
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (syn, _) = simulate(dir.path());
    let cfg = dir.path().join("run.ini");
    std::fs::write(&cfg, "# experiment log\n[uncertainty]\nw = 0.2\nlogit_scale = 50\n").unwrap();
    let out = dir.path().join("u.csv");
    let first_line = |args: &[&str]| {
        assert_eq!(code(&run(args)), 0);
        std::fs::read_to_string(&out).unwrap().lines().next().unwrap().to_string()
    };
    let from_file = first_line(&["score", "--config", p(&cfg), "--dataset", &syn, "--out", p(&out)]);
    assert!(from_file.contains("w=0.2") && from_file.contains("logit_scale=50"), "{from_file}");
    let flagged = first_line(&[
        "score", "--config", p(&cfg), "--dataset", &syn, "--w", "0.25", "--out", p(&out),
    ]);
    assert!(flagged.contains("w=0.25") && flagged.contains("logit_scale=50"), "{flagged}");
    let defaults = first_line(&["score", "--dataset", &syn, "--out", p(&out)]);
    assert!(defaults.contains("w=0.3") && defaults.contains("logit_scale=100"), "{defaults}");

    std::fs::write(&cfg, "bogus_key = 1\n").unwrap();
    assert_eq!(code(&run(&["score", "--config", p(&cfg), "--dataset", &syn, "--out", p(&out)])), 1);
}

#[test]
fn gen_prompts_from_bank_file() {
    let dir = tempfile::tempdir().unwrap();
    let bank = dir.path().join("bank.json");
    let mut classes = serde_json::Map::new();
    for c in ["brush hair", "cartwheel"] {
        classes.insert(
            c.into(),
            serde_json::json!({
                "env": (0..4).map(|i| format!("{c} scene {i}")).collect::<Vec<_>>(),
                "char": (0..16).map(|i| format!("{c} person {i}")).collect::<Vec<_>>(),
            }),
        );
    }
    std::fs::write(&bank, serde_json::Value::Object(classes).to_string()).unwrap();
    let m1 = dir.path().join("a.jsonl");
    let m2 = dir.path().join("b.jsonl");
    for m in [&m1, &m2] {
        let o = run(&["gen-prompts", "--bank", p(&bank), "--seed", "9", "--out", p(m)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(&m1).unwrap();
    assert_eq!(a, std::fs::read(&m2).unwrap());
    assert_eq!(a.iter().filter(|&&b| b == b'\n').count(), 256);

    let o = run(&[
        "gen-prompts", "--bank", p(&bank), "--strategy", "Basic", "--per-class-count", "0",
        "--out", p(&m1),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn diagnose_and_project() {
    let dir = tempfile::tempdir().unwrap();
    let (syn, test) = simulate(dir.path());
    let gap = dir.path().join("gap.json");
    let o = run(&[
        "diagnose", "--dataset", &format!("basic={syn}"), &format!("real={test}"), "--kernels",
        "lin,rbf:2.0", "--out", p(&gap),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&gap).unwrap()).unwrap();
    assert_eq!(json["names"], serde_json::json!(["basic", "real"]));
    assert_eq!(json["kernels"].as_array().unwrap().len(), 2);

    let csv = dir.path().join("proj.csv");
    let svg = dir.path().join("proj.svg");
    let o = run(&["project", "--dataset", &test, "--out", p(&csv), "--svg", p(&svg)]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "id,label,x,y");
    assert_eq!(text.lines().count(), 302);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn experiment_table_has_fixed_columns() {
    let o = run(&["experiment", "--preset", "table7", "--seeds", "2", "--epochs", "3"]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8(o.stdout).unwrap();
    let cols: Vec<&str> = stdout.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(cols, ["strategy", "NONE", "LS", "UW", "UF", "UL"]);
    assert!(stdout.lines().nth(1).unwrap().contains('±'));
}
