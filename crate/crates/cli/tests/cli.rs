use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_typedclone");

const METHODS: [(&str, &str); 6] = [
    (
        "sum_a",
        "int sum(int[] xs) { int total = 0; for (int i = 0; i < xs.length; i++) { total += xs[i]; } return total; }",
    ),
    (
        "sum_b",
        "int add(int[] vals) { int acc = 0; for (int j = 0; j < vals.length; j++) { acc += vals[j]; } return acc; }",
    ),
    (
        "sum_c",
        "long sum(long[] xs) {\n  long t = 0L;\n  for (int k = 0; k < xs.length; k++)\n    t += xs[k];\n  return t;\n}",
    ),
    (
        "greet_a",
        "public String greet(String name) { if (name == null) { return \"hello\"; } return \"hello \" + name; }",
    ),
    (
        "greet_b",
        "public String hi(String who) { if (who == null) { return \"hi\"; } return \"hi \" + who; }",
    ),
    (
        "greet_c",
        "public String greet(String n) {\n  if (n == null)\n    return \"hey\";\n  return \"hey \" + n;\n}",
    ),
];

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn typedclone")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json_lines(o: &Output) -> Vec<Value> {
    stdout(o).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn corpus(dir: &Path) {
    let functions = dir.join("functions");
    fs::create_dir(&functions).unwrap();
    for (id, src) in METHODS {
        fs::write(functions.join(format!("{id}.java")), src).unwrap();
    }
    let mut labeled = String::from("id1,id2,label\n");
    let mut unlabeled = String::from("id1,id2\n");
    for (i, (a, _)) in METHODS.iter().enumerate() {
        for (b, _) in &METHODS[i + 1..] {
            let label = u8::from(a[..a.len() - 2] == b[..b.len() - 2]);
            labeled += &format!("{a},{b},{label}\n");
            unlabeled += &format!("{a},{b}\n");
        }
    }
    fs::write(dir.join("pairs.csv"), labeled).unwrap();
    fs::write(dir.join("query.csv"), unlabeled).unwrap();
}

#[test]
fn tokenize_prints_categories() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("gcd.java");
    fs::write(&file, "int gcd(int a, int b) { return b == 0 ? a : gcd(b, a % b); }").unwrap();
    let out = run(&["tokenize", "--in", p(&file)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let lines = json_lines(&out);
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["source_id"], "gcd");
}

#[test]
fn usage_errors_exit_one() {
    let out = run(&["tokenize", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));
    let out = run(&["--temperature", "0", "tokenize", "--in", "x.java"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("temperature"));
}

#[test]
fn version_names_file_formats() {
    let out = run(&["--version"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for magic in ["CCEMB1", "CCENC1", "CCHED1"] {
        assert!(text.contains(magic), "{text}");
    }
}

#[test]
fn missing_model_exits_two_and_names_path() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let missing = dir.path().join("nope.emb");
    let out = run(&[
        "detect",
        "--functions",
        p(&dir.path().join("functions")),
        "--pairs",
        p(&dir.path().join("query.csv")),
        "--embeddings",
        p(&missing),
        "--encoder",
        p(&missing),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope.emb"), "{}", stderr(&out));
}

#[test]
fn baseline_scores_every_pair() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let out = run(&[
        "baseline",
        "--functions",
        p(&dir.path().join("functions")),
        "--pairs",
        p(&dir.path().join("query.csv")),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let lines = json_lines(&out);
    assert_eq!(lines.len(), 15);
    assert!(lines.iter().all(|v| v["detector"] == "overlap"));
}

#[test]
fn train_detect_explain_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    let functions = d.join("functions");
    let (pairs, query) = (d.join("pairs.csv"), d.join("query.csv"));
    let (emb, enc, enc2, head) = (d.join("m.emb"), d.join("m.enc"), d.join("f.enc"), d.join("f.head"));

    let out = run(&["--embed-epochs", "2", "embed-train", "--functions", p(&functions), "--model", p(&emb)]);
    assert!(out.status.success(), "{}", stderr(&out));

    let log = d.join("log.csv");
    let args = [
        "--epochs", "2", "--seed", "3", "pretrain", "--functions", p(&functions), "--pairs", p(&pairs),
        "--embeddings", p(&emb), "--model", p(&enc), "--log", p(&log),
    ];
    let out = run(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(json_lines(&out).len(), 2);
    assert!(fs::read_to_string(&log).unwrap().starts_with("epoch,batch,loss"));
    let first = fs::read(&enc).unwrap();
    assert!(run(&args).status.success());
    assert_eq!(first, fs::read(&enc).unwrap(), "pretraining is not deterministic");

    let out = run(&[
        "--epochs", "1", "finetune", "--functions", p(&functions), "--pairs", p(&pairs),
        "--embeddings", p(&emb), "--encoder", p(&enc), "--layers", "3", "--model", p(&enc2), "--head", p(&head),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let detect = |jobs: &str, head_args: &[&str]| {
        let mut a = vec![
            "--jobs", jobs, "detect", "--functions", p(&functions), "--pairs", p(&query),
            "--embeddings", p(&emb), "--encoder", p(&enc2),
        ];
        a.extend_from_slice(head_args);
        let out = run(&a);
        assert!(out.status.success(), "{}", stderr(&out));
        stdout(&out)
    };
    let serial = detect("1", &[]);
    assert_eq!(serial.lines().count(), 15);
    assert_eq!(serial, detect("8", &[]));
    let classified = detect("1", &["--head", p(&head)]);
    assert!(classified.lines().all(|l| l.contains("\"classifier\"")));
    assert_eq!(classified, detect("8", &["--head", p(&head)]));

    let out = run(&["encode", "--in", p(&functions), "--embeddings", p(&emb), "--encoder", p(&enc)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let vectors = json_lines(&out);
    assert_eq!(vectors.len(), 6);
    assert_eq!(vectors[0]["vector"].as_array().unwrap().len(), 100);

    let out = run(&["explain", "--in", p(&functions.join("sum_a.java")), "--embeddings", p(&emb), "--encoder", p(&enc), "--table"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = &json_lines(&out)[0];
    let total: f64 = report["weights"].as_object().unwrap().values().map(|w| w.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert!(!stderr(&out).is_empty());
}

#[test]
fn wrapper_matches_library() {
    use typedclone::bench::{load_sources, parse_id_pairs};
    use typedclone::detect::{detect_corpus, Detector, DEFAULT_THRESHOLD};

    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let functions = dir.path().join("functions");
    let query = dir.path().join("query.csv");
    let out = run(&["baseline", "--functions", p(&functions), "--pairs", p(&query)]);
    assert!(out.status.success());

    let ds = load_sources(&functions).unwrap();
    let methods: Vec<_> = ds.methods().iter().map(|m| m.categorized.clone()).collect();
    let pairs = parse_id_pairs(&fs::read_to_string(&query).unwrap()).unwrap();
    let verdicts = detect_corpus(&methods, &pairs, &Detector::Overlap { threshold: DEFAULT_THRESHOLD }, 1).unwrap();
    let expected: String = verdicts.iter().map(|v| serde_json::to_string(v).unwrap() + "\n").collect();
    assert_eq!(stdout(&out), expected);
}

#[test]
fn evaluate_is_reproducible() {
    let args = ["--seed", "5", "evaluate", "--synthetic", "--pipeline", "overlap"];
    let first = run(&args);
    assert!(first.status.success(), "{}", stderr(&first));
    let report: Value = serde_json::from_str(stdout(&first).trim()).unwrap();
    assert_eq!(report["folds"].as_array().unwrap().len(), 10);
    assert_eq!(stdout(&first), stdout(&run(&args)));
}
