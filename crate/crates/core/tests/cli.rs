use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use parperc::synth::{synthetic_treebank, TreebankSpec};
use parperc::{parse_conll, write_conll};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_parperc"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn run_stdin(args: &[&str], input: &str) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn treebank(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let bank = synthetic_treebank(&TreebankSpec {
        n_sentences: n,
        max_len: 20,
        seed,
        ..TreebankSpec::default()
    });
    let p = dir.join(format!("bank{seed}.conll"));
    std::fs::write(&p, write_conll(&bank)).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_parse_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let train = treebank(dir.path(), 150, 1);
    let test = treebank(dir.path(), 40, 2);
    let model = dir.path().join("m.bin");
    let o = run(&[
        "train", "--order", "1", "--mode", "lockfree", "--threads", "10", "--epochs", "3", "--hash-bits", "18",
        "--model", s(&model), s(&train),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(model.exists());
    let trace = std::fs::read_to_string(dir.path().join("m.bin.trace.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = trace.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(lines.len() >= 4);
    assert!(lines.last().unwrap()["peak_rss_bytes"].as_u64().unwrap() > 0);

    let o = run(&["parse", "--model", s(&model), s(&test)]);
    assert!(o.status.success());
    let parsed = parse_conll(&stdout(&o)).unwrap();
    assert_eq!(parsed.len(), 40);
    assert!(parsed.iter().all(|(_, t)| t.is_projective()));
    let pred = dir.path().join("pred.conll");
    std::fs::write(&pred, stdout(&o)).unwrap();

    let o = run(&["eval", s(&test), s(&test)]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("UAS 100.00"), "{}", stdout(&o));

    let o = run(&["eval", s(&test), s(&pred)]);
    assert!(o.status.success());
    let uas: f64 = stdout(&o).split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(uas > 50.0, "{uas}");

    // stdin for both parse and eval
    let text = std::fs::read_to_string(&test).unwrap();
    let o = run_stdin(&["parse", "--model", s(&model), "-"], &text);
    assert!(o.status.success());
    let o = run_stdin(&["eval", s(&test), "-"], &stdout(&o));
    assert!(o.status.success());
    assert!(stdout(&o).starts_with(&format!("UAS {uas:.2}")));
}

#[test]
fn model_files_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let train = treebank(dir.path(), 80, 3);
    for mode in ["sequential", "full-delay"] {
        let threads = if mode == "sequential" { "1" } else { "4" };
        let mut bytes = Vec::new();
        for run_id in 0..2 {
            let model = dir.path().join(format!("{mode}{run_id}.bin"));
            let o = run(&[
                "train", "--order", "2", "--mode", mode, "--threads", threads, "--epochs", "2", "--hash-bits",
                "16", "--seed", "9", "--max-steps", "300", "--model", s(&model), s(&train),
            ]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            bytes.push(std::fs::read(&model).unwrap());
        }
        assert_eq!(bytes[0], bytes[1], "{mode}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let train = treebank(dir.path(), 10, 4);
    let model = dir.path().join("m.bin");
    assert_eq!(run(&["train", "--bogus", s(&train)]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        run(&["train", "--hash-bits", "40", "--model", s(&model), s(&train)]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&["train", "--mode", "sequential", "--threads", "3", "--model", s(&model), s(&train)]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&["train", "--model", s(&model), s(&dir.path().join("missing.conll"))]).status.code(),
        Some(2)
    );
    let broken = dir.path().join("broken.conll");
    std::fs::write(&broken, "1\tA\t_\t_\tN\t_\t7\t_\t_\t_\n").unwrap();
    let o = run(&["train", "--model", s(&model), s(&broken)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
    assert_eq!(run(&["parse", "--model", s(&broken), s(&train)]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn convlab_reports_worst_case_verdict() {
    let o = run(&["convlab", "--k", "4", "--delta", "0.5", "--sentences", "200", "--seed", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("worst_case      holds"), "{text}");

    let o = run(&["convlab", "--k", "4", "--delta", "0.5", "--sentences", "50", "--seed", "7", "--json"]);
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["full_delay"]["worst_case_holds"], serde_json::Value::Bool(true));
    let worst = v["lockfree"]["bound_worst"].as_f64().unwrap();
    // text round trip through JSON is not bit-exact
    let optimal = v["lockfree"]["bound_optimal"].as_f64().unwrap();
    assert!((optimal - worst / 4.0).abs() <= 1e-12 * worst);
}

#[test]
fn bench_prints_table_and_records() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("rows.jsonl");
    let plot = dir.path().join("plot.tsv");
    let o = run(&[
        "bench", "--synthetic", "60", "--threads", "2", "--reps", "1", "--hash-bits", "16", "--records",
        s(&records), "--plot-data", s(&plot),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = stdout(&o);
    assert!(table.contains("Structured Perc"));
    assert!(table.contains("Lock-free Para-Perc 2-thr."));
    assert!(table.contains("Locked Para-Perc 2-thr."));
    assert!(table.contains("1.0x("));
    assert_eq!(std::fs::read_to_string(records).unwrap().lines().count(), 3);
    assert_eq!(std::fs::read_to_string(plot).unwrap().lines().count(), 4);
}
