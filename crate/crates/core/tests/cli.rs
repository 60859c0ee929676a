//! End-to-end behavior of the `isocheck` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use isocheck::history::{ops, History, IsolationLevel, Predicate, RawHistory};
use isocheck::io::{parse_history, REPORT_SCHEMA};
use isocheck::opsem::{random_program, run_to_history, IsoMix, ProgramShape};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_isocheck"))
}

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus").join(format!("{name}.json"))
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().expect("binary runs");
    (status.code().expect("exit code"), String::from_utf8(stdout).unwrap(), String::from_utf8(stderr).unwrap())
}

fn generate(dir: &Path, seed: u64, count: u32, extra: &[&str]) {
    let (code, _, err) = run(bin()
        .args(["generate", "--sessions", "3", "--txns", "4", "--seed", &seed.to_string(), "--count", &count.to_string()])
        .args(extra)
        .arg("-o")
        .arg(dir));
    assert_eq!(code, 0, "{err}");
}

fn json_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
}

#[test]
fn check_exit_codes() {
    let (code, out, _) = run(bin().arg("check").arg(corpus("mixed_levels_conflict")));
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(report["witness"]["commit_order"], serde_json::json!(["init", "t1", "t4", "t5", "t2", "t3"]));

    let (code, _, _) = run(bin().arg("check").arg(corpus("client_witness_ser")));
    assert_eq!(code, 1);

    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{\n  \"kind\": \"history\",\n  oops\n}").unwrap();
    let (code, out, err) = run(bin().arg("check").arg(&garbage));
    assert_eq!(code, 2);
    assert!(err.contains("line 3, column 3"), "{err}");
    assert!(out.contains("\"status\":\"error\""));

    let (code, _, _) = run(bin().args(["check", "--max-extensions", "0"]).arg(corpus("mixed_levels_conflict")));
    assert_eq!(code, 3);

    // Parse errors take precedence over inconsistent and unknown results.
    let (code, _, _) = run(bin().arg("check").arg(corpus("client_witness_ser")).arg(&garbage));
    assert_eq!(code, 2);
    let (code, _, _) = run(bin().arg("check").arg(corpus("write_skew")).arg(corpus("client_witness_ser")));
    assert_eq!(code, 1);

    let (code, _, _) = run(bin().arg("check"));
    assert_eq!(code, 2);
    let (code, _, _) = run(bin().args(["check", "--jobs", "0"]).arg(corpus("write_skew")));
    assert_eq!(code, 2);
}

#[test]
fn check_with_oracle_agrees_on_the_corpus() {
    let mut cmd = bin();
    cmd.args(["check", "--oracle"]);
    for (name, _) in isocheck::corpus::ENTRIES {
        cmd.arg(corpus(name));
    }
    let (code, out, _) = run(&mut cmd);
    assert_eq!(code, 1, "the corpus holds inconsistent histories");
    for line in out.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["oracle"]["agrees"], true, "{line}");
    }
}

#[test]
fn oracle_command() {
    let (code, out, _) = run(bin().arg("oracle").arg(corpus("mixed_levels_conflict")));
    assert_eq!(code, 0);
    assert!(out.contains("\"status\":\"consistent\""));
    let (code, _, _) = run(bin().arg("oracle").arg(corpus("client_witness_ser")));
    assert_eq!(code, 1);

    let mut raw = RawHistory::new(&["x"]);
    for i in 1..=12 {
        raw.push_txn(&format!("s{}", i % 3), &format!("t{i}"), IsolationLevel::Rc, vec![ops::select(Predicate::Literal(true))]);
    }
    let dir = tempfile::tempdir().unwrap();
    let big = dir.path().join("big.json");
    std::fs::write(&big, serde_json::to_string(&raw).unwrap()).unwrap();
    let (code, _, err) = run(bin().arg("oracle").arg(&big));
    assert_eq!(code, 3, "{err}");
}

#[test]
fn generate_is_deterministic_and_validates_arguments() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate(a.path(), 7, 3, &[]);
    generate(b.path(), 7, 3, &[]);
    let fa = json_files(a.path());
    assert_eq!(fa.len(), 3);
    for (x, y) in fa.iter().zip(json_files(b.path())) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let (code, _, _) = run(bin().args(["generate", "--sessions", "0", "--txns", "2", "-o"]).arg(a.path()));
    assert_eq!(code, 2);
    let (code, _, _) = run(bin().args(["generate", "--sessions", "1", "--txns", "2", "--iso", "PC", "-o"]).arg(a.path()));
    assert_eq!(code, 2);
    let blocker = a.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let (code, _, _) = run(bin().args(["generate", "--sessions", "1", "--txns", "1", "-o"]).arg(blocker.join("sub")));
    assert_eq!(code, 2);
}

#[test]
fn generated_histories_check_consistent_in_parallel() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 100, 6, &["--iso", "SER:1,SI:1,RC:3"]);
    generate(dir.path(), 200, 6, &["--iso", "RC", "--client"]);
    let files = json_files(dir.path());
    let (c1, out1, _) = run(bin().args(["check", "--jobs", "1"]).args(&files));
    let (c4, out4, _) = run(bin().args(["check", "--jobs", "4"]).args(&files));
    assert_eq!(c1, 0, "{out1}");
    assert_eq!(c4, 0);
    assert_eq!(out1, out4);
    assert_eq!(out1.lines().count(), files.len());
}

#[test]
fn reports_match_the_schema() {
    let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("schema compiles");
    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "[").unwrap();
    let reports = dir.path().join("reports");
    let mut cmd = bin();
    cmd.args(["check", "--stats", "--oracle", "--report-dir"]).arg(&reports).arg(&garbage);
    for (name, _) in isocheck::corpus::ENTRIES {
        cmd.arg(corpus(name));
    }
    let (_, out, _) = run(&mut cmd);
    for line in out.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["status"] == "error" || v["stats"]["elapsed_ms"].is_u64(), "{line}");
        let msgs: Vec<String> = match compiled.validate(&v) {
            Ok(()) => Vec::new(),
            Err(errors) => errors.map(|e| e.to_string()).collect(),
        };
        assert!(msgs.is_empty(), "{line}: {msgs:?}");
    }
    let written = json_files(&reports);
    assert_eq!(written.len(), isocheck::corpus::ENTRIES.len() + 1);
    for f in written {
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&f).unwrap()).unwrap();
        assert!(compiled.is_valid(&v), "{}", f.display());
    }
    let bad = serde_json::json!({"file": "x", "status": "consistent"});
    assert!(!compiled.is_valid(&bad));
}

#[test]
fn text_format_and_logging() {
    let (code, out, err) = run(bin()
        .env("ISOCHECK_LOG", "debug")
        .args(["check", "--format", "text"])
        .arg(corpus("mixed_levels_conflict")));
    assert_eq!(code, 0);
    assert!(out.contains("commit order: init < t1 < t4 < t5 < t2 < t3"), "{out}");
    assert!(err.contains("DEBUG"), "{err}");
    let (_, _, quiet) = run(bin().env_remove("ISOCHECK_LOG").arg("check").arg(corpus("mixed_levels_conflict")));
    assert!(quiet.is_empty(), "{quiet}");
}

#[test]
fn histories_round_trip_through_files() {
    let text_of = |h: &History| serde_json::to_string_pretty(&h.to_raw()).unwrap();
    for (name, text) in isocheck::corpus::ENTRIES {
        let h = parse_history(text).unwrap();
        assert_eq!(parse_history(&text_of(&h)).unwrap(), h, "{name}");
    }
    let shape = ProgramShape::new(3, 4, 3, IsoMix::default());
    let mut done = 0;
    for seed in 0..1000 {
        let Ok(out) = run_to_history(&random_program(&shape, seed), seed) else { continue };
        let text = text_of(&out.history);
        let back = parse_history(&text).unwrap();
        assert_eq!(back, out.history);
        assert_eq!(text_of(&back), text);
        done += 1;
    }
    assert!(done >= 990, "only {done} runs completed");
}
