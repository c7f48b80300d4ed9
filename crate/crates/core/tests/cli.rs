use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lore::cli::{EXIT_BOUNDS, EXIT_IO, EXIT_OK, EXIT_REFUTED, EXIT_SYNTAX};

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus").join(name)
}

fn lore(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lore")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> u8 {
    o.status.code().expect("exited normally") as u8
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn check_exit_codes() {
    let ok = lore(&["check", path(&corpus("calendar.lore"))]);
    assert_eq!(code(&ok), EXIT_OK);
    assert!(stdout(&ok).contains("confluence:add_vacation,add_vacation refuted"));

    let bad = lore(&["check", path(&corpus("calendar-no-days.lore"))]);
    assert_eq!(code(&bad), EXIT_REFUTED);
    assert!(stdout(&bad).contains("preservation:add_vacation refuted"));

    let tpcc = lore(&["check", path(&corpus("tpcc-mini.lore"))]);
    assert_eq!(code(&tpcc), EXIT_BOUNDS);
}

#[test]
fn syntax_errors_carry_the_location() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("broken.lore");
    std::fs::write(&file, "type Calendar = AWSet[Appointment]\nval work: Source[Calendar] = Source(AWSet(\n").unwrap();
    let o = lore(&["check", path(&file)]);
    assert_eq!(code(&o), EXIT_SYNTAX);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("broken.lore:3:"), "{err}");
}

#[test]
fn usage_and_io_errors() {
    assert_eq!(code(&lore(&["check", "/nonexistent/x.lore"])), EXIT_IO);
    assert_eq!(code(&lore(&["frobnicate"])), EXIT_IO);
    let zero = lore(&["check", "--max-set-size", "0", path(&corpus("calendar.lore"))]);
    assert_eq!(code(&zero), EXIT_IO);
}

#[test]
fn conflicts_json() {
    let o = lore(&["conflicts", "--format", "json", path(&corpus("calendar.lore"))]);
    assert_eq!(code(&o), EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["add_vacation"], serde_json::json!(["add_vacation"]));
    assert_eq!(v["add_work"], serde_json::json!([]));
}

#[test]
fn anomaly_then_serialize() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("anomaly.trace.json");
    let program = corpus("calendar.lore");
    let sim = lore(&[
        "simulate",
        path(&program),
        "--script",
        path(&corpus("anomaly.json")),
        "--trace-out",
        path(&trace),
    ]);
    assert_eq!(code(&sim), EXIT_REFUTED);
    assert!(stdout(&sim).contains("invariant 2 violated at step 3"), "{}", stdout(&sim));

    let ser = lore(&["serialize", path(&program), path(&trace)]);
    assert_eq!(code(&ser), lore::cli::EXIT_NO_SERIALIZATION);
    assert!(stdout(&ser).contains("no serialization for D1"));
}

#[test]
fn random_simulation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.json");
    let program = corpus("calendar.lore");
    let args = ["simulate", path(&program), "--seed", "7", "--steps", "30", "--trace-out", path(&trace)];
    let (a, b) = (lore(&args), lore(&args));
    assert_eq!(code(&a), EXIT_OK);
    assert_eq!(stdout(&a), stdout(&b));
    let ser = lore(&["serialize", path(&program), path(&trace), "--device", "2", "--format", "json"]);
    assert_eq!(code(&ser), EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&stdout(&ser)).unwrap();
    assert_eq!(v[0]["ok"], serde_json::json!(true));
}

#[test]
fn emit_smt_writes_one_file_per_obligation() {
    let dir = tempfile::tempdir().unwrap();
    let o = lore(&["emit-smt", path(&corpus("calendar.lore")), "-o", path(dir.path())]);
    assert_eq!(code(&o), EXIT_OK);
    let mut files: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    assert_eq!(files.len(), 5, "{files:?}");
    for f in &files {
        let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(text.contains("(check-sat)"), "{f}");
        assert_eq!(text.matches('(').count(), text.matches(')').count(), "{f}");
    }
}

#[test]
fn emit_graph_dot() {
    let o = lore(&["emit-graph", path(&corpus("calendar.lore"))]);
    assert_eq!(code(&o), EXIT_OK);
    let dot = stdout(&o);
    assert!(dot.starts_with("digraph"));
    assert!(dot.contains("\"work\" -> \"all_appointments\""), "{dot}");
}
