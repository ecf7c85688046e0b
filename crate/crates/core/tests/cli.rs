use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bxhf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bxhf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `init` then `run` into a fresh directory. Returns (tmp, world dir).
fn fresh_world() -> (TempDir, std::path::PathBuf) {
    let tmp = TempDir::new().unwrap();
    let scenario = tmp.path().join("scenario.json");
    let world = tmp.path().join("world");
    assert_eq!(code(&bxhf(&["init", "--out", path(&scenario)])), 0);
    let run = bxhf(&[
        "run",
        "--scenario",
        path(&scenario),
        "--seed",
        "7",
        "--out",
        path(&world),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout(&run).contains("decisions 5  denied 1"));
    (tmp, world)
}

fn decision_ids(world: &Path) -> Vec<String> {
    let report = std::fs::read_to_string(world.join("report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    v["verifications"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d["decision"].as_str().unwrap().to_string())
        .collect()
}

#[test]
fn clean_world_verifies() {
    let (_tmp, world) = fresh_world();
    let ledger = world.join("ledger.dump");
    let chain = bxhf(&["verify-chain", "--ledger", path(&ledger)]);
    assert_eq!(code(&chain), 0);
    assert!(stdout(&chain).starts_with("valid (12 blocks)"));

    for id in decision_ids(&world) {
        let out = bxhf(&["verify-decision", "--world", path(&world), "--decision", &id]);
        assert_eq!(code(&out), 0);
        assert_eq!(stdout(&out).trim(), "valid");
    }
}

#[test]
fn audit_lists_registration_access_and_decision() {
    let (_tmp, world) = fresh_world();
    let out = bxhf(&[
        "audit",
        "--ledger",
        path(&world.join("ledger.dump")),
        "--record",
        "hosp-a-03",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("data_registration"));
    assert!(text.contains("access_decision"));
    assert!(text.contains("decision_record"));
    assert!(text.contains("3 transaction(s)"));
}

#[test]
fn block_tamper_is_reported_with_exit_1() {
    let (_tmp, world) = fresh_world();
    let t = bxhf(&[
        "tamper",
        "--world",
        path(&world),
        "--target",
        "block:4",
        "--offset",
        "30",
    ]);
    assert_eq!(code(&t), 0);
    let chain = bxhf(&["verify-chain", "--ledger", path(&world.join("ledger.dump"))]);
    assert_eq!(code(&chain), 1);
    assert_eq!(stdout(&chain).trim(), "corrupt at block 4");
}

#[test]
fn explanation_tamper_fails_verification() {
    let (_tmp, world) = fresh_world();
    let id = decision_ids(&world).remove(0);
    let target = format!("explanation:{id}");
    assert_eq!(
        code(&bxhf(&[
            "tamper",
            "--world",
            path(&world),
            "--target",
            &target,
            "--offset",
            "5"
        ])),
        0
    );
    let out = bxhf(&["verify-decision", "--world", path(&world), "--decision", &id]);
    assert_eq!(code(&out), 1);
    assert_eq!(stdout(&out).trim(), "mismatch(explanation)");
}

#[test]
fn record_tamper_lowers_score() {
    let (_tmp, world) = fresh_world();
    let before = stdout(&bxhf(&["score", "--world", path(&world)]));
    assert_eq!(
        code(&bxhf(&[
            "tamper",
            "--world",
            path(&world),
            "--target",
            "record:hosp-b-04",
            "--offset",
            "0"
        ])),
        0
    );
    let after = stdout(&bxhf(&["score", "--world", path(&world)]));
    let s = |text: &str| -> f64 {
        let v: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
        f64::from_bits(u64::from_str_radix(v["S"].as_str().unwrap(), 16).unwrap())
    };
    assert_eq!(s(&before), 1.0);
    assert!(s(&after) < 1.0);
}

#[test]
fn explain_prints_table() {
    let (_tmp, world) = fresh_world();
    let out = bxhf(&["explain", "--world", path(&world), "--record", "hosp-a-03"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("troponin"));
    assert!(text.contains("= margin"));

    let undecided = bxhf(&["explain", "--world", path(&world), "--record", "hosp-a-00"]);
    assert_eq!(code(&undecided), 0);
    assert!(stdout(&undecided).contains("no recorded decision"));
}

#[test]
fn usage_errors_exit_2() {
    let (_tmp, world) = fresh_world();
    assert_eq!(code(&bxhf(&["frobnicate"])), 2);
    assert_eq!(
        code(&bxhf(&["verify-chain", "--ledger", "/nonexistent/ledger.dump"])),
        2
    );
    assert_eq!(
        code(&bxhf(&[
            "tamper",
            "--world",
            path(&world),
            "--target",
            "block:1",
            "--offset",
            "999999"
        ])),
        2
    );
    assert_eq!(
        code(&bxhf(&[
            "tamper",
            "--world",
            path(&world),
            "--target",
            "disk:1",
            "--offset",
            "0"
        ])),
        2
    );
    assert_eq!(
        code(&bxhf(&[
            "verify-decision",
            "--world",
            path(&world),
            "--decision",
            "nothex"
        ])),
        2
    );
    assert_eq!(
        code(&bxhf(&[
            "verify-decision",
            "--world",
            path(&world),
            "--decision",
            &"0".repeat(64)
        ])),
        2
    );
}

#[test]
fn bad_scenario_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let scenario = tmp.path().join("s.json");
    std::fs::write(&scenario, r#"{"seed": 1, "features": {"names": ["a"], "signs": [1]}}"#).unwrap();
    let out = bxhf(&[
        "run",
        "--scenario",
        path(&scenario),
        "--seed",
        "1",
        "--out",
        path(&tmp.path().join("w")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("train"));
}

#[test]
fn same_seed_same_bytes() {
    let (_a, w1) = fresh_world();
    let (_b, w2) = fresh_world();
    for f in ["ledger.dump", "report.json", "world.json"] {
        assert_eq!(
            std::fs::read(w1.join(f)).unwrap(),
            std::fs::read(w2.join(f)).unwrap(),
            "{f}"
        );
    }
}
