//! End-to-end driver tests: determinism of the reports, artifact caching,
//! and the exit-code taxonomy.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_kinlab")
}

fn run_cli(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn kinlab")
}

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.toml");
    fs::write(
        &p,
        r#"
[system]
name = "decoupled_burgers"
certify_n = 17

[entropy]
levels = 17
grid = 17

[run]
t_final = 0.12
dx = 8e-4
epsilon = [2e-2, 1e-2]
snapshots = 33
w_ref = 0.5
z_ref = 0.5

[[run.bump]]
amplitude = 0.22
width = 0.5

[analysis]
characteristics = [0.625]
modulus_times = [0.5]
unweighted_q = true
"#,
    )
    .unwrap();
    p
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn assert_status(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn reports_are_deterministic_and_cache_is_reused() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out1 = tmp.path().join("out1");
    let out2 = tmp.path().join("out2");

    let first = run_cli(&["all", "--config", cfg.to_str().unwrap(), "--out", out1.to_str().unwrap()]);
    assert_status(&first, 0);
    let second = run_cli(&["all", "--config", cfg.to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    assert_status(&second, 0);

    for name in ["summary.txt", "analysis.txt", "decay.txt"] {
        assert_eq!(read(&out1, name), read(&out2, name), "{name} differs between fresh runs");
    }
    let summary = read(&out1, "summary.txt");
    assert!(summary.contains("[PASS] mass_conservation"), "summary:\n{summary}");
    assert!(!summary.contains("[FAIL]"), "summary:\n{summary}");
    assert!(read(&out1, "decay.txt").contains("# table q_trace_unweighted"));

    // Hashed artifacts exist: one certificate, one family, two runs.
    let names: Vec<String> = fs::read_dir(&out1)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    for prefix in ["certificate-", "family-", "run-"] {
        assert!(names.iter().any(|n| n.starts_with(prefix)), "missing {prefix}*: {names:?}");
    }
    assert_eq!(names.iter().filter(|n| n.starts_with("run-")).count(), 2);

    // Warm rerun into the same directory reuses every artifact and rewrites
    // the derived reports identically.
    let before = read(&out1, "summary.txt");
    let warm = run_cli(&["all", "--config", cfg.to_str().unwrap(), "--out", out1.to_str().unwrap()]);
    assert_status(&warm, 0);
    let stdout = String::from_utf8_lossy(&warm.stdout).into_owned();
    assert!(stdout.contains("certificate: cached"), "stdout:\n{stdout}");
    assert!(stdout.contains("family: cached"), "stdout:\n{stdout}");
    assert!(stdout.contains("run e0 (eps 2e-2): cached"), "stdout:\n{stdout}");
    assert_eq!(before, read(&out1, "summary.txt"));
}

#[test]
fn seed_changes_the_datum_and_the_artifact_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out1 = tmp.path().join("a");
    let out2 = tmp.path().join("b");

    let s1 = run_cli(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out1.to_str().unwrap(),
        "--seed",
        "1",
    ]);
    assert_status(&s1, 0);
    let s2 = run_cli(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
        "--seed",
        "2",
    ]);
    assert_status(&s2, 0);

    let run_name = |dir: &Path| -> String {
        fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .find(|n| n.starts_with("run-"))
            .expect("run artifact")
    };
    // Different seeds give different run hashes; the certificate hash (no
    // seed influence) is shared.
    assert_ne!(run_name(&out1), run_name(&out2));
    let cert_name = |dir: &Path| -> String {
        fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .find(|n| n.starts_with("certificate-"))
            .expect("certificate artifact")
    };
    assert_eq!(cert_name(&out1), cert_name(&out2));
}

#[test]
fn exit_codes_follow_the_error_taxonomy() {
    let tmp = tempfile::tempdir().unwrap();

    // Missing config file: input problem, exit 2.
    let miss = run_cli(&["certify", "--config", tmp.path().join("nope.toml").to_str().unwrap()]);
    assert_status(&miss, 2);

    // Unknown system name: config problem, exit 2.
    let bad = tmp.path().join("bad.toml");
    fs::write(
        &bad,
        "[system]\nname = \"perfect_fluid\"\n[run]\nt_final = 0.1\ndx = 0.01\nw_ref = 0.4\nz_ref = 0.5\n",
    )
    .unwrap();
    let out = tmp.path().join("o");
    let unknown = run_cli(&["certify", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_status(&unknown, 2);

    // A tampered certificate cache fails the invariant gate when the family
    // is built on top of it: exit 4.
    let cfg = tiny_config(tmp.path());
    let out4 = tmp.path().join("o4");
    let ok = run_cli(&["certify", "--config", cfg.to_str().unwrap(), "--out", out4.to_str().unwrap()]);
    assert_status(&ok, 0);
    let cert_file = fs::read_dir(&out4)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().starts_with("certificate-"))
        .unwrap();
    let doctored: String = fs::read_to_string(&cert_file)
        .unwrap()
        .lines()
        .map(|l| {
            if l.starts_with("gap_min") {
                "gap_min -1e0".to_string()
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(&cert_file, doctored + "\n").unwrap();
    let invalid = run_cli(&[
        "build-entropies",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out4.to_str().unwrap(),
    ]);
    assert_status(&invalid, 4);
    let err = String::from_utf8_lossy(&invalid.stderr).into_owned();
    assert!(err.contains("certificate"), "stderr:\n{err}");
}
