use std::path::Path;
use std::process::{Command, Output};

fn espar_sim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_espar-sim"))
        .args(args)
        .current_dir(dir)
        .env_remove("ESPAR_SIM_SEED")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn run_to(dir: &Path, name: &str, extra: &[&str]) -> String {
    let out = dir.join(name);
    let mut args = vec!["--power-db", "0,20", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = espar_sim(&args, dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read_to_string(out).unwrap()
}

#[test]
fn single_trial_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_to(dir.path(), "a.csv", &["--trials", "1", "--seed", "7"]);
    let b = run_to(dir.path(), "b.csv", &["--trials", "1", "--seed", "7"]);
    assert_eq!(a, b);
    let c = run_to(dir.path(), "c.csv", &["--trials", "1", "--seed", "7", "--jobs", "3"]);
    assert_eq!(a, c);
    assert!(a.contains("\n# seed = 7\n"));
}

#[test]
fn summary_goes_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let o = espar_sim(&["--trials", "2", "--power-db", "5", "--precoder", "max-sinr", "--tx2-array", "espar"], dir.path());
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("  P [dB]"));
    assert!(stdout.contains("max-sinr") && stdout.contains("espar"));
    assert!(stdout.contains("power_db,precoder,tx2_array"));
}

#[test]
fn env_seed_is_a_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let check = |args: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_espar-sim"));
        cmd.arg("--check").args(args).current_dir(dir.path()).env_remove("ESPAR_SIM_SEED");
        if let Some(v) = env {
            cmd.env("ESPAR_SIM_SEED", v);
        }
        let o = cmd.output().unwrap();
        (o.status.code(), String::from_utf8(o.stdout).unwrap())
    };
    assert!(check(&[], Some("42")).1.contains("seed = 42\n"));
    assert!(check(&["--seed", "5"], Some("42")).1.contains("seed = 5\n"));
    std::fs::write(dir.path().join("s.toml"), "seed = 9\n").unwrap();
    assert!(check(&["--config", "s.toml"], Some("42")).1.contains("seed = 9\n"));
    assert_eq!(check(&[], Some("abc")).0, Some(2));
}

#[test]
fn flags_override_file_and_preset() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "preset = \"paper-fig3\"\ntrials = 50\n").unwrap();
    let o = espar_sim(&["--config", "c.toml", "--trials", "3", "--check"], dir.path());
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.contains("trials = 3\n"), "{s}");
    assert!(s.contains("precoder = [\"max-sinr\"]"), "{s}");
    let o = espar_sim(&["--preset", "paper-fig2", "--check"], dir.path());
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.contains("precoder = [\"ia-closed-form\"]") && s.contains("trials = 1000\n"));
}

#[test]
fn config_and_io_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 6] = [
        &["--trials", "-1"],
        &["--precoder", "zero-forcing"],
        &["--power-db", "10,5"],
        &["--preset", "nope"],
        &["--config", "missing.toml"],
        &["--trials", "1", "--power-db", "0", "--out", "no/such/dir/x.csv"],
    ];
    for args in cases {
        let o = espar_sim(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
    let o = espar_sim(&["--trials", "-1"], dir.path());
    assert!(String::from_utf8_lossy(&o.stderr).contains("trials"));
}
