//! Golden-file checks: every subcommand's report output is pinned byte for
//! byte against a committed reference.  Regenerate with
//! `PURIFY_GOLDEN_REGEN=1 cargo test -p purify-lab-cli --test golden`.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_purify-lab")
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Fixture inputs are addressed relative to the golden directory so the
/// paths echoed into reports stay checkout-independent.
fn run_bin_in_golden_dir(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(golden_dir())
        .env_remove("PURIFY_LAB_SEED")
        .output()
        .expect("binary should launch")
}

/// Fresh scratch directory per test so parallel tests never collide.
fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("purify-golden-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_bin(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("PURIFY_LAB_SEED")
        .output()
        .expect("binary should launch")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "unexpected exit\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr),
    );
}

fn check_golden(name: &str, produced: &Path) {
    let reference = golden_dir().join(name);
    let produced_bytes = std::fs::read(produced).unwrap();
    if std::env::var_os("PURIFY_GOLDEN_REGEN").is_some() {
        std::fs::write(&reference, &produced_bytes).unwrap();
        return;
    }
    let reference_bytes = std::fs::read(&reference).unwrap_or_else(|e| {
        panic!(
            "missing golden file {} ({e}); regenerate with PURIFY_GOLDEN_REGEN=1",
            reference.display()
        )
    });
    if produced_bytes != reference_bytes {
        panic!(
            "{name} drifted from its golden copy\n--- produced ---\n{}\n--- golden ---\n{}",
            String::from_utf8_lossy(&produced_bytes),
            String::from_utf8_lossy(&reference_bytes),
        );
    }
}

#[test]
fn verify_channel_report_matches_golden() {
    let dir = scratch("verify");
    let out = dir.join("verify.json");
    let output = run_bin(&[
        "verify-channel",
        "--d",
        "2",
        "--n",
        "1",
        "--seed",
        "7",
        "--trials",
        "1",
        "--json",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    check_golden("verify_channel.json", &out);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn divergence_report_matches_golden() {
    let dir = scratch("divergence");
    let out = dir.join("divergence.json");
    let output = run_bin_in_golden_dir(&[
        "divergence",
        "--kind",
        "measured",
        "--alpha",
        "2",
        "--rho",
        "rho_fixture.json",
        "--sigma",
        "sigma_fixture.json",
        "--json",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    check_golden("divergence.json", &out);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn quasiconcavity_report_matches_golden() {
    let dir = scratch("quasiconc");
    let out = dir.join("quasiconc.json");
    let output = run_bin(&[
        "quasiconcavity",
        "--kind",
        "sandwiched",
        "--alpha",
        "2",
        "--d",
        "2",
        "--members",
        "3",
        "--trials",
        "2",
        "--seed",
        "5",
        "--json",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    check_golden("quasiconcavity.json", &out);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn caratheodory_report_matches_golden() {
    let dir = scratch("cara");
    let out = dir.join("cara.json");
    let output = run_bin(&[
        "caratheodory",
        "--d",
        "2",
        "--n",
        "2",
        "--members",
        "6",
        "--trials",
        "1",
        "--seed",
        "5",
        "--json",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    check_golden("caratheodory.json", &out);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn uhlmann_scan_csv_matches_golden() {
    let dir = scratch("scan");
    let out = dir.join("scan.csv");
    // alpha = inf exercises the literal 'inf' CSV rendering.
    let output = run_bin(&[
        "uhlmann-scan",
        "--d",
        "2",
        "--nmax",
        "2",
        "--divergence",
        "sandwiched",
        "--alpha",
        "inf",
        "--seed",
        "7",
        "--trials",
        "1",
        "--csv",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("n,divergence,alpha,per_copy_value,baseline,gap,seed\n"));
    assert!(text.lines().nth(1).unwrap().starts_with("1,sandwiched,inf,"));
    check_golden("uhlmann_scan.csv", &out);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn measured_chain_report_matches_golden() {
    let dir = scratch("chain");
    let out = dir.join("chain.json");
    let output = run_bin(&[
        "measured-chain",
        "--d",
        "2",
        "--alpha",
        "2",
        "--nmax",
        "2",
        "--seed",
        "7",
        "--trials",
        "1",
        "--json",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    check_golden("measured_chain.json", &out);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn repeated_runs_are_byte_identical_and_seeds_matter() {
    let dir = scratch("determinism");
    let args = |csv: &str, json: &str, seed: &str| {
        vec![
            "uhlmann-scan".to_string(),
            "--d".into(),
            "2".into(),
            "--nmax".into(),
            "2".into(),
            "--divergence".into(),
            "umegaki".into(),
            "--seed".into(),
            seed.into(),
            "--trials".into(),
            "2".into(),
            "--csv".into(),
            csv.into(),
            "--json".into(),
            json.into(),
        ]
    };
    let csv_a = dir.join("a.csv");
    let json_a = dir.join("a.json");
    let csv_b = dir.join("b.csv");
    let json_b = dir.join("b.json");
    let csv_c = dir.join("c.csv");
    let json_c = dir.join("c.json");
    let to_refs = |v: &[String]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    for (csv, json, seed) in [
        (&csv_a, &json_a, "11"),
        (&csv_b, &json_b, "11"),
        (&csv_c, &json_c, "12"),
    ] {
        let argv = to_refs(&args(csv.to_str().unwrap(), json.to_str().unwrap(), seed));
        let argv: Vec<&str> = argv.iter().map(|s| s.as_str()).collect();
        assert_exit(&run_bin(&argv), 0);
    }
    assert_eq!(std::fs::read(&csv_a).unwrap(), std::fs::read(&csv_b).unwrap());
    assert_eq!(std::fs::read(&json_a).unwrap(), std::fs::read(&json_b).unwrap());
    assert_ne!(std::fs::read(&csv_a).unwrap(), std::fs::read(&csv_c).unwrap());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn env_seed_is_used_when_flag_absent() {
    let dir = scratch("envseed");
    let out = dir.join("env.csv");
    let output = Command::new(bin())
        .args([
            "uhlmann-scan",
            "--d",
            "2",
            "--nmax",
            "1",
            "--divergence",
            "umegaki",
            "--trials",
            "1",
            "--csv",
            out.to_str().unwrap(),
        ])
        .env("PURIFY_LAB_SEED", "31")
        .output()
        .unwrap();
    assert_exit(&output, 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().nth(1).unwrap().ends_with(",31"));
    std::fs::remove_dir_all(&dir).unwrap();
}
