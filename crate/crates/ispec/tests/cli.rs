//! End-to-end runs of the `ispec` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ispec::io::{read_dataset, to_json};
use ispec_core::subdomain::assign_spectra;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ispec-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn ispec(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ispec"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const SMALL: &[&str] = &["--geometry", "cycle", "--n", "16", "--sigma", "0,3;7,12"];

fn forge(out: &Path, extra: &[&str]) {
    let mut args = vec!["forge"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    ok(&ispec(out, &args));
}

#[test]
fn forge_is_byte_identical_across_runs() {
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    forge(&a, &[]);
    forge(&b, &[]);
    let bytes = |d: &Path| std::fs::read(d.join("dataset.json")).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
}

#[test]
fn subspec_through_files_matches_in_process() {
    let dir = scratch("subspec");
    forge(&dir, &[]);
    ok(&ispec(&dir, &["subspec"]));
    let data = read_dataset(&dir.join("dataset.json")).unwrap();
    let asg = assign_spectra(&data, None, 1e-6).unwrap();
    let written = std::fs::read_to_string(dir.join("subspec.json")).unwrap();
    assert_eq!(written.trim_end(), to_json(&asg).trim_end());
}

#[test]
fn stored_dataset_round_trips() {
    let dir = scratch("roundtrip");
    forge(&dir, &["--trunc-J", "10"]);
    let data = read_dataset(&dir.join("dataset.json")).unwrap();
    assert_eq!(data.len(), 10);
    let again = dir.join("again.json");
    ispec::io::write_json(&again, &data).unwrap();
    assert_eq!(std::fs::read(dir.join("dataset.json")).unwrap(), std::fs::read(again).unwrap());
}

#[test]
fn nd_and_respond_run_from_stored_data() {
    let dir = scratch("nd");
    forge(&dir, &[]);
    ok(&ispec(&dir, &["nd", "--lambda", "-2", "--side", "minus"]));
    ok(&ispec(&dir, &["respond", "--lambda", "-2", "--f", "1,0,0,0", "--h", "0,1,0,0"]));
    assert!(dir.join("nd.json").exists());
    assert!(dir.join("response.json").exists());
}

#[test]
fn blind_mode_refuses_oracle_operations() {
    let dir = scratch("blind");
    let mut args = vec!["green", "--mode", "blind"];
    args.extend_from_slice(SMALL);
    let out = ispec(&dir, &args);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mode"));

    let mut args = vec!["spectra", "--mode", "blind"];
    args.extend_from_slice(SMALL);
    assert_eq!(ispec(&dir, &args).status.code(), Some(2));

    assert_eq!(ispec(&dir, &["verify", "--mode", "blind", "--suite", "2"]).status.code(), Some(2));

    // Data generation and data-only stages stay available.
    forge(&dir, &["--mode", "blind"]);
    ok(&ispec(&dir, &["subspec", "--mode", "blind"]));
}

#[test]
fn verify_reports_and_exits_zero_on_pass() {
    let dir = scratch("verify");
    let out = ispec(&dir, &["verify", "--suite", "2"]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("[PASS]  2"));
    assert!(dir.join("report.json").exists());
}

#[test]
fn bad_input_exits_with_usage_error() {
    let dir = scratch("bad");
    assert_eq!(ispec(&dir, &["subspec", "--data", "/nonexistent.json"]).status.code(), Some(2));
    let mut args = vec!["forge", "--sigma", "0,3;2,12"];
    args.extend_from_slice(&["--n", "16"]);
    assert_ne!(ispec(&dir, &args).status.code(), Some(0));
}
