use std::path::Path;
use std::process::{Command, Output};

fn flipctl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flipctl"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn with_config(config: &str, cmd: &[&str]) -> (tempfile::TempDir, Output) {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), config).unwrap();
    let mut args = cmd.to_vec();
    args.extend(["--config", "run.cfg", "--out", "out"]);
    let out = flipctl(dir.path(), &args);
    (dir, out)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn oracle_without_flips_is_unreachable() {
    let (dir, out) = with_config("example = example2\nflip_set = {}\n", &["oracle"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("out/oracle.txt")).unwrap();
    assert!(text.contains("reachable: no"), "{text}");
}

#[test]
fn oracle_with_kernel_flips_is_reachable() {
    let (dir, out) = with_config("example = example2\nflip_set = {2,3}\n", &["oracle"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("out/oracle.txt")).unwrap();
    assert!(text.contains("reachable: yes"), "{text}");
}

#[test]
fn oracle_refuses_large_network_without_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let mut net = String::from("nodes: 25\ninputs: 0\n");
    for i in 1..=25 {
        net.push_str(&format!("x{i}' = !x{i}\n"));
    }
    std::fs::write(dir.path().join("big.net"), net).unwrap();
    let zeros = "0".repeat(25);
    let ones = "1".repeat(25);
    std::fs::write(dir.path().join("big.problem"), format!("Md = {{{ones}}}\nM0 = {{{zeros}}}\nA = {{1}}\n")).unwrap();
    std::fs::write(dir.path().join("run.cfg"), "network = big.net\nproblem = big.problem\n").unwrap();
    let out = flipctl(dir.path(), &["oracle", "--config", "run.cfg", "--out", "out"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("declare blocks"), "{}", stderr(&out));
}

#[test]
fn malformed_network_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.net"), "nodes: 2\ninputs: 0\nx1' = x1 &\nx2' = x1\n").unwrap();
    std::fs::write(dir.path().join("p.problem"), "Md = {11}\nM0 = {00}\nA = {1}\n").unwrap();
    std::fs::write(dir.path().join("run.cfg"), "network = bad.net\nproblem = p.problem\n").unwrap();
    let out = flipctl(dir.path(), &["kernels", "--config", "run.cfg", "--out", "out"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("parse error"), "{}", stderr(&out));
}

#[test]
fn unknown_example_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = flipctl(dir.path(), &["replicate", "example9", "--out", "out"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = flipctl(dir.path(), &["kernels", "--episodez", "3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn policy_needs_a_flip_set() {
    let (_dir, out) = with_config("example = example2\n", &["policy"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn kernels_without_any_kernel_exit_unreachable() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.problem"), "Md = {001}\nM0 = complement(Md)\nA = {1}\n").unwrap();
    let net = flipctl_core::bundled::EXAMPLE2_NETWORK;
    std::fs::write(dir.path().join("e.net"), net).unwrap();
    std::fs::write(dir.path().join("run.cfg"), "network = e.net\nproblem = p.problem\nepisodes = 200\nseeds = 0..2\n").unwrap();
    let out = flipctl(dir.path(), &["kernels", "--config", "run.cfg", "--out", "out"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("out/kernels.txt")).unwrap();
    assert!(text.contains("cannot realize reachability"), "{text}");
}

#[test]
fn kernels_writes_curves_with_header() {
    let (dir, out) = with_config("example = example2\nepisodes = 100\ntmax = 10\nseeds = 0..2\n", &["kernels"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let curves = std::fs::read_to_string(dir.path().join("out/curves.csv")).unwrap();
    assert_eq!(curves.lines().next(), Some("flipset,episode,reachable_rate,seed"));
    let kernels = std::fs::read_to_string(dir.path().join("out/kernels.txt")).unwrap();
    assert!(kernels.contains("kernel: {1,2}") && kernels.contains("kernel: {2,3}"), "{kernels}");
}
