//! Black-box checks of the command-line binary: output formats, exit codes,
//! and determinism.

use std::path::PathBuf;
use std::process::{Command, Output};

fn uqca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uqca"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn temp_file(name: &str, contents: &str) -> PathBuf {
    let path = std::env::temp_dir().join(format!("uqca-cli-{}-{name}", std::process::id()));
    std::fs::write(&path, contents).expect("write temp file");
    path
}

#[test]
fn verify_table_reports_the_audit() {
    let out = uqca(&["verify-table"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("unitary: residual"), "{text}");
    assert!(text.contains("rows: 72"), "{text}");
}

#[test]
fn verify_tiles_lists_every_tile_as_ok() {
    let out = uqca(&["verify-tiles"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    for label in ["ID", "H", "T", "SWAP", "CP"] {
        assert!(
            text.lines().any(|l| l.starts_with(label) && l.ends_with("ok")),
            "missing ok line for {label} in:\n{text}"
        );
    }
}

#[test]
fn run_moves_a_free_signal_to_the_opposite_diagonal() {
    let input = temp_file("free.uqca", "offset 0 0\n0\n");
    let out = uqca(&[
        "run",
        "--input",
        input.to_str().unwrap(),
        "--steps",
        "24",
        "--render",
        "final",
    ]);
    let _ = std::fs::remove_file(&input);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("time: 24"), "{text}");
    assert!(text.contains("branches: 1"), "{text}");
    assert!(text.contains("norm: 1.000000000000"), "{text}");
    assert!(text.contains("offset 24 24"), "{text}");
}

#[test]
fn compile_execute_prepares_the_expected_entangled_state() {
    let circuit = temp_file("bell.qc", "qubits 2\nH 0\nCNOT 0 1\n");
    let out = uqca(&[
        "compile",
        "--circuit",
        circuit.to_str().unwrap(),
        "--execute",
        "00",
    ]);
    let _ = std::fs::remove_file(&circuit);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("00 0.707106781187+0.000000000000i"), "{text}");
    assert!(text.contains("11 0.707106781187+0.000000000000i"), "{text}");
}

#[test]
fn compile_output_is_deterministic() {
    let circuit = temp_file("det.qc", "qubits 3\nH 0\nCNOT 0 2\nT 1\n");
    let args = ["compile", "--circuit", circuit.to_str().unwrap()];
    let first = uqca(&args);
    let second = uqca(&args);
    let _ = std::fs::remove_file(&circuit);
    assert!(first.status.success());
    assert_eq!(stdout(&first), stdout(&second));
}

#[test]
fn missing_input_file_is_an_io_error_with_exit_one() {
    let out = uqca(&["run", "--input", "/nonexistent/state.uqca"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error: io:"), "{}", stderr(&out));
}

#[test]
fn malformed_grid_is_a_parse_error_with_exit_one() {
    let input = temp_file("bad.uqca", "offset 0 0\n0x\n");
    let out = uqca(&["run", "--input", input.to_str().unwrap()]);
    let _ = std::fs::remove_file(&input);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error: parse:"), "{}", stderr(&out));
}

#[test]
fn unknown_flag_is_a_usage_error_with_exit_two() {
    let out = uqca(&["run", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

/// Parse a `bits re±imi` amplitude line as printed by `--execute` and
/// `oracle run`.
fn parse_amplitude_line(line: &str) -> Option<(String, f64, f64)> {
    let (bits, amp) = line.split_once(' ')?;
    if bits.is_empty() || !bits.bytes().all(|b| b == b'0' || b == b'1') {
        return None;
    }
    let amp = amp.strip_suffix('i')?;
    let sign = amp.rfind(['+', '-'])?;
    if sign == 0 {
        return None;
    }
    let (re, im) = amp.split_at(sign);
    Some((bits.to_string(), re.parse().ok()?, im.parse().ok()?))
}

fn amplitudes(text: &str) -> Vec<(String, f64, f64)> {
    text.lines().filter_map(parse_amplitude_line).collect()
}

#[test]
fn oracle_and_compiled_machine_agree_on_a_basis_input() {
    let circuit = temp_file("agree.qc", "qubits 2\nH 0\nCP 0 1\nH 1\n");
    let compiled = uqca(&[
        "compile",
        "--circuit",
        circuit.to_str().unwrap(),
        "--execute",
        "10",
    ]);
    let reference = uqca(&[
        "oracle",
        "run",
        "--circuit",
        circuit.to_str().unwrap(),
        "--input",
        "10",
    ]);
    let _ = std::fs::remove_file(&circuit);
    assert!(compiled.status.success(), "{}", stderr(&compiled));
    assert!(reference.status.success(), "{}", stderr(&reference));
    let ours = amplitudes(&stdout(&compiled));
    let theirs = amplitudes(&stdout(&reference));
    assert_eq!(ours.len(), 4);
    assert_eq!(theirs.len(), 4);
    // Overlap |<ours|theirs>|^2, insensitive to a global phase.
    let (mut or, mut oi) = (0.0f64, 0.0f64);
    for ((ba, ra, ia), (bb, rb, ib)) in ours.iter().zip(&theirs) {
        assert_eq!(ba, bb);
        or += ra * rb + ia * ib;
        oi += ra * ib - ia * rb;
    }
    let overlap = or * or + oi * oi;
    assert!(overlap > 1.0 - 1e-9, "overlap {overlap} between {ours:?} and {theirs:?}");
}
