use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use jdcc_core::contour::read_contours;
use jdcc_core::harness::CSV_HEADER;
use jdcc_core::mask::read_pgm;
use jdcc_core::trace_contours;

fn jdcc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jdcc")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = jdcc(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn frames(dir: &Path) {
    ok(dir, &["gen-shapes", "--kind", "rect", "--size", "32", "--frames", "3", "--seed", "5", "--out", "f"]);
    ok(dir, &["train", "f/rect_000.pgm", "f/rect_001.pgm", "--out", "tree.bin"]);
}

#[test]
fn encode_decode_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    frames(dir);
    let report = ok(dir, &["encode", "f/rect_002.pgm", "--tree", "tree.bin", "--out", "c.jdcc"]);
    assert!(report.contains("bits_per_symbol="));
    ok(dir, &["decode", "c.jdcc", "--tree", "tree.bin", "--out", "c.txt"]);
    let decoded = read_contours(&fs::read_to_string(dir.join("c.txt")).unwrap()).unwrap();
    let mask = read_pgm(&fs::read(dir.join("f/rect_002.pgm")).unwrap()).unwrap();
    assert_eq!(decoded, trace_contours(&mask));
}

#[test]
fn corruption_is_seeded_and_zero_delta_is_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    frames(dir);
    ok(dir, &["corrupt", "f/rect_002.pgm", "--delta", "0", "--out", "z.pgm"]);
    assert_eq!(fs::read(dir.join("z.pgm")).unwrap(), fs::read(dir.join("f/rect_002.pgm")).unwrap());
    ok(dir, &["corrupt", "f/rect_002.pgm", "--delta", "0.2", "--seed", "9", "--out", "a.pgm"]);
    ok(dir, &["corrupt", "f/rect_002.pgm", "--delta", "0.2", "--seed", "9", "--out", "b.pgm"]);
    assert_eq!(fs::read(dir.join("a.pgm")).unwrap(), fs::read(dir.join("b.pgm")).unwrap());
}

#[test]
fn denoised_output_is_deterministic_and_codes_losslessly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    frames(dir);
    ok(dir, &["corrupt", "f/rect_002.pgm", "--delta", "0.1", "--seed", "3", "--out", "n.pgm"]);
    fs::write(dir.join("p.txt"), "p=0.1 q1=0.5 q2=0.4\n").unwrap();
    let args = ["denoise", "n.pgm", "--tree", "tree.bin", "--params", "p.txt", "--beta", "1", "--out"];
    let first = ok(dir, &[&args[..], &["d1.txt"]].concat());
    let second = ok(dir, &[&args[..], &["d2.txt"]].concat());
    assert_eq!(first, second);
    let d1 = fs::read_to_string(dir.join("d1.txt")).unwrap();
    assert_eq!(d1, fs::read_to_string(dir.join("d2.txt")).unwrap());
    ok(dir, &["encode", "d1.txt", "--tree", "tree.bin", "--out", "d.jdcc"]);
    ok(dir, &["decode", "d.jdcc", "--tree", "tree.bin", "--out", "back.txt"]);
    assert_eq!(read_contours(&d1).unwrap(), read_contours(&fs::read_to_string(dir.join("back.txt")).unwrap()).unwrap());
}

#[test]
fn estimate_on_noiseless_pairs_hits_the_floor() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    frames(dir);
    ok(dir, &["encode", "f/rect_002.pgm", "--tree", "tree.bin", "--out", "c.jdcc"]);
    ok(dir, &["decode", "c.jdcc", "--tree", "tree.bin", "--out", "c.txt"]);
    ok(dir, &["estimate", "--clean", "c.txt", "--noisy", "c.txt", "--out", "e.txt"]);
    let text = fs::read_to_string(dir.join("e.txt")).unwrap();
    let params: jdcc_core::TransitionParams = text.trim().parse().unwrap();
    assert_eq!(params.p, 1e-6);
    let report = ok(dir, &["aic", "--clean", "c.txt", "--noisy", "c.txt", "--params", "e.txt"]);
    assert!(report.contains("k=3") && report.contains("k=2"), "{report}");
}

#[test]
fn rd_sweep_is_reproducible_without_timing() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("p.txt"), "p=0.1 q1=0.5 q2=0.4\n").unwrap();
    let args = [
        "rd-sweep", "--kinds", "rect", "--size", "16", "--sequences", "1", "--params", "p.txt", "--lambda", "0,1",
        "--beta-schedule", "1,2", "--no-timing", "--out",
    ];
    ok(dir, &[&args[..], &["a"]].concat());
    ok(dir, &[&args[..], &["b"]].concat());
    for scheme in ["joint", "separate"] {
        let a = fs::read_to_string(dir.join(format!("a_{scheme}.csv"))).unwrap();
        assert_eq!(a, fs::read_to_string(dir.join(format!("b_{scheme}.csv"))).unwrap());
        assert_eq!(a.lines().next(), Some(CSV_HEADER));
        assert_eq!(a.lines().count(), 3);
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(jdcc(dir, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(jdcc(dir, &["train", "missing.pgm", "--out", "t.bin"]).status.code(), Some(2));

    fs::write(dir.join("empty.pgm"), "P2\n4 4\n1\n0 0 0 0\n0 0 0 0\n0 0 0 0\n0 0 0 0\n").unwrap();
    assert_eq!(jdcc(dir, &["train", "empty.pgm", "--out", "t.bin"]).status.code(), Some(2));

    frames(dir);
    fs::write(dir.join("p.txt"), "p=0.1 q1=0.5 q2=0.4\n").unwrap();
    // the observed prefix already leaves a 2x2 image
    fs::write(dir.join("far.txt"), "CONTOUR 5 5 E 0\nssssssssss\n").unwrap();
    let out = jdcc(dir, &["denoise", "far.txt", "--tree", "tree.bin", "--params", "p.txt", "--width", "2", "--height", "2", "--out", "d.txt"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
