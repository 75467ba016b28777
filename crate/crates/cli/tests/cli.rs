//! Integration tests that drive the compiled `cpd` binary: stage chaining,
//! two-route agreement through on-disk files, exit codes, and seed handling.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cpd"));
    // Tests control the seed explicitly; an inherited value must not leak in.
    c.env_remove("CPD_SEED");
    c
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn run_err(cmd: &mut Command) -> (i32, String) {
    let out = cmd.output().unwrap();
    assert!(!out.status.success(), "command unexpectedly succeeded");
    (
        out.status.code().expect("process was signaled"),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Generate a small corpus: 3 classes x 5 videos on 8x8x12x8 maps.
fn synth_small(corpus: &Path, seed: u64) {
    let stdout = run_ok(bin().args([
        "synth",
        "--out",
        corpus.to_str().unwrap(),
        "--seed",
        &seed.to_string(),
        "--classes",
        "3",
        "--videos-per-class",
        "5",
        "--train-per-class",
        "3",
        "--map-width",
        "8",
        "--map-height",
        "8",
        "--channels",
        "12",
        "--frames",
        "8",
        "--video-width",
        "32",
        "--video-height",
        "32",
        "--trajectories",
        "24",
        "--trajectory-len",
        "6",
    ]));
    assert!(stdout.starts_with("ok synth videos=15 "), "stdout: {stdout}");
}

/// Minimal header-aware reader for the row-major f64 matrix container.
fn read_matrix(path: &Path) -> (usize, usize, Vec<f64>) {
    let bytes = std::fs::read(path).unwrap();
    let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let values: Vec<f64> = bytes[14..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    assert_eq!(values.len(), rows * cols, "payload size mismatch in {path:?}");
    (rows, cols, values)
}

fn collect_files(root: &Path, base: &Path, out: &mut Vec<(String, Vec<u8>)>) {
    let mut entries: Vec<_> = std::fs::read_dir(root).unwrap().map(|e| e.unwrap()).collect();
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            collect_files(&path, base, out);
        } else {
            let rel = path.strip_prefix(base).unwrap().to_string_lossy().into_owned();
            out.push((rel, std::fs::read(&path).unwrap()));
        }
    }
}

fn assert_trees_equal(a: &Path, b: &Path) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    collect_files(a, a, &mut left);
    collect_files(b, b, &mut right);
    assert_eq!(left.len(), right.len(), "different artifact counts");
    for (l, r) in left.iter().zip(&right) {
        assert_eq!(l.0, r.0, "different artifact names");
        assert_eq!(l.1, r.1, "bytes differ in {}", l.0);
    }
}

#[test]
fn synth_then_pipeline_produces_a_report_and_repeats_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    synth_small(&corpus, 5);

    for name in ["out1", "out2"] {
        let out = dir.path().join(name);
        let stdout = run_ok(bin().args([
            "pipeline",
            "--corpus",
            corpus.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--layers",
            "conv3",
            "--d-pca",
            "6",
            "--codebook-size",
            "4",
            "--seed",
            "11",
        ]));
        assert!(stdout.starts_with("ok pipeline videos=15 blocks=8 "), "stdout: {stdout}");
        assert!(out.join("report.txt").is_file());
        assert!(out.join("scores/fused.scores.txt").is_file());
        assert!(out.join("models/conv3_spatial_st_cpd.svm.cpdc").is_file());
        let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
        assert!(report.starts_with("config "));
        assert_eq!(report.lines().filter(|l| l.starts_with("video ")).count(), 15);
    }
    assert_trees_equal(&dir.path().join("out1"), &dir.path().join("out2"));
}

#[test]
fn stage_commands_chain_and_both_cpd_routes_agree_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    synth_small(&corpus, 7);
    let video = corpus.join("videos/c0_v00");
    let p = |name: &str| -> PathBuf { dir.path().join(name) };

    let stdout = run_ok(bin().args([
        "normalize",
        "--input",
        video.join("conv3_spatial.cpdt").to_str().unwrap(),
        "--mode",
        "st",
        "--output",
        p("nsp.cpdt").to_str().unwrap(),
    ]));
    assert!(stdout.starts_with("ok normalize mode=st dims=8x8x12x8"), "stdout: {stdout}");
    run_ok(bin().args([
        "normalize",
        "--input",
        video.join("conv3_temporal.cpdt").to_str().unwrap(),
        "--mode",
        "st",
        "--output",
        p("ntm.cpdt").to_str().unwrap(),
    ]));

    let stdout = run_ok(bin().args([
        "weightmap",
        "--input",
        p("ntm.cpdt").to_str().unwrap(),
        "--output",
        p("w.cpdt").to_str().unwrap(),
    ]));
    assert!(stdout.starts_with("ok weightmap stream=temporal dims=8x8x8"), "stdout: {stdout}");

    let stdout = run_ok(bin().args([
        "cross",
        "--map",
        p("nsp.cpdt").to_str().unwrap(),
        "--weights",
        p("w.cpdt").to_str().unwrap(),
        "--output",
        p("crossed.cpdt").to_str().unwrap(),
    ]));
    assert!(
        stdout.starts_with("ok cross stream=spatial weighted_by=temporal"),
        "stdout: {stdout}"
    );

    // Route 1: normalized map weighted on the fly.
    run_ok(bin().args([
        "pool",
        "--trajectories",
        video.join("trajectories.txt").to_str().unwrap(),
        "--map",
        p("nsp.cpdt").to_str().unwrap(),
        "--kind",
        "cpd",
        "--weights",
        p("w.cpdt").to_str().unwrap(),
        "--output",
        p("d_weighted.cpdd").to_str().unwrap(),
    ]));
    // Route 2: premultiplied map pooled directly.
    run_ok(bin().args([
        "pool",
        "--trajectories",
        video.join("trajectories.txt").to_str().unwrap(),
        "--map",
        p("crossed.cpdt").to_str().unwrap(),
        "--kind",
        "cpd",
        "--output",
        p("d_direct.cpdd").to_str().unwrap(),
    ]));
    // Plain pooling for comparison of shape.
    let stdout = run_ok(bin().args([
        "pool",
        "--trajectories",
        video.join("trajectories.txt").to_str().unwrap(),
        "--map",
        p("nsp.cpdt").to_str().unwrap(),
        "--kind",
        "tdd",
        "--output",
        p("d_tdd.cpdd").to_str().unwrap(),
    ]));
    assert!(
        stdout.starts_with("ok pool kind=tdd trajectories=24 channels=12"),
        "stdout: {stdout}"
    );

    // The tensor container stores 32-bit values, so the premultiplied file
    // carries one extra rounding per product; the two routes must agree to
    // within that rounding, not bitwise.
    let (r1, c1, v1) = read_matrix(&p("d_weighted.cpdd"));
    let (r2, c2, v2) = read_matrix(&p("d_direct.cpdd"));
    assert_eq!((r1, c1), (24, 12));
    assert_eq!((r2, c2), (24, 12));
    for (i, (&a, &b)) in v1.iter().zip(&v2).enumerate() {
        let gap = (a - b).abs() / a.abs().max(b.abs()).max(1e-12);
        assert!(gap <= 1e-5, "value {i}: {a} vs {b} (rel {gap:e})");
    }
    let (r3, c3, v3) = read_matrix(&p("d_tdd.cpdd"));
    assert_eq!((r3, c3), (24, 12));
    assert!(v3.iter().all(|&v| (0.0..=6.0).contains(&v)));

    // The weight map exports as a binary PGM frame of the map grid.
    run_ok(bin().args([
        "export-wm",
        "--input",
        p("w.cpdt").to_str().unwrap(),
        "--frame",
        "0",
        "--output",
        p("w.pgm").to_str().unwrap(),
    ]));
    let pgm = std::fs::read(p("w.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n8 8\n255\n"));
    assert_eq!(pgm.len(), b"P5\n8 8\n255\n".len() + 64);
}

#[test]
fn failures_exit_with_documented_codes() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    synth_small(&corpus, 3);
    let spatial = corpus.join("videos/c0_v00/conv3_spatial.cpdt");
    let out = dir.path().join("x.cpdt");

    // Missing required arguments: usage error from the argument parser.
    let (code, stderr) = run_err(bin().arg("normalize"));
    assert_eq!(code, 2, "stderr: {stderr}");

    // Unreadable input file.
    let (code, stderr) = run_err(bin().args([
        "normalize",
        "--input",
        dir.path().join("missing.cpdt").to_str().unwrap(),
        "--mode",
        "st",
        "--output",
        out.to_str().unwrap(),
    ]));
    assert_eq!(code, 30, "stderr: {stderr}");
    assert!(stderr.starts_with("error: "), "stderr: {stderr}");

    // A file that is not a tensor container.
    let junk = dir.path().join("junk.cpdt");
    std::fs::write(&junk, vec![b'X'; 40]).unwrap();
    let (code, stderr) = run_err(bin().args([
        "normalize",
        "--input",
        junk.to_str().unwrap(),
        "--mode",
        "st",
        "--output",
        out.to_str().unwrap(),
    ]));
    assert_eq!(code, 10, "stderr: {stderr}");

    // An unknown mode value.
    let (code, stderr) = run_err(bin().args([
        "normalize",
        "--input",
        spatial.to_str().unwrap(),
        "--mode",
        "bogus",
        "--output",
        out.to_str().unwrap(),
    ]));
    assert_eq!(code, 26, "stderr: {stderr}");

    // Pipeline without a corpus directory.
    let (code, stderr) = run_err(bin().args(["pipeline", "--out", out.to_str().unwrap()]));
    assert_eq!(code, 27, "stderr: {stderr}");

    // Weighting a stream with its own weight map is refused without the
    // ablation flag and allowed with it.
    run_ok(bin().args([
        "normalize",
        "--input",
        spatial.to_str().unwrap(),
        "--mode",
        "st",
        "--output",
        dir.path().join("nsp.cpdt").to_str().unwrap(),
    ]));
    run_ok(bin().args([
        "weightmap",
        "--input",
        dir.path().join("nsp.cpdt").to_str().unwrap(),
        "--output",
        dir.path().join("wsp.cpdt").to_str().unwrap(),
    ]));
    let (code, stderr) = run_err(bin().args([
        "cross",
        "--map",
        dir.path().join("nsp.cpdt").to_str().unwrap(),
        "--weights",
        dir.path().join("wsp.cpdt").to_str().unwrap(),
        "--output",
        dir.path().join("same.cpdt").to_str().unwrap(),
    ]));
    assert_eq!(code, 21, "stderr: {stderr}");
    run_ok(bin().args([
        "cross",
        "--map",
        dir.path().join("nsp.cpdt").to_str().unwrap(),
        "--weights",
        dir.path().join("wsp.cpdt").to_str().unwrap(),
        "--allow-same-stream",
        "--output",
        dir.path().join("same.cpdt").to_str().unwrap(),
    ]));

    // A malformed seed in the environment.
    let (code, stderr) = run_err(
        bin()
            .env("CPD_SEED", "forty")
            .args(["synth", "--out", dir.path().join("c2").to_str().unwrap()]),
    );
    assert_eq!(code, 27, "stderr: {stderr}");
    assert!(stderr.contains("CPD_SEED"), "stderr: {stderr}");
}

#[test]
fn seed_resolution_prefers_the_flag_then_the_environment_then_zero() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        vec![
            "synth".to_string(),
            "--out".into(),
            out.to_str().unwrap().into(),
            "--classes".into(),
            "2".into(),
            "--videos-per-class".into(),
            "2".into(),
            "--train-per-class".into(),
            "1".into(),
            "--map-width".into(),
            "6".into(),
            "--map-height".into(),
            "6".into(),
            "--channels".into(),
            "4".into(),
            "--frames".into(),
            "6".into(),
            "--video-width".into(),
            "24".into(),
            "--video-height".into(),
            "24".into(),
            "--trajectories".into(),
            "8".into(),
            "--trajectory-len".into(),
            "4".into(),
        ]
    };

    let via_env = dir.path().join("via_env");
    run_ok(bin().env("CPD_SEED", "9").args(args(&via_env)));

    let via_flag = dir.path().join("via_flag");
    let mut flag_args = args(&via_flag);
    flag_args.extend(["--seed".into(), "9".into()]);
    run_ok(bin().args(&flag_args));
    assert_trees_equal(&via_env, &via_flag);

    // The flag wins over a conflicting environment value.
    let flag_beats_env = dir.path().join("flag_beats_env");
    let mut both_args = args(&flag_beats_env);
    both_args.extend(["--seed".into(), "9".into()]);
    run_ok(bin().env("CPD_SEED", "1").args(&both_args));
    assert_trees_equal(&via_flag, &flag_beats_env);

    // With neither given, the seed falls back to zero.
    let unseeded = dir.path().join("unseeded");
    run_ok(bin().args(args(&unseeded)));
    let zero = dir.path().join("zero");
    let mut zero_args = args(&zero);
    zero_args.extend(["--seed".into(), "0".into()]);
    run_ok(bin().args(&zero_args));
    assert_trees_equal(&unseeded, &zero);
}
