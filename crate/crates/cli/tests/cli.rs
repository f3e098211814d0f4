//! End-to-end CLI checks through the real binary: exit codes, stage
//! chaining, and artifact reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn touchmap(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_touchmap"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn pipeline_runs_on_synth_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = touchmap(
        &[
            "synth",
            "--kind",
            "stroke",
            "--out",
            "stroke.csv",
            "--seed",
            "7",
        ],
        dir.path(),
    );
    assert_code(&out, 0);

    let out = touchmap(
        &[
            "pipeline",
            "--input",
            "stroke.csv",
            "--out-dir",
            "run",
            "--stage-dump",
        ],
        dir.path(),
    );
    assert_code(&out, 0);
    for artifact in [
        "run/detections.csv",
        "run/trajectories.csv",
        "run/selection.json",
        "run/signal.csv",
        "run/effective_config.json",
    ] {
        assert!(dir.path().join(artifact).exists(), "{artifact} missing");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("trajectories: 1"), "summary: {stdout}");
}

#[test]
fn stage_chain_matches_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    assert_code(
        &touchmap(
            &["synth", "--kind", "hold", "--out", "hold.csv"],
            dir.path(),
        ),
        0,
    );
    assert_code(
        &touchmap(
            &["pipeline", "--input", "hold.csv", "--out-dir", "whole"],
            dir.path(),
        ),
        0,
    );
    assert_code(
        &touchmap(
            &["detect", "--input", "hold.csv", "--out", "dets.csv"],
            dir.path(),
        ),
        0,
    );
    assert_code(
        &touchmap(
            &["track", "--input", "dets.csv", "--out", "trajs.csv"],
            dir.path(),
        ),
        0,
    );
    assert_code(
        &touchmap(
            &[
                "map",
                "--input",
                "trajs.csv",
                "--frames",
                "hold.csv",
                "--out",
                "sel.json",
            ],
            dir.path(),
        ),
        0,
    );
    assert_code(
        &touchmap(
            &[
                "render",
                "--selection",
                "sel.json",
                "--trajectories",
                "trajs.csv",
                "--frames",
                "hold.csv",
                "--out",
                "sig.csv",
            ],
            dir.path(),
        ),
        0,
    );

    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("whole/detections.csv"), read("dets.csv"));
    assert_eq!(read("whole/trajectories.csv"), read("trajs.csv"));
    assert_eq!(read("whole/selection.json"), read("sel.json"));
    assert_eq!(read("whole/signal.csv"), read("sig.csv"));
}

#[test]
fn plot_produces_svg_for_each_artifact() {
    let dir = tempfile::tempdir().unwrap();
    assert_code(
        &touchmap(&["synth", "--kind", "stroke", "--out", "s.csv"], dir.path()),
        0,
    );
    assert_code(
        &touchmap(
            &["pipeline", "--input", "s.csv", "--out-dir", "run"],
            dir.path(),
        ),
        0,
    );
    for (artifact, svg) in [
        ("s.csv", "frames.svg"),
        ("run/detections.csv", "dets.svg"),
        ("run/trajectories.csv", "trajs.svg"),
        ("run/selection.json", "sel.svg"),
        ("run/signal.csv", "sig.svg"),
    ] {
        let out = touchmap(&["plot", "--input", artifact, "--out", svg], dir.path());
        assert_code(&out, 0);
        let text = std::fs::read_to_string(dir.path().join(svg)).unwrap();
        assert!(text.starts_with("<svg"), "{svg} is not svg");
    }
    // Trajectory plot carries one polyline per trajectory.
    let trajs_svg = std::fs::read_to_string(dir.path().join("trajs.svg")).unwrap();
    assert_eq!(trajs_svg.matches("<polyline").count(), 1);
    // Selection plot shows all eight circles.
    let sel_svg = std::fs::read_to_string(dir.path().join("sel.svg")).unwrap();
    assert_eq!(sel_svg.matches("<circle").count(), 8);
}

#[test]
fn exit_code_2_for_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"render": {"cutoff": 11.0}}"#,
    )
    .unwrap();
    std::fs::write(dir.path().join("unknown.json"), r#"{"nope": 1}"#).unwrap();
    assert_code(
        &touchmap(
            &["pipeline", "--config", "bad.json", "--input", "x.csv"],
            dir.path(),
        ),
        2,
    );
    assert_code(
        &touchmap(
            &["pipeline", "--config", "unknown.json", "--input", "x.csv"],
            dir.path(),
        ),
        2,
    );
}

#[test]
fn exit_code_3_for_missing_or_malformed_input() {
    let dir = tempfile::tempdir().unwrap();
    assert_code(
        &touchmap(&["pipeline", "--input", "absent.csv"], dir.path()),
        3,
    );
    std::fs::write(
        dir.path().join("masked.csv"),
        "#layout a 2 1\n#layout b 1 1\n#pitch 25.4\n#rate 20\n0,0,0,0\n0,1,0,1\n0,0,1,2\n0,1,1,9\n",
    )
    .unwrap();
    assert_code(
        &touchmap(&["pipeline", "--input", "masked.csv"], dir.path()),
        3,
    );
}

#[test]
fn exit_code_4_for_all_zero_input() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("#layout grid 2 2\n#pitch 25.4\n#rate 20\n");
    for t in 0..6 {
        for r in 0..2 {
            for c in 0..2 {
                text.push_str(&format!("{t},{r},{c},0\n"));
            }
        }
    }
    std::fs::write(dir.path().join("zero.csv"), text).unwrap();
    assert_code(
        &touchmap(&["pipeline", "--input", "zero.csv"], dir.path()),
        4,
    );
}

#[test]
fn pipeline_is_bit_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    assert_code(
        &touchmap(
            &[
                "synth", "--kind", "squeeze", "--out", "s.csv", "--seed", "3",
            ],
            dir.path(),
        ),
        0,
    );
    assert_code(
        &touchmap(
            &["pipeline", "--input", "s.csv", "--out-dir", "a"],
            dir.path(),
        ),
        0,
    );
    assert_code(
        &touchmap(
            &["pipeline", "--input", "s.csv", "--out-dir", "b"],
            dir.path(),
        ),
        0,
    );
    for f in [
        "detections.csv",
        "trajectories.csv",
        "selection.json",
        "signal.csv",
    ] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between runs");
    }
}

#[test]
fn effective_config_round_trip_reproduces_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    assert_code(
        &touchmap(&["synth", "--kind", "tap", "--out", "t.csv"], dir.path()),
        0,
    );
    assert_code(
        &touchmap(
            &[
                "pipeline",
                "--input",
                "t.csv",
                "--out-dir",
                "first",
                "--stage-dump",
            ],
            dir.path(),
        ),
        0,
    );
    // Re-run from the dumped effective config, overriding only out_dir.
    assert_code(
        &touchmap(
            &[
                "pipeline",
                "--config",
                "first/effective_config.json",
                "--input",
                "t.csv",
                "--out-dir",
                "second",
            ],
            dir.path(),
        ),
        0,
    );
    for f in [
        "detections.csv",
        "trajectories.csv",
        "selection.json",
        "signal.csv",
    ] {
        let a = std::fs::read(dir.path().join("first").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("second").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs after config round trip");
    }
}
