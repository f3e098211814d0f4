#!/usr/bin/env python3
"""Smoke test for the touchmap Python extension.

Build and stage the module first:

    cargo build -p touchmap-py --release
    cp target/release/libtouchmap.so python/touchmap.so

then run `python3 python/smoke_test.py`.
"""

import json
import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import touchmap  # noqa: E402


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    # Sequence construction and round trip.
    seq = touchmap.FrameSequence.synth("stroke", seed=7)
    assert seq.rows == 8 and seq.cols == 12 and seq.num_frames == 40
    assert seq.sample_rate == 20.0
    mean, stdev, count = seq.stats()
    assert count == 8 * 12 * 40 and stdev > 0.0
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "stroke.csv")
        seq.save(path)
        reloaded = touchmap.FrameSequence.load(path)
        assert reloaded.num_frames == seq.num_frames
        m2, s2, c2 = reloaded.stats()
        approx(m2, mean, 1e-12)
        approx(s2, stdev, 1e-12)

        # Staged operations.
        detections = touchmap.detect(seq)
        assert len(detections) > 0
        t, x, y, value, prob = detections[0]
        assert 0.0 < prob < 0.98

        trajectories = touchmap.track(detections)
        assert len(trajectories) == 1
        points = trajectories[0]["points"]
        assert len(points) == 40
        times = [p[0] for p in points]
        assert times == list(range(40)), "trajectory must be frame-consecutive"

        # Workspace restriction on the tracked result.
        selection = touchmap.map_workspaces(seq, trajectories)
        assert selection["chosen"] == [0]
        assert len(selection["assignments"]) == 40

        # Full in-memory chain.
        result = touchmap.process(seq)
        sig = result["signal"]
        assert sig["rows"] == 2 and sig["cols"] == 4
        assert len(sig["channels"]) == 8
        assert all(0.0 <= v <= 1.0 for ch in sig["channels"] for v in ch)
        assert result["selection"]["chosen"] == [0]

        # File-based pipeline matches the CLI artifact layout and is
        # reproducible byte for byte.
        out_a = os.path.join(tmp, "a")
        out_b = os.path.join(tmp, "b")
        summary_a = touchmap.run_pipeline(path, out_a)
        summary_b = touchmap.run_pipeline(path, out_b)
        assert summary_a["chosen"] == 1
        for key in ("detections_csv", "trajectories_csv", "selection_json", "signal_csv"):
            with open(summary_a["artifacts"][key], "rb") as fa, open(
                summary_b["artifacts"][key], "rb"
            ) as fb:
                assert fa.read() == fb.read(), f"{key} differs between runs"

        # Config knobs reach the pipeline.
        config = json.loads(touchmap.default_config_json())
        assert config["detection"]["sigma_k"] == 1.25
        assert config["tracking"]["entry_cost"] == 8.0
        config["tracking"]["entry_cost"] = 100.0  # nothing is worth tracking
        strict = touchmap.process(seq, json.dumps(config))
        assert strict["trajectories"] == []

    # The probability map's CDF.
    approx(touchmap.normal_cdf(0.0), 0.5, 1e-15)
    approx(touchmap.normal_cdf(1.25), 0.8943502263331448, 1e-12)
    approx(touchmap.normal_cdf(-1.25) * 0.98, 0.10353677819351815, 1e-12)
    assert touchmap.normal_cdf(5.0) > 1.0 - 3e-7
    assert math.isclose(
        touchmap.normal_cdf(1.0) + touchmap.normal_cdf(-1.0), 1.0, abs_tol=1e-15
    )

    print("touchmap python smoke test: PASS")


if __name__ == "__main__":
    main()
