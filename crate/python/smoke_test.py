#!/usr/bin/env python3
"""Smoke test for the rill_py extension module.

Build the extension first, then run this script:

    cargo build -p rill-py
    python3 python/smoke_test.py
"""

import shutil
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent


def import_rill_py():
    """Copies the built cdylib next to a temp dir under its import name."""
    candidates = [
        REPO_ROOT / "target" / "release" / "librill_py.so",
        REPO_ROOT / "target" / "debug" / "librill_py.so",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("librill_py.so not found; run `cargo build -p rill-py` first")
    stage = Path(tempfile.mkdtemp(prefix="rill_py_"))
    shutil.copy2(built, stage / "rill_py.so")
    sys.path.insert(0, str(stage))
    import rill_py

    return rill_py


def main():
    rill = import_rill_py()

    # Tag codec: the 32-bit shift layout and its inverse.
    assert rill.encode_tag(0, 0, 0, 0) == 0
    assert rill.encode_tag(1, 2, 3, 4) == 16909060
    assert rill.encode_tag(255, 255, 255, 255) == 4294967295
    assert rill.decode_tag(16909060) == (1, 2, 3, 4)
    assert rill.decode_tag(258) == (0, 0, 1, 2)

    # Tumbling windows are half-open.
    assert rill.window_id(0, 10_000) == 0
    assert rill.window_id(9_999, 10_000) == 0
    assert rill.window_id(10_000, 10_000) == 1
    assert rill.window_id(25_000, 10_000) == 2

    # Wire frame: 17-byte empty data frame, 28-byte event block,
    # lossless round trip.
    tag = rill.encode_tag(1, 2, 3, 4)
    empty = rill.serialize_message(tag, "data", events=[])
    assert len(empty) == 17, len(empty)
    one = rill.serialize_message(tag, "data", events=[(7, 9, 100, b"")])
    assert len(one) == 17 + 28, len(one)
    back = rill.deserialize_message(one)
    assert back["tag"] == tag and back["kind"] == "data"
    assert back["events"] == [(7, 9, 100, b"")]
    marker = rill.deserialize_message(rill.serialize_message(tag, "window_marker", window_id=42))
    assert marker["window_id"] == 42 and marker["events"] == []

    # A tiny two-rank benchmark run; unpaced, so it finishes immediately.
    summary = rill.run_workload(
        "ysb",
        world_size=2,
        rate=2_000,
        duration_s=1,
        window_ms=500,
        seed=7,
        paced=False,
        include_records=True,
    )
    assert summary["clean_shutdown"], summary
    assert summary["events_processed"] == 2_000
    assert summary["events_dropped"] == 0
    assert summary["windows_processed"] == len(summary["records"]) > 0
    total_views = sum(r["value"] for r in summary["records"])
    assert 0 < total_views < 2_000  # roughly a third of the events are views

    # Same seed, same results; pipelining changes nothing but the path.
    def canonical(s):
        return sorted(
            (r["window_id"], r["key"], r["value"], r["event_time_ms"]) for r in s["records"]
        )

    again = rill.run_workload(
        "ysb", world_size=2, rate=2_000, duration_s=1, window_ms=500, seed=7,
        paced=False, include_records=True,
    )
    piped = rill.run_workload(
        "ysb", world_size=2, rate=2_000, duration_s=1, window_ms=500, seed=7,
        paced=False, pipelining=True, include_records=True,
    )
    assert canonical(summary) == canonical(again) == canonical(piped)

    # Knee detection over a synthetic latency curve.
    knee = rill.find_knee(
        [1_000, 2_000, 3_000, 4_000, 5_000],
        [100.0, 105.0, 98.0, 110.0, 2_000.0],
    )
    assert knee["outcome"] == "knee"
    assert knee["sustainable"] == 4_000 and knee["knee_rate"] == 5_000

    flat = rill.find_knee([1_000, 2_000], [100.0, 120.0])
    assert flat["outcome"] == "exhausted" and flat["sustainable"] == 2_000

    print("rill_py smoke test: all checks passed")


if __name__ == "__main__":
    main()
