"""Smoke test for the s2osc_py extension module.

Build it first, e.g. ``pip install --no-build-isolation -e crates/python``,
then run ``python python/smoke_test.py`` from the repository root.
"""

import json
import math
import tempfile

import s2osc_py


def check_softmax_t():
    out = s2osc_py.softmax_t([0.9, 0.1], 3.0)
    assert abs(out[0] - 0.6753) < 1e-3 and abs(out[1] - 0.3247) < 1e-3, out
    same = s2osc_py.softmax_t([0.2, 0.3, 0.5], 1.0)
    assert all(abs(a - b) < 1e-12 for a, b in zip(same, [0.2, 0.3, 0.5]))


def check_filter_and_metrics():
    assert abs(s2osc_py.prediction_entropy([0.5, 0.5]) - math.log(2)) < 1e-12
    assert s2osc_py.select_filtered({1: 0.5, 2: 2.0, 3: 2.0, 4: 0.1}, 2) == [2, 3]
    m = s2osc_py.classification_metrics([0, 0, 1, 1], [0, 1, 1, 1])
    assert m["accuracy"] == 0.75
    assert s2osc_py.f_out([True, False], [True, True]) == 2 / 3
    assert abs(s2osc_py.forgetting([0.8, 0.6], 1.0) - 0.3) < 1e-12


def check_kmeans():
    pts = [[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.1, 10.0]]
    labels, centroids, history = s2osc_py.kmeans(pts, 2, seed=3)
    assert labels[0] == labels[1] != labels[2] == labels[3]
    assert len(centroids) == 2
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))


def check_tiny_run():
    with tempfile.TemporaryDirectory() as out:
        overrides = [
            f'output_dir="{out}"',
            'dataset="synthetic"',
            "synthetic_classes=4",
            "synthetic_per_class=30",
            'arch="mlp"',
            "f_epochs=2",
            "g_epochs=2",
            "k=10",
        ]
        report = json.loads(s2osc_py.run_experiment("", overrides))
        assert report["protocol"] == "osc"
        assert 0.0 <= report["summary"]["accuracy"] <= 1.0
    try:
        s2osc_py.run_experiment("", ["k=0"])
    except RuntimeError as e:
        assert json.loads(str(e))["stage"] == "config"
    else:
        raise AssertionError("k=0 should be rejected")


if __name__ == "__main__":
    assert "seed" in s2osc_py.default_config()
    check_softmax_t()
    check_filter_and_metrics()
    check_kmeans()
    check_tiny_run()
    print("python smoke test passed")
