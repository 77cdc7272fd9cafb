import json
import math

import pytest

import blowuplab


def test_constants():
    assert blowuplab.sphere_area(3) == pytest.approx(4.0 * math.pi, rel=1e-15)
    assert blowuplab.gram_constant(2) == pytest.approx(math.pi / 8.0, rel=1e-15)
    assert blowuplab.gram_constant(3) == pytest.approx(2.0 * math.pi / 15.0, rel=1e-15)
    assert blowuplab.kappa(2) == pytest.approx(4.0 / math.pi, rel=1e-15)
    assert blowuplab.ball_volume(2) == pytest.approx(math.pi, rel=1e-15)


def test_projection_roundtrip():
    b = [[0.3, 0.1], [0.1, -0.3]]
    nodes = blowuplab.sphere_nodes(2)
    samples = [
        0.5 * sum(x[i] * b[i][j] * x[j] for i in range(2) for j in range(2)) for x in nodes
    ]
    recovered = blowuplab.project(samples, 2)
    for i in range(2):
        for j in range(2):
            assert recovered[i][j] == pytest.approx(b[i][j], abs=1e-12)


def test_projection_rejects_wrong_sample_count():
    with pytest.raises(ValueError):
        blowuplab.project([1.0, 2.0, 3.0], 2)


def test_synthetic_moments_closed_form():
    balls = [([0.5, 0.0], 0.1)]
    data = blowuplab.synthetic_moments(balls, dimension=2, t=0.0)
    assert data["closed_form"] is True
    # integral of |x|^2 over the ball: pi rho^2 (|c|^2 + rho^2 / 2)
    assert data["mass2"] == pytest.approx(math.pi * 0.00255, rel=1e-13)
    m = data["second_moment"]
    assert m[0][0] == pytest.approx(math.pi * 0.002525, rel=1e-13)
    assert m[1][1] == pytest.approx(math.pi * 0.000025, rel=1e-13)
    assert m[0][1] == pytest.approx(0.0, abs=1e-16)

    # kappa_2 tf(M) = diag(0.005, -0.005): the pi's cancel
    v = blowuplab.center_velocity(balls, dimension=2, t=0.0)
    assert v[0][0] == pytest.approx(0.005, rel=1e-12)
    assert v[1][1] == pytest.approx(-0.005, rel=1e-12)
    assert v[0][1] == pytest.approx(0.0, abs=1e-15)


def test_run_json_pipeline(tmp_path):
    config = {
        "version": 1,
        "mode": "synth",
        "dimension": 2,
        "patches": [{"center": [0.5, 0.0], "radius": 0.1}],
        "scales": {"t_start": 0.0, "t_end": 5.0 * math.log(2.0) / 8.0, "steps": 5},
        "k_max": 2,
        "output": {"dir": str(tmp_path), "prefix": "smoke"},
    }
    result = blowuplab.run_json(json.dumps(config))
    assert result["ok"] is True
    assert "result: PASS" in result["table"]
    assert (tmp_path / "smoke-series.csv").exists()
    assert (tmp_path / "smoke-dissipation.json").exists()

    report = json.loads((tmp_path / "smoke-dissipation.json").read_text())
    assert report["schema"] == "dissipation-report-v1"
    assert report["dimension"] == 2


def test_run_json_rejects_unknown_keys():
    with pytest.raises(RuntimeError):
        blowuplab.run_json('{"version": 1, "mode": "synth", "nope": true}')
