import math
import os
from pathlib import Path

import numpy as np
import pytest

import degbill

ROOT = Path(os.environ.get("DEGBILL_SOURCE_DIR", Path(__file__).resolve().parents[2]))
SCENARIOS = ROOT / "scenarios"


def test_torus_rotation_vector_action():
    o = degbill.connect_free([0.0, 0.0], [0.0, 0.0], 0.5, periods=[1.0, 1.0], winding=[3, 4])
    assert abs(o["action"] - 5.0) <= 1e-9
    assert np.allclose(o["p_minus"], [0.6, 0.8])


def test_reflection_conserves_energy():
    rng = np.random.default_rng(3)
    mass = np.diag([1.0, 2.0, 3.0])
    for _ in range(100):
        p, n = rng.normal(size=3), rng.normal(size=3)
        pp = degbill.reflect(p, n, mass)
        inv = np.linalg.inv(mass)
        assert abs(pp @ inv @ pp - p @ inv @ p) <= 1e-12 * (p @ inv @ p)
        dp = pp - p
        assert np.linalg.norm(dp - (dp @ n) / (n @ n) * n) <= 1e-10 * np.linalg.norm(dp)


def test_kepler_equation():
    e_anom = degbill.solve_kepler(1.0, 0.3)
    assert abs(e_anom - 0.3 * math.sin(e_anom) - 1.0) <= 1e-14


def test_kepler_J_scaling_and_errors():
    a, b = [0.7, 0.2], [-0.3, 0.9]
    j1 = degbill.kepler_J(1, -0.5, a, b)
    j2 = degbill.kepler_J(2, -0.5, a, b)
    full = 2 * math.pi  # full ellipse action at h = -1/2
    assert j2 - j1 == pytest.approx(full, rel=1e-12)
    with pytest.raises(degbill.DomainError):
        degbill.kepler_J(0, -0.5, a, b)


def test_three_body_split_is_feasible():
    r = degbill.three_body_lagrangian(2, 3, [0.7, 0.2], [-0.3, 0.9], 0.4, 0.6, -0.5)
    assert 0.4 * r["h1"] + 0.6 * r["h2"] == pytest.approx(-0.5, abs=1e-12)
    assert r["time"] > 0


def test_symbolic_counts():
    full = [[0, 1, 2]] * 3
    assert degbill.entropy(full) == pytest.approx(math.log(3), abs=1e-10)
    assert degbill.path_count(full, 12) == 3**13
    assert degbill.path_count(full, 79) == 3**80
    with pytest.raises(degbill.DomainError):
        degbill.path_count(full, 80)


def test_variational_check_on_shipped_chain():
    r = degbill.variational_check(str(SCENARIOS / "two_balls_box.json"))
    assert r["unknowns"] == 10
    assert r["gradient_error"] <= 1e-5
    assert r["hessian_error"] <= 1e-4
    assert r["band_violation"] == 0.0


def test_run_scenario(tmp_path):
    rep = degbill.run_scenario(str(SCENARIOS / "kepler_table.json"), out=str(tmp_path), jobs=2)
    assert rep["ok"]
    assert rep["gates"]
    assert "report.json" in rep["files"]


def test_bad_scenario_raises(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "x", "energgy": 1}')
    with pytest.raises(degbill.ScenarioError):
        degbill.run_scenario(str(bad), out=str(tmp_path))
