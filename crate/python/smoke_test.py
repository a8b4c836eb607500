"""Smoke test for the `bmech` extension. Run with pytest or directly."""

import json
import math

import bmech

FREE = {"name": "free", "dim": 1, "lagrangian": "0.5*m*v1^2",
        "parameters": {"m": 1}, "domain": [{"min": -8, "max": 8}]}
OSC = {"name": "osc", "dim": 1, "lagrangian": "0.5*m*v1^2 - 0.5*m*w^2*x1^2",
       "parameters": {"m": 1, "w": 1}, "domain": [{"min": -8, "max": 8}]}


def test_parse_roundtrip():
    s = bmech.System(json.dumps(FREE))
    assert s.name == "free" and s.dim == 1
    again = bmech.System(s.to_json())
    assert again.to_json() == s.to_json()
    assert s.lagrangian([0.0], [2.0]) == 2.0


def test_free_particle():
    r = bmech.System(json.dumps(FREE)).classical([0.0], [1.0], 2.0, slices=8)
    # S = (x_f - x_i)^2 / 2T, g_if = -T
    assert abs(r["action"] - 0.25) < 1e-12
    assert abs(r["p_f"][0] - 0.5) < 1e-12
    assert abs(r["g_if"][0][0] + 2.0) < 1e-10
    assert len(r["trajectory"]) == 9


def test_oscillator_action_and_caustic():
    s = bmech.System(json.dumps(OSC))
    t, a, b = 1.0, 0.3, 0.7
    exact = ((a * a + b * b) * math.cos(t) - 2 * a * b) / (2 * math.sin(t))
    r = s.classical([a], [b], t, slices=400)
    assert abs(r["action"] - exact) < 1e-5
    try:
        s.classical([a], [b], math.pi)
    except bmech.NumericalError as e:
        assert "SingularHessian" in str(e)
    else:
        raise AssertionError("caustic not detected")


def test_brackets_and_errors():
    s = bmech.System(json.dumps(OSC))
    r = s.brackets([0.5, 0.3], "x1", "x2", t_f=1.2)
    assert abs(r["covariant"] - math.sin(1.2)) < 1e-4
    assert r["boundary"] == 0.0
    for bad in (lambda: bmech.System("{"), lambda: s.brackets([0.5, 0.3], "x1", "q9")):
        try:
            bad()
        except bmech.BmechError:
            pass
        else:
            raise AssertionError("expected BmechError")


def test_propagator_is_unitary():
    pts, k = bmech.System(json.dumps(OSC)).propagator(1.0, points=48, method="trotter", slices=32)
    h = pts[1][0] - pts[0][0]
    n = len(pts)
    for i in (0, n // 2):
        for j in (0, n // 2):
            dot = sum(k[r][i].conjugate() * k[r][j] for r in range(n)) * h * h
            assert abs(dot - (1.0 if i == j else 0.0)) < 1e-9


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_"):
            fn()
            print("ok", name)
