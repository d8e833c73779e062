"""Smoke tests for the python bindings: geometry check, a small solve,
Monte Carlo estimates, the reduction pipeline and the reflection map."""

import json
import math
import sys

import _conectl as cc

CONST_SPEC = json.dumps({
    "X": {"dim": 1, "generators": [[1.0]], "facet_normals": [[1.0]]},
    "Y": {"dim": 1, "generators": [[1.0]], "facet_normals": [[1.0]]},
    "G": [[1.0]],
    "b": [0.0],
    "Sigma": [[1.0]],
    "beta": 1.0,
    "running_cost": {"form": "constant", "c": 1.0, "m_ell": 0.0,
                     "growth_constants": [0.5, 1.0, 0.5]},
    "push_cost": {"form": "zero"},
})

DRIFT_SPEC = json.dumps({
    "X": {"dim": 1, "generators": [[1.0]], "facet_normals": [[1.0]]},
    "Y": {"dim": 1, "generators": [[1.0]], "facet_normals": [[1.0]]},
    "G": [[1.0]],
    "b": [1.0],
    "Sigma": [[0.0]],
    "beta": 1.0,
    "running_cost": {"form": "linear", "w": [1.0], "c": 1.0, "m_ell": 1.0,
                     "growth_constants": [1.0, 1.0, 1.0]},
    "push_cost": {"form": "zero"},
})

BCP = json.dumps({
    "R": [[1, 0], [0, 1]],
    "K": [[1, 1]],
    "cost": [1, 2],
    "h": [1],
    "b": [0, 0],
    "Sigma": [[1, 0], [0, 1]],
    "z": [0, 0],
    "beta": 1.0,
})


def test_validate():
    spec = cc.Problem.from_json(CONST_SPEC)
    rep = cc.validate(spec)
    assert abs(rep["a0"] - 1.0) < 1e-12, rep
    assert abs(rep["u0_hat"][0] - 1.0) < 1e-12
    assert len(rep["warnings"]) == 1  # push-cost caveat


def test_solve_and_residual():
    spec = cc.Problem.from_json(CONST_SPEC)
    field = cc.solve(spec, r=4.0, mesh=0.02)
    values = field.values()
    assert max(abs(v - 1.0) for v in values) < 1e-6
    assert abs(field.at([0.37]) - 1.0) < 1e-6
    rep = cc.residual(spec, field)
    assert rep["interior_sub_worst"] <= 1e-7
    assert rep["interior_super_worst"] >= -1e-7

    flat = cc.constant_field(spec, 4.0, 0.02, 1.5)
    rep2 = cc.residual(spec, flat)
    assert rep2["interior_sub_worst"] > 1e-7  # too-large constant fails


def test_estimate():
    spec = cc.Problem.from_json(DRIFT_SPEC)
    est = cc.estimate_value(spec, [1.0], policy="null", n_paths=50, dt=1e-3, seed=3)
    assert abs(est["mean"] - 3.0) < 1e-3, est


def test_dpp():
    spec = cc.Problem.from_json(CONST_SPEC)
    field = cc.solve(spec, r=4.0, mesh=0.02)
    res = cc.dpp_check(spec, [0.5], "reflect", field, eps=0.5, t=1.0,
                       n_paths=100, dt=1e-3, seed=5)
    assert abs(res["gap"]) < 1e-6, res


def test_reduce():
    out = cc.reduce_bcp(BCP)
    assert out["k"] == 1 and out["q"] == 1
    assert out["mr_gk_residual"] <= 1e-10
    wl = json.loads(out["workload_json"])
    inv = 1.0 / math.sqrt(2.0)
    assert abs(wl["M"][0][0] - inv) < 1e-10
    assert abs(wl["G"][0][0] - inv) < 1e-10
    ec = cc.effective_cost(BCP, [1.0])
    assert abs(ec["value"] - math.sqrt(2.0)) < 1e-10


def test_reflection():
    spec = cc.Problem.from_json(CONST_SPEC)
    times = [0.1 * i for i in range(21)]
    z = [[-t] for t in times]
    out = cc.reflect_path(spec, times, z)
    for t, xs, v in zip(times, out["x"], out["v"]):
        assert abs(xs[0]) < 1e-12
        assert abs(v - t) < 1e-12


def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for t in tests:
        t()
        print(f"ok {t.__name__}")
    print(f"{len(tests)} smoke tests passed")


if __name__ == "__main__":
    sys.exit(main())
