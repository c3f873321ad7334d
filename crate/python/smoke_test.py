"""Smoke test for the pyweakkam extension.

Build and install first, e.g.
    maturin build --release -m crates/python/Cargo.toml -o dist && pip install dist/pyweakkam-*.whl
"""

import json
import math
import tempfile

import pyweakkam as wk


def check_model():
    pend = wk.Model.builtin("pendulum")
    assert pend.dim == 1
    # H = ½p² + cos(2πθ) − 3/2
    assert abs(pend.hamiltonian([0.25], [1.0]) - (0.5 - 1.5)) < 1e-12
    p = pend.legendre([0.1], [0.7])
    assert abs(p[0] - 0.7) < 1e-12
    again = wk.Model.from_json(pend.to_json())
    assert again.hamiltonian([0.3], [0.2]) == pend.hamiltonian([0.3], [0.2])
    try:
        wk.Model.builtin("nope")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown model accepted")


def check_alpha():
    flat = wk.Model.builtin("flat")
    table = wk.alpha_table(flat, w_box=1.0, res=5, grid=32, step=0.1)
    assert len(table) == 25
    worst = max(abs(a - 0.5 * (w[0] ** 2 + w[1] ** 2)) for w, a in table)
    assert worst <= 2e-2, worst


def check_barrier():
    out = wk.barrier(wk.Model.builtin("pendulum"), grid=64, step=0.1)
    assert abs(out["alpha"] + 0.5) < 1e-2
    assert [0.0] in out["aubry"]
    assert len(out["h"]) == 64


def check_flow_and_green():
    pend = wk.Model.builtin("pendulum")
    x, p, err = wk.flow(pend, [0.1], [0.3], 2.0)
    assert err < 1e-7
    plus, minus = wk.green(pend, [0.0], [0.0])
    assert abs(plus[0][0] - 2 * math.pi) < 1e-3
    assert abs(minus[0][0] + 2 * math.pi) < 1e-3


def check_orbit():
    prod = wk.Model.builtin("pendulum-product")
    orbit = wk.periodic_orbit(prod, [0.01, 0.02], [0.01, 1.0], period=1.0)
    assert orbit["residual"] < 1e-9
    assert orbit["kind"] == "Hyperbolic"
    mods = sorted(math.hypot(re, im) for re, im in orbit["floquet"])
    assert abs(mods[-1] / math.exp(2 * math.pi) - 1) < 1e-4


def check_run():
    with tempfile.TemporaryDirectory() as tmp:
        cfg = wk.Config(json.dumps({"grid": 16, "w_res": 3, "output": tmp + "/alpha"}))
        cfg.validate()
        out = wk.run("alpha", cfg)
        assert out["code"] == 0, out["lines"]
        bad = wk.Config(json.dumps({"grid": 24}))
        try:
            bad.validate()
        except ValueError as e:
            assert "grid" in str(e)
        else:
            raise AssertionError("grid 24 accepted")
        assert wk.run("barrier", bad)["code"] == 1


def check_selftest_rows():
    rows = wk.run_selftest([2, 7], seed=1)
    assert all(r["passed"] for r in rows), rows


if __name__ == "__main__":
    for check in [check_model, check_alpha, check_barrier, check_flow_and_green, check_orbit, check_run, check_selftest_rows]:
        check()
        print(f"ok {check.__name__}")
    print("smoke test passed")
