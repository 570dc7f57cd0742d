"""Smoke test for the banach_vi extension module.

Build and install first:  pip install --no-build-isolation ./crates/python
"""

import math
import pathlib
import tempfile

import banach_vi as bv

ROOT = pathlib.Path(__file__).resolve().parent.parent


def close(a, b, tol):
    return abs(a - b) <= tol


def test_space():
    s = bv.Space(3, 3.0)
    assert (s.q, s.d_q) == (2.0, 2.0)
    x = [1.0, -2.0, 0.5]
    n = s.norm(x)
    assert close(n, sum(abs(v) ** 3 for v in x) ** (1 / 3), 1e-12)
    jx = s.duality_map(x)
    assert close(s.dual_pair(jx, x), n * n, 1e-12)
    h = bv.Space.hilbert(2)
    assert h.duality_map([3.0, 4.0]) == [3.0, 4.0]


def test_operators():
    s = bv.Space.hilbert(2)
    t = bv.Operator.diagonal([1.0, -0.5]).with_strictness(1.0 / 3.0)
    assert t.apply([2.0, 2.0], s) == [2.0, -1.0]
    anchor, basis = t.fixed_set(2)
    assert anchor == [0.0, 0.0] and len(basis) == 1
    avg = bv.averaged(t, 0.5, s)
    assert avg.apply([0.0, 2.0], s) == [0.0, 0.5]
    u = bv.Operator.diagonal([1.0, 0.0]).with_strictness(0.5)
    comb = bv.convex_combination([t, u], [0.5, 0.5])
    assert comb.apply([2.0, 4.0], s) == [2.0, -1.0]
    rep = bv.certify_operator(t, "strict-pseudocontraction", 1.0 / 3.0, s, seed=1, count=200)
    assert rep["passed"], rep


def test_canonical_run():
    p = bv.Problem.canonical()
    g = bv.Gains(1.0, 1.0, 0.1, 1.0, 1.0, 2.0, 1.0)
    assert close(g.tau, 0.5, 1e-15)
    ref = bv.solve_vi(p, g)
    assert close(ref["x_star"][0], 1.0 / 0.9, 1e-12) and abs(ref["x_star"][1]) < 1e-12
    beta = {"family": "constant", "b": 0.5}
    trace = bv.run(p, g, [5.0, 5.0], beta=beta, max_iter=20_000, cadence=1000)
    last = trace["records"][-1]
    assert trace["status"] in ("converged", "max_iter")
    assert last["n"] == 20_000
    assert last["dist_to_oracle"] < 1e-2
    assert math.isfinite(bv.vi_residual(ref["x_star"], p, g))


def test_scenario():
    with tempfile.TemporaryDirectory() as out:
        sc = bv.Scenario.from_file(str(ROOT / "scenarios" / "canonical.toml"), out=out, max_iter=2000)
        assert sc.runs and sc.gains.tau > 0
        assert bv.Scenario.from_str(sc.to_toml(), out=out).name == sc.name
        assert sc.certify()["passed"]
        summaries = sc.run()
        assert len(summaries) == len(sc.runs)
        assert all(s["iterations"] == 2000 for s in summaries)
        assert any(pathlib.Path(out).glob("*.summary.json"))
    try:
        bv.Scenario.from_str("[gains]\nnu = 1.0\n")
    except ValueError as e:
        assert "nu" in str(e)
    else:
        raise AssertionError("unknown key accepted")


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            fn()
            print(f"ok {name}")
