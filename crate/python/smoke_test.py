"""Smoke test for the pytscv extension module."""

import json
import math

import pytscv


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b}"


def main():
    z = pytscv.TimeScale.integers(0, 3)
    assert len(z) == 4
    assert [z.mu(i) for i in range(4)] == [1.0, 1.0, 1.0, 0.0]
    close(z.integrate([2 * t + 1 for t in z.points]), 9.0, 0.0)

    q = pytscv.TimeScale.qgrid(2.0, 0, 2, include_zero=True)
    assert q.points == [0.0, 1.0, 2.0, 4.0]
    close(q.integrate([2 * t * t for t in q.points]), 18.0, 0.0)

    e = pytscv.Expr("sqrt(1+v^2) + 2*(z-1)^2")
    close(e.diff("v").eval(v=0.75), 0.6, 1e-15)
    close(e.diff("z").eval(z=0.5), -2.0, 1e-15)
    assert sorted(e.variables()) == ["v", "z"]

    p = pytscv.ControlProblem(z, "u^2 + t^2*(z-1)^2", "u", 0.0)
    s = pytscv.solve_control(p)
    assert s.converged
    for t, x in zip(s.t, s.x):
        close(x, 5 * t / 16, 1e-10)
    assert s.lam[-1] is None
    close(s.lam[0], -0.625, 1e-10)
    assert s.verdict == p.sufficiency_check()
    assert s.verdict.startswith("sufficient")
    assert json.loads(s.to_json())["converged"]

    oracle = pytscv.brute_force_oracle(pytscv.ControlProblem(q, "u^2 + t^2*(z-1)^2", "u", 0.0))
    close(oracle.slope(), 9 / 37, 1e-12)

    beta = 2.0
    v = pytscv.VariationalProblem(pytscv.TimeScale.uniform(0.0, 1.0, 200), f"sqrt(1+v^2) + {beta}*(z-1)^2", 0.0)
    s = pytscv.solve_variational(v)
    a = s.slope()
    close(a / math.sqrt(1 + a * a) + 2 * beta * (a - 1), 0.0, 1e-9)
    close(v.transversality_residual(s.x), 0.0, 1e-8)
    close(v.gradient(s.x)[-1], v.transversality_residual(s.x), 1e-12)

    newton = pytscv.solve_stationarity(v, [0.0] * 201)
    close(newton.slope(), a, 1e-8)

    try:
        pytscv.Expr("x + beta")
    except ValueError as err:
        assert "beta" in str(err)
    else:
        raise AssertionError("unknown identifier accepted")

    print("pytscv smoke test passed")


if __name__ == "__main__":
    main()
