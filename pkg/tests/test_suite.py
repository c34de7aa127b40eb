import math

import numpy as np
import pytest

from localinv.suite import (FULL_SUITE, TASKS, OracleError, bisect, get_problem, problem_names,
                            register_builtin, run_problem, self_check)


def test_bisect_oracle():
    r = bisect(lambda x: x ** 3 + x - 2.5, -4, 4)
    assert abs(r ** 3 + r - 2.5) <= 1e-14
    assert bisect(lambda x: x * x - 2, 0, 2) == pytest.approx(math.sqrt(2), abs=1e-15)


def test_registry_names_and_oracles():
    recs = register_builtin()
    assert [r.name for r in recs] == list(dict.fromkeys(r.name for r in recs))
    assert sorted(r.name for r in recs) == problem_names()
    for r in recs:
        assert self_check(r, n=50, seed=9) <= 1e-12
        assert r.describe()["name"] == r.name


def test_self_check_catches_bad_oracle():
    rec = get_problem("cubic")
    rec.oracles["inverse"] = lambda y: np.asarray(y) / 2
    with pytest.raises(OracleError):
        self_check(rec)


def test_get_problem_errors():
    with pytest.raises(KeyError):
        get_problem("nope")
    with pytest.raises(TypeError):
        get_problem("cubic", a=1.0)
    rec = get_problem("ha_weakA", a=0.5, c=2.0)
    assert rec.params == {"a": 0.5, "c": 2.0}
    assert rec.oracles["min_residual"](np.array([0.3])) == pytest.approx(0.7)


def test_ha_problem_jump():
    rec = get_problem("ha_weakA", a=0.0, c=1.0)
    f = rec.map
    assert f(np.array([0.0]))[0] == -0.5
    assert f(np.array([1e-12]))[0] == pytest.approx(0.5)


def test_linear_problems_condition_numbers():
    for k in (1, 10, 1000):
        M = get_problem(f"linear_k{k}").map.analytic_jacobian(np.zeros(2))
        s = np.linalg.svd(M, compute_uv=False)
        assert s[0] / s[-1] == pytest.approx(k, rel=1e-12)


def test_run_problem_never_raises():
    rec = get_problem("cubic")
    out = run_problem(rec, "no_such_task")
    assert len(out) == 1 and not out[0]["passed"]
    out = run_problem(get_problem("fold"), "invert", {"samples": 3})
    assert all(isinstance(c["passed"], bool) for c in out)


def test_check_records_have_required_fields():
    out = run_problem(get_problem("ha_weakA"), "certify",
                      {"targets": [0.3], "expect": "WeakA_NoFixedPoint"}, seed=42)
    (c,) = out
    assert c["passed"]
    assert set(c) >= {"name", "passed", "measured", "oracle", "tolerance", "basis"}
    assert abs(c["measured"]["min_residual"] - 0.2) <= 2e-3


def test_full_suite_entries_are_valid():
    names = set(problem_names())
    for prob, task, opts in FULL_SUITE:
        assert prob in names and task in TASKS and isinstance(opts, dict)


@pytest.mark.parametrize("prob,task,opts", [
    ("projection", "fixed_points", {}),
    ("complex_square", "discreteness", {"y": [1.0, 0.0], "expect": 2}),
    ("cubic", "segments", {}),
    ("implicit_cubic", "implicit", {"t": [1.0]}),
])
def test_selected_tasks_pass(prob, task, opts):
    out = run_problem(get_problem(prob), task, opts, seed=3)
    assert out and all(c["passed"] for c in out), [c["name"] for c in out if not c["passed"]]
