"""Named benchmark problems with independent oracles, and a task runner.

Oracles are closed forms, complex arithmetic or plain bisection; none of
them calls the solvers they are used to check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _rng
from .cert import Budgets, certify, certify_on_scales, pair_certificates, pair_tilde, build_tilde
from .fixedpoint import probe_fixed_point_set
from .implicit import (ImplicitProblem, OdeProblem, f_from_g, implicit_derivative,
                       implicit_solve, ode_defects, ode_solve, rk4)
from .inversion import (build_chart, dense_scale_check, discreteness_probe, hadamard_levy,
                        inverse_derivative, invert, numerical_inverse_derivative,
                        preimage_count, segment_nondegeneracy_probe)
from .maps import LinearMap, MapModel, inverse_jacobian_map
from .spaces import Annulus, NormedSpaceModel, ProductSpace, ball, interval, product_body
from .tolerances import DEFAULT

TAGS = ("C1_invertible", "nonsmooth_weakA", "degenerate_point", "proper_covering",
        "hadamard_levy_pass", "hadamard_levy_fail", "implicit", "ode")


def bisect(fn, lo, hi, tol=1e-15, max_iter=200):
    """Root of a scalar increasing-or-decreasing ``fn`` on ``[lo, hi]``."""
    flo = fn(lo)
    if flo == 0:
        return lo
    if flo * fn(hi) > 0:
        raise ValueError("root is not bracketed")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if fm == 0 or hi - lo <= tol * max(1.0, abs(mid)):
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True, eq=False)
class ProblemRecord:
    name: str
    tags: frozenset
    description: str
    map: Optional[MapModel] = None
    g: Optional[MapModel] = None
    base: Optional[tuple] = None               # (a, b) for implicit problems
    region: object = None                      # sampling / search region of the domain
    anchors: tuple = ()
    oracles: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def describe(self):
        return {"name": self.name, "tags": sorted(self.tags), "description": self.description,
                "params": self.params}


R1 = NormedSpaceModel(1)
R2 = NormedSpaceModel(2)


def _scalar_map(fn, dfn, name, region=None, smoothness="C1"):
    return MapModel(R1, R1, lambda x: fn(x[..., 0])[..., None],
                    None if dfn is None else (lambda x: dfn(x[..., 0])[..., None, None]),
                    region, smoothness, name)


def _identity(dim):
    sp = NormedSpaceModel(dim)
    f = MapModel(sp, sp, lambda x: x.copy(), lambda x: np.broadcast_to(np.eye(dim), x.shape + (dim,)),
                 None, "C1", f"identity_{dim}d")
    return ProblemRecord(
        f"identity_{dim}d", frozenset({"C1_invertible", "proper_covering", "hadamard_levy_pass"}),
        f"identity on R^{dim}", map=f, region=ball(sp, np.zeros(dim), 1.0),
        anchors=(np.zeros(dim), np.full(dim, 0.5)),
        oracles={"inverse": lambda y: np.asarray(y, dtype=float)})


def _rotation(deg):
    th = math.radians(deg)
    return np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])


def _linear(kappa):
    Q = _rotation(30.0)
    M = Q @ np.diag([1.0, kappa])
    # closed-form inverse: diag(1, 1/kappa) Q^T
    Minv = np.diag([1.0, 1.0 / kappa]) @ Q.T
    name = f"linear_k{int(kappa)}"
    f = MapModel(R2, R2, lambda x: x @ M.T, lambda x: np.broadcast_to(M, x.shape + (2,)),
                 None, "C1", name)
    return ProblemRecord(
        name, frozenset({"C1_invertible", "proper_covering"}),
        f"x -> Q diag(1, {kappa:g}) x with Q a 30 degree rotation (condition number {kappa:g})",
        map=f, region=ball(R2, [0.0, 0.0], 1.0),
        anchors=tuple(np.array(p) for p in ([0.0, 0.0], [0.5, -0.25], [-0.3, 0.6])),
        oracles={"inverse": lambda y: np.asarray(y, dtype=float) @ Minv.T},
        params={"condition": kappa})


def _cubic_inverse(y):
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return np.array([bisect(lambda x: x ** 3 + x - v, -abs(v) - 1.0, abs(v) + 1.0) for v in y.ravel()]
                    ).reshape(y.shape)


def _cubic():
    region = interval(-2.0, 2.0)
    f = _scalar_map(lambda x: x ** 3 + x, lambda x: 3 * x ** 2 + 1, "cubic", region)
    return ProblemRecord(
        "cubic", frozenset({"C1_invertible", "proper_covering", "hadamard_levy_pass"}),
        "x -> x^3 + x on [-2, 2]", map=f, region=region,
        anchors=tuple(np.array([v]) for v in (0.0, 1.0, -1.0)),
        oracles={"inverse": _cubic_inverse}, options={"chart_radius": 0.4})


def _cubic_pure():
    f = _scalar_map(lambda x: x ** 3, lambda x: 3 * x ** 2, "cubic_pure", interval(-2.0, 2.0))
    return ProblemRecord(
        "cubic_pure", frozenset({"degenerate_point"}),
        "x -> x^3, a homeomorphism whose derivative vanishes at 0", map=f,
        region=interval(-1.0, 1.0), anchors=(np.array([0.0]),),
        oracles={"inverse": lambda y: np.cbrt(np.asarray(y, dtype=float))})


def _fold():
    f = MapModel(R2, R2, lambda z: np.stack([z[..., 0] ** 2, z[..., 1]], -1),
                 lambda z: np.stack([np.stack([2 * z[..., 0], 0 * z[..., 0]], -1),
                                     np.stack([0 * z[..., 0], 1 + 0 * z[..., 0]], -1)], -2),
                 None, "C1", "fold")

    def inverse(y):
        y = np.asarray(y, dtype=float)
        return np.stack([np.sqrt(y[..., 0]), y[..., 1]], -1)

    return ProblemRecord(
        "fold", frozenset({"degenerate_point"}), "(x, y) -> (x^2, y), singular along x = 0",
        map=f, region=ball(R2, [0.0, 0.0], 1.0),
        anchors=(np.array([0.0, 0.0]), np.array([0.5, 0.0])),
        oracles={"inverse": inverse, "inverse_domain": lambda y: np.asarray(y)[..., 0] >= 0})


def _complex_square():
    def ev(z):
        x, y = z[..., 0], z[..., 1]
        return np.stack([x * x - y * y, 2 * x * y], -1)

    def jac(z):
        x, y = z[..., 0], z[..., 1]
        return np.stack([np.stack([2 * x, -2 * y], -1), np.stack([2 * y, 2 * x], -1)], -2)

    def roots(y):
        w = np.sqrt(complex(y[0], y[1]))
        return np.array([[w.real, w.imag], [-w.real, -w.imag]])

    f = MapModel(R2, R2, ev, jac, None, "C1", "complex_square")
    return ProblemRecord(
        "complex_square", frozenset({"proper_covering", "C1_invertible"}),
        "z -> z^2 on the annulus 0.5 <= |z| <= 2", map=f, region=Annulus(R2, [0.0, 0.0], 0.5, 2.0),
        anchors=(np.array([1.0, 0.0]), np.array([0.0, 1.5])),
        oracles={"roots": roots, "inverse": lambda y: roots(np.asarray(y, dtype=float))[0]})


def _projection():
    f = MapModel(R2, R2, lambda z: z * np.array([1.0, 0.0]),
                 lambda z: np.broadcast_to(np.diag([1.0, 0.0]), z.shape + (2,)), None, "C1",
                 "projection")
    body = product_body(interval(-1.0, 1.0), interval(-1.0, 1.0))
    return ProblemRecord(
        "projection", frozenset({"degenerate_point"}),
        "(x, y) -> (x, 0) on the square [-1, 1]^2; fixed set is the x-axis", map=f, region=body,
        oracles={"is_fixed": lambda z: np.abs(np.asarray(z)[..., 1]) == 0})


def ha_map(a=0.0, c=1.0):
    def ev(x):
        return np.where(x <= a, x - a - c / 2.0, x - a + c / 2.0)

    return _scalar_map(ev, None, f"ha(a={a:g},c={c:g})", None, "discontinuous")


def _ha(a=0.0, c=1.0):
    if not c > 0:
        raise ValueError("c must be positive")

    def inverse(y):
        y = np.asarray(y, dtype=float)
        if np.any(np.abs(y) < c / 2.0):
            raise ValueError("targets with |y| < c/2 are not attained")
        return np.where(y <= -c / 2.0, y + a + c / 2.0, y + a - c / 2.0)

    return ProblemRecord(
        "ha_weakA", frozenset({"nonsmooth_weakA"}),
        "jump map x - a -/+ c/2; the auxiliary map with A = id has no fixed point for |y| < c/2",
        map=ha_map(a, c), region=interval(a - c, a + c), anchors=(np.array([a]),),
        # |T(x) - x| is c/2 + y left of a and tends to c/2 - y from the right
        oracles={"min_residual": lambda y: c / 2.0 - abs(float(np.ravel(y)[0])), "inverse": inverse},
        params={"a": a, "c": c},
        # targets are taken around the midpoint of the one-sided limits at a
        options={"target_center": np.array([0.0]), "s": 0.49 * c, "A": [[1.0]]})


def _atan():
    f = _scalar_map(np.arctan, lambda x: 1.0 / (1.0 + x * x), "atan")

    def sampler(rng, n):
        return (rng.choice([-1.0, 1.0], n) * 10.0 ** rng.uniform(-3, 3, n))[:, None]

    return ProblemRecord(
        "atan", frozenset({"C1_invertible", "hadamard_levy_fail"}),
        "x -> atan(x), a diffeomorphism onto (-pi/2, pi/2)", map=f, region=interval(-2.0, 2.0),
        anchors=(np.array([0.0]), np.array([1.0])),
        oracles={"inverse": lambda y: np.tan(np.asarray(y, dtype=float))},
        options={"hl_sampler": sampler})


PT = ProductSpace((R1, R1))


def _g(name, ev, jac, a, b, oracle, tags, description):
    g = MapModel(PT, R1, lambda z: ev(z[..., 0], z[..., 1])[..., None],
                 lambda z: np.stack(jac(z[..., 0], z[..., 1]), -1)[..., None, :], None, "C1", name)
    return ProblemRecord(name, frozenset(tags), description, g=g, base=(np.array([a]), np.array([b])),
                         oracles={"solution": oracle})


def _implicit_exp():
    return _g("implicit_exp", lambda t, x: x * np.exp(-t),
              lambda t, x: (-x * np.exp(-t), np.exp(-t)), 0.0, 1.0,
              lambda t: np.exp(np.asarray(t, dtype=float)), {"implicit", "ode"},
              "g(t, x) = x exp(-t), level 1: x = exp(t), u' = u")


def _implicit_cubic():
    def sol(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.array([bisect(lambda x: x ** 3 + x - v, -abs(v) - 1.0, abs(v) + 1.0) for v in t])

    return _g("implicit_cubic", lambda t, x: x ** 3 + x - t,
              lambda t, x: (-np.ones_like(t), 3 * x ** 2 + 1), 0.0, 0.0, sol, {"implicit", "ode"},
              "g(t, x) = x^3 + x - t, level 0: u' = 1 / (3 u^2 + 1)")


def _implicit_identity():
    return _g("implicit_identity", lambda t, x: x + 0 * t,
              lambda t, x: (np.zeros_like(t), np.ones_like(x)), 0.0, 5.0,
              lambda t: np.full(np.shape(np.atleast_1d(t)), 5.0), {"implicit", "ode"},
              "g(t, x) = x: constant solution")


def _implicit_shift():
    return _g("implicit_shift", lambda t, x: x - t,
              lambda t, x: (-np.ones_like(t), np.ones_like(x)), 0.0, 0.0,
              lambda t: np.atleast_1d(np.asarray(t, dtype=float)), {"implicit", "ode"},
              "g(t, x) = x - t: h(t) = t")


_FACTORIES = {
    "identity_1d": lambda: _identity(1),
    "identity_2d": lambda: _identity(2),
    "identity_3d": lambda: _identity(3),
    "linear_k1": lambda: _linear(1.0),
    "linear_k10": lambda: _linear(10.0),
    "linear_k1000": lambda: _linear(1000.0),
    "cubic": _cubic,
    "cubic_pure": _cubic_pure,
    "fold": _fold,
    "complex_square": _complex_square,
    "projection": _projection,
    "ha_weakA": _ha,
    "atan": _atan,
    "implicit_exp": _implicit_exp,
    "implicit_cubic": _implicit_cubic,
    "implicit_identity": _implicit_identity,
    "implicit_shift": _implicit_shift,
}


class OracleError(AssertionError):
    pass


def self_check(rec: ProblemRecord, n=100, seed=0, tol=1e-12):
    """Check the record's oracles against their defining equations at ``n`` probes."""
    try:
        worst = _oracle_error(rec, n, seed)
    except (ArithmeticError, ValueError) as exc:
        raise OracleError(f"oracle self-check failed for {rec.name}: {exc}") from exc
    if not worst <= tol:
        raise OracleError(f"oracle self-check failed for {rec.name}: error {worst:.3g}")
    return worst


def _oracle_error(rec, n, seed):
    rng = _rng.stream(seed, "oracle", rec.name)
    worst = 0.0
    if rec.map is not None and "inverse" in rec.oracles and rec.region is not None \
            and rec.name != "ha_weakA":
        xs = rec.region.sample(rng, n)
        if "inverse_domain" in rec.oracles:
            xs = np.abs(xs)
        for x in xs:
            y = rec.map(x)
            err = float(np.max(np.abs(rec.map(rec.oracles["inverse"](y)) - y)))
            worst = max(worst, err / max(1.0, float(np.max(np.abs(y)))))
    if "roots" in rec.oracles:
        for x in rec.region.sample(rng, n):
            y = rec.map(x)
            for r in rec.oracles["roots"](y):
                worst = max(worst, float(np.max(np.abs(rec.map(r) - y))) / max(1.0, float(np.max(np.abs(y)))))
    if rec.name == "ha_weakA":
        a, c = rec.params["a"], rec.params["c"]
        ys = rng.uniform(-c / 2, c / 2, n) * 0.999
        xs = np.linspace(a - c, a + c, 2001)
        for y in ys:
            T = xs - (rec.map(xs[:, None])[:, 0] - y)
            # the grid approaches a from the right up to 1e-3 c
            worst = max(worst, max(0.0, rec.oracles["min_residual"](y) - float(np.min(np.abs(T - xs)))))
        yy = np.array([c, -c, 0.75 * c])
        worst = max(worst, float(np.max(np.abs(rec.map(rec.oracles["inverse"](yy)[:, None])[:, 0] - yy))))
    if rec.g is not None:
        ts = rng.uniform(-1.0, 2.0, n)
        c = rec.g(np.concatenate(rec.base))
        for t in ts:
            x = rec.oracles["solution"](t)
            worst = max(worst, float(np.max(np.abs(rec.g(np.concatenate([[t], np.ravel(x)])) - c)))
                        / max(1.0, float(np.max(np.abs(x)))))
    if rec.name == "projection":
        z = rec.region.sample(rng, n)
        fixed = np.all(rec.map(z) == z, axis=-1)
        if not np.array_equal(fixed, rec.oracles["is_fixed"](z)):
            worst = math.inf
    return worst


def get_problem(name, **params) -> ProblemRecord:
    if name not in _FACTORIES:
        raise KeyError(f"unknown problem {name!r}; known: {', '.join(sorted(_FACTORIES))}")
    if params and name != "ha_weakA":
        raise TypeError(f"problem {name!r} takes no parameters")
    return _FACTORIES[name](**params)


_BUILTIN = None


def register_builtin():
    """All built-in problems, oracle-checked on first use."""
    global _BUILTIN
    if _BUILTIN is None:
        recs = [f() for f in _FACTORIES.values()]
        for r in recs:
            self_check(r)
        _BUILTIN = recs
    return list(_BUILTIN)


def problem_names():
    return sorted(_FACTORIES)


# ---------------------------------------------------------------------------
# tasks


def check(name, passed, measured, oracle=None, tolerance=None, basis="invariant", table=None):
    out = {"name": name, "passed": bool(passed), "measured": measured, "oracle": oracle,
           "tolerance": tolerance, "basis": basis}
    if table is not None:
        out["table"] = table
    return out


def _budgets(options):
    b = options.get("budgets")
    if isinstance(b, Budgets):
        return b
    return Budgets(**b) if b else Budgets()


def _task_certify(rec, opts, seed, tol):
    f = rec.map
    a = np.asarray(opts.get("anchor", rec.anchors[0]), dtype=float)
    A = opts.get("A", rec.options.get("A"))
    A = LinearMap(A) if A is not None else inverse_jacobian_map(f, a, tol.sigma_min_rel)
    body = rec.region if rec.name == "ha_weakA" else ball(f.domain, a, opts.get("radius", 0.2))
    s = float(opts.get("s", rec.options.get("s", 0.1)))
    targets = opts.get("targets")
    budgets = _budgets(opts)
    out = []
    ys = [None] if targets is None else [np.atleast_1d(np.asarray(t, float)) for t in targets]
    for i, y in enumerate(ys):
        cert = certify(f, a, A, body, s, budgets, seed, tol,
                       targets=None if y is None else y[None, :],
                       target_center=rec.options.get("target_center"))
        label = f"certify[{rec.name}]" + ("" if y is None else f"[y={float(y[0]):+g}]")
        expect = opts.get("expect")
        ok = cert.certified if expect is None else cert.classification.value == expect
        measured = cert.to_dict()
        oracle = {"classification": expect}
        if "min_residual" in rec.oracles and y is not None:
            oracle["min_residual"] = rec.oracles["min_residual"](y)
            step = budgets.grid_step(body)
            ok = ok and cert.min_residual is not None and \
                abs(cert.min_residual - oracle["min_residual"]) <= 2 * step
        out.append(check(label, ok, measured, oracle, None, "exhaustive grid" if rec.name == "ha_weakA"
                         else "sampled certificate"))
    return out


def _task_scales(rec, opts, seed, tol):
    f = rec.map
    ladder = opts.get("ladder", [0.4, 0.2, 0.1, 0.05])
    anchors = opts.get("anchors")
    if anchors is None:
        anchors = rec.anchors
    out = []
    for i, a in enumerate(np.atleast_2d(np.asarray(anchors, dtype=float))):
        prof = certify_on_scales(f, a, lambda x: inverse_jacobian_map(f, x, tol.sigma_min_rel),
                                 ladder, _budgets(opts), _rng.child_seed(seed, "anchor", i), tol)
        strong = prof.certified and all(r.certificate.classification.value == "StrongA"
                                        for r in prof.records)
        ok = strong and abs(prof.beta - 0.5) <= 1e-12 and prof.alpha >= 0.25 - 1e-12
        table = [[r.r, r.certificate.classification.value, r.certificate.lipschitz,
                  r.certificate.s_radius, r.body.diameter] for r in prof.records]
        out.append(check(f"scales[{rec.name}][{i}]", ok,
                         {"alpha": prof.alpha, "beta": prof.beta, "eta": prof.eta,
                          "gamma": prof.gamma, "certified": prof.certified, "reason": prof.reason,
                          "anchor": a.tolist()},
                         {"beta": 0.5, "alpha_min": 0.25}, 1e-12, "ball construction",
                         table={"header": ["r", "classification", "lipschitz", "s", "diameter"],
                                "rows": table}))
    return out


def _task_invert(rec, opts, seed, tol):
    f = rec.map
    anchors = opts.get("anchors", rec.anchors)
    radius = opts.get("chart_radius", rec.options.get("chart_radius", 0.2))
    n = int(opts.get("samples", 100))
    out = []
    for i, a in enumerate(np.atleast_2d(np.asarray(anchors, dtype=float))):
        ch = build_chart(f, a, initial_radius=radius, budgets=_budgets(opts),
                         seed=_rng.child_seed(seed, "chart", i), tol=tol)
        rng = _rng.stream(seed, "invert_targets", i)
        ys = ball(f.codomain, ch.image, ch.s * (1 - 1e-9)).sample(rng, n, boundary_fraction=0.2)
        worst, worst_oracle, fails = 0.0, 0.0, 0
        for y in ys:
            try:
                x = invert(ch, y)
            except Exception:
                fails += 1
                continue
            worst = max(worst, float(f.codomain.norm(f(x) - y)))
            if "inverse" in rec.oracles:
                worst_oracle = max(worst_oracle, float(np.max(np.abs(x - rec.oracles["inverse"](y)))))
        bound = tol.inv_tol * ch.A.operator_norm
        D = inverse_derivative(ch, ch.image)
        Dfd = numerical_inverse_derivative(ch)
        rel = float(np.linalg.norm(Dfd - D) / np.linalg.norm(D))
        fps = probe_fixed_point_set(ch.tilde(ch.image), ch.body, 12, _rng.child_seed(seed, "fp", i),
                                    tol.fp_tol, tol.cluster_rel)
        out.append(check(f"invert[{rec.name}][{i}].roundtrip", fails == 0 and worst <= bound,
                         {"max_residual": worst, "failures": fails, "samples": n, "s": ch.s,
                          "body": ch.body.describe(), "max_oracle_error": worst_oracle},
                         {"residual_bound": bound}, bound, "defining equation"))
        out.append(check(f"invert[{rec.name}][{i}].inverse_derivative", rel <= 1e-4,
                         {"finite_difference": Dfd.tolist(), "relative_error": rel},
                         {"inverse_jacobian": D.tolist()}, 1e-4, "inverse of the Jacobian"))
        out.append(check(f"invert[{rec.name}][{i}].unique_fixed_point", len(fps) == 1,
                         {"clusters": len(fps)}, {"clusters": 1}, 0, "contraction uniqueness"))
    for j, y in enumerate(opts.get("queries", [])):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        a = np.atleast_1d(np.asarray(opts.get("query_anchor", rec.anchors[0]), dtype=float))
        ch = build_chart(f, a, initial_radius=radius, budgets=_budgets(opts),
                         seed=_rng.child_seed(seed, "query_chart", j), tol=tol)
        x = invert(ch, y)
        ref = np.atleast_1d(rec.oracles["inverse"](y))
        err = float(np.max(np.abs(x - ref)))
        out.append(check(f"invert[{rec.name}].query[{j}]", err <= 1e-9,
                         {"x": x.tolist(), "anchor": a.tolist()}, {"x": ref.tolist()}, 1e-9,
                         "bisection" if rec.name == "cubic" else "closed form"))
    return out


def _task_sheets(rec, opts, seed, tol):
    f = rec.map
    if rec.name == "complex_square":
        rng = _rng.stream(seed, "sheet_targets")
        ys = Annulus(R2, [0.0, 0.0], 1.0, 2.0).sample(rng, int(opts.get("samples", 20)))
        expected = 2
    else:
        rng = _rng.stream(seed, "sheet_targets")
        xs = rec.region.sample(rng, int(opts.get("samples", 20)))
        ys = f(xs)
        expected = 1
    if "targets" in opts:
        ys = np.atleast_2d(np.asarray(opts["targets"], dtype=float))
    sc = preimage_count(f, rec.region, ys, seed, tol=tol)
    oracle_counts = None
    if "roots" in rec.oracles:
        oracle_counts = [int(np.sum(rec.region.contains(rec.oracles["roots"](y)))) for y in ys]
    ok = sc.constant and int(sc.counts[0]) == opts.get("expect", expected)
    return [check(f"sheets[{rec.name}]", ok, sc.to_dict(),
                  {"count": opts.get("expect", expected), "oracle_counts": oracle_counts}, 0,
                  "complex square roots" if rec.name == "complex_square" else "monotonicity",
                  table={"header": [*(f"y{i}" for i in range(f.codomain.dim)), "count"],
                         "rows": list(sc.rows())})]


def _task_hadamard_levy(rec, opts, seed, tol):
    f = rec.map
    s_max = float(opts.get("s_max", 10.0))
    sampler = rec.options.get("hl_sampler", rec.region)
    res = hadamard_levy(f, sampler, s_max, float(opts.get("ds", 0.01)), seed,
                        int(opts.get("samples", 20000)), opts.get("quantity", "operator_norm"))
    fail = "hadamard_levy_fail" in rec.tags
    if fail:
        ok = res.verdict == "not-established" and res.integral_lower_bound < 2.0
        oracle = {"verdict": "not-established", "bound_below": 2.0}
    else:
        ok = res.verdict == "divergence-consistent" and res.integral_lower_bound >= 0.99 * s_max
        oracle = {"verdict": "divergence-consistent", "bound_at_least": 0.99 * s_max}
    rows = [[float(s), float(m), float(p)] for s, m, p in
            zip(res.levels[::10], res.m_hat[::10], res.partial_sums[::10])]
    return [check(f"hadamard_levy[{rec.name}]", ok, res.to_dict(), oracle, None,
                  "derivative bound", table={"header": ["s", "m_hat", "partial_sum"], "rows": rows})]


def _task_implicit(rec, opts, seed, tol):
    a, b = rec.base
    prob = ImplicitProblem(rec.g, a, b, tol=tol)
    out = []
    for j, t in enumerate(opts.get("t", [1.0, 2.0])):
        h, tracker = implicit_solve(prob, [t], budgets=_budgets(opts),
                                    seed=_rng.child_seed(seed, "t", j), return_path=True)
        ref = np.ravel(rec.oracles["solution"](t))
        err = float(np.max(np.abs(h - ref)))
        level = float(np.max(np.abs(rec.g(np.concatenate([[t], h])) - prob.c)))
        D = implicit_derivative(prob, [t], h)
        eps = 1e-4
        # the tracker's last chart is anchored near t and covers both neighbours
        hp = tracker.advance([t + eps])
        hm = tracker.advance([t - eps])
        fd = (hp - hm) / (2 * eps)
        rel = float(np.linalg.norm(fd - D[:, 0]) / max(np.linalg.norm(D), 1e-300))
        out.append(check(f"implicit[{rec.name}][t={t:g}]",
                         err <= 1e-9 and level <= tol.inv_tol and rel <= 1e-4,
                         {"h": h.tolist(), "level_residual": level, "derivative": D.tolist(),
                          "fd_derivative": fd.tolist(), "derivative_rel_error": rel},
                         {"h": ref.tolist()}, 1e-9, "closed form" if rec.name != "implicit_cubic"
                         else "bisection"))
    return out


def _task_ode(rec, opts, seed, tol):
    a, b = rec.base
    T = float(opts.get("T", 1.0))
    step = float(opts.get("step", 1e-3))
    grid = np.linspace(0.0, T, int(round(T / step)) + 1)
    prob = OdeProblem(rec.g, b, "chain_rule", tol)
    sol = ode_solve(prob, grid, budgets=_budgets(opts), seed=seed)
    ref = np.array([np.ravel(rec.oracles["solution"](t)) for t in grid])
    err = float(np.max(np.abs(sol.u - ref)))
    defects = ode_defects(rec.g, sol.u, grid, "chain_rule")
    defect = float(np.nanmax(defects))
    opposite_defect = float(np.nanmax(ode_defects(rec.g, sol.u, grid, "paper")))
    rk = rk4(f_from_g(rec.g, "chain_rule"), grid, b)
    rk_err = float(np.max(np.abs(rk - sol.u)))
    level = float(sol.level_residuals.max())
    stride = max(1, len(grid) // 100)
    rows = [r for k, r in enumerate(sol.rows(defects)) if k % stride == 0 or k == len(grid) - 1]
    table = {"header": ["t", *(f"u{i}" for i in range(sol.u.shape[1])), "level_residual", "defect"],
             "rows": rows}
    measured = {"max_error": err, "max_level_residual": level, "defect_chain_rule": defect,
                "defect_opposite_sign": opposite_defect, "rk4_max_difference": rk_err,
                "charts": sol.charts, "nodes": len(grid)}
    out = [check(f"ode[{rec.name}].solution", err <= 1e-9 and level <= tol.inv_tol, measured,
                 {"max_error": 1e-9}, 1e-9, "closed form", table=table),
           check(f"ode[{rec.name}].defect_chain_rule", defect <= 1e-5, {"defect": defect},
                 None, 1e-5, "finite differences"),
           check(f"ode[{rec.name}].rk4", rk_err <= 1e-6, {"max_difference": rk_err}, None, 1e-6,
                 "independent integrator")]
    # a nonconstant solution separates the two sign conventions
    moving = float(np.max(np.abs(sol.u[-1] - sol.u[0]))) > 0
    if moving:
        out.append(check(f"ode[{rec.name}].defect_opposite_sign", opposite_defect > 1.0 or T < 1,
                         {"defect": opposite_defect}, {"defect_above": 1.0}, None,
                         "sign convention discrepancy"))
    return out


def _task_fixed_points(rec, opts, seed, tol):
    T = rec.map
    fps = probe_fixed_point_set(T, rec.region, int(opts.get("starts", 16)), seed, tol.fp_tol,
                                tol.cluster_rel)
    n = len(fps)
    on_axis = bool(n and np.all(rec.oracles["is_fixed"](fps.points)))
    ok = n >= 5 and on_axis and fps.convexity_verdict == "convex_segment" and \
        (fps.combination_max_residual or 0.0) <= tol.fp_tol
    return [check(f"fixed_points[{rec.name}]", ok,
                  {"distinct": n, "verdict": fps.convexity_verdict,
                   "combination_max_residual": fps.combination_max_residual},
                  {"min_distinct": 5, "verdict": "convex_segment"}, tol.fp_tol, "closed form")]


def _task_pairing(rec, opts, seed, tol):
    cub = get_problem("cubic")
    f1, f2 = cub.map, rec.map
    a1, a2 = np.array([0.0]), np.asarray(rec.anchors[0], dtype=float)
    A1 = inverse_jacobian_map(f1, a1)
    A2 = inverse_jacobian_map(f2, a2)
    rng = _rng.stream(seed, "pairing")
    n = int(opts.get("samples", 10000))
    t1 = build_tilde(f1, a1, f1(a1) + 0.05, A1, ball(f1.domain, a1, 0.2))
    t2 = build_tilde(f2, a2, f2(a2) + 0.05, A2, ball(f2.domain, a2, 0.2))
    tp = pair_tilde(t1, t2)
    X = tp.body.sample(rng, n)
    lhs = tp(X)
    rhs = np.concatenate([t1(X[:, :1]), t2(X[:, 1:])], axis=-1)
    identical = bool(np.array_equal(lhs, rhs))
    ladder = opts.get("ladder", [0.4, 0.2, 0.1])
    p1 = certify_on_scales(f1, a1, lambda x: inverse_jacobian_map(f1, x), ladder,
                           _budgets(opts), _rng.child_seed(seed, "p1"), tol)
    p2 = certify_on_scales(f2, a2, lambda x: inverse_jacobian_map(f2, x), ladder,
                           _budgets(opts), _rng.child_seed(seed, "p2"), tol)
    pp = pair_certificates(p1, p2)
    rt2 = math.sqrt(2.0)
    expect = {"alpha": min(p1.alpha, 0.5) / rt2, "beta": min(p1.beta, 0.5) / rt2,
              "eta": min(p1.eta, 1.0) / rt2, "gamma": rt2 * max(p1.gamma, 1.0)}
    got = {"alpha": pp.alpha, "beta": pp.beta, "eta": pp.eta, "gamma": pp.gamma}
    dev = max(abs(got[k] - expect[k]) for k in expect)
    note = pp.notes.get("lipschitz_combination", {})
    return [check(f"pairing[{rec.name}].tilde_identity", identical,
                  {"samples": n, "bit_identical": identical}, None, 0, "componentwise evaluation"),
            check(f"pairing[{rec.name}].constants", dev <= 1e-12, got, expect, 1e-12,
                  "substitution formulas"),
            check(f"pairing[{rec.name}].lipschitz_combination",
                  note.get("rule") == "max", note, {"rule": "max"}, None,
                  "product norm bound")]


def _task_segments(rec, opts, seed, tol):
    f = rec.map
    p, q = opts.get("segment", ([-1.0], [1.0]))
    res = segment_nondegeneracy_probe(f, p, q, int(opts.get("n_grid", 101)), tol.dd_floor)
    expect = opts.get("expect", "nondegenerate")
    return [check(f"segments[{rec.name}]", res.verdict == expect, res.to_dict(),
                  {"verdict": expect}, tol.dd_floor, "derivative formula")]


def _task_dense(rec, opts, seed, tol):
    f = rec.map
    pts = np.asarray(opts.get("points", np.linspace(-1, 1, 9)[:, None]), dtype=float)
    res = dense_scale_check(f, pts, opts.get("ladder", (0.4, 0.2, 0.1)), _budgets(opts), seed, tol)
    expect = opts.get("expect", True)
    return [check(f"dense_scales[{rec.name}]", res.passed == expect and
                  (not res.passed or res.alpha >= 0.25 - 1e-12), res.to_dict(),
                  {"passed": expect}, None, "ball construction")]


def _task_discreteness(rec, opts, seed, tol):
    y = np.asarray(opts.get("y", [1.0, 0.0]), dtype=float)
    cl, sep = discreteness_probe(rec.map, y, rec.region, seed=seed, tol=tol)
    expect = int(opts.get("expect", 2))
    return [check(f"discreteness[{rec.name}]", len(cl) == expect, {"clusters": cl.tolist(),
                  "min_separation": sep}, {"clusters": expect}, None, "complex square roots")]


_TASKS = {
    "certify": _task_certify, "scales": _task_scales, "invert": _task_invert,
    "sheets": _task_sheets, "hadamard_levy": _task_hadamard_levy, "implicit": _task_implicit,
    "ode": _task_ode, "fixed_points": _task_fixed_points, "pairing": _task_pairing,
    "segments": _task_segments, "dense_scales": _task_dense, "discreteness": _task_discreteness,
}

TASKS = tuple(_TASKS)


def run_problem(rec: ProblemRecord, task, options=None, seed=0, tol=None):
    """Run ``task`` on ``rec`` and return a list of check dictionaries.

    Failures inside a task become failed checks; nothing is raised.
    """
    options = dict(options or {})
    tol = tol or DEFAULT
    if task not in _TASKS:
        return [check(f"{task}[{rec.name}]", False, {"error": f"unknown task {task!r}"})]
    try:
        return _TASKS[task](rec, options, seed, tol)
    except Exception as exc:  # reported, not raised
        return [check(f"{task}[{rec.name}]", False, {"error": f"{type(exc).__name__}: {exc}"})]


# (problem, task, options) triples run by the full suite
FULL_SUITE = (
    ("ha_weakA", "certify", {"targets": [-0.45, -0.3, -0.1, 0.1, 0.3, 0.45],
                             "expect": "WeakA_NoFixedPoint"}),
    ("cubic", "scales", {"anchors": np.linspace(-1, 1, 9)[:, None].tolist()}),
    ("linear_k10", "scales", {"anchors": [[x, y] for x in (-0.5, 0.0, 0.5) for y in (-0.5, 0.0, 0.5)]}),
    ("identity_2d", "invert", {"samples": 100}),
    ("linear_k1", "invert", {"samples": 100}),
    ("linear_k1000", "invert", {"samples": 100}),
    ("cubic", "invert", {"samples": 100, "queries": [[2.5]], "query_anchor": [1.0]}),
    ("atan", "invert", {"samples": 100}),
    ("projection", "fixed_points", {}),
    ("identity_1d", "pairing", {}),
    ("complex_square", "sheets", {"samples": 20}),
    ("complex_square", "discreteness", {"y": [1.0, 0.0], "expect": 2}),
    ("cubic", "sheets", {"targets": np.linspace(-0.9, 0.9, 7)[:, None].tolist()}),
    ("cubic", "hadamard_levy", {"s_max": 10.0}),
    ("atan", "hadamard_levy", {"s_max": 10.0}),
    ("cubic", "dense_scales", {}),
    ("fold", "dense_scales", {"points": [[0.0, 0.0], [0.5, 0.5]], "expect": False}),
    ("cubic", "segments", {}),
    ("cubic_pure", "segments", {"expect": "dense"}),
    ("implicit_exp", "implicit", {"t": [1.0, 0.5]}),
    ("implicit_cubic", "implicit", {"t": [2.0, 1.0]}),
    ("implicit_exp", "ode", {}),
    ("implicit_cubic", "ode", {"T": 1.0, "step": 1e-3}),
    ("implicit_identity", "ode", {"step": 0.01}),
)
