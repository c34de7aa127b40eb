"""Fixed-point solvers and probes of fixed-point-set geometry.

Maps handed to these routines are plain callables that broadcast over
leading axes (a :class:`~localinv.cert.TildeMap` qualifies).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from . import _rng

MODES = ("banach", "krasnoselskii_mann", "grid")


def _euclid(v):
    return np.sqrt(np.sum(np.asarray(v) ** 2, axis=-1))


@dataclass
class FixedPointResult:
    point: np.ndarray
    residual: float
    iterations: int
    mode: str
    converged: bool
    apriori_bound: Optional[float] = None
    log: list = field(default_factory=list, repr=False)
    iterates: Optional[np.ndarray] = field(default=None, repr=False)


class FixedPointError(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class MaxIterExceeded(FixedPointError):
    pass


class EscapedBody(FixedPointError):
    pass


class CycleDetected(FixedPointError):
    """Raw iteration settled on a 2-cycle (typical for maps like x -> -x)."""


class GridTooLarge(ValueError):
    pass


def banach_iterate(T, x0, tol=1e-10, max_iter=1000, lipschitz=None, body=None,
                   norm=None, log=False) -> FixedPointResult:
    """Picard iteration ``x_{k+1} = T(x_k)``.

    With a contraction constant ``lipschitz < 1`` the loop stops once
    ``||x_{k+1} - x_k|| <= tol (1 - L) / max(L, tol)`` and the residual at
    ``x_{k+1}`` is below ``tol``; otherwise it stops on the residual alone.
    """
    norm = norm or _euclid
    x = np.array(x0, dtype=float)
    Tx = np.asarray(T(x), dtype=float)
    r = float(norm(Tx - x))
    apriori = None
    if lipschitz is not None and lipschitz < 1:
        apriori = r / (1.0 - lipschitz)
        stop_step = tol * (1.0 - lipschitz) / max(lipschitz, tol)
    else:
        stop_step = None
    logs, its = [], [x.copy()] if log else None
    prev = None
    for k in range(max_iter + 1):
        if log:
            logs.append((k, r, r))
        if r <= tol and stop_step is None:
            return FixedPointResult(x, r, k, "banach", True, apriori, logs,
                                    np.array(its) if log else None)
        if k == max_iter:
            break
        x_new, step = Tx, r
        if not np.all(np.isfinite(x_new)):
            raise MaxIterExceeded("iteration produced non-finite values",
                                  FixedPointResult(x, r, k, "banach", False, apriori, logs))
        if body is not None and not bool(body.contains(x_new, tol=1e-9)):
            raise EscapedBody(f"iterate {k + 1} left the body",
                              FixedPointResult(x_new, np.inf, k + 1, "banach", False, apriori, logs))
        Tx = np.asarray(T(x_new), dtype=float)
        r = float(norm(Tx - x_new))
        if prev is not None and float(norm(x_new - prev)) <= tol and step > tol:
            raise CycleDetected(f"2-cycle after {k + 1} iterations",
                                FixedPointResult(x_new, r, k + 1, "banach", False, apriori, logs))
        prev, x = x, x_new
        if log:
            its.append(x.copy())
        if stop_step is not None and step <= stop_step and r <= tol:
            if log:
                logs.append((k + 1, r, r))
            return FixedPointResult(x, r, k + 1, "banach", True, apriori, logs,
                                    np.array(its) if log else None)
    raise MaxIterExceeded(f"no convergence in {max_iter} iterations",
                          FixedPointResult(x, r, max_iter, "banach", False, apriori, logs,
                                           np.array(its) if log else None))


def km_iterate(T, x0, relaxation=0.5, tol=1e-10, max_iter=10000, norm=None,
               log=False) -> FixedPointResult:
    """Krasnoselskii-Mann averaging ``x_{k+1} = (1 - lam) x_k + lam T(x_k)``.

    ``relaxation`` is a constant in (0, 1) or a callable ``k -> lam_k``.
    """
    norm = norm or _euclid
    lam_of = relaxation if callable(relaxation) else (lambda k: relaxation)
    x = np.array(x0, dtype=float)
    logs, its = [], [x.copy()] if log else None
    for k in range(max_iter + 1):
        Tx = np.asarray(T(x), dtype=float)
        r = float(norm(Tx - x))
        if not np.isfinite(r):
            break
        lam = float(lam_of(k))
        if log:
            logs.append((k, r, lam * r))
        if r <= tol:
            return FixedPointResult(x, r, k, "krasnoselskii_mann", True, None, logs,
                                    np.array(its) if log else None)
        if k == max_iter:
            break
        if not 0 < lam < 1:
            raise ValueError(f"relaxation must lie in (0, 1), got {lam}")
        x = (1.0 - lam) * x + lam * Tx
        if log:
            its.append(x.copy())
    raise MaxIterExceeded(f"no convergence in {max_iter} iterations",
                          FixedPointResult(x, r, k, "krasnoselskii_mann", False, None, logs,
                                           np.array(its) if log else None))


def solve_fixed_point(T, x0, tol=1e-10, norm=None, lipschitz=None,
                      banach_iter=500, km_iter=3000, relaxation=0.5):
    """Banach iteration with a Krasnoselskii-Mann fallback on cycles or stalls.

    Returns ``None`` when neither converges.
    """
    try:
        return banach_iterate(T, x0, tol, banach_iter, lipschitz=lipschitz, norm=norm)
    except (CycleDetected, MaxIterExceeded):
        pass
    try:
        return km_iterate(T, x0, relaxation, tol, km_iter, norm=norm)
    except MaxIterExceeded:
        return None


@dataclass
class FixedPointSet:
    points: np.ndarray
    body: object
    convexity_verdict: str
    residuals: np.ndarray
    combination_max_residual: Optional[float] = None
    starts: int = 0

    def __len__(self):
        return len(self.points)


def cluster_points(points, radius):
    """Greedy clustering; returns one representative per cluster, in input order."""
    reps = []
    for p in points:
        if not reps or np.min(_euclid(np.asarray(reps) - p)) > radius:
            reps.append(p)
    return np.array(reps).reshape(len(reps), -1) if reps else np.empty((0, 0))


def stratified_starts(body, n_starts, seed, tag="starts"):
    """Center, two points per axis, then random fill from the body."""
    c = np.array(body.center, dtype=float)
    d = len(c)
    pts = [c]
    big = max(body.diameter, 1e-300)
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        for sgn in (1.0, -1.0):
            edge = body.project(c + sgn * big * e)
            pts.append(c + 0.9 * (edge - c))
    pts = np.array(pts)
    extra = n_starts - len(pts)
    if extra > 0:
        rng = _rng.stream(seed, tag)
        pts = np.concatenate([pts, body.sample(rng, extra, boundary_fraction=0.25)])
    return pts[:max(n_starts, 1)] if n_starts < len(pts) else pts


def batch_solve(T, X0, tol=1e-10, norm=None, banach_iter=500, km_iter=3000, relaxation=0.5):
    """Picard then Krasnoselskii-Mann on a stack of starts at once.

    Returns ``(points, converged)``.  Rows that stall under Picard (cycles
    included) are handed to the averaged iteration.
    """
    norm = norm or _euclid
    X = np.array(X0, dtype=float)
    done = np.zeros(len(X), dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for phase, iters in (("banach", banach_iter), ("km", km_iter)):
            if phase == "km":
                X[~done] = np.asarray(X0, dtype=float)[~done]
            for _ in range(iters + 1):
                act = np.flatnonzero(~done)
                if not len(act):
                    return X, done
                Xa = X[act]
                TX = np.asarray(T(Xa), dtype=float)
                r = norm(TX - Xa)
                done[act[r <= tol]] = True
                live = np.isfinite(r) & (r > tol)
                step = TX if phase == "banach" else (1.0 - relaxation) * Xa + relaxation * TX
                X[act[live]] = step[live]
                bad = act[~np.isfinite(r)]
                X[bad] = np.nan
    return X, done


def probe_fixed_point_set(T, body, n_starts=16, seed=0, tol=1e-10, cluster_rel=1e-6,
                          lipschitz=None, combinations_per_pair=11) -> FixedPointSet:
    """Multistart search for the fixed points of ``T`` in ``body``."""
    norm = body.space.norm
    found = []
    starts = stratified_starts(body, n_starts, seed)
    try:
        X, ok = batch_solve(T, starts, tol, norm)
        found = [x for x, c in zip(X, ok) if c and bool(body.contains(x, tol=1e-9))]
    except (ArithmeticError, ValueError):
        # the batch left the map's domain; retry start by start
        with np.errstate(over="ignore", invalid="ignore"):
            for x0 in starts:
                try:
                    res = solve_fixed_point(T, x0, tol, norm=norm, lipschitz=lipschitz)
                except (ArithmeticError, ValueError):
                    continue
                if res is None or not res.converged or not np.all(np.isfinite(res.point)):
                    continue
                if bool(body.contains(res.point, tol=1e-9)):
                    found.append(res.point)
    radius = cluster_rel * max(body.diameter, 1e-12)
    pts = cluster_points(found, radius) if found else np.empty((0, body.dim))
    residuals = norm(np.asarray(T(pts)) - pts) if len(pts) else np.empty(0)
    if len(pts) == 0:
        return FixedPointSet(pts, body, "empty", residuals, None, n_starts)
    if len(pts) == 1:
        return FixedPointSet(pts, body, "singleton", residuals, None, n_starts)
    lam = np.linspace(0.0, 1.0, combinations_per_pair)[:, None]
    worst = 0.0
    use = pts[:24]
    for i, j in combinations(range(len(use)), 2):
        z = (1.0 - lam) * use[i] + lam * use[j]
        worst = max(worst, float(np.max(norm(np.asarray(T(z)) - z))))
    if worst > tol:
        verdict = "nonconvex"
    else:
        offsets = pts - pts[0]
        s = np.linalg.svd(offsets, compute_uv=False)
        verdict = "convex_segment" if s.size < 2 or s[1] <= 1e-8 * s[0] else "convex_set"
    return FixedPointSet(pts, body, verdict, residuals, worst, n_starts)


def grid_min_residual(T, body, grid_step, max_nodes=10**8, chunk=1 << 18):
    """Exhaustive ``min ||T(x) - x||`` over the ``grid_step`` lattice in ``body``.

    The lattice is aligned with the body's center.  Only for dimension <= 3.
    """
    if body.dim > 3:
        raise ValueError("the grid oracle is limited to dimension <= 3")
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    axes = body.grid_axes(grid_step)
    shape = tuple(len(a) for a in axes)
    total = int(np.prod(shape, dtype=np.int64))
    if total > max_nodes:
        raise GridTooLarge(f"{total} grid nodes exceed the limit {max_nodes}")
    norm = body.space.norm
    best, arg = np.inf, None
    for start in range(0, total, chunk):
        idx = np.unravel_index(np.arange(start, min(total, start + chunk)), shape)
        X = np.stack([axes[i][idx[i]] for i in range(len(axes))], axis=-1)
        X = X[body.contains(X, tol=0.0)]
        if not len(X):
            continue
        with np.errstate(over="ignore", invalid="ignore"):
            r = norm(np.asarray(T(X)) - X)
        r = np.where(np.isfinite(r), r, np.inf)
        j = int(np.argmin(r))
        if r[j] < best:
            best, arg = float(r[j]), X[j].copy()
    return best, arg
