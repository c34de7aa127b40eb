"""Certified local inverse charts and global probes built on them.

A chart is a certified record ``(a, f(a), C, A, s)``: for every target ``y``
with ``||y - f(a)|| < s`` the preimage ``f^{-1}(y) ∩ C`` is the fixed-point
set of ``x -> x - A(f(x) - y)`` and is computed by iteration.  The global
probes count preimages over sampled targets, test a Hadamard-Levy style
integral, certify scale profiles on finite point sets and check directional
derivatives along segments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _rng
from .cert import Classification, TildeMap, certify, certify_on_scales
from .fixedpoint import (FixedPointError, banach_iterate, cluster_points, km_iterate)
from .maps import (DegenerateDerivative, directional_derivative, inverse_jacobian_map, jacobian,
                   jacobian_matrix, LinearMap)
from .spaces import Ball, _as_points
from .tolerances import DEFAULT

MODES = ("strong", "nonexpansive_fpp", "weak_quasi")


class CertificationFailed(RuntimeError):
    pass


class OutOfChart(ValueError):
    pass


class NonConvergent(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LocalInverseChart:
    f: object
    anchor: np.ndarray
    image: np.ndarray
    body: Ball
    A: LinearMap
    s: float
    certificate: object
    mode: str
    tol: object = DEFAULT

    @property
    def inv_tol(self):
        """Residual bound ``||f(x) - y||`` for returned preimages."""
        return self.tol.inv_tol * self.A.operator_norm

    def reaches(self, y) -> bool:
        y = np.asarray(y, dtype=float)
        return bool(self.f.codomain.norm(y - self.image) < self.s)

    def tilde(self, y):
        return TildeMap(self.f, self.anchor, np.asarray(y, dtype=float), self.A, self.body)

    def to_dict(self):
        return {"anchor": self.anchor.tolist(), "image": self.image.tolist(),
                "body": self.body.describe(), "s": self.s, "mode": self.mode,
                "A": self.A.matrix.tolist(), "certificate": self.certificate.to_dict()}


def _mode_for(cls, allow_fpp, strictly_convex):
    if cls is Classification.STRONG:
        return "strong"
    if not allow_fpp:
        return None
    if cls is Classification.NONEXPANSIVE:
        return "nonexpansive_fpp"
    if cls is Classification.WEAK_QUASI and strictly_convex:
        return "weak_quasi"
    return None


def build_chart(f, a, A=None, initial_radius=0.2, levels=8, allow_fpp=False, budgets=None,
                seed=0, tol=None) -> LocalInverseChart:
    """Certify a local inverse of ``f`` around ``a``.

    The body radius starts at ``initial_radius`` and halves up to ``levels``
    times.  Target radii ``rho/2`` and ``rho/4`` are tried in the units of the
    codomain, i.e. divided by ``||A||``.  Only strong certificates make a
    chart unless ``allow_fpp`` is set; weak quasi-nonexpansive charts also
    need a strictly convex domain.

    Raises
    ------
    DegenerateDerivative
        if ``A`` is not supplied and ``D_a f`` is singular.
    CertificationFailed
        if no rung of the ladder certifies.
    """
    tol = tol or DEFAULT
    a = _as_points(a, f.domain.dim).astype(float)
    if A is None:
        A = inverse_jacobian_map(f, a, sigma_min_rel=tol.sigma_min_rel)
    elif not isinstance(A, LinearMap):
        A = LinearMap(A)
    scale = A.operator_norm
    fa = f(a)
    reasons = []
    for k in range(levels):
        rho = initial_radius / 2.0 ** k
        body = Ball(f.domain, a, rho)
        for s in (rho / 2.0 / scale, rho / 4.0 / scale):
            cert = certify(f, a, A, body, s, budgets, _rng.child_seed(seed, "chart", k), tol)
            mode = _mode_for(cert.classification, allow_fpp, f.domain.strictly_convex)
            if mode is not None:
                return LocalInverseChart(f, a, fa, body, A, float(s), cert, mode, tol)
            reasons.append(f"rho={rho:g}, s={s:g}: {cert.classification} {cert.reason}".strip())
    raise CertificationFailed("radius ladder exhausted; " + "; ".join(reasons[-2:]))


def _polish(T, x, norm, steps=60):
    # keep iterating while the residual still drops; recovers the last digits
    r = float(norm(T(x) - x))
    for _ in range(steps):
        if r == 0:
            break
        x_new = T(x)
        r_new = float(norm(T(x_new) - x_new))
        if not r_new < r:
            break
        x, r = x_new, r_new
    return x


def invert(chart: LocalInverseChart, y, x0=None, max_iter=2000) -> np.ndarray:
    """Preimage of ``y`` inside the chart body.

    Strong charts use Picard iteration (the preimage in the body is unique);
    the other modes use Krasnoselskii-Mann averaging.
    """
    f = chart.f
    y = _as_points(y, f.codomain.dim).astype(float)
    if y.ndim != 1:
        raise ValueError("invert takes a single target")
    dist = float(f.codomain.norm(y - chart.image))
    if not dist < chart.s:
        raise OutOfChart(f"target is {dist:.6g} from f(a); chart radius is {chart.s:.6g}")
    T = chart.tilde(y)
    norm = chart.body.space.norm
    x0 = chart.anchor if x0 is None else chart.body.project(np.asarray(x0, dtype=float))
    tol = chart.tol.fp_tol
    try:
        if chart.mode == "strong":
            L = chart.certificate.lipschitz
            res = banach_iterate(T, x0, tol, max_iter,
                                 lipschitz=L if L is not None and L < 1 else None,
                                 body=chart.body, norm=norm)
        else:
            res = km_iterate(T, x0, 0.5, tol, 5 * max_iter, norm=norm)
    except FixedPointError as exc:
        raise NonConvergent(str(exc)) from exc
    x = _polish(T, res.point, norm)
    miss = float(f.codomain.norm(f(x) - y))
    if not miss <= chart.inv_tol:
        raise NonConvergent(f"residual {miss:.3g} exceeds {chart.inv_tol:.3g}")
    return x


def inverse_derivative(chart: LocalInverseChart, y, method="auto") -> np.ndarray:
    """``(D_x f)^{-1}`` at the preimage ``x`` of ``y``."""
    x = invert(chart, y)
    est = jacobian(chart.f, x, method=method, sigma_min_rel=chart.tol.sigma_min_rel)
    if not est.invertible:
        raise DegenerateDerivative(f"derivative at the preimage {x.tolist()} is singular")
    return np.linalg.inv(est.matrix)


def numerical_inverse_derivative(chart: LocalInverseChart, y=None, h=None) -> np.ndarray:
    """Central differences of ``y -> invert(chart, y)``."""
    y = chart.image if y is None else np.asarray(y, dtype=float)
    m = len(y)
    h = 1e-3 * chart.s if h is None else h
    cols = []
    for j in range(m):
        e = np.zeros(m)
        e[j] = h
        cols.append((invert(chart, y + e) - invert(chart, y - e)) / (2.0 * h))
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------------
# preimage search


def newton_roots(f, y, starts, tol=None, max_iter=60, region=None):
    """Batched Newton iteration for ``f(x) = y`` from many starts.

    Returns the converged points (unclustered).  Starts whose Jacobian turns
    singular or whose iterates leave ``region`` (or the map's domain) are
    dropped.
    """
    tol = tol or DEFAULT
    y = np.asarray(y, dtype=float)
    X = np.array(starts, dtype=float)
    keep = region if region is not None else f.domain_region
    scale = max(1.0, float(f.codomain.norm(y)))
    done = np.zeros(len(X), dtype=bool)
    live = np.ones(len(X), dtype=bool)
    with np.errstate(all="ignore"):
        for _ in range(max_iter):
            act = np.flatnonzero(live & ~done)
            if not len(act):
                break
            Xa = X[act]
            if f.domain_region is not None:
                inside = f.domain_region.contains(Xa)
                live[act[~inside]] = False
                act, Xa = act[inside], Xa[inside]
            R = f(Xa) - y
            r = f.codomain.norm(R)
            done[act[r <= tol.inv_tol * scale]] = True
            J = jacobian_matrix(f, Xa)
            ok = np.all(np.isfinite(J), axis=(-2, -1)) & np.all(np.isfinite(R), axis=-1)
            ok &= np.abs(np.linalg.det(np.where(ok[:, None, None], J, np.eye(J.shape[-1])))) > 1e-300
            step = np.zeros_like(Xa)
            if np.any(ok):
                step[ok] = np.linalg.solve(J[ok], R[ok][..., None])[..., 0]
            live[act[~ok]] = False
            move = ok & (r > tol.inv_tol * scale)
            X[act[move]] = Xa[move] - step[move]
    found = X[done & live]
    if keep is not None and len(found):
        found = found[keep.contains(found, tol=1e-9)]
    return found


def discreteness_probe(f, y, body, grid_step=None, n_random=None, seed=0, tol=None):
    """Approximate preimages of ``y`` in ``body`` and their separations.

    Returns ``(clusters, min_pairwise_separation)``; the separation is
    ``inf`` for fewer than two clusters.  Starts are grid nodes of spacing
    ``grid_step`` (dimension <= 3) plus ``n_random`` random points
    (default ``32 * dim``).
    """
    tol = tol or DEFAULT
    dim = f.domain.dim
    n_random = 32 * dim if n_random is None else n_random
    starts = [body.sample(_rng.stream(seed, "preimage_starts"), n_random)]
    if dim <= 3:
        step = grid_step or body.diameter / 20.0
        axes = body.grid_axes(step)
        nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
        starts.append(nodes[body.contains(nodes, tol=0.0)])
    roots = newton_roots(f, y, np.concatenate(starts), tol)
    if len(roots):
        roots = roots[body.contains(roots, tol=1e-9)]
    radius = tol.cluster_rel * max(body.diameter, 1e-12)
    clusters = cluster_points(roots, radius) if len(roots) else np.empty((0, dim))
    sep = math.inf
    for i in range(len(clusters)):
        for j in range(i + 1, len(clusters)):
            sep = min(sep, float(f.domain.norm(clusters[i] - clusters[j])))
    return clusters, sep


@dataclass
class SheetCounts:
    targets: np.ndarray
    counts: np.ndarray
    constant: bool
    separations: np.ndarray
    note: str = "counts are lower bounds from multistart search"

    def rows(self):
        for y, c in zip(self.targets, self.counts):
            yield [*map(float, y), int(c)]

    def to_dict(self):
        return {"counts": self.counts.tolist(), "constant": self.constant,
                "min_count": int(self.counts.min()), "max_count": int(self.counts.max()),
                "min_separation": float(self.separations.min()), "note": self.note}


def preimage_count(f, domain_body, y_samples, seed=0, grid_step=None, n_random=None,
                   tol=None) -> SheetCounts:
    """Number of preimage clusters in ``domain_body`` for each target.

    ``y_samples`` is an array of targets or an integer ``n``, in which case
    targets are images of ``n`` points sampled from the body.
    """
    if np.isscalar(y_samples):
        xs = domain_body.sample(_rng.stream(seed, "sheet_targets"), int(y_samples))
        ys = f(xs)
    else:
        ys = np.atleast_2d(np.asarray(y_samples, dtype=float))
    counts, seps = [], []
    for i, y in enumerate(ys):
        cl, sep = discreteness_probe(f, y, domain_body, grid_step, n_random,
                                     _rng.child_seed(seed, "sheet", i), tol)
        counts.append(len(cl))
        seps.append(sep)
    counts = np.array(counts, dtype=int)
    return SheetCounts(ys, counts, bool(np.all(counts == counts[0])), np.array(seps))


# ---------------------------------------------------------------------------
# Hadamard-Levy integral


@dataclass
class HadamardLevyResult:
    s_max: float
    ds: float
    levels: np.ndarray
    m_hat: np.ndarray
    partial_sums: np.ndarray
    verdict: str
    quantity: str
    floor: float
    samples: int

    @property
    def integral_lower_bound(self):
        return float(self.partial_sums[-1]) if len(self.partial_sums) else 0.0

    def to_dict(self):
        return {"s_max": self.s_max, "ds": self.ds, "quantity": self.quantity,
                "integral_lower_bound": self.integral_lower_bound, "verdict": self.verdict,
                "floor": self.floor, "min_m_hat": float(np.min(self.m_hat)),
                "samples": self.samples,
                "note": "the operator norm is the literal integrand; the smallest singular "
                        "value is the quantity tied to invertibility"}


def hadamard_levy(f, domain_sampler, s_max=10.0, ds=0.01, seed=0, n_samples=20000,
                  quantity="operator_norm", floor=1e-2) -> HadamardLevyResult:
    """Right-endpoint sum of ``m(s) = min{|D_x f| : ||f(x)|| <= s}`` over ``[0, s_max]``.

    ``domain_sampler`` is a body (its center is always included) or a
    callable ``(rng, n) -> points``.  ``quantity`` is ``"operator_norm"`` or
    ``"smallest_singular_value"``.  Divergence cannot be shown from samples;
    the verdict is ``divergence-consistent`` when ``m(s) >= floor`` on the
    whole grid and ``not-established`` otherwise.
    """
    if quantity not in ("operator_norm", "smallest_singular_value"):
        raise ValueError(f"unknown quantity {quantity!r}")
    rng = _rng.stream(seed, "hadamard_levy")
    if callable(domain_sampler) and not hasattr(domain_sampler, "sample"):
        X = np.asarray(domain_sampler(rng, n_samples), dtype=float)
    else:
        X = np.concatenate([domain_sampler.center[None, :], domain_sampler.sample(rng, n_samples)])
    X = X.reshape(len(X), f.domain.dim)
    size = f.codomain.norm(f(X))
    sv = np.linalg.svd(jacobian_matrix(f, X), compute_uv=False)
    mag = sv[:, 0] if quantity == "operator_norm" else sv[:, -1]
    order = np.argsort(size, kind="stable")
    size, run_min = size[order], np.minimum.accumulate(mag[order])
    k = int(round(s_max / ds))
    levels = ds * np.arange(1, k + 1)
    idx = np.searchsorted(size, levels, side="right") - 1
    # an empty sublevel set gives no information; count it as zero
    m_hat = np.where(idx >= 0, run_min[np.maximum(idx, 0)], 0.0)
    partial = np.cumsum(m_hat * ds)
    verdict = "divergence-consistent" if np.all(m_hat >= floor) else "not-established"
    return HadamardLevyResult(float(s_max), float(ds), levels, m_hat, partial, verdict,
                              quantity, float(floor), len(X))


# ---------------------------------------------------------------------------
# dense-set certification and segment probes


@dataclass
class DenseScaleResult:
    points: np.ndarray
    profiles: list
    passed: bool
    alpha: Optional[float] = None
    beta: Optional[float] = None
    eta: Optional[float] = None
    gamma: Optional[float] = None
    image_radii: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def to_dict(self):
        return {"passed": self.passed, "alpha": self.alpha, "beta": self.beta,
                "eta": self.eta, "gamma": self.gamma, "image_radii": self.image_radii,
                "failures": self.failures, "points": self.points.tolist()}


def dense_scale_check(f, points, ladder=(0.4, 0.2, 0.1), budgets=None, seed=0, tol=None,
                      A_provider: Optional[Callable] = None) -> DenseScaleResult:
    """Scale profiles at every sample point with shared constants.

    Passes when every profile certifies; the reported constants are the
    worst over the points (smallest alpha, beta, eta and largest gamma).
    ``image_radii`` lists ``alpha * eta * r_max / 2`` per point, the radius of
    the image ball guaranteed around ``f(x)``.
    """
    tol = tol or DEFAULT
    pts = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, f.domain.dim)
    A_provider = A_provider or (lambda x: inverse_jacobian_map(f, x, tol.sigma_min_rel))
    profiles, failures = [], []
    for i, p in enumerate(pts):
        prof = certify_on_scales(f, p, A_provider, ladder, budgets, _rng.child_seed(seed, "dense", i),
                                 tol, accept={Classification.STRONG})
        profiles.append(prof)
        if not prof.certified:
            failures.append({"point": p.tolist(), "reason": prof.reason})
    if failures:
        return DenseScaleResult(pts, profiles, False, failures=failures)
    alpha = min(p.alpha for p in profiles)
    beta = min(p.beta for p in profiles)
    eta = min(p.eta for p in profiles)
    gamma = max(p.gamma for p in profiles)
    radii = [0.5 * alpha * eta * p.r_max for p in profiles]
    return DenseScaleResult(pts, profiles, True, alpha, beta, eta, gamma, radii)


@dataclass
class SegmentProbe:
    t: np.ndarray
    magnitudes: np.ndarray
    fraction_nondegenerate: float
    collapsed: list
    verdict: str

    def to_dict(self):
        return {"fraction_nondegenerate": self.fraction_nondegenerate,
                "collapsed": self.collapsed, "verdict": self.verdict,
                "min_magnitude": float(self.magnitudes.min())}


def segment_nondegeneracy_probe(f, p, q, n_grid=101, dd_floor=None) -> SegmentProbe:
    """One-sided directional derivatives of ``f`` along the segment ``[p, q]``.

    A run of two or more consecutive grid points whose derivative magnitude
    is at most ``dd_floor`` is reported as a collapsed sub-segment.  Verdicts:
    ``nondegenerate`` (no small values), ``dense`` (isolated small values
    only) and ``collapsed``.
    """
    dd_floor = DEFAULT.dd_floor if dd_floor is None else dd_floor
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    v = q - p
    length = float(f.domain.norm(v))
    if length == 0:
        raise ValueError("segment endpoints coincide")
    ts = np.linspace(0.0, 1.0, n_grid)
    h = 0.25 * length / max(n_grid - 1, 1)
    mags = np.empty(n_grid)
    for i, t in enumerate(ts):
        side = "-" if i == n_grid - 1 else "+"
        # the step is capped so the stencil stays inside the segment
        dd = directional_derivative(f, p + t * v, v / length, side=side, h=min(1e-3, h))
        mags[i] = float(f.codomain.norm(dd.value))
    small = mags <= dd_floor
    collapsed, i = [], 0
    while i < n_grid:
        if small[i]:
            j = i
            while j + 1 < n_grid and small[j + 1]:
                j += 1
            if j > i:
                collapsed.append([float(ts[i]), float(ts[j])])
            i = j + 1
        else:
            i += 1
    frac = float(np.mean(~small))
    verdict = "collapsed" if collapsed else ("nondegenerate" if frac == 1.0 else "dense")
    return SegmentProbe(ts, mags, frac, collapsed, verdict)


@dataclass
class GlobalReport:
    sheet_counts: Optional[SheetCounts] = None
    hadamard_levy: Optional[HadamardLevyResult] = None
    homeomorphism_verdict: Optional[DenseScaleResult] = None
    segments: list = field(default_factory=list)

    def to_dict(self):
        return {
            "sheet_counts": None if self.sheet_counts is None else self.sheet_counts.to_dict(),
            "hadamard_levy": None if self.hadamard_levy is None else self.hadamard_levy.to_dict(),
            "homeomorphism_verdict": None if self.homeomorphism_verdict is None
            else self.homeomorphism_verdict.to_dict(),
            "segments": [s.to_dict() for s in self.segments],
        }


__all__ = [
    "CertificationFailed", "OutOfChart", "NonConvergent", "LocalInverseChart", "build_chart",
    "invert", "inverse_derivative", "numerical_inverse_derivative", "newton_roots",
    "discreteness_probe", "preimage_count", "SheetCounts", "hadamard_levy",
    "HadamardLevyResult", "dense_scale_check", "DenseScaleResult",
    "segment_nondegeneracy_probe", "SegmentProbe", "GlobalReport",
]
