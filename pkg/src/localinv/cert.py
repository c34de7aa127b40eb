"""Sampled certification of the property-A hierarchy.

For an anchor ``a``, a convex body ``C`` around it, an injective auxiliary
map ``A`` and targets ``y`` near ``f(a)``, the auxiliary map

    x -> x - A(f(x) - y)

has exactly the preimages ``f^{-1}(y) ∩ C`` as fixed points.  The
certifier samples targets, estimates the Lipschitz constant of each
auxiliary map from below, checks that it maps ``C`` into itself, and
classifies the result as strong (contractive), nonexpansive, weak
(quasi-nonexpansive or provably fixed-point free on a grid) or uncertified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from . import _rng
from .fixedpoint import GridTooLarge, grid_min_residual, probe_fixed_point_set
from .maps import BlockDiagonalMap, DegenerateDerivative, LinearMap, OutsideDomain, pair
from .spaces import Ball, DimensionMismatch, product_body
from .tolerances import DEFAULT


class Classification(str, Enum):
    STRONG = "StrongA"
    NONEXPANSIVE = "NonexpansiveA"
    WEAK_QUASI = "WeakA_Quasi"
    WEAK_NO_FIXED_POINT = "WeakA_NoFixedPoint"
    UNCERTIFIED = "Uncertified"

    def __str__(self):
        return self.value


# weakest first; used when combining certificates
_STRENGTH = [Classification.UNCERTIFIED, Classification.WEAK_NO_FIXED_POINT,
             Classification.WEAK_QUASI, Classification.NONEXPANSIVE, Classification.STRONG]


@dataclass(frozen=True)
class Budgets:
    targets: int = 16
    lipschitz_pairs: int = 2048
    self_map_samples: int = 512
    fixed_point_starts: int = 12
    grid_nodes_per_axis: Sequence[int] = (2000, 300, 60)

    def grid_step(self, body):
        n = self.grid_nodes_per_axis[min(body.dim, len(self.grid_nodes_per_axis)) - 1]
        return body.diameter / n

    def as_dict(self):
        return {"targets": self.targets, "lipschitz_pairs": self.lipschitz_pairs,
                "self_map_samples": self.self_map_samples,
                "fixed_point_starts": self.fixed_point_starts,
                "grid_nodes_per_axis": list(self.grid_nodes_per_axis)}


DEFAULT_BUDGETS = Budgets()


class TildeMap:
    """``x -> x - A(f(x) - y)`` restricted to a convex body."""

    def __init__(self, f, a, y, A, body, sigma_min_rel=DEFAULT.sigma_min_rel):
        n, m = f.domain.dim, f.codomain.dim
        a = np.asarray(a, dtype=float)
        y = np.asarray(y, dtype=float)
        if a.shape != (n,) or y.shape != (m,) or body.dim != n:
            raise DimensionMismatch("anchor, target and body must match the map's spaces")
        if isinstance(A, LinearMap):
            if A.shape != (n, m):
                raise DimensionMismatch(f"auxiliary map has shape {A.shape}, need {(n, m)}")
            if not A.is_injective(sigma_min_rel):
                raise DegenerateDerivative("auxiliary linear map is not injective")
        self.f, self.a, self.y, self.A, self.body = f, a, y, A, body

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x - self.A(self.f(x) - self.y)

    def with_target(self, y):
        return TildeMap(self.f, self.a, y, self.A, self.body)


def build_tilde(f, a, y, A, body) -> TildeMap:
    return TildeMap(f, a, y, A, body)


def pair_tilde(t1: TildeMap, t2: TildeMap) -> TildeMap:
    """Auxiliary map of the paired map with block-diagonal ``A``."""
    if not (isinstance(t1.A, LinearMap) and isinstance(t2.A, LinearMap)):
        raise TypeError("pairing needs linear auxiliary maps")
    return TildeMap(pair(t1.f, t2.f), np.concatenate([t1.a, t2.a]),
                    np.concatenate([t1.y, t2.y]), BlockDiagonalMap([t1.A, t2.A]),
                    product_body(t1.body, t2.body))


# ---------------------------------------------------------------------------
# sampled estimates


def _lipschitz_search(T, body, budget, seed, chunk=256):
    norm = body.space.norm
    diam = max(body.diameter, 1e-300)
    best, best_pair = 0.0, None
    min_sep = 1e-6 * diam
    used, k = 0, 0
    while used < budget:
        rng = _rng.stream(seed, "lipschitz", k)
        kind = k % 3
        if kind == 0 or (kind == 2 and best_pair is None):
            x = body.sample(rng, chunk, boundary_fraction=0.25)
            x2 = body.sample(rng, chunk, boundary_fraction=0.25)
        elif kind == 1:
            x = body.sample(rng, chunk, boundary_fraction=0.5)
            delta = diam * 10.0 ** rng.uniform(-5, -1, chunk)
            x2 = body.project(x + delta[:, None] * body.space.sample_sphere(rng, chunk))
        else:
            sigma = diam * 10.0 ** -(1 + (k // 3) % 4)
            p, q = best_pair
            half = chunk // 2
            x = body.project(p + sigma * rng.standard_normal((chunk, body.dim)))
            x2 = body.project(q + sigma * rng.standard_normal((chunk, body.dim)))
            # tight pairs around the running maximiser catch derivative-sized ratios
            mid = body.project(0.5 * (p + q) + sigma * rng.standard_normal((half, body.dim)))
            x[:half] = mid
            tight = diam * 10.0 ** rng.uniform(-5, -4, half)
            x2[:half] = body.project(mid + tight[:, None] * body.space.sample_sphere(rng, half))
        take = min(chunk, budget - used)
        x, x2 = x[:take], x2[:take]
        dx = norm(x - x2)
        # below this separation rounding in T dominates the quotient
        ok = dx > min_sep
        if np.any(ok):
            with np.errstate(over="ignore", invalid="ignore"):
                ratio = norm(T(x[ok]) - T(x2[ok])) / dx[ok]
            ratio = np.where(np.isfinite(ratio), ratio, np.inf)
            j = int(np.argmax(ratio))
            if ratio[j] > best:
                best, best_pair = float(ratio[j]), (x[ok][j].copy(), x2[ok][j].copy())
        used += take
        k += 1
    return best, best_pair


def estimate_lipschitz(T, body, budget=2048, seed=0) -> float:
    """Sampled lower bound on the Lipschitz constant of ``T`` on ``body``.

    Mixes uniform pairs, short-range pairs and refinement around the running
    maximiser.  Chunks are seeded by index, so a larger budget only adds
    pairs and the estimate never decreases.
    """
    if budget < 2:
        raise ValueError("budget must be at least 2")
    return _lipschitz_search(T, body, int(budget), seed)[0]


def check_self_map(T, body, budget=512, seed=0):
    """Sample ``body`` (half on its boundary) and check ``T(x)`` stays inside.

    Returns ``(ok, worst_violation)`` where the violation is the largest
    distance of an image point from the body.
    """
    rng = _rng.stream(seed, "self_map")
    x = np.concatenate([body.center[None, :], body.sample(rng, budget, boundary_fraction=0.5)])
    with np.errstate(over="ignore", invalid="ignore"):
        img = np.asarray(T(x))
    over = np.where(np.all(np.isfinite(img), axis=-1), body.overshoot(np.nan_to_num(img)), np.inf)
    inside = body.contains(np.nan_to_num(img)) & np.isfinite(over)
    return bool(np.all(inside)), float(np.max(np.where(inside, 0.0, over)))


def quasi_nonexpansive_check(T, body, fixed_points, budget=512, seed=0,
                             lip_tol=DEFAULT.lip_tol, fp_tol=DEFAULT.fp_tol):
    """Check ``||T(x) - p|| <= (1 + lip_tol) ||x - p||`` for sampled ``x``.

    Returns ``(ok, worst_ratio)``.
    """
    fixed_points = np.atleast_2d(np.asarray(fixed_points, dtype=float))
    if fixed_points.size == 0:
        raise ValueError("quasi-nonexpansiveness needs at least one fixed point")
    norm = body.space.norm
    res = norm(np.asarray(T(fixed_points)) - fixed_points)
    if np.any(res > fp_tol):
        raise ValueError(f"supplied fixed point has residual {float(res.max()):.3g} > {fp_tol}")
    rng = _rng.stream(seed, "quasi")
    x = body.sample(rng, budget, boundary_fraction=0.25)
    Tx = np.asarray(T(x))
    worst = 0.0
    for p in fixed_points:
        d = norm(x - p)
        ok = d > 0
        worst = max(worst, float(np.max(norm(Tx[ok] - p) / d[ok], initial=0.0)))
    return worst <= 1.0 + lip_tol, worst


# ---------------------------------------------------------------------------
# certificates


@dataclass
class PropertyACertificate:
    classification: Classification
    body: object
    s_radius: float
    y_samples: int
    pair_samples: int
    self_map_worst_violation: float
    seed: int
    lipschitz: Optional[float] = None
    min_residual: Optional[float] = None
    reason: str = ""
    per_target: list = field(default_factory=list, repr=False)

    @property
    def certified(self):
        return self.classification is not Classification.UNCERTIFIED

    def to_dict(self):
        return {
            "classification": self.classification.value,
            "lipschitz_estimate": self.lipschitz,
            "min_residual": self.min_residual,
            "s_radius": self.s_radius,
            "body": self.body.describe(),
            "y_samples": self.y_samples,
            "pair_samples": self.pair_samples,
            "self_map_worst_violation": self.self_map_worst_violation,
            "seed": self.seed,
            "reason": self.reason,
        }


def sample_targets(center, s, space, n, seed):
    """``n`` targets in the closed ball of radius ``s``, half on its sphere."""
    rng = _rng.stream(seed, "targets")
    return Ball(space, center, s).sample(rng, n, boundary_fraction=0.5)


def certify(f, a, A, body, s, budgets=None, seed=0, tol=None, targets=None,
            target_center=None):
    """Classify ``(f, a, A, body, s)`` in the property-A hierarchy.

    Targets are sampled from the ball of radius ``s`` around ``f(a)`` (or
    around ``target_center`` when given, e.g. the midpoint of the one-sided
    limits at a jump), or passed explicitly through ``targets``.
    """
    budgets = budgets or DEFAULT_BUDGETS
    tol = tol or DEFAULT
    a = np.asarray(a, dtype=float)

    def result(cls, **kw):
        return PropertyACertificate(cls, body, float(s), len(ys), budgets.lipschitz_pairs,
                                    result.worst_violation, seed, **kw)

    result.worst_violation = 0.0
    ys = np.empty((0, f.codomain.dim))
    if not s > 0:
        return result(Classification.UNCERTIFIED, reason="target radius must be positive")
    if not bool(body.contains(a, tol=0.0)) or float(body.boundary_distance(a)) <= 0:
        return result(Classification.UNCERTIFIED, reason="anchor is not interior to the body")
    center = f(a) if target_center is None else np.asarray(target_center, dtype=float)
    ys = np.atleast_2d(np.asarray(targets, dtype=float)) if targets is not None else \
        sample_targets(center, s, f.codomain, budgets.targets, seed)
    try:
        return _classify(f, a, A, body, ys, budgets, seed, tol, result)
    except OutsideDomain as exc:
        return result(Classification.UNCERTIFIED, reason=f"body leaves the map's domain: {exc}")


def _classify(f, a, A, body, ys, budgets, seed, tol, result):
    worst_violation = 0.0

    lips, selfs, records = [], [], []
    for i, y in enumerate(ys):
        T = TildeMap(f, a, y, A, body)
        sub = _rng.child_seed(seed, "target", i)
        ok, viol = check_self_map(T, body, budgets.self_map_samples, sub)
        L = estimate_lipschitz(T, body, budgets.lipschitz_pairs, sub)
        lips.append(L)
        selfs.append(ok)
        worst_violation = max(worst_violation, viol)
        result.worst_violation = worst_violation
        records.append({"y": y.tolist(), "lipschitz": L, "self_map": ok, "violation": viol})

    L_hat = max(lips)
    if all(selfs) and L_hat <= 1.0 - tol.strong_margin:
        return result(Classification.STRONG, lipschitz=L_hat, per_target=records)
    if all(selfs) and L_hat <= 1.0 + tol.lip_tol:
        return result(Classification.NONEXPANSIVE, lipschitz=L_hat, per_target=records)

    # weak branch: every target must be fixed-point free or quasi-nonexpansive
    no_fp, quasi, min_res = 0, 0, math.inf
    for i, (y, rec) in enumerate(zip(ys, records)):
        T = TildeMap(f, a, y, A, body)
        sub = _rng.child_seed(seed, "weak", i)
        fps = probe_fixed_point_set(T, body, budgets.fixed_point_starts, sub, tol=tol.fp_tol,
                                    cluster_rel=tol.cluster_rel)
        if len(fps):
            q_ok, ratio = quasi_nonexpansive_check(T, body, fps.points, budgets.self_map_samples,
                                                   sub, tol.lip_tol, tol.fp_tol)
            rec.update(fixed_points=len(fps), quasi_ratio=ratio)
            if not (q_ok and rec["self_map"]):
                return result(Classification.UNCERTIFIED, lipschitz=L_hat, per_target=records,
                              reason=f"target {i}: fixed points found but map is not "
                                     f"quasi-nonexpansive (ratio {ratio:.4g})")
            quasi += 1
            continue
        if body.dim > 3:
            return result(Classification.UNCERTIFIED, lipschitz=L_hat, per_target=records,
                          reason="no grid oracle: no fixed point found, but absence is "
                                 "not certifiable above dimension 3")
        try:
            r, _ = grid_min_residual(T, body, budgets.grid_step(body))
        except GridTooLarge as exc:
            return result(Classification.UNCERTIFIED, lipschitz=L_hat, per_target=records,
                          reason=str(exc))
        rec["grid_min_residual"] = r
        min_res = min(min_res, r)
        if r < tol.residual_floor:
            return result(Classification.UNCERTIFIED, lipschitz=L_hat, per_target=records,
                          min_residual=min_res,
                          reason=f"target {i}: no fixed point found but grid residual "
                                 f"{r:.3g} is below the floor {tol.residual_floor}")
        no_fp += 1
    if quasi == 0:
        return result(Classification.WEAK_NO_FIXED_POINT, lipschitz=L_hat, min_residual=min_res,
                      per_target=records)
    return result(Classification.WEAK_QUASI, lipschitz=L_hat,
                  min_residual=None if no_fp == 0 else min_res, per_target=records)


# ---------------------------------------------------------------------------
# scales


@dataclass
class ScaleRecord:
    r: float
    body: object
    certificate: PropertyACertificate

    def to_dict(self):
        return {"r": self.r, "certificate": self.certificate.to_dict()}


@dataclass
class ScaleProfile:
    anchor: np.ndarray
    records: list
    certified: bool
    alpha: Optional[float] = None
    beta: Optional[float] = None
    eta: Optional[float] = None
    gamma: Optional[float] = None
    r_max: Optional[float] = None
    reason: str = ""
    notes: dict = field(default_factory=dict)

    @property
    def constants(self):
        return (self.alpha, self.beta, self.eta, self.gamma)

    def to_dict(self):
        return {"anchor": np.asarray(self.anchor).tolist(), "certified": self.certified,
                "alpha": self.alpha, "beta": self.beta, "eta": self.eta, "gamma": self.gamma,
                "r_max": self.r_max, "reason": self.reason, "notes": self.notes,
                "records": [r.to_dict() for r in self.records]}


def _profile_from_records(anchor, records, notes=None):
    alphas, betas, ratios = [], [], []
    for rec in records:
        diam = rec.body.diameter
        alphas.append(rec.certificate.s_radius / diam)
        betas.append(float(rec.body.boundary_distance(anchor)) / diam)
        ratios.append(diam / rec.r)
    return ScaleProfile(anchor, records, True, min(alphas), min(betas), min(ratios), max(ratios),
                        max(rec.r for rec in records), notes=notes or {})


def certify_on_scales(f, a, A_provider: Callable, r_ladder, budgets=None, seed=0, tol=None,
                      accept=None, target_center=None) -> ScaleProfile:
    """Certify balls around ``a`` at every radius of a decreasing ladder.

    At rung ``r`` the candidates are ``ball(a, rho)`` with ``rho`` in
    ``{r/2, r/4}`` and target radii ``s`` in ``{rho/2, rho/4}``; the first
    certified candidate (with a classification in ``accept``) is kept.
    """
    a = np.asarray(a, dtype=float)
    accept = set(accept) if accept is not None else set(_STRENGTH[1:])
    r_ladder = list(r_ladder)
    if not r_ladder:
        raise ValueError("the radius ladder is empty")
    try:
        A = A_provider(a)
    except DegenerateDerivative as exc:
        return ScaleProfile(a, [], False, reason=f"degenerate auxiliary map at anchor: {exc}")
    records = []
    for i, r in enumerate(r_ladder):
        sub = _rng.child_seed(seed, "rung", i)
        chosen = None
        last = None
        for rho in (r / 2.0, r / 4.0):
            body = Ball(f.domain, a, rho)
            for s in (rho / 2.0, rho / 4.0):
                cert = certify(f, a, A, body, s, budgets, sub, tol, target_center=target_center)
                last = cert
                if cert.classification in accept:
                    chosen = ScaleRecord(float(r), body, cert)
                    break
            if chosen:
                break
        if chosen is None:
            return ScaleProfile(a, records, False,
                                reason=f"rung r={r:g}: no certified body ({last.reason or last.classification})")
        records.append(chosen)
    return _profile_from_records(a, records)


def weakest(*classes):
    return min(classes, key=_STRENGTH.index)


def pair_certificates(p1: ScaleProfile, p2: ScaleProfile) -> ScaleProfile:
    """Profile of the paired map from a profile and a C1 factor's profile.

    Constants follow the product construction ``C_a x ball(b, diam(C_a)/2)``:
    beta = min(beta1, 1/2)/sqrt2, alpha = min(alpha1, 1/2)/sqrt2,
    eta = min(eta1, 1)/sqrt2, gamma = sqrt2 max(gamma1, 1).  The product
    Lipschitz estimate is the larger of the factor estimates.
    """
    if not (p1.certified and p2.certified):
        return ScaleProfile(np.concatenate([p1.anchor, p2.anchor]), [], False,
                            reason="both profiles must be certified")
    b = np.asarray(p2.anchor, dtype=float)
    records, lips = [], []
    for r1, r2 in zip(p1.records, p2.records):
        c1, c2 = r1.certificate, r2.certificate
        tau = r1.body.diameter / 2.0
        body = product_body(r1.body, Ball(r2.body.space, b, tau))
        L1, L2 = c1.lipschitz, c2.lipschitz
        L = None if L1 is None or L2 is None else max(L1, L2)
        lips.append({"r": r1.r, "factor_estimates": [L1, L2], "combined_max": L,
                     "min_of_factors": None if L is None else min(L1, L2)})
        cert = PropertyACertificate(
            weakest(c1.classification, c2.classification), body,
            min(c1.s_radius, r1.body.diameter / 2.0), max(c1.y_samples, c2.y_samples),
            max(c1.pair_samples, c2.pair_samples),
            max(c1.self_map_worst_violation, c2.self_map_worst_violation), c1.seed,
            lipschitz=L, reason="combined from factor certificates")
        records.append(ScaleRecord(r1.r, body, cert))
    rt2 = math.sqrt(2.0)
    notes = {
        "lipschitz_combination": {
            "rule": "max",
            "detail": "under the Euclidean product norm the paired auxiliary map is "
                      "Lipschitz with the larger factor constant; taking the smaller "
                      "one is not a valid bound",
            "per_rung": lips,
        }
    }
    return ScaleProfile(np.concatenate([p1.anchor, b]), records, True,
                        alpha=min(p1.alpha, 0.5) / rt2, beta=min(p1.beta, 0.5) / rt2,
                        eta=min(p1.eta, 1.0) / rt2, gamma=rt2 * max(p1.gamma, 1.0),
                        r_max=min(p1.r_max, p2.r_max), notes=notes)
