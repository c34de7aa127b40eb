"""Finite-dimensional normed spaces, convex bodies and convexity geometry.

Points are 1-D float arrays; every routine that takes points also accepts a
stack of them with shape ``(..., dim)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _rng

# relative slack applied to ``||x - y|| >= eps`` so a rounded distance never
# admits a pair that is mathematically too close
_ADMISSIBLE_SLACK = 1e-12
_CONTAIN_TOL = 1e-12


class DimensionMismatch(ValueError):
    pass


def _as_points(v, dim):
    v = np.asarray(v, dtype=float)
    if v.ndim == 0 or v.shape[-1] != dim:
        raise DimensionMismatch(f"expected trailing dimension {dim}, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class NormedSpaceModel:
    """R^dim with the p-norm, ``p`` in [1, inf]."""

    dim: int
    p: float = 2.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.dim!r}")
        if not (self.p >= 1):
            raise ValueError(f"p must lie in [1, inf], got {self.p!r}")

    @property
    def strictly_convex(self) -> bool:
        return self.dim == 1 or 1 < self.p < np.inf

    @property
    def factors(self):
        return (self,)

    def norm(self, v):
        v = _as_points(v, self.dim)
        a = np.abs(v)
        if self.p == np.inf:
            return a.max(axis=-1)
        if self.p == 1:
            return a.sum(axis=-1)
        if self.p == 2:
            return np.sqrt((a * a).sum(axis=-1))
        return np.linalg.norm(v, ord=self.p, axis=-1)

    def sample_sphere(self, rng, n):
        g = rng.standard_normal((n, self.dim))
        nrm = self.norm(g)
        while np.any(nrm == 0):  # pragma: no cover - probability zero
            bad = nrm == 0
            g[bad] = rng.standard_normal((int(bad.sum()), self.dim))
            nrm = self.norm(g)
        return g / nrm[:, None]

    def describe(self):
        return {"dim": self.dim, "p": "inf" if self.p == np.inf else self.p}


@dataclass(frozen=True)
class ProductSpace:
    """Cartesian product with the Euclidean combination of factor norms."""

    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise ValueError("a product needs at least one factor")

    @property
    def dim(self) -> int:
        return sum(f.dim for f in self.factors)

    @property
    def strictly_convex(self) -> bool:
        return all(f.strictly_convex for f in self.factors)

    @property
    def slices(self):
        out, start = [], 0
        for f in self.factors:
            out.append(slice(start, start + f.dim))
            start += f.dim
        return out

    def split(self, v):
        v = _as_points(v, self.dim)
        return [v[..., sl] for sl in self.slices]

    def join(self, *parts):
        return np.concatenate([np.asarray(p, dtype=float) for p in parts], axis=-1)

    def norm(self, v):
        parts = self.split(v)
        sq = sum(f.norm(part) ** 2 for f, part in zip(self.factors, parts))
        return np.sqrt(sq)

    def sample_sphere(self, rng, n):
        g = rng.standard_normal((n, self.dim))
        return g / self.norm(g)[:, None]

    def describe(self):
        return {"product": [f.describe() for f in self.factors]}


def product_space(*spaces):
    return ProductSpace(tuple(spaces))


def norm(space, v):
    """The norm of ``v`` in ``space``."""
    return space.norm(v)


# ---------------------------------------------------------------------------
# convex bodies


class ConvexBody:
    """Closed bounded convex set: a norm ball or a product of bodies."""

    kind = "abstract"
    space = None
    center = None

    @property
    def dim(self):
        return self.space.dim

    def query(self, x):
        return self.contains(x), self.boundary_distance(x)


class Ball(ConvexBody):
    kind = "ball"

    def __init__(self, space, center, radius):
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        center = _as_points(center, space.dim).astype(float).copy()
        if center.ndim != 1:
            raise DimensionMismatch("ball center must be a single point")
        center.setflags(write=False)
        self.space = space
        self.center = center
        self.radius = float(radius)

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius:g})"

    @property
    def diameter(self):
        return 2.0 * self.radius

    def _offset_norm(self, x):
        x = _as_points(x, self.space.dim)
        return self.space.norm(x - self.center)

    def contains(self, x, tol=_CONTAIN_TOL):
        return self._offset_norm(x) <= self.radius + tol * max(1.0, self.radius)

    def boundary_distance(self, x):
        return np.abs(self.radius - self._offset_norm(x))

    def overshoot(self, x):
        """Distance from ``x`` to the body (0 inside)."""
        return np.maximum(self._offset_norm(x) - self.radius, 0.0)

    def project(self, x):
        """Radial retraction onto the ball (nearest point only for p = 2)."""
        x = _as_points(x, self.space.dim)
        d = x - self.center
        r = self.space.norm(d)
        scale = np.where(r > self.radius, self.radius / np.where(r > 0, r, 1.0), 1.0)
        return self.center + d * scale[..., None]

    def sample(self, rng, n, boundary_fraction=0.0):
        if self.radius == 0:
            return np.repeat(self.center[None, :], n, axis=0)
        u = self.space.sample_sphere(rng, n)
        rad = self.radius * rng.random(n) ** (1.0 / self.space.dim)
        nb = int(round(boundary_fraction * n))
        rad[:nb] = self.radius
        return self.center + u * rad[:, None]

    def grid_axes(self, step):
        return [self.center[i] + step * np.arange(-np.floor(self.radius / step),
                                                  np.floor(self.radius / step) + 1)
                for i in range(self.space.dim)]

    def describe(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius,
                "diameter": self.diameter, "space": self.space.describe()}


class ProductBody(ConvexBody):
    kind = "product"

    def __init__(self, factors: Sequence[ConvexBody]):
        self.factors = tuple(factors)
        self.space = ProductSpace(tuple(f.space for f in self.factors))
        center = np.concatenate([f.center for f in self.factors])
        center.setflags(write=False)
        self.center = center

    def __repr__(self):
        return f"ProductBody({', '.join(map(repr, self.factors))})"

    @property
    def diameter(self):
        return float(np.sqrt(sum(f.diameter ** 2 for f in self.factors)))

    def contains(self, x, tol=_CONTAIN_TOL):
        parts = self.space.split(x)
        ok = [f.contains(p, tol) for f, p in zip(self.factors, parts)]
        return np.logical_and.reduce(ok)

    def overshoot(self, x):
        parts = self.space.split(x)
        return np.sqrt(sum(f.overshoot(p) ** 2 for f, p in zip(self.factors, parts)))

    def boundary_distance(self, x):
        parts = self.space.split(x)
        inside = self.contains(x, tol=0.0)
        d_in = np.min([f.boundary_distance(p) for f, p in zip(self.factors, parts)], axis=0)
        return np.where(inside, d_in, self.overshoot(x))

    def project(self, x):
        parts = self.space.split(x)
        return self.space.join(*[f.project(p) for f, p in zip(self.factors, parts)])

    def sample(self, rng, n, boundary_fraction=0.0):
        # boundary samples put one randomly chosen factor on its own boundary
        cols = [f.sample(rng, n) for f in self.factors]
        nb = int(round(boundary_fraction * n))
        if nb:
            which = rng.integers(len(self.factors), size=nb)
            for k, f in enumerate(self.factors):
                rows = np.flatnonzero(which == k)
                if rows.size:
                    cols[k][rows] = f.sample(rng, rows.size, boundary_fraction=1.0)
        return np.concatenate(cols, axis=-1)

    def grid_axes(self, step):
        return [ax for f in self.factors for ax in f.grid_axes(step)]

    def describe(self):
        return {"kind": "product", "diameter": self.diameter,
                "factors": [f.describe() for f in self.factors]}


def ball(space, center, radius) -> Ball:
    return Ball(space, center, radius)


def interval(lo, hi) -> Ball:
    """The segment [lo, hi] as a ball of the real line."""
    return Ball(NormedSpaceModel(1), [(lo + hi) / 2.0], (hi - lo) / 2.0)


def product_body(*bodies) -> ProductBody:
    return ProductBody(bodies)


def body_queries(body, x):
    """Return ``(contained, boundary_distance)`` for a point."""
    contained, dist = body.query(x)
    return bool(contained), float(dist)


class Annulus:
    """``{x : inner <= ||x - center|| <= outer}``.

    Not convex; used only as a sampling and search region for preimage
    counting, never as a certification body.
    """

    kind = "annulus"

    def __init__(self, space, center, inner, outer):
        if not 0 <= inner < outer:
            raise ValueError("need 0 <= inner < outer")
        self.space = space
        self.center = _as_points(center, space.dim).astype(float)
        self.inner, self.outer = float(inner), float(outer)
        self._hull = Ball(space, self.center, self.outer)

    @property
    def dim(self):
        return self.space.dim

    @property
    def diameter(self):
        return 2.0 * self.outer

    def contains(self, x, tol=_CONTAIN_TOL):
        r = self.space.norm(_as_points(x, self.dim) - self.center)
        slack = tol * max(1.0, self.outer)
        return (r >= self.inner - slack) & (r <= self.outer + slack)

    def sample(self, rng, n, boundary_fraction=0.0):
        # rejection from the enclosing ball
        out = np.empty((0, self.dim))
        while len(out) < n:
            x = self._hull.sample(rng, 2 * n)
            out = np.concatenate([out, x[self.contains(x, tol=0.0)]])
        return out[:n]

    def grid_axes(self, step):
        return self._hull.grid_axes(step)

    def describe(self):
        return {"kind": "annulus", "center": self.center.tolist(), "inner": self.inner,
                "outer": self.outer, "space": self.space.describe()}


# ---------------------------------------------------------------------------
# modulus and characteristic of convexity


@dataclass(frozen=True)
class ModulusEstimate:
    epsilon: float
    value_upper_bound: float
    witness_pair: tuple
    sample_budget: int


class _ModulusPool:
    """Unit-vector pairs with their distance ``||x-y||`` and value ``1-||x+y||/2``.

    The pool does not depend on epsilon, so the estimate read off it is
    monotone in epsilon and in the budget (a larger budget extends the same
    sequence of chunks).
    """

    chunk = 512

    def __init__(self, space, budget, seed):
        self.space = space
        self.seed = seed
        xs, ys = self._fixed_pairs()
        self.X, self.Y = [xs], [ys]
        self._dist = [space.norm(xs - ys)]
        self._val = [1.0 - space.norm(xs + ys) / 2.0]
        used, k = 0, 0
        while used < budget:
            x, y = self._chunk(k)
            take = min(len(x), budget - used)
            x, y = x[:take], y[:take]
            self.X.append(x)
            self.Y.append(y)
            self._dist.append(space.norm(x - y))
            self._val.append(1.0 - space.norm(x + y) / 2.0)
            used += take
            k += 1
        self.X = np.concatenate(self.X)
        self.Y = np.concatenate(self.Y)
        self.dist = np.concatenate(self._dist)
        self.val = np.clip(np.concatenate(self._val), 0.0, 1.0)

    def _unit(self, v):
        n = self.space.norm(v)
        n = np.where(n == 0, 1.0, n)
        return v / n[:, None]

    def _fixed_pairs(self):
        d = self.space.dim
        e = np.eye(d)
        xs, ys = [e[0], e[0]], [e[0], -e[0]]
        for i in range(min(d, 8)):
            for j in range(i + 1, min(d, 8)):
                s, t = e[i] + e[j], e[i] - e[j]
                xs += [e[i], e[i], s / self.space.norm(s)]
                ys += [e[j], -e[j], t / self.space.norm(t)]
        return np.array(xs), np.array(ys)

    def _chunk(self, k):
        rng = _rng.stream(self.seed, "modulus", k)
        n, d = self.chunk, self.space.dim
        kind = k % 4
        if kind == 0:
            # pairs along a great-circle-like path from x towards -x
            x = self.space.sample_sphere(rng, n)
            w = self.space.sample_sphere(rng, n)
            th = np.pi * (1.0 - rng.random(n))
            return x, self._unit(np.cos(th)[:, None] * x + np.sin(th)[:, None] * w)
        if kind == 1:
            # both points on one face of the unit cube (flat pieces of the inf-ball)
            u, v = rng.uniform(-1, 1, (n, d)), rng.uniform(-1, 1, (n, d))
            i = rng.integers(d, size=n)
            s = rng.choice([-1.0, 1.0], size=n)
            u[np.arange(n), i] = s
            v[np.arange(n), i] = s
            return self._unit(u), self._unit(v)
        if kind == 2:
            # shared sign pattern (flat pieces of the 1-ball)
            s = rng.choice([-1.0, 1.0], size=(n, d))
            u = s * np.abs(rng.standard_normal((n, d)))
            v = s * np.abs(rng.standard_normal((n, d)))
            return self._unit(u), self._unit(v)
        return self._refine(rng, k)

    def _refine(self, rng, k):
        # perturb pairs on the current lower envelope of (distance, value)
        dist = np.concatenate(self._dist)
        val = np.concatenate(self._val)
        X = np.concatenate(self.X)
        Y = np.concatenate(self.Y)
        order = np.lexsort((val, -dist))
        running = np.minimum.accumulate(val[order])
        front = order[np.r_[True, running[1:] < running[:-1]]]
        n = self.chunk
        pick = front[np.linspace(0, len(front) - 1, n).round().astype(int)]
        sigma = 10.0 ** -(1 + (k // 4) % 4)
        x = self._unit(X[pick] + sigma * rng.standard_normal(X[pick].shape))
        y = self._unit(Y[pick] + sigma * rng.standard_normal(Y[pick].shape))
        return x, y

    def admissible(self, eps):
        return self.dist >= eps * (1.0 + _ADMISSIBLE_SLACK)

    def query(self, eps):
        mask = self.admissible(eps)
        # (e0, -e0) is admissible for every eps <= 2 and has value exactly 1
        best, arg = 1.0, 1
        if np.any(mask):
            idx = np.flatnonzero(mask)
            j = idx[np.argmin(self.val[idx])]
            if self.val[j] < best:
                best, arg = float(self.val[j]), j
        return best, (self.X[arg].copy(), self.Y[arg].copy())


def modulus_of_convexity(space, epsilon, budget=20000, seed=0) -> ModulusEstimate:
    """Sampled upper bound on the modulus of convexity at ``epsilon``.

    The infimum of ``1 - ||x+y||/2`` over unit ``x, y`` with
    ``||x-y|| >= epsilon`` is bounded from above by the best admissible pair
    in a seeded candidate pool.  Never increases with the budget.
    """
    if not 0 <= epsilon <= 2:
        raise ValueError("epsilon must lie in [0, 2]")
    pool = _ModulusPool(space, int(budget), seed)
    value, witness = pool.query(float(epsilon))
    return ModulusEstimate(float(epsilon), value, witness, int(budget))


def characteristic_of_convexity(space, budget=20000, seed=0, tol_zero=1e-9) -> float:
    """Lower bound on sup{eps : modulus(eps) = 0}.

    Uses the same pool as :func:`modulus_of_convexity`; the sampled modulus is
    a nondecreasing step function of epsilon, so the largest epsilon whose
    estimate is below ``tol_zero`` is read off the pool exactly instead of
    being bisected for.
    """
    pool = _ModulusPool(space, int(budget), seed)
    zero = pool.val <= tol_zero
    if not np.any(zero):
        return 0.0
    eps = float(np.max(pool.dist[zero]) / (1.0 + _ADMISSIBLE_SLACK))
    return min(eps, 2.0)

