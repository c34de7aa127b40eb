"""Maps between space models, their derivatives, and the pairing of two maps.

Evaluators and analytic Jacobians are written to broadcast over leading
axes: an evaluator receives an array of shape ``(..., n)`` and returns
``(..., m)``; a Jacobian returns ``(..., m, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .spaces import DimensionMismatch, ProductSpace, _as_points, product_body

SMOOTHNESS_TAGS = ("C1", "differentiable", "discontinuous", "unknown")

_EPS = np.finfo(float).eps


class DegenerateDerivative(ArithmeticError):
    """The derivative is not invertible within the relative singular-value margin."""


class OutsideDomain(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MapModel:
    domain: object
    codomain: object
    evaluator: Callable
    jacobian: Optional[Callable] = None
    domain_region: object = None
    smoothness: str = "unknown"
    name: str = ""

    def __post_init__(self):
        if self.smoothness not in SMOOTHNESS_TAGS:
            raise ValueError(f"unknown smoothness tag {self.smoothness!r}")

    def __call__(self, x):
        x = _as_points(x, self.domain.dim)
        if self.domain_region is not None and not np.all(self.domain_region.contains(x)):
            raise OutsideDomain(f"{self.name or 'map'} evaluated outside its domain region")
        y = np.asarray(self.evaluator(x), dtype=float)
        if y.shape != x.shape[:-1] + (self.codomain.dim,):
            raise DimensionMismatch(
                f"{self.name or 'map'} returned shape {y.shape} for input {x.shape}")
        return y

    def analytic_jacobian(self, x):
        x = _as_points(x, self.domain.dim)
        J = np.asarray(self.jacobian(x), dtype=float)
        return J.reshape(x.shape[:-1] + (self.codomain.dim, self.domain.dim))


# ---------------------------------------------------------------------------
# linear auxiliary maps


class LinearMap:
    """``v -> M v`` acting on stacks of vectors."""

    def __init__(self, matrix):
        M = np.array(matrix, dtype=float, ndmin=2)
        M.setflags(write=False)
        self.matrix = M

    def __repr__(self):
        return f"LinearMap({self.matrix.tolist()})"

    def __call__(self, v):
        return np.asarray(v, dtype=float) @ self.matrix.T

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def singular_values(self):
        return np.linalg.svd(self.matrix, compute_uv=False)

    @property
    def operator_norm(self):
        return float(self.singular_values[0])

    @property
    def smallest_singular_value(self):
        return float(self.singular_values[-1]) if self.matrix.shape[0] >= self.matrix.shape[1] else 0.0

    def is_injective(self, sigma_min_rel=1e-8):
        s = self.singular_values
        if self.matrix.shape[0] < self.matrix.shape[1] or s[0] == 0:
            return False
        return bool(s[-1] > sigma_min_rel * s[0])

    def inverse(self):
        return LinearMap(np.linalg.inv(self.matrix))


class BlockDiagonalMap(LinearMap):
    """Block-diagonal linear map applied block by block.

    Applying blocks separately keeps ``A(v1, v2)`` bit-identical to
    ``(A1 v1, A2 v2)``; a dense product with the zero blocks need not be.
    """

    def __init__(self, blocks):
        self.blocks = tuple(b if isinstance(b, LinearMap) else LinearMap(b) for b in blocks)
        rows = sum(b.shape[0] for b in self.blocks)
        cols = sum(b.shape[1] for b in self.blocks)
        M = np.zeros((rows, cols))
        r = c = 0
        for b in self.blocks:
            M[r:r + b.shape[0], c:c + b.shape[1]] = b.matrix
            r, c = r + b.shape[0], c + b.shape[1]
        super().__init__(M)

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        out, c = [], 0
        for b in self.blocks:
            out.append(b(v[..., c:c + b.shape[1]]))
            c += b.shape[1]
        return np.concatenate(out, axis=-1)


# ---------------------------------------------------------------------------
# derivatives


@dataclass(frozen=True)
class JacobianEstimate:
    matrix: np.ndarray
    method: str
    operator_norm: float
    smallest_singular_value: float
    sigma_min_rel: float = 1e-8

    @property
    def invertible(self) -> bool:
        m, n = self.matrix.shape
        return m == n and self.operator_norm > 0 and \
            self.smallest_singular_value > self.sigma_min_rel * self.operator_norm


def default_step(x):
    x = np.asarray(x, dtype=float)
    return np.cbrt(_EPS) * np.maximum(1.0, np.linalg.norm(x, axis=-1))


def central_difference(f, x, h=None):
    """Central-difference Jacobian of ``f`` at a point or a stack of points."""
    x = _as_points(x, f.domain.dim)
    h = default_step(x) if h is None else np.broadcast_to(np.asarray(h, float), x.shape[:-1])
    n = f.domain.dim
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        step = h[..., None] * e
        cols.append((f(x + step) - f(x - step)) / (2.0 * h[..., None]))
    return np.stack(cols, axis=-1)


def jacobian_matrix(f, x, method="auto", h=None):
    """Jacobian matrix (or stack of matrices) without the spectral summary."""
    if method == "auto":
        method = "analytic" if f.jacobian is not None else "central"
    if method == "analytic":
        if f.jacobian is None:
            raise ValueError(f"{f.name or 'map'} has no analytic Jacobian")
        return f.analytic_jacobian(x)
    if method == "central":
        return central_difference(f, x, h)
    raise ValueError(f"unknown Jacobian method {method!r}")


def jacobian(f, x, method="auto", h=None, sigma_min_rel=1e-8) -> JacobianEstimate:
    """Jacobian at a single point together with its extreme singular values."""
    x = _as_points(x, f.domain.dim)
    if x.ndim != 1:
        raise DimensionMismatch("jacobian() takes a single point")
    if method == "auto":
        method = "analytic" if f.jacobian is not None else "central"
    J = jacobian_matrix(f, x, method, h)
    if not np.all(np.isfinite(J)):
        raise FloatingPointError("non-finite Jacobian entries")
    s = np.linalg.svd(J, compute_uv=False)
    smin = float(s[-1]) if J.shape[0] >= J.shape[1] else 0.0
    label = method if method == "analytic" else f"central_difference({float(default_step(x) if h is None else h):.3g})"
    return JacobianEstimate(J, label, float(s[0]), smin, sigma_min_rel)


def inverse_jacobian_map(f, a, sigma_min_rel=1e-8, method="auto") -> LinearMap:
    """``(D_a f)^{-1}`` as a linear auxiliary map."""
    est = jacobian(f, a, method=method, sigma_min_rel=sigma_min_rel)
    if not est.invertible:
        raise DegenerateDerivative(
            f"derivative at {np.asarray(a).tolist()} is singular "
            f"(sigma_min={est.smallest_singular_value:.3g}, |D|={est.operator_norm:.3g})")
    Ainv = np.linalg.inv(est.matrix)
    resid = np.linalg.norm(Ainv @ est.matrix - np.eye(len(Ainv)), 2)
    if resid > 1e-10:
        raise DegenerateDerivative(f"inverse residual {resid:.3g} exceeds 1e-10")
    return LinearMap(Ainv)


@dataclass(frozen=True)
class DirectionalDerivative:
    value: np.ndarray
    converged: bool
    jump: float
    side: str
    estimates: tuple = field(default=(), repr=False)


def directional_derivative(f, x, v, side="+", h=None, jump_tol=1e-6, spread_tol=1e-3):
    """One-sided derivative of ``f`` at ``x`` along ``v``.

    Secant slopes are taken between ``x + s t v`` and ``x + s t v / 2`` for
    ``t = h, h/2, h/4`` (``s`` is the side sign) and Richardson-extrapolated,
    so the base value ``f(x)`` is not used.  ``jump`` extrapolates
    ``f(x + s 0+ v) - f(x)``; a nonzero jump or scattered secants mark the
    difference quotient as non-convergent.  For either side the returned value
    is the derivative *along v*, so the two sides agree where ``f`` is
    differentiable.
    """
    x = _as_points(x, f.domain.dim)
    v = _as_points(v, f.domain.dim)
    if side not in ("+", "-"):
        raise ValueError("side must be '+' or '-'")
    sgn = 1.0 if side == "+" else -1.0
    if h is None:
        h = 1e-3 * max(1.0, float(np.linalg.norm(x)))
    ts = h / 2.0 ** np.arange(4)                      # h, h/2, h/4, h/8
    pts = x + sgn * ts[:, None] * v
    phi = f(pts)
    f0 = f(x)
    slopes = [(phi[i] - phi[i + 1]) / (ts[i] - ts[i + 1]) for i in range(3)]
    r1 = [2.0 * slopes[i + 1] - slopes[i] for i in range(2)]
    r2 = (4.0 * r1[1] - r1[0]) / 3.0
    spread = float(np.max(np.abs(r1[1] - r1[0])))
    left_limit = phi[3] - ts[3] * r2              # extrapolated f(x + s 0+ v)
    jump = float(np.max(np.abs(left_limit - f0)))
    scale = max(1.0, float(np.max(np.abs(f0))))
    converged = spread <= spread_tol and jump <= jump_tol * scale
    return DirectionalDerivative(sgn * r2, converged, jump, side, tuple(slopes))


# ---------------------------------------------------------------------------
# pairing


def pair(f1: MapModel, f2: MapModel) -> MapModel:
    """The map ``(x1, x2) -> (f1(x1), f2(x2))`` between product spaces."""
    dom = ProductSpace((f1.domain, f2.domain))
    cod = ProductSpace((f1.codomain, f2.codomain))
    n1 = f1.domain.dim

    def evaluator(x):
        return np.concatenate([f1(x[..., :n1]), f2(x[..., n1:])], axis=-1)

    jac = None
    if f1.jacobian is not None and f2.jacobian is not None:
        m1, m2, n2 = f1.codomain.dim, f2.codomain.dim, f2.domain.dim

        def jac(x):
            J1 = f1.analytic_jacobian(x[..., :n1])
            J2 = f2.analytic_jacobian(x[..., n1:])
            J = np.zeros(x.shape[:-1] + (m1 + m2, n1 + n2))
            J[..., :m1, :n1] = J1
            J[..., m1:, n1:] = J2
            return J

    region = None
    if f1.domain_region is not None and f2.domain_region is not None:
        region = product_body(f1.domain_region, f2.domain_region)
    order = SMOOTHNESS_TAGS
    tag = max(f1.smoothness, f2.smoothness, key=order.index)
    return MapModel(dom, cod, evaluator, jac, region, tag,
                    name=f"pair({f1.name or 'f1'},{f2.name or 'f2'})")
