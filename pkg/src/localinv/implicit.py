"""Implicit functions and level-set ODE solving through ``F(t, x) = (t, g(t, x))``.

The graph of ``t -> h(t)`` with ``g(t, h(t)) = c`` is read off a local
inverse of ``F``: ``(t, h(t)) = F^{-1}(t, c)``.  An ODE ``u' = f(t, u)`` whose
right-hand side comes from ``g`` is solved by tracking the level set
``g(t, u(t)) = g(0, b)`` instead of stepping in time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _rng
from .inversion import CertificationFailed, NonConvergent, OutOfChart, build_chart, invert
from .maps import DegenerateDerivative, MapModel, jacobian_matrix
from .spaces import ProductSpace
from .tolerances import DEFAULT

CONVENTIONS = ("chain_rule", "paper")


class ChartFailure(RuntimeError):
    pass


class OutOfReach(RuntimeError):
    pass


def _split_dims(g):
    if not isinstance(g.domain, ProductSpace) or len(g.domain.factors) != 2:
        raise TypeError("g must be defined on a product of a parameter space and a state space")
    t_dim, x_dim = (s.dim for s in g.domain.factors)
    if g.codomain.dim != x_dim:
        raise ValueError("g must map into the state space")
    return t_dim, x_dim


def _blocks(g, t, x):
    t_dim, _ = _split_dims(g)
    J = jacobian_matrix(g, np.concatenate([np.atleast_1d(t), np.atleast_1d(x)]))
    return J[:, :t_dim], J[:, t_dim:]


@dataclass
class ImplicitProblem:
    g: MapModel
    a: np.ndarray
    b: np.ndarray
    c: Optional[np.ndarray] = None
    tol: object = DEFAULT

    def __post_init__(self):
        self.t_dim, self.x_dim = _split_dims(self.g)
        self.a = np.atleast_1d(np.asarray(self.a, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        gab = self.g(np.concatenate([self.a, self.b]))
        if self.c is None:
            self.c = gab
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        if float(self.g.codomain.norm(gab - self.c)) > self.tol.fp_tol:
            raise ValueError("the base point is not on the requested level set")
        _, Dx = _blocks(self.g, self.a, self.b)
        s = np.linalg.svd(Dx, compute_uv=False)
        if not s[-1] > self.tol.sigma_min_rel * max(s[0], 1e-300):
            raise DegenerateDerivative("D_x g is singular at the base point")


@dataclass
class OdeProblem:
    """``u' = f(t, u)``, ``u(0) = b`` with ``f`` derived from ``g``."""

    g: MapModel
    b: np.ndarray
    sign_convention: str = "chain_rule"
    tol: object = DEFAULT

    def __post_init__(self):
        if self.sign_convention not in CONVENTIONS:
            raise ValueError(f"unknown sign convention {self.sign_convention!r}")
        t_dim, _ = _split_dims(self.g)
        if t_dim != 1:
            raise ValueError("the ODE solver takes a one-dimensional time")
        self.implicit = ImplicitProblem(self.g, np.zeros(1), self.b, tol=self.tol)
        self.b = self.implicit.b

    @property
    def level(self):
        return self.implicit.c


def build_F(g) -> MapModel:
    """``F(t, x) = (t, g(t, x))`` with block Jacobian ``[[I, 0], [D_t g, D_x g]]``."""
    t_dim, x_dim = _split_dims(g)
    cod = ProductSpace((g.domain.factors[0], g.codomain))

    def evaluator(z):
        return np.concatenate([z[..., :t_dim], g(z)], axis=-1)

    jac = None
    if g.jacobian is not None:
        def jac(z):
            Jg = g.analytic_jacobian(z)
            J = np.zeros(z.shape[:-1] + (t_dim + x_dim, t_dim + x_dim))
            J[..., :t_dim, :t_dim] = np.eye(t_dim)
            J[..., t_dim:, :] = Jg
            return J

    return MapModel(g.domain, cod, evaluator, jac, g.domain_region, g.smoothness,
                    name=f"F[{g.name or 'g'}]")


@dataclass
class ImplicitPath:
    t: np.ndarray
    x: np.ndarray
    level_residuals: np.ndarray
    charts: int
    anchors: list = field(default_factory=list, repr=False)


class _Tracker:
    """Continuation of ``h`` along a path of parameters with chart reuse."""

    def __init__(self, problem, chart_radius=0.2, budgets=None, seed=0, max_halvings=8):
        self.p = problem
        self.F = build_F(problem.g)
        self.radius = chart_radius
        self.budgets = budgets
        self.seed = seed
        self.max_halvings = max_halvings
        self.t = problem.a.copy()
        self.x = problem.b.copy()
        self.chart = None
        self.charts = 0
        self.anchors = []

    def _anchor(self):
        z = np.concatenate([self.t, self.x])
        try:
            self.chart = build_chart(self.F, z, initial_radius=self.radius, budgets=self.budgets,
                                     seed=_rng.child_seed(self.seed, "anchor", self.charts),
                                     tol=self.p.tol)
        except (CertificationFailed, DegenerateDerivative) as exc:
            raise ChartFailure(f"no chart at t={self.t.tolist()}: {exc}") from exc
        self.charts += 1
        self.anchors.append(z)

    def _try(self, t):
        Y = np.concatenate([t, self.p.c])
        if self.chart is None or not self.chart.reaches(Y):
            return None
        try:
            z = invert(self.chart, Y, x0=np.concatenate([t, self.x]))
        except (OutOfChart, NonConvergent):
            return None
        return z[self.p.t_dim:]

    def advance(self, t_target):
        """Move the tracked point to ``t_target`` and return ``h(t_target)``."""
        t_target = np.atleast_1d(np.asarray(t_target, dtype=float))
        while True:
            x = self._try(t_target)
            if x is not None:
                self.t, self.x = t_target, x
                return x
            # re-anchor at the current point and step toward the target
            self._anchor()
            x = self._try(t_target)
            if x is not None:
                self.t, self.x = t_target, x
                return x
            d = t_target - self.t
            dist = float(np.linalg.norm(d))
            step = 0.9 * self.chart.s / max(dist, 1e-300)
            for _ in range(self.max_halvings + 1):
                t_mid = self.t + min(step, 1.0) * d
                x = self._try(t_mid)
                if x is not None:
                    break
                step /= 2.0
            else:
                raise OutOfReach(f"continuation stalled at t={self.t.tolist()}")
            self.t, self.x = t_mid, x
            if step >= 1.0:
                return x


def implicit_solve(problem: ImplicitProblem, t_query, chart_radius=0.2, budgets=None, seed=0,
                   return_path=False):
    """``h(t_query)`` with ``g(t_query, h) = c`` by chart inversion of ``F``.

    Charts are re-anchored along the straight path from ``a`` to ``t_query``;
    a failed step is halved up to 8 times before :class:`OutOfReach` is raised.
    """
    tr = _Tracker(problem, chart_radius, budgets, seed)
    x = tr.advance(t_query)
    if return_path:
        return x, tr
    return x


def implicit_derivative(problem: ImplicitProblem, t, h_t) -> np.ndarray:
    """``Dh(t) = -(D_x g)^{-1} D_t g`` at ``(t, h(t))``."""
    Dt, Dx = _blocks(problem.g, t, h_t)
    s = np.linalg.svd(Dx, compute_uv=False)
    if not s[-1] > problem.tol.sigma_min_rel * max(s[0], 1e-300):
        raise DegenerateDerivative("D_x g is singular along the graph")
    return -np.linalg.solve(Dx, Dt)


def f_from_g(g, sign_convention="chain_rule") -> MapModel:
    """Right-hand side ``f(t, x)`` attached to ``g``.

    ``chain_rule`` gives ``-(D_x g)^{-1} D_t g`` (the derivative of a curve on
    a level set); ``paper`` gives ``(D_x g)^{-1} D_t g``.  For a
    multi-dimensional parameter the result is the flattened matrix.
    """
    if sign_convention not in CONVENTIONS:
        raise ValueError(f"unknown sign convention {sign_convention!r}")
    t_dim, x_dim = _split_dims(g)
    sign = -1.0 if sign_convention == "chain_rule" else 1.0
    cod = type(g.codomain)(x_dim * t_dim) if t_dim > 1 else g.codomain

    def evaluator(z):
        J = jacobian_matrix(g, z)
        Dt, Dx = J[..., :t_dim], J[..., t_dim:]
        try:
            out = np.linalg.solve(Dx, Dt)
        except np.linalg.LinAlgError as exc:
            raise DegenerateDerivative("D_x g is singular") from exc
        return sign * out.reshape(z.shape[:-1] + (x_dim * t_dim,))

    return MapModel(g.domain, cod, evaluator, name=f"f[{sign_convention}]")


@dataclass
class OdeSolution:
    t: np.ndarray
    u: np.ndarray
    level_residuals: np.ndarray
    charts: int
    sign_convention: str

    def rows(self, defects=None):
        for i, (t, u, r) in enumerate(zip(self.t, self.u, self.level_residuals)):
            d = "" if defects is None or np.isnan(defects[i]) else float(defects[i])
            yield [float(t), *map(float, u), float(r), d]


def ode_solve(problem: OdeProblem, t_grid, chart_radius=0.2, budgets=None, seed=0) -> OdeSolution:
    """Level-set solution ``u(t_i)`` on ``t_grid`` (which starts at 0)."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or not len(t_grid) or t_grid[0] != 0:
        raise ValueError("t_grid must be a 1-D grid starting at 0")
    tr = _Tracker(problem.implicit, chart_radius, budgets, seed)
    us = [problem.b.copy()]
    for t in t_grid[1:]:
        us.append(tr.advance([t]))
    us = np.array(us)
    res = problem.g.codomain.norm(problem.g(np.column_stack([t_grid, us])) - problem.level)
    return OdeSolution(t_grid, us, res, tr.charts, problem.sign_convention)


def ode_defects(g, u_values, t_grid, sign_convention="chain_rule") -> np.ndarray:
    """Per-node defect of the central difference quotient against ``f``; NaN at the ends."""
    t = np.asarray(t_grid, dtype=float)
    u = np.asarray(u_values, dtype=float).reshape(len(t), -1)
    if len(t) < 3:
        raise ValueError("need at least 3 grid nodes")
    f = f_from_g(g, sign_convention)
    du = (u[2:] - u[:-2]) / (t[2:] - t[:-2])[:, None]
    rhs = f(np.column_stack([t[1:-1], u[1:-1]]))
    out = np.full(len(t), np.nan)
    out[1:-1] = np.linalg.norm(du - rhs, axis=-1)
    return out


def ode_residual_check(g, u_values, t_grid, sign_convention="chain_rule") -> float:
    """Largest interior defect ``||(u_{i+1} - u_{i-1})/(t_{i+1} - t_{i-1}) - f(t_i, u_i)||``."""
    return float(np.nanmax(ode_defects(g, u_values, t_grid, sign_convention)))


def rk4(f, t_grid, u0) -> np.ndarray:
    """Classical fourth-order Runge-Kutta for ``u' = f(t, u)`` with ``f`` taking ``(t, u)`` stacked."""
    t = np.asarray(t_grid, dtype=float)
    u = np.atleast_1d(np.asarray(u0, dtype=float))
    out = [u]

    def F(tt, uu):
        return f(np.concatenate([[tt], uu]))

    for t0, t1 in zip(t[:-1], t[1:]):
        h = t1 - t0
        k1 = F(t0, u)
        k2 = F(t0 + h / 2, u + h / 2 * k1)
        k3 = F(t0 + h / 2, u + h / 2 * k2)
        k4 = F(t1, u + h * k3)
        u = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(u)
    return np.array(out)
