"""Lipschitz bounds on the learned drift and self-triggering hold times.

Both bounds concern ``f(x) = F(x) ubar`` for a fixed input on a box around
the current state. The analytic bound holds with probability ``1 - delta_L``
over the posterior; the numeric estimate maximizes finite-difference slopes
of posterior sample paths on a grid.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .lie import BarrierSpec
from .mvgp import MVGPModel

__all__ = [
    "RegionBox",
    "LipschitzMode",
    "LipschitzReport",
    "lipschitz_analytic",
    "lipschitz_numeric",
    "state_deviation_bound",
    "tau_rd1",
    "tau_rdr",
    "grad_h_bound",
]

MAX_GRID_POINTS = 10_000


@dataclass(frozen=True)
class RegionBox:
    center: np.ndarray
    half_widths: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        w = np.broadcast_to(np.asarray(self.half_widths, dtype=float), c.shape).copy()
        if np.any(w <= 0):
            raise ValueError("half_widths must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_widths", w)

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def diameter(self) -> float:
        return float(2.0 * np.linalg.norm(self.half_widths))

    def axes(self, per_axis: int) -> list[np.ndarray]:
        return [np.linspace(c - w, c + w, per_axis) for c, w in zip(self.center, self.half_widths)]

    def grid(self, per_axis: int) -> np.ndarray:
        """Grid points in C order, shape ``(per_axis**dim, dim)``."""
        if per_axis < 2:
            raise ValueError("need at least two grid points per axis")
        if per_axis**self.dim > MAX_GRID_POINTS:
            raise ValueError(f"grid of {per_axis}^{self.dim} points exceeds {MAX_GRID_POINTS}")
        mesh = np.meshgrid(*self.axes(per_axis), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def spacing(self, per_axis: int) -> np.ndarray:
        return 2.0 * self.half_widths / (per_axis - 1)


class LipschitzMode(str, enum.Enum):
    ANALYTIC = "Analytic"
    NUMERIC = "Numeric"


@dataclass(frozen=True)
class LipschitzReport:
    L_f: float
    per_entry: np.ndarray
    delta_L: float
    mode: LipschitzMode
    kappa: np.ndarray | None = None      # per-entry derivative std bound
    L_kappa: np.ndarray | None = None    # per-input Lipschitz constant of the derivative kernel
    diameter: float | None = None


def _combine(per_entry: np.ndarray) -> float:
    n = per_entry.shape[0]
    return float(np.sqrt(np.sum(per_entry**2) / n**2))


# -- posterior pieces on a grid ---------------------------------------------

class _GridPosterior:
    """Posterior of ``f = F ubar`` restricted to grid points."""

    def __init__(self, model: MVGPModel, u, region: RegionBox, per_axis: int):
        if region.dim != model.n:
            raise ValueError("region dimension does not match the model")
        self.model = model
        self.ub = np.concatenate([[1.0], np.atleast_1d(np.asarray(u, dtype=float))])
        self.shape = (per_axis,) * model.n
        self.h = region.spacing(per_axis)
        self.X = region.grid(per_axis)
        kern = model.kernel
        self.P = np.zeros((model.n, model.n))
        self.P[np.ix_(kern._idx, kern._idx)] = kern.lengthscale_inv
        self.s = kern.signal_var
        self.bub = float(self.ub @ model.params.B @ self.ub)
        if model.k:
            self.wu = model._W @ self.ub
            self.K = kern.gram(self.X, model.data.X)
            self.Cu = self.K * self.wu[None, :]
        else:
            self.wu = np.zeros(0)
            self.K = np.zeros((len(self.X), 0))
            self.Cu = self.K

    def mean(self) -> np.ndarray:
        M0 = np.stack([np.asarray(self.model.mean_fn(x), dtype=float) @ self.ub for x in self.X])
        if self.model.k:
            M0 = M0 + self.Cu @ self.model._alpha
        return M0

    def deriv_cross(self, j: int) -> np.ndarray:
        """``d/dx_j`` of ``Cu`` at every grid point, shape ``(G, k)``."""
        if not self.model.k:
            return self.K
        D = self.X[:, None, :] - self.model.data.X[None, :, :]
        return -(D @ self.P[:, j]) * self.Cu

    def grid_gradient(self, values: np.ndarray, axis_offset: int = 0) -> list[np.ndarray]:
        """Finite-difference partials of values laid out on the grid."""
        shp = values.shape[:axis_offset] + self.shape + values.shape[axis_offset + 1:]
        V = values.reshape(shp)
        return [np.gradient(V, self.h[j], axis=axis_offset + j).reshape(values.shape)
                for j in range(len(self.shape))]


# -- analytic bound -----------------------------------------------------------

def lipschitz_analytic(model: MVGPModel, u, region: RegionBox, delta_L: float,
                       grid: int = 10, chunk: int = 256) -> LipschitzReport:
    """High-probability bound on ``|d f_i / d x_j|`` over ``region``.

    Each entry is ``beta kappa + 12 sqrt(6n) max(kappa, sqrt(r A_ii L_kappa))``
    plus the largest slope of the posterior mean, where ``kappa`` bounds the
    posterior standard deviation of the derivative and ``L_kappa`` is the grid
    Lipschitz constant of the derivative kernel in its second argument.
    """
    if not 0.0 < delta_L < 1.0:
        raise ValueError("delta_L must lie in (0, 1)")
    gp = _GridPosterior(model, u, region, grid)
    n = model.n
    A = model.params.A
    G = len(gp.X)
    kappa_B = np.empty(n)
    L_kappa = np.zeros(n)
    for j in range(n):
        prior_diag = gp.bub * gp.s * gp.P[j, j]
        D = gp.deriv_cross(j)
        if model.k:
            S = model.solve(D.T)                       # k x G
            diag = prior_diag - np.einsum("gi,ig->g", D, S)
        else:
            S = np.zeros((0, G))
            diag = np.full(G, prior_diag)
        kappa_B[j] = max(float(diag.max()), 0.0)
        # derivative kernel k_j(a, x') for anchors a, differentiated along the grid in x'
        for lo in range(0, G, chunk):
            a = gp.X[lo:lo + chunk]
            d = a[:, None, :] - gp.X[None, :, :]
            Pd = d @ gp.P[:, j]
            q = np.einsum("agi,ij,agj->ag", d, gp.P, d)
            vals = gp.bub * gp.s * (gp.P[j, j] - Pd**2) * np.exp(-0.5 * q)
            if model.k:
                vals = vals - D[lo:lo + chunk] @ S
            grads = gp.grid_gradient(vals, axis_offset=1)
            gnorm = np.sqrt(sum(g**2 for g in grads))
            L_kappa[j] = max(L_kappa[j], float(gnorm.max()))

    mu = gp.mean()                                      # G x n
    dmu = gp.grid_gradient(mu)                          # list over j of G x n
    mean_slope = np.array([[np.abs(dmu[j][:, i]).max() for j in range(n)] for i in range(n)])

    beta = math.sqrt(2.0 * math.log(2.0 * n * n / delta_L))
    r = region.diameter
    Aii = np.diag(A)
    kappa = np.sqrt(np.outer(Aii, kappa_B))            # kappa[i, j]
    tail = np.sqrt(r * np.outer(Aii, L_kappa))
    per = beta * kappa + 12.0 * math.sqrt(6.0 * n) * np.maximum(kappa, tail) + mean_slope
    return LipschitzReport(_combine(per), per, float(delta_L), LipschitzMode.ANALYTIC,
                           kappa=kappa, L_kappa=L_kappa, diameter=r)


# -- numeric estimate -------------------------------------------------------

def lipschitz_numeric(model: MVGPModel, u, region: RegionBox, grid: int = 10,
                      samples: int = 20, seed=0, delta_L: float = float("nan")) -> LipschitzReport:
    """Largest finite-difference slope over ``samples`` joint posterior draws."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    gp = _GridPosterior(model, u, region, grid)
    n = model.n
    mu = gp.mean()
    K = gp.bub * model.kernel.gram(gp.X, gp.X)
    if model.k:
        K = K - gp.Cu @ model.solve(gp.Cu.T)
    K = 0.5 * (K + K.T)
    w, V = np.linalg.eigh(K)
    LK = V * np.sqrt(np.clip(w, 0.0, None))
    wa, Va = np.linalg.eigh(model.params.A)
    LA = Va * np.sqrt(np.clip(wa, 0.0, None))
    per = np.zeros((n, n))
    for _ in range(samples):
        Z = rng.standard_normal((len(gp.X), n))
        f = mu + LK @ Z @ LA.T
        for j, d in enumerate(gp.grid_gradient(f)):
            per[:, j] = np.maximum(per[:, j], np.abs(d).max(axis=0))
    return LipschitzReport(_combine(per), per, delta_L, LipschitzMode.NUMERIC)


# -- triggering -------------------------------------------------------------

def state_deviation_bound(xdot_norm: float, L_f: float, s: float) -> float:
    """``||xdot|| (exp(s L_f) - 1) / L_f``, with its ``L_f -> 0`` limit."""
    if L_f < 0 or s < 0:
        raise ValueError("L_f and s must be nonnegative")
    if L_f == 0.0:
        return float(s * xdot_norm)
    return float(xdot_norm * math.expm1(s * L_f) / L_f)


def _tau(L_f: float, ratio: float) -> float:
    # root of (exp(L_f tau) - 1) / L_f = ratio
    if L_f == 0.0:
        return ratio
    return math.log1p(L_f * ratio) / L_f


def tau_rd1(L_f: float, L_h: float, L_alpha: float, zeta: float, xdot_norm: float) -> float:
    """Longest hold keeping the relative degree one condition above zero."""
    if min(L_f, L_h, L_alpha, zeta, xdot_norm) < 0:
        raise ValueError("inputs must be nonnegative")
    denom = (L_f + L_alpha) * L_h * xdot_norm
    if denom == 0.0:
        return math.inf
    return _tau(L_f, zeta / denom)


def tau_rdr(L_f: float, L_h: float, zeta_b: float, xdot_norm: float) -> float:
    """Longest hold for the higher relative degree condition."""
    if min(L_f, L_h, zeta_b, xdot_norm) < 0:
        raise ValueError("inputs must be nonnegative")
    if xdot_norm == 0.0 or L_h == 0.0:
        return math.inf
    return _tau(L_f, zeta_b / (L_h * xdot_norm))


def grad_h_bound(b: BarrierSpec, region: RegionBox, grid: int = 10) -> float:
    return float(max(np.linalg.norm(b.grad_h(x)) for x in region.grid(grid)))
