"""Chance-constrained safety filters posed as second-order cone programs.

Relative degree one (CLF + CBFs)::

    min  y
    s.t. ||[R u; sqrt(lam) delta]|| <= y
         q^T ubar - delta + c(p) ||P^T ubar|| <= 0          (stochastic CLC)
         e_i^T ubar - zeta - c(p) ||V_i^T ubar|| >= 0       (stochastic CBC, per barrier)
         u_min <= u <= u_max

Higher relative degree (Cantelli bound, no Lyapunov term)::

    min  y
    s.t. ||R (u - u_ref)|| <= y
         e^T ubar - zeta - c_r(p) ||V^T ubar|| >= 0
         u_min <= u <= u_max
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lie import AffineQuadMoments, BarrierSpec, LyapunovSpec, cbc_moments, clc_moments
from .mvgp import MVGPModel
from .socp import Cone, SOCProblem, SOCSolution, Status, solve

__all__ = [
    "ControllerParams",
    "ControlSpecs",
    "PolicyResult",
    "gaussian_coeff",
    "cantelli_coeff",
    "pole_placement_gains",
    "build_socp_rd1",
    "build_socp_rdr",
    "policy_step",
]


def _check_p(p: float) -> float:
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    return p


def gaussian_coeff(p: float) -> float:
    """Standard normal quantile, by bisection then Newton on ``erfc``."""
    p = _check_p(p)
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -gaussian_coeff(1.0 - p)
    tail = 1.0 - p
    lo, hi = 0.0, 40.0

    def upper(c):  # P(Z > c)
        return 0.5 * math.erfc(c / math.sqrt(2.0))

    while hi - lo > 1e-3:
        mid = 0.5 * (lo + hi)
        if upper(mid) > tail:
            lo = mid
        else:
            hi = mid
    c = 0.5 * (lo + hi)
    for _ in range(50):
        step = (upper(c) - tail) / (math.exp(-0.5 * c * c) / math.sqrt(2.0 * math.pi))
        c += step
        if abs(step) <= 1e-13 * max(1.0, abs(c)):
            break
    return c


def cantelli_coeff(p: float) -> float:
    """``sqrt(p / (1 - p))``: one-sided bound valid for any distribution."""
    p = _check_p(p)
    return math.sqrt(p / (1.0 - p))


def pole_placement_gains(poles: Sequence[float]) -> tuple[float, ...]:
    """Gains ``k`` so that the integrator chain closed with ``-k^T eta`` has the given poles.

    The closed loop characteristic polynomial is
    ``s^r + k_r s^(r-1) + ... + k_1``; its roots are the poles.
    """
    poles = np.asarray(poles, dtype=float)
    if poles.size == 0 or np.any(poles >= 0):
        raise ValueError("poles must be strictly negative")
    coeffs = np.real(np.poly(poles))  # [1, a_{r-1}, ..., a_0]
    return tuple(float(c) for c in coeffs[1:][::-1])


@dataclass(frozen=True)
class ControllerParams:
    p_safe: float = 0.99
    zeta: float = 0.0
    zeta_b: float = 0.0
    lam: float = 1.0
    R: np.ndarray = field(default_factory=lambda: np.eye(1))
    u_min: np.ndarray | None = None
    u_max: np.ndarray | None = None
    delta_L: float = 1e-4

    def __post_init__(self):
        _check_p(self.p_safe)
        if self.zeta < 0 or self.zeta_b < 0:
            raise ValueError("zeta and zeta_b must be nonnegative")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not 0 < self.delta_L < 1:
            raise ValueError("delta_L must lie in (0, 1)")
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        object.__setattr__(self, "R", R)
        m = R.shape[1]
        lo = np.full(m, -np.inf) if self.u_min is None else np.broadcast_to(np.asarray(self.u_min, float), (m,)).copy()
        hi = np.full(m, np.inf) if self.u_max is None else np.broadcast_to(np.asarray(self.u_max, float), (m,)).copy()
        if np.any(lo > hi):
            raise ValueError("u_min exceeds u_max")
        object.__setattr__(self, "u_min", lo)
        object.__setattr__(self, "u_max", hi)

    @property
    def m(self) -> int:
        return self.R.shape[1]

    @property
    def p_total(self) -> float:
        """Probability level after accounting for the Lipschitz confidence ``delta_L``."""
        return self.p_safe * (1.0 - self.delta_L)


@dataclass(frozen=True)
class ControlSpecs:
    """Which conditions the filter enforces.

    ``lyapunov`` set selects the relative degree one CLF-CBF program. Without
    it the reference-tracking Cantelli program is used.
    """

    barriers: tuple[BarrierSpec, ...]
    lyapunov: LyapunovSpec | None = None

    @property
    def rd1(self) -> bool:
        return self.lyapunov is not None


@dataclass
class PolicyResult:
    u: np.ndarray | None
    delta: float | None
    status: Status
    scbc_values: list[float]
    cbc_mean: float = float("nan")
    cbc_std: float = float("nan")
    solution: SOCSolution | None = None
    moments: list[AffineQuadMoments] = field(default_factory=list)


def _stoch_rows(coef: float, Vfac: np.ndarray, pad: int):
    """``coef * Vfac^T ubar`` split into ``(A z, b)`` with u starting at ``pad``."""
    VT = Vfac.T
    if coef == 0.0 or not np.any(VT):
        return np.zeros((0, pad + VT.shape[1] - 1)), np.zeros(0)
    A = np.hstack([np.zeros((VT.shape[0], pad)), coef * VT[:, 1:]])
    return A, coef * VT[:, 0]


def _scbc_cone(mo: AffineQuadMoments, coef: float, zeta: float, pad: int) -> Cone:
    A, b = _stoch_rows(coef, mo.Vfac, pad)
    c = np.concatenate([np.zeros(pad), mo.e[1:]])
    return Cone(A, b, c, mo.e[0] - zeta)


def scbc_value(mo: AffineQuadMoments, coef: float, zeta: float, u) -> float:
    return mo.mean(u) - zeta - coef * mo.std(u)


def build_socp_rd1(model: MVGPModel, lyap: LyapunovSpec, barriers: Sequence[BarrierSpec],
                   x, x_d, xdot_d, params: ControllerParams, return_moments: bool = False):
    """Decision vector ``z = (y, delta, u)``."""
    m = params.m
    coef = gaussian_coeff(params.p_safe)
    if coef < 0:
        raise ValueError("p_safe below 0.5 gives a nonconvex program")
    pad = 2
    obj = np.zeros(pad + m)
    obj[0] = 1.0
    A_obj = np.zeros((m + 1, pad + m))
    A_obj[:m, pad:] = params.R
    A_obj[m, 1] = math.sqrt(params.lam)
    cones = [Cone(A_obj, np.zeros(m + 1), obj.copy(), 0.0)]

    clc = clc_moments(model, lyap, x, x_d, xdot_d)
    A, b = _stoch_rows(coef, clc.Vfac, pad)
    c = np.concatenate([[0.0, 1.0], -clc.e[1:]])
    cones.append(Cone(A, b, c, -clc.e[0]))

    mos = [cbc_moments(model, bs, x) for bs in barriers]
    cones += [_scbc_cone(mo, coef, params.zeta, pad) for mo in mos]
    lb = np.concatenate([[-np.inf, -np.inf], params.u_min])
    ub = np.concatenate([[np.inf, np.inf], params.u_max])
    prob = SOCProblem(obj, cones, lb, ub)
    return (prob, mos, coef) if return_moments else prob


def build_socp_rdr(model: MVGPModel, b: BarrierSpec | Sequence[BarrierSpec], x,
                   params: ControllerParams, reference_u=None, return_moments: bool = False):
    """Decision vector ``z = (y, u)``; one Cantelli cone per barrier."""
    barriers = [b] if isinstance(b, BarrierSpec) else list(b)
    m = params.m
    coef = cantelli_coeff(params.p_safe)
    pad = 1
    u_ref = np.zeros(m) if reference_u is None else np.atleast_1d(np.asarray(reference_u, float))
    obj = np.zeros(pad + m)
    obj[0] = 1.0
    A_obj = np.hstack([np.zeros((m, pad)), params.R])
    cones = [Cone(A_obj, -params.R @ u_ref, obj.copy(), 0.0)]
    mos = [cbc_moments(model, bs, x) for bs in barriers]
    cones += [_scbc_cone(mo, coef, params.zeta, pad) for mo in mos]
    lb = np.concatenate([[-np.inf], params.u_min])
    ub = np.concatenate([[np.inf], params.u_max])
    prob = SOCProblem(obj, cones, lb, ub)
    return (prob, mos, coef) if return_moments else prob


def policy_step(model: MVGPModel, specs: ControlSpecs, x, aux: dict | None,
                params: ControllerParams) -> PolicyResult:
    """Solve the safety program at state ``x``.

    ``aux`` may carry ``x_d``, ``xdot_d`` (Lyapunov target) and ``u_ref``
    (reference input). An infeasible program yields ``u = None`` together
    with the status so the caller decides how to react.
    """
    aux = aux or {}
    x = np.asarray(x, dtype=float)
    if specs.rd1:
        x_d = np.asarray(aux.get("x_d"), dtype=float)
        xdot_d = np.asarray(aux.get("xdot_d", np.zeros_like(x_d)), dtype=float)
        prob, mos, coef = build_socp_rd1(model, specs.lyapunov, specs.barriers, x, x_d, xdot_d,
                                         params, return_moments=True)
        pad = 2
    else:
        prob, mos, coef = build_socp_rdr(model, specs.barriers, x, params, aux.get("u_ref"),
                                         return_moments=True)
        pad = 1
    sol = solve(prob)
    if sol.status is Status.INFEASIBLE:
        return PolicyResult(None, None, sol.status, [], solution=sol, moments=mos)
    u = sol.z_star[pad:]
    delta = float(sol.z_star[1]) if specs.rd1 else None
    vals = [scbc_value(mo, coef, params.zeta, u) for mo in mos]
    i = int(np.argmin(vals)) if vals else None
    res = PolicyResult(u.copy(), delta, sol.status, vals, solution=sol, moments=mos)
    if i is not None:
        res.cbc_mean = mos[i].mean(u)
        res.cbc_std = mos[i].std(u)
    return res
