"""Small second-order cone programs and a log-barrier interior-point solver.

Problems have the form::

    minimize    c^T z
    subject to  ||A_i z + b_i|| <= c_i^T z + d_i      for every cone i
                lb <= z <= ub

Coordinates with ``lb == ub`` are eliminated before solving. A phase-I slack
problem finds a strictly feasible start; phase II follows the central path of
``t c^T z + phi(z)`` with damped Newton steps.
"""
from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Cone", "SOCProblem", "SOCSolution", "Status", "solve", "kkt_residual"]

_BIG = 1e6            # artificial box for unbounded coordinates
_MAX_NEWTON = 200
_GAP_TOL = 1e-8
_INFEAS_TOL = 1e-7
_ARMIJO = 1e-4


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAXITER = "MaxIter"


@dataclass(frozen=True)
class Cone:
    """``||A z + b|| <= c^T z + d``."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float)).reshape(-1)
        A = np.asarray(self.A, dtype=float).reshape(b.size if c.size == 0 else -1, c.size)
        if b.size != A.shape[0]:
            raise ValueError("cone: b must have one entry per row of A")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", float(self.d))

    def slack(self, z) -> float:
        """``c^T z + d - ||A z + b||``; nonnegative when satisfied."""
        return float(self.c @ z + self.d - np.linalg.norm(self.A @ z + self.b))


@dataclass(frozen=True)
class SOCProblem:
    c: np.ndarray
    cones: tuple[Cone, ...] = ()
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        p = c.size
        lb = np.full(p, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).copy()
        ub = np.full(p, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).copy()
        if lb.shape != (p,) or ub.shape != (p,):
            raise ValueError("bounds must match the decision dimension")
        if np.any(lb > ub):
            raise ValueError("lower bound exceeds upper bound")
        cones = tuple(self.cones)
        for k in cones:
            if k.c.size != p:
                raise ValueError("cone dimension does not match the objective")
        if not cones and not (np.isfinite(lb).any() or np.isfinite(ub).any()):
            raise ValueError("problem needs at least one cone or bound")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "cones", cones)
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)

    @property
    def dim(self) -> int:
        return self.c.size

    def max_violation(self, z) -> float:
        z = np.asarray(z, dtype=float)
        v = [0.0, float(np.max(self.lb - z, initial=0.0)), float(np.max(z - self.ub, initial=0.0))]
        v += [-k.slack(z) for k in self.cones]
        return max(v)

    def dump(self) -> str:
        """Plain-text rendering for cross-checking with other solvers."""
        out = io.StringIO()
        np.set_printoptions(precision=17)
        out.write(f"minimize c^T z, z in R^{self.dim}\nc = {self.c.tolist()}\n")
        out.write(f"lb = {self.lb.tolist()}\nub = {self.ub.tolist()}\n")
        for i, k in enumerate(self.cones):
            out.write(f"cone {i}: ||A z + b|| <= c^T z + d\n  A = {k.A.tolist()}\n"
                      f"  b = {k.b.tolist()}\n  c = {k.c.tolist()}\n  d = {k.d!r}\n")
        return out.getvalue()


@dataclass(frozen=True)
class SOCSolution:
    z_star: np.ndarray
    status: Status
    kkt_residual: float
    iterations: int
    objective: float = float("nan")
    mu: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


# ---------------------------------------------------------------------------
# barrier machinery on a reduced problem
# ---------------------------------------------------------------------------

class _Barrier:
    """Log barrier over stacked cones and box bounds of a reduced problem."""

    def __init__(self, cones, lb, ub, relax=0.0):
        self.cones = [(k.A, k.b, k.c, k.d + relax) for k in cones]
        self.lb, self.ub = lb - relax, ub + relax
        self.has_lb = np.isfinite(self.lb)
        self.has_ub = np.isfinite(self.ub)
        self.nu = 2 * len(self.cones) + int(self.has_lb.sum() + self.has_ub.sum())

    def feasible(self, z) -> bool:
        if np.any(z[self.has_lb] <= self.lb[self.has_lb]) or np.any(z[self.has_ub] >= self.ub[self.has_ub]):
            return False
        for A, b, c, d in self.cones:
            t = c @ z + d
            v = A @ z + b
            if t <= 0 or t * t - v @ v <= 0:
                return False
        return True

    def value(self, z) -> float:
        val = -np.sum(np.log(z[self.has_lb] - self.lb[self.has_lb]))
        val -= np.sum(np.log(self.ub[self.has_ub] - z[self.has_ub]))
        for A, b, c, d in self.cones:
            t = c @ z + d
            v = A @ z + b
            val -= np.log(t * t - v @ v)
        return float(val)

    def grad_hess(self, z):
        p = z.size
        g = np.zeros(p)
        H = np.zeros((p, p))
        dl = np.where(self.has_lb, z - self.lb, np.inf)
        du = np.where(self.has_ub, self.ub - z, np.inf)
        g += -1.0 / dl + 1.0 / du
        H[np.diag_indices(p)] += 1.0 / dl**2 + 1.0 / du**2
        for A, b, c, d in self.cones:
            t = c @ z + d
            v = A @ z + b
            s = t * t - v @ v
            w = 2.0 * (t * c - A.T @ v)
            g -= w / s
            H += np.outer(w, w) / s**2 - 2.0 * (np.outer(c, c) - A.T @ A) / s
        return g, H


def _newton_dir(H, g):
    try:
        L = np.linalg.cholesky(H)
        return -np.linalg.solve(L.T, np.linalg.solve(L, g))
    except np.linalg.LinAlgError:
        return -np.linalg.lstsq(H, g, rcond=None)[0]


def _center(obj, bar: _Barrier, z, t, budget, stop=None):
    """Damped Newton on ``t obj^T z + phi(z)``. Returns (z, steps, converged).

    Inside the quadratic convergence region (decrement below 1/4) full steps
    are taken without a line search: the objective is too large there for
    an Armijo test to resolve the remaining decrease in floating point.
    """
    steps = 0
    f = t * obj @ z + bar.value(z)
    prev = np.inf
    while steps < budget:
        g, H = bar.grad_hess(z)
        g = g + t * obj
        dz = _newton_dir(H, g)
        lam2 = float(-g @ dz)
        if lam2 <= 1e-20 or not np.isfinite(lam2):
            return z, steps, True
        if lam2 < 0.0625:
            if lam2 >= prev or not bar.feasible(z + dz):
                return z, steps, True
            steps += 1
            z = z + dz
            f = t * obj @ z + bar.value(z)
            prev = lam2
            if stop is not None and stop(z):
                return z, steps, True
            continue
        steps += 1
        alpha = 1.0
        while alpha > 1e-14:
            zn = z + alpha * dz
            if bar.feasible(zn):
                fn = t * obj @ zn + bar.value(zn)
                if fn <= f + _ARMIJO * alpha * (g @ dz):
                    break
            alpha *= 0.5
        else:
            return z, steps, True  # no further progress possible in floating point
        z, f = zn, fn
        if stop is not None and stop(z):
            return z, steps, True
    return z, steps, False


def _initial_t(obj, bar: _Barrier, z) -> float:
    g, H = bar.grad_hess(z)
    try:
        Hi_c = np.linalg.solve(H, obj)
        Hi_g = np.linalg.solve(H, g)
    except np.linalg.LinAlgError:
        return 1.0
    denom = float(obj @ Hi_c)
    if denom <= 0:
        return 1.0
    t0 = -float(obj @ Hi_g) / denom
    return float(np.clip(t0, 1e-1, 1e3)) if np.isfinite(t0) else 1.0


def _barrier_method(obj, bar, z, budget):
    t = _initial_t(obj, bar, z)
    used = 0
    while True:
        z, steps, ok = _center(obj, bar, z, t, budget - used)
        used += steps
        if not ok:
            return z, t, used, False
        if bar.nu / t <= _GAP_TOL:
            return z, t, used, True
        t *= 10.0


def _phase_one(cones, lb, ub, z0):
    """Minimize a common slack ``s`` added to every constraint."""
    p = z0.size
    viol = [0.0]
    viol += list(lb[np.isfinite(lb)] - z0[np.isfinite(lb)])
    viol += list(z0[np.isfinite(ub)] - ub[np.isfinite(ub)])
    viol += [np.linalg.norm(k.A @ z0 + k.b) - (k.c @ z0 + k.d) for k in cones]
    s0 = max(viol) + 1.0
    ext = [Cone(np.hstack([k.A, np.zeros((k.A.shape[0], 1))]), k.b, np.append(k.c, 1.0), k.d) for k in cones]
    # bounds become z_i - lb_i + s > 0 and ub_i - z_i + s > 0
    for i in range(p):
        e = np.zeros(p + 1)
        if np.isfinite(lb[i]):
            e[i], e[p] = 1.0, 1.0
            ext.append(Cone(np.zeros((0, p + 1)), np.zeros(0), e.copy(), -lb[i]))
            e[:] = 0.0
        if np.isfinite(ub[i]):
            e[i], e[p] = -1.0, 1.0
            ext.append(Cone(np.zeros((0, p + 1)), np.zeros(0), e.copy(), ub[i]))
            e[:] = 0.0
    bar = _LinearAwareBarrier(ext, np.append(np.full(p, -np.inf), -s0 - 1e3 * (1 + abs(s0))),
                              np.append(np.full(p, np.inf), np.inf))
    obj = np.zeros(p + 1)
    obj[p] = 1.0
    w = np.append(z0, s0)
    t = _initial_t(obj, bar, w)
    used = 0
    while True:
        w, steps, ok = _center(obj, bar, w, t, _MAX_NEWTON - used, stop=lambda v: v[p] < 0)
        used += steps
        if w[p] < 0 or not ok or bar.nu / t <= _GAP_TOL * 1e-1:
            return w[:p], float(w[p]), used
        t *= 10.0


class _LinearAwareBarrier(_Barrier):
    """Barrier where zero-row cones are plain linear inequalities (degree one)."""

    def __init__(self, cones, lb, ub, relax=0.0):
        super().__init__([k for k in cones if k.A.shape[0]], lb, ub, relax)
        lin = [k for k in cones if not k.A.shape[0]]
        p = lb.size
        self.G = np.array([k.c for k in lin]).reshape(-1, p)
        self.h = np.array([k.d + relax for k in lin])
        self.nu += len(lin)

    def feasible(self, z) -> bool:
        return bool(np.all(self.G @ z + self.h > 0)) and super().feasible(z)

    def value(self, z) -> float:
        return super().value(z) - float(np.sum(np.log(self.G @ z + self.h)))

    def grad_hess(self, z):
        g, H = super().grad_hess(z)
        r = self.G @ z + self.h
        g = g - self.G.T @ (1.0 / r)
        H = H + (self.G.T / r**2) @ self.G
        return g, H


def _starting_point(lb, ub):
    z = np.zeros(lb.size)
    both = np.isfinite(lb) & np.isfinite(ub)
    z[both] = 0.5 * (lb[both] + ub[both])
    only_l = np.isfinite(lb) & ~np.isfinite(ub)
    z[only_l] = np.maximum(lb[only_l] + 1.0, 0.0)
    only_u = ~np.isfinite(lb) & np.isfinite(ub)
    z[only_u] = np.minimum(ub[only_u] - 1.0, 0.0)
    return z


def solve(p: SOCProblem) -> SOCSolution:
    """Solve ``p`` to a duality measure of ``1e-8``."""
    free, z_fix, E, cones, lb_art, ub_art = _reduce(p)
    obj = p.c[free]

    if not free.any():
        z = z_fix.copy()
        ok = p.max_violation(z) <= _INFEAS_TOL
        return SOCSolution(z, Status.OPTIMAL if ok else Status.INFEASIBLE, 0.0 if ok else np.inf,
                           0, float(p.c @ z))

    z0 = _starting_point(lb_art, ub_art)
    z, s, it1 = _phase_one(cones, lb_art, ub_art, z0)
    relax = 0.0
    if s >= 0.0:
        if s > _INFEAS_TOL:
            return SOCSolution(E @ z + z_fix, Status.INFEASIBLE, np.inf, it1,
                               extra={"phase1_slack": s})
        relax = s + 1e-10
    bar = _LinearAwareBarrier(cones, lb_art, ub_art, relax)
    zr, t, it2, ok = _barrier_method(obj, bar, z, _MAX_NEWTON)
    z = E @ zr + z_fix
    res = _kkt(obj, bar, zr, 1.0 / t)
    status = Status.OPTIMAL if ok else Status.MAXITER
    return SOCSolution(z, status, res, it1 + it2, float(p.c @ z), 1.0 / t,
                       extra={"phase1_slack": s, "relax": relax})


def _kkt(obj, bar: "_LinearAwareBarrier", z, mu) -> float:
    """Residual of the barrier KKT system with Newton-corrected duals.

    Dual estimates ``y_j = -mu (grad phi_j + hess phi_j ds_j)`` use the Newton
    step ``dz`` at ``t = 1/mu``; the plain estimate ``-mu grad phi_j`` has a
    stationarity error that is dominated by rounding once slacks are tiny.
    Returned value: relative stationarity + complementarity gap + dual cone
    infeasibility.
    """
    g, H = bar.grad_hess(z)
    dz = _newton_dir(H, g + obj / mu)
    stat = obj.astype(float).copy()
    gap = 0.0
    dual_inf = 0.0
    for A, b, c, d in bar.cones:
        t = c @ z + d
        v = A @ z + b
        s = t * t - v @ v
        dt, dv = c @ dz, A @ dz
        # grad of -log(t^2 - |v|^2) in (t, v) and its Hessian applied to (dt, dv)
        gt, gv = -2.0 * t / s, 2.0 * v / s
        wdot = 2.0 * t * dt - 2.0 * v @ dv
        ht = -2.0 * dt / s + 2.0 * t * wdot / s**2
        hv = 2.0 * dv / s - 2.0 * v * wdot / s**2
        yt, yv = -mu * (gt + ht), -mu * (gv + hv)
        stat -= yt * c + A.T @ yv
        gap += yt * t + yv @ v
        dual_inf = max(dual_inf, float(np.linalg.norm(yv) - yt))
    for i in np.flatnonzero(bar.has_lb):
        sl = z[i] - bar.lb[i]
        y = mu * (1.0 / sl - dz[i] / sl**2)
        stat[i] -= y
        gap += y * sl
        dual_inf = max(dual_inf, -y)
    for i in np.flatnonzero(bar.has_ub):
        sl = bar.ub[i] - z[i]
        y = mu * (1.0 / sl + dz[i] / sl**2)
        stat[i] += y
        gap += y * sl
        dual_inf = max(dual_inf, -y)
    if bar.G.size:
        r = bar.G @ z + bar.h
        y = mu * (1.0 / r - (bar.G @ dz) / r**2)
        stat -= bar.G.T @ y
        gap += float(y @ r)
        dual_inf = max(dual_inf, float(np.max(-y)))
    rel = np.linalg.norm(stat, np.inf) / max(1.0, np.linalg.norm(obj, np.inf))
    return float(rel + abs(gap) + max(dual_inf, 0.0))


def _reduce(p: SOCProblem):
    fixed = np.isclose(p.lb, p.ub, rtol=0.0, atol=1e-12)
    free = ~fixed
    z_fix = np.where(fixed, p.lb, 0.0)
    E = np.eye(p.dim)[:, free]
    cones = [Cone(k.A @ E, k.A @ z_fix + k.b, k.c @ E, k.c @ z_fix + k.d) for k in p.cones]
    lb, ub = p.lb[free], p.ub[free]
    lb_art = np.where(np.isfinite(lb), lb, -_BIG)
    ub_art = np.where(np.isfinite(ub), ub, _BIG)
    return free, z_fix, E, cones, lb_art, ub_art


def kkt_residual(p: SOCProblem, z, mu: float | None = None) -> float:
    """Barrier KKT residual at ``z`` (see :func:`_kkt`).

    When ``mu`` is not given, the barrier parameter that best balances
    ``c + mu grad phi(z) = 0`` in least squares is used.
    """
    z = np.asarray(z, dtype=float)
    free, _, _, cones, lb, ub = _reduce(p)
    if not free.any():
        return 0.0 if p.max_violation(z) <= _INFEAS_TOL else float("inf")
    bar = _LinearAwareBarrier(cones, lb, ub)
    zr = z[free]
    if not bar.feasible(zr):
        return float("inf")
    obj = p.c[free]
    if mu is None:
        g, _ = bar.grad_hess(zr)
        gg = float(g @ g)
        mu = -float(obj @ g) / gg if gg > 0 else 0.0
        if mu <= 0.0:
            return float(np.linalg.norm(obj, np.inf))
    return _kkt(obj, bar, zr, mu)
