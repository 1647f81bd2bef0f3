"""Simulated plants, their barrier and Lyapunov functions, and reference inputs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .lie import BarrierSpec, LyapunovSpec

__all__ = [
    "PendulumParams",
    "AckermannParams",
    "EvaluationAtObstacleCenter",
    "pendulum_f_g",
    "ackermann_f_g",
    "control_affine_matrix",
    "pendulum_energy",
    "pendulum_barrier",
    "ackermann_barriers",
    "ackermann_clf",
    "epsilon_greedy_reference",
    "integrate_step",
    "StepRecord",
    "TrajectoryLog",
    "Scenario",
    "build_scenario",
    "run_closed_loop",
]


class EvaluationAtObstacleCenter(ValueError):
    pass


@dataclass(frozen=True)
class PendulumParams:
    m: float = 1.0
    l: float = 1.0
    g: float = 10.0
    theta_c: float = math.radians(45.0)
    delta_col: float = math.radians(22.5)

    def __post_init__(self):
        if min(self.m, self.l, self.g) <= 0:
            raise ValueError("mass, length and gravity must be positive")
        if not 0 < self.delta_col < math.pi / 2:
            raise ValueError("delta_col must lie in (0, pi/2)")


@dataclass(frozen=True)
class AckermannParams:
    L_wheelbase: float = 1.0
    obstacles: tuple[tuple[float, float, float], ...] = ()
    q1: float = 0.7
    q2: float = 0.3
    w1: float = 0.9
    w2: float = 1.5
    gamma_h: float = 5.0
    gamma_V: float = 10.0

    def __post_init__(self):
        if self.L_wheelbase <= 0:
            raise ValueError("wheelbase must be positive")
        obs = tuple((float(a), float(b), float(r)) for a, b, r in self.obstacles)
        if any(r <= 0 for _, _, r in obs):
            raise ValueError("obstacle radius must be positive")
        if min(self.q1, self.q2, self.w1, self.w2, self.gamma_h, self.gamma_V) <= 0:
            raise ValueError("weights and gains must be positive")
        object.__setattr__(self, "obstacles", obs)


# -- dynamics ----------------------------------------------------------------

def pendulum_f_g(params: PendulumParams, x):
    theta, omega = float(x[0]), float(x[1])
    f = np.array([omega, -(params.g / params.l) * math.sin(theta)])
    g = np.array([[0.0], [1.0 / (params.m * params.l)]])
    return f, g


def ackermann_f_g(params: AckermannParams, x):
    th = float(x[2])
    g = np.array([[math.cos(th), 0.0], [math.sin(th), 0.0], [0.0, 1.0 / params.L_wheelbase]])
    return np.zeros(3), g


def control_affine_matrix(f_g: Callable) -> Callable:
    """Turn ``x -> (f, g)`` into ``x -> F(x) = [f g]``."""
    def F(x):
        f, g = f_g(x)
        return np.column_stack([f, g])
    return F


def pendulum_energy(params: PendulumParams, x) -> float:
    th, om = x
    return 0.5 * params.m * params.l**2 * om**2 - params.m * params.g * params.l * math.cos(th)


# -- barrier and Lyapunov functions -----------------------------------------

def pendulum_barrier(params: PendulumParams, k_alpha: Sequence[float]) -> BarrierSpec:
    """``h = cos(delta) - cos(theta - theta_c)``; relative degree two."""
    tc, dc = params.theta_c, params.delta_col

    def h(x):
        return math.cos(dc) - math.cos(x[0] - tc)

    def grad(x):
        return np.array([math.sin(x[0] - tc), 0.0])

    def hess(x):
        return np.array([[math.cos(x[0] - tc), 0.0], [0.0, 0.0]])

    return BarrierSpec(h, grad, hess, k_alpha=tuple(k_alpha), name="pendulum")


def _obstacle_barrier(q1, q2, o, r, alpha) -> BarrierSpec:
    ox, oy = o

    def parts(x):
        dx, dy = x[0] - ox, x[1] - oy
        d2 = dx * dx + dy * dy
        if d2 < 1e-18:
            raise EvaluationAtObstacleCenter("state coincides with obstacle center")
        return dx, dy, d2, x[2] - math.atan2(dy, dx)

    def h(x):
        dx, dy, d2, a = parts(x)
        return q1 * (d2 - r * r) + q2 * math.cos(a)

    def grad(x):
        dx, dy, d2, a = parts(x)
        s = q2 * math.sin(a)
        return np.array([2 * q1 * dx - s * dy / d2, 2 * q1 * dy + s * dx / d2, -s])

    def hess(x, eps=1e-6):
        x = np.asarray(x, dtype=float)
        H = np.empty((3, 3))
        for j in range(3):
            e = np.zeros(3)
            e[j] = eps
            H[:, j] = (grad(x + e) - grad(x - e)) / (2 * eps)
        return 0.5 * (H + H.T)

    return BarrierSpec(h, grad, hess, alpha_gain=alpha, name=f"obstacle({ox:g},{oy:g})")


def ackermann_barriers(params: AckermannParams) -> list[BarrierSpec]:
    return [_obstacle_barrier(params.q1, params.q2, (ox, oy), r, params.gamma_h)
            for ox, oy, r in params.obstacles]


def ackermann_clf(params: AckermannParams) -> LyapunovSpec:
    w1, w2 = params.w1, params.w2

    def parts(x, xd):
        ex, ey = xd[0] - x[0], xd[1] - x[1]
        rho2 = ex * ex + ey * ey
        a = x[2] - math.atan2(ey, ex) if rho2 >= 1e-18 else 0.0
        return ex, ey, rho2, a

    def V(x, xd):
        _, _, rho2, a = parts(x, xd)
        return 0.5 * w1 * rho2 + w2 * (1.0 - math.cos(a))

    def grad_x(x, xd):
        ex, ey, rho2, a = parts(x, xd)
        if rho2 < 1e-18:
            return np.array([-w1 * ex, -w1 * ey, 0.0])
        s = w2 * math.sin(a)
        return np.array([-w1 * ex - s * ey / rho2, -w1 * ey + s * ex / rho2, s])

    def grad_xd(x, xd):
        ex, ey, rho2, a = parts(x, xd)
        if rho2 < 1e-18:
            return np.array([w1 * ex, w1 * ey, 0.0])
        s = w2 * math.sin(a)
        return np.array([w1 * ex + s * ey / rho2, w1 * ey - s * ex / rho2, 0.0])

    return LyapunovSpec(V, grad_x, grad_xd, params.gamma_V)


# -- reference input and integration -----------------------------------------

def epsilon_greedy_reference(k: int, seed: int, bound: float = 20.0, m: int = 1,
                             decay: float = 50.0) -> np.ndarray:
    """Uniform exploration with probability ``10**(-k/decay)``, zero otherwise."""
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, int(k)])
    eps = 10.0 ** (-k / decay)
    if rng.random() < eps:
        return rng.uniform(-bound, bound, size=m)
    return np.zeros(m)


def integrate_step(f_g: Callable, x, u, dt: float, method: str = "rk4") -> np.ndarray:
    """Advance ``xdot = f(x) + g(x) u`` over ``dt`` with ``u`` held constant."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))

    def xdot(z):
        f, g = f_g(z)
        return f + g @ u

    if dt == 0:
        return x.copy()
    method = method.lower()
    if method == "euler":
        return x + dt * xdot(x)
    if method == "rk4":
        k1 = xdot(x)
        k2 = xdot(x + 0.5 * dt * k1)
        k3 = xdot(x + 0.5 * dt * k2)
        k4 = xdot(x + dt * k3)
        return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    raise ValueError(f"unknown integration method {method!r}")


# -- closed-loop runner -------------------------------------------------------

LOG_COLUMNS = ("t", "h_min", "scbc_min", "delta", "cbc_mean", "cbc_std", "trace_cov", "tau", "status")


@dataclass
class StepRecord:
    t: float
    x: np.ndarray
    u: np.ndarray
    h: np.ndarray
    scbc: np.ndarray
    delta: float
    cbc_mean: float
    cbc_std: float
    trace_cov: float
    tau: float
    status: str
    xdot: np.ndarray
    wall_time: float

    @property
    def h_min(self) -> float:
        return float(self.h.min()) if self.h.size else float("nan")

    @property
    def scbc_min(self) -> float:
        return float(self.scbc.min()) if self.scbc.size else float("nan")


@dataclass
class TrajectoryLog:
    n: int
    m: int
    records: list[StepRecord] = field(default_factory=list)
    final_state: np.ndarray | None = None
    goal: np.ndarray | None = None
    halted: bool = False
    updates: list[int] = field(default_factory=list)
    update_trace: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    model: object = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def states(self) -> np.ndarray:
        return np.array([r.x for r in self.records]).reshape(-1, self.n)

    @property
    def inputs(self) -> np.ndarray:
        return np.array([r.u for r in self.records]).reshape(-1, self.m)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def header(self) -> list[str]:
        return (["t"] + [f"x{i + 1}" for i in range(self.n)] + [f"u{i + 1}" for i in range(self.m)]
                + list(LOG_COLUMNS[1:]))

    def rows(self):
        for r in self.records:
            yield ([r.t, *r.x, *r.u, r.h_min, r.scbc_min, r.delta, r.cbc_mean, r.cbc_std,
                    r.trace_cov, r.tau, r.status])

    def goal_error(self) -> float | None:
        if self.goal is None or self.final_state is None:
            return None
        return float(np.linalg.norm(self.final_state[:2] - self.goal[:2]))

    def summary(self) -> dict:
        h = self.column("h_min") if self.records else np.array([np.nan])
        ok = [r.scbc_min for r in self.records if r.status == "Optimal" and r.scbc.size]
        return {
            "min_h": float(np.nanmin(h)) if np.any(np.isfinite(h)) else None,
            "min_scbc": float(min(ok)) if ok else None,
            "goal_error": self.goal_error(),
            "infeasible_count": sum(r.status == "Infeasible" for r in self.records),
            "wall_time": self.wall_time,
        }


@dataclass
class Scenario:
    """Everything the runner needs, assembled from a configuration."""

    f_g: Callable
    prior: object
    specs: object
    ctrl: object
    x0: np.ndarray
    goal: np.ndarray | None
    reference: Callable[[int], np.ndarray]


def _random_factor(rng, d, rank, diag, scale):
    from .kernels import random_psd
    return random_psd(rng, d, rank or d, diag, scale)


def build_scenario(cfg) -> Scenario:
    from .config import substream, substream_seed
    from .controller import ControllerParams, ControlSpecs, pole_placement_gains
    from .kernels import MatrixKernelParams, RbfKernel
    from .mvgp import MVGPModel, zero_mean

    n, m = cfg.n, cfg.m
    if cfg.system == "pendulum":
        true_p = PendulumParams(cfg.pend_mass, cfg.pend_length, cfg.pend_gravity,
                                math.radians(cfg.theta_c_deg), math.radians(cfg.delta_col_deg))
        f_g = lambda x: pendulum_f_g(true_p, x)  # noqa: E731
        nominal = f_g
        barriers = (pendulum_barrier(true_p, pole_placement_gains(cfg.poles)),)
        lyap = None
        x0 = np.array([math.radians(cfg.theta0_deg), cfg.omega0])
        goal = None
    else:
        true_a = AckermannParams(cfg.wheelbase, cfg.obstacles, cfg.q1, cfg.q2, cfg.w1, cfg.w2,
                                 cfg.gamma_h, cfg.gamma_V)
        prior_a = replace(true_a, L_wheelbase=cfg.prior_wheelbase)
        f_g = lambda x: ackermann_f_g(true_a, x)  # noqa: E731
        nominal = lambda x: ackermann_f_g(prior_a, x)  # noqa: E731
        barriers = tuple(ackermann_barriers(true_a))
        lyap = ackermann_clf(true_a)
        x0 = np.array(cfg.start, dtype=float)
        goal = np.array(cfg.goal, dtype=float)

    if cfg.prior_mean == "zero":
        mean_fn = zero_mean(n, m)
    else:
        mean_fn = control_affine_matrix(f_g if cfg.prior_mean == "truth" else nominal)

    rng = substream(cfg.seed, "model-init")
    if cfg.A_init == "identity":
        A = cfg.A_scale * np.eye(n)
    else:
        C, v = _random_factor(rng, n, cfg.B_rank, cfg.B_diag, 1.0)
        A = cfg.A_scale * (C @ C.T + np.diag(v))
    if cfg.B_init == "identity":
        Bc, Bv = np.zeros((m + 1, 0)), np.full(m + 1, cfg.B_scale)
    else:
        Bc, Bv = _random_factor(rng, m + 1, cfg.B_rank, cfg.B_diag, 1.0)
        Bc, Bv = math.sqrt(cfg.B_scale) * Bc, cfg.B_scale * Bv
    params = MatrixKernelParams(Bc, Bv, 0.5 * (A + A.T), cfg.sigma)
    active = cfg.active_dims or None
    ls = cfg.lengthscales * (len(active or range(n)) if len(cfg.lengthscales) == 1 else 1)
    kernel = RbfKernel.from_lengthscales(cfg.signal_var, ls, n, active)
    prior = MVGPModel.prior(mean_fn, kernel, params)

    ctrl = ControllerParams(cfg.p_safe, cfg.zeta, cfg.zeta_b, cfg.lam, np.diag(cfg.R),
                            np.array(cfg.u_min), np.array(cfg.u_max), cfg.delta_L)
    specs = ControlSpecs(barriers, lyap)

    ref_seed = substream_seed(cfg.seed, "reference-policy")
    if cfg.system == "pendulum" and cfg.reference == "epsilon-greedy":
        reference = lambda k: epsilon_greedy_reference(k, ref_seed, cfg.reference_bound, m)  # noqa: E731
    else:
        reference = lambda k: np.zeros(m)  # noqa: E731
    return Scenario(f_g, prior, specs, ctrl, x0, goal, reference)


def _hold_steps(cfg, scenario: Scenario, model, x, u, xdot, rng) -> tuple[int, float]:
    from .trigger import (RegionBox, grad_h_bound, lipschitz_analytic, lipschitz_numeric,
                          tau_rd1, tau_rdr)

    region = RegionBox(x, np.resize(np.asarray(cfg.region_half_widths, float), x.size))
    if cfg.trigger_lipschitz == "analytic":
        L_f = lipschitz_analytic(model, u, region, cfg.delta_L, cfg.lipschitz_grid).L_f
    else:
        L_f = lipschitz_numeric(model, u, region, cfg.lipschitz_grid, cfg.lipschitz_samples, rng).L_f
    L_h = max(grad_h_bound(b, region, cfg.lipschitz_grid) for b in scenario.specs.barriers)
    vn = float(np.linalg.norm(xdot))
    if scenario.specs.rd1:
        tau = tau_rd1(L_f, L_h, cfg.L_alpha, cfg.trigger_zeta, vn)
    else:
        tau = tau_rdr(L_f, L_h, cfg.trigger_zeta, vn)
    tau = min(max(tau, cfg.dt), cfg.hold_cap)
    return max(1, int(math.ceil(tau / cfg.dt - 1e-9))), tau


def run_closed_loop(cfg, scenario: Scenario | None = None) -> TrajectoryLog:
    """Simulate the learned safety filter on the true plant.

    At every step the current state and the finite-difference velocity of
    the previous step are added to the dataset. Every ``learning_period``
    steps the prior is reconditioned on all data collected so far (capped
    at ``max_data`` points when set).
    """
    import time

    from .config import substream
    from .controller import policy_step
    from .mvgp import Dataset, condition
    from .socp import Status

    sc = scenario or build_scenario(cfg)
    n, m = cfg.n, cfg.m
    noise_rng = substream(cfg.seed, "noise")
    lip_rng = substream(cfg.seed, "numeric-lipschitz")
    noise_L = cfg.sigma * np.linalg.cholesky(sc.prior.params.A)
    model = sc.prior
    X, U, Xd = [], [], []
    used = 0
    log = TrajectoryLog(n, m, goal=sc.goal)
    x = sc.x0.copy()
    u_hold, hold_left, tau_hold = np.zeros(m), 0, float("nan")
    aux = {"x_d": sc.goal, "xdot_d": np.zeros(n)} if sc.goal is not None else {}
    t_start = time.perf_counter()

    for k in range(cfg.steps):
        t0 = time.perf_counter()
        if cfg.learning_period and k and k % cfg.learning_period == 0:
            k_use = len(X) if not cfg.max_data else min(len(X), cfg.max_data)
            if k_use > used:
                before = model.trace_cov(x)
                model = condition(sc.prior, Dataset(np.array(X[:k_use]), np.array(U[:k_use]),
                                                    np.array(Xd[:k_use])))
                used = k_use
                log.updates.append(k)
                log.update_trace.append((before, model.trace_cov(x)))

        h_vals = np.array([b.h(x) for b in sc.specs.barriers])
        scbc = np.zeros(0)
        delta = cbc_mean = cbc_std = float("nan")
        if hold_left > 0:
            u, status, tau = u_hold, "Hold", float("nan")
            hold_left -= 1
        else:
            aux["u_ref"] = sc.reference(k)
            res = policy_step(model, sc.specs, x, aux, sc.ctrl)
            status = res.status.value
            if res.status is Status.INFEASIBLE:
                if cfg.infeasible_policy == "halt":
                    log.halted = True
                    log.records.append(StepRecord(k * cfg.dt, x.copy(), np.full(m, np.nan), h_vals,
                                                  scbc, delta, cbc_mean, cbc_std, model.trace_cov(x),
                                                  float("nan"), status, np.full(n, np.nan),
                                                  time.perf_counter() - t0))
                    break
                if cfg.infeasible_policy == "hold-zero":
                    u = np.zeros(m)
                else:
                    zs = res.solution.z_star
                    u = np.clip(zs[zs.size - m:], sc.ctrl.u_min, sc.ctrl.u_max)
            else:
                u = res.u
                scbc = np.asarray(res.scbc_values)
                delta = res.delta if res.delta is not None else float("nan")
                cbc_mean, cbc_std = res.cbc_mean, res.cbc_std
            tau = float("nan")
            if cfg.trigger_mode == "self":
                mean_xdot = model.mean(x) @ np.concatenate([[1.0], u])
                steps, tau = _hold_steps(cfg, sc, model, x, u, mean_xdot, lip_rng)
                u_hold, hold_left, tau_hold = u, steps - 1, tau

        x_next = integrate_step(sc.f_g, x, u, cfg.dt, cfg.integrator)
        xdot = (x_next - x) / cfg.dt
        if cfg.measurement_noise:
            xdot = xdot + noise_L @ noise_rng.standard_normal(n)
        log.records.append(StepRecord(k * cfg.dt, x.copy(), np.asarray(u, float).copy(), h_vals, scbc,
                                      delta, cbc_mean, cbc_std, model.trace_cov(x), tau, status,
                                      xdot, time.perf_counter() - t0))
        X.append(x.copy())
        U.append(np.asarray(u, float).copy())
        Xd.append(xdot)
        x = x_next

    log.final_state = x
    log.model = model
    log.wall_time = time.perf_counter() - t_start
    return log
