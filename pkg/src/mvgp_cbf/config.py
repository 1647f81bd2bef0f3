"""Flat ``key = value`` scenario configuration with typed validation.

Lines starting with ``#`` are comments. Lists are comma separated; obstacle
lists separate obstacles with ``;`` and give ``ox, oy, r`` for each.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "parse_config", "preset", "PRESETS",
           "substream", "substream_seed"]


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(t) for t in text.split(","))


def _ints(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(t) for t in text.split(","))


def _obstacles(text: str) -> tuple[tuple[float, float, float], ...]:
    out = []
    for chunk in text.split(";"):
        if chunk.strip():
            vals = _floats(chunk)
            if len(vals) != 3:
                raise ValueError(f"obstacle needs ox, oy, r: {chunk.strip()!r}")
            out.append(vals)
    return tuple(out)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        t = text.strip().lower()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return t
    return parse


def _opt_str(text: str) -> str | None:
    t = text.strip()
    return t or None


@dataclass(frozen=True)
class ScenarioConfig:
    # run
    system: str = "pendulum"
    seed: int = 0
    steps: int = 1000
    dt: float = 0.01
    integrator: str = "rk4"
    trigger_mode: str = "time"
    tau_max: float | None = None
    learning_period: int = 0
    infeasible_policy: str = "hold-zero"
    measurement_noise: bool = False
    max_data: int = 0
    trigger_lipschitz: str = "numeric"
    # pendulum plant
    pend_mass: float = 1.0
    pend_length: float = 1.0
    pend_gravity: float = 10.0
    theta0_deg: float = 75.0
    omega0: float = -0.01
    theta_c_deg: float = 45.0
    delta_col_deg: float = 22.5
    reference: str = "epsilon-greedy"
    reference_bound: float = 20.0
    poles: tuple[float, ...] = (-2.0, -3.0)
    # ackermann plant
    wheelbase: float = 1.0
    prior_wheelbase: float = 1.0
    start: tuple[float, ...] = (-3.0, -1.0, -math.pi / 4)
    goal: tuple[float, ...] = (0.0, 0.0, math.pi / 4)
    obstacles: tuple[tuple[float, float, float], ...] = ((-1.0, -1.0, 0.5),)
    q1: float = 0.7
    q2: float = 0.3
    w1: float = 0.9
    w2: float = 1.5
    gamma_h: float = 5.0
    gamma_V: float = 10.0
    goal_tolerance: float = 0.5
    # model
    prior_mean: str = "nominal"
    signal_var: float = 1.0
    lengthscales: tuple[float, ...] = (1.0,)
    active_dims: tuple[int, ...] = ()
    A_init: str = "identity"
    A_scale: float = 1.0
    B_init: str = "identity"
    B_scale: float = 1.0
    B_rank: int = 0
    B_diag: float = 0.01
    sigma: float = 0.1
    # controller
    p_safe: float = 0.99
    zeta: float = 0.0
    zeta_b: float = 0.0
    lam: float = 1.0
    R: tuple[float, ...] = (1.0,)
    u_min: tuple[float, ...] = (-20.0,)
    u_max: tuple[float, ...] = (20.0,)
    delta_L: float = 1e-4
    # lipschitz and triggering
    region_half_widths: tuple[float, ...] = (0.1, 0.1, math.pi / 100)
    lipschitz_grid: int = 10
    lipschitz_samples: int = 20
    L_alpha: float = 1.0
    trigger_zeta: float = 1e-2
    trajectory_csv: str | None = None
    # fit and compare
    data_csv: str | None = None
    holdout_fraction: float = 0.2
    reps: int = 30
    train_size: int = 64
    test_size: int = 50
    state_dims: tuple[int, ...] = (2,)
    workers: int = 1
    hyper_fit: str = "ml"

    def __post_init__(self):
        errs = []

        def need(cond, msg):
            if not cond:
                errs.append(msg)

        need(self.steps > 0, "steps must be positive")
        need(self.dt > 0, "dt must be positive")
        need(self.tau_max is None or self.tau_max >= self.dt, "tau_max must be at least dt")
        need(self.learning_period >= 0, "learning_period must be nonnegative")
        need(self.max_data >= 0, "max_data must be nonnegative")
        need(min(self.pend_mass, self.pend_length, self.pend_gravity) > 0,
             "pendulum mass, length and gravity must be positive")
        need(0 < self.delta_col_deg < 90, "delta_col_deg must lie in (0, 90)")
        need(len(self.poles) > 0 and all(p < 0 for p in self.poles), "poles must be negative")
        need(self.wheelbase > 0 and self.prior_wheelbase > 0, "wheelbases must be positive")
        need(len(self.start) == 3 and len(self.goal) == 3, "start and goal need x, y, theta")
        need(all(r > 0 for _, _, r in self.obstacles), "obstacle radii must be positive")
        need(min(self.q1, self.q2, self.w1, self.w2, self.gamma_h, self.gamma_V) > 0,
             "barrier and Lyapunov weights must be positive")
        need(self.signal_var > 0, "signal_var must be positive")
        need(len(self.lengthscales) > 0 and all(v > 0 for v in self.lengthscales),
             "lengthscales must be positive")
        need(self.A_scale > 0 and self.B_scale > 0, "A_scale and B_scale must be positive")
        need(self.B_rank >= 0 and self.B_diag >= 0, "B_rank and B_diag must be nonnegative")
        need(self.sigma > 0, "sigma must be positive")
        need(0 < self.p_safe < 1, "p_safe must lie in (0, 1)")
        need(self.zeta >= 0 and self.zeta_b >= 0, "zeta and zeta_b must be nonnegative")
        need(self.lam > 0, "lam must be positive")
        need(all(v > 0 for v in self.R), "R entries must be positive")
        need(len(self.u_min) == len(self.u_max) == len(self.R), "R, u_min and u_max lengths differ")
        need(all(a <= b for a, b in zip(self.u_min, self.u_max)), "u_min exceeds u_max")
        need(0 < self.delta_L < 1, "delta_L must lie in (0, 1)")
        need(all(v > 0 for v in self.region_half_widths), "region_half_widths must be positive")
        need(2 <= self.lipschitz_grid and self.lipschitz_samples > 0, "bad lipschitz grid or samples")
        need(self.L_alpha >= 0 and self.trigger_zeta >= 0, "L_alpha and trigger_zeta must be nonnegative")
        need(0 <= self.holdout_fraction < 1, "holdout_fraction must lie in [0, 1)")
        need(self.reps > 0 and self.train_size > 0 and self.test_size > 0, "reps and sizes must be positive")
        need(len(self.state_dims) > 0 and all(d >= 1 for d in self.state_dims), "state_dims must be positive")
        need(self.workers >= 1, "workers must be at least 1")
        n = 2 if self.system == "pendulum" else 3
        need(len(self.lengthscales) in (1, len(self.active_dims) or n), "lengthscales length mismatch")
        need(all(0 <= d < n for d in self.active_dims), "active_dims out of range")
        m = 1 if self.system == "pendulum" else 2
        need(len(self.R) == m, f"{self.system} has {m} input(s); R has {len(self.R)}")
        if errs:
            raise ConfigError("; ".join(errs))

    @property
    def n(self) -> int:
        return 2 if self.system == "pendulum" else 3

    @property
    def m(self) -> int:
        return len(self.R)

    @property
    def hold_cap(self) -> float:
        return 10 * self.dt if self.tau_max is None else self.tau_max

    def with_overrides(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)


_PARSERS: dict[str, Callable[[str], Any]] = {
    "system": _choice("pendulum", "ackermann"),
    "integrator": _choice("rk4", "euler"),
    "trigger_mode": _choice("time", "self"),
    "trigger_lipschitz": _choice("analytic", "numeric"),
    "hyper_fit": _choice("ml", "fixed"),
    "infeasible_policy": _choice("hold-zero", "halt", "log-and-continue"),
    "reference": _choice("epsilon-greedy", "zero"),
    "prior_mean": _choice("zero", "nominal", "truth"),
    "A_init": _choice("identity", "random"),
    "B_init": _choice("identity", "random"),
    "tau_max": lambda s: None if s.strip().lower() in ("", "none") else float(s),
    "trajectory_csv": _opt_str,
    "data_csv": _opt_str,
    "obstacles": _obstacles,
    "active_dims": _ints,
    "state_dims": _ints,
    "measurement_noise": _bool,
}

_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}
for _name, _typ in _FIELD_TYPES.items():
    if _name in _PARSERS:
        continue
    if _typ == "int":
        _PARSERS[_name] = int
    elif _typ == "float":
        _PARSERS[_name] = float
    elif _typ.startswith("tuple[float"):
        _PARSERS[_name] = _floats
    else:  # pragma: no cover - guards schema edits
        raise TypeError(f"no parser for config field {_name}")


def parse_config(text: str, source: str = "<config>", base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Parse config text; values override ``base`` (defaults when omitted)."""
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: {key}: {exc}") from None
    try:
        return replace(base, **values) if base is not None else ScenarioConfig(**values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, str(path))


PRESETS = (
    "pendulum",
    "ackermann_mean_cbf",
    "ackermann_bayes_cbf",
    "ackermann_learning",
    "ackermann_no_learning",
    "trigger",
    "compare_gp",
)


def preset(name: str, **overrides) -> ScenarioConfig:
    """Load a bundled preset, optionally overriding fields."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}")
    text = resources.files("mvgp_cbf").joinpath("presets", f"{name}.cfg").read_text()
    cfg = parse_config(text, f"preset:{name}")
    return replace(cfg, **overrides) if overrides else cfg


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for the named component of a run."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode())])


def substream_seed(seed: int, name: str) -> int:
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode())]).generate_state(1)[0])
