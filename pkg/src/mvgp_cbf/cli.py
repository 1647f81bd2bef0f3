"""Command-line entry point: ``mvgp-cbf {fit,simulate,compare-gp,trigger}``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .cogp import CoGPModel, cogp_condition, cogp_predict
from .config import ConfigError, ScenarioConfig, load_config, preset, substream
from .hyper import fit_hyperparameters
from .kernels import MatrixKernelParams, RbfKernel
from .mvgp import Dataset, DatasetFormatError, MVGPModel, condition, variance_weighted_error, zero_mean
from .systems import (PendulumParams, AckermannParams, TrajectoryLog, ackermann_f_g, build_scenario,
                      control_affine_matrix, pendulum_f_g, run_closed_loop)

__all__ = ["main", "cmd_fit", "cmd_simulate", "cmd_compare_gp", "cmd_trigger", "SCHEMA_VERSION",
           "EXIT_OK", "EXIT_CONFIG", "EXIT_INFEASIBLE", "EXIT_IO"]

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO = 0, 2, 3, 4
TRIGGER_COLUMNS = ["k", "L_f_analytic", "L_f_numeric", "tau_analytic", "tau_numeric"]

log = logging.getLogger("mvgp_cbf")


class InfeasibleHalt(RuntimeError):
    pass


# -- output helpers -----------------------------------------------------------

def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v))


def _finite_or_none(v):
    return None if v is None or not math.isfinite(v) else float(v)


def _write_json(path: Path, obj: dict) -> None:
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else repr(float(v)) for v in row])
    return buf.getvalue()


def read_csv_table(path) -> tuple[list[str], list[list[str]]]:
    """Read a CSV written by this tool, skipping ``#`` comment lines."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows:
        raise DatasetFormatError(f"{path}: empty file")
    return rows[0], rows[1:]


# -- truth models -------------------------------------------------------------

def truth_F(cfg: ScenarioConfig, n: int | None = None):
    """True ``F(x)`` for the configured plant, or a chain system of size ``n``."""
    if n is None or (cfg.system == "pendulum" and n == 2) or (cfg.system == "ackermann" and n == 3):
        if cfg.system == "pendulum":
            p = PendulumParams(cfg.pend_mass, cfg.pend_length, cfg.pend_gravity,
                               math.radians(cfg.theta_c_deg), math.radians(cfg.delta_col_deg))
            return control_affine_matrix(lambda x: pendulum_f_g(p, x))
        a = AckermannParams(cfg.wheelbase, cfg.obstacles)
        return control_affine_matrix(lambda x: ackermann_f_g(a, x))

    def F(x):
        # chain of integrators closed by a pendulum-like nonlinearity
        f = np.append(x[1:], -math.sin(x[0]))
        g = np.zeros(n)
        g[-1] = 1.0
        return np.column_stack([f, g])
    return F


def synthetic_dataset(F, n: int, m: int, size: int, rng, noise: float = 0.01) -> tuple[Dataset, list]:
    X = rng.uniform(-math.pi / 2, math.pi / 2, size=(size, n))
    U = rng.uniform(-5.0, 5.0, size=(size, m))
    Fs = [F(x) for x in X]
    Xd = np.stack([Fi @ np.concatenate([[1.0], u]) for Fi, u in zip(Fs, U)])
    Xd = Xd + noise * rng.standard_normal(Xd.shape)
    return Dataset(X, U, Xd), Fs


# -- commands -----------------------------------------------------------------

def cmd_fit(cfg: ScenarioConfig, out: Path, data_csv=None) -> dict:
    path = data_csv or cfg.data_csv
    if path is None:
        raise ConfigError("fit needs --data or data_csv")
    data, _ = Dataset.from_csv(path)
    if data.n != cfg.n or data.m != cfg.m:
        raise ConfigError(f"data has n={data.n}, m={data.m}; config expects n={cfg.n}, m={cfg.m}")
    rng = substream(cfg.seed, "data-split")
    perm = rng.permutation(len(data))
    n_test = int(round(cfg.holdout_fraction * len(data)))
    test, train = perm[:n_test], perm[n_test:]
    prior = build_scenario(cfg).prior
    t0 = time.perf_counter()
    model = condition(prior, data.subset(np.sort(train)))
    fit_time = time.perf_counter() - t0
    error = None
    if n_test:
        F = truth_F(cfg)
        Xt = data.X[np.sort(test)]
        error = variance_weighted_error(model, Xt, [F(x) for x in Xt])
    summary = {"schema_version": SCHEMA_VERSION, "command": "fit", "seed": cfg.seed,
               "k": int(model.k), "n_test": n_test, "error": _finite_or_none(error),
               "fit_time": fit_time}
    _write_json(out / "fit_summary.json", summary)
    return summary


def cmd_simulate(cfg: ScenarioConfig, out: Path) -> tuple[dict, TrajectoryLog]:
    traj = run_closed_loop(cfg)
    _atomic_write(out / "trajectory.csv", _csv_text(traj.header, traj.rows()))
    summary = {"schema_version": SCHEMA_VERSION, "command": "simulate", "seed": cfg.seed,
               "steps": len(traj), "halted": traj.halted, **traj.summary()}
    summary = {k: (_finite_or_none(v) if isinstance(v, float) else v) for k, v in summary.items()}
    _write_json(out / "summary.json", summary)
    if traj.halted:
        raise InfeasibleHalt(f"controller infeasible at t={traj.records[-1].t:g}")
    return summary, traj


_GP_VARIANTS = ("mvgp", "mvgp_diag", "cogp", "cogp_diag")


def _hyper(cfg: ScenarioConfig, train: Dataset, mean_fn, diag: bool):
    if cfg.hyper_fit == "ml":
        hp = fit_hyperparameters(train, mean_fn, diag_only=diag, signal_var=cfg.signal_var)
        return hp.kernel, hp.params
    n, q = train.n, train.m + 1
    ls = cfg.lengthscales * n if len(cfg.lengthscales) == 1 else cfg.lengthscales[:n]
    kernel = RbfKernel.from_lengthscales(cfg.signal_var, ls, n)
    params = MatrixKernelParams(np.zeros((q, 0)), np.full(q, cfg.B_scale), cfg.A_scale * np.eye(n), cfg.sigma)
    return kernel, (params.diagonal() if diag else params)


def _compare_rep(args):
    cfg, n, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    m = 1
    F = truth_F(cfg, n)
    train, _ = synthetic_dataset(F, n, m, cfg.train_size, rng)
    test, F_test = synthetic_dataset(F, n, m, cfg.test_size, rng)
    mean_fn = zero_mean(n, m)
    out = {}
    for diag in (False, True):
        kernel, params = _hyper(cfg, train, mean_fn, diag)
        prior = MVGPModel.prior(mean_fn, kernel, params)
        t0 = time.perf_counter()
        mv = condition(prior, train)
        t_mv = time.perf_counter() - t0
        err_mv = variance_weighted_error(mv, test.X, F_test)
        Sigma = np.kron(params.B, params.A)
        co_prior = CoGPModel.prior(mean_fn, Sigma, kernel, params.sigma**2 * params.A)
        t0 = time.perf_counter()
        co = cogp_condition(co_prior, train)
        t_co = time.perf_counter() - t0
        err_co = _cogp_error(co, test.X, F_test)
        tag = "_diag" if diag else ""
        out["mvgp" + tag] = (err_mv, t_mv)
        out["cogp" + tag] = (err_co, t_co)
    return out


def _cogp_error(model: CoGPModel, X, F_true, jitter: float = 1e-9) -> float:
    # same whitening as variance_weighted_error, with the CoGP predictive covariance
    total = 0.0
    for x, F in zip(X, F_true):
        g = cogp_predict(model, x)
        r = g.mean - np.asarray(F, dtype=float).reshape(-1, order="F")
        try:
            L = np.linalg.cholesky(g.cov)
        except np.linalg.LinAlgError:
            L = np.linalg.cholesky(g.cov + jitter * float(np.mean(np.diag(g.cov))) * np.eye(r.size))
        w = np.linalg.solve(L, r)
        total += float(w @ w)
    return math.sqrt(total / len(X))


def _stats(vals) -> dict:
    v = np.asarray(vals, dtype=float)
    return {"median": float(np.median(v)), "q20": float(np.quantile(v, 0.2)),
            "q90": float(np.quantile(v, 0.9))}


def cmd_compare_gp(cfg: ScenarioConfig, out: Path) -> dict:
    results = {}
    for n in cfg.state_dims:
        seeds = np.random.SeedSequence([cfg.seed & 0xFFFFFFFF, n]).spawn(cfg.reps)
        jobs = [(cfg, n, s) for s in seeds]
        if cfg.workers > 1:
            with ProcessPoolExecutor(cfg.workers) as ex:
                reps = list(ex.map(_compare_rep, jobs))
        else:
            reps = [_compare_rep(j) for j in jobs]
        results[str(n)] = {
            name: {"error": _stats([r[name][0] for r in reps]),
                   "fit_time": _stats([r[name][1] for r in reps])}
            for name in _GP_VARIANTS
        }
    table = {"schema_version": SCHEMA_VERSION, "command": "compare-gp", "seed": cfg.seed,
             "reps": cfg.reps, "train_size": cfg.train_size, "test_size": cfg.test_size,
             "results": results}
    _write_json(out / "compare_gp.json", table)
    return table


def _load_trajectory(path, cfg: ScenarioConfig):
    header, rows = read_csv_table(path)
    xs = [i for i, h in enumerate(header) if h.startswith("x") and h[1:].isdigit()]
    us = [i for i, h in enumerate(header) if h.startswith("u") and h[1:].isdigit()]
    if header[0] != "t" or len(xs) != cfg.n or len(us) != cfg.m:
        raise DatasetFormatError(f"{path}:1: header does not match a {cfg.system} trajectory")
    try:
        arr = np.array([[float(r[i]) for i in [0, *xs, *us]] for r in rows])
    except (ValueError, IndexError) as exc:
        raise DatasetFormatError(f"{path}: {exc}") from None
    return arr[:, 0], arr[:, 1:1 + cfg.n], arr[:, 1 + cfg.n:]


def replay_models(cfg: ScenarioConfig, X, U, Xd):
    """Yield the model that was in effect at every step of a stored run."""
    prior = build_scenario(cfg).prior
    model, used = prior, 0
    for k in range(len(X)):
        if cfg.learning_period and k and k % cfg.learning_period == 0:
            k_use = k if not cfg.max_data else min(k, cfg.max_data)
            if k_use > used:
                model = condition(prior, Dataset(X[:k_use], U[:k_use], Xd[:k_use]))
                used = k_use
        yield model


def cmd_trigger(cfg: ScenarioConfig, out: Path, trajectory=None) -> list[list[float]]:
    from .trigger import (RegionBox, grad_h_bound, lipschitz_analytic, lipschitz_numeric,
                          tau_rd1, tau_rdr)

    path = trajectory or cfg.trajectory_csv
    if path is None:
        raise ConfigError("trigger needs --trajectory or trajectory_csv")
    t, X, U = _load_trajectory(path, cfg)
    dt = float(t[1] - t[0]) if len(t) > 1 else cfg.dt
    Xd = np.empty_like(X)
    Xd[:-1] = (X[1:] - X[:-1]) / dt
    sc = build_scenario(cfg)
    rng = substream(cfg.seed, "numeric-lipschitz")
    rows = []
    for k, model in enumerate(replay_models(cfg, X, U, Xd)):
        x, u = X[k], U[k]
        if k == len(X) - 1:
            Xd[k] = model.mean(x) @ np.concatenate([[1.0], u])
        region = RegionBox(x, np.resize(np.asarray(cfg.region_half_widths, float), x.size))
        La = lipschitz_analytic(model, u, region, cfg.delta_L, cfg.lipschitz_grid).L_f
        Ln = lipschitz_numeric(model, u, region, cfg.lipschitz_grid, cfg.lipschitz_samples, rng).L_f
        Lh = max(grad_h_bound(b, region, cfg.lipschitz_grid) for b in sc.specs.barriers)
        vn = float(np.linalg.norm(Xd[k]))
        if sc.specs.rd1:
            ta = tau_rd1(La, Lh, cfg.L_alpha, cfg.trigger_zeta, vn)
            tn = tau_rd1(Ln, Lh, cfg.L_alpha, cfg.trigger_zeta, vn)
        else:
            ta = tau_rdr(La, Lh, cfg.trigger_zeta, vn)
            tn = tau_rdr(Ln, Lh, cfg.trigger_zeta, vn)
        rows.append([k, La, Ln, ta, tn])
    _atomic_write(out / "trigger.csv", _csv_text(TRIGGER_COLUMNS, rows))
    return rows


# -- argument parsing -----------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvgp-cbf", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("fit", "simulate", "compare-gp", "trigger"):
        s = sub.add_parser(name)
        src = s.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", type=Path, help="scenario file (key = value)")
        src.add_argument("--preset", help="bundled scenario name")
        s.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        s.add_argument("--out", type=Path, default=Path("."), help="output directory")
        if name == "fit":
            s.add_argument("--data", type=Path, default=None, help="dataset CSV")
        if name == "trigger":
            s.add_argument("--trajectory", type=Path, default=None, help="stored trajectory CSV")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config else preset(args.preset)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.command == "fit":
            res = cmd_fit(cfg, args.out, args.data)
        elif args.command == "simulate":
            res, _ = cmd_simulate(cfg, args.out)
        elif args.command == "compare-gp":
            res = cmd_compare_gp(cfg, args.out)
        else:
            cmd_trigger(cfg, args.out, args.trajectory)
            res = {"rows_written": "trigger.csv"}
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleHalt as exc:
        print(f"halted: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (OSError, DatasetFormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    log.info("%s", json.dumps(res, default=_json_default))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
