"""Matrix variate GP over control-affine dynamics ``xdot = F(x) [1; u]``.

The prior is ``vec F ~ GP(vec M0, B k0(x, x') (x) A)`` with observation noise
``sigma^2 A``. Because the noise shares the output covariance ``A``, the
posterior keeps the Kronecker form ``B_k(x, x') (x) A`` and conditioning only
ever factorizes a ``k x k`` matrix.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .kernels import MatrixKernelParams, RbfKernel
from .moments import GaussianVector

__all__ = [
    "Dataset",
    "DatasetFormatError",
    "MVGPModel",
    "condition",
    "predict_F",
    "predict_Fu",
    "variance_weighted_error",
    "factor_gram",
    "zero_mean",
]

MeanFn = Callable[[np.ndarray], np.ndarray]


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Training triples ``(x_i, u_i, xdot_i)`` stored row-wise."""

    X: np.ndarray
    U: np.ndarray
    Xdot: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        U = np.asarray(self.U, dtype=float)
        Xdot = np.atleast_2d(np.asarray(self.Xdot, dtype=float))
        if U.ndim == 1:
            U = U.reshape(X.shape[0], -1) if X.shape[0] else U.reshape(0, 0)
        if not (X.shape[0] == U.shape[0] == Xdot.shape[0]):
            raise ValueError("X, U and Xdot must have the same number of rows")
        if X.shape != Xdot.shape:
            raise ValueError("X and Xdot must have the same shape")
        for name, arr in (("X", X), ("U", U), ("Xdot", Xdot)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def empty(cls, n: int, m: int) -> "Dataset":
        return cls(np.zeros((0, n)), np.zeros((0, m)), np.zeros((0, n)))

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return self.U.shape[1]

    @property
    def Ubar(self) -> np.ndarray:
        return np.hstack([np.ones((len(self), 1)), self.U])

    def append(self, other: "Dataset") -> "Dataset":
        return Dataset(np.vstack([self.X, other.X]), np.vstack([self.U, other.U]),
                       np.vstack([self.Xdot, other.Xdot]))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.X[idx], self.U[idx], self.Xdot[idx])

    # -- text I/O ----------------------------------------------------------
    def to_csv(self, path, t: Sequence[float] | None = None) -> None:
        t = np.arange(len(self), dtype=float) if t is None else np.asarray(t, dtype=float)
        header = (["t"] + [f"x{i + 1}" for i in range(self.n)]
                  + [f"u{i + 1}" for i in range(self.m)]
                  + [f"xdot{i + 1}" for i in range(self.n)])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(len(self)):
                w.writerow([repr(float(v)) for v in
                            np.concatenate([[t[i]], self.X[i], self.U[i], self.Xdot[i]])])

    @classmethod
    def from_csv(cls, path) -> tuple["Dataset", np.ndarray]:
        """Read a dataset and its time column. Errors carry the line number."""
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise DatasetFormatError(f"{path}:1: empty file") from None
            n = sum(1 for h in header if h.startswith("x") and h[1:].isdigit())
            m = sum(1 for h in header if h.startswith("u") and h[1:].isdigit())
            expected = (["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
                        + [f"xdot{i + 1}" for i in range(n)])
            if header != expected or n == 0:
                raise DatasetFormatError(f"{path}:1: unexpected header {header}")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != len(header):
                    raise DatasetFormatError(
                        f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
                try:
                    vals = [float(c) for c in row]
                except ValueError as exc:
                    raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None
                if not np.all(np.isfinite(vals)):
                    raise DatasetFormatError(f"{path}:{lineno}: non-finite value")
                rows.append(vals)
        arr = np.asarray(rows, dtype=float).reshape(-1, len(header))
        t = arr[:, 0]
        return cls(arr[:, 1:1 + n], arr[:, 1 + n:1 + n + m], arr[:, 1 + n + m:]), t


def zero_mean(n: int, m: int) -> MeanFn:
    def M0(x):
        return np.zeros((n, 1 + m))
    return M0


def factor_gram(G: np.ndarray):
    """Cholesky factor with a two-step jitter ladder.

    The plain factorization is tried first. On failure ``1e-9`` and then
    ``1e-6`` times the mean diagonal are added.
    """
    G = 0.5 * (G + G.T)
    scale = float(np.mean(np.diag(G))) if G.size else 1.0
    for jitter in (0.0, 1e-9, 1e-6):
        try:
            return cho_factor(G + jitter * scale * np.eye(G.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("gram matrix is not positive definite after jitter")


@dataclass(frozen=True, eq=False)
class MVGPModel:
    """Prior or posterior matrix variate GP.

    Attributes
    ----------
    mean_fn : callable
        Prior mean ``M0(x)`` returning an ``n x (1+m)`` matrix.
    kernel : RbfKernel
    params : MatrixKernelParams
    data : Dataset
        Empty for the prior.
    """

    mean_fn: MeanFn
    kernel: RbfKernel
    params: MatrixKernelParams
    data: Dataset
    cached_chol: tuple | None = field(default=None, repr=False)
    _alpha: np.ndarray | None = field(default=None, repr=False)
    _W: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def prior(cls, mean_fn, kernel, params) -> "MVGPModel":
        n, m = params.n, params.m
        if kernel.state_dim != n:
            raise ValueError("kernel state dimension does not match A")
        return cls(mean_fn, kernel, params, Dataset.empty(n, m))

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def m(self) -> int:
        return self.params.m

    @property
    def k(self) -> int:
        return len(self.data)

    # -- building blocks ---------------------------------------------------
    def gram(self) -> np.ndarray:
        """``U^T cal(B) U + sigma^2 I`` over the training inputs."""
        Ub = self.data.Ubar
        K = self.kernel.gram(self.data.X, self.data.X)
        return (Ub @ self.params.B @ Ub.T) * K + self.params.sigma**2 * np.eye(self.k)

    def cross(self, x) -> np.ndarray:
        """``k x (1+m)`` matrix whose transpose is ``cal(B)(x) U``."""
        if self.k == 0:
            return np.zeros((0, self.m + 1))
        kx = self.kernel.gram(np.asarray(x, dtype=float)[None], self.data.X)[0]
        return self._W * kx[:, None]

    def cross_grad(self, x) -> np.ndarray:
        """Derivative of :meth:`cross` in ``x``, shape ``k x (1+m) x n``."""
        if self.k == 0:
            return np.zeros((0, self.m + 1, self.n))
        g = self.kernel.grad_x(np.asarray(x, dtype=float), self.data.X)
        return self._W[:, :, None] * g[:, None, :]

    def solve(self, rhs) -> np.ndarray:
        return cho_solve(self.cached_chol, rhs)

    # -- posterior ---------------------------------------------------------
    def mean(self, x) -> np.ndarray:
        """Posterior mean ``M_k(x)``."""
        x = np.asarray(x, dtype=float)
        M = np.array(self.mean_fn(x), dtype=float)
        if self.k:
            M += self._alpha.T @ self.cross(x)
        return M

    def cov(self, x, x2) -> np.ndarray:
        """Posterior row covariance ``B_k(x, x2)`` (not symmetrized)."""
        prior = self.params.B * self.kernel.k0(x, x2)
        if self.k == 0:
            return prior
        C1, C2 = self.cross(x), self.cross(x2)
        return prior - C1.T @ self.solve(C2)

    def trace_cov(self, x) -> float:
        """``tr(B_k(x, x) (x) A)``."""
        return float(np.trace(self.cov(x, x)) * np.trace(self.params.A))

    def mean_jacobian(self, x, step: float = 1e-6) -> np.ndarray:
        """Central differences of ``M_k``; shape ``n x (1+m) x n``."""
        x = np.asarray(x, dtype=float)
        J = np.empty((self.n, self.m + 1, self.n))
        for j in range(self.n):
            e = np.zeros(self.n)
            e[j] = step
            J[:, :, j] = (self.mean(x + e) - self.mean(x - e)) / (2 * step)
        return J


def condition(prior: MVGPModel, data: Dataset) -> MVGPModel:
    """Condition the prior on ``data`` (all previous data is replaced)."""
    if data.n != prior.n or (len(data) and data.m != prior.m):
        raise ValueError("dataset dimensions do not match the model")
    if len(data) == 0:
        return MVGPModel(prior.mean_fn, prior.kernel, prior.params, Dataset.empty(prior.n, prior.m))
    base = MVGPModel(prior.mean_fn, prior.kernel, prior.params, data)
    chol = factor_gram(base.gram())
    Ub = data.Ubar
    resid = np.stack([data.Xdot[i] - prior.mean_fn(data.X[i]) @ Ub[i] for i in range(len(data))])
    alpha = cho_solve(chol, resid)
    W = Ub @ prior.params.B
    return MVGPModel(prior.mean_fn, prior.kernel, prior.params, data, chol, alpha, W)


def _clamp_psd(M: np.ndarray) -> np.ndarray:
    M = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(M)
    if w[0] >= 0.0:
        return M
    return (V * np.maximum(w, 0.0)) @ V.T


def predict_F(model: MVGPModel, x):
    """Return ``(M_k(x), B_k(x, x), A)`` with ``B_k`` symmetrized and clamped."""
    return model.mean(x), _clamp_psd(model.cov(x, x)), model.params.A


def predict_Fu(model: MVGPModel, x, u) -> GaussianVector:
    """Gaussian of ``F(x) [1; u]``."""
    M, Bxx, A = predict_F(model, x)
    ub = np.concatenate([[1.0], np.atleast_1d(np.asarray(u, dtype=float))])
    s = float(ub @ Bxx @ ub)
    return GaussianVector(M @ ub, max(s, 0.0) * A)


def variance_weighted_error(model: MVGPModel, X_test, F_true, jitter: float = 1e-9) -> float:
    """Posterior-whitened RMS error of ``vec(M_k(x) - F(x))`` over the test set."""
    X_test = np.atleast_2d(np.asarray(X_test, dtype=float))
    if len(X_test) == 0:
        raise ValueError("empty test set")
    A = model.params.A
    total = 0.0
    for x, F in zip(X_test, F_true):
        _, Bxx, _ = predict_F(model, x)
        r = (model.mean(x) - np.asarray(F, dtype=float)).reshape(-1, order="F")
        K = np.kron(Bxx, A)
        try:
            L = np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            L = np.linalg.cholesky(K + jitter * float(np.mean(np.diag(K))) * np.eye(K.shape[0]))
        w = np.linalg.solve(L, r)
        total += float(w @ w)
    return float(np.sqrt(total / len(X_test)))
