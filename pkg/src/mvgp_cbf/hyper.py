"""Marginal likelihood fitting of matrix variate GP hyperparameters."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import minimize

from .kernels import MatrixKernelParams, RbfKernel
from .mvgp import Dataset, MeanFn

__all__ = ["FittedHyper", "negative_log_marginal", "fit_hyperparameters"]


@dataclass(frozen=True)
class FittedHyper:
    kernel: RbfKernel
    params: MatrixKernelParams
    nll: float
    iterations: int


def _tril(theta, d, diag_only):
    if diag_only:
        return np.diag(np.exp(theta[:d])), d
    L = np.zeros((d, d))
    idx = np.tril_indices(d)
    L[idx] = theta[: len(idx[0])]
    L[np.diag_indices(d)] = np.exp(np.diag(L))
    return L, len(idx[0])


def _unpack(theta, n, q, diag_only):
    LB, used = _tril(theta, q, diag_only)
    theta = theta[used:]
    LA, used = _tril(theta, n, diag_only)
    theta = theta[used:]
    sigma = float(np.exp(theta[0]))
    ls = np.exp(theta[1:1 + n])
    return LB, LA, sigma, ls


def _pack(n, q, diag_only, sigma=0.1, ls=1.0, a_scale=1.0):
    def ident(d, scale):
        if diag_only:
            return np.full(d, 0.5 * np.log(scale))
        L = np.zeros((d, d))
        L[np.diag_indices(d)] = 0.5 * np.log(scale)
        return L[np.tril_indices(d)]
    return np.concatenate([ident(q, 1.0), ident(n, a_scale), [np.log(sigma)], np.full(n, np.log(ls))])


def negative_log_marginal(data: Dataset, mean_fn: MeanFn, kernel: RbfKernel,
                          B: np.ndarray, A: np.ndarray, sigma: float) -> float:
    """``-log p(Xdot | X, U)`` under the matrix variate prior."""
    k, n = data.X.shape
    Ub = data.Ubar
    Y = np.stack([data.Xdot[i] - mean_fn(data.X[i]) @ Ub[i] for i in range(k)])
    G = (Ub @ B @ Ub.T) * kernel.gram(data.X, data.X) + sigma**2 * np.eye(k)
    cG = cho_factor(G, lower=True)
    cA = cho_factor(A, lower=True)
    logdet_G = 2.0 * np.sum(np.log(np.diag(cG[0])))
    logdet_A = 2.0 * np.sum(np.log(np.diag(cA[0])))
    quad = np.trace(cho_solve(cA, Y.T @ cho_solve(cG, Y)))
    return 0.5 * (n * logdet_G + k * logdet_A + quad + k * n * np.log(2 * np.pi))


def fit_hyperparameters(data: Dataset, mean_fn: MeanFn, diag_only: bool = False,
                        signal_var: float = 1.0, maxiter: int = 200) -> FittedHyper:
    """Maximize the marginal likelihood over ``B``, ``A``, ``sigma`` and lengthscales.

    ``B`` and ``A`` are parameterized by Cholesky factors with log diagonals,
    or by log variances when ``diag_only`` is set. The signal variance is held
    fixed because it only rescales ``B``.
    """
    n, q = data.n, data.m + 1
    resid_var = float(np.var(data.Xdot)) or 1.0
    x0 = _pack(n, q, diag_only, sigma=0.1, ls=1.0, a_scale=resid_var)

    def objective(theta):
        LB, LA, sigma, ls = _unpack(theta, n, q, diag_only)
        kern = RbfKernel.from_lengthscales(signal_var, ls, n)
        try:
            val = negative_log_marginal(data, mean_fn, kern, LB @ LB.T, LA @ LA.T + 1e-10 * np.eye(n), sigma)
        except (LinAlgError, ValueError):
            return 1e20
        return val if np.isfinite(val) else 1e20

    res = minimize(objective, x0, method="L-BFGS-B", options={"maxiter": maxiter})
    LB, LA, sigma, ls = _unpack(res.x, n, q, diag_only)
    kern = RbfKernel.from_lengthscales(signal_var, ls, n)
    A = LA @ LA.T + 1e-10 * np.eye(n)
    if diag_only:
        params = MatrixKernelParams(np.zeros((q, 0)), np.diag(LB) ** 2, A, sigma)
    else:
        params = MatrixKernelParams(LB, np.zeros(q), A, sigma)
    return FittedHyper(kern, params, float(res.fun), int(res.nit))
