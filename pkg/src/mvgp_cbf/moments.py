"""Exact moments of Gaussian quadratic forms and dot products.

The dot product of two jointly Gaussian vectors is handled as a quadratic
form of the stacked vector ``[x; y; z]``, so every quantity here reduces to
:func:`quad_form_moments` and :func:`quad_form_cov_with_x`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "IndefiniteMatrix",
    "GaussianScalar",
    "GaussianVector",
    "JointGaussianTriple",
    "quad_form_moments",
    "quad_form_cov_with_x",
    "gaussian_dot_moments",
    "psd_sqrt",
]

_SYM_TOL = 1e-12


class IndefiniteMatrix(ValueError):
    """Raised when a matrix expected to be PSD has a clearly negative eigenvalue."""


def _check_symmetric(M: np.ndarray, name: str, rtol: float = _SYM_TOL) -> None:
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if np.max(np.abs(M - M.T), initial=0.0) > rtol * scale:
        raise ValueError(f"{name} is not symmetric")


@dataclass(frozen=True)
class GaussianScalar:
    mean: float
    var: float

    def __post_init__(self):
        if not self.var >= 0.0:
            raise ValueError(f"variance must be nonnegative, got {self.var}")

    @property
    def std(self) -> float:
        return float(np.sqrt(self.var))


@dataclass(frozen=True)
class GaussianVector:
    """Mean and covariance of a Gaussian random vector."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match mean size {mean.size}")
        _check_symmetric(cov, "cov", rtol=1e-10)
        if mean.size:
            eig = np.linalg.eigvalsh(cov)
            if eig[0] < -1e-10 * max(1.0, eig[-1]):
                raise IndefiniteMatrix(f"cov has eigenvalue {eig[0]:.3e}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class JointGaussianTriple:
    """Three jointly Gaussian vectors of equal dimension.

    ``cov_xy`` is ``E[(x - xbar)(y - ybar)^T]`` and likewise for the others.
    """

    x: GaussianVector
    y: GaussianVector
    z: GaussianVector
    cov_xy: np.ndarray
    cov_yz: np.ndarray
    cov_zx: np.ndarray

    def __post_init__(self):
        d = self.x.dim
        if self.y.dim != d or self.z.dim != d:
            raise ValueError("x, y, z must have equal dimension")
        for name in ("cov_xy", "cov_yz", "cov_zx"):
            M = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if M.shape != (d, d):
                raise ValueError(f"{name} must be {d}x{d}, got {M.shape}")
            object.__setattr__(self, name, M)

    def stacked(self) -> GaussianVector:
        """Return the 3d-dimensional Gaussian of ``[x; y; z]``."""
        Cxy, Cyz, Czx = self.cov_xy, self.cov_yz, self.cov_zx
        cov = np.block([
            [self.x.cov, Cxy, Czx.T],
            [Cxy.T, self.y.cov, Cyz],
            [Czx, Cyz.T, self.z.cov],
        ])
        cov = 0.5 * (cov + cov.T)
        eig = np.linalg.eigvalsh(cov)
        if eig[0] < -1e-8 * max(1.0, eig[-1]):
            raise IndefiniteMatrix(f"stacked covariance has eigenvalue {eig[0]:.3e}")
        mean = np.concatenate([self.x.mean, self.y.mean, self.z.mean])
        # already validated; skip the stricter per-vector check
        out = object.__new__(GaussianVector)
        object.__setattr__(out, "mean", mean)
        object.__setattr__(out, "cov", cov)
        return out


def _validate_quad(xbar, Sigma, Lambda):
    xbar = np.atleast_1d(np.asarray(xbar, dtype=float))
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    Lambda = np.atleast_2d(np.asarray(Lambda, dtype=float))
    d = xbar.size
    if Sigma.shape != (d, d) or Lambda.shape != (d, d):
        raise ValueError(
            f"dimension mismatch: xbar {d}, Sigma {Sigma.shape}, Lambda {Lambda.shape}"
        )
    _check_symmetric(Lambda, "Lambda")
    return xbar, Sigma, Lambda


def quad_form_moments(xbar, Sigma, Lambda) -> tuple[float, float]:
    """Mean and variance of ``x^T Lambda x`` for ``x ~ N(xbar, Sigma)``.

    Returns
    -------
    mean, var : float
        ``xbar^T L xbar + tr(L S)`` and ``2 tr((L S)^2) + 4 xbar^T L S L xbar``.
    """
    xbar, Sigma, Lambda = _validate_quad(xbar, Sigma, Lambda)
    LS = Lambda @ Sigma
    Lx = Lambda @ xbar
    mean = float(xbar @ Lx + np.trace(LS))
    var = float(2.0 * np.sum(LS * LS.T) + 4.0 * Lx @ Sigma @ Lx)
    return mean, max(var, 0.0)


def quad_form_cov_with_x(xbar, Sigma, Lambda) -> np.ndarray:
    """Covariance between ``x`` and ``x^T Lambda x``, i.e. ``2 Sigma Lambda xbar``."""
    xbar, Sigma, Lambda = _validate_quad(xbar, Sigma, Lambda)
    return 2.0 * Sigma @ (Lambda @ xbar)


def _dot_lambda(d: int) -> np.ndarray:
    L = np.zeros((3 * d, 3 * d))
    eye = 0.5 * np.eye(d)
    L[:d, d:2 * d] = eye
    L[d:2 * d, :d] = eye
    return L


def gaussian_dot_moments(j: JointGaussianTriple):
    """Moments of ``x^T y`` and its covariance with each of ``x``, ``y``, ``z``.

    Returns
    -------
    mean, var : float
    cov_x, cov_y, cov_z : ndarray
        ``cov(x, x^T y)`` and so on, each of dimension d.
    """
    d = j.x.dim
    s = j.stacked()
    Lam = _dot_lambda(d)
    mean, var = quad_form_moments(s.mean, s.cov, Lam)
    c = quad_form_cov_with_x(s.mean, s.cov, Lam)
    return mean, var, c[:d], c[d:2 * d], c[2 * d:]


def psd_sqrt(M) -> np.ndarray:
    """Square root factor ``L`` with ``L L^T`` equal to ``M`` after clamping.

    Eigenvalues below ``-1e-10`` are treated as zero. Anything more negative
    than ``-1e-6 * ||M||_2`` raises :class:`IndefiniteMatrix`.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    _check_symmetric(M, "M", rtol=1e-9)
    M = 0.5 * (M + M.T)
    if M.size == 0:
        return M.copy()
    w, V = np.linalg.eigh(M)
    norm2 = float(np.max(np.abs(w)))
    if w[0] < -1e-6 * norm2:
        raise IndefiniteMatrix(f"eigenvalue {w[0]:.3e} below tolerance (norm {norm2:.3e})")
    w = np.where(w < 0.0, 0.0, w)
    return V * np.sqrt(w)
