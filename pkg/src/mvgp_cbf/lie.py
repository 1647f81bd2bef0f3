"""Moments of barrier and Lyapunov conditions under the learned dynamics.

For relative degree one the barrier condition is Gaussian and its mean and
variance are affine and quadratic in ``ubar = [1; u]``. For relative degree
two the condition ``grad(L_f h)^T F ubar + k1 h + k2 L_f h`` is a product of
Gaussians; its first two moments are still affine and quadratic in ``ubar``
and are assembled from exact dot-product moments.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .moments import GaussianVector, JointGaussianTriple, gaussian_dot_moments, psd_sqrt
from .mvgp import MVGPModel, predict_F

__all__ = [
    "BarrierSpec",
    "LyapunovSpec",
    "AffineQuadMoments",
    "cbc1_moments",
    "clc_moments",
    "lf_h_moments",
    "grad_lf_h_moments",
    "cbc2_moments",
    "cbc_moments",
    "eta",
]

Vec = np.ndarray


@dataclass(frozen=True)
class BarrierSpec:
    """Barrier function with analytic derivatives.

    Exactly one of ``alpha_gain`` (linear class-K gain, relative degree 1) or
    ``k_alpha`` (exponential barrier gains, one per derivative order) is set.
    """

    h: Callable[[Vec], float]
    grad_h: Callable[[Vec], Vec]
    hess_h: Callable[[Vec], np.ndarray]
    alpha_gain: float | None = None
    k_alpha: tuple[float, ...] | None = None
    name: str = "h"

    def __post_init__(self):
        if (self.alpha_gain is None) == (self.k_alpha is None):
            raise ValueError("set exactly one of alpha_gain or k_alpha")
        if self.alpha_gain is not None and not self.alpha_gain > 0:
            raise ValueError("alpha_gain must be positive")
        if self.k_alpha is not None:
            object.__setattr__(self, "k_alpha", tuple(float(k) for k in self.k_alpha))

    @property
    def relative_degree(self) -> int:
        return 1 if self.k_alpha is None else len(self.k_alpha)

    def shifted(self, offset: float) -> "BarrierSpec":
        """Barrier ``h - offset`` with the same derivatives."""
        h = self.h
        return replace(self, h=lambda x: h(x) - offset)


@dataclass(frozen=True)
class LyapunovSpec:
    V: Callable[[Vec, Vec], float]
    grad_x_V: Callable[[Vec, Vec], Vec]
    grad_xd_V: Callable[[Vec, Vec], Vec]
    gamma_gain: float

    def __post_init__(self):
        if not self.gamma_gain > 0:
            raise ValueError("gamma_gain must be positive")


@dataclass(frozen=True)
class AffineQuadMoments:
    """Mean ``e^T ubar`` and variance ``||Vfac^T ubar||^2`` of a control condition."""

    e: np.ndarray
    Vfac: np.ndarray

    def mean(self, u) -> float:
        return float(self.e @ _ubar(u))

    def var(self, u) -> float:
        v = self.Vfac.T @ _ubar(u)
        return float(v @ v)

    def std(self, u) -> float:
        return float(np.sqrt(self.var(u)))


def _ubar(u) -> np.ndarray:
    return np.concatenate([[1.0], np.atleast_1d(np.asarray(u, dtype=float))])


def _affine_quad(model: MVGPModel, grad: Vec, x, offset: float) -> AffineQuadMoments:
    M, Bxx, A = predict_F(model, x)
    e = M.T @ grad
    e[0] += offset
    scale = float(np.sqrt(max(grad @ A @ grad, 0.0)))
    return AffineQuadMoments(e, scale * psd_sqrt(Bxx))


def cbc1_moments(model: MVGPModel, b: BarrierSpec, x) -> AffineQuadMoments:
    """Moments of ``grad h^T F(x) ubar + alpha h(x)``."""
    if b.alpha_gain is None:
        raise ValueError("cbc1_moments needs a relative degree one barrier")
    x = np.asarray(x, dtype=float)
    return _affine_quad(model, np.asarray(b.grad_h(x), dtype=float), x, b.alpha_gain * b.h(x))


def clc_moments(model: MVGPModel, l: LyapunovSpec, x, x_desired, xdot_desired) -> AffineQuadMoments:
    """Moments of ``grad_x V^T F ubar + gamma V + grad_xd V^T xdot_d``."""
    x = np.asarray(x, dtype=float)
    xd = np.asarray(x_desired, dtype=float)
    ff = float(np.asarray(l.grad_xd_V(x, xd)) @ np.asarray(xdot_desired, dtype=float))
    grad = np.asarray(l.grad_x_V(x, xd), dtype=float)
    return _affine_quad(model, grad, x, l.gamma_gain * l.V(x, xd) + ff)


def lf_h_moments(model: MVGPModel, b: BarrierSpec, x, x2):
    """Mean of ``L_f h(x)``, covariance with ``L_f h(x2)`` and with ``vec F(x2)``."""
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    g1 = np.asarray(b.grad_h(x), dtype=float)
    g2 = np.asarray(b.grad_h(x2), dtype=float)
    A = model.params.A
    mean = float(g1 @ model.mean(x)[:, 0])
    Bk = model.cov(x, x2)
    kappa = float(Bk[0, 0] * (g1 @ A @ g2))
    return mean, kappa, np.kron(Bk[0, :], A @ g1)


def _row0_and_grads(model: MVGPModel, x, x2):
    """First row of ``B_k(x, x2)`` plus the derivatives needed for gradients.

    Returns ``r`` (1+m), ``Dr`` (n x (1+m), derivative of ``r`` in ``x``),
    ``dbf_x2`` (n, derivative of ``r[0]`` in ``x2``) and ``Hbf`` (n x n mixed
    second derivative of ``r[0]``).
    """
    kern, B = model.kernel, model.params.B
    k12 = kern.k0(x, x2)
    gk_x = kern.k0_grad_x(x, x2)
    gk_x2 = kern.k0_grad_x(x2, x)
    Hk = kern.k0_hessian_xx2(x, x2)
    r = B[0, :] * k12
    Dr = np.outer(gk_x, B[0, :])
    dbf_x2 = B[0, 0] * gk_x2
    Hbf = B[0, 0] * Hk
    if model.k:
        C1, C2 = model.cross(x), model.cross(x2)
        dC1, dC2 = model.cross_grad(x), model.cross_grad(x2)
        S2 = model.solve(C2)                     # k x (1+m)
        S1_0 = model.solve(C1[:, 0])             # k
        r = r - C1[:, 0] @ S2
        Dr = Dr - dC1[:, 0, :].T @ S2
        dbf_x2 = dbf_x2 - dC2[:, 0, :].T @ S1_0
        Hbf = Hbf - dC1[:, 0, :].T @ model.solve(dC2[:, 0, :])
    return r, Dr, dbf_x2, Hbf


def grad_lf_h_moments(model: MVGPModel, b: BarrierSpec, x, x2):
    """Moments of the gradient of ``L_f h`` as a Gaussian process.

    Returns
    -------
    mean : ndarray (n,)
        ``E[grad L_f h](x)``.
    cov : ndarray (n, n)
        ``cov(grad L_f h(x), grad L_f h(x2))``.
    cov_with_lf_h : ndarray (n,)
        ``cov(grad L_f h(x), L_f h(x2))``.
    cov_with_vecF : ndarray (n, (1+m) n)
        ``cov(grad L_f h(x), vec F(x2))``.
    """
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    A = model.params.A
    g1, g2 = np.asarray(b.grad_h(x), float), np.asarray(b.grad_h(x2), float)
    H1, H2 = np.asarray(b.hess_h(x), float), np.asarray(b.hess_h(x2), float)

    m_f = model.mean(x)[:, 0]
    J_f = model.mean_jacobian(x)[:, 0, :]
    mean = H1 @ m_f + J_f.T @ g1

    r, Dr, dbf_x2, Hbf = _row0_and_grads(model, x, x2)
    bf, dbf_x = r[0], Dr[:, 0]
    phi = float(g1 @ A @ g2)
    dphi_x = H1 @ A @ g2
    dphi_x2 = H2 @ A @ g1
    cov = (Hbf * phi + np.outer(dbf_x, dphi_x2) + np.outer(dphi_x, dbf_x2)
           + bf * H1 @ A @ H2)
    cov_lf = dbf_x * phi + bf * dphi_x
    cov_F = np.kron(Dr, (A @ g1)[None, :]) + np.kron(r[None, :], H1 @ A)
    return mean, cov, cov_lf, cov_F


def cbc2_moments(model: MVGPModel, b: BarrierSpec, x) -> AffineQuadMoments:
    """Affine/quadratic moments of the relative degree two barrier condition.

    With ``q = grad L_f h(x)`` and ``s = L_f h(x)`` the condition is
    ``q^T F(x) ubar + k1 h + k2 s``. Its covariance in ``ubar`` is the
    covariance matrix of the random vector ``F^T q + k2 s e_0``, which is
    PSD by construction; each entry comes from exact dot-product moments.
    """
    if b.k_alpha is None or len(b.k_alpha) != 2:
        raise ValueError("cbc2_moments needs k_alpha of length 2")
    k1, k2 = b.k_alpha
    x = np.asarray(x, dtype=float)
    n, q = model.n, model.m + 1
    A = model.params.A
    g = np.asarray(b.grad_h(x), dtype=float)

    s_mean, s_var, s_covF = lf_h_moments(model, b, x, x)
    q_mean, q_cov, q_cov_s, q_covF = grad_lf_h_moments(model, b, x, x)
    M = model.mean(x)
    Bxx = model.cov(x, x)
    Bxx = 0.5 * (Bxx + Bxx.T)
    q_cov = 0.5 * (q_cov + q_cov.T)

    z_cov = np.zeros((n, n))
    z_cov[0, 0] = max(s_var, 0.0)
    z = GaussianVector(np.eye(n)[0] * s_mean, z_cov)
    xq = GaussianVector(q_mean, q_cov)
    cov_zx = np.zeros((n, n))
    cov_zx[0, :] = q_cov_s

    def moments(w):
        y = GaussianVector(M @ w, max(float(w @ Bxx @ w), 0.0) * A)
        cov_qy = q_covF.reshape(n, q, n).transpose(0, 2, 1) @ w
        cov_yz = np.zeros((n, n))
        cov_yz[:, 0] = s_covF.reshape(q, n).T @ w
        mean, var, _, _, cov_z = gaussian_dot_moments(
            JointGaussianTriple(xq, y, z, cov_qy, cov_yz, cov_zx))
        return mean, var, cov_z[0]

    basis = np.eye(q)
    diag = [moments(basis[a]) for a in range(q)]
    e = np.array([d[0] for d in diag])
    d = k2 * np.array([d[2] for d in diag])
    Q = np.diag([d_[1] for d_ in diag])
    for a in range(q):
        for c in range(a + 1, q):
            vab = moments(basis[a] + basis[c])[1]
            Q[a, c] = Q[c, a] = 0.5 * (vab - Q[a, a] - Q[c, c])

    e[0] += k1 * b.h(x) + k2 * s_mean
    V2 = Q.copy()
    V2[0, 0] += k2**2 * s_var + 2.0 * d[0]
    V2[0, 1:] += d[1:]
    V2[1:, 0] += d[1:]
    return AffineQuadMoments(e, psd_sqrt(0.5 * (V2 + V2.T)))


def cbc_moments(model: MVGPModel, b: BarrierSpec, x) -> AffineQuadMoments:
    """Dispatch on the barrier's relative degree."""
    r = b.relative_degree
    if b.alpha_gain is not None:
        return cbc1_moments(model, b, x)
    if r == 1:
        x = np.asarray(x, dtype=float)
        return _affine_quad(model, np.asarray(b.grad_h(x), float), x, b.k_alpha[0] * b.h(x))
    if r == 2:
        return cbc2_moments(model, b, x)
    raise ValueError(f"relative degree {r} is not supported")


def eta(b: BarrierSpec, model_or_truth, x) -> np.ndarray:
    """Lie derivative stack ``[h, L_f h]`` truncated at the relative degree.

    ``model_or_truth`` is either an :class:`MVGPModel` (the mean of ``L_f h``
    is used) or a callable returning the true drift and input matrix.
    """
    x = np.asarray(x, dtype=float)
    r = b.relative_degree
    if r == 1:
        return np.array([b.h(x)])
    if r != 2:
        raise ValueError(f"relative degree {r} is not supported")
    if isinstance(model_or_truth, MVGPModel):
        lf = lf_h_moments(model_or_truth, b, x, x)[0]
    else:
        f, _ = model_or_truth(x)
        lf = float(np.asarray(b.grad_h(x)) @ np.asarray(f))
    return np.array([b.h(x), lf])
