"""Scaled RBF base kernel and the matrix kernel ``B0(x, x') = B k0(x, x')``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._core import backend
from .moments import psd_sqrt

__all__ = ["RbfKernel", "MatrixKernelParams", "B0", "random_psd"]


def _as_state(x, n: int) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (n,):
        raise ValueError(f"expected state of dimension {n}, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class RbfKernel:
    """``k0(x, x') = signal_var * exp(-0.5 d^T P d)`` with ``d = S(x - x')``.

    ``S`` selects ``active_dims`` from the state. Leaving it ``None`` uses every
    coordinate. Selecting a subset makes the kernel invariant to the ignored
    coordinates, which is how translation invariance is expressed.

    Parameters
    ----------
    signal_var : float
        Output scale, must be positive.
    lengthscale_inv : array_like
        Symmetric positive definite matrix over the active coordinates.
    state_dim : int
        Dimension of the full state.
    active_dims : sequence of int, optional
    """

    signal_var: float
    lengthscale_inv: np.ndarray
    state_dim: int
    active_dims: tuple[int, ...] | None = None
    _idx: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.lengthscale_inv, dtype=float))
        if not self.signal_var > 0:
            raise ValueError("signal_var must be positive")
        if self.active_dims is None:
            idx = np.arange(self.state_dim)
        else:
            idx = np.asarray(self.active_dims, dtype=int)
            if idx.size == 0 or idx.min() < 0 or idx.max() >= self.state_dim:
                raise ValueError("active_dims out of range")
            object.__setattr__(self, "active_dims", tuple(int(i) for i in idx))
        if P.shape != (idx.size, idx.size):
            raise ValueError(f"lengthscale_inv must be {idx.size}x{idx.size}, got {P.shape}")
        if np.max(np.abs(P - P.T)) > 1e-12 * max(1.0, np.max(np.abs(P))):
            raise ValueError("lengthscale_inv must be symmetric")
        np.linalg.cholesky(P)  # raises LinAlgError when not PD
        object.__setattr__(self, "lengthscale_inv", np.ascontiguousarray(P))
        object.__setattr__(self, "_idx", idx)

    @classmethod
    def from_lengthscales(cls, signal_var, lengthscales, state_dim=None, active_dims=None):
        ls = np.atleast_1d(np.asarray(lengthscales, dtype=float))
        if state_dim is None:
            state_dim = ls.size if active_dims is None else max(active_dims) + 1
        return cls(float(signal_var), np.diag(1.0 / ls**2), int(state_dim), active_dims)

    # -- pointwise ---------------------------------------------------------
    def k0(self, x, x2) -> float:
        return float(self.gram(_as_state(x, self.state_dim)[None], _as_state(x2, self.state_dim)[None])[0, 0])

    def k0_grad_x(self, x, x2) -> np.ndarray:
        """Gradient of ``k0(x, x2)`` with respect to the first argument."""
        return self.grad_x(_as_state(x, self.state_dim), _as_state(x2, self.state_dim)[None])[0]

    def k0_hessian_xx2(self, x, x2) -> np.ndarray:
        """Matrix of ``d^2 k0 / dx_i dx2_j``."""
        return self.cross_hess(_as_state(x, self.state_dim), _as_state(x2, self.state_dim)[None])[0]

    # -- batched -----------------------------------------------------------
    def gram(self, X1, X2) -> np.ndarray:
        X1 = np.atleast_2d(np.asarray(X1, dtype=float))
        X2 = np.atleast_2d(np.asarray(X2, dtype=float))
        if X1.shape[1] != self.state_dim or X2.shape[1] != self.state_dim:
            raise ValueError("dimension mismatch")
        if X1.shape[0] == 0 or X2.shape[0] == 0:
            return np.zeros((X1.shape[0], X2.shape[0]))
        return backend.rbf_gram(X1[:, self._idx], X2[:, self._idx], self.lengthscale_inv, self.signal_var)

    def grad_x(self, x, X2) -> np.ndarray:
        """Row ``i`` holds the gradient of ``k0(x, X2[i])`` in ``x``."""
        X2 = np.atleast_2d(np.asarray(X2, dtype=float))
        out = np.zeros((X2.shape[0], self.state_dim))
        if X2.shape[0]:
            out[:, self._idx] = backend.rbf_grad(
                np.asarray(x, dtype=float)[self._idx], X2[:, self._idx],
                self.lengthscale_inv, self.signal_var)
        return out

    def cross_hess(self, x, X2) -> np.ndarray:
        X2 = np.atleast_2d(np.asarray(X2, dtype=float))
        out = np.zeros((X2.shape[0], self.state_dim, self.state_dim))
        if X2.shape[0]:
            H = backend.rbf_cross_hess(
                np.asarray(x, dtype=float)[self._idx], X2[:, self._idx],
                self.lengthscale_inv, self.signal_var)
            out[np.ix_(np.arange(X2.shape[0]), self._idx, self._idx)] = H
        return out


@dataclass(frozen=True)
class MatrixKernelParams:
    """Row covariance ``B = C C^T + diag(v)``, output covariance ``A``, noise scale ``sigma``.

    The observation noise covariance is ``sigma**2 * A``.
    """

    B_factor: np.ndarray
    B_diag: np.ndarray
    A: np.ndarray
    sigma: float

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.B_factor, dtype=float))
        v = np.atleast_1d(np.asarray(self.B_diag, dtype=float))
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if C.shape[0] != v.size:
            raise ValueError("B_factor rows must match B_diag length")
        if np.any(v < 0):
            raise ValueError("B_diag must be nonnegative")
        if A.shape[0] != A.shape[1] or np.max(np.abs(A - A.T)) > 1e-12 * max(1.0, np.abs(A).max()):
            raise ValueError("A must be square symmetric")
        np.linalg.cholesky(A)
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "B_factor", C)
        object.__setattr__(self, "B_diag", v)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "_B", C @ C.T + np.diag(v))

    @classmethod
    def from_matrix(cls, B, A, sigma):
        """Factor a dense PSD ``B`` (zero diagonal part)."""
        B = np.atleast_2d(np.asarray(B, dtype=float))
        return cls(psd_sqrt(B), np.zeros(B.shape[0]), A, sigma)

    @property
    def B(self) -> np.ndarray:
        return self._B

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self._B.shape[0] - 1

    def diagonal(self) -> "MatrixKernelParams":
        """Same marginal variances with all cross terms removed."""
        return MatrixKernelParams(
            np.zeros((self.m + 1, 0)), np.diag(self._B).copy(), np.diag(np.diag(self.A)), self.sigma
        )


def B0(kernel: RbfKernel, params: MatrixKernelParams, x, x2) -> np.ndarray:
    """Prior row covariance ``B k0(x, x2)``."""
    return params.B * kernel.k0(x, x2)


def random_psd(rng: np.random.Generator, d: int, rank: int | None = None,
               diag: float = 1e-2, scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Random factor pair ``(C, v)`` with Gaussian entries in ``C``."""
    rank = d if rank is None else rank
    C = scale * rng.standard_normal((d, rank)) / np.sqrt(max(rank, 1))
    v = np.full(d, diag * scale**2)
    return C, v
