"""Coregionalization GP baseline with kernel ``Sigma k0(x, x')``.

Unlike the matrix variate model, the gram matrix here is ``kn x kn`` and has
no Kronecker shortcut, so conditioning costs ``O(k^3 n^3)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from .kernels import RbfKernel
from .moments import GaussianVector
from .mvgp import Dataset, MeanFn, factor_gram

__all__ = ["CoGPModel", "cogp_condition", "cogp_predict"]


@dataclass(frozen=True, eq=False)
class CoGPModel:
    mean_fn: MeanFn
    Sigma: np.ndarray
    kernel: RbfKernel
    S: np.ndarray
    data: Dataset
    cached_chol: tuple | None = field(default=None, repr=False)
    _alpha: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        Sig = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        n = S.shape[0]
        if Sig.shape[0] != Sig.shape[1] or Sig.shape[0] % n:
            raise ValueError("Sigma must be (1+m)n square")
        if np.linalg.eigvalsh(0.5 * (Sig + Sig.T))[0] < -1e-10 * max(1.0, np.abs(Sig).max()):
            raise ValueError("Sigma must be PSD")
        object.__setattr__(self, "Sigma", Sig)
        object.__setattr__(self, "S", S)

    @classmethod
    def prior(cls, mean_fn, Sigma, kernel, S) -> "CoGPModel":
        n = np.atleast_2d(S).shape[0]
        m = np.atleast_2d(Sigma).shape[0] // n - 1
        return cls(mean_fn, Sigma, kernel, S, Dataset.empty(n, m))

    @property
    def n(self) -> int:
        return self.S.shape[0]

    @property
    def m(self) -> int:
        return self.Sigma.shape[0] // self.n - 1

    @property
    def k(self) -> int:
        return len(self.data)

    def _blocks(self) -> np.ndarray:
        # Sigma[a*n + i, b*n + j] -> blocks[a, b, i, j]
        n, q = self.n, self.m + 1
        return self.Sigma.reshape(q, n, q, n).transpose(0, 2, 1, 3)

    def gram(self) -> np.ndarray:
        """``(U^T (x) I)(K (x) Sigma)(U (x) I) + I (x) S``."""
        Ub = self.data.Ubar
        K = self.kernel.gram(self.data.X, self.data.X)
        blk = np.einsum("ia,jb,abpq->ijpq", Ub, Ub, self._blocks())
        G = (K[:, :, None, None] * blk).transpose(0, 2, 1, 3).reshape(self.k * self.n, self.k * self.n)
        return G + np.kron(np.eye(self.k), self.S)

    def cross(self, x) -> np.ndarray:
        """``(K(x) (x) Sigma)(U (x) I)``, shape ``(1+m)n x kn``."""
        Ub = self.data.Ubar
        kx = self.kernel.gram(np.asarray(x, dtype=float)[None], self.data.X)[0]
        n, q = self.n, self.m + 1
        Sig = self.Sigma.reshape(q * n, q, n)
        # column block j is kx_j * Sigma (ubar_j (x) I)
        blocks = np.einsum("rbq,jb->rjq", Sig, Ub) * kx[None, :, None]
        return blocks.reshape(q * n, self.k * n)


def cogp_condition(prior: CoGPModel, data: Dataset) -> CoGPModel:
    if len(data) == 0:
        return CoGPModel(prior.mean_fn, prior.Sigma, prior.kernel, prior.S,
                         Dataset.empty(prior.n, prior.m))
    if data.n != prior.n or data.m != prior.m:
        raise ValueError("dataset dimensions do not match the model")
    base = CoGPModel(prior.mean_fn, prior.Sigma, prior.kernel, prior.S, data)
    chol = factor_gram(base.gram())
    Ub = data.Ubar
    resid = np.concatenate([data.Xdot[i] - prior.mean_fn(data.X[i]) @ Ub[i] for i in range(len(data))])
    alpha = cho_solve(chol, resid)
    return CoGPModel(prior.mean_fn, prior.Sigma, prior.kernel, prior.S, data, chol, alpha)


def cogp_predict(model: CoGPModel, x) -> GaussianVector:
    """Posterior Gaussian over ``vec F(x)`` (column-stacked)."""
    x = np.asarray(x, dtype=float)
    mean = np.asarray(model.mean_fn(x), dtype=float).reshape(-1, order="F")
    cov = model.Sigma * model.kernel.k0(x, x)
    if model.k:
        C = model.cross(x)
        mean = mean + C @ model._alpha
        cov = cov - C @ cho_solve(model.cached_chol, C.T)
    cov = 0.5 * (cov + cov.T)
    w, V = np.linalg.eigh(cov)
    if w[0] < 0:
        cov = (V * np.maximum(w, 0.0)) @ V.T
        cov = 0.5 * (cov + cov.T)
    return GaussianVector(mean, cov)
