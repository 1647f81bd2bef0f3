"""Numpy implementation of the RBF kernel loops.

Every function takes already-projected inputs: ``P`` is the inverse
lengthscale matrix and ``s`` the signal variance.
"""
import numpy as np


def _mahal(X1, X2, P):
    PX1 = X1 @ P
    PX2 = X2 @ P
    q = (
        np.einsum("ij,ij->i", PX1, X1)[:, None]
        + np.einsum("ij,ij->i", PX2, X2)[None, :]
        - 2.0 * PX1 @ X2.T
    )
    return np.maximum(q, 0.0)


def rbf_gram(X1, X2, P, s):
    """Matrix ``[s exp(-0.5 (a-b)^T P (a-b))]`` over rows of X1 and X2."""
    X1 = np.ascontiguousarray(X1, dtype=float)
    X2 = np.ascontiguousarray(X2, dtype=float)
    return s * np.exp(-0.5 * _mahal(X1, X2, P))


def rbf_grad(x, X2, P, s):
    """Rows are the gradients of k(x, X2[i]) with respect to x."""
    D = np.asarray(x, dtype=float)[None, :] - np.asarray(X2, dtype=float)
    PD = D @ P
    k = s * np.exp(-0.5 * np.einsum("ij,ij->i", PD, D))
    return -PD * k[:, None]


def rbf_cross_hess(x, X2, P, s):
    """Stack of d^2 k(x, x2) / dx dx2^T for each row x2 of X2."""
    D = np.asarray(x, dtype=float)[None, :] - np.asarray(X2, dtype=float)
    PD = D @ P
    k = s * np.exp(-0.5 * np.einsum("ij,ij->i", PD, D))
    H = P[None, :, :] - PD[:, :, None] * PD[:, None, :]
    return H * k[:, None, None]
