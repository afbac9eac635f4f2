"""Gauss rules and bilinear shape functions."""
from __future__ import annotations

import numpy as np

from ..errors import NonPositiveJacobian


def gauss_1d(n: int):
    """Points and weights of the ``n``-point Gauss-Legendre rule on [-1, 1]."""
    return np.polynomial.legendre.leggauss(n)


def gauss_quad(n: int = 2):
    """Tensor-product rule on the reference square, points ``(nq, 2)``."""
    x, w = gauss_1d(n)
    X, Y = np.meshgrid(x, x)
    W = np.outer(w, w)
    return np.column_stack([X.ravel(), Y.ravel()]), W.ravel()


_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def q4_shape(xi: np.ndarray):
    """Values ``(nq, 4)`` and reference gradients ``(nq, 4, 2)`` of Q1."""
    xi = np.atleast_2d(xi)
    a = 1.0 + xi[:, None, 0] * _CORNERS[None, :, 0]
    b = 1.0 + xi[:, None, 1] * _CORNERS[None, :, 1]
    N = 0.25 * a * b
    dN = np.stack([0.25 * _CORNERS[None, :, 0] * b, 0.25 * _CORNERS[None, :, 1] * a], axis=-1)
    return N, dN


def q4_geometry(X: np.ndarray, dN_ref: np.ndarray):
    """Jacobians of a batch of elements.

    Parameters
    ----------
    X : ndarray (ne, 4, 2)
        Element node coordinates.
    dN_ref : ndarray (nq, 4, 2)

    Returns
    -------
    detJ : ndarray (ne, nq)
    dN : ndarray (ne, nq, 4, 2)
        Spatial shape-function gradients.
    J : ndarray (ne, nq, 2, 2)
        ``J[i, j] = dX_i / dxi_j``.

    Raises
    ------
    NonPositiveJacobian
        For inverted or degenerate elements.
    """
    J = np.einsum("eai,qaj->eqij", X, dN_ref)
    detJ = np.linalg.det(J)
    if np.any(detJ <= 0.0):
        raise NonPositiveJacobian("degenerate element", int(np.argwhere(detJ <= 0.0)[0, 0]))
    Jinv = np.linalg.inv(J)
    dN = np.einsum("qaj,eqji->eqai", dN_ref, Jinv)
    return detJ, dN, J
