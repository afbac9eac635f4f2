"""Kinematics and isotropic tensor-function calculus.

All functions operate on stacked arrays with the tensor indices in the
trailing axes, e.g. ``(..., 3, 3)`` for second-order tensors.  The
logarithmic strain routines also accept ``(..., 2, 2)`` input, which is
how the plane-strain finite elements use them (the out-of-plane stretch
is identically one, so its logarithm drops out).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveJacobian

# Voigt order 11, 22, 33, 12, 23, 13 with tensorial shear components
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (0, 2))

COALESCENCE_TOL = 1e-9
# relative eigenvalue gap below which divided differences use series limits
_SERIES_GAP = 1e-4


def to_voigt(A: np.ndarray) -> np.ndarray:
    """Pack symmetric ``(..., 3, 3)`` tensors into tensorial Voigt vectors."""
    A = np.asarray(A, dtype=float)
    return np.stack([A[..., i, j] for i, j in VOIGT_PAIRS], axis=-1)


def from_voigt(v: np.ndarray, engineering_shear: bool = False) -> np.ndarray:
    """Unpack Voigt vectors into symmetric ``(..., 3, 3)`` tensors.

    Parameters
    ----------
    v : ndarray, shape (..., 6)
        Components in the order 11, 22, 33, 12, 23, 13.
    engineering_shear : bool
        If True the shear entries are engineering strains (twice the
        tensorial value) and are halved on the way in.  This is the only
        place in the package where the factor two appears.
    """
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    for k, (i, j) in enumerate(VOIGT_PAIRS):
        val = v[..., k] * (0.5 if (engineering_shear and i != j) else 1.0)
        out[..., i, j] = val
        out[..., j, i] = val
    return out


def trace(A: np.ndarray) -> np.ndarray:
    return np.trace(A, axis1=-2, axis2=-1)


def deviator(A: np.ndarray) -> np.ndarray:
    """Deviatoric part ``A - tr(A)/n I`` for ``(..., n, n)`` tensors."""
    A = np.asarray(A, dtype=float)
    n = A.shape[-1]
    return A - (trace(A) / n)[..., None, None] * np.eye(n)


def sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def identity4_sym(n: int = 3) -> np.ndarray:
    """Fourth-order symmetric identity ``1/2 (d_ik d_jl + d_il d_jk)``."""
    I = np.eye(n)
    return 0.5 * (np.einsum("ik,jl->ijkl", I, I) + np.einsum("il,jk->ijkl", I, I))


def right_cauchy_green(F: np.ndarray) -> np.ndarray:
    """Right Cauchy-Green tensor ``C = F^T F``.

    Raises
    ------
    NonPositiveJacobian
        If any ``det F <= 0``.
    """
    F = np.asarray(F, dtype=float)
    if np.any(np.linalg.det(F) <= 0.0):
        raise NonPositiveJacobian("det F <= 0")
    return np.einsum("...ki,...kj->...ij", F, F)


@dataclass(frozen=True)
class SpectralDecomp:
    """Distinct eigenvalues (descending) with their eigenprojections."""

    eigenvalues: tuple[float, ...]
    projections: tuple[np.ndarray, ...]

    def reconstruct(self) -> np.ndarray:
        return sum(lam * P for lam, P in zip(self.eigenvalues, self.projections))


def spectral_decompose(A: np.ndarray, tol: float = COALESCENCE_TOL) -> SpectralDecomp:
    """Eigenprojection decomposition of a single symmetric tensor.

    Eigenvalues closer than ``tol * max|lambda|`` are merged into one
    projection whose eigenvalue is the cluster mean.
    """
    A = sym(np.asarray(A, dtype=float))
    lam, Q = np.linalg.eigh(A)
    order = np.argsort(lam)[::-1]
    lam, Q = lam[order], Q[:, order]
    scale = max(np.max(np.abs(lam)), np.finfo(float).tiny)
    groups: list[list[int]] = [[0]]
    for i in range(1, lam.size):
        if abs(lam[groups[-1][-1]] - lam[i]) < tol * scale:
            groups[-1].append(i)
        else:
            groups.append([i])
    eigs, projs = [], []
    for g in groups:
        eigs.append(float(np.mean(lam[g])))
        projs.append(sum(np.outer(Q[:, i], Q[:, i]) for i in g))
    return SpectralDecomp(tuple(eigs), tuple(projs))


def _atanh_ratio(r: np.ndarray) -> np.ndarray:
    """``atanh(r)/r`` with a series near zero."""
    r = np.asarray(r, dtype=float)
    small = np.abs(r) < 1e-3
    safe = np.where(small, 0.5, r)
    r2 = r * r
    series = 1.0 + r2 / 3.0 + r2 * r2 / 5.0 + r2 * r2 * r2 / 7.0
    return np.where(small, series, np.arctanh(safe) / safe)


def _dd1_halflog(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """First divided difference of ``f(t) = ln(t)/2``."""
    s = x + y
    return _atanh_ratio((x - y) / s) / s


def _dd2_halflog(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Second divided difference of ``f(t) = ln(t)/2``.

    Uses the widest pair as denominator, which keeps the difference
    quotient well conditioned, and a Taylor expansion about the mean once
    all three arguments nearly coincide.
    """
    stack = np.stack(np.broadcast_arrays(a, b, c), axis=-1)
    srt = np.sort(stack, axis=-1)
    lo, mid, hi = srt[..., 0], srt[..., 1], srt[..., 2]
    m = stack.mean(axis=-1)
    spread = hi - lo
    near = spread < _SERIES_GAP * m
    den = np.where(near, 1.0, spread)
    direct = (_dd1_halflog(hi, mid) - _dd1_halflog(mid, lo)) / den
    d = stack - m[..., None]
    h2 = 0.5 * (np.sum(d, axis=-1) ** 2 + np.sum(d * d, axis=-1))
    # f''/2 + f''''/24 * h2 with f'' = -1/(2 t^2), f'''' = -3/t^4
    taylor = -0.25 / m**2 - 0.125 * h2 / m**4
    return np.where(near, taylor, direct)


def hencky_strain(C: np.ndarray, order: int = 2):
    """Logarithmic strain ``eps = 1/2 ln C`` and its derivatives.

    Parameters
    ----------
    C : ndarray, shape (..., n, n)
        Symmetric positive definite metric, ``n`` is 2 or 3.
    order : int
        Number of derivatives to return (0, 1 or 2).

    Returns
    -------
    eps : ndarray, shape (..., n, n)
    dEdC : ndarray, shape (..., n, n, n, n)
        Returned if ``order >= 1``; minor symmetric in both index pairs.
    d2EdC2 : ndarray, shape (..., n, n, n, n, n, n)
        Returned if ``order >= 2``.

    Notes
    -----
    The derivatives follow from the Daleckii-Krein formulas in the
    eigenbasis, with first and second divided differences of ``ln/2``.
    Coalescing eigenvalues are handled by the limits of those divided
    differences, so no projection merging is needed here.
    """
    C = sym(np.asarray(C, dtype=float))
    lam, Q = np.linalg.eigh(C)
    if np.any(lam <= 0.0):
        raise NonPositiveJacobian("metric is not positive definite")
    eps = np.einsum("...ai,...i,...bi->...ab", Q, 0.5 * np.log(lam), Q)
    if order == 0:
        return eps
    n = lam.shape[-1]
    m = n * n
    bshape = lam.shape[:-1]
    f1 = _dd1_halflog(lam[..., :, None], lam[..., None, :])
    # contractions written as batched matrix products over flattened index pairs
    QQ = (Q[..., :, None, :, None] * Q[..., None, :, None, :]).reshape(bshape + (m, m))
    # P[i,k,c,d] = sym_cd(Q_ci Q_dk)
    Qt = np.swapaxes(Q, -1, -2)
    P = Qt[..., :, None, :, None] * Qt[..., None, :, None, :]
    P = 0.5 * (P + np.swapaxes(P, -1, -2))
    P4 = P.reshape(bshape + (m, m))
    dE = (QQ @ (f1.reshape(bshape + (m, 1)) * P4)).reshape(bshape + (n, n, n, n))
    if order == 1:
        return eps, dE
    f2 = _dd2_halflog(lam[..., :, None, None], lam[..., None, :, None],
                      lam[..., None, None, :])
    # W[i,j,cd,ef] = sum_k f2[i,k,j] P[i,k,cd] P[k,j,ef]
    A = np.swapaxes(f2, -1, -2)[..., None] * P.reshape(bshape + (n, 1, n, m))
    Bk = np.swapaxes(P.reshape(bshape + (n, n, m)), -3, -2)[..., None, :, :, :]
    W = np.swapaxes(A, -1, -2) @ Bk
    T = (QQ @ W.reshape(bshape + (m, m * m))).reshape(bshape + (n,) * 6)
    d2E = T + np.swapaxes(np.swapaxes(T, -4, -2), -3, -1)
    return eps, dE, d2E
