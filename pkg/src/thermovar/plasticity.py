"""Finite-strain additive gradient plasticity with thermal softening.

Kinematics use Hencky strains, ``eps = 1/2 ln C`` and a deviatoric
plastic strain ``eps_p``, combined additively.  The stored energy is

    psi = kappa/2 (tr eps)^2 + mu |Dev(eps - eps_p)|^2 + 1/2 h(theta) alpha^2
          + 1/2 mu l^2 |grad alpha|^2 - kappa alpha_T tr(eps) (theta - theta0)
          + C [(theta - theta0) - theta ln(theta/theta0)]

with ``h(theta) = h0 [1 - w_h (theta - theta0)]`` and the yield stress
``y(theta) = y0 [1 - w0 (theta - theta0)]``.  Plastic flow is of von Mises
type with a viscous over-force regularization.

The quadrature-point density consumed by the finite elements is the
semi-explicit step potential in the unknowns ``(F, alpha, grad alpha,
beta)``; plastic strain and temperature are condensed out in closed form.
Plane strain is represented by a 2x2 in-plane deformation gradient; the
constitutive update itself works with 3x3 tensors (the out-of-plane
plastic strain is non-zero).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import NonPositiveJacobian, NonPositiveTemperature, ZeroNormDirection
from .tensors import deviator, hencky_strain, trace

SQ23 = np.sqrt(2.0 / 3.0)
I3 = np.eye(3)


@dataclass(frozen=True)
class PlastParams:
    """Material constants (units MPa, mm, s, K).

    ``eta_f`` is the over-force viscosity and ``k`` the (optional)
    thermal conductivity.
    """

    kappa: float = 164206.0
    mu: float = 80194.0
    alpha_T: float = 1e-5
    C_heat: float = 3.588
    theta0: float = 293.0
    h0: float = 50.0
    w_h: float = 0.002
    y0: float = 450.0
    w0: float = 0.01
    l: float = 0.2
    eta_f: float = 0.1
    k: float = 45.0

    def __post_init__(self):
        for name in ("kappa", "mu", "C_heat", "theta0", "y0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.eta_f <= 0:
            raise ValueError("eta_f must be positive (viscous over-force formulation)")
        if self.l < 0:
            raise ValueError("l must be non-negative")

    def hardening(self, theta):
        return self.h0 * (1.0 - self.w_h * (np.asarray(theta) - self.theta0))

    def yield_stress(self, theta):
        return self.y0 * (1.0 - self.w0 * (np.asarray(theta) - self.theta0))


@dataclass
class PlastPointState:
    """History of one material point."""

    eps_p: np.ndarray
    alpha: float
    eta: float
    theta: float

    @classmethod
    def virgin(cls, p: PlastParams) -> "PlastPointState":
        return cls(np.zeros((3, 3)), 0.0, 0.0, p.theta0)


def _norm(A):
    return np.sqrt(np.einsum("...ij,...ij->...", A, A))


def plast_free_energy(eps, eps_p, alpha, grad_alpha, theta, p: PlastParams):
    """Free energy and its driving forces.

    Returns
    -------
    psi : float
    sigma_e : ndarray (3, 3)
        ``d psi / d eps``.
    Beta_e : ndarray (3, 3)
        ``d psi / d eps_p = -2 mu Dev(eps - eps_p)``.
    beta_e : float
        Local part ``d psi / d alpha`` (the gradient term contributes
        ``-mu l^2 Lap alpha`` in the field equations).
    eta_tilde : float
        ``d psi / d theta``; the entropy is its negative.
    """
    if theta <= 0:
        raise NonPositiveTemperature("theta <= 0")
    eps = np.asarray(eps, float)
    eps_p = np.asarray(eps_p, float)
    ga = np.asarray(grad_alpha, float)
    tr = np.trace(eps)
    ed = deviator(eps - eps_p)
    dth = theta - p.theta0
    h = p.hardening(theta)
    psi = (0.5 * p.kappa * tr**2 + p.mu * np.sum(ed * ed) + 0.5 * h * alpha**2
           + 0.5 * p.mu * p.l**2 * ga @ ga - p.kappa * p.alpha_T * tr * dth
           + p.C_heat * (dth - theta * np.log(theta / p.theta0)))
    sigma = p.kappa * (tr - p.alpha_T * dth) * I3 + 2.0 * p.mu * ed
    Beta = -2.0 * p.mu * ed
    beta = h * alpha
    eta_t = (-0.5 * p.h0 * p.w_h * alpha**2 - p.kappa * p.alpha_T * tr
             - p.C_heat * np.log(theta / p.theta0))
    return float(psi), sigma, Beta, float(beta), float(eta_t)


def yield_function(s, beta, theta, p: PlastParams, y_scale: float = 1.0):
    """``f = |s| - sqrt(2/3) (y(theta) - beta)``."""
    return _norm(np.asarray(s, float)) - SQ23 * (y_scale * p.yield_stress(theta) - beta)


def viscous_flow_update(Beta_e, beta_e, theta_n, state_n: PlastPointState, tau: float,
                        p: PlastParams, y_scale: float = 1.0):
    """Explicit over-force update driven by given forces.

    The threshold is evaluated at ``s = -Beta_e``, ``beta = -beta_e`` and the
    temperature ``theta_n``.

    Returns
    -------
    eps_p : ndarray (3, 3)
    alpha : float
    lam : float
        Effective plastic multiplier ``<f>_+ / eta_f``.

    Raises
    ------
    ZeroNormDirection
        If flow is requested while ``|Beta_e| = 0``.
    """
    Beta_e = np.asarray(Beta_e, float)
    f = float(yield_function(-Beta_e, -beta_e, theta_n, p, y_scale))
    lam = max(f, 0.0) / p.eta_f
    if lam == 0.0:
        return state_n.eps_p.copy(), state_n.alpha, 0.0
    nB = float(_norm(Beta_e))
    if nB == 0.0:
        raise ZeroNormDirection("plastic flow along a zero driving force")
    eps_p = state_n.eps_p - tau * lam * Beta_e / nB
    return eps_p, state_n.alpha + tau * lam * SQ23, lam


def local_return(eps, state_n: PlastPointState, tau: float, p: PlastParams,
                 y_scale: float = 1.0, rate_independent: bool = False):
    """Implicit return of the local model (no gradient term, theta frozen at theta_n).

    The dual force is the local ``beta = -h alpha``; with
    ``rate_independent`` the consistency ``f = 0`` is solved by a scalar
    root-find (bracketing), otherwise the linear over-force equation is
    solved in closed form.

    Returns ``(eps_p, alpha, dgamma)`` where ``dgamma = |Delta eps_p|``.
    """
    th = state_n.theta
    h = float(p.hardening(th))
    y = y_scale * float(p.yield_stress(th))
    s_tr = 2.0 * p.mu * (deviator(np.asarray(eps, float)) - state_n.eps_p)
    ns = float(_norm(s_tr))

    def over(g):
        return ns - 2.0 * p.mu * g - SQ23 * (y + h * (state_n.alpha + SQ23 * g))

    if over(0.0) <= 0.0:
        return state_n.eps_p.copy(), state_n.alpha, 0.0
    if rate_independent:
        hi = ns / (2.0 * p.mu)
        while over(hi) > 0.0:
            hi *= 2.0
        g = brentq(over, 0.0, hi, xtol=1e-16, rtol=1e-15)
    else:
        g = over(0.0) / (p.eta_f / tau + 2.0 * p.mu + (2.0 / 3.0) * h)
    n = s_tr / ns
    return state_n.eps_p + g * n, state_n.alpha + SQ23 * g, g


def intrinsic_dissipation_plast(s, beta, deps_p, dalpha) -> float:
    """Dissipation power ``s : deps_p + beta dalpha``."""
    return float(np.sum(np.asarray(s) * np.asarray(deps_p)) + beta * dalpha)


def conduction_potential(T, grad_T, C_n, theta_n, k):
    """Conductive dissipation potential with frozen metric and temperature.

    ``phi = theta_n k C_n^{-1} : (g x g) / 2`` with ``g = -grad_T / T``.

    Returns the value and its derivatives with respect to ``T`` and
    ``grad_T``.
    """
    grad_T = np.asarray(grad_T, float)
    Ci = np.linalg.inv(np.asarray(C_n, float))
    g = -grad_T / T
    val = 0.5 * theta_n * k * g @ Ci @ g
    dg = theta_n * k * Ci @ g
    d_gradT = -dg / T
    d_T = float(dg @ grad_T) / T**2
    return float(val), float(d_T), d_gradT


@dataclass
class PlastHistory:
    """Batched quadrature-point history, arrays with leading shape ``(...)``."""

    eps_p: np.ndarray       # (..., 3, 3)
    alpha: np.ndarray       # nodal alpha interpolated at the point (previous step)
    eta: np.ndarray
    theta: np.ndarray
    alpha_loc: np.ndarray   # accumulated local plastic strain sqrt(2/3) sum dgamma
    dissipation: np.ndarray  # dissipated work per volume in the last step
    y_scale: np.ndarray

    @classmethod
    def virgin(cls, shape, p: PlastParams, y_scale=None) -> "PlastHistory":
        z = np.zeros(shape)
        ys = np.ones(shape) if y_scale is None else np.asarray(y_scale, float)
        return cls(np.zeros(shape + (3, 3)), z.copy(), z.copy(), np.full(shape, p.theta0),
                   z.copy(), z.copy(), ys)


@dataclass
class PointUpdate:
    """Condensed local quantities at the current iterate."""

    eps_p: np.ndarray
    s: np.ndarray
    dgamma: np.ndarray
    theta: np.ndarray
    sigma: np.ndarray


def _embed(eps2):
    eps = np.zeros(eps2.shape[:-2] + (3, 3))
    eps[..., :2, :2] = eps2
    return eps


def plast_density(F, alpha, grad_alpha, beta, hist: PlastHistory, tau: float, p: PlastParams,
                  order: int = 2):
    """Semi-explicit step potential at a batch of quadrature points.

    Parameters
    ----------
    F : ndarray (..., 2, 2)
        In-plane deformation gradient (plane strain).
    alpha, beta : ndarray (...)
        Hardening variable and its dual force interpolated from the nodes.
    grad_alpha : ndarray (..., 2)
    hist : PlastHistory
        Values at the beginning of the step.

    Returns
    -------
    val : ndarray (...)
    grad : ndarray (..., 8)
        Derivatives w.r.t. ``(F00, F01, F10, F11, alpha, alpha_x, alpha_y, beta)``.
    hess : ndarray (..., 8, 8)
        Returned if ``order >= 2``.
    upd : PointUpdate
    """
    F = np.asarray(F, float)
    if np.any(np.linalg.det(F) <= 0.0):
        bad = np.argwhere(np.linalg.det(F) <= 0.0)[0]
        raise NonPositiveJacobian("det F <= 0", int(bad[0]))
    mu, kap, aT, Ch = p.mu, p.kappa, p.alpha_T, p.C_heat
    C = np.einsum("...ki,...kj->...ij", F, F)
    if order >= 2:
        eps2, L, L2 = hencky_strain(C, 2)
    else:
        eps2, L = hencky_strain(C, 1)
    eps = _embed(eps2)
    tr = trace(eps)
    s_tr = 2.0 * mu * (deviator(eps) - hist.eps_p)
    ns = _norm(s_tr)
    y_n = hist.y_scale * p.yield_stress(hist.theta)
    k_thr = SQ23 * (y_n - beta)
    den = p.eta_f / tau + 2.0 * mu
    f_tr = ns - k_thr
    plastic = f_tr > 0.0
    dg = np.where(plastic, f_tr / den, 0.0)
    n = s_tr / np.where(ns > 0.0, ns, 1.0)[..., None, None]
    s = s_tr - 2.0 * mu * dg[..., None, None] * n
    eps_p = hist.eps_p + dg[..., None, None] * n
    f = np.where(plastic, ns - 2.0 * mu * dg - k_thr, 0.0)
    # temperature from the closed-form stationarity condition
    A = hist.eta - kap * aT * tr - 0.5 * p.h0 * p.w_h * alpha**2
    theta = p.theta0 * np.exp(A / Ch)
    if np.any(~np.isfinite(theta)) or np.any(theta <= 0.0):
        raise NonPositiveTemperature("temperature update failed")
    dth = theta - p.theta0
    h = p.hardening(theta)
    ee = deviator(eps) - eps_p
    val = (0.5 * kap * tr**2 + mu * np.einsum("...ij,...ij->...", ee, ee)
           + np.einsum("...ij,...ij->...", s, eps_p - hist.eps_p)
           - 0.5 * tau / p.eta_f * f**2
           + 0.5 * h * alpha**2 - kap * aT * tr * dth
           + Ch * (dth - theta * np.log(theta / p.theta0)) + hist.eta * (theta - hist.theta)
           + 0.5 * mu * p.l**2 * np.einsum("...i,...i->...", grad_alpha, grad_alpha)
           + beta * (alpha - hist.alpha))
    sigma = (kap * (tr - aT * dth))[..., None, None] * I3 + s
    sig2 = sigma[..., :2, :2]
    S = 2.0 * np.einsum("...ij,...ijkl->...kl", sig2, L)
    P = np.einsum("...ak,...kl->...al", F, S)
    grad = np.empty(F.shape[:-2] + (8,))
    grad[..., :4] = P.reshape(F.shape[:-2] + (4,))
    grad[..., 4] = h * alpha + beta
    grad[..., 5:7] = mu * p.l**2 * grad_alpha
    grad[..., 7] = (alpha - hist.alpha) - SQ23 * dg
    upd = PointUpdate(eps_p, s, dg, theta, sigma)
    if order < 2:
        return val, grad, upd

    # material tangent d sigma / d eps on the in-plane block
    I2 = np.eye(2)
    II = np.einsum("ij,kl->ijkl", I2, I2)
    Isym = 0.5 * (np.einsum("ik,jl->ijkl", I2, I2) + np.einsum("il,jk->ijkl", I2, I2))
    Pdev = Isym - II / 3.0
    n2 = n[..., :2, :2]
    nn = np.einsum("...ij,...kl->...ijkl", n2, n2)
    pl = plastic.astype(float)
    c_nn = pl * 4.0 * mu**2 / den
    c_rot = pl * 4.0 * mu**2 * dg / np.where(ns > 0.0, ns, 1.0)
    Cmat = ((kap + kap**2 * aT**2 * theta / Ch)[..., None, None, None, None] * II
            + 2.0 * mu * Pdev
            - c_nn[..., None, None, None, None] * nn
            - c_rot[..., None, None, None, None] * (Pdev - nn))
    # second derivative w.r.t. C, as 4x4 matrices over index pairs
    shp = F.shape[:-2]
    L4 = L.reshape(shp + (4, 4))
    K = (np.swapaxes(L4, -1, -2) @ Cmat.reshape(shp + (4, 4)) @ L4
         + (sig2.reshape(shp + (1, 4)) @ L2.reshape(shp + (4, 16))).reshape(shp + (4, 4)))
    # d2/dF2 = I (x) S + 4 (F (x) I) K (F (x) I)^T with K indexed [(C,A),(D,B)]
    FI = (F[..., :, None, :, None] * I2[None, :, None, :]).reshape(shp + (4, 4))
    HFF = (I2[:, None, :, None] * S[..., None, :, None, :]).reshape(shp + (4, 4))
    HFF = HFF + 4.0 * FI @ K @ np.swapaxes(FI, -1, -2)
    H = np.zeros(shp + (8, 8))
    H[..., :4, :4] = HFF
    # d sigma / d alpha and d sigma / d beta map through dE/dF = 2 F (. : L)
    dsig_da = (kap * aT * theta / Ch * p.h0 * p.w_h * alpha)[..., None, None] * I2
    dsig_db = -(pl * 2.0 * mu * SQ23 / den)[..., None, None] * n2
    for col, dsig in ((4, dsig_da), (7, dsig_db)):
        dS = 2.0 * np.einsum("...ij,...ijkl->...kl", dsig, L)
        v = np.einsum("...ak,...kl->...al", F, dS).reshape(shp + (4,))
        H[..., :4, col] = v
        H[..., col, :4] = v
    H[..., 4, 4] = h + theta * (p.h0 * p.w_h * alpha) ** 2 / Ch
    H[..., 4, 7] = H[..., 7, 4] = 1.0
    H[..., 5, 5] = H[..., 6, 6] = mu * p.l**2
    H[..., 7, 7] = -pl * (2.0 / 3.0) / den
    return val, grad, H, upd


def step_dissipation(upd: PointUpdate, hist: PlastHistory, tau: float, p: PlastParams):
    """Dissipated work per volume of the step at each point.

    Uses the local plastic increment, ``s : Delta eps_p + beta_loc Delta alpha_loc``
    with ``Delta alpha_loc = sqrt(2/3) dgamma``, which equals
    ``dgamma (sqrt(2/3) y(theta_n) + f)`` and is non-negative.
    """
    y_n = hist.y_scale * p.yield_stress(hist.theta)
    f_over = p.eta_f * upd.dgamma / tau
    return upd.dgamma * (SQ23 * y_n + f_over)


def commit(upd: PointUpdate, alpha: np.ndarray, hist: PlastHistory, tau: float,
           p: PlastParams) -> PlastHistory:
    """History at the end of an accepted step (semi-explicit entropy update)."""
    diss = step_dissipation(upd, hist, tau, p)
    eta = hist.eta + diss / hist.theta
    return PlastHistory(upd.eps_p.copy(), np.asarray(alpha, float).copy(), eta, upd.theta.copy(),
                        hist.alpha_loc + SQ23 * upd.dgamma, diss, hist.y_scale)
