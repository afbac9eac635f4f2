"""Thermo-visco-elastic rheological device (spring with two dashpots).

The device carries a total strain ``eps``, an internal dashpot strain
``q``, entropy ``eta`` and temperature ``theta``.  Two incremental
variational updates are provided:

* :func:`step_implicit` finds the stationary point of the fully coupled
  incremental potential over ``(eps, q, eta, theta, T)``.
* :func:`step_semi_explicit` performs the isentropic predictor over
  ``(eps, q, theta)`` at frozen entropy followed by the entropy corrector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import NewtonDivergence, NonPositiveTemperature


@dataclass(frozen=True)
class DeviceParams:
    """Material constants of the device.

    ``H2 = inf`` locks the internal dashpot (``q`` stays at its initial
    value), which is the limit in which the spring alone carries the load.
    """

    E: float = 1000.0
    alpha_T: float = 1e-5
    H1: float = 0.0
    H2: float = 10.0
    C_heat: float = 1.0
    theta0: float = 293.0

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError("E must be positive")
        if not (self.H1 >= 0 and self.H2 >= 0):
            raise ValueError("viscosities must be non-negative")
        if not self.C_heat > 0:
            raise ValueError("C_heat must be positive")
        if not self.theta0 > 0:
            raise ValueError("theta0 must be positive")

    @property
    def q_locked(self) -> bool:
        return math.isinf(self.H2)


@dataclass(frozen=True)
class DeviceState0D:
    eps: float = 0.0
    q: float = 0.0
    eta: float = 0.0
    theta: float = 293.0
    T: float = 293.0

    @classmethod
    def rest(cls, p: DeviceParams) -> "DeviceState0D":
        return cls(0.0, 0.0, 0.0, p.theta0, p.theta0)


@dataclass(frozen=True)
class StepControl:
    """Load and solver settings for one increment.

    Parameters
    ----------
    tau : float
        Time step.
    eps : float, optional
        Prescribed strain at the end of the step (strain-driven mode).
    sigma_ext : float, optional
        Prescribed external stress at the end of the step (stress-driven).
    """

    tau: float
    eps: float | None = None
    sigma_ext: float | None = None
    newton_tol: float = 1e-12
    max_iter: int = 50

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if (self.eps is None) == (self.sigma_ext is None):
            raise ValueError("give exactly one of eps or sigma_ext")

    @property
    def strain_driven(self) -> bool:
        return self.eps is not None


def free_energy(eps: float, q: float, theta: float, p: DeviceParams):
    """Free energy of the device with gradient and Hessian in ``(eps, q, theta)``."""
    if theta <= 0:
        raise NonPositiveTemperature(f"theta = {theta}")
    E, a, C, t0 = p.E, p.alpha_T, p.C_heat, p.theta0
    e = eps - q
    dt = theta - t0
    lg = math.log(theta / t0)
    psi = 0.5 * E * e * e - E * a * e * dt + C * (dt - theta * lg)
    g = np.array([E * e - E * a * dt, -E * e + E * a * dt, -E * a * e - C * lg])
    H = np.array([[E, -E, -E * a], [-E, E, E * a], [-E * a, E * a, -C / theta]])
    return psi, g, H


def entropy(eps: float, q: float, theta: float, p: DeviceParams) -> float:
    """State relation ``eta = -d psi / d theta``."""
    return -free_energy(eps, q, theta, p)[1][2]


def dissipation_potential(deps: float, dq: float, p: DeviceParams):
    """Viscous potential ``phi = H1/2 deps^2 + H2/2 dq^2`` with derivatives."""
    H2 = 0.0 if p.q_locked else p.H2
    phi = 0.5 * p.H1 * deps * deps + 0.5 * H2 * dq * dq
    return phi, np.array([p.H1 * deps, H2 * dq]), np.diag([p.H1, H2])


def temperature_rate(s: DeviceState0D, deps: float, dq: float, deta: float,
                     p: DeviceParams) -> float:
    """Temperature rate implied by the state relation at fixed rates."""
    _, _, H = free_energy(s.eps, s.q, s.theta, p)
    return -(deta + H[2, 0] * deps + H[2, 1] * dq) / H[2, 2]


def temperature_rate_classical(s: DeviceState0D, deps: float, dq: float, deta: float,
                               p: DeviceParams) -> float:
    """Same rate written as ``(theta/C)[deta - E alpha_T (deps - dq)]``."""
    return s.theta / p.C_heat * (deta - p.E * p.alpha_T * (deps - dq))


def check_governing_residuals(s: DeviceState0D, deps: float, dq: float, deta: float,
                              sigma_ext: float, p: DeviceParams) -> np.ndarray:
    """Residuals of equilibrium, Biot, state and entropy-evolution equations."""
    _, g, _ = free_energy(s.eps, s.q, s.theta, p)
    H2 = 0.0 if p.q_locked else p.H2
    diss = p.H1 * deps**2 + H2 * dq**2
    return np.array([
        g[0] + p.H1 * deps - sigma_ext,
        g[1] + H2 * dq,
        s.eta + g[2],
        deta - diss / s.theta,
    ])


def canonical_internal_energy(eta: float, p: DeviceParams) -> float:
    """Internal energy of the pure thermal element, ``C theta0 (exp(eta/C) - 1)``."""
    return p.C_heat * p.theta0 * math.expm1(eta / p.C_heat)


def canonical_dissipation(deps: float, deta: float, theta: float, H: float) -> float:
    """Entropy-based potential of a single dashpot, ``-theta^2/(2H) (deta/deps)^2``."""
    return -theta**2 / (2.0 * H) * (deta / deps) ** 2


# ---------------------------------------------------------------------------
# incremental potentials


def implicit_potential(x: np.ndarray, s_n: DeviceState0D, ctrl: StepControl,
                       p: DeviceParams, psi_n: float | None = None):
    """Fully coupled incremental potential and derivatives.

    ``x = (eps, q, eta, theta, T)``; the load term ``-sigma_ext * eps`` is
    included.  Rows for prescribed or locked unknowns are kept here and
    removed by the caller.
    """
    eps, q, eta, theta, T = x
    tau = ctrl.tau
    psi, g, H = free_energy(eps, q, theta, p)
    if psi_n is None:
        psi_n = free_energy(s_n.eps, s_n.q, s_n.theta, p)[0]
    H1 = p.H1
    H2 = 0.0 if p.q_locked else p.H2
    de, dq = eps - s_n.eps, q - s_n.q
    r = T / s_n.theta
    w = (H1 * de * de + H2 * dq * dq) / tau  # = tau * 2 phi(rate)
    sig = ctrl.sigma_ext or 0.0
    val = (psi - psi_n + theta * eta - s_n.theta * s_n.eta - T * (eta - s_n.eta)
           + 0.5 * r * r * w - sig * eps)
    grad = np.array([
        g[0] + r * r * H1 * de / tau - sig,
        g[1] + r * r * H2 * dq / tau,
        theta - T,
        g[2] + eta,
        -(eta - s_n.eta) + r * w / s_n.theta,
    ])
    k04 = 2 * r * H1 * de / (tau * s_n.theta)
    k14 = 2 * r * H2 * dq / (tau * s_n.theta)
    K = np.array([
        [H[0, 0] + r * r * H1 / tau, H[0, 1], 0.0, H[0, 2], k04],
        [H[1, 0], H[1, 1] + r * r * H2 / tau, 0.0, H[1, 2], k14],
        [0.0, 0.0, 0.0, 1.0, -1.0],
        [H[2, 0], H[2, 1], 1.0, H[2, 2], 0.0],
        [k04, k14, -1.0, 0.0, w / s_n.theta**2],
    ])
    return val, grad, K


def predictor_potential(x: np.ndarray, s_n: DeviceState0D, ctrl: StepControl,
                        p: DeviceParams):
    """Isentropic predictor potential over ``(eps, q, theta)``.

    ``psi + eta_n theta + tau phi(rate) - sigma_ext eps``, i.e. the
    semi-explicit incremental potential after ``T = theta_n`` and before
    the entropy corrector.
    """
    eps, q, theta = x
    tau = ctrl.tau
    psi, g, H = free_energy(eps, q, theta, p)
    H2 = 0.0 if p.q_locked else p.H2
    de, dq = eps - s_n.eps, q - s_n.q
    sig = ctrl.sigma_ext or 0.0
    val = psi + s_n.eta * theta + 0.5 * (p.H1 * de * de + H2 * dq * dq) / tau - sig * eps
    grad = g + np.array([p.H1 * de / tau - sig, H2 * dq / tau, s_n.eta])
    K = H.copy()
    K[0, 0] += p.H1 / tau
    K[1, 1] += H2 / tau
    return val, grad, K


def _newton(fun: Callable, x0: np.ndarray, free: np.ndarray, theta_idx: list[int],
            tol: float, max_iter: int) -> np.ndarray:
    """Newton on the stationarity system with residual-norm backtracking.

    The step is halved until every temperature-like unknown stays positive
    and the residual norm decreases.
    """
    x = x0.copy()
    sel = np.ix_(free, free)
    _, g, K = fun(x)
    rn = np.linalg.norm(g[free])
    for _ in range(max_iter):
        if rn <= tol * (1.0 + abs(x[theta_idx]).max()):
            return x
        dx = np.linalg.solve(K[sel], -g[free])
        step = 1.0
        for _ in range(40):
            xt = x.copy()
            xt[free] += step * dx
            if np.all(xt[theta_idx] > 0):
                try:
                    _, gt, Kt = fun(xt)
                except NonPositiveTemperature:
                    gt = None
                if gt is not None:
                    rt = np.linalg.norm(gt[free])
                    if rt < rn or rt <= tol:
                        break
            step *= 0.5
        else:
            raise NewtonDivergence("line search failed")
        x, g, K, rn = xt, gt, Kt, rt
    if rn <= tol * (1.0 + abs(x[theta_idx]).max()):
        return x
    raise NewtonDivergence(f"residual {rn:.3e} after {max_iter} iterations")


def step_implicit(s_n: DeviceState0D, ctrl: StepControl, p: DeviceParams) -> DeviceState0D:
    """Implicit update: stationary point of the coupled incremental potential."""
    x0 = np.array([s_n.eps if ctrl.eps is None else ctrl.eps, s_n.q, s_n.eta,
                   s_n.theta, s_n.theta])
    free = [i for i in range(5)
            if not (i == 0 and ctrl.strain_driven) and not (i == 1 and p.q_locked)]
    psi_n = free_energy(s_n.eps, s_n.q, s_n.theta, p)[0]
    x = _newton(lambda y: implicit_potential(y, s_n, ctrl, p, psi_n), x0, np.array(free),
                [3, 4], ctrl.newton_tol, ctrl.max_iter)
    return DeviceState0D(*map(float, x))


def semi_explicit_split(s_n: DeviceState0D, ctrl: StepControl,
                        p: DeviceParams) -> tuple[np.ndarray, float]:
    """Predictor ``(eps, q, theta)`` and the entropy increment of the corrector.

    The increment is returned separately because the stored entropy
    ``eta_n + d_eta`` is rounded to the precision of ``eta_n``.
    """
    x0 = np.array([s_n.eps if ctrl.eps is None else ctrl.eps, s_n.q, s_n.theta])
    free = [i for i in range(3)
            if not (i == 0 and ctrl.strain_driven) and not (i == 1 and p.q_locked)]
    x = _newton(lambda y: predictor_potential(y, s_n, ctrl, p), x0,
                np.array(free), [2], ctrl.newton_tol, ctrl.max_iter)
    return x, entropy_increment_unscaled(s_n, x[0], x[1], ctrl.tau, p)


def step_semi_explicit(s_n: DeviceState0D, ctrl: StepControl, p: DeviceParams) -> DeviceState0D:
    """Isentropic predictor followed by the entropy corrector."""
    (eps, q, theta), d_eta = semi_explicit_split(s_n, ctrl, p)
    return DeviceState0D(float(eps), float(q), float(s_n.eta + d_eta), float(theta), s_n.theta)


def entropy_increment_unscaled(s_n: DeviceState0D, eps: float, q: float, tau: float,
                               p: DeviceParams) -> float:
    """``(tau/theta_n) * 2 phi(rate)`` of the step ending at ``(eps, q)``."""
    phi = dissipation_potential((eps - s_n.eps) / tau, (q - s_n.q) / tau, p)[0]
    return tau / s_n.theta * 2.0 * phi


def stationarity_hessian(s: DeviceState0D, s_n: DeviceState0D, ctrl: StepControl,
                         p: DeviceParams) -> np.ndarray:
    """Hessian of the implicit potential over the free unknowns at ``s``."""
    x = np.array([s.eps, s.q, s.eta, s.theta, s.T])
    K = implicit_potential(x, s_n, ctrl, p)[2]
    free = [i for i in range(5)
            if not (i == 0 and ctrl.strain_driven) and not (i == 1 and p.q_locked)]
    return K[np.ix_(free, free)]


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    eps: np.ndarray
    q: np.ndarray
    eta: np.ndarray
    theta: np.ndarray
    T: np.ndarray
    sigma: np.ndarray
    dissipation_increment: np.ndarray

    def as_rows(self):
        cols = [self.t, self.eps, self.q, self.eta, self.theta, self.T, self.sigma,
                self.dissipation_increment]
        return list(zip(*(c.tolist() for c in cols)))


TRAJECTORY_COLUMNS = ("t", "eps", "q", "eta", "theta", "T", "sigma",
                      "dissipation_increment")


def integrate(p: DeviceParams, t_end: float, steps: int, algorithm: str = "implicit",
              strain: Callable[[float], float] | None = None,
              stress: Callable[[float], float] | None = None,
              s0: DeviceState0D | None = None, newton_tol: float = 1e-12) -> Trajectory:
    """Run a trajectory with uniform steps under a strain or stress history.

    The recorded stress is the equilibrium stress ``d psi/d eps`` plus the
    viscous contribution of the step; the dissipation increment is
    ``2 tau phi(rate)``.
    """
    if (strain is None) == (stress is None):
        raise ValueError("give exactly one of strain or stress")
    stepper = {"implicit": step_implicit, "semi-explicit": step_semi_explicit}[algorithm]
    s = s0 or DeviceState0D.rest(p)
    tau = t_end / steps
    rows = [(0.0, s, 0.0 if stress is None else stress(0.0), 0.0)]
    for k in range(1, steps + 1):
        t = k * tau
        if strain is not None:
            ctrl = StepControl(tau, eps=strain(t), newton_tol=newton_tol)
        else:
            ctrl = StepControl(tau, sigma_ext=stress(t), newton_tol=newton_tol)
        s_new = stepper(s, ctrl, p)
        de = (s_new.eps - s.eps) / tau
        dq = (s_new.q - s.q) / tau
        phi = dissipation_potential(de, dq, p)[0]
        r = s_new.T / s.theta
        sigma = free_energy(s_new.eps, s_new.q, s_new.theta, p)[1][0] + r * r * p.H1 * de
        rows.append((t, s_new, sigma, 2.0 * tau * phi))
        s = s_new
    t = np.array([r[0] for r in rows])
    get = lambda name: np.array([getattr(r[1], name) for r in rows])
    return Trajectory(t, get("eps"), get("q"), get("eta"), get("theta"), get("T"),
                      np.array([r[2] for r in rows]), np.array([r[3] for r in rows]))


def with_params(p: DeviceParams, **kw) -> DeviceParams:
    return replace(p, **kw)
