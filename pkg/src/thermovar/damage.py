"""Thermo-gradient damage in a one-dimensional bar at finite strain.

The bar is stretched in uniaxial strain, ``F = diag(lambda, 1, 1)``, by a
prescribed end displacement.  Nodal displacement ``u`` and damage ``d``
are the global unknowns (linear elements); temperature lives at the
single quadrature point of each element and is condensed out by a local
scalar Newton iteration.  The dual driving force conjugate to ``d`` is
eliminated analytically, which leaves a bound-constrained primal problem

    min_{u, d >= d_n}  sum_e h * pi_e(lambda, d, d', theta*)

solved by Newton iterations inside a primal-dual active-set loop.

Per unit volume, with ``r = theta/theta_n`` (implicit) or ``r = 1``
(semi-explicit) and ``Dd = d - d_n``::

    pi = psi(lambda, d, theta) + eta_n (theta - theta_n)
         + r [c(theta_n) Dd + mu l^2 / 2 (d'^2 - d_n'^2)]
         + eta_f / (2 tau) r^2 Dd^2          (viscous mode only)
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import (ActiveSetCycling, LocalNewtonDivergence, NewtonDivergence,
                     NonPositiveJacobian, NonPositiveTemperature, SingularMatrix,
                     StepSizeFloor)
from .fem.solver import factor_solve

MODES = ("kkt", "viscous")
ALGORITHMS = ("implicit", "semi-explicit")


@dataclass(frozen=True)
class DamageParams:
    """Material constants of the damage model.

    The damage threshold softens linearly with temperature,
    ``c(theta) = c0 [1 - w_c (theta - theta0)]``, and the conductivity of
    damaged material is ``k(d) = (1 - d)^2 k_b``.
    """

    mu: float = 100.0
    delta: float = 2.0
    alpha_T: float = 1e-5
    C_heat: float = 1.0
    theta0: float = 293.0
    c0: float = 10.0
    w_c: float = 1e-3
    l: float = 0.04
    k_b: float = 0.1
    eta_f: float = 1e-2

    def __post_init__(self):
        for name in ("mu", "delta", "C_heat", "theta0", "c0", "l", "k_b"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.eta_f < 0:
            raise ValueError("eta_f must be non-negative")

    def threshold(self, theta):
        c = self.c0 * (1.0 - self.w_c * (np.asarray(theta) - self.theta0))
        if np.any(c <= 0):
            raise NonPositiveTemperature("damage threshold c(theta) is not positive")
        return c


def degradation(d):
    """``g(d) = (1-d)^2`` and its first two derivatives."""
    return (1.0 - d) ** 2, -2.0 * (1.0 - d), 2.0 * np.ones_like(np.asarray(d, float))


def thermal_energy(theta, p):
    """Purely thermal free energy with derivatives (value, first, second)."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0):
        raise NonPositiveTemperature("theta <= 0")
    lg = np.log(theta / p.theta0)
    return (p.C_heat * ((theta - p.theta0) - theta * lg), -p.C_heat * lg,
            -p.C_heat / theta)


def damage_free_energy(F: np.ndarray, d: float, theta: float, p: DamageParams):
    """Free energy and driving forces for a general deformation gradient.

    Parameters
    ----------
    F : ndarray, shape (3, 3)
        Deformation gradient; ``C = F^T F``.
    d, theta : float
        Damage and temperature.

    Returns
    -------
    psi : float
    P_e : ndarray, shape (3, 3)
        First Piola-Kirchhoff stress ``d psi / d F``.
    beta_e : float
        ``d psi / d d``.
    eta_tilde : float
        ``d psi / d theta`` (the entropy is its negative).
    """
    F = np.asarray(F, dtype=float)
    J = np.linalg.det(F)
    if J <= 0:
        raise NonPositiveJacobian("det F <= 0")
    th = theta - p.theta0
    j = np.exp(-2.0 * p.alpha_T * th)       # J_theta^(-2/3)
    C = F.T @ F
    Ce = j * C
    detCe = np.linalg.det(Ce)
    w = detCe ** (-0.5 * p.delta)
    psi_e = 0.5 * p.mu * (np.trace(Ce) - 3.0) + p.mu / p.delta * (w - 1.0)
    g, dg, _ = degradation(d)
    psi_t, dpsi_t, _ = thermal_energy(theta, p)
    P = g * j * F @ (p.mu * np.eye(3) - p.mu * w * np.linalg.inv(Ce))
    # d Ce/d theta = -2 alpha_T Ce, d w/d theta = 3 delta alpha_T w
    eta_t = -g * p.alpha_T * (p.mu * np.trace(Ce) - 3.0 * p.mu * w) + dpsi_t
    return g * psi_e + psi_t, P, dg * psi_e, float(eta_t)


def damage_threshold(beta, theta, p: DamageParams):
    """Threshold function ``f = beta - c(theta)``."""
    return beta - p.threshold(theta)


def _elastic_uniaxial(lam, theta, p):
    """Stored energy of ``F = diag(lam, 1, 1)`` and its derivatives.

    Returns the value and the derivatives with respect to ``lam`` and
    ``theta`` as ``(v, v_l, v_t, v_ll, v_lt, v_tt)``.
    """
    th = theta - p.theta0
    a, mu, dl = p.alpha_T, p.mu, p.delta
    j = np.exp(-2.0 * a * th)
    w = np.exp(3.0 * dl * a * th - dl * np.log(lam))
    v = 0.5 * mu * (j * (lam**2 + 2.0) - 3.0) + mu / dl * (w - 1.0)
    v_l = mu * (j * lam - w / lam)
    v_t = -mu * a * j * (lam**2 + 2.0) + 3.0 * mu * a * w
    v_ll = mu * (j + (1.0 + dl) * w / lam**2)
    v_lt = mu * (-2.0 * a * j * lam - 3.0 * dl * a * w / lam)
    v_tt = 2.0 * mu * a**2 * j * (lam**2 + 2.0) + 9.0 * dl * mu * a**2 * w
    return v, v_l, v_t, v_ll, v_lt, v_tt


@dataclass
class BarState:
    """Nodal and element fields of the bar at one time.

    ``u, d`` are nodal (``n_el + 1``); ``eta, theta`` are per element.
    ``c_scale`` multiplies the damage threshold per element and carries
    the imperfection.
    """

    x: np.ndarray
    u: np.ndarray
    d: np.ndarray
    eta: np.ndarray
    theta: np.ndarray
    c_scale: np.ndarray
    t: float = 0.0

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.x)

    @property
    def n_el(self) -> int:
        return self.x.size - 1

    def stretch(self) -> np.ndarray:
        return 1.0 + np.diff(self.u) / self.h

    def copy(self) -> "BarState":
        return BarState(self.x.copy(), self.u.copy(), self.d.copy(), self.eta.copy(),
                        self.theta.copy(), self.c_scale.copy(), self.t)


def make_bar(length: float, n_el: int, p: DamageParams, imperfection: float = 0.0) -> BarState:
    """Undeformed, undamaged bar at the reference temperature.

    ``imperfection`` is the relative reduction of the threshold in the
    central element (e.g. ``0.03`` for three percent).
    """
    x = np.linspace(0.0, length, n_el + 1)
    c_scale = np.ones(n_el)
    c_scale[n_el // 2] -= imperfection
    return BarState(x, np.zeros(n_el + 1), np.zeros(n_el + 1), np.zeros(n_el),
                    np.full(n_el, p.theta0), c_scale)


class BarIncrement:
    """Incremental potential of one time step with temperature condensed.

    Parameters
    ----------
    s_n : BarState
        Converged state at the beginning of the step.
    tau : float
        Time step.
    mode : {"kkt", "viscous"}
    algorithm : {"implicit", "semi-explicit"}
    """

    def __init__(self, s_n: BarState, tau: float, p: DamageParams, mode: str = "kkt",
                 algorithm: str = "implicit"):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {algorithm!r}")
        if mode == "viscous" and p.eta_f <= 0:
            raise ValueError("viscous mode needs eta_f > 0")
        self.s_n, self.tau, self.p = s_n, tau, p
        self.mode, self.algorithm = mode, algorithm
        self.h = s_n.h
        self.dm_n = 0.5 * (s_n.d[:-1] + s_n.d[1:])
        self.dp_n = np.diff(s_n.d) / self.h
        self.c_n = p.threshold(s_n.theta) * s_n.c_scale
        self.visc = p.eta_f / tau if mode == "viscous" else 0.0
        self.r_slope = 1.0 / s_n.theta if algorithm == "implicit" else np.zeros_like(s_n.theta)
        self._theta_guess = s_n.theta.copy()
        n = s_n.n_el
        e = np.arange(n)
        # element dofs: u_e, u_e+1, d_e, d_e+1 in global ordering [u..., d...]
        self.edofs = np.stack([e, e + 1, n + 1 + e, n + 2 + e], axis=1)

    def _local(self, lam, dm, dp, theta):
        """Density and its derivatives in (lam, dm, dp, theta)."""
        p = self.p
        v, v_l, v_t, v_ll, v_lt, v_tt = _elastic_uniaxial(lam, theta, p)
        g, dg, ddg = degradation(dm)
        pt, pt_t, pt_tt = thermal_energy(theta, p)
        th_n = self.s_n.theta
        rs = self.r_slope
        r = 1.0 + rs * (theta - th_n)
        Dd = dm - self.dm_n
        mul2 = p.mu * p.l**2
        nonloc = self.c_n * Dd + 0.5 * mul2 * (dp**2 - self.dp_n**2)
        vi = self.visc
        val = (g * v + pt + self.s_n.eta * (theta - th_n) + r * nonloc
               + 0.5 * vi * r**2 * Dd**2)
        grad = np.stack([
            g * v_l,
            dg * v + r * self.c_n + vi * r**2 * Dd,
            r * mul2 * dp,
            g * v_t + pt_t + self.s_n.eta + rs * nonloc + vi * r * rs * Dd**2,
        ], axis=-1)
        H = np.zeros(lam.shape + (4, 4))
        H[:, 0, 0] = g * v_ll
        H[:, 0, 1] = H[:, 1, 0] = dg * v_l
        H[:, 0, 3] = H[:, 3, 0] = g * v_lt
        H[:, 1, 1] = ddg * v + vi * r**2
        H[:, 1, 3] = H[:, 3, 1] = dg * v_t + rs * self.c_n + 2.0 * vi * r * rs * Dd
        H[:, 2, 2] = r * mul2
        H[:, 2, 3] = H[:, 3, 2] = rs * mul2 * dp
        H[:, 3, 3] = g * v_tt + pt_tt + vi * rs**2 * Dd**2
        return val, grad, H

    def kinematics(self, z: np.ndarray):
        n = self.s_n.n_el
        u, d = z[: n + 1], z[n + 1:]
        lam = 1.0 + np.diff(u) / self.h
        if np.any(lam <= 0):
            raise NonPositiveJacobian("stretch <= 0", int(np.argmin(lam)))
        return lam, 0.5 * (d[:-1] + d[1:]), np.diff(d) / self.h

    def solve_theta(self, lam, dm, dp, tol: float = 1e-12, max_iter: int = 30) -> np.ndarray:
        """Local temperature from the stationarity in theta."""
        th = self._theta_guess.copy()
        for _ in range(max_iter):
            _, g, H = self._local(lam, dm, dp, th)
            res = g[:, 3]
            if np.all(np.abs(res) <= tol * (1.0 + np.abs(self.s_n.eta))):
                self._theta_guess = th
                return th
            dth = -res / H[:, 3, 3]
            step = np.ones_like(th)
            while np.any(th + step * dth <= 0):
                step = np.where(th + step * dth <= 0, 0.5 * step, step)
            th = th + step * dth
        raise LocalNewtonDivergence("local temperature iteration did not converge")

    def evaluate(self, z: np.ndarray, order: int = 2):
        """Total potential, gradient and condensed Hessian at ``z = [u, d]``."""
        lam, dm, dp = self.kinematics(z)
        th = self.solve_theta(lam, dm, dp)
        val, g, H = self._local(lam, dm, dp, th)
        h = self.h
        total = float(np.sum(h * val))
        n = self.s_n.n_el
        # B maps element dofs to (lam, dm, dp)
        B = np.zeros((n, 3, 4))
        B[:, 0, 0], B[:, 0, 1] = -1.0 / h, 1.0 / h
        B[:, 1, 2] = B[:, 1, 3] = 0.5
        B[:, 2, 2], B[:, 2, 3] = -1.0 / h, 1.0 / h
        ge = h[:, None] * np.einsum("eki,ek->ei", B, g[:, :3])
        grad = np.zeros(2 * (n + 1))
        np.add.at(grad, self.edofs, ge)
        if order < 2:
            return total, grad
        Hc = H[:, :3, :3] - H[:, :3, 3, None] * H[:, None, 3, :3] / H[:, 3, 3, None, None]
        Ke = h[:, None, None] * np.einsum("eki,ekl,elj->eij", B, Hc, B)
        rows = np.repeat(self.edofs, 4, axis=1).ravel()
        cols = np.tile(self.edofs, (1, 4)).ravel()
        K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(grad.size,) * 2).tocsr()
        return total, grad, K

    def entropy(self, z: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Entropy after the step.

        Implicit: from the state equation.  Semi-explicit: the unscaled
        update driven by the local and nonlocal dissipation at ``T = theta_n``.
        """
        lam, dm, dp = self.kinematics(z)
        if self.algorithm == "implicit":
            _, _, v_t, _, _, _ = _elastic_uniaxial(lam, theta, self.p)
            g, _, _ = degradation(dm)
            return -(g * v_t + thermal_energy(theta, self.p)[1])
        return self.s_n.eta + self.dissipated(z) / self.s_n.theta

    def dissipated(self, z: np.ndarray) -> np.ndarray:
        """Unscaled dissipated work per volume ``beta Dd + phi_grad`` per element."""
        lam, dm, dp = self.kinematics(z)
        Dd = dm - self.dm_n
        beta = self.c_n + self.visc * Dd
        return beta * Dd + 0.5 * self.p.mu * self.p.l**2 * (dp**2 - self.dp_n**2)


def _conduction_entropy(s_n: BarState, tau: float, p: DamageParams) -> np.ndarray:
    """Explicit conductive entropy increment with ``T = theta_n`` (adiabatic ends)."""
    th, h = s_n.theta, s_n.h
    dm = 0.5 * (s_n.d[:-1] + s_n.d[1:])
    kc = (1.0 - dm) ** 2 * p.k_b / s_n.stretch() ** 2
    kf = 2.0 * kc[:-1] * kc[1:] / np.maximum(kc[:-1] + kc[1:], 1e-300)
    hf = 0.5 * (h[:-1] + h[1:])
    q = kf * np.diff(th) / hf
    div = np.zeros_like(th)
    div[:-1] += q
    div[1:] -= q
    return tau * div / (h * th)


@dataclass
class BarStepInfo:
    newton_iterations: int = 0
    reaction: float = 0.0
    kkt: dict = field(default_factory=dict)


def _shifted_tangent(K, g, free):
    """Tangent restricted to ``free`` plus the smallest diagonal shift
    (from a geometric ladder) that yields a descent direction."""
    Kf = K[free][:, free]
    gf = g[free]
    gn = np.linalg.norm(gf)
    shift = 0.0
    diag_scale = float(np.abs(Kf.diagonal()).max())
    for _ in range(40):
        try:
            dzf = factor_solve(Kf + shift * sp.identity(Kf.shape[0]), -gf)
        except SingularMatrix:
            dzf = None
        if dzf is not None and gf @ dzf < -1e-12 * gn * np.linalg.norm(dzf):
            return shift
        shift = max(10.0 * shift, 1e-8 * diag_scale)
    raise NewtonDivergence("no descent direction found")


def _box_qp_step(K, g, z, lower, upper, free0, max_iter: int = 30) -> np.ndarray:
    """Primal-dual active-set solution of the box-constrained Newton model

        min 1/2 dz K dz + g dz   s.t.  lower <= z + dz <= upper

    over the unknowns flagged in ``free0``.  Many bounds can be released or
    engaged in a single pass, so a spreading process zone is captured by
    one outer iteration.
    """
    lo_gap, up_gap = lower - z, upper - z
    # start from the unconstrained model: bounds are then engaged in bulk
    at_lo = np.zeros(z.size, bool)
    at_up = np.zeros(z.size, bool)
    dz = np.zeros_like(z)
    for _ in range(max_iter):
        held = at_lo | at_up
        free = free0 & ~held
        dz[:] = 0.0
        dz[at_lo] = lo_gap[at_lo]
        dz[at_up] = up_gap[at_up]
        rhs = -(g + K @ dz)[free]
        dz[free] = factor_solve(K[free][:, free], rhs)
        mult = K @ dz + g
        new_lo = free0 & np.where(at_lo, mult > 0.0, z + dz < lower)
        new_up = free0 & np.where(at_up, mult < 0.0, z + dz > upper)
        if np.array_equal(new_lo, at_lo) and np.array_equal(new_up, at_up):
            return dz
        at_lo, at_up = new_lo, new_up
    raise ActiveSetCycling("box-constrained Newton model did not settle")


def _projected_newton(inc: BarIncrement, z: np.ndarray, fixed: np.ndarray, lower: np.ndarray,
                      upper: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, int]:
    """Minimize the step potential subject to ``lower <= z <= upper``.

    Each iteration solves the box-constrained quadratic model with a
    primal-dual active set; the tangent is shifted where it is indefinite,
    and the direction of most negative curvature is tried as well.  Trial
    points are projected onto the box and accepted by an Armijo test on
    the potential.  Returns the minimizer and the iteration count.
    """
    val, g, K = inc.evaluate(z)
    bounded = np.isfinite(lower) | np.isfinite(upper)
    scale = None
    for it in range(max_iter):
        held = ((z - lower <= 1e-12) & (g > 0.0)) | ((upper - z <= 1e-12) & (g < 0.0))
        free = ~fixed & ~held
        gn = np.linalg.norm(g[free])
        if scale is None:
            scale = 1.0 + gn
        floor = 128.0 * np.finfo(float).eps * np.sqrt(max(free.sum(), 1)) * np.abs(g).max()
        if gn <= max(tol * scale, floor):
            return z, it
        shift = _shifted_tangent(K, g, free)
        Ks = (K + shift * sp.identity(K.shape[0])).tocsr() if shift > 0 else K
        try:
            dz_qp = _box_qp_step(Ks, g, z, lower, upper, ~fixed)
        except ActiveSetCycling:
            # fall back to a Newton step with the currently held bounds frozen
            dz_qp = np.zeros_like(z)
            dz_qp[free] = factor_solve(Ks[free][:, free], -g[free])
        candidates = [(dz_qp, 0.0)]
        n_free = int((~fixed).sum())
        if shift > 0.0 and n_free <= 4000:
            lam_w, vec = np.linalg.eigh(K[~fixed][:, ~fixed].toarray())
            v = np.zeros_like(z)
            v[~fixed] = vec[:, 0]
            if g @ v > 0:
                v = -v
            candidates.append((v, float(lam_w[0])))
        best = None
        for dz, curv in candidates:
            step = 1.0
            for _ in range(50):
                zt = z + step * dz
                zt[bounded] = np.clip(zt[bounded], lower[bounded], upper[bounded])
                try:
                    vt, gt, Kt = inc.evaluate(zt)
                except (NonPositiveJacobian, NonPositiveTemperature, LocalNewtonDivergence):
                    step *= 0.5
                    continue
                lin = float(g @ (zt - z))
                if vt <= val + 1e-4 * min(lin + 0.5 * step**2 * min(curv, 0.0), 0.0):
                    break
                # potential differences below round-off: judge by the residual
                if abs(vt - val) <= 1e-13 * abs(val) and np.linalg.norm(gt[free]) < gn:
                    break
                step *= 0.5
            else:
                continue
            if best is None or vt < best[0]:
                best = (vt, zt, gt, Kt)
        if best is None:
            raise NewtonDivergence(f"line search failed at residual {gn:.3e}")
        val, z, g, K = best
    raise NewtonDivergence(f"residual {gn:.3e} after {max_iter} iterations")


def step_damage_bar(s_n: BarState, u_end: float, tau: float, p: DamageParams,
                    mode: str = "kkt", algorithm: str = "implicit", conduction: bool = False,
                    grips: bool = True, tol: float = 1e-10, max_iter: int = 60):
    """Advance the bar by one step to the prescribed end displacement.

    With ``grips`` the damage is held at zero in both end nodes, which
    keeps the localization away from the loaded ends; otherwise the
    natural condition ``d' = 0`` applies there.

    Returns
    -------
    BarState, BarStepInfo

    Raises
    ------
    NewtonDivergence, ActiveSetCycling
    """
    if conduction and algorithm != "semi-explicit":
        raise ValueError("conduction is only available with the semi-explicit algorithm")
    inc = BarIncrement(s_n, tau, p, mode, algorithm)
    nd = s_n.x.size
    L = s_n.x[-1] - s_n.x[0]
    du_end = u_end - s_n.u[-1]
    # affine displacement predictor
    z = np.concatenate([s_n.u + du_end * (s_n.x - s_n.x[0]) / L, s_n.d])
    fixed = np.zeros(2 * nd, bool)
    fixed[[0, nd - 1]] = True
    if grips:
        fixed[[nd, 2 * nd - 1]] = True
    lower = np.concatenate([np.full(nd, -np.inf), s_n.d])
    upper = np.concatenate([np.full(nd, np.inf), np.ones(nd)])
    z, its = _projected_newton(inc, z, fixed, lower, upper, tol, max_iter)
    info = BarStepInfo(newton_iterations=its)
    lam, dm, dp = inc.kinematics(z)
    theta = inc.solve_theta(lam, dm, dp)
    eta = inc.entropy(z, theta)
    if conduction:
        eta = eta + _conduction_entropy(s_n, tau, p)
    s = BarState(s_n.x, z[:nd].copy(), z[nd:].copy(), eta, theta, s_n.c_scale, s_n.t + tau)
    _, g = inc.evaluate(z, order=1)
    info.reaction = float(g[nd - 1])
    info.kkt = kkt_residuals(z[nd:], s_n.d, g[nd:], ~fixed[nd:])
    return s, info


def kkt_residuals(d: np.ndarray, d_n: np.ndarray, grad_d: np.ndarray,
                  free: np.ndarray | None = None) -> dict:
    """Discrete complementarity data at the nodes.

    ``grad_d`` is the gradient of the assembled potential with respect to
    nodal damage, i.e. the weak form of ``beta_e + c - mu l^2 Lap d``.
    Nodes outside ``free`` (prescribed damage) carry reactions and are
    skipped, as are nodes resting on the upper bound ``d = 1``.
    """
    free = np.ones(d.size, bool) if free is None else np.asarray(free, bool)
    dd = (d - d_n)[free]
    g = grad_d[free]
    below = d[free] < 1.0
    return {"bound": float(max(0.0, -dd.min(initial=0.0))),
            "dual": float(max(0.0, -g[below].min(initial=0.0))),
            "complementarity": float(np.max(np.abs(dd * np.where(below, g, 0.0)), initial=0.0))}


def nodal_driving_force(s: BarState, s_n: BarState, tau: float, p: DamageParams,
                        mode: str, algorithm: str) -> np.ndarray:
    """Gradient of the step potential w.r.t. nodal damage at a converged state."""
    inc = BarIncrement(s_n, tau, p, mode, algorithm)
    z = np.concatenate([s.u, s.d])
    return inc.evaluate(z, order=1)[1][s.x.size:]


def element_beta_e(s: BarState, p: DamageParams) -> np.ndarray:
    """Local driving force ``d psi / d d`` per element (non-positive)."""
    dm = 0.5 * (s.d[:-1] + s.d[1:])
    v = _elastic_uniaxial(s.stretch(), s.theta, p)[0]
    return degradation(dm)[1] * v


@dataclass
class BarHistory:
    states: list
    reactions: list
    infos: list

    def end_displacements(self) -> np.ndarray:
        return np.array([s.u[-1] for s in self.states])


def run_damage_bar(p: DamageParams, length: float = 0.25, n_el: int = 200, u_end: float = 0.1,
                   steps: int = 100, t_end: float = 1.0, mode: str = "kkt",
                   algorithm: str = "implicit", imperfection: float = 0.05,
                   conduction: bool = False, grips: bool = True, min_tau_fraction: float = 1.0 / 64,
                   callback=None) -> BarHistory:
    """Monotone displacement ramp with step halving on failure."""
    s = make_bar(length, n_el, p, imperfection)
    tau0 = t_end / steps
    hist = BarHistory([s], [0.0], [])
    t = 0.0
    tau = tau0
    while t < t_end - 1e-12 * t_end:
        tau = min(tau, t_end - t)
        try:
            s_new, info = step_damage_bar(s, u_end * (t + tau) / t_end, tau, p, mode,
                                          algorithm, conduction, grips)
        except (NewtonDivergence, ActiveSetCycling, NonPositiveTemperature,
                NonPositiveJacobian):
            tau *= 0.5
            if tau < min_tau_fraction * tau0:
                raise StepSizeFloor(f"step size fell below {tau:.3e} at t = {t:.6g}") from None
            continue
        if callback is not None:
            callback(s, s_new, tau, info)
        s, t = s_new, t + tau
        hist.states.append(s)
        hist.reactions.append(info.reaction)
        hist.infos.append(info)
        tau = min(tau0, 2.0 * tau)
    return hist
