"""One-dimensional Cahn-Hilliard diffusion with temperature.

The species flux ``H`` on cell faces is the primary unknown; the
concentration follows from ``c = c_n - tau * Div H`` and is therefore
conserved to round-off for periodic and no-flux boundaries.

Grid layout (staggered): cells ``i = 0..N-1`` hold ``c, mu, eta, theta``;
faces ``j = 0..N`` hold ``H`` with face ``j`` located at ``x = j dx``
between cells ``j-1`` and ``j``.  Under periodic conditions face ``N`` is
the same face as face ``0``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq

from .errors import ConcentrationOutOfRange, NewtonDivergence, NonPositiveTemperature
from .fem.solver import factor_solve

BCS = ("periodic", "no-flux", "mu")


@dataclass(frozen=True)
class CHParams:
    """Material constants.

    The mobility law is ``M(theta) = M0 exp(-Q (1/theta - 1/theta0))``.
    ``r_source`` is a uniform volumetric heat source.
    """

    A: float = 1.0
    B: float = 3.0
    D: float = 1e-3
    M0: float = 1.0
    Q: float = 0.0
    k: float = 1e-2
    C_heat: float = 1.0
    theta0: float = 293.0
    r_source: float = 0.0

    def __post_init__(self):
        for name in ("A", "B", "D", "M0", "k", "C_heat", "theta0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def mobility(self, theta: np.ndarray) -> np.ndarray:
        return self.M0 * np.exp(-self.Q * (1.0 / theta - 1.0 / self.theta0))


@dataclass(frozen=True)
class CHGridState:
    """Cell and face fields of the one-dimensional grid.

    ``mu_bar`` holds the boundary chemical potentials used by the ``"mu"``
    condition; ``T_bar`` optional boundary temperatures (implicit
    coupling only).
    """

    c: np.ndarray
    dx: float
    bc: str = "periodic"
    H: np.ndarray | None = None
    eta: np.ndarray | None = None
    theta: np.ndarray | None = None
    mu_bar: tuple[float, float] = (0.0, 0.0)
    T_bar: tuple[float, float] | None = None

    def __post_init__(self):
        if self.bc not in BCS:
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        n = self.c.size
        if self.H is None:
            object.__setattr__(self, "H", np.zeros(n + 1))
        if self.eta is None:
            object.__setattr__(self, "eta", np.zeros(n))
        if self.theta is None:
            raise ValueError("cell temperatures are required")

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.dx


def make_grid(c: np.ndarray, length: float, p: CHParams, bc: str = "periodic",
              **kw) -> CHGridState:
    """Grid at rest temperature ``theta0`` with zero entropy."""
    c = np.asarray(c, dtype=float)
    return CHGridState(c=c, dx=length / c.size, bc=bc,
                       theta=np.full(c.size, p.theta0), **kw)


def local_energy(c, p: CHParams):
    """Logarithmic mixing energy with first and second derivatives."""
    c = np.asarray(c, dtype=float)
    if np.any((c <= 0.0) | (c >= 1.0)):
        raise ConcentrationOutOfRange("concentration outside (0, 1)")
    A, B = p.A, p.B
    lc, l1c = np.log(c), np.log1p(-c)
    psi = A * (c * lc + (1 - c) * l1c) + B * c * (1 - c)
    dpsi = A * (lc - l1c) + B * (1 - 2 * c)
    d2psi = A / (c * (1 - c)) - 2 * B
    return psi, dpsi, d2psi


def binodal_points(p: CHParams) -> tuple[float, float]:
    """Coexisting phases of the symmetric mixing energy.

    The energy is symmetric about ``c = 1/2``, so the common tangent is
    horizontal and touches at the nontrivial roots of ``psi'``.
    """
    if p.B <= 2 * p.A:
        return 0.5, 0.5
    f = lambda c: float(local_energy(c, p)[1])
    # psi' -> -inf at 0+, and psi' > 0 just left of the unstable midpoint
    lo = brentq(f, 1e-300, 0.5 - 1e-6, xtol=1e-15)
    return lo, 1.0 - lo


def growth_factor(k: float, c_bar: float, tau: float, dx: float, p: CHParams) -> float:
    """Per-step amplification of a Fourier mode for the linearized update.

    For ``c = c_bar + a cos(k x)`` with small ``a`` the flux update acts on
    the amplitude as ``a_{n+1} = G a_n`` with
    ``G = 1 / (1 + tau m kh^2 (psi''(c_bar) + D kh^2))`` where
    ``kh^2 = 4 sin^2(k dx/2)/dx^2`` is the symbol of the three-point
    Laplacian and ``m = M0 c_bar (1 - c_bar)``.
    """
    kh2 = 4.0 * np.sin(0.5 * k * dx) ** 2 / dx**2
    m = p.M0 * c_bar * (1 - c_bar)
    d2 = float(local_energy(c_bar, p)[2])
    return 1.0 / (1.0 + tau * m * kh2 * (d2 + p.D * kh2))


# ---------------------------------------------------------------------------
# discrete operators


def laplacian(c: np.ndarray, dx: float, bc: str) -> np.ndarray:
    """Three-point Laplacian with periodic wrap or mirrored ghost cells."""
    if bc == "periodic":
        cl, cr = np.roll(c, 1), np.roll(c, -1)
    else:
        cl = np.concatenate([c[:1], c[:-1]])
        cr = np.concatenate([c[1:], c[-1:]])
    return (cl - 2 * c + cr) / dx**2


def chemical_potential(grid: CHGridState, p: CHParams) -> np.ndarray:
    """Cell chemical potential ``psi_l'(c) - D lap(c)``."""
    return local_energy(grid.c, p)[1] - p.D * laplacian(grid.c, grid.dx, grid.bc)


def _logmean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Logarithmic mean ``(b - a)/(ln b - ln a)``, equal to ``a`` when ``a = b``."""
    r = (b - a) / (b + a)
    small = np.abs(r) < 1e-3
    rs = np.where(small, 0.5, r)
    ratio = np.where(small, 1.0 + r * r / 3 + r**4 / 5, np.arctanh(rs) / rs)
    return 0.5 * (a + b) / ratio


class _Ops:
    """Sparse difference operators for one grid configuration."""

    def __init__(self, n: int, dx: float, bc: str):
        self.n, self.dx, self.bc = n, dx, bc
        nf = n + 1
        rows = np.repeat(np.arange(n), 2)
        cols = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1).ravel()
        vals = np.tile([-1.0, 1.0], n) / dx
        self.div = sp.csr_matrix((vals, (rows, cols)), shape=(n, nf))
        # cells left/right of the faces that carry gradients of cell data
        if bc == "periodic":
            left, right = (np.arange(n) - 1) % n, np.arange(n)
        else:
            left, right = np.arange(n - 1), np.arange(1, n)
        m = left.size
        self.pair_left, self.pair_right = left, right
        self.grad = sp.csr_matrix(
            (np.concatenate([-np.ones(m), np.ones(m)]) / dx,
             (np.concatenate([np.arange(m)] * 2), np.concatenate([left, right]))),
            shape=(m, n))
        if bc == "periodic":
            self.free = np.arange(n)
        elif bc == "no-flux":
            self.free = np.arange(1, n)
        else:
            self.free = np.arange(nf)
        # faces entering the dissipation sum (periodic face N duplicates face 0)
        self.dfaces = np.arange(n) if bc == "periodic" else np.arange(nf)
        w = np.full(self.dfaces.size, dx)
        if bc == "mu":
            w[0] = w[-1] = 0.5 * dx
        self.face_w = w
        fl = self.dfaces - 1
        fr = self.dfaces.copy()
        if bc == "periodic":
            fl %= n
        else:
            fl[0] = 0
            fr[-1] = n - 1
        self.face_left, self.face_right = fl, fr
        # face averaging of cell data over the dissipation faces
        k = self.dfaces.size
        self.avg = sp.csr_matrix(
            (np.full(2 * k, 0.5), (np.concatenate([np.arange(k)] * 2), np.concatenate([fl, fr]))),
            shape=(k, n))
        # expansion of free fluxes to all faces
        er = list(self.free) + ([n] if bc == "periodic" else [])
        ec = list(range(self.free.size)) + ([0] if bc == "periodic" else [])
        self.expand_mat = sp.csr_matrix((np.ones(len(er)), (er, ec)), shape=(nf, self.free.size))
        # dissipation faces restricted to free flux unknowns
        pos = {f: i for i, f in enumerate(self.free)}
        self.d_to_free = np.array([pos.get(f, -1) for f in self.dfaces])

    def expand(self, Hfree: np.ndarray) -> np.ndarray:
        H = np.zeros(self.n + 1)
        H[self.free] = Hfree
        if self.bc == "periodic":
            H[-1] = H[0]
        return H


def ch_energy(grid: CHGridState, p: CHParams) -> float:
    """Isothermal free energy ``sum psi_l dx + sum D/2 |grad c|^2 dx``."""
    ops = _Ops(grid.n, grid.dx, grid.bc)
    g = ops.grad @ grid.c
    return float(np.sum(local_energy(grid.c, p)[0]) * grid.dx + 0.5 * p.D * np.sum(g * g) * grid.dx)


def total_mass(grid: CHGridState) -> float:
    return float(np.sum(grid.c) * grid.dx)


# ---------------------------------------------------------------------------
# incremental potential


class CHIncrement:
    """Incremental potential of one step as a function of the unknowns.

    Unknown vector: free face fluxes, followed by the cell thermal driving
    forces ``T`` when the step is thermally coupled and implicit.  With
    ``T`` present the potential is minimized over fluxes and maximized
    over ``T``; entropy and temperature are eliminated beforehand through
    ``theta = T`` and ``eta = -d psi/d theta``.
    """

    def __init__(self, grid: CHGridState, tau: float, p: CHParams, coupled: bool = False,
                 implicit: bool = True):
        self.grid, self.tau, self.p = grid, float(tau), p
        self.coupled, self.implicit = coupled, implicit
        self.ops = ops = _Ops(grid.n, grid.dx, grid.bc)
        self.theta_n = grid.theta
        cf = ops.avg @ grid.c
        self.mob = p.mobility(ops.avg @ grid.theta) * cf * (1 - cf)
        # conduction links: (left cell, right cell, distance); Dirichlet faces
        # enter through a constant offset on the log-temperature gradient
        dx, n = grid.dx, grid.n
        rows_l, rows_r = list(ops.pair_left), list(ops.pair_right)
        dist = [dx] * len(rows_l)
        theta_f = list(_logmean(grid.theta[ops.pair_left], grid.theta[ops.pair_right]))
        self.g_off = np.zeros(len(rows_l))
        if coupled and implicit and grid.T_bar is not None:
            if grid.bc == "periodic":
                raise ValueError("prescribed temperatures need a bounded domain")
            Tl, Tr = map(float, grid.T_bar)
            th = grid.theta
            # left boundary: g = -(ln T_0 - ln Tl)/(dx/2); right: g = -(ln Tr - ln T_{n-1})/(dx/2)
            self.g_off = np.concatenate([self.g_off, [np.log(Tl) / (0.5 * dx),
                                                      -np.log(Tr) / (0.5 * dx)]])
            self._bd = [(0, -1.0), (n - 1, 1.0)]
            dist += [0.5 * dx, 0.5 * dx]
            theta_f += [float(_logmean(np.array(Tl), np.array(th[0]))),
                        float(_logmean(np.array(Tr), np.array(th[-1])))]
        else:
            self._bd = []
        m = len(rows_l)
        r_idx = np.concatenate([np.arange(m), np.arange(m)])
        c_idx = np.concatenate([rows_r, rows_l])
        v = np.concatenate([-1.0 / np.array(dist[:m]), 1.0 / np.array(dist[:m])])
        extra_r, extra_c, extra_v = [], [], []
        for j, (cell, sgn) in enumerate(self._bd):
            extra_r.append(m + j)
            extra_c.append(cell)
            extra_v.append(sgn / dist[m + j])
        self.Gc = sp.csr_matrix(
            (np.concatenate([v, extra_v]), (np.concatenate([r_idx, extra_r]).astype(int),
                                            np.concatenate([c_idx, extra_c]).astype(int))),
            shape=(m + len(self._bd), n))
        self.cond_w = np.array(dist) * p.k * np.array(theta_f)

    @property
    def n_flux(self) -> int:
        return self.ops.free.size

    @property
    def has_T(self) -> bool:
        return self.coupled and self.implicit

    @property
    def size(self) -> int:
        return self.n_flux + (self.grid.n if self.has_T else 0)

    def initial_guess(self) -> np.ndarray:
        x = np.zeros(self.size)
        if self.has_T:
            x[self.n_flux:] = self.theta_n
        return x

    def concentration(self, x: np.ndarray) -> np.ndarray:
        H = self.ops.expand(x[:self.n_flux])
        return self.grid.c - self.tau * (self.ops.div @ H)

    def _mech(self, x: np.ndarray, order: int):
        """Free energy of c(H) plus the boundary load of the mu condition."""
        ops, p, tau, dx, g = self.ops, self.p, self.tau, self.ops.dx, self.grid
        H = ops.expand(x[:self.n_flux])
        c = g.c - tau * (ops.div @ H)
        psi, dpsi, d2psi = local_energy(c, p)
        gc = ops.grad @ c
        val = float(np.sum(psi) * dx + 0.5 * p.D * np.sum(gc * gc) * dx)
        lin = np.zeros(self.n_flux)
        if g.bc == "mu":
            val += tau * (-g.mu_bar[0] * H[0] + g.mu_bar[1] * H[-1])
            lin[0], lin[-1] = -tau * g.mu_bar[0], tau * g.mu_bar[1]
        if order == 0:
            return val, None, None
        dcdH = -tau * (ops.div @ ops.expand_mat)
        dEdc = dpsi * dx + p.D * dx * (ops.grad.T @ gc)
        grad = dcdH.T @ dEdc + lin
        if order == 1:
            return val, grad, None
        d2 = sp.diags(d2psi * dx) + p.D * dx * (ops.grad.T @ ops.grad)
        return val, grad, dcdH.T @ d2 @ dcdH

    def _thermal(self, Hd: np.ndarray, T: np.ndarray, order: int):
        """Dissipation, thermal and conduction terms as functions of (H, T).

        ``Hd`` are fluxes on the dissipation faces.  Returns the value and,
        for ``order >= 1``, gradients (dH on dissipation faces, dT) and for
        ``order >= 2`` the blocks (HH diagonal, HT, TT).
        """
        ops, p, tau, dx = self.ops, self.p, self.tau, self.ops.dx
        th_n = self.theta_n
        rho = T / th_n
        r = ops.avg @ rho
        w = ops.face_w
        hm = Hd * Hd / self.mob
        val = 0.5 * tau * float(np.sum(w * r * r * hm))
        C, t0 = p.C_heat, p.theta0
        lg = np.log(T / t0)
        val += float(np.sum(C * ((T - t0) - T * lg) + self.grid.eta * (T - th_n)
                            + tau * p.r_source * rho) * dx)
        lam = np.log(T)
        gcond = self.Gc @ lam + self.g_off
        val -= 0.5 * tau * float(np.sum(self.cond_w * gcond * gcond))
        if order == 0:
            return val
        dH = tau * w * r * r * Hd / self.mob
        d_rho = ops.avg.T @ (tau * w * r * hm)
        dlam = -tau * (self.Gc.T @ (self.cond_w * gcond))
        dT = d_rho / th_n + (-C * lg + self.grid.eta + tau * p.r_source / th_n) * dx + dlam / T
        if order == 1:
            return val, dH, dT
        HH = tau * w * r * r / self.mob
        HT = sp.diags(2 * tau * w * r * Hd / self.mob) @ ops.avg @ sp.diags(1.0 / th_n)
        rr = ops.avg.T @ sp.diags(tau * w * hm) @ ops.avg
        Dinv = sp.diags(1.0 / T)
        ll = -tau * (self.Gc.T @ sp.diags(self.cond_w) @ self.Gc)
        TT = (sp.diags(1.0 / th_n) @ rr @ sp.diags(1.0 / th_n) + sp.diags(-C * dx / T)
              + Dinv @ ll @ Dinv - sp.diags(dlam / T**2))
        return val, dH, dT, HH, HT, TT

    def evaluate(self, x: np.ndarray, order: int = 2):
        """Potential value, gradient and Hessian at the unknown vector ``x``."""
        nfl = self.n_flux
        ops = self.ops
        mval, mgrad, mhess = self._mech(x, order)
        H = ops.expand(x[:nfl])
        Hd = H[ops.dfaces]
        if self.has_T:
            T = x[nfl:]
            if np.any(T <= 0):
                raise NonPositiveTemperature("thermal driving force <= 0")
        else:
            T = self.theta_n
        out = self._thermal(Hd, T, order)
        val = mval + (out if order == 0 else out[0])
        if order == 0:
            return val
        # map dissipation-face quantities to free flux unknowns
        sel = ops.d_to_free >= 0
        P = sp.csr_matrix((np.ones(sel.sum()), (ops.d_to_free[sel], np.nonzero(sel)[0])),
                          shape=(nfl, Hd.size))
        gH = mgrad + P @ out[1]
        if self.has_T:
            grad = np.concatenate([gH, out[2]])
        else:
            grad = gH
        if order == 1:
            return val, grad
        KHH = mhess + P @ sp.diags(out[3]) @ P.T
        if not self.has_T:
            return val, grad, sp.csr_matrix(KHH)
        KHT = P @ out[4]
        K = sp.bmat([[KHH, KHT], [KHT.T, out[5]]], format="csr")
        return val, grad, K

    def entropy_update(self, x: np.ndarray) -> np.ndarray:
        """Cell entropy from the T-stationarity condition.

        In the semi-explicit scheme ``T = theta_n`` and the returned value
        is ``eta_n + (tau/theta_n) [dissipation + conduction + source]``.
        """
        ops = self.ops
        H = ops.expand(x[:self.n_flux])
        T = x[self.n_flux:] if self.has_T else self.theta_n
        dT = self._thermal(H[ops.dfaces], T, 1)[2]
        C, t0 = self.p.C_heat, self.p.theta0
        # dT/dx = -C ln(T/theta0) + eta_n + increments; eta = C ln(T/theta0) at T=theta
        # so eta_new = eta_n + increments = dT/dx + C ln(T/theta0)
        return dT / ops.dx + C * np.log(T / t0)


def _newton_ch(inc: CHIncrement, tol: float, max_iter: int) -> np.ndarray:
    """Newton with backtracking; potential decrease for pure flux problems,
    residual decrease for the coupled saddle problem."""
    x = inc.initial_guess()
    val, g, K = inc.evaluate(x)
    g0 = max(np.linalg.norm(g), 1e-300)
    saddle = inc.has_T
    for it in range(max_iter):
        gn = np.linalg.norm(g)
        if gn <= tol * max(1.0, g0) and it > 0 or gn <= 1e-300:
            return x
        dx = factor_solve(K, -g)
        if not saddle and float(g @ dx) >= 0.0:
            # indefinite flux Hessian: the step is too large for the
            # spinodal modes, the caller has to reduce tau
            raise NewtonDivergence("flux Hessian is not positive definite")
        step = 1.0
        for _ in range(60):
            xt = x + step * dx
            try:
                vt, gt, Kt = inc.evaluate(xt)
            except (ConcentrationOutOfRange, NonPositiveTemperature):
                step *= 0.5
                continue
            if saddle:
                if np.linalg.norm(gt) < (1 - 1e-4 * step) * gn or np.linalg.norm(gt) <= tol * max(1.0, g0):
                    break
            elif vt <= val + 1e-4 * step * float(g @ dx) + 1e-15 * abs(val):
                break
            step *= 0.5
        else:
            raise NewtonDivergence("line search failed")
        x, val, g, K = xt, vt, gt, Kt
        if not saddle and np.linalg.norm(step * dx) <= 1e-15 * (1 + np.linalg.norm(x)):
            if np.linalg.norm(g) <= 1e3 * tol * max(1.0, g0):
                return x
    if np.linalg.norm(g) <= tol * max(1.0, g0):
        return x
    raise NewtonDivergence(f"gradient norm {np.linalg.norm(g):.3e} after {max_iter} iterations")


def step_ch(grid: CHGridState, tau: float, p: CHParams, thermal_coupling: bool = False,
            algorithm: str = "implicit", tol: float = 1e-11,
            max_iter: int = 50) -> CHGridState:
    """Advance the grid by one step of size ``tau``.

    Raises
    ------
    ConcentrationOutOfRange
        If no admissible update inside ``(0, 1)`` is found.
    NewtonDivergence
        If the stationarity system is not solved.
    """
    if algorithm not in ("implicit", "semi-explicit"):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    implicit = algorithm == "implicit"
    inc = CHIncrement(grid, tau, p, coupled=thermal_coupling, implicit=implicit)
    x = _newton_ch(inc, tol, max_iter)
    c = inc.concentration(x)
    local_energy(c, p)  # range check
    H = inc.ops.expand(x[:inc.n_flux])
    if not thermal_coupling:
        return replace(grid, c=c, H=H)
    if implicit:
        T = x[inc.n_flux:]
        eta = p.C_heat * np.log(T / p.theta0)
        return replace(grid, c=c, H=H, eta=eta, theta=T.copy())
    theta = p.theta0 * np.exp(grid.eta / p.C_heat)
    eta = inc.entropy_update(x)
    return replace(grid, c=c, H=H, eta=eta, theta=theta)


def run_ch(grid: CHGridState, tau: float, t_end: float, p: CHParams,
           thermal_coupling: bool = False, algorithm: str = "implicit",
           tau_min: float | None = None, callback=None) -> CHGridState:
    """Integrate to ``t_end`` halving the step whenever an update is rejected."""
    from .errors import StepSizeFloor

    t = 0.0
    tau_min = tau_min if tau_min is not None else tau * 2.0**-12
    h = tau
    while t < t_end - 1e-12 * t_end:
        h = min(h, t_end - t)
        try:
            new = step_ch(grid, h, p, thermal_coupling, algorithm)
        except (ConcentrationOutOfRange, NewtonDivergence):
            h *= 0.5
            if h < tau_min:
                raise StepSizeFloor(f"step fell below {tau_min:g} at t = {t:g}")
            continue
        t += h
        grid = new
        if callback is not None:
            callback(t, grid)
        h = min(tau, 2 * h)
    return grid
