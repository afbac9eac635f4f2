"""Plane-strain tension of a strip with a weakened centre (shear banding).

A quarter of the strip ``(0, 2 W) x (0, 2 H)`` is modelled with symmetry
conditions on ``x = 0`` and ``y = 0``; the top edge is pulled vertically
and is free to slide laterally.  The element at the centre carries a
reduced yield stress which triggers a pair of crossing shear bands.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (LocalNewtonDivergence, NewtonDivergence, NonPositiveJacobian,
                     NonPositiveTemperature, SimulationError, SingularMatrix, StepSizeFloor)
from .fem.assembly import QuadProblem, l2_project
from .fem.mesh import Mesh, rectangle
from .fem.newton import solve_increment
from .plasticity import PlastHistory, PlastParams, commit, plast_density

FIELDS = ("ux", "uy", "alpha", "beta")
LOCAL = (("F",), ("value", "alpha"), ("grad", "alpha"), ("value", "beta"))


class GradientPlasticityFE:
    """Coupled displacement / hardening / dual-force problem on a quad mesh.

    Parameters
    ----------
    mesh : Mesh
    p : PlastParams
    y_scale : ndarray (ne,), optional
        Element-wise factor on the yield stress.
    eas : bool
        Enhanced deformation-gradient modes.
    """

    def __init__(self, mesh: Mesh, p: PlastParams, y_scale=None, eas: bool = False):
        self.mesh = mesh
        self.p = p
        self.problem = QuadProblem(mesh, FIELDS, LOCAL, eas=eas)
        ne, nq = self.problem.wdet.shape
        ys = np.ones(ne) if y_scale is None else np.asarray(y_scale, float)
        self.hist = PlastHistory.virgin((ne, nq), p, np.repeat(ys[:, None], nq, axis=1))
        self.U = np.zeros(self.problem.n_dof)

    def density(self, tau: float):
        p, hist = self.p, self.hist

        def dens(g, order):
            F = g[..., :4].reshape(g.shape[:-1] + (2, 2))
            return plast_density(F, g[..., 4], g[..., 5:7], g[..., 7], hist, tau, p, order)

        return dens

    def evaluator(self, tau: float):
        dens = self.density(tau)
        return lambda U, order: self.problem.evaluate(U, dens, order)

    def step(self, fixed, values, tau: float, tol: float = 1e-9, max_iter: int = 25,
             guess=None):
        """Solve one increment and commit the history; returns the Newton info."""
        U0 = self.U if guess is None else guess
        U, info = solve_increment(self.evaluator(tau), U0, fixed, values, tol, max_iter)
        # alpha at the points does not depend on the enhanced modes
        g = self.problem.local_variables(U)
        self.hist = commit(info.evaluation.aux, g[..., 4], self.hist, tau, self.p)
        self.U = U
        return info

    def nodal(self, field: str) -> np.ndarray:
        return self.problem.nodal(self.U, field)

    def element_mean(self, q: np.ndarray) -> np.ndarray:
        w = self.problem.wdet
        return np.sum(w * q, axis=1) / np.sum(w, axis=1)


@dataclass
class ShearBandResult:
    """Load history and final fields of a strip run."""

    times: np.ndarray
    displacement: np.ndarray
    load: np.ndarray
    model: GradientPlasticityFE
    alpha_max: np.ndarray
    theta_max: np.ndarray
    newton_iterations: list = field(default_factory=list)
    dissipation_min: float = 0.0
    wall_time: float = 0.0
    invariants: dict = field(default_factory=dict)

    @property
    def peak_load(self) -> float:
        return float(self.load.max())

    def element_alpha(self) -> np.ndarray:
        """Element averages of the accumulated local plastic strain."""
        return self.model.element_mean(self.model.hist.alpha_loc)

    def element_temperature(self) -> np.ndarray:
        return self.model.element_mean(self.model.hist.theta)

    def band_width(self, fraction: float = 0.5, across: str = "normal") -> float:
        """Band width in elements of the element-averaged plastic strain."""
        return band_width(self.element_alpha(), self.model.mesh.shape, fraction, across)


def band_width(values: np.ndarray, shape, fraction: float = 0.5, across: str = "normal") -> float:
    """Median number of elements above ``fraction * max`` per grid line.

    With ``across="normal"`` the lines are the element anti-diagonals,
    i.e. the direction normal to a band rising at 45 degrees from the
    origin; ``across="row"`` counts along horizontal element rows.  Lines
    that miss the band are ignored.
    """
    nx, ny = shape
    grid = np.asarray(values).reshape(ny, nx)
    mask = grid > fraction * grid.max()
    if across == "row":
        counts = mask.sum(axis=1)
    elif across == "normal":
        i, j = np.indices(grid.shape)
        counts = np.bincount((i + j).ravel(), mask.ravel().astype(int))
    else:
        raise ValueError("across must be 'normal' or 'row'")
    counts = counts[counts > 0]
    return float(np.median(counts)) if counts.size else 0.0


def strip_model(nx: int, ny: int, p: PlastParams, half_width: float = 25.0,
                half_height: float = 50.0, weakening: float = 0.03,
                eas: bool = False) -> tuple[GradientPlasticityFE, np.ndarray, np.ndarray]:
    """Quarter model, its prescribed dofs and the top-edge displacement dofs."""
    mesh = rectangle(nx, ny, half_width, half_height)
    ys = np.ones(mesh.n_elements)
    ys[0] = 1.0 - weakening  # element at the strip centre
    model = GradientPlasticityFE(mesh, p, ys, eas)
    pr = model.problem
    s = mesh.node_sets
    fixed = np.concatenate([pr.dof(s["left"], "ux"), pr.dof(s["bottom"], "uy"),
                            pr.dof(s["top"], "uy")])
    top = pr.dof(s["top"], "uy")
    return model, fixed, top


def run_shear_band(p: PlastParams, nx: int = 10, ny: int = 20, u_end: float = 3.0,
                   steps: int = 200, t_end: float = 1.0, weakening: float = 0.03,
                   eas: bool = True, min_tau_fraction: float = 1.0 / 16.0,
                   tol: float = 1e-9, callback=None) -> ShearBandResult:
    """Pull the top edge to ``u_end`` at constant rate.

    ``load`` is the vertical force on the top edge of the quarter (unit
    thickness).  Steps that fail are retried with halved time steps down
    to ``min_tau_fraction`` of the nominal step.
    """
    t0 = time.perf_counter()
    model, fixed, top = strip_model(nx, ny, p, weakening=weakening, eas=eas)
    nfix = fixed.size - top.size
    tau0 = t_end / steps
    t = 0.0
    times, disp, load, amax, tmax, its = [0.0], [0.0], [0.0], [0.0], [p.theta0], []
    dmin = 0.0
    inv = {"trace_eps_p": 0.0, "theta_min": np.inf, "asymmetry": 0.0, "dissipation_min": 0.0}
    k = 0
    pr = model.problem
    # first guess: homogeneous vertical stretch
    rate = np.zeros(pr.n_dof)
    rate[pr.dof(np.arange(pr.mesh.n_nodes), "uy")] = u_end / t_end * pr.mesh.nodes[:, 1] / pr.mesh.nodes[:, 1].max()
    while t < t_end * (1.0 - 1e-12):
        tau = min(tau0, t_end - t)
        while True:
            u = u_end * (t + tau) / t_end
            vals = np.concatenate([np.zeros(nfix), np.full(top.size, u)])
            saved = (model.U.copy(), model.hist)
            try:
                info = model.step(fixed, vals, tau, tol, guess=model.U + tau * rate)
                break
            except (NewtonDivergence, LocalNewtonDivergence, NonPositiveJacobian,
                    NonPositiveTemperature, SingularMatrix) as exc:
                model.U, model.hist = saved
                tau *= 0.5
                if tau < min_tau_fraction * tau0:
                    raise SimulationError(k, StepSizeFloor(f"step size floor after {exc}")) from exc
        rate = (model.U - saved[0]) / tau
        t += tau
        k += 1
        r = info.evaluation.residual
        times.append(t)
        disp.append(u)
        load.append(float(r[top].sum()))
        amax.append(float(model.hist.alpha_loc.max()))
        tmax.append(float(model.hist.theta.max()))
        its.append(info.iterations)
        dmin = min(dmin, float(model.hist.dissipation.min()))
        h = model.hist
        inv["trace_eps_p"] = max(inv["trace_eps_p"], float(np.abs(np.trace(h.eps_p, axis1=-2, axis2=-1)).max()))
        inv["theta_min"] = min(inv["theta_min"], float(h.theta.min()))
        inv["asymmetry"] = max(inv["asymmetry"], info.evaluation.asymmetry)
        inv["dissipation_min"] = dmin
        if callback is not None:
            callback(k, t, model)
    return ShearBandResult(np.array(times), np.array(disp), np.array(load), model,
                           np.array(amax), np.array(tmax), its, dmin, time.perf_counter() - t0, inv)


def compare_curves(ref: ShearBandResult, other: ShearBandResult) -> dict:
    """Relative peak-load difference and largest post-peak pointwise difference.

    ``other`` is interpolated onto the displacements of ``ref``; the
    post-peak range starts at the peak of ``ref``.
    """
    f = np.interp(ref.displacement, other.displacement, other.load)
    ip = int(np.argmax(ref.load))
    post = np.abs(f[ip:] - ref.load[ip:]) / np.abs(ref.load[ip:])
    return {"peak": abs(other.peak_load - ref.peak_load) / ref.peak_load,
            "post_peak_max": float(post.max())}


def nodal_fields(model: GradientPlasticityFE) -> dict:
    """Point data for output: displacement, alpha, beta, projected temperature."""
    pr = model.problem
    return {"displacement": np.column_stack([model.nodal("ux"), model.nodal("uy")]),
            "alpha": model.nodal("alpha"), "beta": model.nodal("beta"),
            "temperature": l2_project(pr, model.hist.theta),
            "plastic_strain": l2_project(pr, model.hist.alpha_loc)}
