"""Vectorized assembly of incremental potentials on Q1 meshes.

A problem is defined by nodal fields and by a list of *local variables*
formed at each quadrature point from the element unknowns, e.g. the
in-plane deformation gradient, a field value or a field gradient.  A
density callback maps the batch of local variables to the density, its
gradient and Hessian; assembly pulls these back to global residual and
stiffness.  Optionally the deformation gradient receives four enhanced
modes per element, condensed statically.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import LocalNewtonDivergence, ThermovarError
from .mesh import Mesh
from .quadrature import gauss_quad, q4_geometry, q4_shape


@dataclass
class Evaluation:
    """Result of :meth:`QuadProblem.evaluate`."""

    value: float
    residual: np.ndarray
    tangent: sp.csr_matrix | None
    aux: object
    asymmetry: float = 0.0  # relative element-matrix asymmetry before symmetrization


class QuadProblem:
    """Nodal fields on a quad4 mesh coupled through a local density.

    Parameters
    ----------
    mesh : Mesh
    fields : sequence of str
        Nodal field names; a displacement needs ``"ux"`` and ``"uy"``.
    local : sequence of tuple
        Local variable spec, each ``("F",)`` (4 entries, row-major
        ``I + grad u``), ``("value", name)`` or ``("grad", name)`` (2
        entries).
    eas : bool
        Add four enhanced modes to the deformation gradient.
    n_gauss : int
        Gauss points per direction.
    """

    def __init__(self, mesh: Mesh, fields, local, eas: bool = False, n_gauss: int = 2):
        if mesh.kind != "quad4":
            raise ValueError("QuadProblem needs a quad4 mesh")
        self.mesh = mesh
        self.fields = list(fields)
        self.nf = len(self.fields)
        self.n_dof = mesh.n_nodes * self.nf
        xi, w = gauss_quad(n_gauss)
        self.xi = xi
        N, dN_ref = q4_shape(xi)
        X = mesh.nodes[mesh.elements]
        detJ, dN, _ = q4_geometry(X, dN_ref)
        self.N = N
        self.dN = dN
        self.wdet = detJ * w[None, :]
        ne, nq = detJ.shape
        ned = 4 * self.nf
        rows = []
        g0 = []
        for spec in local:
            if spec[0] == "F":
                ix, iy = self.fields.index("ux"), self.fields.index("uy")
                for i, fi in enumerate((ix, iy)):
                    for j in range(2):
                        b = np.zeros((ne, nq, ned))
                        b[:, :, fi::self.nf] = dN[:, :, :, j]
                        rows.append(b)
                        g0.append(1.0 if i == j else 0.0)
            elif spec[0] == "value":
                fi = self.fields.index(spec[1])
                b = np.zeros((ne, nq, ned))
                b[:, :, fi::self.nf] = N[None, :, :]
                rows.append(b)
                g0.append(0.0)
            elif spec[0] == "grad":
                fi = self.fields.index(spec[1])
                for j in range(2):
                    b = np.zeros((ne, nq, ned))
                    b[:, :, fi::self.nf] = dN[:, :, :, j]
                    rows.append(b)
                    g0.append(0.0)
            else:
                raise ValueError(f"unknown local variable {spec!r}")
        self.B = np.stack(rows, axis=2)  # (ne, nq, nloc, ned)
        self.g0 = np.array(g0)
        self.n_loc = self.g0.size
        self.edofs = (mesh.elements[:, :, None] * self.nf + np.arange(self.nf)).reshape(ne, ned)
        self._rows = np.repeat(self.edofs, ned, axis=1).ravel()
        self._cols = np.tile(self.edofs, (1, ned)).ravel()
        self.eas = eas
        if eas:
            if ("F",) not in [tuple(s) for s in local]:
                raise ValueError("enhanced modes need the deformation gradient")
            self.G = self._eas_modes(X, dN_ref, detJ)

    def _eas_modes(self, X, dN_ref, detJ):
        """Four incompatible gradient modes mapped with the centroid Jacobian."""
        _, dN0 = q4_shape(np.zeros((1, 2)))
        J0 = np.einsum("eai,qaj->eqij", X, dN0)[:, 0]
        j0 = np.linalg.det(J0)
        J0inv = np.linalg.inv(J0)
        ne, nq = detJ.shape
        G = np.zeros((ne, nq, self.n_loc, 4))
        c = j0[:, None] / detJ
        for m, (i, r, xi_col) in enumerate(((0, 0, 0), (0, 1, 1), (1, 0, 0), (1, 1, 1))):
            par = self.xi[:, xi_col]
            for j in range(2):
                G[:, :, 2 * i + j, m] = c * par[None, :] * J0inv[:, None, r, j]
        return G

    def dof(self, node, field: str):
        return np.asarray(node) * self.nf + self.fields.index(field)

    def nodal(self, U: np.ndarray, field: str) -> np.ndarray:
        return U[self.fields.index(field)::self.nf]

    def local_variables(self, U: np.ndarray, enh: np.ndarray | None = None) -> np.ndarray:
        ue = U[self.edofs]
        g = self.g0 + (self.B @ ue[:, None, :, None])[..., 0]
        if enh is not None:
            g = g + (self.G @ enh[:, None, :, None])[..., 0]
        return g

    def evaluate(self, U: np.ndarray, density, order: int = 2, eas_tol: float = 1e-12,
                 eas_max_iter: int = 25) -> Evaluation:
        """Total potential, residual and (order 2) sparse tangent at ``U``.

        ``density(g, order)`` receives local variables ``(ne, nq, nloc)``
        and returns ``(val, grad, hess, aux)`` (``hess`` omitted at order
        1).  With enhanced modes these are first brought to stationarity
        element by element, so the returned quantities belong to the
        condensed potential.
        """
        if self.eas:
            enh, out = self._solve_enhanced(U, density, eas_tol, eas_max_iter)
        else:
            out = density(self.local_variables(U), 2 if order >= 2 else 1)
        val, grad, aux = out[0], out[1], out[-1]
        total = float(np.sum(self.wdet * val))
        re = (self._wBt @ grad[..., None])[..., 0].sum(axis=1)
        r = np.bincount(self.edofs.ravel(), re.ravel(), self.n_dof)
        if order < 2:
            return Evaluation(total, r, None, aux)
        H = out[2]
        Ke = (self._wBt @ (H @ self.B)).sum(axis=1)
        if self.eas:
            Kua, Kaa = self._eas_blocks(H)
            KaaInvKau = np.linalg.solve(Kaa, np.swapaxes(Kua, 1, 2))
            Ke = Ke - Kua @ KaaInvKau
            self._eas_lin = (U.copy(), enh, KaaInvKau)
        KeT = np.swapaxes(Ke, 1, 2)
        asym = float(np.abs(Ke - KeT).max() / max(np.abs(Ke).max(), np.finfo(float).tiny))
        Ke = 0.5 * (Ke + KeT)
        K = sp.coo_matrix((Ke.ravel(), (self._rows, self._cols)),
                          shape=(self.n_dof, self.n_dof)).tocsr()
        return Evaluation(total, r, K, aux, asym)

    @property
    def _wBt(self):
        if not hasattr(self, "_wBt_cache"):
            self._wBt_cache = np.swapaxes(self.B, -1, -2) * self.wdet[..., None, None]
        return self._wBt_cache

    def _eas_blocks(self, H):
        wGt = np.swapaxes(self.G, -1, -2) * self.wdet[..., None, None]
        HG = H @ self.G
        Kua = (self._wBt @ HG).sum(axis=1)
        Kaa = (wGt @ HG).sum(axis=1)
        return Kua, Kaa

    def _solve_enhanced(self, U, density, tol, max_iter):
        lin = getattr(self, "_eas_lin", None)
        starts = [np.zeros((self.mesh.n_elements, 4))]
        if lin is not None:
            U0, enh0, KaaInvKau = lin
            # linearized prediction from the last tangent evaluation, then the
            # last converged modes as a fallback
            starts = [enh0 - (KaaInvKau @ (U - U0)[self.edofs][..., None])[..., 0], enh0]
        for enh in starts:
            try:
                return self._enhanced_newton(U, enh, density, tol, max_iter)
            except LocalNewtonDivergence:
                continue
        raise LocalNewtonDivergence("enhanced-mode condensation did not converge")

    def _enhanced_newton(self, U, enh, density, tol, max_iter):
        """Element-wise Newton with per-element step halving on the local residual."""
        wGt = np.swapaxes(self.G, -1, -2) * self.wdet[..., None, None]

        def resid(e):
            out = density(self.local_variables(U, e), 2)
            return out, (wGt @ out[1][..., None])[..., 0].sum(axis=1)

        out, ra = resid(enh)
        for _ in range(max_iter):
            # tolerance relative to the size of the integrated local forces
            scale = np.abs(self.wdet[..., None] * out[1][..., :4]).max() + np.finfo(float).tiny
            if np.abs(ra).max() <= tol * scale:
                return enh, out
            Kaa = (wGt @ (out[2] @ self.G)).sum(axis=1)
            da = -np.linalg.solve(Kaa, ra[..., None])[..., 0]
            rn = np.linalg.norm(ra, axis=1)
            step = np.ones(len(enh))
            for _ in range(6):
                trial = enh + step[:, None] * da
                try:
                    out_t, ra_t = resid(trial)
                except ThermovarError:
                    step *= 0.5
                    continue
                worse = np.linalg.norm(ra_t, axis=1) > rn + tol * scale
                if not worse.any():
                    break
                step = np.where(worse, 0.5 * step, step)
            else:
                raise LocalNewtonDivergence("no admissible enhanced-mode step")
            enh, out, ra = trial, out_t, ra_t
        raise LocalNewtonDivergence("enhanced-mode condensation did not converge")

    def enhanced_modes(self, U: np.ndarray, density) -> np.ndarray:
        """Stationary enhanced parameters at ``U``."""
        return self._solve_enhanced(U, density, 1e-12, 25)[0]


def l2_project(problem: QuadProblem, values: np.ndarray) -> np.ndarray:
    """Lumped L2 projection of quadrature values ``(ne, nq)`` to the nodes."""
    num = np.einsum("eq,qa,eq->ea", problem.wdet, problem.N, values)
    den = np.einsum("eq,qa->ea", problem.wdet, problem.N)
    el = problem.mesh.elements.ravel()
    nn = problem.mesh.n_nodes
    return np.bincount(el, num.ravel(), nn) / np.bincount(el, den.ravel(), nn)
