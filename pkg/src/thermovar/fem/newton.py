"""Newton solution of one load increment with prescribed values."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import (LocalNewtonDivergence, NewtonDivergence, NonPositiveJacobian,
                      NonPositiveTemperature)
from .solver import factor_solve


@dataclass
class NewtonInfo:
    iterations: int
    residual_norms: list
    evaluation: object


def solve_increment(evaluate, U0: np.ndarray, fixed: np.ndarray, values: np.ndarray,
                    tol: float = 1e-9, max_iter: int = 25, max_halvings: int = 4) -> tuple:
    """Drive the free part of the residual to zero.

    Parameters
    ----------
    evaluate : callable
        ``evaluate(U, order)`` returning an object with ``residual`` and
        ``tangent`` attributes.
    U0 : ndarray
        Starting guess; prescribed entries are overwritten by ``values``.
    fixed : ndarray of int
        Prescribed dofs.
    tol : float
        Convergence when ``|r_free| <= tol (1 + |r_free(U0)|)``.

    Returns
    -------
    U : ndarray
    info : NewtonInfo
        ``info.evaluation`` is the evaluation at the converged state.

    Notes
    -----
    The step length is backtracked on the residual norm; after
    ``max_halvings`` unsuccessful trials the trial with the smallest
    residual is taken, so that saddle systems are not blocked by a
    temporary increase of the norm.
    """
    U = np.array(U0, dtype=float)
    U[fixed] = values
    free = np.ones(U.size, bool)
    free[fixed] = False
    ev = evaluate(U, 2)
    rn = float(np.linalg.norm(ev.residual[free]))
    r0 = rn
    norms = [rn]
    for it in range(max_iter + 1):
        floor = 1e3 * np.finfo(float).eps * np.sqrt(free.sum()) * max(np.abs(ev.residual).max(), 1.0)
        if rn <= tol * (1.0 + r0) or rn <= floor:
            return U, NewtonInfo(it, norms, ev)
        if it == max_iter:
            break
        K = ev.tangent[free][:, free]
        dx = factor_solve(K, -ev.residual[free])
        if not np.all(np.isfinite(dx)):
            raise NewtonDivergence("non-finite Newton step")
        step = 1.0
        best = None
        for _ in range(max_halvings + 1):
            Ut = U.copy()
            Ut[free] += step * dx
            try:
                evt = evaluate(Ut, 2)
            except (NonPositiveJacobian, NonPositiveTemperature, LocalNewtonDivergence):
                # inadmissible trial state, shorten the step
                step *= 0.5
                continue
            rt = float(np.linalg.norm(evt.residual[free]))
            if best is None or rt < best[0]:
                best = (rt, Ut, evt)
            if rt < rn:
                break
            step *= 0.5
        if best is None:
            raise NewtonDivergence("no admissible trial step")
        rn, U, ev = best
        norms.append(rn)
    raise NewtonDivergence(f"no convergence in {max_iter} iterations, |r| = {rn:.3e}")
