"""
Small derivative-free solvers used by the estimator: a Nelder-Mead simplex
minimiser and a bracketing bisection root finder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    nit: int
    nfev: int
    converged: bool


def nelder_mead(fun: Callable[[np.ndarray], float], x0: Sequence[float], step: Sequence[float] | float = 0.05,
                xatol: float = 1e-8, fatol: float = 0.0, maxiter: int = 500,
                alpha: float = 1.0, gamma: float = 2.0, rho: float = 0.5,
                shrink: float = 0.5) -> SimplexResult:
    """
    Minimise ``fun`` with the Nelder-Mead simplex method.

    Parameters
    ----------
    fun : callable
        Objective; may return ``inf`` for infeasible points.
    x0 : array_like
        Starting vertex. The other vertices are ``x0 + step_i e_i``.
    step : float or array_like
        Initial edge lengths per coordinate.
    xatol : float
        Stop once every vertex is within this distance of the best one.
    fatol : float
        Also stop once the spread of objective values falls below this
        (disabled at 0).
    maxiter : int
        Iteration cap; hitting it marks the result as not converged.
    alpha, gamma, rho, shrink : float
        Reflection, expansion, contraction and shrink coefficients.

    Returns
    -------
    SimplexResult
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    steps = np.broadcast_to(np.asarray(step, dtype=float), (n,))
    simplex = np.vstack([x0] + [x0 + steps[i] * np.eye(n)[i] for i in range(n)])
    fvals = np.array([fun(v) for v in simplex], dtype=float)
    nfev = n + 1
    nit = 0
    converged = False
    while True:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        diameter = np.max(np.linalg.norm(simplex[1:] - simplex[0], axis=1))
        spread = fvals[-1] - fvals[0] if np.all(np.isfinite(fvals)) else math.inf
        if diameter < xatol or (fatol > 0 and spread < fatol):
            converged = True
            break
        if nit >= maxiter:
            break
        nit += 1
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + alpha * (centroid - worst)
        fr = fun(xr)
        nfev += 1
        if fr < fvals[0]:
            xe = centroid + gamma * (xr - centroid)
            fe = fun(xe)
            nfev += 1
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-1]:
            # outside contraction
            xc = centroid + rho * (xr - centroid)
            fc = fun(xc)
            nfev += 1
            if fc <= fr:
                simplex[-1], fvals[-1] = xc, fc
                continue
        else:
            xc = centroid + rho * (worst - centroid)
            fc = fun(xc)
            nfev += 1
            if fc < fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
                continue
        simplex[1:] = simplex[0] + shrink * (simplex[1:] - simplex[0])
        fvals[1:] = [fun(v) for v in simplex[1:]]
        nfev += n
    return SimplexResult(simplex[0].copy(), float(fvals[0]), nit, nfev, converged)


class NoBracketError(ValueError):
    """The function does not change sign on the supplied interval."""


def bisect(fun: Callable[[float], float], lo: float, hi: float, xtol: float = 1e-10,
           maxiter: int = 200) -> float:
    """
    Root of ``fun`` on ``[lo, hi]`` by bisection.

    Requires a sign change between the endpoints and stops when the bracket
    is narrower than ``xtol``. Returns the bracket midpoint.
    """
    flo, fhi = fun(lo), fun(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise NoBracketError(f"no sign change on [{lo}, {hi}]")
    for _ in range(maxiter):
        if hi - lo <= xtol:
            break
        mid = 0.5 * (lo + hi)
        fmid = fun(mid)
        if fmid == 0:
            return mid
        if np.sign(fmid) == np.sign(flo):
            lo, flo = mid, fmid
        else:
            hi, fhi = mid, fmid
    return 0.5 * (lo + hi)
