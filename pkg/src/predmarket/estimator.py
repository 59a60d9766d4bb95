"""
Censored maximum-likelihood estimation of the market-driven median.

Each vote at price ``q`` reveals only that the voter's belief lies above the
buy threshold (for a buy) or below the sell threshold (for a sell). With
beliefs drawn from a clipped normal ``N(mu, sigma)`` this gives a censored
likelihood in ``(mu, sigma)`` for a fixed risk parameter ``lam``. The risk
parameter is then pinned by an equilibrium condition: at price ``mu`` the
expected buy and sell vote flows must balance, which defines ``Lambda(mu,
sigma)``. The estimate is the fixed point ``lam = Lambda(mu_hat(lam),
sigma_hat(lam))``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.special import log_ndtr

from .market_core import VolumeSnapshot, operational_series
from .optimize import NoBracketError, bisect, nelder_mead
from .utility import LAMBDA_CAP, indifference_belief, theta_minus, theta_plus

# Offset used to evaluate Lambda at mu = 1/2, where the ratio is identically 1.
HALF_OFFSET = 1e-6


@dataclass
class SolverConfig:
    """
    Settings for the inner simplex search and the outer fixed point.

    Attributes
    ----------
    xatol : float
        Simplex diameter tolerance in ``(mu, log sigma)``.
    fatol : float
        Simplex objective-spread tolerance (0 disables it).
    maxiter : int
        Simplex iteration cap.
    lam_bracket : tuple of float
        Search interval for the fixed point, inside ``(-700, 0)``.
    mu0 : float or None
        Starting median; ``None`` uses the volume-weighted mean price.
    sigma0 : float
        Starting dispersion.
    mu_step, log_sigma_step : float
        Initial simplex edges.
    lam_xtol : float
        Bisection tolerance on the fixed point.
    lambda_xtol : float
        Bisection tolerance when solving the equilibrium equation.
    """

    xatol: float = 1e-8
    fatol: float = 0.0
    maxiter: int = 500
    lam_bracket: tuple[float, float] = (-50.0, -1e-6)
    mu0: float | None = None
    sigma0: float = 0.05
    mu_step: float = 0.02
    log_sigma_step: float = 0.5
    lam_xtol: float = 1e-9
    lambda_xtol: float = 1e-10

    def __post_init__(self):
        if self.xatol <= 0 or self.fatol < 0 or self.maxiter <= 0:
            raise ValueError("tolerances and iteration cap must be positive")
        lo, hi = self.lam_bracket
        if not (-LAMBDA_CAP < lo < hi < 0):
            raise ValueError("lambda bracket must lie inside (-700, 0)")
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")


@dataclass
class EstimateRecord:
    """One point of an estimate series."""

    nu: float
    t: int | float
    mu: float
    sigma: float
    lam: float
    loglik: float
    converged: bool
    boundary: bool = False
    message: str = ""

    def as_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


def _volumes(snapshot: VolumeSnapshot):
    return np.asarray(snapshot.prices), snapshot.v_plus, snapshot.v_minus


def _loglik_terms(vp, vm, tp, tm, mu, sigma):
    with np.errstate(divide="ignore", invalid="ignore"):
        up = log_ndtr((mu - tp) / sigma)
        down = log_ndtr((tm - mu) / sigma)
        # the atom at 1 belongs to the cdf, so a threshold at 1 is never exceeded
        up = np.where(tp >= 1.0, -np.inf, up)
        down = np.where(tm >= 1.0, 0.0, down)
        terms = np.where(vp > 0, vp * up, 0.0) + np.where(vm > 0, vm * down, 0.0)
    return float(terms.sum())


def log_likelihood(snapshot: VolumeSnapshot, mu: float, sigma: float, lam: float) -> float:
    """
    Censored log-likelihood of a vote snapshot.

    ``sum_q V+(q) log(1 - F(theta+(q))) + V-(q) log F(theta-(q))`` with ``F``
    the clipped-normal distribution function. Zero-volume terms contribute
    nothing; an impossible positive-volume term makes the result ``-inf``.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    q, vp, vm = _volumes(snapshot)
    if q.size == 0:
        return 0.0
    tp, tm = theta_plus(lam, q), theta_minus(lam, q)
    return _loglik_terms(vp, vm, np.atleast_1d(tp), np.atleast_1d(tm), mu, sigma)


def volume_weighted_price(snapshot: VolumeSnapshot) -> float:
    q, vp, vm = _volumes(snapshot)
    w = vp + vm
    if w.sum() <= 0:
        raise ValueError("snapshot carries no volume")
    return float(np.dot(q, w) / w.sum())


@dataclass
class MleResult:
    mu: float
    sigma: float
    loglik: float
    converged: bool
    nit: int


def mle_mu_sigma(snapshot: VolumeSnapshot, lam: float, config: SolverConfig | None = None,
                 start: tuple[float, float] | None = None) -> MleResult:
    """
    Maximise the censored likelihood over ``(mu, sigma)`` at fixed ``lam``.

    The simplex runs over ``(mu, log sigma)``. ``start`` overrides the
    configured starting point. The result carries the best point found even
    when the iteration cap is hit.
    """
    config = config or SolverConfig()
    q, vp, vm = _volumes(snapshot)
    if q.size == 0 or (vp.sum() + vm.sum()) <= 0:
        raise ValueError("snapshot carries no volume")
    if not lam < 0:
        raise ValueError("lam must be negative")
    tp = np.atleast_1d(theta_plus(lam, q))
    tm = np.atleast_1d(theta_minus(lam, q))
    if start is None:
        mu0 = config.mu0 if config.mu0 is not None else volume_weighted_price(snapshot)
        start = (mu0, config.sigma0)

    def objective(x):
        return -_loglik_terms(vp, vm, tp, tm, x[0], math.exp(x[1]))

    res = nelder_mead(objective, [start[0], math.log(start[1])],
                      step=[config.mu_step, config.log_sigma_step],
                      xatol=config.xatol, fatol=config.fatol, maxiter=config.maxiter)
    return MleResult(float(res.x[0]), float(math.exp(res.x[1])), -res.fun, res.converged, res.nit)


def _check_guard(mu: float, sigma: float):
    if not (0.0 < mu < 1.0):
        raise ValueError("mu must lie in (0, 1)")
    if not (0.0 < sigma < min(mu, 1.0 - mu)):
        raise ValueError("sigma must satisfy 0 < sigma < min(mu, 1 - mu)")


def log_R(lam: float, mu: float, sigma: float) -> float:
    """
    Log of the equilibrium ratio at price ``mu``.

    ``log((1 - mu) / mu) + log(1 - F(theta-(mu))) - log F(theta+(mu))``: the
    expected buy-vote to sell-vote balance at the price ``mu`` under beliefs
    ``N(mu, sigma)``. At ``lam = 0`` it equals ``log((1 - mu) / mu)``.
    """
    tp = float(theta_plus(lam, mu))
    tm = float(theta_minus(lam, mu))
    return (math.log((1.0 - mu) / mu) + float(log_ndtr((mu - tm) / sigma))
            - float(log_ndtr((tp - mu) / sigma)))


def _solve_lambda_at(mu: float, sigma: float, xtol: float) -> float:
    lo, hi = -LAMBDA_CAP, -1e-300
    return bisect(lambda lam: log_R(lam, mu, sigma), lo, hi, xtol=xtol)


def solve_lambda(mu: float, sigma: float, xtol: float = 1e-10) -> float:
    """
    The unique negative root ``Lambda(mu, sigma)`` of :func:`log_R`.

    Requires ``0 < sigma < min(mu, 1 - mu)``. At ``mu = 1/2`` the ratio is
    identically 1, so the value is the average of the roots at
    ``1/2 -+ 1e-6``.
    """
    _check_guard(mu, sigma)
    if abs(mu - 0.5) < HALF_OFFSET:
        lo = _solve_lambda_at(0.5 - HALF_OFFSET, sigma, xtol)
        hi = _solve_lambda_at(0.5 + HALF_OFFSET, sigma, xtol)
        return 0.5 * (lo + hi)
    return _solve_lambda_at(mu, sigma, xtol)


def log_R_alternative(lam: float, mu: float, sigma: float) -> float:
    """
    Log of the alternative balance ratio at price ``mu``.

    Uses the single cutoff where a buy and a sell are equally attractive
    instead of the two censoring thresholds.
    """
    pstar = float(indifference_belief(mu, lam))
    return (math.log((1.0 - mu) / mu) + float(log_ndtr((mu - pstar) / sigma))
            - float(log_ndtr((pstar - mu) / sigma)))


def solve_lambda_alternative(mu: float, sigma: float, xtol: float = 1e-10) -> float | None:
    """
    Negative root of :func:`log_R_alternative`, or ``None`` if there is none.

    The bracket is scanned on a logarithmic grid of ``|lam|``; the first
    sign change found is refined by bisection.
    """
    _check_guard(mu, sigma)
    grid = -np.logspace(-6, math.log10(LAMBDA_CAP), 80)
    vals = [log_R_alternative(g, mu, sigma) for g in grid]
    for (a, fa), (b, fb) in zip(zip(grid, vals), zip(grid[1:], vals[1:])):
        if np.sign(fa) != np.sign(fb):
            return bisect(lambda lam: log_R_alternative(lam, mu, sigma), b, a, xtol=xtol)
    return None


@dataclass
class _Profile:
    lam: float
    mle: MleResult
    big_lambda: float
    boundary: bool


def _profile(snapshot, lam, config, start) -> _Profile:
    mle = mle_mu_sigma(snapshot, lam, config, start)
    boundary = not (0.0 < mle.mu < 1.0)
    try:
        big = solve_lambda(min(max(mle.mu, 0.0), 1.0), mle.sigma, config.lambda_xtol)
    except ValueError:
        big = math.nan
    return _Profile(lam, mle, big, boundary)


def fixed_point_profile(snapshot: VolumeSnapshot, lams: Sequence[float],
                        config: SolverConfig | None = None) -> list[dict]:
    """
    Both sides of the fixed-point equation over a grid of ``lam``.

    Returns one dict per grid point with ``lam``, ``mu``, ``sigma`` and
    ``Lambda``, the value of the equilibrium root at the inner estimate.
    """
    config = config or SolverConfig()
    out = []
    for lam in lams:
        p = _profile(snapshot, float(lam), config, None)
        out.append({"lam": p.lam, "mu": p.mle.mu, "sigma": p.mle.sigma, "Lambda": p.big_lambda})
    return out


def fixed_point_estimate(snapshot: VolumeSnapshot, config: SolverConfig | None = None,
                         start: tuple[float, float] | None = None, nu: float | None = None) -> EstimateRecord:
    """
    Jointly estimate ``(mu, sigma, lam)`` from one snapshot.

    Solves ``h(lam) = lam - Lambda(mu_hat(lam), sigma_hat(lam)) = 0`` by
    bisection on the configured bracket. When the bracket shows no sign
    change, ``h^2`` is minimised by the simplex method instead. An inner
    median outside (0, 1) is clamped and reported through ``boundary``.

    Parameters
    ----------
    snapshot : VolumeSnapshot
    config : SolverConfig, optional
    start : tuple, optional
        Starting ``(mu, sigma)`` for every inner search (warm start).
    nu : float, optional
        Operational time recorded in the result; defaults to the snapshot's
        total volume.
    """
    config = config or SolverConfig()
    nu = snapshot.total_volume if nu is None else nu
    cache: dict[float, _Profile] = {}

    def prof(lam):
        if lam not in cache:
            cache[lam] = _profile(snapshot, lam, config, start)
        return cache[lam]

    def h(lam):
        p = prof(lam)
        return lam - p.big_lambda

    def record(p: _Profile, converged: bool, message: str = "") -> EstimateRecord:
        mu = min(max(p.mle.mu, 0.0), 1.0)
        ok = converged and not p.boundary and p.mle.converged
        return EstimateRecord(nu, snapshot.time, mu, p.mle.sigma, p.lam,
                              p.mle.loglik, ok, p.boundary, message)

    lo, hi = config.lam_bracket
    if snapshot.v_plus.sum() <= 0 or snapshot.v_minus.sum() <= 0:
        p = prof(hi)
        return record(p, False, "one-sided snapshot")
    h_lo, h_hi = h(lo), h(hi)
    if np.isfinite(h_lo) and np.isfinite(h_hi) and np.sign(h_lo) != np.sign(h_hi):
        try:
            lam = bisect(h, lo, hi, xtol=config.lam_xtol)
            p = prof(lam)
            if np.isfinite(p.big_lambda):
                return record(p, True)
        except NoBracketError:
            pass
    for edge in (lo, hi):
        if prof(edge).boundary:
            return record(prof(edge), False, "median estimate left (0, 1)")

    def sq(x):
        lam = float(x[0])
        if not (lo <= lam <= hi):
            return math.inf
        v = h(lam)
        return v * v if np.isfinite(v) else math.inf

    res = nelder_mead(sq, [float(np.clip(-1.0, lo, hi))], step=0.1,
                      xatol=config.lam_xtol, maxiter=config.maxiter)
    p = prof(float(res.x[0]))
    resid = abs(h(p.lam)) if np.isfinite(h(p.lam)) else math.inf
    return record(p, resid < 1e-6, "simplex fallback")


def _fit_one(args):
    snapshot, config, start, nu = args
    try:
        return fixed_point_estimate(snapshot, config, start, nu)
    except Exception as exc:  # recorded per checkpoint, the series continues
        return EstimateRecord(nu, snapshot.time, math.nan, math.nan, math.nan, math.nan,
                              False, False, f"error: {exc}")


def estimate_series(snapshots: Sequence[VolumeSnapshot], nu_step: float,
                    config: SolverConfig | None = None, warm_start: bool = True,
                    workers: int = 1) -> list[EstimateRecord]:
    """
    Estimates at each operational-time checkpoint.

    Parameters
    ----------
    snapshots : sequence of VolumeSnapshot
        Time-ordered.
    nu_step : float
        Spacing of the checkpoints in total vote volume.
    config : SolverConfig, optional
    warm_start : bool
        Start each solve from the previous ``(mu, sigma)``. Forces
        sequential processing.
    workers : int
        Process count for independent solves when ``warm_start`` is off.
    """
    config = config or SolverConfig()
    checkpoints = operational_series(snapshots, nu_step)
    if not warm_start and workers > 1:
        jobs = [(snapshots[c.index], config, None, c.nu) for c in checkpoints]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_fit_one, jobs))
    out: list[EstimateRecord] = []
    start = None
    for c in checkpoints:
        rec = _fit_one((snapshots[c.index], config, start, c.nu))
        out.append(rec)
        if warm_start and rec.converged:
            start = (rec.mu, rec.sigma)
    return out
