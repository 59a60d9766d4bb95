"""
Double-relativity utility, censoring thresholds and expected utilities.

An expert holding belief ``pi`` that the proposition is true compares three
actions at price ``q``: buying a contract, selling one, or doing nothing.
With the double-relativity utility and a risk parameter ``lam < 0`` the
comparison against inaction reduces to two belief cutoffs, the censoring
thresholds ``theta_plus(q) < q < theta_minus(q)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Exponents beyond this overflow double precision; far outside any
# model-relevant range of the risk parameter.
LAMBDA_CAP = 700.0
# Below this the linear limit is exact to double precision and avoids
# underflow in expm1.
LAMBDA_EPS = 1e-12


def _cap(lam):
    lam = np.clip(lam, -LAMBDA_CAP, LAMBDA_CAP)
    return np.where(np.abs(lam) < LAMBDA_EPS, 0.0, lam)


def _check_price(q):
    q_arr = np.asarray(q, dtype=float)
    if np.any(~(q_arr > 0.0)) or np.any(~(q_arr < 1.0)):
        raise ValueError("price must lie in the open interval (0, 1)")
    return q_arr


@dataclass(frozen=True)
class LotteryFrame:
    """Worst outcome ``m``, best outcome ``M`` and status-quo budget ``b``."""

    worst: float
    best: float
    budget: float

    def __post_init__(self):
        if not (self.worst < self.budget < self.best):
            raise ValueError("lottery frame requires worst < budget < best")


def u_double_relativity(x, lam: float, frame: LotteryFrame):
    """
    Double-relativity utility of the possession ``x``.

    Parameters
    ----------
    x : float or array_like
        Possession, must lie in ``[frame.worst, frame.best]``.
    lam : float
        Risk parameter. ``lam = 0`` returns the linear limit.
    frame : LotteryFrame
        Range of the lottery and the status-quo budget.

    Returns
    -------
    float or ndarray
        Utility normalised so that the budget has utility exactly 1.
    """
    x = np.asarray(x, dtype=float)
    m, big_m, b = frame.worst, frame.best, frame.budget
    if np.any(x < m) or np.any(x > big_m):
        raise ValueError("possession outside the lottery range")
    lam = float(_cap(lam))
    span = big_m - m
    if lam == 0.0:
        out = (x - m) / (b - m)
    else:
        out = np.expm1(-lam * (x - m) / span) / np.expm1(-lam * (b - m) / span)
    out = np.where(x == b, 1.0, out)
    return out[()] if out.ndim == 0 else out


def theta_plus(lam, q):
    """Buy threshold: buying at ``q`` beats inaction iff belief exceeds it."""
    q = _check_price(q)
    lam = _cap(np.asarray(lam, dtype=float))
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.expm1(-lam * q) / np.expm1(-lam)
    out = np.where(lam == 0.0, q, val)
    return out[()] if out.ndim == 0 else out


def theta_minus(lam, q):
    """Sell threshold: selling at ``q`` beats inaction iff belief is below it."""
    q = _check_price(q)
    lam = _cap(np.asarray(lam, dtype=float))
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.expm1(lam * q) / np.expm1(lam)
    out = np.where(lam == 0.0, q, val)
    return out[()] if out.ndim == 0 else out


def thresholds(lam, q):
    """
    Censoring thresholds at price ``q``.

    Parameters
    ----------
    lam : float or array_like
        Risk parameter. ``lam = 0`` gives ``(q, q)``.
    q : float or array_like
        Price in the open unit interval.

    Returns
    -------
    tuple
        ``(theta_plus, theta_minus)``; for ``lam < 0`` they bracket ``q``.
    """
    return theta_plus(lam, q), theta_minus(lam, q)


def expected_utilities(pi, q, lam):
    """
    Expected utilities of a buy and of a sell relative to inaction.

    Returns
    -------
    tuple
        ``(U_buy, U_sell)`` with ``U_buy = pi / theta_plus`` and
        ``U_sell = (1 - pi) / (1 - theta_minus)``. A value above 1 means the
        order beats inaction.
    """
    tp = theta_plus(lam, q)
    # 1 - theta_minus(q) equals theta_plus(1 - q) and keeps full precision
    tm_c = theta_plus(lam, 1.0 - np.asarray(q, dtype=float))
    pi = np.asarray(pi, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        u_buy = pi / tp
        u_sell = (1.0 - pi) / tm_c
    if u_buy.ndim == 0:
        return float(u_buy), float(u_sell)
    return u_buy, u_sell


def censor_tests(pi: float, q: float, lam: float) -> dict:
    """Admissibility of a buy and of a sell at price ``q`` for belief ``pi``."""
    tp, tm = thresholds(lam, q)
    return {"BuyAdmissible": bool(pi > tp), "SellAdmissible": bool(pi < tm)}


def indifference_belief(q, lam):
    """
    Belief at which a buy and a sell have equal expected utility.

    Closed form ``theta_plus / (theta_plus + 1 - theta_minus)``, which lies
    inside the equilibrium zone for ``lam < 0``.
    """
    tp = theta_plus(lam, q)
    return tp / (tp + theta_plus(lam, 1.0 - np.asarray(q, dtype=float)))


def information_values(q: float, eta: float = 0.0, xi: float = 0.0):
    """
    Value of a belief advantage over the price, and its base-2 logarithm.

    Parameters
    ----------
    q : float
        Price in (0, 1).
    eta : float
        Upward belief advantage, ``q + eta`` in [0, 1].
    xi : float
        Downward shift on the sell side, ``0 <= xi < 1 - q``.

    Returns
    -------
    tuple
        ``(phi, psi, log2 phi, log2 psi)`` with ``phi = 1 + eta / q`` and
        ``psi = 1 - xi / (1 - q)``.
    """
    _check_price(q)
    if not (0.0 <= q + eta <= 1.0):
        raise ValueError("q + eta must lie in [0, 1]")
    if not (0.0 <= xi < 1.0 - q):
        raise ValueError("xi must lie in [0, 1 - q)")
    phi = 1.0 + eta / q
    psi = 1.0 - xi / (1.0 - q)
    log_phi = math.log2(phi) if phi > 0 else -math.inf
    return phi, psi, log_phi, math.log2(psi)


def exponential_utility(x, alpha: float):
    """Standard exponential utility ``-exp(-alpha x) / alpha``."""
    return -np.exp(-alpha * np.asarray(x, dtype=float)) / alpha


def censor_tests_exponential(pi: float, q: float, lam: float) -> dict:
    """
    Admissibility computed from exponential utility with unit budget.

    Buying one vote at ``q`` yields ``1/q`` on success and 0 otherwise, with
    risk aversion ``lam * q``; selling mirrors it with ``1 - q``. Serves as
    an independent route to :func:`censor_tests`.
    """
    a_buy = lam * q
    a_sell = lam * (1.0 - q)
    u = exponential_utility
    buy = pi * u(1.0 / q, a_buy) + (1.0 - pi) * u(0.0, a_buy) > u(1.0, a_buy)
    sell = (1.0 - pi) * u(1.0 / (1.0 - q), a_sell) + pi * u(0.0, a_sell) > u(1.0, a_sell)
    return {"BuyAdmissible": bool(buy), "SellAdmissible": bool(sell)}


def inverse_theta_plus(lam: float, y):
    """Price ``q`` with ``theta_plus(lam, q) = y`` for ``y`` in [0, 1]."""
    y = np.asarray(y, dtype=float)
    lam = float(_cap(lam))
    if lam == 0.0:
        return y
    return -np.log1p(y * np.expm1(-lam)) / lam


def inverse_theta_minus(lam: float, y):
    """Price ``q`` with ``theta_minus(lam, q) = y`` for ``y`` in [0, 1]."""
    y = np.asarray(y, dtype=float)
    lam = float(_cap(lam))
    if lam == 0.0:
        return y
    return np.log1p(y * np.expm1(lam)) / lam
