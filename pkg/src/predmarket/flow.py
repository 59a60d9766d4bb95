"""
Stochastic order flow.

Votes arrive one at a time, each carrying a belief drawn from the clipped
normal law. Outside the equilibrium zone ``(theta+, theta-)`` the side is
forced. Inside it the voter weighs each side by the chance that the order is
matched: an order on the side with a deficit is matched for sure, while an
order joining the heavier side is matched with probability ``rho+(q)`` or
``rho-(q)``. The resulting difference chain ``S+ - S-`` at a price keeps
returning to balance.

Random draws follow a fixed order for reproducibility: for each vote the
belief is drawn first and a tie-break uniform second, only when a tie occurs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit, logit

from .belief import BeliefDistribution
from .estimator import solve_lambda
from .market_core import VolumeSnapshot
from .utility import inverse_theta_minus, inverse_theta_plus, theta_minus, theta_plus

BUY, SELL = "B", "S"


@dataclass(frozen=True)
class RhoLogitParams:
    """
    Matching probabilities ``rho(q) = expit(k (logit(q) - d))`` per side.

    ``k_plus > 0`` makes the buy-side probability increasing in the price and
    ``k_minus < 0`` makes the sell-side one decreasing.
    """

    k_plus: float
    d_plus: float
    k_minus: float
    d_minus: float

    def __post_init__(self):
        if not self.k_plus > 0:
            raise ValueError("k_plus must be positive")
        if not self.k_minus < 0:
            raise ValueError("k_minus must be negative")

    @classmethod
    def parse(cls, text: str) -> "RhoLogitParams":
        parts = [float(x) for x in text.split(",")]
        if len(parts) != 4:
            raise ValueError("expected 'k+,d+,k-,d-'")
        return cls(*parts)


def rho_pair(params: RhoLogitParams, q):
    """Buy-side and sell-side matching probabilities at price ``q``."""
    lq = logit(q)
    return (expit(params.k_plus * (lq - params.d_plus)),
            expit(params.k_minus * (lq - params.d_minus)))


def _classify(pi, tp, tm, tm_c, s_plus, s_minus, rho_plus, rho_minus, q, rng) -> str:
    # tm_c is 1 - tm computed without cancellation
    if pi >= tm:
        return BUY
    if pi <= tp:
        return SELL
    r_buy = rho_plus if s_plus >= s_minus else 1.0
    r_sell = rho_minus if s_minus >= s_plus else 1.0
    buy_value = r_buy * pi / tp + (1.0 - r_buy)
    sell_value = r_sell * (1.0 - pi) / tm_c + (1.0 - r_sell)
    if buy_value > sell_value:
        return BUY
    if sell_value > buy_value:
        return SELL
    gap_buy = abs(s_plus + 1.0 / q - s_minus)
    gap_sell = abs(s_plus - s_minus - 1.0 / (1.0 - q))
    if gap_buy < gap_sell:
        return BUY
    if gap_sell < gap_buy:
        return SELL
    return BUY if rng.uniform() < 0.5 else SELL


def classify_vote(pi: float, q: float, lam: float, s_plus: float, s_minus: float,
                  rho_plus: float, rho_minus: float, rng: np.random.Generator | None = None) -> str:
    """
    Side chosen by a voter with belief ``pi`` at price ``q``.

    Parameters
    ----------
    pi : float
        Belief in [0, 1].
    q : float
        Price.
    lam : float
        Risk parameter, negative.
    s_plus, s_minus : float
        Current demand and supply at ``q``.
    rho_plus, rho_minus : float
        Matching probabilities for an order that joins the heavier side.
    rng : numpy.random.Generator, optional
        Used only to break exact ties.

    Returns
    -------
    str
        ``"B"`` or ``"S"``.
    """
    tp, tm = float(theta_plus(lam, q)), float(theta_minus(lam, q))
    tm_c = float(theta_plus(lam, 1.0 - q))
    rng = rng if rng is not None else np.random.default_rng(0)
    return _classify(pi, tp, tm, tm_c, s_plus, s_minus, rho_plus, rho_minus, q, rng)


@dataclass
class FlowState:
    """Running demand, supply and vote totals at one price."""

    q: float
    s_plus: float = 0.0
    s_minus: float = 0.0
    votes: int = 0

    @property
    def v_plus(self) -> float:
        return self.q * self.s_plus

    @property
    def v_minus(self) -> float:
        return (1.0 - self.q) * self.s_minus

    def place(self, side: str) -> None:
        # one vote is one unit of money at risk
        if side == BUY:
            self.s_plus += 1.0 / self.q
        else:
            self.s_minus += 1.0 / (1.0 - self.q)
        self.votes += 1


def _run_price(state: FlowState, n: int, dist: BeliefDistribution, lam: float,
               rho_plus: float, rho_minus: float, rng: np.random.Generator,
               trace: list | None = None):
    q = state.q
    tp, tm = float(theta_plus(lam, q)), float(theta_minus(lam, q))
    tm_c = float(theta_plus(lam, 1.0 - q))
    for _ in range(n):
        pi = dist.sample(rng)
        side = _classify(pi, tp, tm, tm_c, state.s_plus, state.s_minus, rho_plus, rho_minus, q, rng)
        state.place(side)
        if trace is not None:
            trace.append(state.s_plus - state.s_minus)


@dataclass
class SingleRun:
    """Outcome of a single-price simulation."""

    q: float
    lam: float
    difference: np.ndarray
    state: FlowState
    config: dict = field(default_factory=dict)

    @property
    def contracts(self) -> float:
        return self.state.s_plus + self.state.s_minus


def simulate_single_price(mu: float, sigma: float, q: float, votes: int, seed: int,
                          rho_plus: float, rho_minus: float, lam: float | None = None) -> SingleRun:
    """
    Place ``votes`` votes at one price and record ``S+ - S-`` after each.

    ``lam`` defaults to ``Lambda(mu, sigma)``.
    """
    if votes <= 0:
        raise ValueError("vote budget must be positive")
    if not 0.0 < q < 1.0:
        raise ValueError("price must lie in (0, 1)")
    lam = solve_lambda(mu, sigma) if lam is None else lam
    rng = np.random.default_rng(seed)
    dist = BeliefDistribution(mu, sigma)
    state = FlowState(q)
    trace: list[float] = []
    _run_price(state, votes, dist, lam, rho_plus, rho_minus, rng, trace)
    cfg = dict(mu=mu, sigma=sigma, q=q, lam=lam, rho_plus=rho_plus, rho_minus=rho_minus,
               votes=votes, seed=seed)
    return SingleRun(q, lam, np.array(trace), state, cfg)


def zero_crossings(difference: Sequence[float]) -> int:
    """Sign changes of a trajectory, ignoring exact zeros."""
    d = np.sign(np.asarray(difference, dtype=float))
    d = d[d != 0]
    return int(np.count_nonzero(d[1:] != d[:-1]))


def simulate_book(prices: Sequence[float], counts: Sequence[int], mu: float, sigma: float,
                  seed: int, rho: RhoLogitParams | None = None, lam: float | None = None,
                  rho_values: tuple[Sequence[float], Sequence[float]] | None = None,
                  time=0) -> VolumeSnapshot:
    """
    Generate a whole book, price by price in grid order.

    Parameters
    ----------
    prices : sequence of float
    counts : sequence of int
        Votes to place at each price.
    mu, sigma : float
        Belief law.
    seed : int
    rho : RhoLogitParams, optional
        Logit form of the matching probabilities.
    lam : float, optional
        Risk parameter, ``Lambda(mu, sigma)`` by default.
    rho_values : tuple of arrays, optional
        Direct per-price ``(rho+, rho-)``; overrides ``rho``. With neither
        given every order is matched for sure.

    Returns
    -------
    VolumeSnapshot
        Model vote volumes.
    """
    prices = np.asarray(prices, dtype=float)
    counts = np.asarray(counts, dtype=int)
    if prices.shape != counts.shape:
        raise ValueError("prices and counts must have equal length")
    if np.any(counts < 0):
        raise ValueError("vote counts must be nonnegative")
    lam = solve_lambda(mu, sigma) if lam is None else lam
    if rho_values is not None:
        rp, rm = (np.broadcast_to(np.asarray(r, dtype=float), prices.shape) for r in rho_values)
    elif rho is not None:
        rp, rm = rho_pair(rho, prices)
    else:
        rp = rm = np.ones_like(prices)
    rng = np.random.default_rng(seed)
    dist = BeliefDistribution(mu, sigma)
    vp = np.zeros(prices.size)
    vm = np.zeros(prices.size)
    for i, q in enumerate(prices):
        state = FlowState(float(q))
        _run_price(state, int(counts[i]), dist, lam, float(rp[i]), float(rm[i]), rng)
        vp[i], vm[i] = state.v_plus, state.v_minus
    return VolumeSnapshot.from_votes(prices, vp, vm, time)


def censored_grid(mu: float, sigma: float, lam: float, width: float = 6.0,
                  step: float | None = None) -> np.ndarray:
    """
    Price grid whose censoring thresholds cover ``mu -+ width * sigma``.

    The spacing defaults to ``sigma / 4``.
    """
    step = sigma / 4.0 if step is None else step
    lo = float(inverse_theta_minus(lam, max(mu - width * sigma, 0.0)))
    hi = float(inverse_theta_plus(lam, min(mu + width * sigma, 1.0)))
    lo = max(lo, step / 2)
    hi = min(hi, 1.0 - step / 2)
    grid = np.arange(lo, hi + step / 2, step)
    return grid[(grid > 0.0) & (grid < 1.0)]


def simulate_censored_snapshot(mu: float, sigma: float, votes: int, seed: int,
                               lam: float | None = None, grid: Sequence[float] | None = None,
                               time=0) -> VolumeSnapshot:
    """
    Snapshot from the base censoring model, with censoring independent of
    the belief.

    Each attempt proposes a side and a price together, independently of the
    voter, with weight equal to the width of the price's cell measured on
    the corresponding threshold scale. A belief is drawn and the vote is kept
    only if the order beats inaction. Attempts continue until ``votes`` votes
    are kept.

    Draws per batch: proposals first, then beliefs.
    """
    lam = solve_lambda(mu, sigma) if lam is None else lam
    grid = censored_grid(mu, sigma, lam) if grid is None else np.asarray(grid, dtype=float)
    n = grid.size
    half = np.diff(grid) / 2
    edges = np.concatenate([[grid[0] - (half[0] if n > 1 else sigma / 8)],
                            grid[:-1] + half,
                            [grid[-1] + (half[-1] if n > 1 else sigma / 8)]])
    edges = np.clip(edges, 1e-12, 1 - 1e-12)
    weights = np.concatenate([np.diff(theta_plus(lam, edges)), np.diff(theta_minus(lam, edges))])
    weights = weights / weights.sum()
    tp, tm = theta_plus(lam, grid), theta_minus(lam, grid)
    rng = np.random.default_rng(seed)
    vp = np.zeros(n)
    vm = np.zeros(n)
    placed = 0
    while placed < votes:
        m = 2 * (votes - placed) + 100
        cell = rng.choice(2 * n, size=m, p=weights)
        pi = np.clip(rng.normal(mu, sigma, m), 0.0, 1.0)
        buy = cell < n
        j = np.where(buy, cell, cell - n)
        keep = np.where(buy, pi > tp[j], pi < tm[j])
        cell = cell[keep][: votes - placed]
        placed += cell.size
        vp += np.bincount(cell[cell < n], minlength=n)
        vm += np.bincount(cell[cell >= n] - n, minlength=n)
    return VolumeSnapshot.from_votes(grid, vp, vm, time)


def simulate_censored_stream(mu: float, sigmas: Sequence[float], votes_per_batch: int,
                             seed: int, snapshots_per_batch: int = 4) -> list[VolumeSnapshot]:
    """
    Growing snapshot stream whose belief dispersion shrinks batch by batch.

    Batch ``b`` contributes ``votes_per_batch`` votes generated by
    :func:`simulate_censored_snapshot` with dispersion ``sigmas[b]`` and its
    own equilibrium risk parameter. Cumulative snapshots are emitted
    ``snapshots_per_batch`` times per batch, with increasing integer times.
    """
    sigmas = [float(s) for s in sigmas]
    lams = [solve_lambda(mu, s) for s in sigmas]
    lo = min(float(inverse_theta_minus(l, max(mu - 6 * s, 0.0))) for s, l in zip(sigmas, lams))
    hi = max(float(inverse_theta_plus(l, min(mu + 6 * s, 1.0))) for s, l in zip(sigmas, lams))
    step = min(sigmas) / 4
    grid = np.arange(max(lo, step / 2), min(hi, 1 - step / 2) + step / 2, step)
    grid = grid[(grid > 0.0) & (grid < 1.0)]
    rng = np.random.default_rng(seed)
    vp = np.zeros(grid.size)
    vm = np.zeros(grid.size)
    out = []
    t = 0
    sizes = np.diff(np.linspace(0, votes_per_batch, snapshots_per_batch + 1).round().astype(int))
    for s, l in zip(sigmas, lams):
        for size in sizes:
            part = simulate_censored_snapshot(mu, s, int(size), int(rng.integers(2**32)), l, grid)
            vp += part.v_plus
            vm += part.v_minus
            t += 1
            out.append(VolumeSnapshot.from_votes(grid, vp.copy(), vm.copy(), t))
    return out
