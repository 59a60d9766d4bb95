"""
Round-based self-resolving market.

The market opens with the experts who hold no private signals; they all
share the public belief, which sets the price. In each round one outsider
whose belief (public pool plus own signals) differs from the price joins with
a one-contract trade against the current participants and, if efficient,
publishes its signals. The market stops when nobody wants to join and is
settled from its own final price.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .knowledge import MechanismTable, StructureError

EFFICIENT = "efficient"
SILENT = "silent"
PRICE_TOL = 1e-12


class ConfigurationError(ValueError):
    """Market set-up that the round model cannot start from."""


@dataclass
class Join:
    round: int
    expert: object
    side: str
    size: float
    price: float
    belief: float
    shared: bool


@dataclass
class SrmResult:
    k_inf: int
    prices: list
    pool: frozenset
    joins: list
    participants: list
    positions: dict
    flagged_rounds: list = field(default_factory=list)

    @property
    def final_price(self) -> float:
        return self.prices[-1]


def _strategy(strategies: Mapping | None, n) -> str:
    s = (strategies or {}).get(n, EFFICIENT)
    if s not in (EFFICIENT, SILENT):
        raise ConfigurationError(f"unknown strategy {s!r}")
    return s


def run_srm(mechanism: MechanismTable, endowments: Mapping, strategies: Mapping | None = None,
            size: float = 1.0) -> SrmResult:
    """
    Simulate the market round by round.

    Parameters
    ----------
    mechanism : MechanismTable
        Shared map from known signals to beliefs.
    endowments : mapping
        Expert id to its private signals. Experts with none form the opening
        participant set.
    strategies : mapping, optional
        Expert id to ``"efficient"`` (share on joining, the default) or
        ``"silent"`` (join without sharing).
    size : float
        Contracts per joining trade.

    Returns
    -------
    SrmResult
        ``k_inf``, the price per round, the final public pool, the join log,
        the participants in order of entry, per-expert ``[contracts, cash]``
        positions and the rounds in which participants disagreed.
    """
    ends = {n: frozenset(e) for n, e in endowments.items()}
    for e in ends.values():
        if not e <= set(mechanism.signals):
            raise StructureError("endowment outside the mechanism's signals")
    opening = sorted((n for n, e in ends.items() if not e), key=str)
    if not opening:
        raise ConfigurationError("no expert without private signals to open the market")
    strategy = {n: _strategy(strategies, n) for n in ends}
    participants = list(opening)
    positions = {n: [0.0, 0.0] for n in ends}
    pool: frozenset = frozenset()
    known = {n: ends[n] for n in ends}
    prices, joins, flagged = [], [], []
    k = 1
    while True:
        price = mechanism(pool)
        prices.append(price)
        if any(abs(mechanism(pool | known[n]) - price) > PRICE_TOL for n in participants):
            flagged.append(k)
        outsiders = [n for n in sorted(ends, key=str) if n not in participants]
        keen = [n for n in outsiders if abs(mechanism(pool | ends[n]) - price) > PRICE_TOL]
        if not keen:
            break
        n = keen[0]
        belief = mechanism(pool | ends[n])
        side = "B" if belief > price else "S"
        sign = 1.0 if side == "B" else -1.0
        share = strategy[n] == EFFICIENT
        joins.append(Join(k, n, side, size, price, belief, share))
        positions[n][0] += sign * size
        positions[n][1] -= sign * size * price
        for m in participants:
            positions[m][0] -= sign * size / len(participants)
            positions[m][1] += sign * size * price / len(participants)
        if share:
            pool = pool | ends[n]
        participants.append(n)
        k += 1
    if all(s == EFFICIENT for s in strategy.values()):
        final = prices[-1]
        for n in ends:
            if abs(mechanism(pool | ends[n]) - final) > PRICE_TOL:
                raise AssertionError("efficient run ended without consensus")
    return SrmResult(k, prices, pool, joins, participants, positions, flagged)


def best_response_audit(mechanism: MechanismTable, endowments: Mapping, deviant) -> dict:
    """
    Expected profit of sharing versus staying silent for one expert.

    All other experts are efficient. The deviant's joining round and price
    are those of the efficient run. Staying silent, the deviant expects the
    final price to remain at the post-join round price, so its expected
    profit on the joining trade is zero. Sharing, it expects settlement at
    its own belief, which is profitable exactly when that belief differs
    from the round price.

    Returns
    -------
    dict
        ``silent_profit``, ``share_profit``, ``share_profit_sign`` (-1, 0 or
        1), and the join ``round``, ``price`` and ``belief`` (``None`` when
        the deviant never joins).
    """
    if deviant not in endowments:
        raise ConfigurationError(f"unknown expert {deviant!r}")
    run = run_srm(mechanism, endowments)
    join = next((j for j in run.joins if j.expert == deviant), None)
    if join is None:
        return {"silent_profit": 0.0, "share_profit": 0.0, "share_profit_sign": 0,
                "round": None, "price": None, "belief": None}
    sign = 1.0 if join.side == "B" else -1.0
    # silent: the deviant expects the final price to stay at the round price
    silent_profit = sign * join.size * (join.price - join.price)
    share_profit = sign * join.size * (join.belief - join.price)
    return {"silent_profit": silent_profit, "share_profit": share_profit,
            "share_profit_sign": int(np.sign(share_profit)),
            "round": join.round, "price": join.price, "belief": join.belief}


def settle(price: float, positions: Mapping, mode: str = "expected",
           rng: np.random.Generator | None = None) -> dict:
    """
    Pay out positions from the final price.

    Parameters
    ----------
    price : float
        Final market price in [0, 1].
    positions : mapping
        Expert id to a contract count, or to ``(contracts, cash)``.
    mode : {"expected", "bernoulli"}
        ``expected`` pays ``price`` per contract. ``bernoulli`` draws one
        outcome with success probability ``price`` and pays 1 per contract on
        success.
    rng : numpy.random.Generator, optional
        Required for ``bernoulli``.

    Returns
    -------
    dict
        Expert id to cash plus contract payoff.
    """
    if not 0.0 <= price <= 1.0:
        raise ValueError("price must lie in [0, 1]")
    if mode == "expected":
        pay = price
    elif mode == "bernoulli":
        if rng is None:
            raise ValueError("bernoulli settlement needs a generator")
        pay = 1.0 if rng.uniform() < price else 0.0
    else:
        raise ValueError(f"unknown settlement mode {mode!r}")
    out = {}
    for n, pos in positions.items():
        contracts, cash = (pos, 0.0) if np.isscalar(pos) else pos
        out[n] = cash + contracts * pay
    return out


def scenario_from_json(data: Mapping):
    """Mechanism, endowments and strategies from a scenario document."""
    gamma = list(data["gamma"])
    mechanism = MechanismTable(gamma, data["mechanism"])
    endowments = {e["id"]: list(e.get("signals", [])) for e in data["experts"]}
    strategies = {}
    for k, v in (data.get("strategies") or {}).items():
        key = next((e for e in endowments if str(e) == str(k)), k)
        strategies[key] = v
    return mechanism, endowments, strategies
