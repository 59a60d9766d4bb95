"""
Continuous double auction on a discrete price grid, vote snapshots and the
operational (volume) clock.

Prices are probabilities strictly inside (0, 1). A contract pays 1 if the
proposition turns out true, so buying at ``q`` puts ``q`` units at risk on
"true" and selling puts ``1 - q`` units on "false". Those amounts are the
votes ``V+ = q S+`` and ``V- = (1 - q) S-``.

Demand ``S+(q)`` and supply ``S-(q)`` count every contract bought or sold at
``q``, matched or resting, so ``min(S+, S-)`` is the matched volume and
``|S+ - S-|`` the volume still available at ``q``.
"""

from __future__ import annotations

import csv
import io
import os
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

# Sizes below this are treated as fully consumed.
SIZE_EPS = 1e-12


class CsvFormatError(ValueError):
    """Malformed CSV input; the message carries the offending line number."""


def _rel_gt(a: float, b: float) -> bool:
    # Strict comparison that ignores float noise from repeated additions.
    return a - b > 1e-9 * max(1.0, abs(a), abs(b))


class PriceGrid:
    """
    Strictly increasing prices in the open unit interval.

    Parameters
    ----------
    prices : sequence of float
    """

    def __init__(self, prices: Sequence[float]):
        arr = np.asarray(prices, dtype=float)
        if arr.ndim != 1:
            raise ValueError("price grid must be one-dimensional")
        if arr.size and (arr[0] <= 0.0 or arr[-1] >= 1.0):
            raise ValueError("grid prices must lie in (0, 1)")
        if np.any(np.diff(arr) <= 0):
            raise ValueError("grid prices must be strictly increasing")
        self.prices = arr
        self._index = {float(p): i for i, p in enumerate(arr)}

    def __len__(self):
        return self.prices.size

    def index(self, q: float) -> int:
        """Position of ``q`` on the grid; ``ValueError`` if it is off-grid."""
        i = self._index.get(float(q))
        if i is None:
            j = int(np.searchsorted(self.prices, q))
            for k in (j - 1, j):
                if 0 <= k < self.prices.size and abs(self.prices[k] - q) <= 1e-12:
                    return k
            raise ValueError(f"price {q!r} is not on the grid")
        return i


@dataclass(frozen=True)
class OrderEvent:
    """
    One order-book event.

    ``side`` is ``"B"`` (buy), ``"S"`` (sell) or ``"W"`` (withdraw unmatched
    volume resting at ``price``).
    """

    time: int
    side: str
    price: float
    size: float
    expert: str = ""

    def __post_init__(self):
        if self.side not in ("B", "S", "W"):
            raise ValueError(f"unknown side {self.side!r}")
        if not self.size > 0:
            raise ValueError("order size must be positive")
        if not (0.0 < self.price < 1.0):
            raise ValueError("price out of range")


@dataclass(frozen=True)
class Trade:
    time: int
    price: float
    size: float


@dataclass
class VolumeSnapshot:
    """
    Demand and supply per grid price at one instant.

    The vote volumes ``v_plus`` and ``v_minus`` are derived from the contract
    counts, which are the stored quantities.
    """

    prices: np.ndarray
    s_plus: np.ndarray
    s_minus: np.ndarray
    time: int | float = 0

    def __post_init__(self):
        self.prices = np.asarray(self.prices, dtype=float)
        self.s_plus = np.asarray(self.s_plus, dtype=float)
        self.s_minus = np.asarray(self.s_minus, dtype=float)
        if not (self.prices.shape == self.s_plus.shape == self.s_minus.shape):
            raise ValueError("prices, s_plus and s_minus must have equal length")
        if np.any(self.s_plus < 0) or np.any(self.s_minus < 0):
            raise ValueError("demand and supply must be nonnegative")

    @classmethod
    def from_votes(cls, prices, v_plus, v_minus, time=0) -> "VolumeSnapshot":
        prices = np.asarray(prices, dtype=float)
        return cls(prices, np.asarray(v_plus, float) / prices,
                   np.asarray(v_minus, float) / (1.0 - prices), time)

    @property
    def v_plus(self) -> np.ndarray:
        return self.prices * self.s_plus

    @property
    def v_minus(self) -> np.ndarray:
        return (1.0 - self.prices) * self.s_minus

    @property
    def total_volume(self) -> float:
        return float(self.v_plus.sum() + self.v_minus.sum())


class BookState:
    """
    Order book with price-time priority.

    Parameters
    ----------
    grid : PriceGrid or sequence of float
    """

    def __init__(self, grid):
        self.grid = grid if isinstance(grid, PriceGrid) else PriceGrid(grid)
        n = len(self.grid)
        self.s_plus = np.zeros(n)
        self.s_minus = np.zeros(n)
        # resting orders per level, oldest first: [expert, remaining]
        self._bids = [deque() for _ in range(n)]
        self._asks = [deque() for _ in range(n)]
        self.trades: list[Trade] = []
        self.last_price: float | None = None

    @property
    def prices(self) -> np.ndarray:
        return self.grid.prices

    def resting(self, side: str) -> np.ndarray:
        """Unmatched volume per level for ``"B"`` or ``"S"``."""
        levels = self._bids if side == "B" else self._asks
        return np.array([sum(o[1] for o in lvl) for lvl in levels])

    def _best_ask(self, limit: int) -> int | None:
        for j in range(0, limit + 1):
            if self._asks[j]:
                return j
        return None

    def _best_bid(self, limit: int) -> int | None:
        for j in range(len(self.grid) - 1, limit - 1, -1):
            if self._bids[j]:
                return j
        return None

    def _withdraw(self, i: int, size: float, expert: str) -> float:
        left = size
        for levels, depth in ((self._bids, self.s_plus), (self._asks, self.s_minus)):
            queue = levels[i]
            # newest orders are withdrawn first
            for order in reversed(queue):
                if left <= SIZE_EPS:
                    break
                if expert and order[0] != expert:
                    continue
                take = min(order[1], left)
                order[1] -= take
                depth[i] -= take
                left -= take
            levels[i] = deque(o for o in queue if o[1] > SIZE_EPS)
        return size - left


def apply_order(book: BookState, order: OrderEvent):
    """
    Process one event against the book.

    An incoming buy at ``q`` consumes resting supply at prices up to ``q``,
    lowest price first and oldest order first within a price; any residual
    rests as demand at ``q``. Sells mirror this. Trades execute at the resting
    order's price.

    Returns
    -------
    tuple
        ``(book, trades)`` where ``trades`` lists the executions caused by
        this event. The book is updated in place.
    """
    i = book.grid.index(order.price)
    trades: list[Trade] = []
    if order.side == "W":
        book._withdraw(i, order.size, order.expert)
        return book, trades
    remaining = float(order.size)
    buying = order.side == "B"
    while remaining > SIZE_EPS:
        j = book._best_ask(i) if buying else book._best_bid(i)
        if j is None:
            break
        queue = book._asks[j] if buying else book._bids[j]
        resting = queue[0]
        size = min(remaining, resting[1])
        resting[1] -= size
        if resting[1] <= SIZE_EPS:
            queue.popleft()
        remaining -= size
        if buying:
            book.s_plus[j] += size
        else:
            book.s_minus[j] += size
        trade = Trade(order.time, float(book.prices[j]), size)
        trades.append(trade)
        book.trades.append(trade)
        book.last_price = trade.price
    if remaining > SIZE_EPS:
        if buying:
            book._bids[i].append([order.expert, remaining])
            book.s_plus[i] += remaining
        else:
            book._asks[i].append([order.expert, remaining])
            book.s_minus[i] += remaining
    return book, trades


def bid_ask(book) -> tuple[float | None, float | None]:
    """
    Best bid and best ask.

    The bid is the highest price where demand exceeds supply and the ask the
    lowest price where supply exceeds demand. Either is ``None`` when absent.
    Accepts a :class:`BookState` or a :class:`VolumeSnapshot`.
    """
    bid = ask = None
    for q, sp, sm in zip(book.prices, book.s_plus, book.s_minus):
        if _rel_gt(sp, sm):
            bid = float(q)
        elif ask is None and _rel_gt(sm, sp):
            ask = float(q)
    return bid, ask


def is_crossed(book) -> bool:
    bid, ask = bid_ask(book)
    return bid is not None and ask is not None and bid >= ask


def aggregate_snapshot(book: BookState, t=0) -> VolumeSnapshot:
    """Vote snapshot of the book at time ``t``."""
    return VolumeSnapshot(book.prices.copy(), book.s_plus.copy(), book.s_minus.copy(), t)


def events_from_depth(prices, s_plus, s_minus, start_time: int = 0) -> list[OrderEvent]:
    """
    An event stream whose replay ends at the given demand/supply table.

    Matched volume is created first as a buy and an exact opposing sell at
    each price; residual demand and supply are placed afterwards. The table
    must itself be uncrossed.
    """
    events = []
    t = start_time
    for q, sp, sm in zip(prices, s_plus, s_minus):
        m = min(sp, sm)
        if m > 0:
            events.append(OrderEvent(t, "B", float(q), float(m), "mm"))
            events.append(OrderEvent(t + 1, "S", float(q), float(m), "mm"))
            t += 2
    for q, sp, sm in zip(prices, s_plus, s_minus):
        if sp - sm > 0:
            events.append(OrderEvent(t, "B", float(q), float(sp - sm), "rest"))
            t += 1
        elif sm - sp > 0:
            events.append(OrderEvent(t, "S", float(q), float(sm - sp), "rest"))
            t += 1
    return events


@dataclass(frozen=True)
class Checkpoint:
    nu: float
    time: int | float
    index: int


def operational_series(snapshots: Sequence[VolumeSnapshot], nu_step: float) -> list[Checkpoint]:
    """
    Operational-time checkpoints.

    For each multiple ``nu`` of ``nu_step`` not exceeding the largest total
    vote volume, the earliest snapshot whose total volume reaches ``nu``.
    """
    if nu_step <= 0:
        raise ValueError("nu_step must be positive")
    if not snapshots:
        return []
    totals = np.array([s.total_volume for s in snapshots])
    # running maximum makes the search valid even with withdrawals
    reach = np.maximum.accumulate(totals)
    out = []
    k = 1
    while k * nu_step <= reach[-1] * (1 + 1e-12):
        nu = k * nu_step
        idx = int(np.searchsorted(reach, nu * (1 - 1e-12), side="left"))
        out.append(Checkpoint(float(nu), snapshots[idx].time, idx))
        k += 1
    return out


def format_number(x: float) -> str:
    """Shortest round-trip decimal, without a trailing ``.0`` for integers."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    r = repr(float(x))
    return r[:-2] if r.endswith(".0") else r


def _parse_time(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return fh.read()
    return source.read()


def ingest_csv(source, fmt: str = "aggregated"):
    """
    Read order-book data.

    Parameters
    ----------
    source : path or text stream
    fmt : {"aggregated", "events"}
        ``aggregated`` rows are ``q,s_plus,s_minus``; blocks may be separated
        by ``# t=<time>`` lines and become one snapshot each. ``events`` rows
        are ``time,side,price,size,expert``.

    Returns
    -------
    list
        Snapshots or events. An empty file gives an empty list.
    """
    fmt = fmt.lower()
    if fmt not in ("aggregated", "events"):
        raise ValueError(f"unknown CSV format {fmt!r}")
    text = _open_text(source)
    snapshots: list[VolumeSnapshot] = []
    events: list[OrderEvent] = []
    rows: list[tuple[float, float, float]] = []
    time = 0
    started = False

    def flush():
        if rows or started:
            arr = np.array(rows, dtype=float).reshape(-1, 3)
            snapshots.append(VolumeSnapshot(arr[:, 0], arr[:, 1], arr[:, 2], time))

    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped[1:].strip()
            if fmt == "aggregated" and body.startswith("t="):
                flush()
                rows = []
                time = _parse_time(body[2:].strip())
                started = True
            continue
        cells = next(csv.reader([stripped]))
        if cells[0].strip() in ("q", "time"):
            continue
        try:
            if fmt == "aggregated":
                if len(cells) != 3:
                    raise ValueError("expected 3 fields")
                q, sp, sm = (float(c) for c in cells)
            else:
                if len(cells) not in (4, 5):
                    raise ValueError("expected 5 fields")
                t = _parse_time(cells[0].strip())
                side = cells[1].strip().upper()
                q = float(cells[2])
                size = float(cells[3])
                expert = cells[4].strip() if len(cells) == 5 else ""
        except ValueError as exc:
            raise CsvFormatError(f"malformed row ({exc}), line {lineno}") from None
        if not (0.0 < q < 1.0):
            raise CsvFormatError(f"price out of range, line {lineno}")
        if fmt == "aggregated":
            if sp < 0 or sm < 0:
                raise CsvFormatError(f"negative volume, line {lineno}")
            rows.append((q, sp, sm))
        else:
            try:
                events.append(OrderEvent(t, side, q, size, expert))
            except ValueError as exc:
                raise CsvFormatError(f"{exc}, line {lineno}") from None
    if fmt == "events":
        return events
    flush()
    for snap in snapshots:
        PriceGrid(snap.prices)
    return snapshots


def write_aggregated_csv(snapshots: Iterable[VolumeSnapshot], stream, comments: Sequence[str] = (),
                         with_time: bool | None = None) -> None:
    """
    Write snapshots in the aggregated layout.

    ``comments`` are emitted first as ``# `` lines. Each snapshot is preceded
    by a ``# t=<time>`` line when ``with_time`` is true, which is the default
    for more than one snapshot.
    """
    snapshots = list(snapshots)
    if with_time is None:
        with_time = len(snapshots) > 1
    for c in comments:
        stream.write(f"# {c}\n")
    stream.write("q,s_plus,s_minus\n")
    for snap in snapshots:
        if with_time:
            stream.write(f"# t={format_number(snap.time)}\n")
        for q, sp, sm in zip(snap.prices, snap.s_plus, snap.s_minus):
            stream.write(f"{format_number(q)},{format_number(sp)},{format_number(sm)}\n")


def aggregated_csv_text(snapshots, comments=(), with_time=None) -> str:
    buf = io.StringIO()
    write_aggregated_csv(snapshots, buf, comments, with_time)
    return buf.getvalue()
