"""
Finite knowledge structures.

A mechanism table maps every subset of a finite set of signals to the
probability an expert assigns to the proposition after learning the true
values of exactly those signals. On top of it this module provides

* a brute-force checker for the equivalence between coinciding induced
  mechanisms and "every extra signal is common or irrelevant",
* learning trees that receive the signals in every possible order, and
* the Boolean market, where experts holding one bit each repeatedly trade at
  the mean of their beliefs until the public information stops growing.

Conditioning in the Boolean market uses exact rational arithmetic.
"""

from __future__ import annotations

import itertools
import json
from random import Random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from scipy.optimize import linprog


class StructureError(ValueError):
    """Inputs that do not form a valid knowledge structure."""


def _powerset(items: Sequence) -> Iterable[frozenset]:
    items = list(items)
    for r in range(len(items) + 1):
        for combo in itertools.combinations(items, r):
            yield frozenset(combo)


def _key(subset) -> frozenset:
    if isinstance(subset, str):
        return frozenset(x.strip() for x in subset.split(",") if x.strip())
    return frozenset(subset)


class MechanismTable:
    """
    Probability of the proposition for every subset of known signals.

    Parameters
    ----------
    signals : sequence
        The signal set.
    values : mapping
        Keys are subsets (iterables, or comma-separated strings such as
        ``"Y,Z"``; ``""`` is the empty set), values in [0, 1]. Every subset
        must be present.
    """

    def __init__(self, signals: Sequence, values: Mapping):
        self.signals = tuple(signals)
        if len(set(self.signals)) != len(self.signals):
            raise StructureError("duplicate signal names")
        table = {}
        for k, v in values.items():
            key = _key(k)
            if not key <= set(self.signals):
                raise StructureError(f"unknown signals in {sorted(key)}")
            v = float(Fraction(v)) if isinstance(v, str) else float(v)
            if not 0.0 <= v <= 1.0:
                raise StructureError("mechanism values must lie in [0, 1]")
            table[key] = v
        missing = [s for s in _powerset(self.signals) if s not in table]
        if missing:
            raise StructureError(f"mechanism is not total; missing {sorted(missing[0])}")
        self._table = table

    def __call__(self, subset) -> float:
        return self._table[_key(subset)]

    def items(self):
        return self._table.items()

    def is_irrelevant(self, signal, tol: float = 1e-12) -> bool:
        """True if adding ``signal`` never changes the probability."""
        return all(abs(self(s | {signal}) - v) <= tol for s, v in self._table.items())

    @classmethod
    def random(cls, signals: Sequence, rng: Random, irrelevant: Iterable = ()) -> "MechanismTable":
        """Random table in which the listed signals are irrelevant."""
        irrelevant = set(irrelevant)
        relevant = [s for s in signals if s not in irrelevant]
        base = {k: round(rng.random(), 6) for k in _powerset(relevant)}
        values = {k: base[frozenset(k - irrelevant)] for k in _powerset(signals)}
        return cls(signals, values)


# ---------------------------------------------------------------- irrelevance


def induced_mechanism(mechanism: MechanismTable, endowment: frozenset, sub: frozenset) -> dict:
    """
    Mechanism an expert has on the sub-structure ``sub``.

    Learning ``G`` within ``sub`` means learning ``(endowment - sub) | G``
    within the full structure.
    """
    outside = frozenset(endowment) - sub
    return {g: mechanism(outside | g) for g in _powerset(sorted(sub, key=str))}


def verify_irrelevance_lemma(signals: Sequence, endowments: Mapping, mechanisms: Mapping,
                             base: Iterable, tol: float = 1e-12) -> dict:
    """
    Evaluate both sides of the irrelevance equivalence by enumeration.

    Parameters
    ----------
    signals : sequence
        Full signal set; must equal the union of the endowments.
    endowments : mapping
        Expert id to the signals that expert knows.
    mechanisms : mapping
        Expert id to that expert's :class:`MechanismTable` over ``signals``.
    base : iterable
        The sub-structure ``Gamma_0``, a subset of ``signals``.

    Returns
    -------
    dict
        ``st1``: induced mechanisms coincide across experts on every
        sub-structure between ``base`` and the full set. ``st2``: the full
        mechanisms coincide and every signal outside ``base`` is known to all
        experts or irrelevant.
    """
    full = frozenset(signals)
    base = frozenset(base)
    if len(full) > 12:
        raise StructureError("at most 12 signals are supported")
    if not base <= full:
        raise StructureError("base structure is not contained in the signal set")
    ends = {n: frozenset(e) for n, e in endowments.items()}
    if not ends:
        raise StructureError("no experts")
    if any(not e <= full for e in ends.values()):
        raise StructureError("endowment outside the signal set")
    if frozenset().union(*ends.values()) != full:
        raise StructureError("signal set must be the union of the endowments")
    if set(mechanisms) != set(ends):
        raise StructureError("one mechanism per expert is required")
    for m in mechanisms.values():
        if set(m.signals) != full:
            raise StructureError("mechanisms must be defined over the full signal set")

    experts = sorted(ends, key=str)
    extra = sorted(full - base, key=str)

    def same(a: dict, b: dict) -> bool:
        return all(abs(a[k] - b[k]) <= tol for k in a)

    st1 = True
    for r in range(len(extra) + 1):
        for add in itertools.combinations(extra, r):
            sub = base | frozenset(add)
            induced = [induced_mechanism(mechanisms[n], ends[n], sub) for n in experts]
            if not all(same(induced[0], x) for x in induced[1:]):
                st1 = False
                break
        if not st1:
            break

    first = mechanisms[experts[0]]
    st2 = all(same(dict(first.items()), dict(mechanisms[n].items())) for n in experts[1:])
    if st2:
        common = frozenset.intersection(*ends.values())
        st2 = all(sig in common or first.is_irrelevant(sig, tol) for sig in extra)
    return {"st1": st1, "st2": st2}


# ------------------------------------------------------------- learning trees


@dataclass
class TreeNode:
    """Node of a learning tree; ``known`` are the true signals received so far."""

    value: float
    known: frozenset
    signal: object = None
    bit: int | None = None
    prob: float | None = None
    children: list = field(default_factory=list)

    def as_nested(self):
        """``(value, [(signal, bit, prob, child), ...])`` for comparisons."""
        return (self.value, [(c.signal, c.bit, c.prob, c.as_nested()) for c in self.children])


def _grow(node: TreeNode, order: Sequence, mechanism: MechanismTable, truth: Mapping):
    if not order:
        return
    sig, rest = order[0], order[1:]
    for bit in (1, 0):
        if bit == truth[sig]:
            known = node.known | {sig}
            child = TreeNode(mechanism(known), known, sig, bit, 0.0)
        else:
            child = TreeNode(node.value, node.known, sig, bit, 1.0)
        _grow(child, rest, mechanism, truth)
        node.children.append(child)


def build_learning_trees(mechanism: MechanismTable, truth: Mapping) -> dict:
    """
    One binary tree per order in which the signals can be received.

    Children are listed with the signal equal to 1 first. The branch that
    agrees with the true assignment carries probability 0 and moves to the
    mechanism value of the enlarged knowledge; the other branch carries
    probability 1 and keeps the value.

    Returns
    -------
    dict
        Signal order (tuple) to root :class:`TreeNode`.
    """
    if len(mechanism.signals) > 8:
        raise StructureError("at most 8 signals are supported")
    if set(truth) != set(mechanism.signals) or any(b not in (0, 1) for b in truth.values()):
        raise StructureError("truth must assign 0 or 1 to every signal")
    trees = {}
    for order in itertools.permutations(mechanism.signals):
        root = TreeNode(mechanism(frozenset()), frozenset())
        _grow(root, order, mechanism, truth)
        trees[order] = root
    return trees


def is_martingale(node: TreeNode, tol: float = 1e-12) -> bool:
    """Every inner node equals the probability-weighted mean of its children."""
    if not node.children:
        return True
    if abs(sum(c.prob for c in node.children) - 1.0) > tol:
        return False
    mean = sum(c.prob * c.value for c in node.children)
    return abs(mean - node.value) <= tol and all(is_martingale(c, tol) for c in node.children)


def true_path(node: TreeNode) -> list[float]:
    """Values met when following the branches that agree with the truth."""
    out = [node.value]
    while node.children:
        node = next(c for c in node.children if c.prob == 0.0)
        out.append(node.value)
    return out


# ------------------------------------------------------------- Boolean market


def _exact(p) -> Fraction:
    if isinstance(p, Fraction):
        return p
    if isinstance(p, str):
        return Fraction(p)
    return Fraction(repr(float(p)))


def boolean_function(g, d: int) -> Callable[[tuple], int]:
    """
    Callable Boolean function from a name, a callable or a truth table.

    Names: ``"xor"`` (parity), ``"majority"``, ``"and"``, ``"or"``. A table is
    a list of length ``2**d`` indexed by the bits read as a binary number with
    the first bit most significant, or ``{"table": [...]}``.
    """
    if callable(g):
        return lambda s: int(g(tuple(s)))
    if isinstance(g, Mapping):
        g = g["table"]
    if isinstance(g, str):
        name = g.lower()
        funcs = {
            "xor": lambda s: sum(s) % 2,
            "majority": lambda s: int(2 * sum(s) > len(s)),
            "and": lambda s: int(all(s)),
            "or": lambda s: int(any(s)),
        }
        if name not in funcs:
            raise StructureError(f"unknown Boolean function {g!r}")
        return funcs[name]
    table = [int(v) for v in g]
    if len(table) != 2 ** d:
        raise StructureError("truth table must have 2**d entries")

    def from_table(s):
        return table[int("".join(str(int(b)) for b in s), 2)] if d else table[0]

    return from_table


@dataclass
class BooleanMarketSpec:
    """
    Experts, informed dimension, joint law over (proposition, signal bits),
    real state and optional Boolean function.

    ``measure`` maps ``(omega, s)`` with ``s`` a bit tuple to a probability.
    Probabilities are converted to exact fractions and renormalised.
    """

    n: int
    d: int
    measure: dict
    r: tuple
    g: Callable | None = None

    def __post_init__(self):
        if not (0 <= self.d <= self.n):
            raise StructureError("need 0 <= d <= n")
        exact = {}
        for (omega, s), p in self.measure.items():
            s = tuple(int(b) for b in s)
            if omega not in (0, 1) or len(s) != self.d:
                raise StructureError("worlds are (omega, bits) with d bits")
            p = _exact(p)
            if p < 0:
                raise StructureError("negative probability")
            if p > 0:
                exact[(omega, s)] = exact.get((omega, s), Fraction(0)) + p
        total = sum(exact.values())
        if total == 0 or abs(float(total) - 1.0) > 1e-9:
            raise StructureError("probabilities must sum to 1")
        self.measure = {k: v / total for k, v in exact.items()}
        self.r = tuple(int(b) for b in self.r)
        if len(self.r) != self.d:
            raise StructureError("real state must have d bits")
        if not any(s == self.r for (_, s) in self.measure):
            raise StructureError("the real state has probability zero")
        if self.g is not None:
            g = boolean_function(self.g, self.d) if not callable(self.g) else self.g
            self.g = g
            if any(omega != g(s) for (omega, s) in self.measure):
                raise StructureError("measure puts mass on omega != g(s)")

    @classmethod
    def from_json(cls, data) -> "BooleanMarketSpec":
        if isinstance(data, str):
            data = json.loads(data)
        measure = {}
        for row in data["P"]:
            key = (int(row["omega"]), tuple(int(b) for b in row["s"]))
            measure[key] = measure.get(key, 0) + _exact(row["p"])
        g = data.get("g")
        return cls(int(data["n"]), int(data["d"]), measure, tuple(data["r"]),
                   boolean_function(g, int(data["d"])) if g is not None else None)

    def states(self) -> set:
        return {s for (_, s) in self.measure}


@dataclass
class BooleanRound:
    k: int
    price: Fraction
    beliefs: list
    info_set: frozenset


@dataclass
class BooleanMarketResult:
    k_inf: int
    rounds: list
    final_info: frozenset
    consensus: bool

    @property
    def final_price(self) -> Fraction:
        return self.rounds[-1].price


def _posteriors(spec: BooleanMarketSpec, info: frozenset):
    """Per-bit conditional probabilities and the public posterior on ``info``."""
    num = [[Fraction(0), Fraction(0)] for _ in range(spec.d)]
    den = [[Fraction(0), Fraction(0)] for _ in range(spec.d)]
    pub_num = pub_den = Fraction(0)
    for (omega, s), p in spec.measure.items():
        if s not in info:
            continue
        pub_den += p
        pub_num += p * omega
        for i, b in enumerate(s):
            den[i][b] += p
            num[i][b] += p * omega
    cond = [[num[i][b] / den[i][b] if den[i][b] else None for b in (0, 1)] for i in range(spec.d)]
    return cond, pub_num / pub_den


def _beliefs(spec: BooleanMarketSpec, cond, public, s) -> list:
    informed = [cond[i][s[i]] for i in range(spec.d)]
    if any(b is None for b in informed):
        raise StructureError("conditioning on an event of probability zero")
    return informed + [public] * (spec.n - spec.d)


def run_boolean_market(spec: BooleanMarketSpec, max_rounds: int | None = None) -> BooleanMarketResult:
    """
    Rounds of trading at the mean belief until public information is stable.

    Round ``k`` prices the market at the mean of the experts' beliefs given
    the public set ``I^k`` (and their own bit, if informed). The next public
    set keeps the states that would have produced the same price.

    Returns
    -------
    BooleanMarketResult
        ``k_inf``, the round log, the final public set and whether all
        beliefs, the price and the public posterior coincide at the end.
    """
    info = frozenset(spec.states())
    rounds = []
    limit = max_rounds or len(info) + 1
    for k in range(1, limit + 1):
        cond, public = _posteriors(spec, info)
        beliefs = _beliefs(spec, cond, public, spec.r)
        price = sum(beliefs) / spec.n
        rounds.append(BooleanRound(k, price, beliefs, info))
        nxt = frozenset(s for s in info if sum(_beliefs(spec, cond, public, s)) / spec.n == price)
        if nxt == info:
            consensus = all(b == price for b in beliefs) and price == public
            return BooleanMarketResult(k, rounds, info, consensus)
        info = nxt
    raise StructureError("round limit reached without convergence")


def check_threshold_representation(g, d: int):
    """
    Weights ``(w0, w1, ..., wd)`` with ``g(s) = 1`` iff ``w0 + w.s >= 1``.

    Solves a linear program that maximises the margin below 1 on the zeros
    of ``g``. Returns ``None`` when no such weights exist.
    """
    if d > 5:
        raise NotImplementedError("threshold search is limited to d <= 5")
    g = boolean_function(g, d)
    cube = list(itertools.product((0, 1), repeat=d))
    # variables: w0, w1..wd, margin
    a_ub, b_ub = [], []
    for s in cube:
        row = [1.0, *s]
        if g(s):
            a_ub.append([-x for x in row] + [0.0])
            b_ub.append(-1.0)
        else:
            a_ub.append(row + [1.0])
            b_ub.append(1.0)
    c = [0.0] * (d + 1) + [-1.0]
    bounds = [(None, None)] * (d + 1) + [(None, 1.0)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0 or res.x[-1] <= 1e-9:
        return None
    w = tuple(float(x) for x in res.x[:-1])
    for s in cube:
        if (w[0] + sum(wi * si for wi, si in zip(w[1:], s)) >= 1 - 1e-9) != bool(g(s)):
            return None
    return w


def check_xor_condition(spec: BooleanMarketSpec) -> dict:
    """
    Whether both bit marginals equal 1/2, and the predicted outcome.

    Uniform marginals predict that prices never move (``"Stall"``);
    otherwise the market converges to the value of the function at the real
    state (``"Converge"``).
    """
    if spec.d != 2:
        raise StructureError("the parity condition needs exactly two bits")
    marg = [sum(p for (_, s), p in spec.measure.items() if s[i] == 1) for i in range(2)]
    uniform = all(m == Fraction(1, 2) for m in marg)
    return {"uniform_marginals": uniform, "predicted": "Stall" if uniform else "Converge"}
