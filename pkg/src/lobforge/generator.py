"""Generators of the order-flow and order-book chains, their adjoints and finite truncations."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy.linalg import expm

from .book import BookState, ask_bid, both_sides, is_admissible, profile
from .centred import enumerate_centred_preimage
from .errors import BudgetExceeded, PreconditionViolated
from .flow import IntensityModel
from .matching import EventKind


class StateFunction:
    """Real function of a state: explicit values, else ``fn(state)``, else ``default``."""

    def __init__(self, values: dict | None = None, default: float = 0.0, fn: Callable | None = None):
        if not math.isfinite(default):
            raise ValueError("default must be finite")
        self.values = dict(values or {})
        self.default = float(default)
        self.fn = fn

    def __call__(self, state) -> float:
        v = self.values.get(state)
        if v is not None:
            return v
        if self.fn is not None:
            return float(self.fn(state))
        return self.default

    def sup_norm(self) -> float:
        vals = [abs(v) for v in self.values.values()]
        if self.fn is None:
            vals.append(abs(self.default))
        return max(vals, default=0.0)

    def compose(self, g: Callable) -> StateFunction:
        """The function state -> self(g(state))."""
        return StateFunction(fn=lambda s: self(g(s)))


class StateMeasure:
    """Finitely supported (signed, for adjoint outputs) measure on states."""

    def __init__(self, masses: dict | None = None):
        self.masses: dict = {}
        for s, w in (masses or {}).items():
            self.add(s, w)

    def add(self, state, mass: float) -> None:
        self.masses[state] = self.masses.get(state, 0.0) + float(mass)

    def __getitem__(self, state) -> float:
        return self.masses.get(state, 0.0)

    def items(self):
        return self.masses.items()

    def total(self) -> float:
        return math.fsum(self.masses.values())

    def integrate(self, f: Callable) -> float:
        return math.fsum(w * f(s) for s, w in self.masses.items())

    def support(self) -> list:
        return [s for s, w in self.masses.items() if w != 0.0]


@dataclass
class TransitionDistribution:
    """Cleared successors of one state with merged rates, in first-seen order."""

    state: object
    successors: list = field(default_factory=list)
    rates: list = field(default_factory=list)
    events: list = field(default_factory=list)

    @property
    def total(self) -> float:
        return math.fsum(self.rates)

    def as_dict(self) -> dict:
        return dict(zip(self.successors, self.rates))


def apply_Lo(model: IntensityModel, f: Callable, state) -> float:
    """Order-flow generator: sum of rate * [f(state + event) - f(state)], no matching."""
    fx = f(state)
    return math.fsum(r * (f(model.perturb(state, ev)) - fx) for ev, r in model.events(state))


def apply_L(model: IntensityModel, f: Callable, state) -> float:
    """Book generator through the flow: L_o applied to f composed with clearing, at ``state``."""
    fx = f(state)
    return math.fsum(r * (f(model.clear(model.perturb(state, ev))) - fx) for ev, r in model.events(state))


def _explicit_successor(state: BookState, prof, ask: int, bid: int, kind: int, k: int, z: int) -> BookState:
    # closed-form result of one event plus matching on a two-sided admissible book
    buy = state.buy.copy()
    sell = state.sell.copy()
    B, S = prof.cum_buy_above, prof.cum_sell_below
    if kind == EventKind.LIMIT_BUY:
        if k < ask:
            buy[k - 1] += z
            return BookState._trusted(buy, sell)
        j = prof.S_inv(z)
        if k < j:
            buy[k - 1] += z - S[k - 1]
            sell[:k] = 0
        else:
            sell[: j - 1] = 0
            sell[j - 1] = S[j - 1] - z
        return BookState._trusted(buy, sell)
    if kind == EventKind.LIMIT_SELL:
        if k > bid:
            sell[k - 1] += z
            return BookState._trusted(buy, sell)
        j = prof.B_inv(z)
        if k > j:
            sell[k - 1] += z - B[k - 1]
            buy[k - 1 :] = 0
        else:
            buy[j:] = 0
            buy[j - 1] = B[j - 1] - z
        return BookState._trusted(buy, sell)
    if kind == EventKind.CANCEL_BUY:
        buy[k - 1] -= z
    else:
        sell[k - 1] -= z
    return BookState._trusted(buy, sell)


def apply_L_explicit(model: IntensityModel, f: Callable, state: BookState) -> float:
    """Book generator from the closed-form successors, without calling the clearing map.

    The sum splits into limit buys below the ask, buys partially through
    the sell side, buys exhausting it up to S^-1(z), the mirrored sell
    terms and the two cancellation terms.
    """
    if model.frame != "absolute":
        raise PreconditionViolated("the explicit form is for fixed-coordinate models")
    if not (is_admissible(state) and both_sides(state)):
        raise PreconditionViolated("explicit generator needs an admissible two-sided book")
    prof = profile(state)
    ask, bid = ask_bid(state)
    fx = f(state)
    terms = []
    for ev, r in model.events(state):
        nxt = _explicit_successor(state, prof, ask, bid, int(ev.kind), ev.price, ev.size)
        terms.append(r * (f(nxt) - fx))
    return math.fsum(terms)


def transition_distribution(model: IntensityModel, state) -> TransitionDistribution:
    td = TransitionDistribution(state)
    index = {}
    for ev, r in model.events(state):
        nxt = model.successor(state, ev)
        j = index.get(nxt)
        if j is None:
            index[nxt] = len(td.successors)
            td.successors.append(nxt)
            td.rates.append(r)
            td.events.append([ev])
        else:
            td.rates[j] += r
            td.events[j].append(ev)
    return td


def apply_L_adjoint(model: IntensityModel, mu: StateMeasure, method: str = "push", m: int | None = None,
                    max_exec: int | None = None) -> StateMeasure:
    """Forward-equation action L* mu.

    ``"push"`` moves mass along the cleared transitions. ``"compose"``
    restricts, pushes along raw flow events, then maps the flow-space
    measure onto books: by clearing each configuration (fixed frame) or,
    for centred models, by summing over the enumerated pre-image of each
    target, which cross-checks the pre-image enumeration.
    """
    out = StateMeasure()
    if method == "push":
        for x, w in mu.items():
            if w == 0.0:
                continue
            td = transition_distribution(model, x)
            out.add(x, -td.total * w)
            for y, r in zip(td.successors, td.rates):
                out.add(y, r * w)
        return out
    if method != "compose":
        raise ValueError(f"unknown adjoint method {method!r}")
    flow_measure = StateMeasure()
    for x, w in mu.items():
        if w == 0.0:
            continue
        evs = model.events(x)
        flow_measure.add(x, -math.fsum(r for _, r in evs) * w)
        for ev, r in evs:
            flow_measure.add(model.perturb(x, ev), r * w)
    if model.frame == "absolute":
        for y, w in flow_measure.items():
            out.add(model.clear(y), w)
        return out
    if getattr(getattr(model, "base", model), "pads_after_clearing", False):
        raise PreconditionViolated("pre-image composition needs plain centred clearing (no padding)")
    m = m if m is not None else model.max_size
    max_exec = max_exec if max_exec is not None else m
    targets = []
    seen = set()
    for y in flow_measure.masses:
        t = model.clear(y)
        if t not in seen:
            seen.add(t)
            targets.append(t)
    covered = 0
    for t in targets:
        for z in enumerate_centred_preimage(t, m=m, max_exec=max_exec):
            w = flow_measure.masses.get(z)
            if w is not None:
                out.add(t, w)
                covered += 1
    if covered != len(flow_measure.masses):
        raise BudgetExceeded("pre-image enumeration bounds too small to cover the flow measure")
    return out


# -- finite truncations -----------------------------------------------------


@dataclass
class Truncation:
    """Finite closed set of states with its dense generator.

    ``matrix[i, j]`` is the jump rate from ``states[i]`` to ``states[j]``
    (diagonal: minus the total), so ``(matrix @ f)[i] = Lf(states[i])``.
    """

    states: list
    index: dict
    matrix: np.ndarray

    def vector(self, f: Callable) -> np.ndarray:
        return np.array([f(s) for s in self.states], dtype=np.float64)

    def write_edges(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["src", "dst", "rate"])
            n = len(self.states)
            for i in range(n):
                for j in range(n):
                    if i != j and self.matrix[i, j] != 0.0:
                        w.writerow([i, j, repr(float(self.matrix[i, j]))])

    def write_states(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "state"])
            for i, s in enumerate(self.states):
                w.writerow([i, repr(s)])


def enumerate_truncation(model: IntensityModel, seeds: Iterable, max_states: int = 5000) -> Truncation:
    """Breadth-first closure of ``seeds`` under the cleared transitions.

    Use a :class:`~lobforge.flow.CappedModel` (or any model with bounded
    reach) so the closure is finite; exceeding ``max_states`` raises
    :class:`BudgetExceeded`.
    """
    states = []
    index = {}
    rows = []
    queue = []
    for s in seeds:
        if s not in index:
            index[s] = len(states)
            states.append(s)
            queue.append(s)
    head = 0
    while head < len(queue):
        x = queue[head]
        head += 1
        td = transition_distribution(model, x)
        rows.append(td)
        for y in td.successors:
            if y not in index:
                if len(states) >= max_states:
                    raise BudgetExceeded(f"closure exceeds {max_states} states")
                index[y] = len(states)
                states.append(y)
                queue.append(y)
    n = len(states)
    Q = np.zeros((n, n))
    for td in rows:
        i = index[td.state]
        for y, r in zip(td.successors, td.rates):
            Q[i, index[y]] += r
        Q[i, i] -= td.total
    return Truncation(states, index, Q)


def box_states(d: int, cap: int) -> list[BookState]:
    """Every fixed-coordinate configuration with all depths in 0..cap."""
    return [BookState(v[:d], v[d:]) for v in itertools.product(range(cap + 1), repeat=2 * d)]


@dataclass
class SplittingSystem:
    """Dense operators on a depth box: flow space E and admissible books L.

    ``L`` and ``Lo`` act on column vectors of function values; ``C`` maps
    functions on L to functions on E (composition with clearing) and
    ``Xi`` restricts functions on E to L.
    """

    book_states: list
    flow_states: list
    L: np.ndarray
    Lo: np.ndarray
    C: np.ndarray
    Xi: np.ndarray

    def split_step(self, dt: float, sign: float = -1.0) -> np.ndarray:
        return self.Xi @ expm(sign * dt * self.Lo) @ self.C

    def exact_step(self, dt: float, sign: float = -1.0) -> np.ndarray:
        return expm(sign * dt * self.L)

    def splitting_error(self, T: float, dt: float, sign: float = -1.0) -> float:
        """Sup-norm (max row sum) distance between the exact and split propagators at time T."""
        n = int(round(T / dt))
        if not math.isclose(n * dt, T, rel_tol=1e-9):
            raise ValueError("T must be a multiple of dt")
        exact = np.linalg.matrix_power(self.exact_step(dt, sign), n)
        split = np.linalg.matrix_power(self.split_step(dt, sign), n)
        return float(np.abs(exact - split).sum(axis=1).max())


def splitting_system(model: IntensityModel, d: int, cap: int) -> SplittingSystem:
    """Build L, L_o, C~ and Xi on the box of depths <= cap.

    ``model`` must keep raw depths within the box (wrap it in a
    CappedModel with the same cap).
    """
    flow_states = box_states(d, cap)
    e_index = {s: i for i, s in enumerate(flow_states)}
    book_states = [s for s in flow_states if is_admissible(s)]
    l_index = {s: i for i, s in enumerate(book_states)}
    ne, nl = len(flow_states), len(book_states)
    Lo = np.zeros((ne, ne))
    for i, x in enumerate(flow_states):
        for ev, r in model.events(x):
            j = e_index.get(model.perturb(x, ev))
            if j is None:
                raise PreconditionViolated(f"{ev} leaves the depth box from {x}")
            Lo[i, j] += r
            Lo[i, i] -= r
    C = np.zeros((ne, nl))
    for i, y in enumerate(flow_states):
        C[i, l_index[model.clear(y)]] = 1.0
    Xi = np.zeros((nl, ne))
    for i, x in enumerate(book_states):
        Xi[i, e_index[x]] = 1.0
    L = np.zeros((nl, nl))
    for i, x in enumerate(book_states):
        td = transition_distribution(model, x)
        for y, r in zip(td.successors, td.rates):
            L[i, l_index[y]] += r
        L[i, i] -= td.total
    return SplittingSystem(book_states, flow_states, L, Lo, C, Xi)


def pairing(f: Callable, mu: StateMeasure) -> float:
    return mu.integrate(f)


__all__ = [
    "StateFunction",
    "StateMeasure",
    "TransitionDistribution",
    "Truncation",
    "SplittingSystem",
    "apply_Lo",
    "apply_L",
    "apply_L_explicit",
    "apply_L_adjoint",
    "transition_distribution",
    "enumerate_truncation",
    "box_states",
    "splitting_system",
    "pairing",
]
