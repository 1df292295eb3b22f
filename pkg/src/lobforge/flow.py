"""Markovian order-flow models: event rates, validation and sampling.

Every model exposes the same small interface:

* ``frame``: ``"absolute"`` (states are :class:`BookState`) or
  ``"centred"`` (states are :class:`CentredState`);
* ``rate(kind, price, state, size)``;
* ``events(state)``: all positive-rate events in (kind, price, size) order;
* ``perturb(state, event)`` and ``clear(raw)``: the flow step before and
  after matching.

Market orders are limit orders placed at the opposite best price (or at
the window edge for the centred Model 3), so four event kinds suffice.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .book import BookState
from .centred import CentredState, center, clear_centred, model3_pad
from .errors import BadParameter, DeadState
from .matching import Event, EventKind

GUARDS = {"none": kernels.GUARD_NONE, "strict": kernels.GUARD_STRICT, "wipeout": kernels.GUARD_WIPEOUT}

# Default intensity matrices for Model B; row = order size 1..6, column
# r + 1 for relative price r = 0..5 (r = 0 is the opposite best quote).
MODEL_B_ALPHA = [
    [0.74, 4.23, 1.96, 0.53, 0.35, 0.28],
    [0.19, 2.68, 0.67, 0.05, 0.03, 0.05],
    [0.10, 1.79, 0.28, 0.02, 0.01, 0.01],
    [0.04, 0.49, 0.10, 0.01, 0.01, 0.02],
    [0.03, 0.31, 0.04, 0.01, 0.01, 0.05],
    [0.08, 1.55, 0.37, 0.06, 0.09, 0.15],
]
MODEL_B_MU = [
    [4.08, 1.76, 0.44, 0.32, 0.27, 0.28],
    [2.78, 0.44, 0.04, 0.04, 0.04, 0.04],
    [1.76, 0.18, 0.02, 0.01, 0.01, 0.04],
    [0.48, 0.09, 0.01, 0.01, 0.02, 0.15],
    [0.29, 0.03, 0.01, 0.01, 0.05, 0.003],
    [1.60, 0.26, 0.03, 0.11, 0.15, 0.28],
]
MODEL_B_BETA = [
    [0.46, 3.95, 1.75, 0.35, 0.30, 0.39],
    [0.12, 2.65, 0.65, 0.07, 0.04, 0.05],
    [0.08, 1.48, 0.24, 0.02, 0.01, 0.01],
    [0.02, 0.49, 0.09, 0.01, 0.01, 0.01],
    [0.018, 0.30, 0.04, 0.01, 0.02, 0.04],
    [0.05, 1.26, 0.37, 0.09, 0.11, 0.15],
]
MODEL_B_GAMMA = [
    [3.72, 1.49, 0.41, 0.28, 0.34, 0.42],
    [2.73, 0.44, 0.06, 0.05, 0.05, 0.05],
    [1.41, 0.17, 0.02, 0.01, 0.01, 0.02],
    [0.47, 0.08, 0.01, 0.01, 0.02, 0.16],
    [0.27, 0.03, 0.01, 0.01, 0.04, 0.002],
    [1.29, 0.28, 0.05, 0.12, 0.15, 0.28],
]
MODEL_A_RATES = {"limit_buy": 11.6, "limit_sell": 10.7, "cancel_buy": 10.8, "cancel_sell": 9.7}


@dataclass(frozen=True)
class SampledEvent:
    wait: float
    event: Event


def _is_buy(kind: int) -> bool:
    return kind in (kernels.LIMIT_BUY, kernels.CANCEL_BUY)


def _is_cancel(kind: int) -> bool:
    return kind in (kernels.CANCEL_BUY, kernels.CANCEL_SELL)


class IntensityModel:
    """Base class. Subclasses implement :meth:`rate` and optionally :meth:`events`."""

    frame = "absolute"
    max_size = 1
    bound_M: float | None = None
    bound_alpha: float = 2.0

    def rate(self, kind: int, price: int, state, size: int) -> float:
        raise NotImplementedError

    def prices(self, state) -> range:
        if self.frame == "centred":
            dp = state.d_prime
            return range(-dp, dp + 1)
        return range(1, state.d + 1)

    def events(self, state) -> list[tuple[Event, float]]:
        out = []
        for kind in EventKind:
            for k in self.prices(state):
                for z in range(1, self.max_size + 1):
                    r = self.rate(int(kind), k, state, z)
                    if r > 0.0:
                        out.append((Event(kind, k, z), float(r)))
        return out

    def total_rate(self, state) -> float:
        return math.fsum(r for _, r in self.events(state))

    # flow step ------------------------------------------------------------

    def perturb(self, state, event: Event):
        if self.frame == "centred":
            dp = state.d_prime
            buy = state.buy.copy()
            sell = state.sell.copy()
            kernels.perturb(buy, sell, int(event.kind), event.price + dp + 1, event.size)
            return CentredState(buy, sell, state.p)
        buy, sell = state.arrays()
        kernels.perturb(buy, sell, int(event.kind), event.price, event.size)
        return BookState(buy, sell)

    def clear(self, raw):
        if self.frame == "centred":
            return clear_centred(raw)
        buy, sell = kernels.clear(raw.buy, raw.sell)
        return BookState._trusted(buy, sell)

    def successor(self, state, event: Event):
        if self.frame == "absolute":
            buy, sell = kernels.step(state.buy, state.sell, int(event.kind), event.price, event.size)
            return BookState._trusted(buy, sell)
        return self.clear(self.perturb(state, event))

    def to_dict(self) -> dict:
        raise BadParameter(f"{type(self).__name__} has no file representation")


class TableModel(IntensityModel):
    """Rates read from a (kind, size, column) table.

    ``anchor[kind]`` chooses the column: absolute price ``k - 1`` or the
    distance to the relevant best quote (limit buy ``a - k``, limit sell
    ``k - b``, cancel buy ``b - k``, cancel sell ``k - a``). ``gate`` codes
    compare the queue at ``k`` against ``cap``; ``prop`` multiplies a rate by
    the queue. ``guard`` is the size guard: ``"strict"`` zeroes every event
    with ``z >= min(B(1), S(d))``; ``"wipeout"`` only events whose matched
    result would leave a side empty; ``"none"`` disables it.
    """

    def __init__(self, rates, anchor, gate, cap: int = 0, prop=(0, 0, 0, 0), guard: str = "strict",
                 tag: str = "table", params: dict | None = None):
        arr = np.ascontiguousarray(rates, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != 4:
            raise BadParameter("rate table must have shape (4, m, columns)")
        if not np.all(np.isfinite(arr)) or (arr < 0).any():
            raise BadParameter("rates must be finite and non-negative")
        if guard not in GUARDS:
            raise BadParameter(f"guard must be one of {sorted(GUARDS)}")
        self.rates = arr
        self.anchor = np.asarray(anchor, dtype=np.int64)
        self.gate = np.asarray(gate, dtype=np.int64)
        self.prop = np.asarray(prop, dtype=np.int64)
        self.cap = int(cap)
        self.guard = guard
        self.guard_code = GUARDS[guard]
        self.max_size = arr.shape[1]
        self.tag = tag
        self.params = dict(params or {})
        arrivals = arr[:2].max(axis=(0, 2))
        self.bound_alpha = 2.0
        self.bound_M = float(max(arrivals[z] * (2 + z) ** 2 for z in range(self.max_size))) if arr.size else 0.0

    def kernel_args(self) -> tuple:
        return (self.rates, self.anchor, self.gate, self.cap, self.prop, self.guard_code)

    def rate(self, kind, price, state, size):
        d = state.d
        if not 1 <= price <= d:
            return 0.0
        ask, bid = kernels.ask_bid(state.buy, state.sell)
        B, S = kernels.cumulative(state.buy, state.sell)
        return float(kernels.table_rate(int(kind), int(price), int(size), state.buy, state.sell, ask, bid, B, S,
                                        self.rates, self.anchor, self.gate, self.cap, self.prop, self.guard_code))

    def event_arrays(self, state) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        n_max = 4 * state.d * self.max_size
        kinds = np.empty(n_max, dtype=np.int64)
        prices = np.empty(n_max, dtype=np.int64)
        sizes = np.empty(n_max, dtype=np.int64)
        rates = np.empty(n_max, dtype=np.float64)
        n = kernels.table_events(state.buy, state.sell, *self.kernel_args(), kinds, prices, sizes, rates)
        return kinds[:n], prices[:n], sizes[:n], rates[:n]

    def events(self, state):
        kinds, prices, sizes, rates = self.event_arrays(state)
        return [(Event(EventKind(int(k)), int(p), int(z)), float(r)) for k, p, z, r in zip(kinds, prices, sizes, rates)]

    def with_guard(self, guard: str) -> TableModel:
        return TableModel(self.rates, self.anchor, self.gate, self.cap, self.prop, guard, self.tag, self.params)

    def to_dict(self) -> dict:
        if self.tag in ("A", "B", "model1"):
            return {"kind": self.tag, "guard": self.guard, **self.params}
        return {
            "kind": "table",
            "guard": self.guard,
            "rates": self.rates.tolist(),
            "anchor": self.anchor.tolist(),
            "gate": self.gate.tolist(),
            "prop": self.prop.tolist(),
            "cap": self.cap,
        }


class CappedModel(IntensityModel):
    """Wrap a model so that no queue ever exceeds ``cap`` before matching.

    Used to obtain finite truncations of the state space.
    """

    def __init__(self, base: IntensityModel, cap: int):
        self.base = base
        self.cap = int(cap)
        self.frame = base.frame
        self.max_size = base.max_size

    def _fits(self, state, kind: int, price: int, size: int) -> bool:
        if _is_cancel(kind):
            return True
        idx = price - 1 if self.frame == "absolute" else price + state.d_prime
        side = state.buy if _is_buy(kind) else state.sell
        return side[idx] + size <= self.cap

    def rate(self, kind, price, state, size):
        if not self._fits(state, kind, price, size):
            return 0.0
        return self.base.rate(kind, price, state, size)

    def events(self, state):
        return [(ev, r) for ev, r in self.base.events(state) if self._fits(state, int(ev.kind), ev.price, ev.size)]

    def successor(self, state, event):
        return self.base.successor(state, event)

    def clear(self, raw):
        return self.base.clear(raw)


class CallableModel(IntensityModel):
    """Rates given by a Python function ``fn(kind, price, state, size)``.

    The size guard and the cancellation bound are applied on top of ``fn``
    so the result always satisfies the standing assumptions.
    """

    def __init__(self, fn: Callable, max_size: int, frame: str = "absolute", guard: str = "strict"):
        if guard not in GUARDS:
            raise BadParameter(f"guard must be one of {sorted(GUARDS)}")
        self.fn = fn
        self.max_size = int(max_size)
        self.frame = frame
        self.guard = guard

    def rate(self, kind, price, state, size):
        if not 1 <= size <= self.max_size:
            return 0.0
        if _is_cancel(kind):
            idx = price - 1 if self.frame == "absolute" else price + state.d_prime
            side = state.buy if kind == kernels.CANCEL_BUY else state.sell
            if size > side[idx]:
                return 0.0
        if self.guard == "strict" and size >= min(int(state.buy.sum()), int(state.sell.sum())):
            return 0.0
        r = float(self.fn(int(kind), int(price), state, int(size)))
        if self.guard == "wipeout" and r > 0.0:
            nxt = self.perturb(state, Event(EventKind(kind), price, size))
            cb, cs = kernels.clear(nxt.buy, nxt.sell)
            if cb.sum() == 0 or cs.sum() == 0:
                return 0.0
        return r


class Model3(IntensityModel):
    """Centred model with rates relative to the opposite best quote up to K ticks.

    Limit buys at a - i and limit sells at b + i (i = 1..K), market orders
    at the window edges, and depth-proportional cancellations within the
    same bands. After matching, levels beyond the band are reset to the
    default depths and the book is re-centred if that moved a best quote.
    """

    frame = "centred"
    max_size = 1
    pads_after_clearing = True

    def __init__(self, limit_buy, limit_sell, market_buy: float, market_sell: float, cancel_buy, cancel_sell,
                 K: int, a_inf: int, b_inf: int):
        self.K = int(K)
        arrays = [np.asarray(v, dtype=np.float64) for v in (limit_buy, limit_sell, cancel_buy, cancel_sell)]
        for arr in arrays:
            if arr.shape != (self.K,) or (arr < 0).any():
                raise BadParameter(f"band rates need K={self.K} non-negative entries")
        if market_buy < 0 or market_sell < 0:
            raise BadParameter("market order rates must be non-negative")
        if a_inf < 1 or b_inf < 1:
            raise BadParameter("default depths must be at least 1")
        self.limit_buy, self.limit_sell, self.cancel_buy, self.cancel_sell = arrays
        self.market_buy = float(market_buy)
        self.market_sell = float(market_sell)
        self.a_inf = int(a_inf)
        self.b_inf = int(b_inf)
        self.bound_M = float(max(arrays[0].max(initial=0), arrays[1].max(initial=0), market_buy, market_sell) * 4)

    def rate(self, kind, price, state: CentredState, size):
        dp = state.d_prime
        if size != 1 or not -dp <= price <= dp:
            return 0.0
        if size >= min(int(state.buy.sum()), int(state.sell.sum())):
            return 0.0
        a, b = state.ask_bid()
        K = self.K
        if kind == kernels.LIMIT_BUY:
            if price == dp:
                return self.market_buy
            return float(self.limit_buy[a - price - 1]) if a - K <= price < a else 0.0
        if kind == kernels.LIMIT_SELL:
            if price == -dp:
                return self.market_sell
            return float(self.limit_sell[price - b - 1]) if b < price <= b + K else 0.0
        if kind == kernels.CANCEL_BUY:
            depth = int(state.buy[price + dp])
            if depth >= 1 and a - K <= price < a:
                return float(self.cancel_buy[a - price - 1]) * depth
            return 0.0
        depth = int(state.sell[price + dp])
        if depth >= 1 and b < price <= b + K:
            return float(self.cancel_sell[price - b - 1]) * depth
        return 0.0

    def clear(self, raw: CentredState) -> CentredState:
        state = model3_pad(clear_centred(raw), min(self.K, 2 * raw.d_prime), self.a_inf, self.b_inf)
        for _ in range(2 * raw.d_prime + 2):
            if state.is_valid():
                return state
            moved = center(state.buy, state.sell, state.p)
            state = model3_pad(moved, min(self.K, 2 * raw.d_prime), self.a_inf, self.b_inf)
        return state

    def successor(self, state, event):
        return self.clear(self.perturb(state, event))

    def to_dict(self) -> dict:
        return {
            "kind": "model3",
            "limit_buy": self.limit_buy.tolist(),
            "limit_sell": self.limit_sell.tolist(),
            "market_buy": self.market_buy,
            "market_sell": self.market_sell,
            "cancel_buy": self.cancel_buy.tolist(),
            "cancel_sell": self.cancel_sell.tolist(),
            "K": self.K,
            "a_inf": self.a_inf,
            "b_inf": self.b_inf,
        }


# -- builders ---------------------------------------------------------------


def build_model1(beta: float, alpha: float, mu: float, theta, d: int, guard: str = "strict") -> TableModel:
    """Unit-size flow with power-law limit rates, market orders and distance-based cancellations.

    ``theta`` is either a callable of the distance i = 1..d or a sequence
    holding theta(1), ..., theta(d).
    """
    if beta <= 0 or mu <= 0:
        raise BadParameter("beta and mu must be positive")
    if d < 1:
        raise BadParameter("d must be positive")
    th = np.array([theta(i) for i in range(1, d + 1)] if callable(theta) else theta, dtype=np.float64)
    if th.shape != (d,) or (th < 0).any():
        raise BadParameter("theta needs d non-negative values")
    cols = d + 1
    rates = np.zeros((4, 1, cols))
    dist = np.arange(1, cols, dtype=np.float64)
    for kind in (kernels.LIMIT_BUY, kernels.LIMIT_SELL):
        rates[kind, 0, 0] = mu
        rates[kind, 0, 1:] = beta / dist**alpha
    for kind in (kernels.CANCEL_BUY, kernels.CANCEL_SELL):
        rates[kind, 0, 1:] = th
    params = {"beta": beta, "alpha": alpha, "mu": mu, "theta": th.tolist(), "d": d}
    return TableModel(rates, [kernels.ANCHOR_RELATIVE] * 4, [kernels.GATE_NONE] * 4, 0, (0, 0, 1, 1), guard,
                      "model1", params)


def build_model2(limit_buy, limit_sell, cancel_buy, cancel_sell, m: int | None = None,
                 guard: str = "strict") -> IntensityModel:
    """Sized flow. Each argument is an (m, d) array of rates by size and price,
    or a callable ``(size, price, state) -> rate``."""
    parts = (limit_buy, limit_sell, cancel_buy, cancel_sell)
    if all(not callable(p) for p in parts):
        arr = np.stack([np.asarray(p, dtype=np.float64) for p in parts])
        if arr.ndim != 3:
            raise BadParameter("Model 2 tables must be (m, d) arrays")
        if m is not None and arr.shape[1] != m:
            raise BadParameter("table rows must match m")
        return TableModel(arr, [kernels.ANCHOR_ABSOLUTE] * 4, [kernels.GATE_NONE] * 4, 0, (0, 0, 0, 0), guard,
                          "model2")
    if m is None:
        raise BadParameter("m is required for callable Model 2 rates")

    def fn(kind, price, state, size):
        part = parts[kind]
        if callable(part):
            return part(size, price, state)
        return float(np.asarray(part)[size - 1, price - 1])

    return CallableModel(fn, m, "absolute", guard)


def build_model3(limit_buy, limit_sell, market_buy, market_sell, cancel_buy, cancel_sell, K, a_inf, b_inf) -> Model3:
    return Model3(limit_buy, limit_sell, market_buy, market_sell, cancel_buy, cancel_sell, K, a_inf, b_inf)


def build_modelAB(kind: str, n: int, matrices: dict | None = None, d: int = 6, guard: str = "strict",
                  rates: dict | None = None) -> TableModel:
    """The two empirical models: constant unit-size rates (``"A"``) or
    size/distance matrices (``"B"``), both capped at queue size ``n``."""
    if n < 1:
        raise BadParameter("n must be at least 1")
    kind = kind.upper()
    if kind == "A":
        r = dict(MODEL_A_RATES)
        r.update(rates or {})
        table = np.zeros((4, 1, d))
        for name, code in (("limit_buy", 0), ("limit_sell", 1), ("cancel_buy", 2), ("cancel_sell", 3)):
            if r[name] < 0:
                raise BadParameter("rates must be non-negative")
            table[code, 0, :] = r[name]
        gates = [kernels.GATE_BELOW_CAP, kernels.GATE_BELOW_CAP, kernels.GATE_AT_LEAST_CAP, kernels.GATE_AT_LEAST_CAP]
        params = {"n": n, "d": d, "rates": r}
        return TableModel(table, [kernels.ANCHOR_ABSOLUTE] * 4, gates, n, (0, 0, 0, 0), guard, "A", params)
    if kind == "B":
        mats = {"alpha": MODEL_B_ALPHA, "mu": MODEL_B_MU, "beta": MODEL_B_BETA, "gamma": MODEL_B_GAMMA}
        mats.update(matrices or {})
        arrs = {k: np.asarray(v, dtype=np.float64) for k, v in mats.items()}
        shape = arrs["alpha"].shape
        for name, arr in arrs.items():
            if arr.ndim != 2 or arr.shape != shape or (arr < 0).any():
                raise BadParameter(f"matrix {name} must be non-negative with a common 2-d shape")
        table = np.stack([arrs["beta"], arrs["alpha"], arrs["gamma"], arrs["mu"]])
        gates = [kernels.GATE_BELOW_CAP_MINUS_SIZE, kernels.GATE_BELOW_CAP_MINUS_SIZE, kernels.GATE_NONE,
                 kernels.GATE_NONE]
        params = {"n": n, "d": d, "matrices": {k: v.tolist() for k, v in arrs.items()}}
        return TableModel(table, [kernels.ANCHOR_RELATIVE] * 4, gates, n, (0, 0, 0, 0), guard, "B", params)
    raise BadParameter(f"unknown empirical model kind {kind!r}")


# -- validation and sampling -----------------------------------------------


@dataclass
class ValidationReport:
    checked_states: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"checked_states": self.checked_states, "ok": self.ok, "violations": self.violations}


def _state_totals(state) -> tuple[int, int]:
    return int(state.buy.sum()), int(state.sell.sum())


def validate(model: IntensityModel, states: Sequence, M: float | None = None, alpha: float | None = None,
             limit: int = 100) -> ValidationReport:
    """Check the three standing assumptions on every given state.

    (i) no event with size >= min(B(1), S(d)); (ii) arrival rates below
    M / (1 + z)^alpha; (iii) no cancellation larger than its queue. Sizes
    1..m+2 are probed. At most ``limit`` violations are recorded.
    """
    M = model.bound_M if M is None else M
    alpha = model.bound_alpha if alpha is None else alpha
    report = ValidationReport()
    for state in states:
        report.checked_states += 1
        tb, ts = _state_totals(state)
        for kind in EventKind:
            for k in model.prices(state):
                for z in range(1, model.max_size + 3):
                    r = model.rate(int(kind), k, state, z)
                    if r <= 0.0:
                        continue
                    where = {"state": state.to_dict(), "kind": kind.label, "price": k, "size": z, "rate": r}
                    if z >= min(tb, ts):
                        report.violations.append({"clause": "i", **where})
                    if kind in (EventKind.LIMIT_BUY, EventKind.LIMIT_SELL) and M is not None:
                        if r > M / (1 + z) ** alpha * (1 + 1e-12):
                            report.violations.append({"clause": "ii", **where})
                    if kind in (EventKind.CANCEL_BUY, EventKind.CANCEL_SELL):
                        idx = k - 1 if model.frame == "absolute" else k + state.d_prime
                        side = state.buy if kind == EventKind.CANCEL_BUY else state.sell
                        if z > side[idx]:
                            report.violations.append({"clause": "iii", **where})
                    if len(report.violations) >= limit:
                        return report
    return report


def total_rate(model: IntensityModel, state) -> float:
    return model.total_rate(state)


def sample_next_event(model: IntensityModel, state, rng: np.random.Generator) -> SampledEvent:
    """Exponential wait at the total rate, then one event by cumulative scan."""
    evs = model.events(state)
    rates = np.array([r for _, r in evs], dtype=np.float64)
    total = 0.0
    for r in rates:  # sequential, to match the compiled simulator bit for bit
        total += r
    if total <= 0.0:
        raise DeadState(f"no event can occur in {state}")
    wait = float(rng.exponential(1.0 / total))
    j = int(kernels.pick(rates, rates.size, rng.random() * total))
    return SampledEvent(wait, evs[j][0])


# -- model files ------------------------------------------------------------


def model_from_dict(payload: dict) -> IntensityModel:
    kind = str(payload.get("kind", "")).lower()
    guard = payload.get("guard", "strict")
    if kind in ("a", "b"):
        return build_modelAB(kind, int(payload.get("n", 10)), payload.get("matrices"), int(payload.get("d", 6)),
                             guard, payload.get("rates"))
    if kind == "model1":
        return build_model1(payload["beta"], payload["alpha"], payload["mu"], payload["theta"], int(payload["d"]),
                            guard)
    if kind == "model2":
        return build_model2(payload["limit_buy"], payload["limit_sell"], payload["cancel_buy"],
                            payload["cancel_sell"], guard=guard)
    if kind == "model3":
        keys = ("limit_buy", "limit_sell", "market_buy", "market_sell", "cancel_buy", "cancel_sell", "K", "a_inf",
                "b_inf")
        return build_model3(*(payload[k] for k in keys))
    if kind == "table":
        return TableModel(payload["rates"], payload["anchor"], payload["gate"], payload.get("cap", 0),
                          payload.get("prop", (0, 0, 0, 0)), guard)
    raise BadParameter(f"unknown model kind {payload.get('kind')!r}")


def read_model(path: str | Path) -> IntensityModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def write_model(model: IntensityModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n", encoding="utf-8")
