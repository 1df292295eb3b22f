"""Fixed-coordinate book states and their per-state statistics.

Prices are 1-based in every public function. An empty sell side has ask
``d + 1`` and an empty buy side has bid ``0``; both sentinels compare like
the usual "infinity" and "zero" conventions for empty supports.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import kernels
from .errors import BadParameter


def _as_side(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise BadParameter(f"{name} must be one-dimensional")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise BadParameter(f"{name} must hold integers")
    out = np.array(arr, dtype=np.int64)
    out.setflags(write=False)
    return out


class BookState:
    """Aggregate depth per price: buy side X+ and sell side X-.

    Instances are immutable and hashable so they can key dictionaries
    (state functions, measures, transition tables).
    """

    __slots__ = ("buy", "sell", "_key")

    def __init__(self, buy, sell):
        b = _as_side(buy, "buy")
        s = _as_side(sell, "sell")
        if b.shape != s.shape:
            raise BadParameter(f"sides differ in length: {b.size} vs {s.size}")
        if b.size < 1:
            raise BadParameter("price grid must have d >= 1")
        if (b < 0).any() or (s < 0).any():
            raise BadParameter("depths must be non-negative")
        self.buy = b
        self.sell = s
        self._key = (tuple(b.tolist()), tuple(s.tolist()))

    @classmethod
    def _trusted(cls, buy: np.ndarray, sell: np.ndarray) -> BookState:
        # internal constructor for kernel outputs already known to be valid
        obj = cls.__new__(cls)
        buy = np.asarray(buy, dtype=np.int64)
        sell = np.asarray(sell, dtype=np.int64)
        buy.setflags(write=False)
        sell.setflags(write=False)
        obj.buy = buy
        obj.sell = sell
        obj._key = (tuple(buy.tolist()), tuple(sell.tolist()))
        return obj

    @classmethod
    def empty(cls, d: int) -> BookState:
        return cls(np.zeros(d, dtype=np.int64), np.zeros(d, dtype=np.int64))

    @property
    def d(self) -> int:
        return int(self.buy.size)

    @property
    def key(self) -> tuple:
        return self._key

    def __eq__(self, other) -> bool:
        if not isinstance(other, BookState):
            return NotImplemented
        return self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        return f"BookState(buy={list(self._key[0])}, sell={list(self._key[1])})"

    def __add__(self, other: BookState) -> BookState:
        return BookState(self.buy + other.buy, self.sell + other.sell)

    def __sub__(self, other: BookState) -> BookState:
        return BookState(self.buy - other.buy, self.sell - other.sell)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Writable copies of (buy, sell)."""
        return self.buy.copy(), self.sell.copy()

    def to_dict(self) -> dict:
        return {"d": self.d, "buy": list(self._key[0]), "sell": list(self._key[1])}

    @classmethod
    def from_dict(cls, payload: dict) -> BookState:
        state = cls(payload["buy"], payload["sell"])
        if "d" in payload and int(payload["d"]) != state.d:
            raise BadParameter(f"d={payload['d']} does not match side length {state.d}")
        return state


# ExecutedOrders has the same shape as a book: matched volume per price.
ExecutedOrders = BookState


def ask_bid(state: BookState) -> tuple[int, int]:
    ask, bid = kernels.ask_bid(state.buy, state.sell)
    return int(ask), int(bid)


def is_admissible(state: BookState) -> bool:
    ask, bid = ask_bid(state)
    return ask > bid


def both_sides(state: BookState) -> bool:
    return bool(state.buy.any() and state.sell.any())


def truncate(side, mode: str, i: int) -> np.ndarray:
    """Keep indices <= i (``"below"``) or >= i (``"above"``); zero the rest.

    ``i`` may fall outside 1..d: below-0 is all zero, above-0 is the
    identity, below-(d+1) is the identity, above-(d+1) is all zero.
    """
    arr = np.asarray(side, dtype=np.int64)
    idx = np.arange(1, arr.size + 1)
    if mode == "below":
        return np.where(idx <= i, arr, 0)
    if mode == "above":
        return np.where(idx >= i, arr, 0)
    raise BadParameter(f"unknown truncation mode {mode!r}")


@dataclass(frozen=True)
class BookProfile:
    """Cumulative statistics of one state.

    ``cum_buy_above[k-1]`` is B_X(k), the buy volume at prices >= k;
    ``cum_sell_below[k-1]`` is S_X(k), the sell volume at prices <= k;
    ``imbalance`` is g_X = S_X - B_X.
    """

    cum_buy_above: np.ndarray
    cum_sell_below: np.ndarray
    p_a: int
    p_b: int

    @cached_property
    def imbalance(self) -> np.ndarray:
        return self.cum_sell_below - self.cum_buy_above

    @property
    def d(self) -> int:
        return int(self.cum_buy_above.size)

    def B(self, k: int) -> int:
        """B_X(k) with B(k) = B(1) for k < 1 and 0 for k > d."""
        if k < 1:
            return int(self.cum_buy_above[0])
        if k > self.d:
            return 0
        return int(self.cum_buy_above[k - 1])

    def S(self, k: int) -> int:
        """S_X(k) with S(k) = 0 for k < 1 and S(d) for k > d."""
        if k < 1:
            return 0
        if k > self.d:
            return int(self.cum_sell_below[-1])
        return int(self.cum_sell_below[k - 1])

    def g(self, k: int) -> int:
        return self.S(k) - self.B(k)

    def B_inv(self, z: int) -> int:
        """sup{i : B(i) >= z}; 0 when no price qualifies."""
        return int(kernels.inv_buy(self.cum_buy_above, z))

    def S_inv(self, z: int) -> int:
        """inf{i : S(i) >= z}; d + 1 when no price qualifies."""
        return int(kernels.inv_sell(self.cum_sell_below, z))


def profile(state: BookState) -> BookProfile:
    B, S = kernels.cumulative(state.buy, state.sell)
    p_b, p_a = kernels.clearing_prices(state.buy, state.sell)
    B.setflags(write=False)
    S.setflags(write=False)
    return BookProfile(cum_buy_above=B, cum_sell_below=S, p_a=int(p_a), p_b=int(p_b))


# -- book files -------------------------------------------------------------


def dumps_json(state: BookState) -> str:
    return json.dumps(state.to_dict())


def loads_json(text: str) -> BookState:
    return BookState.from_dict(json.loads(text))


def dumps_csv(state: BookState) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["buy", *state.buy.tolist()])
    w.writerow(["sell", *state.sell.tolist()])
    return buf.getvalue()


def loads_csv(text: str) -> BookState:
    rows = {}
    for row in csv.reader(io.StringIO(text)):
        if not row:
            continue
        rows[row[0].strip().lower()] = [int(v) for v in row[1:]]
    if set(rows) != {"buy", "sell"}:
        raise BadParameter("book CSV needs exactly a 'buy' row and a 'sell' row")
    return BookState(rows["buy"], rows["sell"])


def read_book(path: str | Path) -> BookState:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".csv":
        return loads_csv(text)
    return loads_json(text)


def write_book(state: BookState, path: str | Path) -> None:
    path = Path(path)
    text = dumps_csv(state) if path.suffix.lower() == ".csv" else dumps_json(state) + "\n"
    path.write_text(text, encoding="utf-8")
