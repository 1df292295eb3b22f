"""Books re-indexed around the mid-price.

A centred state stores depths on the window -d'..d' (array index 0 is
-d') together with p = ask + bid in absolute ticks. The origin of the
window is ceil(p / 2). After every clearing the book is shifted so the
new mid sits at the origin again; depth pushed out of the window is
cancelled.
"""

from __future__ import annotations

import itertools
import json
from typing import Iterator

import numpy as np

from . import kernels
from .book import BookState, ask_bid, both_sides
from .errors import BadParameter, BudgetExceeded, OutOfGrid, PreconditionViolated, SideWipedOut


def parity(p: int) -> int:
    """p mod 2 in {0, 1} for any sign of p."""
    return p % 2


def half_up(p: int) -> int:
    """ceil(p / 2) on integers."""
    return (p + parity(p)) // 2


def _side(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64).copy()
    arr.setflags(write=False)
    return arr


class CentredState:
    """Pair of depth arrays over -d'..d' plus twice the mid-price ``p``.

    Construction only checks shapes and signs, so crossed configurations
    (elements of the larger flow space) can be represented too; use
    :meth:`is_valid` for the full set of invariants.
    """

    __slots__ = ("buy", "sell", "p", "_key")

    def __init__(self, buy, sell, p: int):
        b = _side(buy)
        s = _side(sell)
        if b.ndim != 1 or b.shape != s.shape or b.size % 2 == 0:
            raise BadParameter("centred sides need equal odd length 2d'+1")
        if (b < 0).any() or (s < 0).any():
            raise BadParameter("depths must be non-negative")
        self.buy = b
        self.sell = s
        self.p = int(p)
        self._key = (self.p, tuple(b.tolist()), tuple(s.tolist()))

    @classmethod
    def _trusted(cls, buy: np.ndarray, sell: np.ndarray, p: int) -> CentredState:
        obj = cls.__new__(cls)
        buy.setflags(write=False)
        sell.setflags(write=False)
        obj.buy = buy
        obj.sell = sell
        obj.p = int(p)
        obj._key = (obj.p, tuple(buy.tolist()), tuple(sell.tolist()))
        return obj

    @property
    def d_prime(self) -> int:
        return (self.buy.size - 1) // 2

    @property
    def key(self) -> tuple:
        return self._key

    def __eq__(self, other) -> bool:
        if not isinstance(other, CentredState):
            return NotImplemented
        return self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        return f"CentredState(p={self.p}, buy={self.levels('buy')}, sell={self.levels('sell')})"

    def levels(self, side: str) -> dict[int, int]:
        """Non-zero depths keyed by centred price."""
        arr = self.buy if side == "buy" else self.sell
        dp = self.d_prime
        return {int(i) - dp: int(arr[i]) for i in np.flatnonzero(arr)}

    @classmethod
    def from_levels(cls, d_prime: int, p: int, buy: dict, sell: dict) -> CentredState:
        b = np.zeros(2 * d_prime + 1, dtype=np.int64)
        s = np.zeros(2 * d_prime + 1, dtype=np.int64)
        for arr, levels in ((b, buy), (s, sell)):
            for i, v in levels.items():
                if abs(int(i)) > d_prime:
                    raise OutOfGrid(f"centred price {i} outside +-{d_prime}")
                arr[int(i) + d_prime] += int(v)
        return cls(b, s, p)

    def ask_bid(self) -> tuple[int, int]:
        return centred_ask_bid(self.buy, self.sell)

    def is_valid(self) -> bool:
        """Both sides non-empty, ask > bid and a + b + (p mod 2) = 0."""
        if not (self.buy.any() and self.sell.any()):
            return False
        a, b = self.ask_bid()
        return a > b and a + b + parity(self.p) == 0

    def to_dict(self) -> dict:
        return {"d_prime": self.d_prime, "p": self.p, "buy": self.buy.tolist(), "sell": self.sell.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> CentredState:
        state = cls(payload["buy"], payload["sell"], payload["p"])
        if "d_prime" in payload and int(payload["d_prime"]) != state.d_prime:
            raise BadParameter("d_prime does not match side length")
        return state

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> CentredState:
        return cls.from_dict(json.loads(text))


def centred_ask_bid(buy: np.ndarray, sell: np.ndarray) -> tuple[int, int]:
    """(a, b) in centred prices; an empty sell side gives d', an empty buy side -d'."""
    dp = (len(buy) - 1) // 2
    nz_s = np.flatnonzero(sell)
    nz_b = np.flatnonzero(buy)
    a = int(nz_s[0]) - dp if nz_s.size else dp
    b = int(nz_b[-1]) - dp if nz_b.size else -dp
    return a, b


def shift(buy, sell, i: int) -> tuple[np.ndarray, np.ndarray]:
    """sigma_i: the value at j + i moves to j; whatever leaves the window is dropped."""
    buy = np.asarray(buy, dtype=np.int64)
    sell = np.asarray(sell, dtype=np.int64)
    n = buy.size
    nb = np.zeros(n, dtype=np.int64)
    ns = np.zeros(n, dtype=np.int64)
    if abs(i) < n:
        if i >= 0:
            nb[: n - i] = buy[i:]
            ns[: n - i] = sell[i:]
        else:
            nb[-i:] = buy[: n + i]
            ns[-i:] = sell[: n + i]
    return nb, ns


def center(buy, sell, p: int) -> CentredState:
    """Re-centre a crossing-free two-sided configuration carried over from mid ``p``."""
    buy = np.asarray(buy, dtype=np.int64)
    sell = np.asarray(sell, dtype=np.int64)
    if not (buy.any() and sell.any()):
        raise PreconditionViolated("centering needs both sides non-empty")
    a, b = centred_ask_bid(buy, sell)
    if a <= b:
        raise PreconditionViolated("centering needs ask > bid")
    nb, ns, p_new = kernels.centre(buy, sell, int(p))
    return CentredState._trusted(nb, ns, p_new)


def clear_centred(state: CentredState) -> CentredState:
    """Order matching on the window followed by re-centring."""
    nb, ns, p_new, ok = kernels.clear_centre(state.buy, state.sell, state.p)
    if not ok:
        raise SideWipedOut(f"matching empties a side of {state}")
    return CentredState._trusted(nb, ns, p_new)


def to_centred(state: BookState, d_prime: int) -> CentredState:
    if not both_sides(state):
        raise PreconditionViolated("centred books need both sides non-empty")
    ask, bid = ask_bid(state)
    if ask <= bid:
        raise PreconditionViolated("state is not admissible")
    p = ask + bid
    origin = half_up(p)
    nb = np.zeros(2 * d_prime + 1, dtype=np.int64)
    ns = np.zeros(2 * d_prime + 1, dtype=np.int64)
    for k in range(1, state.d + 1):
        i = k - origin
        if -d_prime <= i <= d_prime:
            nb[i + d_prime] = state.buy[k - 1]
            ns[i + d_prime] = state.sell[k - 1]
    return CentredState(nb, ns, p)


def from_centred(state: CentredState, d: int) -> BookState:
    origin = half_up(state.p)
    dp = state.d_prime
    buy = np.zeros(d, dtype=np.int64)
    sell = np.zeros(d, dtype=np.int64)
    for idx in np.flatnonzero(state.buy | state.sell):
        k = int(idx) - dp + origin
        if not 1 <= k <= d:
            raise OutOfGrid(f"centred level {int(idx) - dp} maps to absolute price {k} outside 1..{d}")
        buy[k - 1] = state.buy[idx]
        sell[k - 1] = state.sell[idx]
    return BookState(buy, sell)


def _compositions(total: int, slots: int) -> Iterator[tuple[int, ...]]:
    # all ways to place ``total`` units into ``slots`` ordered bins
    if slots == 0:
        if total == 0:
            yield ()
        return
    for cut in itertools.combinations(range(total + slots - 1), slots - 1):
        prev = -1
        parts = []
        for c in cut + (total + slots - 1,):
            parts.append(c - prev - 1)
            prev = c
        yield tuple(parts)


def _matching_preimage(buy: np.ndarray, sell: np.ndarray, max_exec: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    # configurations Y + Z that clear back to the admissible pair (buy, sell),
    # with executed volume |Z+| = |Z-| <= max_exec
    n = buy.size
    dp = (n - 1) // 2
    a, b = centred_ask_bid(buy, sell)
    sell_slots = a + dp + 1  # indices -d'..a
    buy_slots = dp - b + 1  # indices b..d'
    for v in range(max_exec + 1):
        for zs in _compositions(v, sell_slots):
            sup_zs = max((i for i, x in enumerate(zs) if x), default=-1) - dp
            for zb in _compositions(v, buy_slots):
                inf_zb = min((i for i, x in enumerate(zb) if x), default=n) + b
                if v and sup_zs > inf_zb:
                    continue
                nb = buy.copy()
                ns = sell.copy()
                nb[b + dp :] += zb
                ns[:sell_slots] += zs
                yield nb, ns


def enumerate_centred_preimage(
    target: CentredState, m: int = 1, max_exec: int | None = None, budget: int = 1_000_000
) -> Iterator[CentredState]:
    """Configurations that :func:`clear_centred` maps onto ``target``.

    Depth entering through the window edge before re-centring is bounded
    by ``m`` per level and executed volume by ``max_exec`` (default ``m``);
    within those bounds the enumeration is complete. Order: shift
    ascending, previous mid ascending, edge depths lexicographic, then
    executed volume ascending.
    """
    if not target.is_valid():
        raise PreconditionViolated("pre-image target must be a valid centred state")
    if max_exec is None:
        max_exec = m
    dp = target.d_prime
    nz_b = np.flatnonzero(target.buy)
    nz_s = np.flatnonzero(target.sell)
    lo = int(min(nz_b[0], nz_s[0])) - dp
    hi = int(max(nz_b[-1], nz_s[-1])) - dp
    count = 0
    # t > 0: the book sat t ticks lower in the old window; t < 0: higher
    for t in range(-(dp - hi), lo + dp + 1):
        base_b, base_s = shift(target.buy, target.sell, t)
        c = half_up(target.p) + t
        for q in (2 * c - 1, 2 * c):
            free = range(dp - t + 1, dp + 1) if t > 0 else range(-dp, -dp - t)
            for coeffs in itertools.product(range(m + 1), repeat=len(free)):
                yb = base_b.copy()
                ys = base_s.copy()
                for j, v in zip(free, coeffs):
                    if t > 0:
                        ys[j + dp] = v
                    else:
                        yb[j + dp] = v
                for zb, zs in _matching_preimage(yb, ys, max_exec):
                    count += 1
                    if count > budget:
                        raise BudgetExceeded(f"pre-image enumeration exceeded {budget} states")
                    yield CentredState._trusted(zb, zs, q)


def model3_pad(state: CentredState, K: int, a_inf: int, b_inf: int) -> CentredState:
    """Fill levels more than K ticks from the opposite best with default depths.

    Buys below a - K become ``b_inf``; sells above b + K become ``a_inf``.
    """
    dp = state.d_prime
    if not 0 <= K <= 2 * dp:
        raise BadParameter(f"K must lie in 0..{2 * dp}")
    if a_inf < 0 or b_inf < 0:
        raise BadParameter("default depths must be non-negative")
    a, b = state.ask_bid()
    idx = np.arange(-dp, dp + 1)
    nb = np.where(idx < a - K, b_inf, state.buy)
    ns = np.where(idx > b + K, a_inf, state.sell)
    return CentredState(nb, ns, state.p)
