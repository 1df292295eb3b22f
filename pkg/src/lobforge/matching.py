"""Order-matching clearing, its per-event fast path, pre-images and an oracle."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from . import kernels
from .book import BookState, ExecutedOrders, ask_bid, is_admissible
from .errors import BudgetExceeded, NegativeQueue, PreconditionViolated


class EventKind(enum.IntEnum):
    LIMIT_BUY = kernels.LIMIT_BUY
    LIMIT_SELL = kernels.LIMIT_SELL
    CANCEL_BUY = kernels.CANCEL_BUY
    CANCEL_SELL = kernels.CANCEL_SELL

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def parse(cls, text: str) -> EventKind:
        key = text.strip().lower().replace("-", "_")
        for kind, names in _ALIASES.items():
            if key in names:
                return kind
        raise ValueError(f"unknown event kind {text!r}")


_LABELS = {
    EventKind.LIMIT_BUY: "limit_buy",
    EventKind.LIMIT_SELL: "limit_sell",
    EventKind.CANCEL_BUY: "cancel_buy",
    EventKind.CANCEL_SELL: "cancel_sell",
}
_ALIASES = {
    EventKind.LIMIT_BUY: {"limit_buy", "limitbuy", "lb", "buy", "0"},
    EventKind.LIMIT_SELL: {"limit_sell", "limitsell", "ls", "sell", "1"},
    EventKind.CANCEL_BUY: {"cancel_buy", "cancelbuy", "cb", "2"},
    EventKind.CANCEL_SELL: {"cancel_sell", "cancelsell", "cs", "3"},
}


@dataclass(frozen=True)
class Event:
    kind: EventKind
    price: int
    size: int

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))

    def delta(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        """Signed (buy, sell) increments of this event on a grid of size d."""
        db = np.zeros(d, dtype=np.int64)
        ds = np.zeros(d, dtype=np.int64)
        kernels.perturb(db, ds, int(self.kind), self.price, self.size)
        return db, ds


def perturb(state: BookState, event: Event) -> BookState:
    """X + event, without clearing. Raises NegativeQueue if the result leaves E."""
    if not 1 <= event.price <= state.d:
        raise PreconditionViolated(f"price {event.price} outside 1..{state.d}")
    buy, sell = state.arrays()
    kernels.perturb(buy, sell, int(event.kind), event.price, event.size)
    if buy.min() < 0 or sell.min() < 0:
        raise NegativeQueue(f"{event} cancels more than the queue holds")
    return BookState._trusted(buy, sell)


@dataclass(frozen=True)
class ClearingResult:
    cleared: BookState
    executed: ExecutedOrders
    trades: list = field(default_factory=list, compare=False)

    def to_dict(self) -> dict:
        return {
            "cleared": self.cleared.to_dict(),
            "executed": self.executed.to_dict(),
            "trades": [{"side": s, "price": p, "volume": v} for s, p, v in self.trades],
        }


def _trades(executed: BookState) -> list[tuple[str, int, int]]:
    out = [("sell", i + 1, int(v)) for i, v in enumerate(executed.sell) if v > 0]
    out += [("buy", i + 1, int(v)) for i, v in reversed(list(enumerate(executed.buy))) if v > 0]
    return out


def _result(state: BookState, buy: np.ndarray, sell: np.ndarray) -> ClearingResult:
    cleared = BookState._trusted(buy, sell)
    executed = BookState._trusted(state.buy - buy, state.sell - sell)
    return ClearingResult(cleared, executed, _trades(executed))


def clear(state: BookState) -> ClearingResult:
    """Match crossing orders with price priority; identity on admissible books."""
    buy, sell = kernels.clear(state.buy, state.sell)
    return _result(state, buy, sell)


class EventOutcome(NamedTuple):
    state: BookState
    bid: int
    ask: int
    case: int  # 11..14, 21..24, 31..32, 41..42; 0 when the full clear was used


def apply_event_with_case(state: BookState, event: Event, strict: bool = False) -> EventOutcome:
    buy, sell = state.arrays()
    case, bid, ask = kernels.fast_event(buy, sell, int(event.kind), event.price, event.size)
    if case == 0:
        if strict:
            raise PreconditionViolated(
                f"{event} on {state}: needs an admissible book with both sides non-empty, "
                "size below min(B(1), S(d)) and cancellations within the queue"
            )
        nxt = clear(perturb(state, event)).cleared
        ask, bid = ask_bid(nxt)
        return EventOutcome(nxt, bid, ask, 0)
    return EventOutcome(BookState._trusted(buy, sell), int(bid), int(ask), int(case))


def apply_event(state: BookState, event: Event, strict: bool = False) -> tuple[BookState, int, int]:
    """One elementary event followed by clearing, in O(d).

    Returns ``(state', bid', ask')``. Outside the fast path's domain the
    event is applied through :func:`clear` unless ``strict`` is set, in
    which case :class:`PreconditionViolated` is raised.
    """
    out = apply_event_with_case(state, event, strict=strict)
    return out.state, out.bid, out.ask


def _sup_supp(side: np.ndarray) -> int:
    nz = np.flatnonzero(side)
    return int(nz[-1]) + 1 if nz.size else 0


def _inf_supp(side: np.ndarray, d: int) -> int:
    nz = np.flatnonzero(side)
    return int(nz[0]) + 1 if nz.size else d + 1


def preimage_contains(candidate: BookState, target: BookState) -> bool:
    """True iff ``clear(candidate) == target``, decided from Z = candidate - target alone."""
    if not is_admissible(target):
        raise PreconditionViolated("pre-image target must be admissible")
    if candidate.d != target.d:
        return False
    zb = candidate.buy - target.buy
    zs = candidate.sell - target.sell
    if zb.min() < 0 or zs.min() < 0:
        return False
    if zb.sum() != zs.sum():
        return False
    d = target.d
    ask, bid = ask_bid(target)
    sup_zs = _sup_supp(zs)
    inf_zb = _inf_supp(zb, d)
    return sup_zs <= inf_zb and sup_zs <= ask and inf_zb >= bid


def preimage_mask(buys: np.ndarray, sells: np.ndarray, target: BookState) -> np.ndarray:
    """Row-wise :func:`preimage_contains` for candidate sides stacked as (n, d) arrays."""
    if not is_admissible(target):
        raise PreconditionViolated("pre-image target must be admissible")
    zb = np.asarray(buys, dtype=np.int64) - target.buy
    zs = np.asarray(sells, dtype=np.int64) - target.sell
    ask, bid = ask_bid(target)
    ok = (zb.min(axis=1) >= 0) & (zs.min(axis=1) >= 0)
    ok &= zb.sum(axis=1) == zs.sum(axis=1)
    sup_zs = _sup_rows(zs)
    inf_zb = _inf_rows(zb)
    ok &= (sup_zs <= inf_zb) & (sup_zs <= ask) & (inf_zb >= bid)
    return ok


def check_matching_axioms(state: BookState, result: ClearingResult) -> list[str]:
    """List the violated conditions among A1-A4, admissibility and conservation."""
    d = state.d
    z = result.executed
    c = result.cleared
    bad = []
    if (z.buy < 0).any() or (z.sell < 0).any():
        bad.append("A1")
    if int(z.buy.sum()) != int(z.sell.sum()):
        bad.append("A2")
    if _sup_supp(z.sell) > _inf_supp(z.buy, d):
        bad.append("A3")
    if _sup_supp(z.sell) > _inf_supp(c.sell, d) or _inf_supp(z.buy, d) < _sup_supp(c.buy):
        bad.append("A4")
    if not is_admissible(c):
        bad.append("admissible")
    if not (np.array_equal(c.buy + z.buy, state.buy) and np.array_equal(c.sell + z.sell, state.sell)):
        bad.append("conservation")
    return bad


def _box(side: np.ndarray) -> np.ndarray:
    grids = [range(int(v) + 1) for v in side]
    return np.array(list(itertools.product(*grids)), dtype=np.int64).reshape(-1, side.size)


def _sup_rows(z: np.ndarray) -> np.ndarray:
    d = z.shape[1]
    pos = np.where(z > 0, np.arange(1, d + 1), 0)
    return pos.max(axis=1)


def _inf_rows(z: np.ndarray) -> np.ndarray:
    d = z.shape[1]
    pos = np.where(z > 0, np.arange(1, d + 1), d + 1)
    return pos.min(axis=1)


def brute_force_clear(state: BookState, budget: int = 1_000_000) -> ClearingResult:
    """Clearing by exhaustive search over executed volumes.

    Every pair 0 <= Z+ <= X+, 0 <= Z- <= X- is tested against A1-A4 and
    admissibility of X - Z. Exactly one pair must survive; anything else
    raises AssertionError. Independent of :func:`clear`.
    """
    n_buy = int(np.prod(state.buy + 1))
    n_sell = int(np.prod(state.sell + 1))
    if n_buy * n_sell > budget:
        raise BudgetExceeded(f"{n_buy * n_sell} candidate pairs exceed budget {budget}")
    zb = _box(state.buy)
    zs = _box(state.sell)
    cb = state.buy - zb
    cs = state.sell - zs
    inf_zb = _inf_rows(zb)
    sup_cb = _sup_rows(cb)
    sup_zs = _sup_rows(zs)
    inf_cs = _inf_rows(cs)
    ok = zb.sum(axis=1)[:, None] == zs.sum(axis=1)[None, :]  # A2
    ok &= sup_zs[None, :] <= inf_zb[:, None]  # A3
    ok &= sup_zs[None, :] <= inf_cs[None, :]  # A4, sell side
    ok &= (inf_zb >= sup_cb)[:, None]  # A4, buy side
    ok &= inf_cs[None, :] > sup_cb[:, None]  # result admissible
    hits = np.argwhere(ok)
    assert len(hits) == 1, f"{len(hits)} order-matching solutions for {state} (expected exactly 1)"
    i, j = hits[0]
    return _result(state, cb[i].copy(), cs[j].copy())


def greedy_clear(state: BookState) -> ClearingResult:
    """Unit-by-unit price-priority matching: best buy against best sell while they cross."""
    buy, sell = state.arrays()
    d = state.d
    hi, lo = d - 1, 0
    while True:
        while hi >= 0 and buy[hi] == 0:
            hi -= 1
        while lo < d and sell[lo] == 0:
            lo += 1
        if hi < 0 or lo >= d or hi < lo:
            break
        q = min(buy[hi], sell[lo])
        buy[hi] -= q
        sell[lo] -= q
    return _result(state, buy, sell)


def net_events(d: int, events: Iterable[Event]) -> tuple[np.ndarray, np.ndarray]:
    db = np.zeros(d, dtype=np.int64)
    ds = np.zeros(d, dtype=np.int64)
    for ev in events:
        if not 1 <= ev.price <= d:
            raise PreconditionViolated(f"price {ev.price} outside 1..{d}")
        kernels.perturb(db, ds, int(ev.kind), ev.price, ev.size)
    return db, ds


def clear_batch(state: BookState, events: Iterable[Event]) -> ClearingResult:
    """Batch auction: net all events onto the book, then clear once."""
    db, ds = net_events(state.d, events)
    buy = state.buy + db
    sell = state.sell + ds
    if buy.min() < 0 or sell.min() < 0:
        raise NegativeQueue("netted batch cancels more than the book holds")
    return clear(BookState._trusted(buy, sell))
