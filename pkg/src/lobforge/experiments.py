"""Grid experiments over the ask and bid depths of a reference book."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .book import BookState, ask_bid
from .errors import BadParameter
from .flow import IntensityModel
from .kbe import ask_increase_solution
from .montecarlo import estimate_first_move, estimate_horizon

COMPARE_FIELDS = ("ask_depth", "bid_depth", "mc_mean", "mc_std_error", "mc_n", "mc_timeouts", "kbe", "kbe_states")
FIRST_MOVE_FIELDS = ("ask_depth", "bid_depth", "mean", "std_error", "n", "timeouts")


def canonical_origin(bid_depth: int, ask_depth: int) -> BookState:
    """[2, 4, z1, 0, 0, 0] / [0, 0, 0, z2, 4, 2] with z1 the bid and z2 the ask depth."""
    return BookState([2, 4, bid_depth, 0, 0, 0], [0, 0, 0, ask_depth, 4, 2])


def with_best_depths(template: BookState, bid_depth: int, ask_depth: int) -> BookState:
    """``template`` with the queues at its best bid and best ask replaced."""
    ask, bid = ask_bid(template)
    if not (1 <= bid < ask <= template.d):
        raise BadParameter("template needs both sides non-empty")
    if bid_depth < 1 or ask_depth < 1:
        raise BadParameter("depths must be at least 1")
    buy, sell = template.arrays()
    buy[bid - 1] = bid_depth
    sell[ask - 1] = ask_depth
    return BookState(buy, sell)


def parse_grid(text: str) -> list[int]:
    """``"6"`` or ``"1-6"`` -> 1..6; ``"1,3,6"`` -> [1, 3, 6]."""
    text = text.strip()
    try:
        if "," in text:
            vals = [int(v) for v in text.split(",")]
        elif "-" in text:
            lo, hi = (int(v) for v in text.split("-", 1))
            vals = list(range(lo, hi + 1))
        else:
            vals = list(range(1, int(text) + 1))
    except ValueError as exc:
        raise BadParameter(f"bad depth list {text!r}") from exc
    if not vals or min(vals) < 1:
        raise BadParameter(f"bad depth list {text!r}")
    return vals


@dataclass
class CompareRow:
    ask_depth: int
    bid_depth: int
    mc_mean: float
    mc_std_error: float
    mc_n: int
    mc_timeouts: int
    kbe: float | None = None
    kbe_states: int | None = None

    def values(self) -> tuple:
        return tuple(getattr(self, k) for k in COMPARE_FIELDS)


def compare_grid(model: IntensityModel, asks: Sequence[int], bids: Sequence[int], T: float, dt: float | None,
                 reps: int, seed: int, pruning_eps: float = 1e-8, threads: int | None = None,
                 template: BookState | None = None) -> list[CompareRow]:
    """Monte Carlo and (unless ``dt`` is None) backward-equation values of
    P[a(X_T) > a(X_0)] on every (ask depth, bid depth) cell."""
    rows = []
    for za in asks:
        for zb in bids:
            origin = canonical_origin(zb, za) if template is None else with_best_depths(template, zb, za)
            est = estimate_horizon(model, origin, T, reps, seed, threads=threads)
            row = CompareRow(za, zb, est.mean, est.std_error, est.n, est.timeouts)
            if dt is not None:
                sol = ask_increase_solution(model, origin, T, dt, pruning_eps)
                row.kbe = sol.value
                row.kbe_states = sol.diagnostics["states"]
            rows.append(row)
    return rows


def first_move_grid(model: IntensityModel, asks: Sequence[int], bids: Sequence[int], reps: int, seed: int,
                    threads: int | None = None, template: BookState | None = None) -> list[tuple]:
    rows = []
    for za in asks:
        for zb in bids:
            origin = canonical_origin(zb, za) if template is None else with_best_depths(template, zb, za)
            est = estimate_first_move(model, origin, reps, seed, threads=threads)
            rows.append((za, zb, est.mean, est.std_error, est.n, est.timeouts))
    return rows


def monotone_fraction(table: dict) -> tuple[float, int, int]:
    """Share of adjacent grid pairs that are non-increasing in ask depth and
    non-decreasing in bid depth. ``table`` maps (ask, bid) -> probability."""
    asks = sorted({a for a, _ in table})
    bids = sorted({b for _, b in table})
    good = total = 0
    for a in asks:
        for b in bids:
            if (a, b) not in table:
                continue
            nxt_a = [x for x in asks if x > a]
            nxt_b = [x for x in bids if x > b]
            if nxt_a and (nxt_a[0], b) in table:
                total += 1
                good += table[(nxt_a[0], b)] <= table[(a, b)]
            if nxt_b and (a, nxt_b[0]) in table:
                total += 1
                good += table[(a, nxt_b[0])] >= table[(a, b)]
    return (good / total if total else float("nan")), good, total


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def dumps_rows(fields: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def dumps_compare(rows: Sequence[CompareRow]) -> str:
    return dumps_rows(COMPARE_FIELDS, [r.values() for r in rows])


def loads_compare(text: str) -> list[CompareRow]:
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        out.append(CompareRow(
            int(rec["ask_depth"]), int(rec["bid_depth"]), float(rec["mc_mean"]), float(rec["mc_std_error"]),
            int(rec["mc_n"]), int(rec["mc_timeouts"]),
            float(rec["kbe"]) if rec["kbe"] else None,
            int(rec["kbe_states"]) if rec["kbe_states"] else None,
        ))
    return out
