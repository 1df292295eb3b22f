"""LOBSTER-style message files: parsing, book reconstruction and count-based calibration.

Message rows have six comma-separated fields: time (seconds after
midnight), type, order id, size (shares), price (dollars * 10000) and
direction (+1 buy, -1 sell). Types 1 (submission), 2 and 3 (partial and
full cancellation), 4 and 5 (visible and hidden execution) are used;
every other type is skipped and counted.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .book import BookState, is_admissible
from .errors import BadParameter, EmptyBook, InsufficientData, ParseError
from .flow import TableModel, build_modelAB
from .matching import clear

N_COLUMNS = 6
ACTIONS = {1: "limit", 2: "cancel", 3: "cancel", 4: "execution", 5: "execution"}
COLUMN_NAMES = ("time", "type", "order_id", "size", "price", "direction")


@dataclass(frozen=True)
class MessageRecord:
    time: Decimal
    msg_type: int
    order_id: int
    size: int
    price: int
    direction: int

    @property
    def action(self) -> str | None:
        return ACTIONS.get(self.msg_type)

    @property
    def is_buy(self) -> bool:
        return self.direction == 1

    def to_row(self) -> list[str]:
        return [str(self.time), str(self.msg_type), str(self.order_id), str(self.size), str(self.price),
                str(self.direction)]


def _parse_row(row: list[str], lineno: int) -> MessageRecord:
    if len(row) != N_COLUMNS:
        raise ParseError(lineno, None, f"expected {N_COLUMNS} columns, got {len(row)}")
    try:
        time = Decimal(row[0].strip())
        if not time.is_finite():
            raise InvalidOperation
    except InvalidOperation:
        raise ParseError(lineno, 1, f"bad time {row[0]!r}") from None
    ints = []
    for col in range(1, N_COLUMNS):
        try:
            ints.append(int(row[col].strip()))
        except ValueError:
            raise ParseError(lineno, col + 1, f"bad {COLUMN_NAMES[col]} {row[col]!r}") from None
    msg_type, order_id, size, price, direction = ints
    if size <= 0:
        raise ParseError(lineno, 4, "size must be positive")
    if price <= 0:
        raise ParseError(lineno, 5, "price must be positive")
    if direction not in (1, -1):
        raise ParseError(lineno, 6, "direction must be 1 or -1")
    return MessageRecord(time, msg_type, order_id, size, price, direction)


class MessageStream:
    """Iterable over the usable records of a message file.

    ``skipped`` counts rows with unused message types once iteration has
    finished; ``rows`` counts all data rows read.
    """

    def __init__(self, source):
        self.source = source
        self.skipped = 0
        self.rows = 0

    def _lines(self) -> Iterator[str]:
        if isinstance(self.source, (str, Path)) and Path(self.source).exists():
            with open(self.source, newline="", encoding="utf-8") as fh:
                yield from fh
        elif isinstance(self.source, (str, Path)):
            raise FileNotFoundError(self.source)
        else:
            yield from self.source

    def __iter__(self) -> Iterator[MessageRecord]:
        self.skipped = 0
        self.rows = 0
        last = None
        for lineno, row in enumerate(csv.reader(self._lines()), start=1):
            if not row:
                continue
            rec = _parse_row(row, lineno)
            self.rows += 1
            if last is not None and rec.time < last:
                raise ParseError(lineno, 1, "time decreases")
            last = rec.time
            if rec.action is None:
                self.skipped += 1
                continue
            yield rec


def parse_messages(source) -> MessageStream:
    """Stream of records from a path or an iterable of lines."""
    return MessageStream(source)


def write_messages(records: Iterable[MessageRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(dumps_messages(records))


def dumps_messages(records: Iterable[MessageRecord]) -> str:
    return "".join(",".join(r.to_row()) + "\n" for r in records)


# -- books -----------------------------------------------------------------


@dataclass
class Snapshot:
    """Visible shares per absolute price on each side."""

    bids: dict = field(default_factory=dict)
    asks: dict = field(default_factory=dict)

    def best_bid(self) -> int | None:
        live = [p for p, v in self.bids.items() if v > 0]
        return max(live) if live else None

    def best_ask(self) -> int | None:
        live = [p for p, v in self.asks.items() if v > 0]
        return min(live) if live else None

    def apply(self, rec: MessageRecord) -> None:
        side = self.bids if rec.is_buy else self.asks
        if rec.action == "limit":
            side[rec.price] = side.get(rec.price, 0) + rec.size
        elif rec.action == "cancel" or (rec.action == "execution" and rec.msg_type == 4):
            left = side.get(rec.price, 0) - rec.size
            if left > 0:
                side[rec.price] = left
            else:
                side.pop(rec.price, None)


def read_snapshot(path, row: int = 0) -> Snapshot:
    """One row of a LOBSTER orderbook file: (ask price, ask size, bid price, bid size) per level."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if row >= len(rows):
        raise ParseError(row + 1, None, "no such snapshot row")
    values = rows[row]
    if len(values) % 4:
        raise ParseError(row + 1, None, "snapshot rows need four columns per level")
    snap = Snapshot()
    for i in range(0, len(values), 4):
        try:
            ap, asz, bp, bsz = (int(v) for v in values[i : i + 4])
        except ValueError:
            raise ParseError(row + 1, i + 1, "non-integer snapshot entry") from None
        if asz > 0:
            snap.asks[ap] = snap.asks.get(ap, 0) + asz
        if bsz > 0:
            snap.bids[bp] = snap.bids.get(bp, 0) + bsz
    return snap


def snapshot_from_messages(records: Iterable[MessageRecord], initial: Snapshot | None = None) -> Snapshot:
    snap = Snapshot(dict(initial.bids), dict(initial.asks)) if initial else Snapshot()
    for rec in records:
        snap.apply(rec)
    return snap


def _units(shares: int, unit_size: int) -> int:
    q = (Decimal(shares) / Decimal(unit_size)).quantize(Decimal(1), rounding=ROUND_HALF_UP)
    return max(int(q), 0)


def build_initial_state(snapshot: Snapshot | Iterable[MessageRecord], d: int = 6, unit_size: int = 100,
                        reference: int | None = None, tick: int = 100, bid_level: int | None = None) -> BookState:
    """Aggregate visible depth onto prices 1..d.

    Absolute price ``reference`` (default: best bid, else best ask - tick)
    sits on level ``bid_level`` (default d // 2); level k holds price
    reference + (k - bid_level) * tick. Shares are converted to units with
    round-half-up. A crossed result is cleared with a warning.
    """
    if not isinstance(snapshot, Snapshot):
        snapshot = snapshot_from_messages(snapshot)
    if unit_size <= 0 or tick <= 0 or d < 2:
        raise BadParameter("unit_size and tick must be positive and d >= 2")
    if bid_level is None:
        bid_level = d // 2
    if reference is None:
        bb, ba = snapshot.best_bid(), snapshot.best_ask()
        if bb is not None:
            reference = bb
        elif ba is not None:
            reference = ba - tick
        else:
            raise EmptyBook("snapshot has no visible depth to anchor the grid")
    buy = np.zeros(d, dtype=np.int64)
    sell = np.zeros(d, dtype=np.int64)
    for arr, levels in ((buy, snapshot.bids), (sell, snapshot.asks)):
        for price, shares in levels.items():
            off, rem = divmod(price - reference, tick)
            k = bid_level + off
            if rem == 0 and 1 <= k <= d:
                arr[k - 1] += _units(shares, unit_size)
    state = BookState(buy, sell)
    if not is_admissible(state):
        warnings.warn("snapshot is crossed on the grid; clearing it first", stacklevel=2)
        state = clear(state).cleared
    return state


# -- calibration -----------------------------------------------------------


@dataclass
class CalibrationReport:
    scheme: str
    unit_size: int
    tick: int
    d: int
    m: int
    n: int
    T: float
    rates: dict
    counts: dict
    records: int = 0
    skipped: int = 0
    unplaced: int = 0
    out_of_range: int = 0
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme, "unit_size": self.unit_size, "tick": self.tick, "d": self.d, "m": self.m,
            "n": self.n, "T": self.T, "rates": self.rates, "counts": self.counts, "records": self.records,
            "skipped": self.skipped, "unplaced": self.unplaced, "out_of_range": self.out_of_range,
            "warnings": list(self.warnings),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# matrix names per (action, side) in the layout of the built-in Model B
_B_NAMES = {("limit", True): "beta", ("limit", False): "alpha", ("cancel", True): "gamma", ("cancel", False): "mu"}
_A_NAMES = {("limit", True): "limit_buy", ("limit", False): "limit_sell", ("cancel", True): "cancel_buy",
            ("cancel", False): "cancel_sell"}


def _relative(rec: MessageRecord, bid: int | None, ask: int | None, tick: int) -> int | None:
    # limit buy: ask - k, limit sell: k - bid, cancel buy: bid - k, cancel sell: k - ask (in ticks)
    if rec.action == "limit":
        ref = ask if rec.is_buy else bid
    else:
        ref = bid if rec.is_buy else ask
    if ref is None:
        return None
    diff = ref - rec.price if (rec.is_buy and rec.action == "limit") or (rec.is_buy and rec.action == "cancel") \
        else rec.price - ref
    if diff % tick:
        return None
    return diff // tick


def calibrate(records: Iterable[MessageRecord], scheme: str = "B", d: int = 6, unit_size: int = 100, m: int = 6,
              n: int = 10, tick: int = 100, columns: int = 6, initial: Snapshot | None = None,
              guard: str = "wipeout") -> tuple[CalibrationReport, TableModel]:
    """Count-based intensities.

    Model A: rate = count(kind) / (d * T). Model B: rate(kind, z, r) =
    count / T with sizes z = round(shares / unit_size) clamped to 1..m and
    relative prices r = 0..columns-1 measured against the best quotes
    reconstructed from the stream (plus ``initial``) just before each
    message. Executions only move the reconstructed book.
    """
    scheme = scheme.upper()
    if scheme not in ("A", "B"):
        raise BadParameter("scheme must be 'A' or 'B'")
    if min(d, unit_size, m, n, tick, columns) < 1:
        raise BadParameter("d, unit_size, m, n, tick and columns must be positive")
    snap = Snapshot(dict(initial.bids), dict(initial.asks)) if initial else Snapshot()
    first = last = None
    n_rec = unplaced = out_of_range = 0
    counts_a = {name: 0 for name in _A_NAMES.values()}
    counts_b = {name: np.zeros((m, columns), dtype=np.int64) for name in _B_NAMES.values()}
    for rec in records:
        n_rec += 1
        first = rec.time if first is None else first
        last = rec.time
        if rec.action in ("limit", "cancel"):
            key = (rec.action, rec.is_buy)
            if scheme == "A":
                counts_a[_A_NAMES[key]] += 1
            else:
                r = _relative(rec, snap.best_bid(), snap.best_ask(), tick)
                if r is None:
                    unplaced += 1
                elif not 0 <= r < columns:
                    out_of_range += 1
                else:
                    z = min(max(_units(rec.size, unit_size), 1), m)
                    counts_b[_B_NAMES[key]][z - 1, r] += 1
        snap.apply(rec)
    if first is None or last <= first:
        raise InsufficientData("records must span a positive amount of time")
    T = last - first
    notes = []
    skipped = int(getattr(records, "skipped", 0))
    if scheme == "A":
        rates = {k: float(Decimal(v) / (Decimal(d) * T)) for k, v in counts_a.items()}
        counts = dict(counts_a)
        model = build_modelAB("A", n, d=d, guard=guard, rates=rates)
    else:
        placed = sum(int(c.sum()) for c in counts_b.values())
        if placed == 0 and unplaced and not out_of_range:
            raise InsufficientData("no best quote could be reconstructed for any order")
        if placed == 0:
            notes.append(f"no orders within relative prices 0..{columns - 1}; all matrices are zero")
            warnings.warn(notes[-1], stacklevel=2)
        rates = {k: [[float(Decimal(int(v)) / T) for v in row] for row in c] for k, c in counts_b.items()}
        counts = {k: c.tolist() for k, c in counts_b.items()}
        model = build_modelAB("B", n, matrices=rates, d=d, guard=guard)
    report = CalibrationReport(scheme, unit_size, tick, d, m, n, float(T), rates, counts, n_rec, skipped, unplaced,
                               out_of_range, notes)
    return report, model


def read_report(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def messages_from_text(text: str) -> MessageStream:
    return parse_messages(io.StringIO(text))
