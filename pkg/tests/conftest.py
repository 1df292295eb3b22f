from __future__ import annotations

import itertools

import numpy as np
import pytest

from lobforge.book import BookState, ask_bid
from lobforge.flow import CallableModel, TableModel, build_model2


def exhaustive_states(d: int = 4, depth: int = 2) -> list[BookState]:
    return [BookState(v[:d], v[d:]) for v in itertools.product(range(depth + 1), repeat=2 * d)]


@pytest.fixture(scope="session")
def small_states() -> list[BookState]:
    return exhaustive_states()


@pytest.fixture
def fig13() -> BookState:
    # admissible example book on nine prices, ask 6 and bid 4
    return BookState([1, 3, 2, 1, 0, 0, 0, 0, 0], [0, 0, 0, 0, 0, 1, 0, 3, 2])


@pytest.fixture
def crossed_example() -> BookState:
    # the same book after a buy of 2 at 7 and sells of 1 at 3, 4 and 6
    return BookState([1, 3, 2, 1, 0, 0, 2, 0, 0], [0, 0, 1, 1, 1, 1, 0, 3, 2])


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


def random_fast_path_case(rng: np.random.Generator):
    """An admissible two-sided book and an event meeting the single-event fast-path preconditions."""
    from lobforge.matching import Event, EventKind

    while True:
        d = int(rng.integers(4, 11))
        bid = int(rng.integers(1, d))
        ask = int(rng.integers(bid + 1, d + 1))
        buy = np.zeros(d, dtype=np.int64)
        sell = np.zeros(d, dtype=np.int64)
        buy[:bid] = rng.integers(0, 5, size=bid)
        sell[ask - 1 :] = rng.integers(0, 5, size=d - ask + 1)
        buy[bid - 1] = max(buy[bid - 1], 1)
        sell[ask - 1] = max(sell[ask - 1], 1)
        limit = int(min(buy.sum(), sell.sum()))
        if limit < 2:
            continue
        kind = EventKind(int(rng.integers(0, 4)))
        if kind in (EventKind.LIMIT_BUY, EventKind.LIMIT_SELL):
            k = int(rng.integers(1, d + 1))
            z = int(rng.integers(1, limit))
        else:
            side = buy if kind == EventKind.CANCEL_BUY else sell
            k = int(rng.choice(np.flatnonzero(side))) + 1
            z = int(rng.integers(1, min(int(side[k - 1]), limit - 1) + 1))
        return BookState(buy, sell), Event(kind, k, z)


def random_two_sided_book(rng: np.random.Generator, d: int, max_depth: int = 4, min_total: int = 2) -> BookState:
    """Admissible book with both sides holding at least ``min_total`` units."""
    while True:
        bid = int(rng.integers(1, d))
        ask = int(rng.integers(bid + 1, d + 1))
        buy = np.zeros(d, dtype=np.int64)
        sell = np.zeros(d, dtype=np.int64)
        buy[:bid] = rng.integers(0, max_depth + 1, size=bid)
        sell[ask - 1 :] = rng.integers(0, max_depth + 1, size=d - ask + 1)
        buy[bid - 1] = max(buy[bid - 1], 1)
        sell[ask - 1] = max(sell[ask - 1], 1)
        if buy.sum() >= min_total and sell.sum() >= min_total:
            return BookState(buy, sell)


def hashed_function(seed: int):
    """A fixed pseudo-random real function of any state key."""
    import zlib

    def f(state) -> float:
        h = zlib.crc32(repr((seed, state.key)).encode())
        return (h % 100_003) / 100_003.0 - 0.5

    return f


def model2_instance(seed: int, d: int = 6, m: int = 3) -> TableModel:
    rng = np.random.default_rng(seed)
    return build_model2(*(rng.random((m, d)) for _ in range(4)))


def model1_closed_form(f, x: BookState, beta, alpha, mu, theta) -> float:
    d = x.d
    a, b = ask_bid(x)
    buy, sell = x.buy, x.sell

    def g(db, ds):
        return f(BookState(buy + db, sell + ds)) - f(x)

    e = np.eye(d, dtype=np.int64)
    z = np.zeros(d, dtype=np.int64)
    total = 0.0
    total += sum(beta / (a - i) ** alpha * g(e[i - 1], z) for i in range(1, a))
    total += mu * g(z, -e[a - 1])
    total += sum(beta / (i - b) ** alpha * g(z, e[i - 1]) for i in range(b + 1, d + 1))
    total += mu * g(-e[b - 1], z)
    total += sum(theta[b - i - 1] * buy[i - 1] * g(-e[i - 1], z) for i in range(1, b) if buy[i - 1])
    total += sum(theta[i - a - 1] * sell[i - 1] * g(z, -e[i - 1]) for i in range(a + 1, d + 1) if sell[i - 1])
    return total


def centred_toy_model() -> CallableModel:
    def fn(kind, price, state, size):
        a, b = state.ask_bid()
        if kind == 0:
            return 1.0 / (1 + abs(a - price))
        if kind == 1:
            return 0.8 / (1 + abs(price - b))
        return 0.3

    return CallableModel(fn, 1, frame="centred")


ACCEPTANCE_LINES: list[str] = []


def verdict(n: int, ok: bool, detail: str) -> None:
    """Record and print one acceptance line, then fail the test if ``ok`` is false."""
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
