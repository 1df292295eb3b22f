from __future__ import annotations

import itertools
from collections import defaultdict

import numpy as np
import pytest

from lobforge.book import BookState
from lobforge.centred import (
    CentredState,
    center,
    clear_centred,
    enumerate_centred_preimage,
    from_centred,
    half_up,
    model3_pad,
    parity,
    shift,
    to_centred,
)
from lobforge.errors import BudgetExceeded, OutOfGrid, PreconditionViolated, SideWipedOut
from lobforge.matching import clear

BASE = dict(buy={-3: 3, -2: 2, -1: 1}, sell={1: 1, 3: 3})
ARRIVALS = dict(buy={1: 1, 2: 2}, sell={-2: 1, 0: 1, 2: 1})


def arrived_state() -> CentredState:
    buy = dict(BASE["buy"])
    sell = dict(BASE["sell"])
    for src, dst in ((ARRIVALS["buy"], buy), (ARRIVALS["sell"], sell)):
        for k, v in src.items():
            dst[k] = dst.get(k, 0) + v
    return CentredState.from_levels(3, 10, buy, sell)


def test_half_up_and_parity():
    assert [half_up(p) for p in (-3, -2, -1, 0, 1, 2, 3)] == [-1, -1, 0, 0, 1, 1, 2]
    assert [parity(p) for p in (-3, -2, 5)] == [1, 0, 1]


def test_shift_examples():
    buy = np.array([3, 2, 1, 0, 0, 0, 0])
    zero = np.zeros(7, dtype=int)
    nb, _ = shift(buy, zero, 1)
    assert nb.tolist() == [2, 1, 0, 0, 0, 0, 0]
    assert shift(buy, zero, 0)[0].tolist() == buy.tolist()
    back = shift(*shift(buy, zero, -1), 1)[0]
    assert back.tolist() == buy.tolist()
    edge = np.array([0, 0, 0, 0, 0, 0, 4])
    assert shift(*shift(edge, zero, -1), 1)[0].tolist() != edge.tolist()
    assert not shift(buy, zero, 7)[0].any()


def test_to_centred_reference_books(fig13):
    c = to_centred(fig13, 3)
    assert c.p == 10 and c.levels("buy") == BASE["buy"] and c.levels("sell") == BASE["sell"]
    assert c.is_valid()
    odd = BookState([1, 3, 2, 1, 0, 0, 0, 0, 0], [0, 0, 0, 0, 0, 0, 1, 3, 2])
    c = to_centred(odd, 3)
    assert c.p == 11
    assert c.levels("buy") == {-3: 2, -2: 1} and c.levels("sell") == {1: 1, 2: 3, 3: 2}


def test_round_trip_inside_window():
    s = BookState([0, 0, 2, 1, 0, 0, 0, 0], [0, 0, 0, 0, 0, 3, 1, 0])
    assert from_centred(to_centred(s, 3), 8) == s
    with pytest.raises(OutOfGrid):
        from_centred(to_centred(s, 3), 5)
    with pytest.raises(PreconditionViolated):
        to_centred(BookState([1, 0], [0, 0]), 2)


def test_arrival_example_end_to_end():
    state = arrived_state()
    matched_buy, matched_sell = clear(BookState(state.buy, state.sell)).cleared.arrays()
    middle = CentredState(matched_buy, matched_sell, 10)
    assert middle.levels("buy") == {-3: 3, -2: 2, -1: 1}
    assert middle.levels("sell") == {2: 1, 3: 3}
    a, b = middle.ask_bid()
    assert a + b == 1 and 10 + a + b == 11
    out = clear_centred(state)
    assert out.p == 11
    assert out.levels("buy") == {-3: 2, -2: 1} and out.levels("sell") == {1: 1, 2: 3}
    assert center(middle.buy, middle.sell, 10) == out
    assert state in set(enumerate_centred_preimage(out, m=3, max_exec=3))


def test_center_identity_on_centred_and_odd_shift():
    c = CentredState.from_levels(2, 4, {-1: 1}, {1: 1})
    assert center(c.buy, c.sell, c.p) == c
    odd = center(c.buy, c.sell, 5)
    assert odd.is_valid() and odd.p == 6
    with pytest.raises(PreconditionViolated):
        center(np.zeros(5, int), c.sell, 0)


def test_clear_centred_wipe_out():
    s = CentredState.from_levels(2, 0, {0: 1}, {0: 1})
    with pytest.raises(SideWipedOut):
        clear_centred(s)


def test_center_output_invariants_fuzz(rng):
    for _ in range(3000):
        dp = int(rng.integers(2, 5))
        n = 2 * dp + 1
        split = int(rng.integers(1, n))
        buy = np.zeros(n, dtype=int)
        sell = np.zeros(n, dtype=int)
        buy[:split] = rng.integers(0, 3, split)
        sell[split:] = rng.integers(0, 3, n - split)
        if not buy.any() or not sell.any():
            continue
        out = center(buy, sell, int(rng.integers(-20, 21)))
        assert out.is_valid()


def test_clear_centred_fixes_valid_states_exhaustive():
    for v in itertools.product(range(3), repeat=10):
        for p in (-1, 0):
            s = CentredState(v[:5], v[5:], p)
            if not (s.buy.any() and s.sell.any()):
                continue
            try:
                out = clear_centred(s)
            except SideWipedOut:
                continue
            assert out.is_valid()
            assert clear_centred(out) == out
            assert (out == s) == s.is_valid()


def test_consistency_with_absolute_frame(rng):
    checked = 0
    for _ in range(2000):
        d = 12
        buy = np.zeros(d, dtype=int)
        sell = np.zeros(d, dtype=int)
        buy[4:6] = rng.integers(0, 3, 2)
        sell[6:8] = rng.integers(0, 3, 2)
        buy[5] = max(buy[5], 1)
        sell[6] = max(sell[6], 1)
        base = BookState(buy, sell)
        k = int(rng.integers(4, 8))
        delta_b = np.zeros(d, dtype=int)
        delta_s = np.zeros(d, dtype=int)
        (delta_b if rng.random() < 0.5 else delta_s)[k] += 1
        raw = BookState(buy + delta_b, sell + delta_s)
        cleared = clear(raw).cleared
        if not (cleared.buy.any() and cleared.sell.any()):
            continue
        c = to_centred(base, 3)
        origin = half_up(c.p)
        raw_c = CentredState(
            [raw.buy[i + origin - 1] for i in range(-3, 4)], [raw.sell[i + origin - 1] for i in range(-3, 4)], c.p
        )
        assert from_centred(clear_centred(raw_c), d) == cleared
        checked += 1
    assert checked > 1000


def test_preimage_exhaustive_small_window():
    images = defaultdict(set)
    for v in itertools.product(range(2), repeat=10):
        for p in (-1, 0, 1, 2):
            s = CentredState(v[:5], v[5:], p)
            if not (s.buy.any() and s.sell.any()):
                continue
            try:
                images[clear_centred(s)].add(s)
            except SideWipedOut:
                continue
    for target, pre in images.items():
        found = list(enumerate_centred_preimage(target, m=1, max_exec=5))
        assert len(set(found)) == len(found)
        assert all(clear_centred(e) == target for e in found)
        assert found[0] == target or target in found
        inside = {e for e in found if e.buy.max() <= 1 and e.sell.max() <= 1 and -1 <= e.p <= 2}
        assert inside == pre


def test_preimage_budget():
    target = CentredState.from_levels(2, 0, {-1: 1}, {1: 1})
    with pytest.raises(BudgetExceeded):
        list(enumerate_centred_preimage(target, m=2, max_exec=4, budget=10))


def test_model3_pad(fig13):
    c = to_centred(fig13, 3)
    padded = model3_pad(c, 2, 5, 5)
    a, b = c.ask_bid()
    idx = np.arange(-3, 4)
    assert (padded.buy[idx < a - 2] == 5).all() and (padded.buy[idx >= a - 2] == c.buy[idx >= a - 2]).all()
    assert (padded.sell[idx > b + 2] == 5).all() and (padded.sell[idx <= b + 2] == c.sell[idx <= b + 2]).all()
    assert model3_pad(padded, 2, 5, 5) == padded
    thin = CentredState.from_levels(3, 0, {-1: 1}, {1: 1})
    assert model3_pad(thin, 2, 0, 0) == thin


def test_centred_json_round_trip(fig13):
    c = to_centred(fig13, 3)
    assert CentredState.loads(c.dumps()) == c
    assert c.to_dict()["d_prime"] == 3
