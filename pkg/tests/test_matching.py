from __future__ import annotations

from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_fast_path_case
from lobforge.book import BookState, ask_bid, is_admissible
from lobforge.errors import BudgetExceeded, NegativeQueue, PreconditionViolated
from lobforge.matching import (
    Event,
    EventKind,
    apply_event,
    apply_event_with_case,
    brute_force_clear,
    check_matching_axioms,
    clear,
    clear_batch,
    greedy_clear,
    perturb,
    preimage_contains,
    preimage_mask,
)

depth_lists = st.lists(st.integers(0, 6), min_size=5, max_size=5)


def test_clear_reference_crossing(crossed_example):
    res = clear(crossed_example)
    assert res.cleared == BookState([1, 3, 2, 1, 0, 0, 0, 0, 0], [0, 0, 0, 0, 1, 1, 0, 3, 2])
    assert res.executed == BookState([0, 0, 0, 0, 0, 0, 2, 0, 0], [0, 0, 1, 1, 0, 0, 0, 0, 0])
    assert res.trades == [("sell", 3, 1), ("sell", 4, 1), ("buy", 7, 2)]
    assert check_matching_axioms(crossed_example, res) == []


def test_clear_sell_side_overwhelms():
    res = clear(BookState([0, 3, 0, 0], [5, 0, 0, 0]))
    assert res.cleared == BookState([0, 0, 0, 0], [2, 0, 0, 0])
    assert int(res.executed.buy.sum()) == int(res.executed.sell.sum()) == 3


def test_clear_identity_on_admissible(fig13):
    res = clear(fig13)
    assert res.cleared == fig13
    assert not res.executed.buy.any() and not res.executed.sell.any()
    assert res.trades == []


def test_brute_force_small_cases(crossed_example):
    res = brute_force_clear(BookState([0, 2, 0], [1, 1, 0]))
    assert res.cleared == BookState.empty(3)
    assert res.executed == BookState([0, 2, 0], [1, 1, 0])
    assert brute_force_clear(crossed_example).cleared == clear(crossed_example).cleared


def test_brute_force_budget():
    with pytest.raises(BudgetExceeded):
        brute_force_clear(BookState([50, 50, 50], [50, 50, 50]), budget=1000)


def test_exhaustive_oracle_equivalence(small_states):
    for s in small_states:
        res = clear(s)
        oracle = brute_force_clear(s)
        assert res.cleared == oracle.cleared and res.executed == oracle.executed
        assert check_matching_axioms(s, res) == []
        assert clear(res.cleared).cleared == res.cleared
        assert (res.cleared == s) == is_admissible(s)


@given(depth_lists, depth_lists)
def test_clear_matches_greedy_and_axioms(buy, sell):
    s = BookState(buy, sell)
    res = clear(s)
    assert res.cleared == greedy_clear(s).cleared
    assert check_matching_axioms(s, res) == []
    assert preimage_contains(s, res.cleared)


@pytest.mark.parametrize(
    "event, buy, sell, bid, ask",
    [
        (Event(EventKind.LIMIT_BUY, 7, 2), [1, 3, 2, 1, 0, 0, 1, 0, 0], [0, 0, 0, 0, 0, 0, 0, 3, 2], 7, 8),
        (Event(EventKind.LIMIT_BUY, 9, 2), [1, 3, 2, 1, 0, 0, 0, 0, 0], [0, 0, 0, 0, 0, 0, 0, 2, 2], 4, 8),
        (Event(EventKind.CANCEL_BUY, 4, 1), [1, 3, 2, 0, 0, 0, 0, 0, 0], [0, 0, 0, 0, 0, 1, 0, 3, 2], 3, 6),
    ],
)
def test_apply_event_examples(fig13, event, buy, sell, bid, ask):
    state, b, a = apply_event(fig13, event, strict=True)
    assert state == BookState(buy, sell)
    assert (b, a) == (bid, ask)


def test_sell_cancellation_acts_on_sell_side(fig13):
    state, bid, ask = apply_event(fig13, Event(EventKind.CANCEL_SELL, 8, 2), strict=True)
    assert state == BookState(fig13.buy, [0, 0, 0, 0, 0, 1, 0, 1, 2])
    assert (bid, ask) == (4, 6)
    state, bid, ask = apply_event(fig13, Event(EventKind.CANCEL_SELL, 6, 1), strict=True)
    assert state.sell.tolist() == [0, 0, 0, 0, 0, 0, 0, 3, 2] and ask == 8


def test_apply_event_random_with_coverage(rng):
    seen = Counter()
    for _ in range(4000):
        state, ev = random_fast_path_case(rng)
        out = apply_event_with_case(state, ev, strict=True)
        ref = clear(perturb(state, ev)).cleared
        assert out.state == ref
        assert (out.ask, out.bid) == ask_bid(ref)
        seen[out.case] += 1
    assert set(seen) == {11, 12, 13, 14, 21, 22, 23, 24, 31, 32, 41, 42}


def test_apply_event_outside_fast_path(fig13):
    big = Event(EventKind.LIMIT_BUY, 9, 6)
    with pytest.raises(PreconditionViolated):
        apply_event(fig13, big, strict=True)
    state, bid, ask = apply_event(fig13, big)
    assert state == clear(perturb(fig13, big)).cleared
    assert (ask, bid) == (10, 4)
    with pytest.raises(NegativeQueue):
        apply_event(fig13, Event(EventKind.CANCEL_BUY, 5, 1))


def test_preimage_examples(crossed_example, fig13):
    target = clear(crossed_example).cleared
    assert preimage_contains(crossed_example, target)
    assert preimage_contains(fig13, fig13)
    unbalanced = BookState(fig13.buy + np.eye(9, dtype=int)[0], fig13.sell)
    assert not preimage_contains(unbalanced, fig13)
    with pytest.raises(PreconditionViolated):
        preimage_contains(fig13, crossed_example)


def test_preimage_partition_sample(small_states):
    buys = np.array([s.buy for s in small_states])
    sells = np.array([s.sell for s in small_states])
    images = [clear(s).cleared for s in small_states]
    targets = [s for s in small_states if is_admissible(s)][::7]
    for t in targets:
        mask = preimage_mask(buys, sells, t)
        assert mask.tolist() == [img == t for img in images]


def test_clear_batch():
    state = BookState([0, 2, 0, 0], [0, 0, 0, 3])
    assert clear_batch(state, []).cleared == state
    netted = [Event(EventKind.LIMIT_BUY, 3, 1), Event(EventKind.CANCEL_BUY, 3, 1)]
    assert clear_batch(state, netted).cleared == state
    with pytest.raises(NegativeQueue):
        clear_batch(state, [Event(EventKind.CANCEL_SELL, 4, 4)])
    res = clear_batch(state, [Event(EventKind.LIMIT_BUY, 4, 2), Event(EventKind.LIMIT_SELL, 1, 1)])
    assert res.cleared == BookState([0, 2, 0, 0], [0, 0, 0, 2])
    assert res.trades == [("sell", 1, 1), ("sell", 4, 1), ("buy", 4, 2)]


def test_event_kind_parse():
    assert EventKind.parse("limit-buy") is EventKind.LIMIT_BUY
    assert EventKind.parse("CS") is EventKind.CANCEL_SELL
    with pytest.raises(ValueError):
        EventKind.parse("market")
