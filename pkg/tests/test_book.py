from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lobforge import book
from lobforge.book import BookState, ask_bid, is_admissible, profile, truncate
from lobforge.errors import BadParameter


def test_ask_bid_reference_book(fig13):
    assert ask_bid(fig13) == (6, 4)
    assert is_admissible(fig13)


def test_ask_bid_empty_book_uses_sentinels():
    assert ask_bid(BookState.empty(5)) == (6, 0)
    assert is_admissible(BookState.empty(5))


def test_ask_bid_single_queues():
    assert ask_bid(BookState([0, 1, 0, 0], [0, 0, 0, 2])) == (4, 2)


def test_crossed_book_not_admissible():
    assert not is_admissible(BookState([0, 0, 2, 0], [0, 2, 0, 0]))


def test_truncation_examples():
    assert truncate([1, 3, 2, 1, 0, 0, 2, 0, 0], "below", 4).tolist() == [1, 3, 2, 1, 0, 0, 0, 0, 0]
    assert truncate([0, 0, 1, 1, 1, 1, 0, 3, 2], "above", 5).tolist() == [0, 0, 0, 0, 1, 1, 0, 3, 2]
    assert truncate([4, 5, 6], "below", 0).tolist() == [0, 0, 0]
    assert truncate([4, 5, 6], "above", 0).tolist() == [4, 5, 6]
    assert truncate([4, 5, 6], "below", 4).tolist() == [4, 5, 6]
    assert truncate([4, 5, 6], "above", 4).tolist() == [0, 0, 0]
    with pytest.raises(BadParameter):
        truncate([1], "sideways", 1)


@given(st.lists(st.integers(0, 9), min_size=1, max_size=8), st.integers(-1, 10))
def test_truncations_reassemble(side, i):
    i = min(i, len(side) + 2)
    total = truncate(side, "below", i) + truncate(side, "above", i + 1)
    assert total.tolist() == side


def test_profile_reference_book(fig13):
    prof = profile(fig13)
    assert prof.cum_buy_above.tolist() == [7, 6, 3, 1, 0, 0, 0, 0, 0]
    assert prof.cum_sell_below.tolist() == [0, 0, 0, 0, 0, 1, 1, 4, 6]
    assert prof.B_inv(2) == 3
    assert prof.S_inv(2) == 8
    assert (prof.p_b, prof.p_a) == (4, 6)


def test_profile_crossed_example(crossed_example):
    prof = profile(crossed_example)
    assert prof.imbalance.tolist() == [-9, -8, -4, -1, 1, 2, 2, 7, 9]
    assert (prof.p_b, prof.p_a) == (4, 5)


def test_inverse_sentinels():
    prof = profile(BookState([0, 1, 0], [0, 1, 0]))
    assert prof.B_inv(5) == 0
    assert prof.S_inv(5) == 4
    assert prof.B(0) == 1 and prof.B(4) == 0
    assert prof.S(0) == 0 and prof.S(4) == 1


def test_profile_invariants_exhaustive(small_states):
    for s in small_states:
        prof = profile(s)
        B, S, g = prof.cum_buy_above, prof.cum_sell_below, prof.imbalance
        assert np.all(np.diff(B) <= 0) and np.all(np.diff(S) >= 0) and np.all(np.diff(g) >= 0)
        assert B.tolist() == [int(s.buy[k:].sum()) for k in range(s.d)]
        assert S.tolist() == [int(s.sell[: k + 1].sum()) for k in range(s.d)]
        assert prof.p_b < prof.p_a
        if is_admissible(s):
            ask, bid = ask_bid(s)
            assert (prof.p_a, prof.p_b) == (ask, bid)


def test_state_validation():
    with pytest.raises(BadParameter):
        BookState([1, -1], [0, 0])
    with pytest.raises(BadParameter):
        BookState([1, 2], [0])
    with pytest.raises(BadParameter):
        BookState([], [])
    with pytest.raises(BadParameter):
        BookState([0.5], [0])


def test_state_is_immutable_and_hashable(fig13):
    with pytest.raises(ValueError):
        fig13.buy[0] = 5
    same = BookState(fig13.buy.tolist(), fig13.sell.tolist())
    assert same == fig13 and hash(same) == hash(fig13)
    assert len({same, fig13}) == 1


def test_json_and_csv_round_trip(tmp_path, fig13):
    assert book.loads_json(book.dumps_json(fig13)) == fig13
    assert book.loads_csv(book.dumps_csv(fig13)) == fig13
    for name in ("b.json", "b.csv"):
        path = tmp_path / name
        book.write_book(fig13, path)
        assert book.read_book(path) == fig13


def test_from_dict_checks_d():
    with pytest.raises(BadParameter):
        BookState.from_dict({"d": 3, "buy": [0, 0], "sell": [0, 0]})
