from __future__ import annotations

import math

import pytest

from lobforge.book import BookState, ask_bid
from lobforge.errors import BadParameter
from lobforge.experiments import (
    canonical_origin,
    compare_grid,
    dumps_compare,
    loads_compare,
    monotone_fraction,
    parse_grid,
    with_best_depths,
)
from lobforge.flow import build_modelAB
from lobforge.kbe import ask_increase_probability
from lobforge.montecarlo import estimate_horizon


def test_canonical_origin_layout():
    s = canonical_origin(3, 5)
    assert list(s.buy) == [2, 4, 3, 0, 0, 0]
    assert list(s.sell) == [0, 0, 0, 5, 4, 2]
    assert ask_bid(s) == (4, 3)


def test_with_best_depths_replaces_only_best_queues():
    t = BookState([1, 1, 0, 0, 0], [0, 0, 0, 7, 2])
    s = with_best_depths(t, 4, 9)
    assert list(s.buy) == [1, 4, 0, 0, 0]
    assert list(s.sell) == [0, 0, 0, 9, 2]
    with pytest.raises(BadParameter):
        with_best_depths(t, 0, 1)


@pytest.mark.parametrize("text,expected", [("3", [1, 2, 3]), ("2-4", [2, 3, 4]), ("1,3,6", [1, 3, 6])])
def test_parse_grid(text, expected):
    assert parse_grid(text) == expected


@pytest.mark.parametrize("text", ["", "0", "a", "1,-2"])
def test_parse_grid_rejects(text):
    with pytest.raises(BadParameter):
        parse_grid(text)


def test_monotone_fraction():
    good = {(1, 1): 0.3, (1, 2): 0.35, (2, 1): 0.2, (2, 2): 0.25}
    assert monotone_fraction(good) == (1.0, 4, 4)
    bad = dict(good)
    bad[(2, 2)] = 0.4  # rises in ask depth from (1, 2)
    frac, ok, total = monotone_fraction(bad)
    assert (ok, total) == (3, 4) and frac == 0.75
    assert math.isnan(monotone_fraction({(1, 1): 0.5})[0])


def test_compare_grid_matches_direct_calls_and_round_trips():
    model = build_modelAB("B", 10, guard="wipeout")
    rows = compare_grid(model, [1, 3], [2], 0.05, 0.001, 60, seed=11, pruning_eps=1e-4, threads=1)
    assert [(r.ask_depth, r.bid_depth) for r in rows] == [(1, 2), (3, 2)]
    for r in rows:
        origin = canonical_origin(r.bid_depth, r.ask_depth)
        est = estimate_horizon(model, origin, 0.05, 60, 11, threads=1)
        assert (r.mc_mean, r.mc_std_error, r.mc_n) == (est.mean, est.std_error, est.n)
        assert r.kbe == ask_increase_probability(model, origin, 0.05, 0.001, 1e-4)
    text = dumps_compare(rows)
    assert text.splitlines()[0] == "ask_depth,bid_depth,mc_mean,mc_std_error,mc_n,mc_timeouts,kbe,kbe_states"
    assert loads_compare(text) == rows
    assert dumps_compare(loads_compare(text)) == text


def test_compare_grid_without_kbe_leaves_blank_columns():
    model = build_modelAB("B", 10, guard="wipeout")
    rows = compare_grid(model, [1], [1], 0.05, None, 20, seed=1, threads=1)
    assert rows[0].kbe is None
    line = dumps_compare(rows).splitlines()[1]
    assert line.endswith(",,")
    assert loads_compare(dumps_compare(rows)) == rows
