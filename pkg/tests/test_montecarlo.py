from __future__ import annotations

import math

import numpy as np
import pytest

from lobforge.book import BookState, is_admissible
from lobforge.errors import BadParameter, DeadState
from lobforge.flow import CappedModel, TableModel, build_modelAB
from lobforge.matching import clear, perturb
from lobforge.montecarlo import (
    estimate_first_move,
    estimate_horizon,
    replicate,
    simulate_path,
    summarize,
)

ORIGIN = BookState([2, 4, 1, 0, 0, 0], [0, 0, 0, 1, 4, 2])


def table(entries: dict, d: int = 6, guard: str = "none") -> TableModel:
    t = np.zeros((4, 1, d))
    for (kind, price), r in entries.items():
        t[kind, 0, price - 1] = r
    return TableModel(t, [0] * 4, [0] * 4, guard=guard)


def test_zero_event_budget_gives_origin_only():
    rec = simulate_path(build_modelAB("B", 10), ORIGIN, stop="max-events", max_events=0, rng=1)
    assert rec.states == [ORIGIN] and rec.times == [0.0]


def test_zero_rate_model_holds_for_the_horizon():
    rec = simulate_path(table({}), ORIGIN, stop="horizon", horizon=0.7, rng=1)
    assert len(rec) == 1 and rec.end_time == 0.7
    with pytest.raises(DeadState):
        simulate_path(table({}), ORIGIN, stop="first-ask-move", rng=1)


def test_event_counts_are_poisson():
    lam, T, n = 3.0, 0.5, 100_000
    model = table({(0, 1): lam}, d=2)  # limit buys at price 1 only
    book = BookState([1, 0], [0, 1])
    rng = np.random.default_rng(5)
    counts = np.array([len(simulate_path(model, book, "horizon", T, rng=rng)) - 1 for _ in range(n)])
    mu = lam * T
    assert abs(counts.mean() - mu) <= 3 * math.sqrt(mu / n)
    for k in range(5):
        p = math.exp(-mu) * mu**k / math.factorial(k)
        assert abs((counts == k).mean() - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_path_invariants_and_csv():
    rec = simulate_path(build_modelAB("B", 10, guard="wipeout"), ORIGIN, "horizon", 2.0, rng=3)
    assert len(rec) > 20
    assert all(is_admissible(s) for s in rec.states)
    assert all(b > a for a, b in zip(rec.times, rec.times[1:]))
    for k in range(1, len(rec)):
        assert rec.states[k] == clear(perturb(rec.states[k - 1], rec.events[k])).cleared
    lines = rec.to_csv().splitlines()
    assert lines[0] == "time,kind,price,size,ask,bid"
    assert lines[1] == "0.0,origin,,,4,3"
    assert len(lines) == len(rec) + 1


def test_same_seed_same_path_and_both_engines_agree():
    model = build_modelAB("B", 10, guard="wipeout")
    a = simulate_path(model, ORIGIN, "horizon", 1.0, rng=11)
    b = simulate_path(model, ORIGIN, "horizon", 1.0, rng=11)
    c = simulate_path(CappedModel(model, 1000), ORIGIN, "horizon", 1.0, rng=11)
    assert a.rows() == b.rows() == c.rows()
    assert a.states == c.states


def test_recording_buffer_regrowth_keeps_the_stream():
    model = build_modelAB("A", 10, guard="wipeout")
    long = simulate_path(model, ORIGIN, "max-events", max_events=10_000, rng=2)
    ref = simulate_path(CappedModel(model, 1000), ORIGIN, "max-events", max_events=10_000, rng=2)
    assert len(long) == 10_001
    assert long.rows()[-5:] == ref.rows()[-5:]


def test_first_move_trivial_cases():
    only_ask_cancels = table({(3, 4): 2.0})
    est = estimate_first_move(only_ask_cancels, ORIGIN, 50, seed=1, threads=1)
    assert est.mean == 1.0 and est.std_error == 0.0 and est.n == 50
    book = BookState([1, 0, 0, 0, 0, 0], [0, 0, 0, 0, 0, 1])
    sells_inside = table({(1, 3): 1.0, (1, 4): 1.0, (1, 5): 1.0})
    assert estimate_first_move(sells_inside, book, 50, seed=1, threads=1).mean == 0.0


def test_zero_horizon_is_zero():
    est = estimate_horizon(build_modelAB("B", 10), ORIGIN, 0.0, 20, seed=4, threads=1)
    assert est.mean == 0.0


def test_threads_do_not_change_outcomes():
    model = build_modelAB("B", 10, guard="wipeout")
    serial = replicate(model, ORIGIN, 64, 7, horizon=0.2, threads=1)
    parallel = replicate(model, ORIGIN, 64, 7, horizon=0.2, threads=3)
    assert np.array_equal(serial, parallel)
    assert summarize(serial, 7) == summarize(parallel, 7)


def test_timeouts_are_excluded_and_reported():
    model = build_modelAB("A", 10, guard="wipeout")
    out = replicate(model, ORIGIN, 40, 3, stop="first-ask-move", max_events=2, threads=1)
    est = summarize(out, 3)
    assert est.timeouts == int((out < 0).sum()) > 0
    assert est.n + est.timeouts == 40
    with pytest.raises(BadParameter):
        summarize(np.array([-1, -1, 1]), 0)


def test_standard_error_formula():
    est = summarize(np.array([1, 0, 0, 1, 1, 0, 1, 1]), 0)
    vals = np.array([1, 0, 0, 1, 1, 0, 1, 1], dtype=float)
    assert est.mean == vals.mean()
    assert est.std_error == pytest.approx(vals.std(ddof=1) / math.sqrt(8), rel=1e-15)
