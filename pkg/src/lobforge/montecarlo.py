"""Event-driven simulation of the book process and the two ask-price estimators.

Replication ``r`` of a run seeded with ``seed`` draws from
``numpy.random.default_rng([seed, r])``, so results do not depend on how
replications are spread over threads. Per step the simulator draws the
exponential waiting time first and then one uniform to pick the event.
"""

from __future__ import annotations

import concurrent.futures
import csv
import io
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .book import BookState, ask_bid, is_admissible
from .centred import CentredState, half_up
from .errors import BadParameter, DeadState, PreconditionViolated
from .flow import IntensityModel, TableModel, sample_next_event
from .matching import Event, EventKind

STOPS = {"horizon": kernels.STOP_NONE, "max-events": kernels.STOP_NONE, "first-ask-move": kernels.STOP_ASK,
         "first-mid-move": kernels.STOP_MID}
DEFAULT_BUDGET = 1_000_000

OUTCOME_FAIL = 0
OUTCOME_SUCCESS = 1
OUTCOME_TIMEOUT = -1


def default_threads() -> int:
    env = os.environ.get("LOBFORGE_THREADS", "").strip()
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise BadParameter(f"LOBFORGE_THREADS must be an integer, got {env!r}") from exc
        if n < 1:
            raise BadParameter("LOBFORGE_THREADS must be at least 1")
        return n
    return os.cpu_count() or 1


def _quotes(state) -> tuple[int, int]:
    # absolute ask and bid of either kind of state
    if isinstance(state, CentredState):
        a, b = state.ask_bid()
        origin = half_up(state.p)
        return origin + a, origin + b
    return ask_bid(state)


@dataclass
class PathRecord:
    """One simulated path. Entry 0 is the origin (no event); entry k > 0 is the
    book right after ``events[k]`` at ``times[k]``."""

    times: list = field(default_factory=list)
    events: list = field(default_factory=list)
    states: list = field(default_factory=list)
    asks: list = field(default_factory=list)
    bids: list = field(default_factory=list)
    end_time: float = 0.0
    status: str = "ok"  # ok | timeout

    def __len__(self) -> int:
        return len(self.states)

    def rows(self) -> list[tuple]:
        out = []
        for t, ev, a, b in zip(self.times, self.events, self.asks, self.bids):
            if ev is None:
                out.append((repr(float(t)), "origin", "", "", a, b))
            else:
                out.append((repr(float(t)), ev.kind.label, ev.price, ev.size, a, b))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("time", "kind", "price", "size", "ask", "bid"))
        w.writerows(self.rows())
        return buf.getvalue()


@dataclass
class Estimate:
    mean: float
    std_error: float
    n: int
    seed: int
    timeouts: int = 0
    successes: int = 0

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "n": self.n, "seed": self.seed,
                "timeouts": self.timeouts, "successes": self.successes}


def _check_origin(model: IntensityModel, origin) -> None:
    if model.frame == "absolute":
        if not isinstance(origin, BookState) or not is_admissible(origin):
            raise PreconditionViolated("origin must be an admissible BookState")
    elif not isinstance(origin, CentredState) or not origin.is_valid():
        raise PreconditionViolated("origin must be a valid CentredState")


def _compiled(model: IntensityModel, origin) -> bool:
    return isinstance(model, TableModel) and isinstance(origin, BookState)


def _stop_mode(stop: str) -> int:
    if stop not in STOPS:
        raise BadParameter(f"stop must be one of {sorted(STOPS)}")
    return STOPS[stop]


def _generic_run(model, origin, horizon, stop_mode, max_events, rng, record: PathRecord | None):
    # returns (status, n_events, t, final_state)
    state = origin
    ask0, bid0 = _quotes(origin)
    t = 0.0
    n = 0
    while True:
        if model.total_rate(state) <= 0.0:
            if stop_mode != kernels.STOP_NONE:
                return kernels.STATUS_DEAD, n, t, state
            return kernels.STATUS_OK, n, horizon, state
        if n >= max_events:
            return kernels.STATUS_BUDGET, n, t, state
        sampled = sample_next_event(model, state, rng)
        if t + sampled.wait > horizon:
            return kernels.STATUS_OK, n, horizon, state
        t += sampled.wait
        state = model.successor(state, sampled.event)
        ask, bid = _quotes(state)
        n += 1
        if record is not None:
            record.times.append(t)
            record.events.append(sampled.event)
            record.states.append(state)
            record.asks.append(ask)
            record.bids.append(bid)
        if stop_mode == kernels.STOP_ASK and ask != ask0:
            return kernels.STATUS_OK, n, t, state
        if stop_mode == kernels.STOP_MID and ask + bid != ask0 + bid0:
            return kernels.STATUS_OK, n, t, state


def simulate_path(model: IntensityModel, origin, stop: str = "horizon", horizon: float | None = None,
                  max_events: int | None = None, rng: np.random.Generator | int | None = None) -> PathRecord:
    """Simulate until the stop condition; ``rng`` may be a Generator or a seed.

    ``stop="max-events"`` runs exactly ``max_events`` events (fewer only if
    ``horizon`` is given and reached first). Raises :class:`DeadState` when
    a run that needs another event reaches a state with zero total rate.
    """
    _check_origin(model, origin)
    mode = _stop_mode(stop)
    if stop == "horizon":
        if horizon is None or horizon < 0:
            raise BadParameter("stop='horizon' needs a non-negative horizon")
    elif stop == "max-events" and max_events is None:
        raise BadParameter("stop='max-events' needs max_events")
    horizon = math.inf if horizon is None else float(horizon)
    budget = DEFAULT_BUDGET if max_events is None else int(max_events)
    if budget < 0:
        raise BadParameter("max_events must be non-negative")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    ask0, bid0 = _quotes(origin)
    rec = PathRecord([0.0], [None], [origin], [ask0], [bid0])
    if _compiled(model, origin):
        size = max(1, min(budget, 4096))
        saved = rng.bit_generator.state
        while True:
            arrays = [np.zeros(size, dtype=np.float64)] + [np.zeros(size, dtype=np.int64) for _ in range(5)]
            status, n, t, _, _ = kernels.run_path(origin.buy, origin.sell, *model.kernel_args(), horizon, mode,
                                                  min(budget, size), rng, *arrays, True)
            if status != kernels.STATUS_BUDGET or size >= budget:
                break
            # recording buffer too small: replay the same draws with a larger one
            rng.bit_generator.state = saved
            size = min(budget, 8 * size)
        times, kinds, prices, sizes, asks, bids = arrays
        state = origin
        for i in range(n):
            ev = Event(EventKind(int(kinds[i])), int(prices[i]), int(sizes[i]))
            state = model.successor(state, ev)
            rec.times.append(float(times[i]))
            rec.events.append(ev)
            rec.states.append(state)
            rec.asks.append(int(asks[i]))
            rec.bids.append(int(bids[i]))
    else:
        status, n, t, _ = _generic_run(model, origin, horizon, mode, budget, rng, rec)
    if status == kernels.STATUS_DEAD or (status == kernels.STATUS_OK and math.isinf(t)):
        raise DeadState(f"path reached a state with no possible event after {n} events")
    rec.status = "timeout" if status == kernels.STATUS_BUDGET and stop != "max-events" else "ok"
    rec.end_time = float(t)
    return rec


def _outcome(model, origin, seed: int, r: int, horizon: float, mode: int, budget: int) -> int:
    rng = np.random.default_rng([seed, r])
    ask0, bid0 = _quotes(origin)
    if _compiled(model, origin):
        dummy_f = np.zeros(1, dtype=np.float64)
        dummy_i = np.zeros(1, dtype=np.int64)
        status, _, _, buy, sell = kernels.run_path(origin.buy, origin.sell, *model.kernel_args(), horizon, mode,
                                                   budget, rng, dummy_f, dummy_i, dummy_i, dummy_i, dummy_i,
                                                   dummy_i, False)
        ask, bid = kernels.ask_bid(buy, sell)
    else:
        status, _, _, state = _generic_run(model, origin, horizon, mode, budget, rng, None)
        ask, bid = _quotes(state)
    if status == kernels.STATUS_DEAD:
        raise DeadState(f"replication {r} reached a state with no possible event before the stop condition")
    if status == kernels.STATUS_BUDGET:
        return OUTCOME_TIMEOUT
    if mode == kernels.STOP_MID:
        return OUTCOME_SUCCESS if ask + bid > ask0 + bid0 else OUTCOME_FAIL
    return OUTCOME_SUCCESS if ask > ask0 else OUTCOME_FAIL


def replicate(model: IntensityModel, origin, n_reps: int, seed: int, horizon: float = math.inf,
              stop: str = "horizon", max_events: int = DEFAULT_BUDGET, threads: int | None = None) -> np.ndarray:
    """Outcome per replication (1 success, 0 failure, -1 budget timeout), in replication order."""
    _check_origin(model, origin)
    mode = _stop_mode(stop)
    if n_reps < 0:
        raise BadParameter("n_reps must be non-negative")
    threads = default_threads() if threads is None else int(threads)
    if threads < 1:
        raise BadParameter("threads must be at least 1")
    out = np.empty(n_reps, dtype=np.int64)

    def work(chunk: range) -> None:
        for r in chunk:
            out[r] = _outcome(model, origin, seed, r, horizon, mode, max_events)

    if threads == 1 or n_reps < 2:
        work(range(n_reps))
    else:
        step = -(-n_reps // threads)
        chunks = [range(i, min(i + step, n_reps)) for i in range(0, n_reps, step)]
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            for fut in [pool.submit(work, c) for c in chunks]:
                fut.result()
    return out


def summarize(outcomes: np.ndarray, seed: int) -> Estimate:
    """Mean and standard error over the non-timeout outcomes (compensated sums)."""
    valid = outcomes[outcomes >= 0].astype(np.float64)
    n = int(valid.size)
    timeouts = int((outcomes < 0).sum())
    if n < 2:
        raise BadParameter(f"need at least 2 completed replications, got {n}")
    mean = math.fsum(valid) / n
    var = math.fsum((valid - mean) ** 2) / (n - 1)
    return Estimate(mean, math.sqrt(var / n), n, int(seed), timeouts, int(valid.sum()))


def estimate_first_move(model: IntensityModel, origin, n_reps: int, seed: int, semantics: str = "ask",
                        max_events: int = DEFAULT_BUDGET, threads: int | None = None) -> Estimate:
    """P[the first move of the ask (or of the mid, ``semantics="mid"``) is upward]."""
    if semantics not in ("ask", "mid"):
        raise BadParameter("semantics must be 'ask' or 'mid'")
    stop = "first-ask-move" if semantics == "ask" else "first-mid-move"
    return summarize(replicate(model, origin, n_reps, seed, math.inf, stop, max_events, threads), seed)


def estimate_horizon(model: IntensityModel, origin, T: float, n_reps: int, seed: int,
                     max_events: int = DEFAULT_BUDGET, threads: int | None = None) -> Estimate:
    """P[a(X_T) > a(X_0)]."""
    if not T >= 0:
        raise BadParameter("T must be non-negative")
    return summarize(replicate(model, origin, n_reps, seed, float(T), "horizon", max_events, threads), seed)
