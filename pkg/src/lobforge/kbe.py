"""Backward Kolmogorov equation solved by forward Euler on a lazily explored state set.

For a terminal function f the scheme is

    w(t_N) = f,    w(t_{n-1}) = (I + dt L) w(t_n),

and w(0, X0) approximates E[f(X_T) | X_0 = X0]. Since the reachable set is
far too large to enumerate, states are discovered by pushing probability
mass forward from X0 with the same Euler step. A state is expanded (its
row of L switched on) at the first step where it holds at least
``pruning_eps`` of mass; until then it is frozen and keeps its terminal
value. The backward sweep uses exactly the rows that were active at each
step, so it agrees with the forward mass estimate to rounding.

Table models in the absolute frame run through compiled kernels with
states packed into int64 keys; every other model uses a plain Python path
over :func:`generator.transition_distribution`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from ._accel import backend_name, int_dict, jit, pjit, prange
from .book import BookState, ask_bid, is_admissible
from .errors import BadParameter, BudgetExceeded, PreconditionViolated, StabilityViolated
from .flow import IntensityModel, TableModel
from .generator import StateFunction, transition_distribution

ST_OK = 0
ST_UNSTABLE = 1
ST_BUDGET = 2
ST_OVERFLOW = 3


class AskIncrease:
    """Terminal indicator 1{a(X) > level} (empty sell side counts as ask d+1)."""

    def __init__(self, level: int):
        self.level = int(level)
        self.default = 0.0

    def __call__(self, state) -> float:
        if isinstance(state, BookState):
            return 1.0 if ask_bid(state)[0] > self.level else 0.0
        raise BadParameter("AskIncrease is defined on absolute-frame books")

    def on_arrays(self, buys: np.ndarray, sells: np.ndarray) -> np.ndarray:
        d = sells.shape[1]
        nz = sells > 0
        ask = np.where(nz.any(axis=1), nz.argmax(axis=1) + 1, d + 1)
        return (ask > self.level).astype(np.float64)


@dataclass
class KbeProblem:
    model: IntensityModel
    terminal: Callable
    horizon: float
    dt: float
    origin: object
    pruning_eps: float = 1e-8
    max_states: int = 30_000_000

    def __post_init__(self):
        if not (self.horizon >= 0 and math.isfinite(self.horizon)):
            raise BadParameter("horizon must be finite and non-negative")
        if self.horizon > 0 and not 0 < self.dt <= self.horizon:
            raise BadParameter("dt must satisfy 0 < dt <= T")
        if self.pruning_eps < 0:
            raise BadParameter("pruning_eps must be non-negative")
        if isinstance(self.origin, BookState) and not is_admissible(self.origin):
            raise PreconditionViolated("origin must be admissible")
        if hasattr(self.origin, "is_valid") and not self.origin.is_valid():
            raise PreconditionViolated("origin must be a valid centred state")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt)) if self.horizon > 0 else 0

    @property
    def rounding(self) -> float:
        """N_T * dt - T, at most dt / 2 in magnitude."""
        return self.n_steps * self.dt - self.horizon


class KbeSolution(StateFunction):
    """u(0, .) on the explored set; states never reached fall back to ``default``.

    ``value`` is u(0, origin). ``diagnostics`` records the truncation:
    explored/expanded counts, edge count, the largest total rate met,
    mass left on frozen states, the step rounding and timings.
    """

    def __init__(self, value: float, lookup: Callable | None, default: float, diagnostics: dict):
        super().__init__(default=default, fn=lookup)
        self.value = float(value)
        self.diagnostics = diagnostics


# -- compiled path ---------------------------------------------------------


@jit
def _encode(buy, sell, base):
    key = 0
    for v in buy:
        key = key * base + v
    for v in sell:
        key = key * base + v
    return key


@jit
def _decode(key, base, buy, sell):
    d = buy.shape[0]
    for i in range(d - 1, -1, -1):
        sell[i] = key % base
        key //= base
    for i in range(d - 1, -1, -1):
        buy[i] = key % base
        key //= base


@jit
def _grow_int(a, n):
    out = np.empty(max(n, a.shape[0] + a.shape[0] // 2), dtype=a.dtype)
    out[: a.shape[0]] = a
    return out


@jit
def _grow_float(a, n):
    out = np.zeros(max(n, a.shape[0] + a.shape[0] // 2), dtype=np.float64)
    out[: a.shape[0]] = a
    return out


@jit
def _explore(buy0, sell0, rates, anchor, gate, cap, prop, guard, base, dt, n_steps, eps, max_states, index):
    d = buy0.shape[0]
    m = rates.shape[1]
    n_ev = 4 * d * m
    ek = np.empty(n_ev, dtype=np.int64)
    ep = np.empty(n_ev, dtype=np.int64)
    ez = np.empty(n_ev, dtype=np.int64)
    er = np.empty(n_ev, dtype=np.float64)
    buy = np.empty(d, dtype=np.int64)
    sell = np.empty(d, dtype=np.int64)

    size = 1024
    keys = np.empty(size, dtype=np.int64)
    expand_step = np.full(size, -1, dtype=np.int64)
    start = np.zeros(size, dtype=np.int64)
    count = np.zeros(size, dtype=np.int64)
    mass = np.zeros(size, dtype=np.float64)
    nxt = np.zeros(size, dtype=np.float64)
    dst = np.empty(8 * size, dtype=np.int32)
    rt = np.empty(8 * size, dtype=np.float64)

    keys[0] = _encode(buy0, sell0, base)
    index[keys[0]] = 0
    mass[0] = 1.0
    ns = 1
    ne = 0
    max_rate = 0.0
    status = ST_OK
    for s in range(n_steps):
        n_cur = ns
        for i in range(n_cur):
            nxt[i] = mass[i]
        for i in range(n_cur):
            pm = mass[i]
            if pm == 0.0:
                continue
            if expand_step[i] < 0:
                if pm < eps:
                    continue
                _decode(keys[i], base, buy, sell)
                n = kernels.table_events(buy, sell, rates, anchor, gate, cap, prop, guard, ek, ep, ez, er)
                if ne + n > dst.shape[0]:
                    dst = _grow_int(dst, ne + n)
                    rt = _grow_float(rt, ne + n)
                total = 0.0
                for j in range(n):
                    nb, nsl = kernels.step(buy, sell, ek[j], ep[j], ez[j])
                    for q in range(d):
                        if nb[q] >= base or nsl[q] >= base:
                            return ST_OVERFLOW, ns, ne, max_rate, keys, expand_step, start, count, dst, rt, mass
                    key = _encode(nb, nsl, base)
                    idx = index.get(key, -1)
                    if idx < 0:
                        if ns >= max_states:
                            return ST_BUDGET, ns, ne, max_rate, keys, expand_step, start, count, dst, rt, mass
                        if ns >= keys.shape[0]:
                            keys = _grow_int(keys, ns + 1)
                            grown = _grow_int(expand_step, ns + 1)
                            grown[expand_step.shape[0]:] = -1
                            expand_step = grown
                            start = _grow_int(start, ns + 1)
                            count = _grow_int(count, ns + 1)
                            mass = _grow_float(mass, ns + 1)
                            nxt = _grow_float(nxt, ns + 1)
                        idx = ns
                        keys[ns] = key
                        index[key] = ns
                        ns += 1
                    dst[ne + j] = idx
                    rt[ne + j] = er[j]
                    total += er[j]
                start[i] = ne
                count[i] = n
                expand_step[i] = s
                ne += n
                if total > max_rate:
                    max_rate = total
                if dt * total >= 1.0:
                    return ST_UNSTABLE, ns, ne, max_rate, keys, expand_step, start, count, dst, rt, mass
            for e in range(start[i], start[i] + count[i]):
                flow = dt * rt[e] * pm
                nxt[dst[e]] += flow
                nxt[i] -= flow
        mass, nxt = nxt, mass
    return status, ns, ne, max_rate, keys, expand_step, start, count, dst, rt, mass


@pjit
def _backward(n_states, expand_step, start, count, dst, rt, f, dt, n_steps):
    w = f.copy()
    wn = f.copy()
    for s in range(n_steps - 1, -1, -1):
        for i in prange(n_states):
            es = expand_step[i]
            if es >= 0 and es <= s:
                wi = w[i]
                acc = 0.0
                for e in range(start[i], start[i] + count[i]):
                    acc += rt[e] * (w[dst[e]] - wi)
                wn[i] = wi + dt * acc
            else:
                wn[i] = w[i]
        w, wn = wn, w
    return w


def _key_base(model: TableModel, origin: BookState) -> int | None:
    d = origin.d
    bits = 63 // (2 * d)
    if bits < 2:
        return None
    base = 1 << bits
    if max(int(origin.buy.max()), int(origin.sell.max())) >= base:
        return None
    return base


def _decode_all(keys: np.ndarray, base: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    cols = np.empty((keys.size, 2 * d), dtype=np.int64)
    k = keys.copy()
    for j in range(2 * d - 1, -1, -1):
        cols[:, j] = k % base
        k //= base
    return cols[:, :d], cols[:, d:]


def _terminal_values(terminal: Callable, buys: np.ndarray, sells: np.ndarray) -> np.ndarray:
    if hasattr(terminal, "on_arrays"):
        return np.asarray(terminal.on_arrays(buys, sells), dtype=np.float64)
    return np.fromiter((terminal(BookState._trusted(b.copy(), s.copy())) for b, s in zip(buys, sells)),
                       dtype=np.float64, count=buys.shape[0])


def _solve_table(problem: KbeProblem, base: int, full: bool) -> KbeSolution:
    model = problem.model
    origin = problem.origin
    d = origin.d
    n_steps = problem.n_steps
    t0 = time.perf_counter()
    index = int_dict()
    status, ns, ne, max_rate, keys, expand_step, start, count, dst, rt, mass = _explore(
        origin.buy.copy(), origin.sell.copy(), *model.kernel_args(), base, float(problem.dt), n_steps,
        float(problem.pruning_eps), int(problem.max_states), index)
    if status == ST_OVERFLOW:
        return _solve_generic(problem, full)
    if status == ST_UNSTABLE:
        raise StabilityViolated(f"dt * total rate = {problem.dt * max_rate:.4g} >= 1; reduce dt")
    if status == ST_BUDGET:
        raise BudgetExceeded(f"explored set exceeded {problem.max_states} states")
    t1 = time.perf_counter()
    keys = keys[:ns]
    buys, sells = _decode_all(keys, base, d)
    f = _terminal_values(problem.terminal, buys, sells)
    m = mass[:ns]
    forward = math.fsum(m * f)
    expanded = expand_step[:ns] >= 0
    diag = _diagnostics(problem, ns, int(expanded.sum()), ne, max_rate, float(m[~expanded].sum()), forward)
    diag["explore_seconds"] = t1 - t0
    lookup = None
    value = forward
    if full:
        w = _backward(ns, expand_step[:ns], start[:ns], count[:ns], dst, rt, f, float(problem.dt), n_steps)
        value = float(w[0])
        order = np.argsort(keys)
        sorted_keys = keys[order]
        sorted_w = w[order]
        default = float(getattr(problem.terminal, "default", 0.0))

        def lookup(state, _base=base):
            if not isinstance(state, BookState) or state.d != d:
                return default
            if max(int(state.buy.max()), int(state.sell.max())) >= _base:
                return default
            key = _encode(state.buy, state.sell, _base)
            j = np.searchsorted(sorted_keys, key)
            if j < sorted_keys.size and sorted_keys[j] == key:
                return float(sorted_w[j])
            return default

        diag["backward_value"] = value
    diag["seconds"] = time.perf_counter() - t0
    return KbeSolution(value, lookup, float(getattr(problem.terminal, "default", 0.0)), diag)


# -- generic path ----------------------------------------------------------


def _solve_generic(problem: KbeProblem, full: bool) -> KbeSolution:
    model = problem.model
    dt = float(problem.dt)
    eps = problem.pruning_eps
    n_steps = problem.n_steps
    t0 = time.perf_counter()
    states = [problem.origin]
    index = {problem.origin: 0}
    expand_step = [-1]
    rows: list = [None]
    mass = [1.0]
    max_rate = 0.0
    n_edges = 0
    for s in range(n_steps):
        nxt = list(mass)
        for i in range(len(states)):
            pm = mass[i]
            if pm == 0.0:
                continue
            if expand_step[i] < 0:
                if pm < eps:
                    continue
                td = transition_distribution(model, states[i])
                total = td.total
                max_rate = max(max_rate, total)
                if dt * total >= 1.0:
                    raise StabilityViolated(f"dt * total rate = {dt * total:.4g} >= 1; reduce dt")
                row = []
                for y, r in zip(td.successors, td.rates):
                    j = index.get(y)
                    if j is None:
                        if len(states) >= problem.max_states:
                            raise BudgetExceeded(f"explored set exceeded {problem.max_states} states")
                        j = len(states)
                        index[y] = j
                        states.append(y)
                        expand_step.append(-1)
                        rows.append(None)
                        mass.append(0.0)
                        nxt.append(0.0)
                    row.append((j, r))
                rows[i] = row
                expand_step[i] = s
                n_edges += len(row)
            for j, r in rows[i]:
                flow = dt * r * pm
                nxt[j] += flow
                nxt[i] -= flow
        mass = nxt
    f = np.array([problem.terminal(x) for x in states], dtype=np.float64)
    m = np.array(mass)
    forward = math.fsum(m * f)
    expanded = np.array(expand_step) >= 0
    diag = _diagnostics(problem, len(states), int(expanded.sum()), n_edges, max_rate, float(m[~expanded].sum()),
                        forward)
    diag["backend"] = "python"
    value = forward
    lookup = None
    if full:
        w = f.copy()
        for s in range(n_steps - 1, -1, -1):
            wn = w.copy()
            for i, row in enumerate(rows):
                if row is not None and expand_step[i] <= s:
                    wi = w[i]
                    wn[i] = wi + dt * math.fsum(r * (w[j] - wi) for j, r in row)
            w = wn
        value = float(w[0])
        table = {x: float(v) for x, v in zip(states, w)}
        default = float(getattr(problem.terminal, "default", 0.0))

        def lookup(state):
            return table.get(state, default)

        diag["backward_value"] = value
    diag["seconds"] = time.perf_counter() - t0
    return KbeSolution(value, lookup, float(getattr(problem.terminal, "default", 0.0)), diag)


def _diagnostics(problem: KbeProblem, n_states: int, n_expanded: int, n_edges: int, max_rate: float,
                 frozen_mass: float, forward: float) -> dict:
    return {
        "backend": backend_name(),
        "n_steps": problem.n_steps,
        "dt": problem.dt,
        "step_rounding": problem.rounding,
        "states": n_states,
        "expanded": n_expanded,
        "edges": n_edges,
        "max_rate": max_rate,
        "frozen_mass": frozen_mass,
        "pruning_bound": problem.pruning_eps * problem.n_steps * problem.dt * max_rate,
        "forward_value": forward,
    }


# -- public entry points ---------------------------------------------------


def solve(problem: KbeProblem, full: bool = True) -> KbeSolution:
    """Run the scheme; ``full=False`` skips the backward sweep and reports the
    (identical up to rounding) forward estimate at the origin only."""
    if problem.n_steps == 0:
        diag = _diagnostics(problem, 1, 0, 0, 0.0, 1.0, float(problem.terminal(problem.origin)))
        return KbeSolution(diag["forward_value"], problem.terminal, float(getattr(problem.terminal, "default", 0.0)),
                           diag)
    model = problem.model
    if isinstance(model, TableModel) and isinstance(problem.origin, BookState):
        base = _key_base(model, problem.origin)
        if base is not None:
            return _solve_table(problem, base, full)
    return _solve_generic(problem, full)


def ask_increase_probability(model: IntensityModel, origin: BookState, T: float, dt: float,
                             pruning_eps: float = 1e-8, **kwargs) -> float:
    """P[a(X_T) > a(X_0)] from the backward equation."""
    return ask_increase_solution(model, origin, T, dt, pruning_eps, **kwargs).value


def ask_increase_solution(model: IntensityModel, origin: BookState, T: float, dt: float,
                          pruning_eps: float = 1e-8, full: bool = False, **kwargs) -> KbeSolution:
    terminal = AskIncrease(ask_bid(origin)[0])
    return solve(KbeProblem(model, terminal, T, dt, origin, pruning_eps, **kwargs), full=full)


@dataclass
class ConvergenceStudy:
    rows: list = field(default_factory=list)  # (dt, value, err)
    reference: float = float("nan")
    dt_min: float = float("nan")

    @property
    def errors(self) -> list[tuple[float, float]]:
        return [(dt, err) for dt, _, err in self.rows]

    def slope(self) -> float:
        """Least-squares slope of log Err against log dt over rows with Err > 0."""
        pts = [(math.log(dt), math.log(err)) for dt, _, err in self.rows if err > 0]
        if len(pts) < 2:
            return float("nan")
        x, y = np.array(pts).T
        return float(np.polyfit(x, y, 1)[0])


def convergence_study(model: IntensityModel, origin: BookState, T: float, dt_list: Sequence[float], dt_min: float,
                      terminal: Callable | None = None, pruning_eps: float = 1e-8) -> ConvergenceStudy:
    """Err(dt) = |w(0, X0; dt) - w(0, X0; dt_min)| for every dt in ``dt_list``."""
    if not dt_list:
        raise BadParameter("dt_list is empty")
    if dt_min > min(dt_list):
        raise BadParameter("dt_min must not exceed the smallest dt")
    if terminal is None:
        terminal = AskIncrease(ask_bid(origin)[0])
    ref = solve(KbeProblem(model, terminal, T, dt_min, origin, pruning_eps), full=False).value
    study = ConvergenceStudy(reference=ref, dt_min=dt_min)
    for dt in sorted(dt_list, reverse=True):
        v = ref if dt == dt_min else solve(KbeProblem(model, terminal, T, dt, origin, pruning_eps), full=False).value
        study.rows.append((dt, v, abs(v - ref)))
    return study
