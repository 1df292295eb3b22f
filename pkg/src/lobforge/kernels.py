"""Array-level kernels shared by matching, order flow, Monte Carlo and KBE.

Conventions used throughout this module:

* a side is an int64 array of length ``d``; slot ``i`` holds price ``i + 1``;
* ask/bid are 1-based prices, with ``d + 1`` for an empty sell side and
  ``0`` for an empty buy side;
* event kinds are 0 limit buy, 1 limit sell, 2 cancel buy, 3 cancel sell.

Every function here compiles under numba and also runs unmodified as
plain NumPy (see ``_accel``).
"""

from __future__ import annotations

import numpy as np

from ._accel import jit

LIMIT_BUY = 0
LIMIT_SELL = 1
CANCEL_BUY = 2
CANCEL_SELL = 3

# table-model gate codes
GATE_NONE = 0
GATE_BELOW_CAP = 1  # depth < n
GATE_BELOW_CAP_MINUS_SIZE = 2  # depth < n - z
GATE_AT_LEAST_CAP = 3  # depth >= n

GUARD_NONE = 0
GUARD_STRICT = 1  # rate 0 when z >= min(B(1), S(d))
GUARD_WIPEOUT = 2  # rate 0 when the cleared result has an empty side

ANCHOR_ABSOLUTE = 0
ANCHOR_RELATIVE = 1

STATUS_OK = 0
STATUS_DEAD = 1
STATUS_BUDGET = 2

STOP_NONE = 0
STOP_ASK = 1
STOP_MID = 2


@jit
def ask_bid(buy, sell):
    d = buy.shape[0]
    ask = d + 1
    for i in range(d):
        if sell[i] > 0:
            ask = i + 1
            break
    bid = 0
    for i in range(d - 1, -1, -1):
        if buy[i] > 0:
            bid = i + 1
            break
    return ask, bid


@jit
def cumulative(buy, sell):
    """Return (B, S) with B[k-1] = sum_{i>=k} buy_i and S[k-1] = sum_{i<=k} sell_i."""
    d = buy.shape[0]
    B = np.empty(d, dtype=np.int64)
    S = np.empty(d, dtype=np.int64)
    acc = 0
    for i in range(d - 1, -1, -1):
        acc += buy[i]
        B[i] = acc
    acc = 0
    for i in range(d):
        acc += sell[i]
        S[i] = acc
    return B, S


@jit
def inv_buy(B, z):
    """sup{i : B(i) >= z}, 0 when empty."""
    for i in range(B.shape[0] - 1, -1, -1):
        if B[i] >= z:
            return i + 1
    return 0


@jit
def inv_sell(S, z):
    """inf{i : S(i) >= z}, d + 1 when empty."""
    for i in range(S.shape[0]):
        if S[i] >= z:
            return i + 1
    return S.shape[0] + 1


@jit
def clearing_prices(buy, sell):
    """(p_B, p_A) from the sign changes of g = S - B; sentinels 0 and d + 1."""
    d = buy.shape[0]
    B, S = cumulative(buy, sell)
    p_a = d + 1
    for i in range(d):
        if S[i] - B[i] > 0:
            p_a = i + 1
            break
    p_b = 0
    for i in range(d - 1, -1, -1):
        if S[i] - B[i] < 0:
            p_b = i + 1
            break
    return p_b, p_a


@jit
def clear(buy, sell):
    """Order-matching clearing; returns new (buy, sell) arrays."""
    d = buy.shape[0]
    B, S = cumulative(buy, sell)
    out_buy = np.zeros(d, dtype=np.int64)
    out_sell = np.zeros(d, dtype=np.int64)
    p_b, p_a = clearing_prices(buy, sell)
    if p_b > 0:
        g = S[p_b - 1] - B[p_b - 1]
        x = buy[p_b - 1]
        if g <= -x:
            for i in range(p_b):
                out_buy[i] = buy[i]
        else:
            for i in range(p_b - 1):
                out_buy[i] = buy[i]
            out_buy[p_b - 1] = -min(0, g)
    if p_a <= d:
        g = S[p_a - 1] - B[p_a - 1]
        x = sell[p_a - 1]
        if g >= x:
            for i in range(p_a - 1, d):
                out_sell[i] = sell[i]
        else:
            for i in range(p_a, d):
                out_sell[i] = sell[i]
            out_sell[p_a - 1] = max(0, g)
    return out_buy, out_sell


@jit
def centre(buy, sell, p):
    """Shift a crossing-free window so its mid is at the origin.

    Works on centred windows of length 2d'+1. Returns ``(buy, sell, p')``
    as new arrays; requires both sides non-empty and ask > bid.
    """
    n = buy.shape[0]
    dp = (n - 1) // 2
    ask, bid = ask_bid(buy, sell)
    a = ask - 1 - dp
    b = bid - 1 - dp
    par = p % 2
    p_new = p + a + b + par
    s = (p_new + p_new % 2) // 2 - (p + par) // 2
    nb = np.zeros(n, dtype=np.int64)
    ns = np.zeros(n, dtype=np.int64)
    for j in range(n):
        src = j + s
        if 0 <= src < n:
            nb[j] = buy[src]
            ns[j] = sell[src]
    return nb, ns, p_new


@jit
def clear_centre(buy, sell, p):
    """Window clearing then re-centring; ``ok`` is False when a side is wiped out."""
    nb, ns = clear(buy, sell)
    if nb.sum() == 0 or ns.sum() == 0:
        return nb, ns, p, False
    cb, cs, p_new = centre(nb, ns, p)
    return cb, cs, p_new, True


@jit
def perturb(buy, sell, kind, k, z):
    """In-place X -> X + event (no clearing). ``k`` is a 1-based price."""
    if kind == LIMIT_BUY:
        buy[k - 1] += z
    elif kind == LIMIT_SELL:
        sell[k - 1] += z
    elif kind == CANCEL_BUY:
        buy[k - 1] -= z
    else:
        sell[k - 1] -= z


@jit
def fast_event(buy, sell, kind, k, z):
    """Single event followed by clearing, via the per-case closed forms.

    Works in place on ``buy``/``sell``. Returns ``(case, bid, ask)`` where
    ``case`` is 10 * kind-number + sub-case (11..14, 21..24, 31..32,
    41..42), or ``(0, -1, -1)`` without touching the arrays when the
    preconditions do not hold (state not admissible, a side empty, size
    too large, cancellation beyond the queue).
    """
    d = buy.shape[0]
    ask, bid = ask_bid(buy, sell)
    if bid == 0 or ask == d + 1 or ask <= bid or k < 1 or k > d or z < 1:
        return 0, -1, -1
    B, S = cumulative(buy, sell)
    if z >= min(B[0], S[d - 1]):
        return 0, -1, -1
    if kind == LIMIT_BUY:
        if k <= bid:
            buy[k - 1] += z
            return 11, bid, ask
        if k < ask:
            buy[k - 1] += z
            return 12, k, ask
        j = inv_sell(S, z)
        if k < j:
            sk = S[k - 1]
            buy[k - 1] += z - sk
            for i in range(k):
                sell[i] = 0
            return 13, k, inv_sell(S, sk + 1)
        for i in range(j - 1):
            sell[i] = 0
        sell[j - 1] = S[j - 1] - z
        return 14, bid, inv_sell(S, z + 1)
    if kind == LIMIT_SELL:
        if k >= ask:
            sell[k - 1] += z
            return 21, bid, ask
        if k > bid:
            sell[k - 1] += z
            return 22, bid, k
        j = inv_buy(B, z)
        if k > j:
            bk = B[k - 1]
            sell[k - 1] += z - bk
            for i in range(k - 1, d):
                buy[i] = 0
            return 23, inv_buy(B, bk + 1), k
        for i in range(j, d):
            buy[i] = 0
        buy[j - 1] = B[j - 1] - z
        return 24, inv_buy(B, z + 1), ask
    if kind == CANCEL_BUY:
        if z > buy[k - 1]:
            return 0, -1, -1
        buy[k - 1] -= z
        if k == bid:
            return 31, inv_buy(B, z + 1), ask
        return 32, bid, ask
    if z > sell[k - 1]:
        return 0, -1, -1
    sell[k - 1] -= z
    if k == ask:
        return 41, bid, inv_sell(S, z + 1)
    return 42, bid, ask


@jit
def step(buy, sell, kind, k, z):
    """Apply one event with clearing; fast path when possible, else full clear.

    Returns new (buy, sell) arrays; inputs are left untouched.
    """
    nb = buy.copy()
    ns = sell.copy()
    case, _, _ = fast_event(nb, ns, kind, k, z)
    if case != 0:
        return nb, ns
    nb = buy.copy()
    ns = sell.copy()
    perturb(nb, ns, kind, k, z)
    return clear(nb, ns)


@jit
def table_rate(kind, k, z, buy, sell, ask, bid, B, S, rates, anchor, gate, cap, prop, guard):
    """Rate of one event under a table model (see ``flow.TableModel``)."""
    d = buy.shape[0]
    m = rates.shape[1]
    if z < 1 or z > m:
        return 0.0
    if anchor[kind] == ANCHOR_ABSOLUTE:
        col = k - 1
    elif kind == LIMIT_BUY:
        col = ask - k
    elif kind == LIMIT_SELL:
        col = k - bid
    elif kind == CANCEL_BUY:
        col = bid - k
    else:
        col = k - ask
    if col < 0 or col >= rates.shape[2]:
        return 0.0
    r = rates[kind, z - 1, col]
    if r == 0.0:
        return 0.0
    depth = buy[k - 1] if (kind == LIMIT_BUY or kind == CANCEL_BUY) else sell[k - 1]
    g = gate[kind]
    if g == GATE_BELOW_CAP:
        if depth >= cap:
            return 0.0
    elif g == GATE_BELOW_CAP_MINUS_SIZE:
        if depth >= cap - z:
            return 0.0
    elif g == GATE_AT_LEAST_CAP:
        if depth < cap:
            return 0.0
    if (kind == CANCEL_BUY or kind == CANCEL_SELL) and z > depth:
        return 0.0
    btot = B[0]
    stot = S[d - 1]
    if guard == GUARD_STRICT:
        if z >= min(btot, stot):
            return 0.0
    elif guard == GUARD_WIPEOUT:
        if kind == LIMIT_BUY:
            ex = min(z, S[k - 1])
            if stot - ex <= 0 or btot + z - ex <= 0:
                return 0.0
        elif kind == LIMIT_SELL:
            ex = min(z, B[k - 1])
            if btot - ex <= 0 or stot + z - ex <= 0:
                return 0.0
        elif kind == CANCEL_BUY:
            if btot - z <= 0 or stot <= 0:
                return 0.0
        else:
            if stot - z <= 0 or btot <= 0:
                return 0.0
    if prop[kind] != 0:
        r = r * depth
    return r


@jit
def table_events(buy, sell, rates, anchor, gate, cap, prop, guard, out_kind, out_price, out_size, out_rate):
    """Write every positive-rate event in (kind, price, size) order; return count."""
    d = buy.shape[0]
    m = rates.shape[1]
    ask, bid = ask_bid(buy, sell)
    B, S = cumulative(buy, sell)
    n = 0
    for kind in range(4):
        for k in range(1, d + 1):
            for z in range(1, m + 1):
                r = table_rate(kind, k, z, buy, sell, ask, bid, B, S, rates, anchor, gate, cap, prop, guard)
                if r > 0.0:
                    out_kind[n] = kind
                    out_price[n] = k
                    out_size[n] = z
                    out_rate[n] = r
                    n += 1
    return n


@jit
def pick(rates, n, u):
    """Index of the first event whose cumulative rate exceeds ``u``."""
    acc = 0.0
    last = -1
    for i in range(n):
        if rates[i] > 0.0:
            acc += rates[i]
            last = i
            if acc > u:
                return i
    return last


@jit(nogil=True)
def run_path(buy0, sell0, rates, anchor, gate, cap, prop, guard, horizon, stop_mode, max_events, rng,
             rec_time, rec_kind, rec_price, rec_size, rec_ask, rec_bid, record):
    """Simulate one path of the table-model LOB chain.

    Stops at ``horizon`` (may be ``inf``), at the first change of the ask
    (``stop_mode`` STOP_ASK) or of ask + bid (STOP_MID), or after
    ``max_events`` events. Draw order per step: exponential wait, then one
    uniform for the event.

    Returns ``(status, n_events, t, buy, sell)``.
    """
    d = buy0.shape[0]
    m = rates.shape[1]
    cap_ev = 4 * d * m
    ev_kind = np.empty(cap_ev, dtype=np.int64)
    ev_price = np.empty(cap_ev, dtype=np.int64)
    ev_size = np.empty(cap_ev, dtype=np.int64)
    ev_rate = np.empty(cap_ev, dtype=np.float64)
    buy = buy0.copy()
    sell = sell0.copy()
    ask0, bid0 = ask_bid(buy, sell)
    t = 0.0
    n_events = 0
    while True:
        n = table_events(buy, sell, rates, anchor, gate, cap, prop, guard, ev_kind, ev_price, ev_size, ev_rate)
        total = 0.0
        for i in range(n):
            total += ev_rate[i]
        if total <= 0.0:
            if stop_mode != STOP_NONE:
                return STATUS_DEAD, n_events, t, buy, sell
            return STATUS_OK, n_events, horizon, buy, sell
        if n_events >= max_events:
            return STATUS_BUDGET, n_events, t, buy, sell
        wait = rng.exponential(1.0 / total)
        if t + wait > horizon:
            return STATUS_OK, n_events, horizon, buy, sell
        t += wait
        j = pick(ev_rate, n, rng.random() * total)
        buy, sell = step(buy, sell, ev_kind[j], ev_price[j], ev_size[j])
        ask, bid = ask_bid(buy, sell)
        if record:
            rec_time[n_events] = t
            rec_kind[n_events] = ev_kind[j]
            rec_price[n_events] = ev_price[j]
            rec_size[n_events] = ev_size[j]
            rec_ask[n_events] = ask
            rec_bid[n_events] = bid
        n_events += 1
        if stop_mode == STOP_ASK and ask != ask0:
            return STATUS_OK, n_events, t, buy, sell
        if stop_mode == STOP_MID and ask + bid != ask0 + bid0:
            return STATUS_OK, n_events, t, buy, sell
