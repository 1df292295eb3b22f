"""Command-line front end.

Every verb reads an optional JSON config (``--config``) whose keys are
the long flag names with dashes replaced by underscores; flags given on
the command line win. Results go to ``--out`` (default ``lobforge-out``)
together with ``manifest.json``; the main result is also echoed to
stdout. Exit status: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import backend_name, set_threads
from .book import BookState, read_book
from .errors import BadParameter, LobError
from .flow import build_modelAB, read_model, validate, write_model
from .matching import Event, EventKind, apply_event, clear, clear_batch


class UsageError(Exception):
    def __init__(self, flag: str, reason: str):
        super().__init__(f"{flag}: {reason}")
        self.flag = flag


DEFAULTS = {
    "common": {"out": "lobforge-out", "threads": None, "seed": 0},
    "clear": {"book": None, "events": None, "sequential": False},
    "simulate": {"model": "B", "n": 10, "guard": "wipeout", "origin": "2,4,1,0,0,0/0,0,0,1,4,2", "stop": "horizon",
                 "T": 0.2, "max_events": None, "reps": 0, "paths": 1},
    "kbe": {"model": "B", "n": 10, "guard": "wipeout", "origin": "2,4,1,0,0,0/0,0,0,1,4,2", "T": 0.2, "dt": 5e-4,
            "eps": 1e-8, "asks": None, "bids": None, "grid": None, "convergence": False, "dts": None,
            "dt_min": None},
    "calibrate": {"messages": None, "scheme": "B", "d": 6, "unit_size": 100, "m": 6, "n": 10, "tick": 100,
                  "guard": "wipeout"},
    "compare": {"model": "B", "n": 10, "guard": "wipeout", "grid": "6x6", "asks": None, "bids": None, "T": 0.2,
                "dt": 5e-4, "eps": 1e-8, "reps": 500, "no_kbe": False},
    "convergence": {"model": "A", "n": 10, "guard": "wipeout", "origin": "2,4,1,0,0,0/0,0,0,1,4,2", "T": 0.2,
                    "dts": "0.004,0.002,0.001,0.0005", "dt_min": 1.25e-4, "eps": 1e-8},
    "validate-model": {"model": None, "n": 10, "guard": "strict", "samples": 200, "d": 6},
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lobforge", description="Limit order book dynamics toolkit")
    p.add_argument("--version", action="version", version=f"lobforge {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with default values for any flag")
        sp.add_argument("--out", help="output directory (default lobforge-out)")
        sp.add_argument("--threads", type=int, help="worker threads (default LOBFORGE_THREADS or CPU count)")
        sp.add_argument("--seed", type=int)

    def model_flags(sp):
        sp.add_argument("--model", help="model JSON file, or A / B for the built-in empirical models")
        sp.add_argument("--n", type=int, help="queue cap of a built-in model")
        sp.add_argument("--guard", choices=["strict", "wipeout", "none"], help="size guard of a built-in model")

    sp = sub.add_parser("clear", help="match a (crossed) book, optionally after a batch of events")
    common(sp)
    sp.add_argument("--book", help="book file (.json or .csv)")
    sp.add_argument("--events", help="CSV with columns kind,price,size")
    sp.add_argument("--sequential", action="store_true", default=None, help="apply events one at a time")

    sp = sub.add_parser("simulate", help="simulate paths and Monte Carlo estimates")
    common(sp)
    model_flags(sp)
    sp.add_argument("--origin", help="'buy/sell' comma lists or a book file")
    sp.add_argument("--stop", choices=["horizon", "first-ask-move", "first-mid-move", "max-events"])
    sp.add_argument("--T", type=float, help="horizon in seconds")
    sp.add_argument("--max-events", type=int)
    sp.add_argument("--reps", type=int, help="replications for the estimate (0: paths only)")
    sp.add_argument("--paths", type=int, help="number of paths written as CSV")

    sp = sub.add_parser("kbe", help="backward-equation probability of an ask increase")
    common(sp)
    model_flags(sp)
    sp.add_argument("--origin")
    sp.add_argument("--T", type=float)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--eps", type=float, help="pruning threshold on probability mass")
    sp.add_argument("--grid", help="NxM: ask depths 1..N times bid depths 1..M")
    sp.add_argument("--asks", help="ask depths, e.g. 1,3,6")
    sp.add_argument("--bids", help="bid depths, e.g. 1,3,6")
    sp.add_argument("--convergence", action="store_true", default=None, help="run the dt convergence study")
    sp.add_argument("--dts")
    sp.add_argument("--dt-min", type=float)

    sp = sub.add_parser("calibrate", help="count-based calibration from a message file")
    common(sp)
    sp.add_argument("--messages", help="LOBSTER-style message CSV")
    sp.add_argument("--scheme", choices=["A", "B", "a", "b"])
    sp.add_argument("--d", type=int)
    sp.add_argument("--unit-size", type=int)
    sp.add_argument("--m", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--tick", type=int)
    sp.add_argument("--guard", choices=["strict", "wipeout", "none"])

    sp = sub.add_parser("compare", help="Monte Carlo against backward equation on a depth grid")
    common(sp)
    model_flags(sp)
    sp.add_argument("--grid")
    sp.add_argument("--asks")
    sp.add_argument("--bids")
    sp.add_argument("--T", type=float)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--reps", type=int)
    sp.add_argument("--no-kbe", action="store_true", default=None, help="Monte Carlo columns only")

    sp = sub.add_parser("convergence", help="Err(dt) table of the backward equation")
    common(sp)
    model_flags(sp)
    sp.add_argument("--origin")
    sp.add_argument("--T", type=float)
    sp.add_argument("--dts")
    sp.add_argument("--dt-min", type=float)
    sp.add_argument("--eps", type=float)

    sp = sub.add_parser("validate-model", help="check a model against the standing assumptions")
    common(sp)
    model_flags(sp)
    sp.add_argument("--samples", type=int, help="random admissible states to check")
    sp.add_argument("--d", type=int, help="grid size of the sampled states")
    return p


def _resolve(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS["common"])
    cfg.update(DEFAULTS[args.command])
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError("--config", str(exc)) from exc
        if not isinstance(loaded, dict):
            raise UsageError("--config", "must hold a JSON object")
        unknown = sorted(set(loaded) - set(cfg))
        if unknown:
            raise UsageError("--config", f"unknown keys {unknown}")
        cfg.update(loaded)
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        cfg[key] = value
    return cfg


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _require(cfg: dict, key: str):
    if cfg.get(key) is None:
        raise UsageError(_flag(key), "is required")
    return cfg[key]


def _origin(text) -> BookState:
    text = str(text)
    if "/" in text and not Path(text).exists():
        try:
            buy, sell = ([int(v) for v in part.split(",")] for part in text.split("/"))
        except ValueError as exc:
            raise UsageError("--origin", f"cannot parse {text!r}") from exc
        return BookState(buy, sell)
    if not Path(text).exists():
        raise UsageError("--origin", f"no such file {text!r}")
    return read_book(text)


def _model(cfg: dict):
    spec = cfg.get("model")
    if spec is None:
        raise UsageError("--model", "is required")
    if str(spec).upper() in ("A", "B") and not Path(str(spec)).exists():
        return build_modelAB(str(spec).upper(), int(cfg["n"]), guard=cfg["guard"])
    if not Path(str(spec)).exists():
        raise UsageError("--model", f"no such file {spec!r}")
    return read_model(spec)


def _threads(cfg: dict) -> int:
    from .montecarlo import default_threads

    n = cfg.get("threads")
    n = default_threads() if n is None else int(n)
    if n < 1:
        raise UsageError("--threads", "must be at least 1")
    set_threads(n)
    return n


def _floats(text: str, flag: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(flag, f"cannot parse {text!r}") from exc


def _depths(cfg: dict) -> tuple[list[int], list[int]]:
    from .experiments import parse_grid

    asks = bids = None
    if cfg.get("grid"):
        text = str(cfg["grid"]).lower()
        if "x" not in text:
            raise UsageError("--grid", "expected NxM")
        a, b = text.split("x", 1)
        try:
            asks, bids = parse_grid(a), parse_grid(b)
        except BadParameter as exc:
            raise UsageError("--grid", str(exc)) from exc
    try:
        if cfg.get("asks"):
            asks = parse_grid(str(cfg["asks"]))
        if cfg.get("bids"):
            bids = parse_grid(str(cfg["bids"]))
    except BadParameter as exc:
        raise UsageError("--asks/--bids", str(exc)) from exc
    return asks, bids


class Run:
    def __init__(self, command: str, argv: list[str], cfg: dict):
        self.command = command
        self.argv = argv
        self.cfg = cfg
        self.out = Path(cfg["out"])
        self.outputs: list[str] = []
        self.extra: dict = {}

    def write(self, name: str, text: str) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / name).write_text(text, encoding="utf-8")
        self.outputs.append(name)

    def manifest(self) -> None:
        payload = {
            "command": self.command,
            "argv": self.argv,
            "config": self.cfg,
            "seed": self.cfg.get("seed"),
            "versions": {"lobforge": __version__, "python": platform.python_version(),
                         **{pkg: _version(pkg) for pkg in ("numpy", "scipy", "numba")}},
            "backend": backend_name(),
            "outputs": self.outputs,
            **self.extra,
        }
        self.write("manifest.json", json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")


def _version(pkg: str) -> str | None:
    try:
        return metadata.version(pkg)
    except metadata.PackageNotFoundError:
        return None


def _read_events(path: str) -> list[Event]:
    import csv

    events = []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for i, rec in enumerate(csv.DictReader(fh), start=2):
                try:
                    events.append(Event(EventKind.parse(rec["kind"]), int(rec["price"]), int(rec["size"])))
                except (KeyError, ValueError, TypeError) as exc:
                    raise BadParameter(f"{path}:{i}: bad event row ({exc})") from exc
    except OSError as exc:
        raise UsageError("--events", str(exc)) from exc
    return events


def cmd_clear(run: Run) -> str:
    cfg = run.cfg
    path = _require(cfg, "book")
    if not Path(path).exists():
        raise UsageError("--book", f"no such file {path!r}")
    book = read_book(path)
    events = _read_events(cfg["events"]) if cfg.get("events") else []
    if cfg.get("sequential") and events:
        state = clear(book).cleared
        steps = []
        for ev in events:
            state, bid, ask = apply_event(state, ev)
            steps.append({"event": {"kind": ev.kind.label, "price": ev.price, "size": ev.size},
                          "state": state.to_dict(), "bid": bid, "ask": ask})
        text = json.dumps({"steps": steps, "final": state.to_dict()}, indent=2) + "\n"
    else:
        result = clear_batch(book, events) if events else clear(book)
        text = json.dumps(result.to_dict(), indent=2) + "\n"
    run.write("clearing.json", text)
    return text


def cmd_simulate(run: Run) -> str:
    from .montecarlo import estimate_first_move, estimate_horizon, simulate_path

    cfg = run.cfg
    model = _model(cfg)
    origin = _origin(cfg["origin"])
    threads = _threads(cfg)
    seed = int(cfg["seed"])
    stop = cfg["stop"]
    T = cfg.get("T")
    horizon = float(T) if stop == "horizon" else None
    max_events = cfg.get("max_events")
    if stop == "max-events" and max_events is None:
        raise UsageError("--max-events", "is required with --stop max-events")
    n_paths = int(cfg.get("paths") or 0)
    for i in range(n_paths):
        rec = simulate_path(model, origin, stop, horizon, max_events, np.random.default_rng([seed, i]))
        run.write(f"path_{i}.csv", rec.to_csv())
    reps = int(cfg.get("reps") or 0)
    summary = {"paths": n_paths}
    if reps:
        budget = {} if max_events is None else {"max_events": int(max_events)}
        if stop == "horizon":
            est = estimate_horizon(model, origin, horizon, reps, seed, threads=threads, **budget)
        elif stop in ("first-ask-move", "first-mid-move"):
            sem = "ask" if stop == "first-ask-move" else "mid"
            est = estimate_first_move(model, origin, reps, seed, sem, threads=threads, **budget)
        else:
            raise UsageError("--stop", "estimates need horizon, first-ask-move or first-mid-move")
        summary["estimate"] = est.to_dict()
        summary["stop"] = stop
        run.write("estimate.json", json.dumps(summary["estimate"], indent=2, sort_keys=True) + "\n")
    run.extra["threads"] = threads
    return json.dumps(summary, sort_keys=True) + "\n"


def cmd_kbe(run: Run) -> str:
    from .experiments import dumps_rows, with_best_depths
    from .kbe import ask_increase_solution

    cfg = run.cfg
    if cfg.get("convergence"):
        return cmd_convergence(run)
    model = _model(cfg)
    origin = _origin(cfg["origin"])
    _threads(cfg)
    T, dt, eps = float(cfg["T"]), float(cfg["dt"]), float(cfg["eps"])
    asks, bids = _depths(cfg)
    if asks is None and bids is None:
        sol = ask_increase_solution(model, origin, T, dt, eps)
        run.extra["diagnostics"] = sol.diagnostics
        text = dumps_rows(("probability",), [(sol.value,)])
        run.write("kbe.csv", text)
        return text
    ask0, bid0 = origin_depths(origin)
    asks = asks or [ask0]
    bids = bids or [bid0]
    rows = []
    for za in asks:
        for zb in bids:
            sol = ask_increase_solution(model, with_best_depths(origin, zb, za), T, dt, eps)
            rows.append((za, zb, sol.value))
    text = dumps_rows(("ask_depth", "bid_depth", "probability"), rows)
    run.write("kbe_grid.csv", text)
    return text


def origin_depths(origin: BookState) -> tuple[int, int]:
    from .book import ask_bid

    ask, bid = ask_bid(origin)
    return int(origin.sell[ask - 1]), int(origin.buy[bid - 1])


def cmd_convergence(run: Run) -> str:
    from .experiments import dumps_rows
    from .kbe import convergence_study

    cfg = run.cfg
    model = _model(cfg)
    origin = _origin(cfg["origin"])
    _threads(cfg)
    dts = _floats(_require(cfg, "dts"), "--dts")
    dt_min = float(_require(cfg, "dt_min"))
    study = convergence_study(model, origin, float(cfg["T"]), dts, dt_min, pruning_eps=float(cfg["eps"]))
    run.extra["reference"] = study.reference
    run.extra["slope"] = study.slope()
    text = dumps_rows(("dt", "value", "err"), study.rows)
    run.write("convergence.csv", text)
    return text + f"# slope {study.slope()!r}\n"


def cmd_calibrate(run: Run) -> str:
    from .marketdata import calibrate, parse_messages

    cfg = run.cfg
    path = _require(cfg, "messages")
    if not Path(path).exists():
        raise UsageError("--messages", f"no such file {path!r}")
    report, model = calibrate(parse_messages(path), str(cfg["scheme"]).upper(), int(cfg["d"]), int(cfg["unit_size"]),
                              int(cfg["m"]), int(cfg["n"]), int(cfg["tick"]), guard=cfg["guard"])
    run.write("calibration.json", report.dumps() + "\n")
    run.out.mkdir(parents=True, exist_ok=True)
    write_model(model, run.out / "model.json")
    run.outputs.append("model.json")
    return report.dumps() + "\n"


def cmd_compare(run: Run) -> str:
    from .experiments import compare_grid, dumps_compare

    cfg = run.cfg
    model = _model(cfg)
    threads = _threads(cfg)
    asks, bids = _depths(cfg)
    if asks is None or bids is None:
        raise UsageError("--grid", "give --grid NxM or both --asks and --bids")
    dt = None if cfg.get("no_kbe") else float(cfg["dt"])
    rows = compare_grid(model, asks, bids, float(cfg["T"]), dt, int(cfg["reps"]), int(cfg["seed"]),
                        float(cfg["eps"]), threads)
    text = dumps_compare(rows)
    run.write("compare.csv", text)
    run.extra["threads"] = threads
    return text


def cmd_validate(run: Run) -> str:
    from .experiments import canonical_origin

    cfg = run.cfg
    model = _model(cfg)
    d = int(cfg["d"])
    rng = np.random.default_rng(int(cfg["seed"]))
    states = []
    if d == 6:
        states.append(canonical_origin(1, 1))
    while len(states) < int(cfg["samples"]):
        bid = int(rng.integers(1, d))
        ask = int(rng.integers(bid + 1, d + 1))
        buy = np.zeros(d, dtype=np.int64)
        sell = np.zeros(d, dtype=np.int64)
        buy[:bid] = rng.integers(0, 8, size=bid)
        sell[ask - 1:] = rng.integers(0, 8, size=d - ask + 1)
        buy[bid - 1] = max(buy[bid - 1], 1)
        sell[ask - 1] = max(sell[ask - 1], 1)
        states.append(BookState(buy, sell))
    report = validate(model, states)
    run.extra["ok"] = report.ok
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True, default=str) + "\n"
    run.write("validation.json", text)
    if not report.ok:
        raise ValidationFailed(text)
    return text


class ValidationFailed(LobError):
    pass


COMMANDS = {
    "clear": cmd_clear,
    "simulate": cmd_simulate,
    "kbe": cmd_kbe,
    "calibrate": cmd_calibrate,
    "compare": cmd_compare,
    "convergence": cmd_convergence,
    "validate-model": cmd_validate,
}


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _resolve(args)
        job = Run(args.command, argv, cfg)
        text = COMMANDS[args.command](job)
        job.manifest()
    except UsageError as exc:
        print(f"lobforge {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except ValidationFailed as exc:
        print(str(exc), end="")
        print("lobforge validate-model: model violates the standing assumptions", file=sys.stderr)
        job.manifest()
        return 1
    except (LobError, OSError, ValueError) as exc:
        print(f"lobforge {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(text)
    return 0


def main() -> None:
    sys.exit(run())
