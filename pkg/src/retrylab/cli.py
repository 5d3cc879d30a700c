"""``retrylab`` command line: predict, simulate, bench, calibrate, backoff, compare.

Exit codes: 0 success, 2 usage error, 3 non-convergence, 4 hardware
unavailable.  A ``--config`` JSON document supplies defaults for any flag
(keys are flag names with dashes or underscores); explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from fractions import Fraction
from typing import Sequence

from . import bench as bench_mod
from .estimator import (
    BackoffBoundaryWarning,
    NonConvergenceError,
    estimate,
    recommend_backoff,
)
from .logical import construct_seed
from .model import PlatformProfile, WorkloadSpec
from .simulator import (
    HISTOGRAM_KEYS,
    SimConfig,
    as_fraction,
    detect_steady_state,
    export_trace_csv,
    inject_thread,
    run_hardware,
    run_until_steady,
)

EXIT_OK, EXIT_USAGE, EXIT_NONCONV, EXIT_NOHW = 0, 2, 3, 4

PREDICT_COLUMNS = [
    "pw_cycles",
    "thr_low",
    "thr_high",
    "thr_avg",
    "f_low",
    "f_high",
    "expansion_low",
    "expansion_high",
    "occupancy_low",
    "occupancy_high",
    "status",
]
HIST_COLUMNS = ["h" + k.replace("+", "plus") for k in HISTOGRAM_KEYS]
SIM_LOGICAL_COLUMNS = [
    "mode", "P", "q", "r", "detected", "f", "period", "throughput", "occupancy",
] + HIST_COLUMNS
SIM_HARDWARE_COLUMNS = [
    "mode", "pw_cycles", "P", "thr_sim", "fails_per_success", "occupancy",
    "mean_cas_wait", "pw_sampler", "rng_seed", "backoff_pad",
] + HIST_COLUMNS


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# argument helpers


def parse_grid(text: str) -> list[float]:
    """``start:end:step`` (inclusive), ``a,b,c`` or a single number."""
    text = str(text).strip()
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValueError
            start, end, step = (float(p) for p in parts)
            if step <= 0 or end < start:
                raise ValueError
            n = int(math.floor((end - start) / step + 1e-9))
            return [_tidy(start + i * step) for i in range(n + 1)]
        return [_tidy(float(p)) for p in text.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"bad grid {text!r}; expected start:end:step, a list, or a number")


def _tidy(x: float):
    return int(x) if float(x).is_integer() else x


def parse_rational(text: str) -> Fraction:
    try:
        return as_fraction(text)
    except (ValueError, ZeroDivisionError, TypeError):
        raise UsageError(f"bad rational {text!r}; expected an integer, decimal or num/den")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _write_rows(columns: Sequence[str], rows: Sequence[dict], path: str | None) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    _emit(buf.getvalue(), path)


def _emit(text: str, path: str | None) -> None:
    if path and path != "-":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _profile(args, P=None) -> PlatformProfile:
    try:
        return PlatformProfile(float(args.rc), float(args.cc), int(P or args.threads))
    except ValueError as exc:
        raise UsageError(str(exc))


def _ops_per_ms(per_cycle: float, ghz: float) -> float:
    return per_cycle * ghz * 1e6


def _plot_series(series, args, title: str, band=None) -> None:
    if getattr(args, "svg", None):
        from .svg import write_line_chart

        write_line_chart(args.svg, series, title=title)
    if getattr(args, "plot", None):
        from .plotting import throughput_figure

        throughput_figure(args.plot, series, title=title, band=band)


# --------------------------------------------------------------------------
# commands


def cmd_predict(args) -> int:
    prof = _profile(args)
    grid = parse_grid(args.pw)
    for a, b in zip(grid, grid[1:]):
        if b <= a:
            raise UsageError("pw grid must be strictly increasing")
    base = WorkloadSpec(0.0, float(args.cw))
    rows, flagged = [], 0
    for pw in grid:
        try:
            est = estimate(prof, base.with_pw(pw))
            row = est.as_row()
            row["pw_cycles"] = pw
            row["status"] = "ok"
        except NonConvergenceError as exc:
            flagged += 1
            row = {"pw_cycles": pw, "status": f"nonconverged({exc.side})"}
        rows.append(row)
    _write_rows(PREDICT_COLUMNS, rows, args.out)
    ok = [r for r in rows if r["status"] == "ok"]
    if ok and (args.svg or args.plot):
        xs = [r["pw_cycles"] for r in ok]
        series = {
            name: (xs, [_ops_per_ms(r[key], args.ghz) for r in ok])
            for name, key in (("low", "thr_low"), ("high", "thr_high"), ("average", "thr_avg"))
        }
        _plot_series(series, args, f"model, P={prof.P}", band=("low", "high"))
    return EXIT_NONCONV if flagged else EXIT_OK


def _hist_row(hist: dict) -> dict:
    return {c: hist.get(k, 0) for c, k in zip(HIST_COLUMNS, HISTOGRAM_KEYS)}


def cmd_simulate(args) -> int:
    if args.mode == "logical":
        return _simulate_logical(args)
    return _simulate_hardware(args)


def _simulate_logical(args) -> int:
    P = int(args.P)
    q = int(args.q)
    r = parse_rational(args.r)
    if P < 1 or q < 0 or not 0 <= r < 1:
        raise UsageError("need P >= 1, q >= 0 and 0 <= r < 1")
    offsets = None
    if args.seed_construct_f is not None:
        try:
            seed = construct_seed(P, q, r, int(args.seed_construct_f))
        except ValueError as exc:
            raise UsageError(str(exc))
        offsets = seed.success_starts
    elif args.offsets:
        offsets = [parse_rational(o) for o in args.offsets.split(",")]
        if len(offsets) != P:
            raise UsageError(f"--offsets needs {P} values, got {len(offsets)}")
    horizon = parse_rational(args.horizon) if args.horizon else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cfg = SimConfig.logical(P, q, r, offsets, horizon)
    rows = []
    traces = []
    if args.inject_thread:
        for off in args.inject_thread.split(","):
            res = inject_thread(cfg, parse_rational(off))
            st = res.steady
            rows.append(_logical_row(P + 1, q, r, st) | {"mode": "logical+inject"})
            traces.append(res.trace)
    else:
        trace, st = run_until_steady(cfg, record_events=bool(args.trace))
        rows.append(_logical_row(P, q, r, st))
        traces.append(trace)
    _write_rows(SIM_LOGICAL_COLUMNS, rows, args.out)
    if args.trace and traces and traces[0] is not None and traces[0].events is not None:
        export_trace_csv(traces[0], args.trace)
    if args.plot:
        from .plotting import histogram_figure

        hist = {k: rows[0][c] for c, k in zip(HIST_COLUMNS, HISTOGRAM_KEYS)}
        histogram_figure(args.plot, hist, title=f"fails per success, P={rows[0]['P']}")
    return EXIT_OK


def _logical_row(P, q, r, st) -> dict:
    return {
        "mode": "logical",
        "P": P,
        "q": q,
        "r": r,
        "detected": st.detected,
        "f": st.failures_f,
        "period": st.period,
        "throughput": st.throughput,
        "occupancy": st.occupancy,
        **_hist_row(st.fail_histogram),
    }


def _simulate_hardware(args) -> int:
    P = int(args.threads)
    prof = _profile(args, P)
    grid = parse_grid(args.pw)
    rows = []
    first_trace = None
    for pw in grid:
        cfg = SimConfig.hardware(
            prof,
            WorkloadSpec(pw, float(args.cw)),
            horizon=int(args.horizon or 200_000),
            pw_sampler=args.pw_sampler,
            rng_seed=int(args.rng_seed),
            backoff_pad=int(args.backoff_pad),
        )
        trace = run_hardware(cfg, record_events=bool(args.trace) and first_trace is None)
        first_trace = first_trace or trace
        # skip the start-up transient
        warm = trace.horizon // 10
        win = trace.window(warm)
        n = max(len(win), 1)
        rows.append(
            {
                "mode": "hardware",
                "pw_cycles": pw,
                "P": P,
                "thr_sim": float(trace.throughput(warm)),
                "fails_per_success": sum(s.fails for s in win) / n,
                "occupancy": trace.occupancy(warm),
                "mean_cas_wait": trace.mean_cas_wait(warm),
                "pw_sampler": args.pw_sampler,
                "rng_seed": args.rng_seed,
                "backoff_pad": args.backoff_pad,
                **_hist_row(detect_steady_state(trace).fail_histogram),
            }
        )
    _write_rows(SIM_HARDWARE_COLUMNS, rows, args.out)
    if args.trace and first_trace is not None:
        export_trace_csv(first_trace, args.trace)
    if args.svg or args.plot:
        xs = [r["pw_cycles"] for r in rows]
        series = {"simulated": (xs, [_ops_per_ms(r["thr_sim"], args.ghz) for r in rows])}
        _plot_series(series, args, f"hardware-mode simulation, P={P}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cal = bench_mod.calibrate(int(args.rounds), args.cal_mode)
    for note in cal.warnings:
        print(f"warning: {note}", file=sys.stderr)
    _emit(json.dumps(cal.as_dict(), indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    P = int(args.threads)
    if args.rc is None or args.cc is None:
        cal = bench_mod.calibrate(int(args.rounds), args.cal_mode)
        rc, cc = cal.rc, cal.cc
    else:
        rc, cc = float(args.rc), float(args.cc)
    prof = PlatformProfile(rc, cc, P)
    try:
        strategy = bench_mod.Strategy.parse(args.strategy)
    except ValueError as exc:
        raise UsageError(str(exc))
    rows = bench_mod.run_bench(
        args.structure,
        prof,
        parse_grid(args.pw),
        P,
        strategy,
        duration_ms=args.duration_ms,
        reps=int(args.reps),
        seed=int(args.rng_seed),
        pw_distribution=args.pw_sampler,
        cw=float(args.cw),
        pop_k=int(args.pop_k),
    )
    _emit(bench_mod.write_csv(rows), args.out)
    med = [r for r in rows if r["rep"] == "median"]
    if med and (args.svg or args.plot):
        xs = [r["pw_cycles"] for r in med]
        series = {
            "measured": (xs, [r["thr_meas_per_ms"] for r in med]),
            "model low": (xs, [r["thr_low_model"] for r in med]),
            "model high": (xs, [r["thr_high_model"] for r in med]),
        }
        _plot_series(series, args, f"{args.structure}, P={P}", band=("model low", "model high"))
    print("note: measured values include interpreter effects; see README", file=sys.stderr)
    return EXIT_OK


def cmd_backoff(args) -> int:
    prof = _profile(args)
    base = WorkloadSpec(0.0, float(args.cw))
    rlw = prof.rc + base.cw + prof.cc
    grid = parse_grid(args.grid) if args.grid else parse_grid(f"0:{(2 * prof.P + 1) * rlw}:5")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BackoffBoundaryWarning)
        rec = recommend_backoff(prof, base, grid)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    pws = parse_grid(args.pw)
    lines = [f"peak_pw={_fmt(_tidy(rec.peak_pw))}", f"peak_thr_avg={_fmt(rec.peak_throughput)}"]
    for pw in pws:
        lines.append(f"pw={_fmt(pw)} pad={_fmt(_tidy(rec.backoff_for(pw)))}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _read_csv(path: str) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def cmd_compare(args) -> int:
    sources = {}
    for name in ("predict", "simulate", "bench"):
        path = getattr(args, name)
        if path:
            rows = _read_csv(path)
            if name == "bench":
                rows = [r for r in rows if r.get("rep") == "median"] or rows
            sources[name] = {float(r["pw_cycles"]): r for r in rows}
    if len(sources) < 2:
        raise UsageError("compare needs at least two of --predict, --simulate, --bench")
    grids = {k: set(v) for k, v in sources.items()}
    union = set().union(*grids.values())
    common = set.intersection(*grids.values())
    if union != common:
        bad = sorted(union - common)
        raise UsageError("pw grids differ at: " + ", ".join(_fmt(_tidy(x)) for x in bad))
    ghz = args.ghz
    cols = ["pw_cycles"]
    if "predict" in sources:
        cols += ["model_low_per_ms", "model_high_per_ms", "model_avg_per_ms"]
    if "simulate" in sources:
        cols += ["sim_per_ms"]
    if "bench" in sources:
        cols += ["bench_per_ms"]
    rows = []
    for pw in sorted(common):
        row = {"pw_cycles": _tidy(pw)}
        if "predict" in sources:
            p = sources["predict"][pw]
            for src, dst in (("thr_low", "model_low_per_ms"), ("thr_high", "model_high_per_ms"),
                             ("thr_avg", "model_avg_per_ms")):
                row[dst] = _ops_per_ms(float(p[src]), ghz) if p.get(src) else None
        if "simulate" in sources:
            row["sim_per_ms"] = _ops_per_ms(float(sources["simulate"][pw]["thr_sim"]), ghz)
        if "bench" in sources:
            row["bench_per_ms"] = float(sources["bench"][pw]["thr_meas_per_ms"])
        rows.append(row)
    _write_rows(cols, rows, args.out)
    if args.svg or args.plot:
        xs = [r["pw_cycles"] for r in rows]
        series = {c: (xs, [r[c] if r[c] is not None else float("nan") for r in rows]) for c in cols[1:]}
        band = ("model_low_per_ms", "model_high_per_ms") if "predict" in sources else None
        _plot_series(series, args, "model vs simulation vs measurement", band=band)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _platform_flags(p, threads_required=True):
    p.add_argument("--threads", "--P", dest="threads", type=int, default=None if threads_required else 1)
    p.add_argument("--rc", type=float, default=None)
    p.add_argument("--cc", type=float, default=None)
    p.add_argument("--cw", type=float, default=0.0)


def _output_flags(p, plots=True):
    p.add_argument("--out", "-o", default=None, help="output file (default stdout)")
    if plots:
        p.add_argument("--svg", default=None, help="write a standalone SVG line plot")
        p.add_argument("--plot", default=None, help="write a matplotlib figure (.png, .pdf)")
        p.add_argument("--ghz", type=float, default=bench_mod.DEFAULT_GHZ,
                       help="core clock used to convert cycles to ops/ms")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="retrylab", description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=None, help="JSON file with default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="model throughput bounds over a pw grid")
    _platform_flags(p)
    p.add_argument("--pw", required=False, default=None, help="grid start:end:step")
    _output_flags(p)
    p.set_defaults(func=cmd_predict, needs=("threads", "rc", "cc", "pw"))

    p = sub.add_parser("simulate", help="logical or hardware-mode simulation")
    p.add_argument("--mode", choices=("logical", "hardware"), default="logical")
    p.add_argument("--q", type=int, default=0)
    p.add_argument("--r", default="1/2")
    p.add_argument("--offsets", default=None, help="comma list of first-try times")
    p.add_argument("--seed-construct-f", type=int, default=None)
    p.add_argument("--inject-thread", default=None, help="comma list of offsets for the extra thread")
    p.add_argument("--horizon", default=None)
    p.add_argument("--trace", default=None, help="write the event log CSV here")
    p.add_argument("--threads", "--P", dest="threads", type=int, default=None)
    p.add_argument("--rc", type=float, default=50.0)
    p.add_argument("--cc", type=float, default=50.0)
    p.add_argument("--cw", type=float, default=0.0)
    p.add_argument("--pw", default="0")
    p.add_argument("--pw-sampler", choices=("constant", "poisson"), default="constant")
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--backoff-pad", type=int, default=0)
    _output_flags(p)
    p.set_defaults(func=cmd_simulate, needs=("threads",))

    p = sub.add_parser("bench", help="measure a structure on this machine")
    _platform_flags(p)
    p.add_argument("--structure", choices=bench_mod.STRUCTURES, default="counter")
    p.add_argument("--pw", default="0:2000:250")
    p.add_argument("--strategy", default="none")
    p.add_argument("--duration-ms", type=int, default=None)
    p.add_argument("--reps", type=int, default=bench_mod.DEFAULT_REPS)
    p.add_argument("--rounds", type=int, default=1000)
    p.add_argument("--cal-mode", choices=("bounce", "local"), default="bounce")
    p.add_argument("--pw-sampler", choices=("constant", "poisson"), default="constant")
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--pop-k", type=int, default=1)
    _output_flags(p)
    p.set_defaults(func=cmd_bench, needs=("threads",))

    p = sub.add_parser("calibrate", help="measure Read and CAS latencies")
    p.add_argument("--rounds", type=int, default=1000)
    p.add_argument("--cal-mode", "--mode", dest="cal_mode", choices=("bounce", "local"), default="bounce")
    _output_flags(p, plots=False)
    p.set_defaults(func=cmd_calibrate, needs=())

    p = sub.add_parser("backoff", help="model-driven back-off for given pw values")
    _platform_flags(p)
    p.add_argument("--pw", default="0")
    p.add_argument("--grid", default=None, help="search grid (default 0:(2P+1)rlw:5)")
    _output_flags(p, plots=False)
    p.set_defaults(func=cmd_backoff, needs=("threads", "rc", "cc"))

    p = sub.add_parser("compare", help="join predict/simulate/bench CSVs on pw")
    p.add_argument("--predict", default=None)
    p.add_argument("--simulate", default=None)
    p.add_argument("--bench", default=None)
    _output_flags(p)
    p.set_defaults(func=cmd_compare, needs=())
    return parser


def _apply_config(parser, argv) -> argparse.Namespace:
    pre, _ = parser.parse_known_args(argv)
    if not pre.config:
        return parser.parse_args(argv)
    try:
        with open(pre.config, encoding="utf-8") as fh:
            conf = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {pre.config}: {exc}")
    if not isinstance(conf, dict):
        raise UsageError("config must be a JSON object")
    conf = {k.replace("-", "_"): v for k, v in conf.items()}
    conf.pop("command", None)
    for action in parser._subparsers._group_actions:  # the subcommand table
        for sp in action.choices.values():
            known = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: (str(v) if k in ("pw", "grid", "r") else v)
                               for k, v in conf.items() if k in known})
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        try:
            args = _apply_config(parser, argv)
        except SystemExit as exc:  # argparse already printed the usage message
            return int(exc.code or 0) and EXIT_USAGE
        missing = [n for n in args.needs if getattr(args, n, None) is None]
        if args.command == "simulate":
            if args.mode == "logical":
                missing = [] if args.threads is not None else ["P"]
            args.P = args.threads
        if missing:
            raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
        return args.func(args)
    except UsageError as exc:
        print(f"retrylab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonConvergenceError as exc:
        print(f"retrylab: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except bench_mod.HardwareUnavailable as exc:
        print(f"retrylab: hardware unavailable: {exc}", file=sys.stderr)
        return EXIT_NOHW


if __name__ == "__main__":
    sys.exit(main())
