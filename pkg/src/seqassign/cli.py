"""Command-line front end.

Subcommands: region classify|flow, value table|at|argmax, phase, scan,
conjecture, window, steer, simulate.  Exit codes: 0 success, 2 input error,
3 resource budget exceeded.

CSV files carry one fixed, documented header row per subcommand; JSON output
is a single object with "columns" and "rows" (tabular commands) or a report
object (steer, simulate, region, value).  Floats are written with repr, so
reruns with identical inputs produce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import experiments as exp
from .errors import RESOURCE_ERRORS, DomainError, OutsideSimplex, SeqAssignError
from .geometry import (
    RegionClass,
    RegionKind,
    check_weights,
    classify_point,
    membership_flow,
    x_star,
)
from .graph import Graph, load_graph
from .simulate import estimate
from .strategies import (
    OutwardSteer,
    SteerExact,
    SteerKTarget,
    SteerPlan,
    baseline_strategy,
    optimal_strategy,
)
from .values import (
    argmax_config,
    compute_table,
    load_table,
    round_to_config,
    save_table,
    value_at,
)

DEFAULT_SEED = 0
DEFAULT_RUNS = 1000


def _parse_floats(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",")])


def _parse_ints(text: str) -> list[int]:
    """Comma list `40,60,80` or range `40:200:10` (inclusive end)."""
    if ":" in text:
        parts = [int(v) for v in text.split(":")]
        if len(parts) == 2:
            lo, hi, step = parts[0], parts[1], 1
        elif len(parts) == 3:
            lo, hi, step = parts
        else:
            raise DomainError(f"bad range {text!r}")
        return list(range(lo, hi + 1, step))
    return [int(v) for v in text.split(",")]


def _parse_float_grid(text: str) -> list[float]:
    if ":" in text:
        lo, hi, step = (float(v) for v in text.split(":"))
        grid = []
        v = lo
        while v <= hi + 1e-12:
            grid.append(round(v, 12))
            v += step
        return grid
    return [float(v) for v in text.split(",")]


def _load_weights(g: Graph, path: str | None):
    if path is None:
        return None
    with open(path, "r", encoding="utf-8") as fh:
        vals = [float(v) for v in fh.read().split()]
    return np.array(vals)


def _point(g: Graph, spec: str) -> np.ndarray:
    if spec == "xstar":
        return x_star(g)
    return _parse_floats(spec)


def _emit(out: str | None, fmt: str, columns, rows, summary=None) -> None:
    if fmt == "csv":
        lines = [",".join(columns)]
        for row in rows:
            lines.append(",".join(_cell(v) for v in row))
        text = "\n".join(lines) + "\n"
    else:
        payload = {"columns": list(columns), "rows": [list(r) for r in rows]}
        if summary is not None:
            payload["summary"] = summary
        text = json.dumps(payload, sort_keys=True, default=_json_default) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    if summary is not None and fmt == "csv":
        sys.stdout.write(json.dumps(summary, sort_keys=True, default=_json_default) + "\n")


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, bool):
        return "1" if v else "0"
    return str(v)


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialize {type(v)}")


def _emit_report(out: str | None, report: dict) -> None:
    text = json.dumps(report, sort_keys=True, default=_json_default) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _graph_arg(args) -> Graph:
    return load_graph(args.graph)


def _table_for(g: Graph, n: int, args):
    weights = _load_weights(g, getattr(args, "weights", None))
    cache = getattr(args, "cache", None)
    if cache:
        want = check_weights(g, weights)
        if os.path.exists(cache):
            table = load_table(cache, g)
            if table.n_max >= n and np.array_equal(table.weights, want):
                return table
        table = compute_table(g, n, weights)
        save_table(table, cache)
        return table
    return compute_table(g, n, weights)


def parse_strategy(spec: str, g: Graph, total: int, args):
    if spec == "optimal":
        return optimal_strategy(_table_for(g, total, args))
    if spec in ("uniform", "greedy"):
        return baseline_strategy(spec)
    if spec.startswith("steer:") or spec.startswith("steer-k:"):
        kind, zspec, n1 = spec.split(":")
        plan = SteerPlan(z=_point(g, zspec), n1=int(n1), q0=getattr(args, "q0", 8))
        return SteerExact(g, plan) if kind == "steer" else SteerKTarget(g, plan)
    if spec.startswith("outward:"):
        amplitude = float(spec.split(":")[1])
        return OutwardSteer(g, amplitude=amplitude)
    raise DomainError(f"unknown strategy {spec!r}")


def _cmd_region(args) -> int:
    g = _graph_arg(args)
    x = _point(g, args.point)
    weights = _load_weights(g, args.weights)
    if args.mode == "classify":
        try:
            report = classify_point(g, x, weights).to_json(g.m)
        except OutsideSimplex:
            report = RegionClass(RegionKind.OUTSIDE_SIMPLEX, None, None).to_json(g.m)
    else:
        value, kernel = membership_flow(g, x, weights)
        report = {
            "flow_value": value,
            "in_region": kernel is not None,
            "kernel": None if kernel is None else kernel.q.tolist(),
        }
    _emit_report(args.out, report)
    return 0


def _cmd_value(args) -> int:
    g = _graph_arg(args)
    if args.mode == "table":
        if args.n is None or not args.cache:
            raise DomainError("value table needs --n and --cache")
        table = compute_table(g, args.n, _load_weights(g, args.weights))
        save_table(table, args.cache)
        _emit_report(args.out, {"n_max": args.n, "cache": args.cache, "graph_hash": table.hash})
        return 0
    if args.mode == "at":
        if args.config is None:
            raise DomainError("value at needs --config")
        config = [int(v) for v in args.config.split(",")]
        table = _table_for(g, sum(config), args)
        _emit_report(args.out, {"config": config, "p": value_at(table, config)})
        return 0
    if args.n is None:
        raise DomainError("value argmax needs --n")
    table = _table_for(g, args.n, args)
    cfg, val = argmax_config(table, args.n)
    _emit_report(args.out, {"n": args.n, "config": cfg.tolist(), "p": val})
    return 0


def _verify_rows(path: str, fmt: str, table, col: int, make_config) -> None:
    """Spot re-verification: re-read every 100th row and compare bit-exact."""
    with open(path, "r", encoding="utf-8") as fh:
        if fmt == "csv":
            rows = [line.split(",") for line in fh.read().splitlines()[1:]]
        else:
            rows = json.load(fh)["rows"]
    for row in rows[::100]:
        emitted = float(row[col])
        expected = value_at(table, make_config(row))
        if emitted != expected:
            raise SeqAssignError(f"verification mismatch on row {row}")


def _cmd_phase(args) -> int:
    g = _graph_arg(args)
    exp.ExperimentConfig(graph_path=args.graph, n=args.n, out=args.out, format=args.format)
    table = _table_for(g, args.n, args)
    rows, summary = exp.phase_diagram(g, args.n, table=table)
    _emit(args.out, args.format, exp.PHASE_COLUMNS, rows, summary)
    if args.verify and args.out:
        n = args.n
        _verify_rows(
            args.out,
            args.format,
            table,
            2,
            lambda row: (int(row[0]), n - int(row[0]) - int(row[1]), int(row[1])),
        )
    return 0


def _cmd_scan(args) -> int:
    g = _graph_arg(args)
    x = _point(g, args.point)
    n_list = _parse_ints(args.n_list)
    exp.ExperimentConfig(
        graph_path=args.graph, n_list=n_list, out=args.out, format=args.format
    )
    table = _table_for(g, max(n_list), args)
    rows, summary = exp.transition_scan(
        g, x, n_list, weights=_load_weights(g, args.weights), table=table
    )
    _emit(args.out, args.format, exp.SCAN_COLUMNS, rows, summary)
    if args.verify and args.out:
        _verify_rows(
            args.out, args.format, table, 1, lambda row: round_to_config(int(row[0]), x)
        )
    return 0


def _cmd_conjecture(args) -> int:
    n_list = _parse_ints(args.n_list)
    rows, summary = exp.conjecture_scan(args.k, n_list)
    _emit(args.out, args.format, exp.CONJECTURE_COLUMNS, rows, summary)
    return 0


def _cmd_window(args) -> int:
    g = _graph_arg(args)
    n_list = _parse_ints(args.n_list)
    a_grid = _parse_float_grid(args.a_grid)
    exp.ExperimentConfig(
        graph_path=args.graph, n_list=n_list, a_grid=a_grid, out=args.out, format=args.format
    )
    table = _table_for(g, max(n_list), args)
    rows, summary = exp.window_collapse(g, n_list, a_grid, table=table)
    _emit(args.out, args.format, exp.WINDOW_COLUMNS, rows, summary)
    return 0


def _cmd_steer(args) -> int:
    g = _graph_arg(args)
    exp.ExperimentConfig(
        graph_path=args.graph, n=args.n, runs=args.runs, seed=args.seed,
        out=args.out, format=args.format,
    )
    z = _point(g, args.target)
    start = (
        np.array([int(v) for v in args.config.split(",")])
        if args.config
        else round_to_config(args.n, x_star(g))
    )
    q0 = args.q0
    if args.calibrate:
        q0 = exp.calibrate_q0(g, z, args.n1, start, seed=args.seed)
    plan = SteerPlan(z=z, n1=args.n1, q0=q0)
    report = exp.steering_report(
        g, plan, start, args.runs, args.seed, kind=args.kind
    )
    report["q0"] = q0
    _emit_report(args.out, report)
    return 0


def _cmd_simulate(args) -> int:
    g = _graph_arg(args)
    config = [int(v) for v in args.config.split(",")]
    strategy = parse_strategy(args.strategy, g, sum(config), args)
    weights = _load_weights(g, args.weights)
    est = estimate(g, config, strategy, args.runs, args.seed, weights)
    _emit_report(args.out, est.to_json(g, config, args.strategy, args.seed))
    return 0


def _add_common(p, runs=False, out=True):
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--weights", default=None, help="vertex-weight file (k floats)")
    p.add_argument("--cache", default=None, help="value-table cache path")
    if runs:
        p.add_argument("--runs", type=int, default=DEFAULT_RUNS)
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="seqassign")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("region", help="region membership of a simplex point")
    p.add_argument("mode", choices=["classify", "flow"])
    p.add_argument("--graph", required=True)
    p.add_argument("--point", required=True, help="comma floats or 'xstar'")
    _add_common(p)
    p.set_defaults(func=_cmd_region)

    p = sub.add_parser("value", help="value table operations")
    p.add_argument("mode", choices=["table", "at", "argmax"])
    p.add_argument("--graph", required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--config", default=None, help="comma ints (for 'at')")
    _add_common(p)
    p.set_defaults(func=_cmd_value)

    p = sub.add_parser("phase", help="full probability grid for a 3-edge graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--verify", action="store_true", help="re-read 1%% of rows")
    _add_common(p)
    p.set_defaults(func=_cmd_phase)

    p = sub.add_parser("scan", help="decay/convergence scan along a fixed point")
    p.add_argument("--graph", required=True)
    p.add_argument("--point", required=True)
    p.add_argument("--n-list", required=True, help="comma list or lo:hi:step")
    p.add_argument("--verify", action="store_true")
    _add_common(p)
    p.set_defaults(func=_cmd_scan)

    p = sub.add_parser("conjecture", help="path-graph argmax partial sums")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n-list", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_conjecture)

    p = sub.add_parser("window", help="critical-window slice maxima")
    p.add_argument("--graph", required=True)
    p.add_argument("--n-list", required=True)
    p.add_argument("--a-grid", required=True, help="comma list or lo:hi:step")
    _add_common(p)
    p.set_defaults(func=_cmd_window)

    p = sub.add_parser("steer", help="steering report")
    p.add_argument("--graph", required=True)
    p.add_argument("--n", type=int, required=True, help="start total")
    p.add_argument("--n1", type=int, required=True, help="target total")
    p.add_argument("--target", default="xstar")
    p.add_argument("--config", default=None, help="start config (default round(n*xstar))")
    p.add_argument("--kind", choices=["exact", "k"], default="exact")
    p.add_argument("--q0", type=int, default=8)
    p.add_argument("--calibrate", action="store_true")
    _add_common(p, runs=True)
    p.set_defaults(func=_cmd_steer)

    p = sub.add_parser("simulate", help="Monte Carlo estimate for a strategy")
    p.add_argument("--graph", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--strategy", required=True)
    p.add_argument("--q0", type=int, default=8)
    _add_common(p, runs=True)
    p.set_defaults(func=_cmd_simulate)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RESOURCE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (SeqAssignError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
