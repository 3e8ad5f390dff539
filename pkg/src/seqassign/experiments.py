"""Experiment drivers: phase diagram, decay/convergence scans, critical-window
curves, the path-graph argmax scan, and steering reports.

Each driver returns plain rows (for CSV/JSON emission by the CLI) plus a
summary dict.  Column sets are fixed:

    phase:      m, l, p
    scan:       n, p, log_p, decay_bound
    conjecture: n, j, partial_sum, target, gap, gap_symmetric
    window:     n, A, kind, p_max, empty, gauss_ref
    steer:      JSON report (no tabular form)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .geometry import RegionKind, classify_point, min_slack
from .graph import Graph, path_graph
from .simulate import TraceSpec, child_rng, deviation_tail, play, trace_diagnostics
from .strategies import SteerExact, SteerKTarget, SteerPlan, Stage1Steer
from .values import (
    SliceSpec,
    ValueTable,
    argmax_config,
    compositions,
    compute_table,
    round_to_config,
    slice_max,
    value_at,
)


@dataclass
class ExperimentConfig:
    """CLI-level experiment parameters; counts must be positive and grids
    non-empty."""

    graph_path: str | None = None
    n: int | None = None
    n_list: list[int] = field(default_factory=list)
    a_grid: list[float] = field(default_factory=list)
    runs: int = 1000
    seed: int = 0
    out: str | None = None
    format: str = "csv"

    def __post_init__(self):
        if self.n is not None and self.n < 1:
            raise DomainError("n must be positive")
        if any(n < 1 for n in self.n_list):
            raise DomainError("n-list entries must be positive")
        if any(a <= 0 for a in self.a_grid):
            raise DomainError("A-grid entries must be positive")
        if self.runs < 1:
            raise DomainError("runs must be positive")
        if self.format not in ("csv", "json"):
            raise DomainError(f"unknown format {self.format!r}")


PHASE_COLUMNS = ["m", "l", "p"]
SCAN_COLUMNS = ["n", "p", "log_p", "decay_bound"]
CONJECTURE_COLUMNS = ["n", "j", "partial_sum", "target", "gap", "gap_symmetric"]
WINDOW_COLUMNS = ["n", "A", "kind", "p_max", "empty", "gauss_ref"]


def phase_diagram(g: Graph, n: int, weights=None, table: ValueTable | None = None):
    """Full win-probability grid over a three-edge graph's layer n.

    Rows are (m, l, p) with m the first and l the last edge count, the middle
    edge holding n-m-l.  Returns (rows, summary) where the summary carries the
    grid maximum and its location.
    """
    if g.m != 3:
        raise DomainError(f"phase grid needs a 3-edge graph, got |E|={g.m}")
    if table is None:
        table = compute_table(g, n, weights)
    cfgs = compositions(n, 3)
    vals = table.layers[n]
    rows = [(int(c[0]), int(c[2]), float(v)) for c, v in zip(cfgs, vals)]
    best_cfg, best = argmax_config(table, n)
    summary = {
        "n": n,
        "max_p": best,
        "argmax_config": [int(c) for c in best_cfg],
        "argmax_m": int(best_cfg[0]),
        "argmax_l": int(best_cfg[2]),
    }
    return rows, summary


def transition_scan(g: Graph, x, n_list, weights=None, table: ValueTable | None = None):
    """Win probability along configs tracking a fixed simplex point.

    For inaccessible points the rows carry the concentration bound
    exp(-n*eps^2/4) with eps the worst face deficit, and the summary fits the
    slope of log p against n; for interior points the summary reports the
    successive differences (an empirical convergence indicator) and the value
    at the largest n as the limit estimate.
    """
    x = np.asarray(x, dtype=float)
    n_list = sorted(n_list)
    if table is None:
        table = compute_table(g, max(n_list), weights)
    region = classify_point(g, x, weights)
    deficit = -min_slack(g, x, weights)[0]
    rows = []
    ps = []
    for n in n_list:
        p = value_at(table, round_to_config(n, x))
        bound = math.exp(-n * deficit * deficit / 4.0) if region.kind is RegionKind.INACCESSIBLE else math.nan
        rows.append((n, p, math.log(p) if p > 0 else -math.inf, bound))
        ps.append(p)
    summary: dict = {"class": region.kind.value, "n_list": list(n_list)}
    if region.kind is RegionKind.INACCESSIBLE:
        ns = np.array(n_list, dtype=float)
        logs = np.array([r[2] for r in rows])
        slope, intercept = np.polyfit(ns, logs, 1)
        pred = slope * ns + intercept
        ss_res = float(((logs - pred) ** 2).sum())
        ss_tot = float(((logs - logs.mean()) ** 2).sum())
        summary.update(
            slope=float(slope),
            intercept=float(intercept),
            r_squared=1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0,
            deficit=deficit,
        )
    elif region.kind is RegionKind.INTERIOR_REACHABLE:
        diffs = [abs(b - a) for a, b in zip(ps, ps[1:])]
        summary.update(successive_diffs=diffs, limit_estimate=ps[-1])
    return rows, summary


def _a_star_raw(j: int, k: int) -> float:
    if j == 0:
        return 0.0
    if j == k - 1:
        return 1.0
    return math.log((k - j - 1) / (k - j)) / math.log(
        (j * (k - j - 1)) / ((j + 1) * (k - j))
    )


def a_star(j: int, k: int) -> float:
    """Crossover location of the two competing run-out events on a path with
    k vertices: the point where the cheaper large-deviation rate is maximal."""
    if k < 3 or not 0 <= j <= k - 1:
        raise DomainError(f"need k >= 3 and 0 <= j <= k-1, got j={j}, k={k}")
    value = _a_star_raw(j, k)
    if 1 <= j <= k - 2:
        if not (j / k < value < (j + 1) / k):
            raise DomainError(f"a_*({j};{k})={value} escaped ({j / k}, {(j + 1) / k})")
        if abs(value - (1.0 - _a_star_raw(k - 1 - j, k))) > 1e-12:
            raise DomainError(f"a_*({j};{k}) breaks the reversal symmetry")
    return value


def conjecture_scan(k: int, n_list, table: ValueTable | None = None):
    """Partial sums of the layer-argmax config on a path graph against the
    conjectured limits.  gap_symmetric takes the better of the config and its
    reversal (both maximize, by the path symmetry)."""
    g = path_graph(k)
    n_list = sorted(n_list)
    if table is None:
        table = compute_table(g, max(n_list))
    targets = [a_star(j, k) for j in range(k)]
    rows = []
    for n in n_list:
        cfg, _ = argmax_config(table, n)
        partial = np.cumsum(cfg) / n
        for j in range(1, k - 1):
            s = float(partial[j - 1])
            s_rev = 1.0 - float(partial[k - 2 - j])
            gap = abs(s - targets[j])
            gap_sym = min(gap, abs(s_rev - targets[j]))
            rows.append((n, j, s, targets[j], gap, gap_sym))
    return rows, {"k": k, "targets": targets[1 : k - 1]}


def window_collapse(g: Graph, n_list, a_grid, weights=None, table: ValueTable | None = None):
    """Slice maxima of the three critical-window classes per (n, A), with the
    Gaussian reference exp(-A^2/8); empty slices are marked."""
    n_list = sorted(n_list)
    if table is None:
        table = compute_table(g, max(n_list), weights)
    rows = []
    for n in n_list:
        for a in a_grid:
            for kind in ("I", "II", "III"):
                hit = slice_max(table, n, SliceSpec(amplitude=a, kind=kind))
                if hit is None:
                    rows.append((n, a, kind, math.nan, True, math.exp(-a * a / 8)))
                else:
                    rows.append((n, a, kind, hit[1], False, math.exp(-a * a / 8)))
    return rows, {"n_list": list(n_list), "a_grid": list(a_grid)}


def calibrate_q0(
    g: Graph, z, n1: int, start_config, runs: int = 200, seed: int = 0, q0_start: int = 2
) -> int:
    """Double q0 until the measured steering deviation tail at q0/4 drops to
    1/2 on a calibration run."""
    q0 = q0_start
    while q0 <= 4096:
        plan = SteerPlan(z=z, n1=n1, q0=q0)
        curve = deviation_tail(
            g, start_config, SteerExact(g, plan), z, n1, [q0 / 4.0], runs, seed
        )
        if curve.tail[0] <= 0.5:
            return q0
        q0 *= 2
    return q0


def steering_report(
    g: Graph,
    plan: SteerPlan,
    start_config,
    runs: int,
    seed: int,
    q_grid=None,
    kind: str = "exact",
    trace_runs: int = 3,
) -> dict:
    """Exact-hit frequency, deviation tail, and trace diagnostics for one
    steering plan from one start config."""
    start_config = np.asarray(start_config, dtype=np.int64)
    if q_grid is None:
        q_grid = list(range(0, 21))
    make = SteerKTarget if kind == "k" else SteerExact
    strategy = make(g, plan)
    curve = deviation_tail(
        g, start_config, strategy, plan.z, plan.n1, q_grid, runs, seed
    )
    total = int(start_config.sum())
    x0 = start_config / total
    gap = x0 - plan.z
    flags = 0
    mean_s_inc = []
    if float(np.linalg.norm(gap)) > 0 and kind == "exact":
        u = gap / np.linalg.norm(gap)
        for i in range(trace_runs):
            stage1_run = Stage1Steer(g, plan.z, x0=x0)
            result = play(
                g,
                start_config,
                stage1_run,
                child_rng(seed + 1, i),
                steps_limit=total // 2,
                trace_spec=TraceSpec(z=plan.z, u=u),
            )
            diag = trace_diagnostics(g, result, stage1=stage1_run)
            flags += len(diag.positive_drift_steps)
            if diag.s_increments is not None and len(diag.s_increments):
                mean_s_inc.append(float(np.mean(diag.s_increments)))
    return {
        "kind": kind,
        "target_point": [float(v) for v in plan.z],
        "target_total": plan.n1,
        "target_config": [int(c) for c in curve.target_config],
        "start_config": [int(c) for c in start_config],
        "runs": runs,
        "seed": seed,
        "hits": curve.hits,
        "hit_rate": curve.hit_rate,
        "hit_ci": list(curve.hit_ci),
        "tail_q": [float(q) for q in curve.q],
        "tail_p": [float(p) for p in curve.tail],
        "stage1_positive_drift_flags": flags,
        "stage1_mean_s_increment": mean_s_inc,
    }
