"""Layered exact dynamic programming for optimal win probabilities.

States are integer edge-count vectors (configs).  All configs with the same
total t form one layer, stored as a dense float64 array indexed by the rank

    rank(n) = sum_{i=1}^{m-1} C(p_i, i),   p_i = i - 1 + n_1 + ... + n_i,

the standard combinatorial-number-system (colex) rank of the bar positions of
the composition.  Decrementing the last coordinate preserves the rank, which
makes layer-to-layer child lookups cheap.

Layer t is computed from layer t-1 by the recursion

    p(n) = sum_v p_v * max_{e ~ v, n_e > 0} p(n - 1^e)

with an empty max contributing 0 (a drawn vertex with no positive incident
edge loses the game).  Accumulation is in vertex order, so the stored values
can be reproduced bit-exactly from the previous layer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb

import numpy as np

from .errors import (
    EmptyOrFullSubset,
    FormatMismatch,
    GraphHashMismatch,
    IoFailure,
    LayerOutOfRange,
    MemoryBudgetExceeded,
    NegativeEntry,
)
from .geometry import check_weights, face_scale
from .graph import Graph, full_degree_count, proper_subsets, subset_members, subset_size

LOSS = -1
DEFAULT_BUDGET = 1 << 30

_MAGIC = b"SAPG"
_VERSION = 1


# --- composition ranking ----------------------------------------------------


def layer_size(total: int, m: int) -> int:
    return comb(total + m - 1, m - 1)


def rank_config(cfg) -> int:
    m = len(cfg)
    r = 0
    p = -1
    for i in range(1, m):
        p += cfg[i - 1] + 1
        r += comb(p, i)
    return r


def unrank_config(r: int, total: int, m: int) -> tuple[int, ...]:
    ps = []
    rem = r
    for i in range(m - 1, 0, -1):
        c = i - 1
        while comb(c + 1, i) <= rem:
            c += 1
        rem -= comb(c, i)
        ps.append(c)
    ps.reverse()
    cfg = []
    prev = -1
    for i, p in enumerate(ps, start=1):
        cfg.append(p - prev - 1)
        prev = p
    cfg.append(total - sum(cfg))
    return tuple(cfg)


@lru_cache(maxsize=32)
def _binom_tables(m: int, max_total: int) -> tuple[np.ndarray, ...]:
    """tables[i-1][x] = C(x, i) for i = 1..m-1, x = 0..max_total+m."""
    xs = range(max_total + m + 1)
    return tuple(
        np.array([comb(x, i) for x in xs], dtype=np.int64) for i in range(1, m)
    )


def rank_configs(cfgs: np.ndarray, tables) -> np.ndarray:
    """Vectorized rank over rows of an (N, m) config array."""
    m = cfgs.shape[1]
    p = np.cumsum(cfgs[:, : m - 1], axis=1) + np.arange(m - 1)[None, :]
    r = np.zeros(len(cfgs), dtype=np.int64)
    for i in range(1, m):
        r += tables[i - 1][p[:, i - 1]]
    return r


@lru_cache(maxsize=600)
def _compositions_cached(total: int, m: int) -> np.ndarray:
    if m == 1:
        out = np.array([[total]], dtype=np.int64)
    else:
        # rank order groups by the last coordinate, largest first
        parts = []
        for last in range(total, -1, -1):
            rest = _compositions_cached(total - last, m - 1)
            block = np.empty((len(rest), m), dtype=np.int64)
            block[:, :-1] = rest
            block[:, -1] = last
            parts.append(block)
        out = np.concatenate(parts, axis=0)
    out.setflags(write=False)
    return out


def compositions(total: int, m: int) -> np.ndarray:
    """All configs of the given total as an (N, m) int64 array, row r having
    rank r.  The array is cached and read-only; copy before mutating."""
    return _compositions_cached(total, m)


def round_to_config(total: int, x) -> np.ndarray:
    """Largest-remainder rounding of total*x to an integer config preserving
    the total; remainder ties break toward the lowest edge index."""
    x = np.asarray(x, dtype=float)
    scaled = total * x
    base = np.floor(scaled).astype(np.int64)
    deficit = int(total - base.sum())
    rem = scaled - base
    order = np.lexsort((np.arange(len(x)), -rem))
    base[order[:deficit]] += 1
    return base


# --- graph hashing ----------------------------------------------------------


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def graph_hash(g: Graph) -> int:
    """64-bit FNV-1a over the canonical edge list `k|u1,v1;u2,v2;...`."""
    text = f"{g.k}|" + ";".join(f"{u},{v}" for u, v in g.edges)
    return fnv1a64(text.encode("ascii"))


# --- the value table --------------------------------------------------------


@dataclass(frozen=True)
class SliceSpec:
    """Critical-window slice selector: amplitude and kind I, II or III."""

    amplitude: float
    kind: str

    def __post_init__(self):
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if self.kind not in ("I", "II", "III"):
            raise ValueError(f"unknown slice kind {self.kind!r}")


@dataclass
class ValueTable:
    graph: Graph
    n_max: int
    weights: np.ndarray
    layers: list[np.ndarray]

    @property
    def hash(self) -> int:
        return graph_hash(self.graph)


def required_bytes(m: int, n_max: int) -> int:
    return 8 * sum(layer_size(t, m) for t in range(n_max + 1))


def compute_table(
    g: Graph, n_max: int, weights=None, memory_budget: int = DEFAULT_BUDGET
) -> ValueTable:
    """Exact win probabilities for every config of total <= n_max."""
    w = check_weights(g, weights)
    need = required_bytes(g.m, n_max)
    if need > memory_budget:
        raise MemoryBudgetExceeded(need, memory_budget)
    layers = [np.array([1.0])]
    tables = _binom_tables(g.m, n_max)
    for t in range(1, n_max + 1):
        layers.append(_next_layer(g, w, compositions(t, g.m), layers[t - 1], tables))
    return ValueTable(graph=g, n_max=n_max, weights=w, layers=layers)


def _next_layer(
    g: Graph, w: np.ndarray, cfgs: np.ndarray, prev: np.ndarray, tables
) -> np.ndarray:
    n_states, m = cfgs.shape
    cand = np.full((n_states, m), -1.0)
    for e in range(m):
        mask = cfgs[:, e] > 0
        if not np.any(mask):
            continue
        child = cfgs[mask].copy()
        child[:, e] -= 1
        cand[mask, e] = prev[rank_configs(child, tables)]
    vals = np.zeros(n_states)
    for v in range(1, g.k + 1):
        inc = list(g.incidence[v - 1])
        vm = cand[:, inc].max(axis=1)
        vals += w[v - 1] * np.where(vm < 0.0, 0.0, vm)
    return vals


def _check_config(t: ValueTable, cfg) -> np.ndarray:
    cfg = np.asarray(cfg, dtype=np.int64)
    if cfg.shape != (t.graph.m,):
        raise NegativeEntry(f"expected {t.graph.m} entries, got shape {cfg.shape}")
    if np.any(cfg < 0):
        raise NegativeEntry(f"config {cfg.tolist()} has a negative entry")
    if int(cfg.sum()) > t.n_max:
        raise LayerOutOfRange(f"total {int(cfg.sum())} exceeds n_max {t.n_max}")
    return cfg


def value_at(t: ValueTable, cfg) -> float:
    cfg = _check_config(t, cfg)
    return float(t.layers[int(cfg.sum())][rank_config(cfg)])


def optimal_move(t: ValueTable, cfg, v: int) -> int:
    """Best edge for the drawn vertex (ties to the lowest edge index), or
    LOSS when no incident edge has positive capacity."""
    cfg = _check_config(t, cfg)
    total = int(cfg.sum())
    if total < 1:
        raise LayerOutOfRange("no move from the empty config")
    prev = t.layers[total - 1]
    best_edge = LOSS
    best_val = -1.0
    for e in t.graph.incidence[v - 1]:
        if cfg[e] <= 0:
            continue
        child = cfg.copy()
        child[e] -= 1
        val = float(prev[rank_config(child)])
        if val > best_val:
            best_val = val
            best_edge = e
    return best_edge


def argmax_config(t: ValueTable, n: int) -> tuple[np.ndarray, float]:
    """Max-value config of a layer; ties resolve to the lexicographically
    smallest config."""
    if not 0 <= n <= t.n_max:
        raise LayerOutOfRange(f"layer {n} not in 0..{t.n_max}")
    vals = t.layers[n]
    best = float(vals.max())
    cfgs = compositions(n, t.graph.m)
    ties = np.flatnonzero(vals == best)
    winner = min(map(tuple, cfgs[ties]))
    return np.array(winner, dtype=np.int64), best


def active_faces(g: Graph) -> list[int]:
    """Proper subsets with at least one fully-inside vertex (0 < d(F) < k)."""
    return [F for F in proper_subsets(g) if full_degree_count(g, F) > 0]


def layer_face_values(t: ValueTable, n: int, faces=None) -> np.ndarray:
    """(N, n_faces) matrix of face functional values over a layer."""
    g = t.graph
    if faces is None:
        faces = active_faces(g)
    cfgs = compositions(n, g.m)
    out = np.empty((len(cfgs), len(faces)))
    for j, F in enumerate(faces):
        members = subset_members(F, g.m)
        coef = face_scale(g.m, subset_size(F))
        d = full_degree_count(g, F)
        out[:, j] = coef * (cfgs[:, members].sum(axis=1) - n * d / g.k)
    return out


def slice_max(t: ValueTable, n: int, spec: SliceSpec):
    """Max-value config within a critical-window slice of layer n, or None
    when the slice is empty (a distinguished result, not a failure).

    Kind I: some face with 0 < d(F) < k has L <= -A*sqrt(n); kind II: all such
    faces have L >= A*sqrt(n); kind III: the minimum such L lies strictly in
    (-A*sqrt(n), A*sqrt(n)).
    """
    if not 0 <= n <= t.n_max:
        raise LayerOutOfRange(f"layer {n} not in 0..{t.n_max}")
    g = t.graph
    faces = active_faces(g)
    if not faces:
        raise EmptyOrFullSubset("graph has no proper subset with a full-degree vertex")
    L = layer_face_values(t, n, faces)
    lmin = L.min(axis=1)
    cut = spec.amplitude * np.sqrt(n)
    if spec.kind == "I":
        members = lmin <= -cut
    elif spec.kind == "II":
        members = lmin >= cut
    else:
        members = (lmin > -cut) & (lmin < cut)
    if not np.any(members):
        return None
    vals = t.layers[n]
    idx = np.flatnonzero(members)
    best = float(vals[idx].max())
    cfgs = compositions(n, g.m)
    ties = idx[vals[idx] == best]
    winner = min(map(tuple, cfgs[ties]))
    return np.array(winner, dtype=np.int64), best


# --- exact rational side oracle ---------------------------------------------


def exact_value(g: Graph, cfg, weights=None, _memo=None) -> Fraction:
    """Memoized exact-rational evaluation of the optimality recursion.

    Intended for small totals (<= 12); the 64-bit table is the production
    path.  Uniform weights only unless a Fraction weight list is supplied.
    """
    if weights is None:
        weights = [Fraction(1, g.k)] * g.k
    cfg = tuple(int(c) for c in cfg)
    if _memo is None:
        _memo = {}
    return _exact(g, cfg, tuple(weights), _memo)


def _exact(g: Graph, cfg, weights, memo) -> Fraction:
    if sum(cfg) == 0:
        return Fraction(1)
    hit = memo.get(cfg)
    if hit is not None:
        return hit
    total = Fraction(0)
    for v in range(1, g.k + 1):
        best = Fraction(0)
        found = False
        for e in g.incidence[v - 1]:
            if cfg[e] > 0:
                child = list(cfg)
                child[e] -= 1
                val = _exact(g, tuple(child), weights, memo)
                if not found or val > best:
                    best = val
                    found = True
        total += weights[v - 1] * (best if found else Fraction(0))
    memo[cfg] = total
    return total


# --- persistence ------------------------------------------------------------


def save_table(t: ValueTable, path) -> None:
    """Binary cache: magic, version, graph hash, k, |E|, n_max, weights, then
    each layer as little-endian float64 in rank order."""
    try:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<IQIII", _VERSION, t.hash, t.graph.k, t.graph.m, t.n_max))
            fh.write(np.asarray(t.weights, dtype="<f8").tobytes())
            for layer in t.layers:
                fh.write(np.asarray(layer, dtype="<f8").tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_table(path, g: Graph) -> ValueTable:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    head = 4 + struct.calcsize("<IQIII")
    if len(data) < head or data[:4] != _MAGIC:
        raise FormatMismatch("bad magic or truncated header")
    version, ghash, k, m, n_max = struct.unpack("<IQIII", data[4:head])
    if version != _VERSION:
        raise FormatMismatch(f"unsupported format version {version}")
    if ghash != graph_hash(g) or k != g.k or m != g.m:
        raise GraphHashMismatch("cache was built for a different graph")
    need = head + 8 * k + required_bytes(m, n_max)
    if len(data) != need:
        raise FormatMismatch(f"expected {need} bytes, file has {len(data)}")
    off = head
    weights = np.frombuffer(data, dtype="<f8", count=k, offset=off).copy()
    off += 8 * k
    layers = []
    for t in range(n_max + 1):
        size = layer_size(t, m)
        layers.append(np.frombuffer(data, dtype="<f8", count=size, offset=off).copy())
        off += 8 * size
    return ValueTable(graph=g, n_max=n_max, weights=weights, layers=layers)
