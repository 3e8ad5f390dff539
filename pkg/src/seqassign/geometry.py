"""Convex geometry of the game: reachable-region membership, face functionals,
boundary distances, ray exits, and flow-decomposed move kernels.

Points live in the edge simplex (non-negative entries, unit sum, one entry per
edge in graph edge order).  Every proper non-empty edge subset F induces a
linear constraint

    slack(F, x) = sum_{e in F} x_e  -  (weight of vertices fully inside F)

with uniform vertex weight 1/k by default.  A point is interior-reachable when
all slacks are positive, on the region boundary when the minimum slack is zero,
and inaccessible when some slack is negative.  Membership can be certified
independently by a max-flow computation on a small auxiliary network, which
also produces a per-vertex randomized move kernel realizing the point as a
mean displacement.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .errors import (
    DegenerateRay,
    EmptyOrFullSubset,
    NoExit,
    OutsideSimplex,
    SubsetCapExceeded,
)
from .graph import SUBSET_CAP, Graph, full_degree_count, subset_members, subset_size

TOL = 1e-9
_FLOW_EPS = 1e-12
_BLOCK = 1 << 16


class RegionKind(Enum):
    INTERIOR_REACHABLE = "InteriorReachable"
    BOUNDARY_K = "BoundaryK"
    INACCESSIBLE = "Inaccessible"
    OUTSIDE_SIMPLEX = "OutsideSimplex"


@dataclass(frozen=True)
class RegionClass:
    """Classification of a simplex point, with the minimizing constraint."""

    kind: RegionKind
    subset: int | None
    slack: float | None

    def to_json(self, m: int) -> dict:
        return {
            "class": self.kind.value,
            "subset": None if self.subset is None else subset_members(self.subset, m),
            "slack": self.slack,
        }


@dataclass(frozen=True)
class FaceFunctional:
    """Unit-norm, zero-sum linear functional attached to a proper edge subset.

    Coefficient a on subset edges, -b off it, with a*|F| = b*|E\\F| and
    a^2*|F| + b^2*|E\\F| = 1; the scale a+b equals sqrt(|E|/(|F|*|E\\F|)).
    """

    subset: int
    a: float
    b: float

    @property
    def scale(self) -> float:
        return self.a + self.b


@dataclass(frozen=True)
class MoveKernel:
    """Per-vertex edge distributions whose mean displacement is `target`.

    q[v-1, e] is the probability of choosing edge e when vertex v is drawn;
    rows sum to 1, entries vanish off the vertex's incident edges, and
    weights @ q equals target.
    """

    q: np.ndarray
    target: np.ndarray
    weights: np.ndarray


def uniform_weights(k: int) -> np.ndarray:
    return np.full(k, 1.0 / k)


def check_weights(g: Graph, weights) -> np.ndarray:
    if weights is None:
        return uniform_weights(g.k)
    w = np.asarray(weights, dtype=float)
    if w.shape != (g.k,):
        raise OutsideSimplex(f"expected {g.k} vertex weights, got shape {w.shape}")
    if np.any(w <= 0) or abs(w.sum() - 1.0) > TOL:
        raise OutsideSimplex("vertex weights must be positive and sum to 1")
    return w


def check_simplex(g: Graph, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (g.m,):
        raise OutsideSimplex(f"expected {g.m} entries, got shape {x.shape}")
    if np.any(x < -TOL):
        raise OutsideSimplex(f"negative entry {x.min()}")
    if abs(x.sum() - 1.0) > TOL:
        raise OutsideSimplex(f"entries sum to {x.sum()}, not 1")
    return x


# --- subset machinery -------------------------------------------------------


def _build_block(g: Graph, lo: int, hi: int):
    """Indicator matrix, full-degree vertex matrix and sizes for subsets lo..hi-1."""
    ids = np.arange(lo, hi, dtype=np.int64)
    ind = (ids[:, None] >> np.arange(g.m)[None, :]) & 1
    sizes = ind.sum(axis=1)
    vmasks = np.array([g.vertex_mask(v) for v in range(1, g.k + 1)], dtype=np.int64)
    full = (vmasks[None, :] & ~ids[:, None]) == 0
    return ids, ind.astype(float), full, sizes


# graphs up to 16 edges fit one cached block; larger ones stream uncached
_subset_block = lru_cache(maxsize=64)(_build_block)


def _blocks(g: Graph):
    if g.m > SUBSET_CAP:
        raise SubsetCapExceeded(f"|E|={g.m} exceeds enumeration cap {SUBSET_CAP}")
    top = (1 << g.m) - 1
    make = _subset_block if g.m <= 16 else _build_block
    lo = 1
    while lo < top:
        hi = min(lo + _BLOCK, top)
        yield make(g, lo, hi)
        lo = hi


def slack(g: Graph, subset: int, x, weights=None) -> float:
    """Margin of one constraint: sum of x over the subset minus the full-degree weight."""
    x = np.asarray(x, dtype=float)
    w = check_weights(g, weights)
    s = sum(x[e] for e in subset_members(subset, g.m))
    d = sum(w[v - 1] for v in range(1, g.k + 1) if g.vertex_mask(v) & ~subset == 0)
    return float(s - d)


def all_slacks(g: Graph, x, weights=None) -> np.ndarray:
    """Slacks of every proper non-empty subset, ascending bitmask order (id 1..2^m-2)."""
    x = np.asarray(x, dtype=float)
    w = check_weights(g, weights)
    out = []
    for _, ind, full, _ in _blocks(g):
        out.append(ind @ x - full @ w)
    return np.concatenate(out)


def min_slack(g: Graph, x, weights=None) -> tuple[float, int]:
    """Minimum slack and the first subset attaining it."""
    x = np.asarray(x, dtype=float)
    w = check_weights(g, weights)
    best = math.inf
    best_id = 0
    for ids, ind, full, _ in _blocks(g):
        s = ind @ x - full @ w
        i = int(np.argmin(s))
        if s[i] < best:
            best = float(s[i])
            best_id = int(ids[i])
    return best, best_id


def classify_point(g: Graph, x, weights=None) -> RegionClass:
    """Classify a simplex point by exhaustive constraint enumeration.

    Raises OutsideSimplex for points off the simplex (tolerance 1e-9) and
    SubsetCapExceeded when |E| > 24.
    """
    x = check_simplex(g, x)
    val, sub = min_slack(g, x, weights)
    if val > TOL:
        kind = RegionKind.INTERIOR_REACHABLE
    elif val >= -TOL:
        kind = RegionKind.BOUNDARY_K
    else:
        kind = RegionKind.INACCESSIBLE
    return RegionClass(kind=kind, subset=sub, slack=val)


# --- max-flow membership ----------------------------------------------------


class _FlowNetwork:
    """Edmonds-Karp max flow with paired residual arcs, deterministic order."""

    def __init__(self, n_nodes: int):
        self.adj: list[list[int]] = [[] for _ in range(n_nodes)]
        self.to: list[int] = []
        self.cap: list[float] = []

    def add_arc(self, u: int, v: int, cap: float) -> int:
        i = len(self.to)
        self.to.append(v)
        self.cap.append(cap)
        self.adj[u].append(i)
        self.to.append(u)
        self.cap.append(0.0)
        self.adj[v].append(i + 1)
        return i

    def max_flow(self, s: int, t: int) -> float:
        total = 0.0
        n = len(self.adj)
        while True:
            prev_arc = [-1] * n
            prev_arc[s] = -2
            queue = deque([s])
            while queue and prev_arc[t] == -1:
                u = queue.popleft()
                for i in self.adj[u]:
                    v = self.to[i]
                    if prev_arc[v] == -1 and self.cap[i] > _FLOW_EPS:
                        prev_arc[v] = i
                        queue.append(v)
            if prev_arc[t] == -1:
                return total
            push = math.inf
            v = t
            while v != s:
                i = prev_arc[v]
                push = min(push, self.cap[i])
                v = self.to[i ^ 1]
            v = t
            while v != s:
                i = prev_arc[v]
                self.cap[i] -= push
                self.cap[i ^ 1] += push
                v = self.to[i ^ 1]
            total += push

    def flow_on(self, arc: int) -> float:
        return self.cap[arc ^ 1]


def membership_flow(g: Graph, x, weights=None) -> tuple[float, MoveKernel | None]:
    """Max-flow membership certificate for the closed reachable region.

    Builds the auxiliary network (source -> vertex v at capacity p_v,
    v -> edge node at capacity 2 for incident edges, edge node -> sink at
    capacity x_e) and returns (max flow value, kernel).  The point belongs to
    the closed region iff the value is 1 (tolerance 1e-9), in which case the
    kernel q[v][e] = flow(v -> e)/p_v realizes x as its mean.
    """
    x = check_simplex(g, x)
    w = check_weights(g, weights)
    k, m = g.k, g.m
    s, t = 0, k + m + 1
    net = _FlowNetwork(k + m + 2)
    for v in range(1, k + 1):
        net.add_arc(s, v, float(w[v - 1]))
    mid_arcs: dict[tuple[int, int], int] = {}
    for v in range(1, k + 1):
        for e in g.incidence[v - 1]:
            mid_arcs[(v, e)] = net.add_arc(v, k + 1 + e, 2.0)
    for e in range(m):
        net.add_arc(k + 1 + e, t, float(x[e]))
    value = net.max_flow(s, t)
    if abs(value - 1.0) > TOL:
        return value, None
    q = np.zeros((k, m))
    for (v, e), arc in mid_arcs.items():
        q[v - 1, e] = net.flow_on(arc) / w[v - 1]
    return value, MoveKernel(q=q, target=x.copy(), weights=w)


# --- canonical interior point and face functionals --------------------------


def x_star(g: Graph) -> np.ndarray:
    """Canonical interior point: each edge gets the mean reciprocal degree of
    its endpoints, scaled by 1/k."""
    out = np.zeros(g.m)
    for e, (u, v) in enumerate(g.edges):
        out[e] = (1.0 / g.degree(u) + 1.0 / g.degree(v)) / g.k
    return out


def face_functional(g: Graph, subset: int) -> FaceFunctional:
    f = subset_size(subset)
    if subset <= 0 or f == 0 or f >= g.m or subset >= (1 << g.m) - 1:
        raise EmptyOrFullSubset(f"subset {subset:#x} must be proper and non-empty")
    s = 1.0 / math.sqrt(f * (g.m - f) * g.m)
    return FaceFunctional(subset=subset, a=(g.m - f) * s, b=f * s)


def face_scale(m: int, f: int) -> float:
    """a+b for a subset of size f: sqrt(m / (f*(m-f)))."""
    return math.sqrt(m / (f * (m - f)))


def kappa(g: Graph) -> float:
    """Smallest face-functional scale over proper subsets; attained at |F| = m//2."""
    f = g.m // 2
    return face_scale(g.m, f)


def full_degree_fraction(g: Graph, subset: int) -> float:
    return full_degree_count(g, subset) / g.k


def L_value(g: Graph, subset: int, n: int, v) -> float:
    """Signed, rescaled count-space distance to one constraint hyperplane:
    (a+b) * (sum of v over the subset - n * d(F)/k)."""
    f = subset_size(subset)
    if subset <= 0 or f == 0 or f >= g.m:
        raise EmptyOrFullSubset(f"subset {subset:#x} must be proper and non-empty")
    v = np.asarray(v, dtype=float)
    tot = sum(v[e] for e in subset_members(subset, g.m))
    return face_scale(g.m, f) * (tot - n * full_degree_fraction(g, subset))


def boundary_distance(g: Graph, x) -> float:
    """Distance from x to the region boundary within the simplex hyperplane
    (uniform vertex law): min over proper subsets of (a+b) * slack.  Negative
    for points outside the closed region (signed violation depth)."""
    x = check_simplex(g, x)
    w = uniform_weights(g.k)
    best = math.inf
    for _, ind, full, sizes in _blocks(g):
        coefs = np.sqrt(g.m / (sizes * (g.m - sizes)))
        s = (ind @ x - full @ w) * coefs
        best = min(best, float(s.min()))
    return best


def ray_exit(g: Graph, origin, direction) -> tuple[np.ndarray, float, int]:
    """First point along origin + t*direction (t > 0) where some slack hits 0.

    Requires all slacks of origin to be positive.  Returns (point, t, subset).
    Raises NoExit when no slack decreases along the direction.
    """
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    w = uniform_weights(g.k)
    best_t = math.inf
    best_id = 0
    for ids, ind, full, _ in _blocks(g):
        s0 = ind @ origin - full @ w
        dd = ind @ direction
        drop = dd < -1e-15
        if not np.any(drop):
            continue
        t = s0[drop] / -dd[drop]
        i = int(np.argmin(t))
        if t[i] < best_t:
            best_t = float(t[i])
            best_id = int(ids[drop][i])
    if not math.isfinite(best_t):
        raise NoExit("no constraint tightens along this direction")
    return origin + best_t * direction, best_t, best_id


def ray_exit_point(g: Graph, z, x) -> np.ndarray:
    """Boundary point where the ray from an interior z through x leaves the
    region: z + t(x-z) at the smallest t > 0 with zero minimum slack."""
    z = np.asarray(z, dtype=float)
    x = check_simplex(g, x)
    if np.allclose(z, x, atol=1e-15, rtol=0.0):
        raise DegenerateRay("ray target equals the interior anchor")
    y, _, _ = ray_exit(g, z, x - z)
    return y


def clip_to_region(g: Graph, y, anchor=None) -> np.ndarray:
    """Nearest region point along the segment toward an interior anchor:
    moves y just far enough that its minimum slack reaches 0."""
    y = np.asarray(y, dtype=float)
    if anchor is None:
        anchor = x_star(g)
    anchor = np.asarray(anchor, dtype=float)
    w = uniform_weights(g.k)
    lam = 0.0
    for _, ind, full, _ in _blocks(g):
        sy = ind @ y - full @ w
        bad = sy < 0
        if not np.any(bad):
            continue
        sa = (ind @ anchor - full @ w)[bad]
        lam = max(lam, float(np.max(-sy[bad] / (sa - sy[bad]))))
    if lam == 0.0:
        return y
    return (1.0 - lam) * y + lam * anchor
