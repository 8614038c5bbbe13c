"""Sparse Erdos-Renyi graphs, rooted r-neighbourhoods and neighbourhood statistics."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import ConfigError, DomainError, MomentEstimate
from .stats import norm_estimate

__all__ = [
    "SparseGraph",
    "GraphOverlay",
    "RootedNeighbourhood",
    "StatisticSpec",
    "generate_er",
    "skip_positions",
    "skip_sample_pairs",
    "batched_statistic_values",
    "r_neighbourhood",
    "ball",
    "resample_edges",
    "evaluate_statistic",
    "statistic_values",
    "neighbourhood_size_moments_mc",
]


# ---------------------------------------------------------------------------
# graphs

def _decode_pairs(pos: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Map linear indices k = v(v-1)/2 + u (u < v) back to (u, v)."""
    pos = pos.astype(np.int64)
    v = ((1.0 + np.sqrt(1.0 + 8.0 * pos)) / 2.0).astype(np.int64)
    v -= (v * (v - 1) // 2 > pos)
    v += ((v + 1) * v // 2 <= pos)
    u = pos - v * (v - 1) // 2
    return u, v


def skip_positions(length: int, p: float, rng: np.random.Generator,
                   n_rows: int) -> Tuple[np.ndarray, np.ndarray]:
    """Bernoulli(p) hits on ``n_rows`` independent rows of ``length`` slots.

    Uses geometric skipping, so the cost is proportional to the number of
    hits.  Returns (row, position) arrays sorted by row, then position.
    """
    empty = np.zeros(0, dtype=np.int64)
    if p <= 0.0 or length == 0 or n_rows == 0:
        return empty, empty
    if p >= 1.0:
        return (np.repeat(np.arange(n_rows, dtype=np.int64), length),
                np.tile(np.arange(length, dtype=np.int64), n_rows))
    cap = length + 1

    def skips(shape):
        # a tiny p can overflow the int64 geometric draw; any skip past the end is equivalent
        g = rng.geometric(p, size=shape)
        return np.where((g <= 0) | (g > cap), cap, g)

    mean = length * p
    width = int(mean + 6.0 * math.sqrt(mean) + 16)
    first = np.cumsum(skips((n_rows, width)), axis=1) - 1
    blocks = [first]
    last = first[:, -1].copy()
    need = last < length
    while need.any():
        rows = np.flatnonzero(need)
        extra_w = max(16, width // 4)
        extra = last[rows, None] + np.cumsum(skips((rows.size, extra_w)), axis=1)
        block = np.full((n_rows, extra_w), length, dtype=np.int64)
        block[rows] = extra
        blocks.append(block)
        last[rows] = extra[:, -1]
        need = last < length
    pos = np.concatenate(blocks, axis=1) if len(blocks) > 1 else first
    row, col = np.nonzero(pos < length)
    return row.astype(np.int64), pos[row, col]


def skip_sample_pairs(n: int, p: float, rng: np.random.Generator,
                      n_graphs: int = 1) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Edges of ``n_graphs`` independent G(n, p) graphs.

    Returns (graph id, u, v) arrays with u < v, sorted by graph then pair index.
    """
    gid, pos = skip_positions(n * (n - 1) // 2, p, rng, n_graphs)
    u, v = _decode_pairs(pos)
    return gid, u, v


class SparseGraph:
    """Simple undirected graph on 0..n-1 stored as sorted neighbour lists (CSR)."""

    __slots__ = ("n", "indptr", "indices")

    def __init__(self, n: int, indptr: np.ndarray, indices: np.ndarray):
        self.n = int(n)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)

    @classmethod
    def from_edges(cls, n: int, u: Iterable[int], v: Iterable[int]) -> "SparseGraph":
        u = np.asarray(list(u) if not isinstance(u, np.ndarray) else u, dtype=np.int64)
        v = np.asarray(list(v) if not isinstance(v, np.ndarray) else v, dtype=np.int64)
        if u.shape != v.shape:
            raise DomainError("edge endpoint arrays differ in length")
        if u.size and (min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= n):
            raise DomainError("edge endpoint out of range")
        if np.any(u == v):
            raise DomainError("self-loops are not allowed")
        src = np.concatenate([u, v])
        dst = np.concatenate([v, u])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        if src.size > 1 and np.any((src[1:] == src[:-1]) & (dst[1:] == dst[:-1])):
            raise DomainError("duplicate edges are not allowed")
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        return cls(n, indptr, dst)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def n_edges(self) -> int:
        return self.indices.size // 2

    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """Edge endpoints (u, v) with u < v in lexicographic order."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees())
        keep = src < self.indices
        return src[keep], self.indices[keep]

    def to_edge_list_text(self) -> str:
        u, v = self.edges()
        return "".join(f"{a} {b}\n" for a, b in zip(u.tolist(), v.tolist()))

    @classmethod
    def from_edge_list_text(cls, n: int, text: str) -> "SparseGraph":
        pairs = [tuple(int(t) for t in line.split()) for line in text.splitlines() if line.strip()]
        return cls.from_edges(n, [a for a, _ in pairs], [b for _, b in pairs])


def generate_er(n: int, p: float, rng: np.random.Generator) -> SparseGraph:
    """G(n, p) in expected O(n + p n^2) time."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"edge probability must lie in [0, 1], got {p!r}")
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n!r}")
    _, u, v = skip_sample_pairs(n, p, rng)
    return SparseGraph.from_edges(n, u, v)


class GraphOverlay:
    """Copy-on-write view of a base graph with some neighbour lists replaced."""

    def __init__(self, base: SparseGraph, modified: Mapping[int, np.ndarray],
                 changed: FrozenSet[int] = frozenset()):
        self.base = base
        self.n = base.n
        self._modified = dict(modified)
        self.changed_vertices = frozenset(changed)

    def neighbors(self, v: int) -> np.ndarray:
        got = self._modified.get(v)
        return self.base.neighbors(v) if got is None else got

    def degree(self, v: int) -> int:
        return int(self.neighbors(v).size)

    def degrees(self) -> np.ndarray:
        deg = self.base.degrees().copy()
        for v, nb in self._modified.items():
            deg[v] = nb.size
        return deg

    @property
    def n_edges(self) -> int:
        return int(self.degrees().sum()) // 2

    def materialize(self) -> SparseGraph:
        src = []
        dst = []
        for v in range(self.n):
            nb = self.neighbors(v)
            nb = nb[nb > v]
            src.append(np.full(nb.size, v, dtype=np.int64))
            dst.append(nb)
        return SparseGraph.from_edges(self.n, np.concatenate(src), np.concatenate(dst))


def resample_edges(graph, vertices: Iterable[int], p: float, rng: np.random.Generator) -> GraphOverlay:
    """Redraw every edge indicator of a pair meeting ``vertices``.

    Pairs with at least one endpoint in ``vertices`` get fresh Bernoulli(p)
    indicators; all other pairs keep their state.  ``changed_vertices`` on the
    result lists endpoints of pairs whose state flipped.
    """
    if isinstance(graph, GraphOverlay):
        graph = graph.materialize()
    n = graph.n
    vset = sorted(set(int(a) for a in vertices))
    inside = np.zeros(n, dtype=bool)
    inside[vset] = True
    new_nb: Dict[int, list] = {a: [] for a in vset}
    everyone = np.arange(n, dtype=np.int64)
    for a in vset:
        cand = everyone[(everyone != a) & (~inside | (everyone > a))]
        hits = cand[rng.random(cand.size) < p]
        for b in hits.tolist():
            new_nb[a].append(b)
            new_nb.setdefault(b, []).append(a)
    modified: Dict[int, np.ndarray] = {}
    changed = set()
    touched = set(new_nb)
    for a in vset:
        touched.update(graph.neighbors(a).tolist())
    for v in sorted(touched):
        old = graph.neighbors(v)
        if inside[v]:
            fresh = np.array(sorted(new_nb.get(v, [])), dtype=np.int64)
        else:
            kept = old[~inside[old]]
            fresh = np.union1d(kept, np.array(new_nb.get(v, []), dtype=np.int64))
        modified[v] = fresh
        diff = np.setxor1d(old, fresh)
        if diff.size:
            changed.add(v)
            changed.update(diff.tolist())
    return GraphOverlay(graph, modified, frozenset(changed))


# ---------------------------------------------------------------------------
# neighbourhoods

@dataclass(frozen=True)
class RootedNeighbourhood:
    """Subgraph induced by the vertices within distance ``radius`` of ``root``."""

    root: int
    radius: int
    distance: Mapping[int, int]
    induced_edges: Tuple[Tuple[int, int], ...]
    _adj: Dict[int, Tuple[int, ...]] = field(default_factory=dict, repr=False, compare=False)

    @property
    def vertices(self) -> Tuple[int, ...]:
        return tuple(sorted(self.distance))

    @property
    def size(self) -> int:
        return len(self.distance)

    def neighbors(self, v: int) -> Tuple[int, ...]:
        return self._adj.get(v, ())

    def degree(self, v: int) -> int:
        return len(self._adj.get(v, ()))


def r_neighbourhood(g, v: int, r: int) -> RootedNeighbourhood:
    """BFS ball of radius r around v, with all edges among its vertices."""
    if not 0 <= v < g.n:
        raise DomainError(f"vertex {v} out of range for a graph on {g.n} vertices")
    if r < 0:
        raise DomainError(f"radius must be >= 0, got {r}")
    dist = {int(v): 0}
    queue = deque([int(v)])
    while queue:
        a = queue.popleft()
        if dist[a] == r:
            continue
        for b in g.neighbors(a).tolist():
            if b not in dist:
                dist[b] = dist[a] + 1
                queue.append(b)
    adj: Dict[int, Tuple[int, ...]] = {}
    edges = []
    for a in sorted(dist):
        nb = tuple(b for b in g.neighbors(a).tolist() if b in dist)
        adj[a] = nb
        edges.extend((a, b) for b in nb if a < b)
    return RootedNeighbourhood(int(v), int(r), dist, tuple(edges), adj)


def ball(g, sources: Iterable[int], r: int) -> set:
    """Vertices within distance r of any source."""
    dist = {int(s): 0 for s in sources}
    queue = deque(dist)
    while queue:
        a = queue.popleft()
        if dist[a] == r:
            continue
        for b in g.neighbors(a).tolist():
            if b not in dist:
                dist[b] = dist[a] + 1
                queue.append(b)
    return set(dist)


# ---------------------------------------------------------------------------
# statistics

def _pattern_diameter(n_vertices: int, edges: Sequence[Tuple[int, int]]) -> int:
    adj = {i: set() for i in range(n_vertices)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    diam = 0
    for s in range(n_vertices):
        dist = {s: 0}
        queue = deque([s])
        while queue:
            a = queue.popleft()
            for b in adj[a]:
                if b not in dist:
                    dist[b] = dist[a] + 1
                    queue.append(b)
        if len(dist) != n_vertices:
            raise DomainError("subgraph pattern must be connected")
        diam = max(diam, max(dist.values()))
    return diam


@dataclass(frozen=True)
class StatisticSpec:
    """A neighbourhood statistic U with its declared growth |U| <= c |V|^beta.

    Use the constructors: ``degree_indicator``, ``rooted_subgraph_count``,
    ``high_degree_few_small_neighbours`` or ``custom``.
    """

    kind: str
    c: float
    beta: float
    r: int
    degrees: FrozenSet[int] = frozenset()
    pattern: Tuple[Tuple[int, int], ...] = ()
    d: int = 0
    k: int = 0
    fn: Optional[Callable[[RootedNeighbourhood], float]] = field(default=None, compare=False)

    @classmethod
    def degree_indicator(cls, degrees: Iterable[int]) -> "StatisticSpec":
        return cls("degree_indicator", 1.0, 0.0, 1, degrees=frozenset(int(s) for s in degrees))

    @classmethod
    def rooted_subgraph_count(cls, pattern: Iterable[Sequence[int]]) -> "StatisticSpec":
        edges = tuple(sorted((min(a, b), max(a, b)) for a, b in pattern))
        if not edges or any(a == b for a, b in edges) or len(set(edges)) != len(edges):
            raise DomainError("pattern must be a non-empty simple edge list")
        h = max(b for _, b in edges) + 1
        if sorted({x for e in edges for x in e}) != list(range(h)):
            raise DomainError("pattern vertices must be labelled 0..h-1")
        return cls("rooted_subgraph_count", float(h), float(h - 1), _pattern_diameter(h, edges), pattern=edges)

    @classmethod
    def high_degree_few_small_neighbours(cls, d: int, k: int) -> "StatisticSpec":
        return cls("high_degree_few_small_neighbours", 1.0, 0.0, 2, d=int(d), k=int(k))

    @classmethod
    def custom(cls, fn: Callable[[RootedNeighbourhood], float], c: float, beta: float, r: int) -> "StatisticSpec":
        if not (c > 0 and beta >= 0 and r >= 0):
            raise DomainError("custom statistic needs c > 0, beta >= 0, r >= 0")
        return cls("custom", float(c), float(beta), int(r), fn=fn)

    @property
    def vectorized(self) -> bool:
        return self.kind in ("degree_indicator", "high_degree_few_small_neighbours")

    def to_dict(self) -> dict:
        if self.kind == "degree_indicator":
            return {"kind": self.kind, "degrees": sorted(self.degrees)}
        if self.kind == "rooted_subgraph_count":
            return {"kind": self.kind, "pattern": [list(e) for e in self.pattern]}
        if self.kind == "high_degree_few_small_neighbours":
            return {"kind": self.kind, "d": self.d, "k": self.k}
        raise ConfigError("custom statistics cannot be serialized")

    @classmethod
    def from_dict(cls, data: Mapping) -> "StatisticSpec":
        kind = data.get("kind")
        if kind == "degree_indicator":
            return cls.degree_indicator(data["degrees"])
        if kind == "rooted_subgraph_count":
            return cls.rooted_subgraph_count(data["pattern"])
        if kind == "high_degree_few_small_neighbours":
            return cls.high_degree_few_small_neighbours(data["d"], data["k"])
        raise ConfigError(f"unknown statistic kind {kind!r}")


def _count_rooted_copies(nbhd: RootedNeighbourhood, pattern: Tuple[Tuple[int, int], ...]) -> int:
    h = max(b for _, b in pattern) + 1
    padj = {i: set() for i in range(h)}
    for a, b in pattern:
        padj[a].add(b)
        padj[b].add(a)

    def count_maps(targets_of, start, start_target, host_nb, host_has_edge) -> int:
        # BFS order of the pattern from `start`, each vertex with an already placed parent
        order, parent = [start], {start: None}
        for a in order:
            for b in sorted(padj[a]):
                if b not in parent:
                    parent[b] = a
                    order.append(b)
        total = 0
        phi = {start: start_target}
        used = {start_target}

        def extend(i: int):
            nonlocal total
            if i == len(order):
                total += 1
                return
            y = order[i]
            for cand in host_nb(phi[parent[y]]):
                if cand in used:
                    continue
                if all(host_has_edge(cand, phi[z]) for z in padj[y] if z in phi):
                    phi[y] = cand
                    used.add(cand)
                    extend(i + 1)
                    used.discard(cand)
                    del phi[y]

        extend(1)
        return total

    host_sets = {v: set(nbhd.neighbors(v)) for v in nbhd.distance}
    with_root = sum(
        count_maps(None, x, nbhd.root, lambda a: nbhd.neighbors(a), lambda a, b: b in host_sets[a])
        for x in range(h)
    )
    autos = sum(
        count_maps(None, 0, t, lambda a: sorted(padj[a]), lambda a, b: b in padj[a])
        for t in range(h)
    )
    return with_root // autos


def evaluate_statistic(spec: StatisticSpec, nbhd: RootedNeighbourhood) -> float:
    """U applied to a rooted r-neighbourhood."""
    if nbhd.radius != spec.r:
        raise DomainError(f"statistic needs radius {spec.r}, neighbourhood has radius {nbhd.radius}")
    root = nbhd.root
    if spec.kind == "degree_indicator":
        value = 1.0 if nbhd.degree(root) in spec.degrees else 0.0
    elif spec.kind == "rooted_subgraph_count":
        value = float(_count_rooted_copies(nbhd, spec.pattern))
    elif spec.kind == "high_degree_few_small_neighbours":
        small = sum(1 for u in nbhd.neighbors(root) if nbhd.degree(u) <= spec.d)
        value = 1.0 if nbhd.degree(root) >= spec.d and small <= spec.k else 0.0
    else:
        value = float(spec.fn(nbhd))
    assert abs(value) <= spec.c * nbhd.size ** spec.beta * (1 + 1e-12), (
        f"statistic value {value} exceeds declared growth {spec.c} |V|^{spec.beta}"
    )
    return value


def _vectorized_values(spec: StatisticSpec, deg: np.ndarray, nb_small_count) -> np.ndarray:
    if spec.kind == "degree_indicator":
        return np.isin(deg, sorted(spec.degrees)).astype(float)
    small = nb_small_count(deg <= spec.d)
    return ((deg >= spec.d) & (small <= spec.k)).astype(float)


def statistic_values(spec: StatisticSpec, g) -> np.ndarray:
    """X_i = U(N_r(i, g)) for every vertex i."""
    if spec.vectorized and isinstance(g, SparseGraph):
        deg = g.degrees()
        src = np.repeat(np.arange(g.n), deg)

        def nb_small_count(small):
            return np.bincount(src, weights=small[g.indices].astype(float), minlength=g.n)

        return _vectorized_values(spec, deg, nb_small_count)
    return np.array([evaluate_statistic(spec, r_neighbourhood(g, i, spec.r)) for i in range(g.n)])


def batched_statistic_values(spec: StatisticSpec, n: int, n_graphs: int,
                             gid: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """(n_graphs, n) array of X_i for graphs given as concatenated edge lists."""
    if not spec.vectorized:
        raise DomainError(f"{spec.kind} has no batched evaluation")
    a = gid * n + u
    b = gid * n + v
    size = n_graphs * n
    deg = (np.bincount(a, minlength=size) + np.bincount(b, minlength=size))

    def nb_small_count(small):
        return (np.bincount(a, weights=small[b].astype(float), minlength=size)
                + np.bincount(b, weights=small[a].astype(float), minlength=size))

    return _vectorized_values(spec, deg, nb_small_count).reshape(n_graphs, n)


def neighbourhood_size_moments_mc(n: int, lam: float, r: int, ell: int, n_samples: int,
                                  seed: int, n_batches: int = 30) -> MomentEstimate:
    """Monte Carlo estimate of ||N_r(0)||_ell in G(n, lam/n)."""
    from .rng import replicate_rng

    if n_samples % n_batches:
        raise ConfigError(f"{n_samples} samples do not split into {n_batches} batches")
    per = n_samples // n_batches
    p = min(1.0, lam / n)
    sizes = np.empty(n_samples)
    for bi in range(n_batches):
        rng = replicate_rng(seed, bi)
        for j in range(per):
            g = generate_er(n, p, rng)
            sizes[bi * per + j] = r_neighbourhood(g, 0, r).size
    return norm_estimate(sizes, ell, n_batches)
