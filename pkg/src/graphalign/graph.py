"""Graph containers, synthetic generators, noise and dummy-node padding.

Graphs are dense symmetric weight matrices. Node indices are 0-based and a
permutation is stored as an integer array ``perm`` with ``perm[i]`` the
image of node ``i``; the equivalent matrix has ``P[i, perm[i]] = 1`` so that
``P.T @ A @ P`` moves node ``i`` to position ``perm[i]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import networkx as nx
import numpy as np

SYM_ATOL = 1e-12


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LabeledGraph:
    """Weighted undirected graph with an optional node-feature matrix.

    Diagonal weights are allowed; coarse graphs store intra-cluster weight
    there.
    """

    adj: np.ndarray
    features: Optional[np.ndarray] = None

    def __post_init__(self):
        adj = np.asarray(self.adj, dtype=float)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] < 1:
            raise ValueError(f"adjacency must be a non-empty square matrix, got shape {adj.shape}")
        if not np.all(np.isfinite(adj)):
            raise ValueError("adjacency has non-finite entries")
        if not np.allclose(adj, adj.T, rtol=0.0, atol=SYM_ATOL):
            raise ValueError("adjacency is not symmetric")
        if adj.min() < 0.0 or adj.max() > 1.0:
            raise ValueError("edge weights must lie in [0, 1]")
        object.__setattr__(self, "adj", _frozen((adj + adj.T) / 2.0))
        if self.features is not None:
            feats = np.asarray(self.features, dtype=float)
            if feats.ndim != 2 or feats.shape[0] != adj.shape[0]:
                raise ValueError(
                    f"features must have {adj.shape[0]} rows, got shape {feats.shape}"
                )
            object.__setattr__(self, "features", _frozen(feats))

    @property
    def m(self) -> int:
        return self.adj.shape[0]

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.adj == 0.0) | (self.adj == 1.0)))

    @property
    def n_edges(self) -> int:
        """Number of nonzero off-diagonal pairs."""
        return int(np.count_nonzero(np.triu(self.adj, k=1)))

    def feature_matrix(self) -> np.ndarray:
        """Features, defaulting to one-hot node indicators."""
        return np.eye(self.m) if self.features is None else self.features

    def edges(self) -> list[tuple[int, int, float]]:
        """Upper-triangular edge list ``(u, v, w)`` with ``u <= v``."""
        us, vs = np.nonzero(np.triu(self.adj))
        return [(int(u), int(v), float(self.adj[u, v])) for u, v in zip(us, vs)]

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.m))
        g.add_weighted_edges_from((u, v, w) for u, v, w in self.edges() if u != v)
        return g

    def __eq__(self, other):
        if not isinstance(other, LabeledGraph):
            return NotImplemented
        if self.adj.shape != other.adj.shape or not np.array_equal(self.adj, other.adj):
            return False
        if (self.features is None) != (other.features is None):
            return False
        return self.features is None or np.array_equal(self.features, other.features)

    __hash__ = None

    @classmethod
    def from_edges(cls, m: int, edges: Iterable[Sequence], features=None) -> "LabeledGraph":
        adj = np.zeros((m, m))
        for e in edges:
            u, v = int(e[0]), int(e[1])
            w = float(e[2]) if len(e) > 2 else 1.0
            adj[u, v] = adj[v, u] = w
        return cls(adj, features)


@dataclass(frozen=True)
class GraphSet:
    graphs: tuple = field(default_factory=tuple)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))

    def __len__(self):
        return len(self.graphs)

    def __iter__(self):
        return iter(self.graphs)

    def __getitem__(self, i):
        return self.graphs[i]

    @property
    def sizes(self) -> list[int]:
        return [g.m for g in self.graphs]

    def adjacency_stack(self) -> np.ndarray:
        sizes = set(self.sizes)
        if len(sizes) != 1:
            raise ValueError(f"graphs have unequal node counts {sorted(sizes)}; pad first")
        return np.stack([g.adj for g in self.graphs])


# -- permutations -----------------------------------------------------------


def check_permutation(perm, m: Optional[int] = None) -> np.ndarray:
    perm = np.asarray(perm)
    if perm.ndim != 1 or not np.issubdtype(perm.dtype, np.integer):
        raise ValueError("permutation must be a 1-D integer array")
    if m is not None and perm.shape[0] != m:
        raise ValueError(f"permutation has length {perm.shape[0]}, expected {m}")
    if not np.array_equal(np.sort(perm), np.arange(perm.shape[0])):
        raise ValueError("permutation is not a bijection")
    return perm.astype(np.int64)


def perm_matrix(perm) -> np.ndarray:
    perm = np.asarray(perm)
    mat = np.zeros((perm.shape[0], perm.shape[0]))
    mat[np.arange(perm.shape[0]), perm] = 1.0
    return mat


def invert_permutation(perm) -> np.ndarray:
    perm = np.asarray(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.shape[0])
    return inv


def compose(first, second) -> np.ndarray:
    """Permutation applying ``first`` then ``second``; matrix product first @ second."""
    return np.asarray(second)[np.asarray(first)]


def random_permutation(m: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(m).astype(np.int64)


def permute_graph(g: LabeledGraph, perm) -> LabeledGraph:
    """Return ``P.T A P`` and ``P.T X``: node ``i`` is moved to ``perm[i]``."""
    perm = check_permutation(perm, g.m)
    inv = invert_permutation(perm)
    adj = g.adj[np.ix_(inv, inv)]
    feats = None if g.features is None else g.features[inv]
    return LabeledGraph(adj, feats)


def permute_matrix(adj: np.ndarray, perm) -> np.ndarray:
    inv = invert_permutation(perm)
    return adj[np.ix_(inv, inv)]


# -- generators -------------------------------------------------------------


def gen_community(sizes: Sequence[int], p: float, inter_frac: float, seed: int) -> LabeledGraph:
    """Erdos-Renyi communities joined by ``floor(inter_frac * |V|)`` random cross edges."""
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ValueError("sizes must be non-empty")
    if any(s < 1 for s in sizes):
        raise ValueError("community sizes must be positive")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if inter_frac < 0:
        raise ValueError("inter_frac must be non-negative")
    rng = np.random.default_rng(seed)
    total = sum(sizes)
    adj = np.zeros((total, total))
    labels = np.repeat(np.arange(len(sizes)), sizes)
    start = 0
    for s in sizes:
        iu, ju = np.triu_indices(s, k=1)
        keep = rng.random(iu.shape[0]) < p
        adj[start + iu[keep], start + ju[keep]] = 1.0
        start += s
    n_inter = int(np.floor(inter_frac * total))
    if n_inter:
        iu, ju = np.triu_indices(total, k=1)
        cross = labels[iu] != labels[ju]
        iu, ju = iu[cross], ju[cross]
        if n_inter > iu.shape[0]:
            raise ValueError(
                f"cannot add {n_inter} inter-community edges, only {iu.shape[0]} pairs exist"
            )
        pick = rng.choice(iu.shape[0], size=n_inter, replace=False)
        adj[iu[pick], ju[pick]] = 1.0
    return LabeledGraph(adj + adj.T)


def gen_grid(rows: int, cols: int) -> LabeledGraph:
    if rows < 1 or cols < 1:
        raise ValueError("grid dimensions must be positive")
    m = rows * cols
    adj = np.zeros((m, m))
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                adj[u, u + 1] = adj[u + 1, u] = 1.0
            if r + 1 < rows:
                adj[u, u + cols] = adj[u + cols, u] = 1.0
    return LabeledGraph(adj)


def gen_ego_ba(total_nodes: int, attach: int, hops: int, seed: int) -> LabeledGraph:
    """Ego graph of radius ``hops`` around a uniform node of a Barabasi-Albert graph."""
    if attach < 1 or total_nodes <= attach:
        raise ValueError("need total_nodes > attach >= 1")
    if hops < 0:
        raise ValueError("hops must be non-negative")
    rng = np.random.default_rng(seed)
    ba = nx.barabasi_albert_graph(total_nodes, attach, seed=int(rng.integers(2**32)))
    center = int(rng.integers(total_nodes))
    ego = nx.ego_graph(ba, center, radius=hops)
    nodes = sorted(ego.nodes())
    index = {v: i for i, v in enumerate(nodes)}
    return LabeledGraph.from_edges(len(nodes), ((index[u], index[v]) for u, v in ego.edges()))


def perturb(g: LabeledGraph, rho: float, seed: int) -> LabeledGraph:
    """Remove ``round(rho |E|)`` random edges and add as many among the originally absent pairs."""
    if not g.is_binary:
        raise ValueError("perturb needs a binary graph")
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(g.m, k=1)
    present = g.adj[iu, ju] > 0
    edges = np.flatnonzero(present)
    absent = np.flatnonzero(~present)
    k = int(np.floor(rho * edges.shape[0] + 0.5))
    if k == 0:
        return g
    if absent.shape[0] < k:
        raise ValueError(f"cannot re-add {k} edges: only {absent.shape[0]} absent pairs")
    removed = rng.choice(edges, size=k, replace=False)
    added = rng.choice(absent, size=k, replace=False)
    adj = np.array(g.adj)
    adj[iu[removed], ju[removed]] = adj[ju[removed], iu[removed]] = 0.0
    adj[iu[added], ju[added]] = adj[ju[added], iu[added]] = 1.0
    return LabeledGraph(adj, g.features)


def pad_with_dummies(graph_set: GraphSet, dummy_weight: float = 0.01) -> GraphSet:
    """Grow every graph to the largest node count with weakly connected dummy nodes."""
    if not 0.0 < dummy_weight < 1.0:
        raise ValueError("dummy_weight must lie in (0, 1)")
    if len(graph_set) == 0:
        return graph_set
    m_max = max(graph_set.sizes)
    out = []
    for g in graph_set:
        if g.m == m_max:
            out.append(g)
            continue
        adj = np.full((m_max, m_max), dummy_weight)
        adj[: g.m, : g.m] = g.adj
        np.fill_diagonal(adj[g.m :, g.m :], 0.0)
        feats = None
        if g.features is not None:
            feats = np.zeros((m_max, g.features.shape[1]))
            feats[: g.m] = g.features
        out.append(LabeledGraph(adj, feats))
    return GraphSet(out, graph_set.name)
