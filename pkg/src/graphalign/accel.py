"""Accelerated multi-graph alignment: grouping, coarsening, and both combined.

* ``g_parallel`` splits the set into consecutive groups of at most ``K``
  graphs, computes a center per group (optionally in a process pool) and
  recurses on the centers until a single center remains.
* ``c_serial`` coarsens every graph into ``c`` clusters, aligns the coarse
  graphs, then aligns matched clusters node by node against graph 0.
* ``cg_parallel`` is the grouping recursion with ``c_serial`` as the
  per-group center computation.

The schemes return a center graph. ``accelerated_align`` then aligns every
input graph to that center and re-expresses the result in graph 0's frame.
"""

from __future__ import annotations

import itertools
import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning
from threadpoolctl import threadpool_limits

from .graph import (
    GraphSet,
    LabeledGraph,
    compose,
    invert_permutation,
    permute_matrix,
)
from .multi import (
    AlignmentError,
    CenterEstimate,
    MultiAlignConfig,
    binarize,
    geometric_median,
    multi_align,
)
from .pairwise import PairAlignConfig, node_dissimilarity, pairwise_distance, project_to_permutation

log = logging.getLogger(__name__)

SCHEMES = ("g-parallel", "c-serial", "cg-parallel")
DUMMY_WEIGHT = 0.01
REFINE_SWEEPS = 2
COARSE_TIE_LIMIT = 5
POLISH_PASSES = 10


@dataclass(frozen=True)
class AccelConfig:
    group_size: int = 4
    clusters: int = 2
    workers: int = 1
    inner: MultiAlignConfig = MultiAlignConfig()
    pair: PairAlignConfig = PairAlignConfig()
    refine_beta: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group size K must be at least 2")
        if self.clusters < 1:
            raise ValueError("cluster count c must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.refine_beta < 0:
            raise ValueError("refine_beta must be non-negative")


@dataclass
class Coarsening:
    """Cluster assignment and the ``c x c`` coarse graph.

    ``counts`` holds raw edge counts (diagonal: edges inside a cluster,
    off-diagonal: edges between two clusters); ``coarse`` is ``counts``
    divided by its largest entry.
    """

    coarse: LabeledGraph
    assignment: np.ndarray
    counts: np.ndarray


@dataclass
class StageRecord:
    stage: int
    group_sizes: list
    duration: float
    centers: list = field(default_factory=list)
    converged: bool = True


@dataclass
class AccelResult:
    """Output of an accelerated run, in graph 0's frame."""

    permutations: list
    center: CenterEstimate
    objective: float
    stages: list
    converged: bool
    scheme: str

    @property
    def alignment_time(self) -> float:
        return float(sum(s.duration for s in self.stages))


# -- coarsening -------------------------------------------------------------


def _repair_empty(labels: np.ndarray, points: np.ndarray, c: int) -> np.ndarray:
    """Give every empty cluster the point farthest from the centroid of the largest one."""
    labels = labels.copy()
    for k in range(c):
        if np.any(labels == k):
            continue
        sizes = np.bincount(labels, minlength=c)
        big = int(np.argmax(sizes))
        members = np.flatnonzero(labels == big)
        centroid = points[members].mean(axis=0)
        far = members[int(np.argmax(np.linalg.norm(points[members] - centroid, axis=1)))]
        labels[far] = k
    return labels


def coarsen(g: LabeledGraph, c: int, seed: int = 0) -> Coarsening:
    """Spectral K-means clustering of ``g`` into ``c`` clusters and the coarse graph."""
    m = g.m
    if c < 1 or c > m:
        raise ValueError(f"cluster count {c} must lie in [1, {m}]")
    adj = g.adj - np.diag(np.diag(g.adj))
    if c == 1:
        labels = np.zeros(m, dtype=np.int64)
    elif c == m:
        labels = np.arange(m, dtype=np.int64)
    else:
        lap = np.diag(adj.sum(axis=1)) - adj
        _, vecs = np.linalg.eigh(lap)
        # c smallest eigenvectors; the constant one carries no information, so drop it
        emb = vecs[:, 1:c]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            km = KMeans(n_clusters=c, init="k-means++", n_init=50, max_iter=100, random_state=seed)
            labels = km.fit_predict(emb).astype(np.int64)
        labels = _repair_empty(labels, emb, c)
    memb = np.zeros((m, c))
    memb[np.arange(m), labels] = 1.0
    counts = memb.T @ adj @ memb
    counts[np.diag_indices(c)] /= 2.0
    top = counts.max()
    coarse = LabeledGraph(counts / top if top > 0 else counts)
    return Coarsening(coarse, labels, counts)


# -- helpers ----------------------------------------------------------------


def _group_center(graphs: list, inner: MultiAlignConfig) -> tuple[CenterEstimate, bool]:
    if len(graphs) == 1:
        g = graphs[0]
        return CenterEstimate(np.array(g.adj), g, inner.threshold), True
    res = multi_align(GraphSet(graphs), inner)
    return res.center, res.converged


def _pad_to(adjs: list, size: int) -> list:
    out = []
    for a in adjs:
        k = a.shape[0]
        if k == size:
            out.append(a)
            continue
        big = np.full((size, size), DUMMY_WEIGHT)
        big[:k, :k] = a
        np.fill_diagonal(big[k:, k:], 0.0)
        out.append(big)
    return out


def _cluster_profile(adj: np.ndarray, labels: np.ndarray, c: int) -> np.ndarray:
    """Per node, the number of neighbours in each cluster."""
    memb = np.zeros((adj.shape[0], c))
    memb[np.arange(adj.shape[0]), labels] = 1.0
    return adj @ memb


def _blockwise_center(stack: np.ndarray, labels: np.ndarray, c: int, tau: float) -> CenterEstimate:
    """Median per diagonal cluster block plus one median for all inter-cluster entries."""
    soft = np.zeros(stack.shape[1:])
    for k in range(c):
        idx = np.flatnonzero(labels == k)
        if idx.size:
            sub = geometric_median(stack[:, idx[:, None], idx[None, :]])
            soft[np.ix_(idx, idx)] = sub
    cross = labels[:, None] != labels[None, :]
    if np.any(cross):
        vals = geometric_median(stack[:, cross][:, :, None])[:, 0]
        soft[cross] = vals
    soft = (soft + soft.T) / 2.0
    return CenterEstimate(soft, binarize(soft, tau), tau)


def _refine_against_first(
    adj: np.ndarray, labels: np.ndarray, adj0: np.ndarray, labels0: np.ndarray, cfg: AccelConfig
) -> tuple[np.ndarray, bool]:
    """Node permutation of one graph into graph 0's frame, cluster by cluster.

    ``labels`` and ``labels0`` are cluster ids in graph 0's cluster
    numbering. Each matched pair of clusters is aligned pairwise (padded
    with dummies to equal size). With ``refine_beta > 0`` the solver also
    sees a node dissimilarity built from neighbour counts per cluster and
    from edges to nodes already matched in other clusters.
    """
    c, m = cfg.clusters, adj.shape[0]
    prof = _cluster_profile(adj, labels, c)
    prof0 = _cluster_profile(adj0, labels0, c)
    pc = PairAlignConfig(cfg.refine_beta, cfg.pair.max_iters, cfg.pair.tol, cfg.pair.step_rule)
    matched: dict = {}  # cluster id -> [(node of this graph, node of graph 0)]
    ok = True
    # with anchors, a second sweep lets early clusters see the matches of later ones
    sweeps = REFINE_SWEEPS if cfg.refine_beta > 0 and c > 1 else 1
    for _ in range(sweeps):
        for k in range(c):
            idx, ref = np.flatnonzero(labels == k), np.flatnonzero(labels0 == k)
            if idx.size == 0 or ref.size == 0:
                continue
            size = max(idx.size, ref.size)
            sub, sub0 = _pad_to([adj[np.ix_(idx, idx)], adj0[np.ix_(ref, ref)]], size)
            d = None
            if cfg.refine_beta > 0:
                pairs = [pr for kk, lst in matched.items() if kk != k for pr in lst]
                anchors = np.array(pairs, dtype=np.int64).reshape(-1, 2)
                za = np.zeros((size, c + len(anchors)))
                zb = np.zeros((size, c + len(anchors)))
                za[: idx.size, :c] = prof[idx]
                zb[: ref.size, :c] = prof0[ref]
                za[: idx.size, c:] = adj[np.ix_(idx, anchors[:, 0])]
                zb[: ref.size, c:] = adj0[np.ix_(ref, anchors[:, 1])]
                d = node_dissimilarity(za, zb)
            res = pairwise_distance(sub, sub0, d, pc)
            ok = ok and res.converged
            local = project_to_permutation(res.alignment)
            matched[k] = [
                (int(idx[a_pos]), int(ref[b_pos]))
                for a_pos, b_pos in enumerate(local[: idx.size])
                if b_pos < ref.size
            ]
    perm = np.full(m, -1, dtype=np.int64)
    for lst in matched.values():
        for u, v in lst:
            perm[u] = v
    free = np.setdiff1d(np.arange(m), perm[perm >= 0])
    perm[perm < 0] = free
    return perm, ok


def _swap_delta(b: np.ndarray, a0: np.ndarray, p: int, q: int) -> float:
    """Change of ``||B - A0||^2`` when rows and columns ``p`` and ``q`` of ``B`` swap."""
    idx = np.arange(b.shape[0])
    idx[p], idx[q] = q, p
    rows = [p, q]
    old = 2.0 * np.sum((b[rows] - a0[rows]) ** 2) - np.sum((b[np.ix_(rows, rows)] - a0[np.ix_(rows, rows)]) ** 2)
    nb = b[[q, p]][:, idx]
    new = 2.0 * np.sum((nb - a0[rows]) ** 2) - np.sum((nb[:, rows] - a0[np.ix_(rows, rows)]) ** 2)
    return float(new - old)


def _swap_polish(adj: np.ndarray, adj0: np.ndarray, perm: np.ndarray, groups: list) -> np.ndarray:
    """Greedy 2-swap descent on ``||P A P^T - A0||`` within each node group.

    ``groups`` hold target positions (graph 0 labels) that may be exchanged.
    Resolves ties left by the cluster-local solves, where a cluster's own
    edges cannot tell two matches apart but the edges between clusters can.
    """
    b = permute_matrix(adj, perm)
    where = np.arange(adj.shape[0])  # where[t]: current position of target t
    for _ in range(POLISH_PASSES):
        improved = False
        for grp in groups:
            for x in range(len(grp)):
                for y in range(x + 1, len(grp)):
                    p, q = int(grp[x]), int(grp[y])
                    if _swap_delta(b, adj0, p, q) < -1e-12:
                        b[[p, q]] = b[[q, p]]
                        b[:, [p, q]] = b[:, [q, p]]
                        where[[p, q]] = where[[q, p]]
                        improved = True
        if not improved:
            break
    # node u sat at target perm[u]; that content now sits at position inv(where)[perm[u]]
    return invert_permutation(where)[perm]


def _tied_cluster_maps(coarse: np.ndarray, coarse0: np.ndarray, chosen: np.ndarray) -> list:
    """Cluster maps whose coarse cost ties with ``chosen`` (``chosen`` first).

    Symmetric coarse graphs leave the cluster correspondence ambiguous; for
    small ``c`` every tied map is returned so the fine level can decide.
    """
    c = coarse.shape[0]
    if c > COARSE_TIE_LIMIT:
        return [chosen]
    best = np.linalg.norm(permute_matrix(coarse, chosen) - coarse0)
    out = [chosen]
    for sigma in itertools.permutations(range(c)):
        sigma = np.array(sigma)
        if np.array_equal(sigma, chosen):
            continue
        if np.linalg.norm(permute_matrix(coarse, sigma) - coarse0) <= best + 1e-9:
            out.append(sigma)
    return out


def c_serial_align(graph_set: GraphSet, cfg: AccelConfig) -> tuple[list, CenterEstimate, bool]:
    """Coarse-then-fine alignment.

    Returns permutations into graph 0's frame, the center and whether every
    solve converged.
    """
    graphs = list(graph_set)
    n = len(graphs)
    m = graphs[0].m
    if any(g.m != m for g in graphs):
        raise ValueError("graphs have unequal node counts; pad first")
    c = cfg.clusters
    if c > m:
        raise ValueError(f"cluster count {c} exceeds graph size {m}")
    if n == 1:
        g = graphs[0]
        return [np.arange(m)], CenterEstimate(np.array(g.adj), g, cfg.inner.threshold), True
    ok = True
    coarse = [coarsen(g, c, cfg.seed) for g in graphs]
    if c == 1:
        cperms = [np.zeros(1, dtype=np.int64) for _ in graphs]
    else:
        try:
            cres = multi_align(GraphSet([co.coarse for co in coarse]), cfg.inner)
        except AlignmentError as exc:
            raise AlignmentError(str(exc), "coarse alignment") from exc
        cperms = cres.permutations
        ok = cres.converged
    adj = [g.adj for g in graphs]
    labels0 = cperms[0][coarse[0].assignment]
    c0 = permute_matrix(coarse[0].coarse.adj, cperms[0])
    groups = [np.flatnonzero(labels0 == k) for k in range(c)]
    perms = [np.arange(m)]
    for i in range(1, n):
        # among tied cluster maps keep the one whose refinement fits graph 0 best
        best = None
        for cmap in _tied_cluster_maps(coarse[i].coarse.adj, c0, cperms[i]):
            perm, flag = _refine_against_first(adj[i], cmap[coarse[i].assignment], adj[0], labels0, cfg)
            perm = _swap_polish(adj[i], adj[0], perm, groups)
            resid = np.linalg.norm(permute_matrix(adj[i], perm) - adj[0])
            if best is None or resid < best[0] - 1e-12:
                best = (resid, perm, flag)
        perms.append(best[1])
        ok = ok and best[2]
    stack = np.stack([permute_matrix(a, p) for a, p in zip(adj, perms)])
    center = _blockwise_center(stack, coarse[0].assignment, c, cfg.inner.threshold)
    return perms, center, ok


def _c_serial_center(graphs: list, cfg: AccelConfig) -> tuple[CenterEstimate, bool]:
    _, center, ok = c_serial_align(GraphSet(graphs), cfg)
    return center, ok


def _run_group(task):
    kind, graphs, cfg, where = task
    with threadpool_limits(limits=1):
        try:
            if kind == "g":
                return _group_center(graphs, cfg.inner)
            return _c_serial_center(graphs, cfg)
        except AlignmentError as exc:
            raise AlignmentError(str(exc), where) from exc


def _recursive_centers(
    graphs: list, cfg: AccelConfig, kind: str, trace: Optional[list]
) -> CenterEstimate:
    n = len(graphs)
    if n == 0:
        raise ValueError("empty graph set")
    k = cfg.group_size
    bound, reach = 1, 1
    while reach < n:
        bound, reach = bound + 1, reach * k
    stage = 0
    current = list(graphs)
    pool = ProcessPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        while True:
            stage += 1
            if stage > bound:  # pragma: no cover - guards the recursion arithmetic
                raise AssertionError(f"stage count {stage} exceeds bound {bound}")
            groups = [current[s : s + k] for s in range(0, len(current), k)]
            tasks = [
                (kind, grp, cfg, f"stage {stage} group {gi}") for gi, grp in enumerate(groups)
            ]
            t0 = time.perf_counter()
            if pool is not None and len(tasks) > 1:
                out = list(pool.map(_run_group, tasks))
            else:
                out = [_run_group(t) for t in tasks]
            dt = time.perf_counter() - t0
            centers = [ce for ce, _ in out]
            if trace is not None:
                ok = all(flag for _, flag in out)
                trace.append(StageRecord(stage, [len(g) for g in groups], dt, centers, ok))
            log.debug("stage %d: %d groups in %.3fs", stage, len(groups), dt)
            if len(centers) == 1:
                return centers[0]
            current = [ce.hard for ce in centers]
    finally:
        if pool is not None:
            pool.shutdown()


def g_parallel(graph_set: GraphSet, cfg: AccelConfig = AccelConfig(), trace: Optional[list] = None) -> LabeledGraph:
    """Grouped recursive center; ``trace`` (if given) receives one ``StageRecord`` per stage."""
    return _recursive_centers(list(graph_set), cfg, "g", trace).hard


def c_serial(graph_set: GraphSet, cfg: AccelConfig = AccelConfig(), trace: Optional[list] = None) -> LabeledGraph:
    t0 = time.perf_counter()
    center, ok = _c_serial_center(list(graph_set), cfg)
    if trace is not None:
        trace.append(StageRecord(1, [len(graph_set)], time.perf_counter() - t0, [center], ok))
    return center.hard


def cg_parallel(graph_set: GraphSet, cfg: AccelConfig = AccelConfig(), trace: Optional[list] = None) -> LabeledGraph:
    return _recursive_centers(list(graph_set), cfg, "c", trace).hard


SCHEME_FUNCS: dict[str, Callable] = {
    "g-parallel": g_parallel,
    "c-serial": c_serial,
    "cg-parallel": cg_parallel,
}


# -- alignment to a center and scoring ---------------------------------------


def align_to_center(graph_set: GraphSet, center: LabeledGraph, cfg: PairAlignConfig = PairAlignConfig()):
    """Pairwise-align every graph onto ``center``.

    Returns ``(perms, objective, converged)`` where ``perms[i]`` maps graph
    ``i`` into the center's frame and ``objective`` sums the squared
    residuals of the relaxed solutions. Each rounded permutation is polished
    by 2-swap descent on the discrete residual.
    """
    perms, total, ok = [], 0.0, True
    everything = [np.arange(center.m)]
    for g in graph_set:
        res = pairwise_distance(g, center, None, cfg)
        # the rounded relaxed solution can sit next to a better vertex when the graph is symmetric
        perms.append(_swap_polish(g.adj, center.adj, project_to_permutation(res.alignment), everything))
        total += res.objective
        ok = ok and res.converged
    return perms, total, ok


def to_first_frame(perms: list, center_soft: np.ndarray) -> tuple[list, np.ndarray]:
    """Re-express center-frame permutations and the center in graph 0's frame."""
    back = invert_permutation(perms[0])
    return [compose(p, back) for p in perms], permute_matrix(center_soft, back)


def accelerated_align(graph_set: GraphSet, scheme: str, cfg: AccelConfig = AccelConfig()) -> AccelResult:
    """Run an accelerated scheme, align all graphs to its center, return frame-0 output."""
    if scheme not in SCHEME_FUNCS:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    stages: list = []
    SCHEME_FUNCS[scheme](graph_set, cfg, stages)
    final = stages[-1].centers[0]
    t0 = time.perf_counter()
    perms, obj, ok = align_to_center(graph_set, final.hard, cfg.pair)
    stages.append(StageRecord(len(stages) + 1, [len(graph_set)], time.perf_counter() - t0))
    perms, soft = to_first_frame(perms, final.soft)
    tau = cfg.inner.threshold
    center = CenterEstimate(soft, binarize(soft, tau), tau)
    ok = ok and all(s.converged for s in stages)
    return AccelResult(perms, center, obj, stages, ok, scheme)


def d0_score(graph_set: GraphSet, perms: list, center) -> float:
    """Mean Frobenius distance of the aligned graphs to the center, over ``||A_1||_F``."""
    a0 = center.adj if isinstance(center, LabeledGraph) else np.asarray(center, dtype=float)
    if len(perms) != len(graph_set):
        raise ValueError(f"{len(perms)} permutations for {len(graph_set)} graphs")
    for g in graph_set:
        if g.m != a0.shape[0]:
            raise ValueError(f"graph of size {g.m} does not match center of size {a0.shape[0]}")
    denom = float(np.linalg.norm(graph_set[0].adj))
    if denom == 0.0:
        raise ValueError("first graph has no edges; d0 is undefined")
    total = sum(np.linalg.norm(permute_matrix(g.adj, p) - a0) for g, p in zip(graph_set, perms))
    return float(total / len(graph_set) / denom)
