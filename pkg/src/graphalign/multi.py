"""Joint alignment of graph collections: Fermat and G-align multi-distances.

``galign`` minimizes ``1/2 sum_ij ||A_i P_ij - P_ij A_j||_F^2`` over block
matrices whose off-diagonal blocks are doubly stochastic, whose diagonal
blocks are the identity and which are symmetric positive semidefinite.
``fermat_align`` alternates between a least-squares center update and
independent Frank-Wolfe alignments of every graph onto the center.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .graph import GraphSet, LabeledGraph, compose, invert_permutation, permute_graph, permute_matrix
from .pairwise import PairAlignConfig, frank_wolfe, project_to_permutation

log = logging.getLogger(__name__)

METHODS = ("galign", "fermat")


class AlignmentError(RuntimeError):
    """A solver failed; ``where`` names the group, cluster or iterate involved."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


@dataclass(frozen=True)
class MultiAlignConfig:
    method: str = "galign"
    outer_iters: int = 1000
    inner_iters: int = 500
    tol: float = 1e-6
    threshold: float = 0.5
    ridge: float = 1e-8
    step_scale: float = 1.0
    dykstra_iters: int = 50
    momentum: bool = True
    fermat_init: str = "first"
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.ridge <= 0:
            raise ValueError("ridge must be positive")
        if self.outer_iters < 1 or self.inner_iters < 1 or self.dykstra_iters < 1:
            raise ValueError("iteration budgets must be positive")
        if self.fermat_init not in ("first", "mean"):
            raise ValueError("fermat_init must be 'first' or 'mean'")


@dataclass
class CenterEstimate:
    soft: np.ndarray
    hard: LabeledGraph
    threshold: float


@dataclass
class BlockAlignment:
    """``blocks[i, j]`` is the ``m x m`` alignment of graph ``i`` onto graph ``j``."""

    blocks: np.ndarray

    @property
    def n(self) -> int:
        return self.blocks.shape[0]

    @property
    def m(self) -> int:
        return self.blocks.shape[2]

    def full(self) -> np.ndarray:
        n, m = self.n, self.m
        return self.blocks.transpose(0, 2, 1, 3).reshape(n * m, n * m)

    @classmethod
    def from_full(cls, mat: np.ndarray, n: int) -> "BlockAlignment":
        m = mat.shape[0] // n
        return cls(mat.reshape(n, m, n, m).transpose(0, 2, 1, 3).copy())

    @classmethod
    def identity(cls, n: int, m: int) -> "BlockAlignment":
        return cls(np.broadcast_to(np.eye(m), (n, n, m, m)).copy())


@dataclass
class MultiAlignResult:
    permutations: list
    relaxed_objective: float
    center: CenterEstimate
    objective_trace: list = field(default_factory=list)
    converged: bool = True
    method: str = "galign"
    blocks: Optional[BlockAlignment] = None
    transport: Optional[list] = None


# -- center graph -----------------------------------------------------------


def binarize(soft: np.ndarray, tau: float) -> LabeledGraph:
    hard = (soft >= tau).astype(float)
    np.fill_diagonal(hard, 0.0)
    return LabeledGraph(hard)


def geometric_median(mats, max_iters: int = 1000, rtol: float = 1e-9) -> np.ndarray:
    """Weiszfeld iterations for the Frobenius median, clamped to [0, 1] each step."""
    mats = np.asarray(mats, dtype=float)
    x = mats.mean(axis=0)
    if mats.shape[0] <= 2:
        return x
    for _ in range(max_iters):
        dist = np.sqrt(((mats - x) ** 2).sum(axis=(1, 2)))
        w = 1.0 / np.maximum(dist, 1e-12)
        x_new = np.clip(np.tensordot(w, mats, axes=1) / w.sum(), 0.0, 1.0)
        change = np.linalg.norm(x_new - x)
        x = x_new
        if change <= rtol * max(np.linalg.norm(x), 1e-300):
            break
    return x


def center_graph(aligned: GraphSet, tau: float = 0.5) -> CenterEstimate:
    """Median graph of an aligned set, binarized with ``entry >= tau``."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    soft = geometric_median(aligned.adjacency_stack())
    soft = (soft + soft.T) / 2.0
    return CenterEstimate(soft, binarize(soft, tau), tau)


def align_set(graph_set: GraphSet, perms) -> GraphSet:
    if len(perms) != len(graph_set):
        raise ValueError(f"{len(perms)} permutations for {len(graph_set)} graphs")
    return GraphSet([permute_graph(g, p) for g, p in zip(graph_set, perms)], graph_set.name)


def extract_alignments(b: BlockAlignment) -> list:
    """Project the first block column onto permutations (graph ``i`` into graph 0's frame)."""
    return [project_to_permutation(b.blocks[i, 0]) for i in range(b.n)]


# -- G-align ----------------------------------------------------------------


def _residuals(adj: np.ndarray, blocks: np.ndarray) -> np.ndarray:
    return np.einsum("iab,ijbc->ijac", adj, blocks) - np.einsum("ijab,jbc->ijac", blocks, adj)


def galign_objective(adj: np.ndarray, blocks: np.ndarray) -> float:
    r = _residuals(adj, blocks)
    return 0.5 * float(np.einsum("ijab,ijab->", r, r))


def _galign_gradient(adj: np.ndarray, blocks: np.ndarray) -> np.ndarray:
    r = _residuals(adj, blocks)
    # adjacency matrices are symmetric, so A^T = A
    return np.einsum("iab,ijbc->ijac", adj, r) - np.einsum("ijab,jbc->ijac", r, adj)


def _project_affine(blocks: np.ndarray) -> np.ndarray:
    """Off-diagonal blocks onto unit row/column sums, diagonal blocks onto I."""
    n, _, m, _ = blocks.shape
    rows = blocks.sum(axis=3, keepdims=True) - 1.0
    cols = blocks.sum(axis=2, keepdims=True) - 1.0
    total = blocks.sum(axis=(2, 3), keepdims=True) - m
    out = blocks - rows / m - cols / m + total / m**2
    out[np.arange(n), np.arange(n)] = np.eye(m)
    return out


def _project_psd(blocks: np.ndarray, positive_side: bool = False):
    """PSD projection of the assembled block matrix.

    Only one side of the spectrum is computed: the negative part
    (``X_+ = X - V_- L_- V_-^T``) or the positive part
    (``X_+ = V_+ L_+ V_+^T``), whichever the caller expects to be smaller.
    Returns the projected blocks and the fraction of positive eigenvalues.
    """
    n = blocks.shape[0]
    full = BlockAlignment(blocks).full()
    full = (full + full.T) / 2.0
    size = full.shape[0]
    if positive_side:
        vals, vecs = scipy.linalg.eigh(full, subset_by_value=(0.0, np.inf), driver="evr")
        full = (vecs * vals) @ vecs.T
        frac = vals.size / size
    else:
        vals, vecs = scipy.linalg.eigh(full, subset_by_value=(-np.inf, 0.0), driver="evr")
        if vals.size:
            full = full - (vecs * vals) @ vecs.T
        frac = 1.0 - vals.size / size
    return BlockAlignment.from_full((full + full.T) / 2.0, n).blocks, frac


def _violation(blocks: np.ndarray) -> float:
    n, _, m, _ = blocks.shape
    return max(
        float(np.abs(blocks.sum(axis=3) - 1.0).max()),
        float(np.abs(blocks.sum(axis=2) - 1.0).max()),
        float(max(0.0, -blocks.min())),
        float(np.abs(blocks[np.arange(n), np.arange(n)] - np.eye(m)).max()),
    )


def project_consistent(blocks: np.ndarray, iters: int = 50, tol: float = 1e-8) -> np.ndarray:
    """Dykstra projection onto {doubly stochastic blocks, identity diagonal} and PSD.

    The doubly stochastic set is split into its affine part and the
    nonnegative orthant, so each cycle visits three sets with exact
    projections.
    """
    x = blocks
    inc_nonneg = np.zeros_like(x)
    inc_psd = np.zeros_like(x)
    positive_side = False
    for _ in range(iters):
        x = _project_affine(x)
        y = np.maximum(x + inc_nonneg, 0.0)
        inc_nonneg = x + inc_nonneg - y
        x, frac = _project_psd(y + inc_psd, positive_side)
        positive_side = frac < 0.5
        inc_psd = y + inc_psd - x
        if _violation(x) < tol:
            break
    return x


def project_birkhoff(mat: np.ndarray, max_iters: int = 100000, tol: float = 1e-12) -> np.ndarray:
    """Euclidean projection of one square matrix onto the doubly stochastic set (Dykstra)."""
    m = mat.shape[0]
    x = np.asarray(mat, dtype=float)
    inc = np.zeros_like(x)
    for _ in range(max_iters):
        r = x.sum(axis=1, keepdims=True) - 1.0
        c = x.sum(axis=0, keepdims=True) - 1.0
        x = x - r / m - c / m + (x.sum() - m) / m**2
        y = np.maximum(x + inc, 0.0)
        inc = x + inc - y
        x = y
        if (
            np.abs(x.sum(axis=1) - 1.0).max() < tol
            and np.abs(x.sum(axis=0) - 1.0).max() < tol
        ):
            break
    return x


def _finalize_blocks(blocks: np.ndarray) -> np.ndarray:
    """Exact identity diagonal, doubly stochastic off-diagonal, ``P_ji = P_ij^T``."""
    n, _, m, _ = blocks.shape
    out = np.empty_like(blocks)
    for i in range(n):
        out[i, i] = np.eye(m)
        for j in range(i + 1, n):
            sym = (blocks[i, j] + blocks[j, i].T) / 2.0
            out[i, j] = project_birkhoff(sym)
            out[j, i] = out[i, j].T
    return out


def _check_set(graph_set: GraphSet) -> np.ndarray:
    if len(graph_set) < 2:
        raise ValueError("need at least two graphs")
    return graph_set.adjacency_stack()


def galign_blocks(adj: np.ndarray, cfg: MultiAlignConfig) -> tuple[BlockAlignment, float, list, bool]:
    """Projected gradient on the block matrix; returns (blocks, objective, trace, converged)."""
    n, m = adj.shape[0], adj.shape[1]
    blocks = BlockAlignment.identity(n, m).blocks
    f = galign_objective(adj, blocks)
    trace = [f]
    lip = 2.0 * max(np.linalg.norm(a, 2) ** 2 for a in adj)
    converged = f == 0.0 or lip == 0.0
    step = cfg.step_scale / lip if lip > 0 else 0.0
    best, best_f = blocks, f
    prev, t = blocks, 1.0
    it = 0
    while not converged and it < cfg.outer_iters:
        it += 1
        # accelerated (FISTA-style) extrapolation, restarted whenever a step fails
        t_next = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0 if cfg.momentum else 1.0
        beta = (t - 1.0) / t_next
        y = blocks + beta * (blocks - prev) if beta > 0 else blocks
        cand = project_consistent(y - step * _galign_gradient(adj, y), cfg.dykstra_iters)
        fc = galign_objective(adj, cand)
        if fc > f * (1.0 + 1e-12):
            if beta > 0:
                log.debug("galign: objective rose to %.6g, momentum restarted", fc)
            else:
                step /= 2.0
                log.debug("galign: objective rose to %.6g, step halved to %.3g", fc, step)
            prev, t = blocks, 1.0
            continue
        decrease = f - fc
        prev, blocks, f, t = blocks, cand, fc, t_next
        trace.append(f)
        if f < best_f:
            best, best_f = blocks, f
        if decrease <= cfg.tol * (1.0 + trace[-2]):
            converged = True
    final = _finalize_blocks(best)
    return BlockAlignment(final), galign_objective(adj, final), trace, converged


def galign(graph_set: GraphSet, cfg: MultiAlignConfig = MultiAlignConfig()) -> MultiAlignResult:
    adj = _check_set(graph_set)
    b, obj, trace, converged = galign_blocks(adj, cfg)
    perms = extract_alignments(b)
    center = center_graph(align_set(graph_set, perms), cfg.threshold)
    return MultiAlignResult(perms, obj, center, trace, converged, "galign", blocks=b)


# -- Fermat -----------------------------------------------------------------


def fermat_objective(adj: np.ndarray, ps, a0: np.ndarray) -> float:
    return float(sum(np.sum((a @ p - p @ a0) ** 2) for a, p in zip(adj, ps)))


def _center_update(adj: np.ndarray, ps, ridge: float, where: str) -> np.ndarray:
    m = adj.shape[1]
    lhs = sum(p.T @ p for p in ps) + ridge * np.eye(m)
    rhs = sum(p.T @ a @ p for a, p in zip(adj, ps))
    try:
        a0 = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise AlignmentError("singular normal equations for the center update", where) from exc
    if not np.all(np.isfinite(a0)):
        raise AlignmentError("non-finite center update", where)
    return np.clip((a0 + a0.T) / 2.0, 0.0, 1.0)


def fermat_align(graph_set: GraphSet, cfg: MultiAlignConfig = MultiAlignConfig(method="fermat")) -> MultiAlignResult:
    """Alternating minimization of ``sum_i ||A_i P_i - P_i A_0||_F^2``.

    The center stays real-valued inside the loop and is binarized once at
    the end. Outputs are expressed in the frame of graph 0.
    """
    adj = _check_set(graph_set)
    n, m = adj.shape[0], adj.shape[1]
    fw = PairAlignConfig(max_iters=cfg.inner_iters, tol=min(cfg.tol, 1e-7))
    ps = [np.eye(m) for _ in range(n)]
    a0 = adj[0].copy() if cfg.fermat_init == "first" else adj.mean(axis=0)
    f = fermat_objective(adj, ps, a0)
    trace = [f]
    converged = f == 0.0
    t = 0
    while not converged and t < cfg.outer_iters:
        t += 1
        start = f
        if t > 1 or cfg.fermat_init == "mean":
            cand = _center_update(adj, ps, cfg.ridge, f"outer iterate {t}")
            fc = fermat_objective(adj, ps, cand)
            if fc <= f:
                a0, f = cand, fc
            trace.append(f)
        ps = [frank_wolfe(a, a0, None, fw, init=p).alignment for a, p in zip(adj, ps)]
        f = fermat_objective(adj, ps, a0)
        trace.append(f)
        if start - f <= cfg.tol * (1.0 + start):
            converged = True
    to_center = [project_to_permutation(p) for p in ps]
    # re-express in graph 0's frame: node i of graph k -> center -> graph 0
    back = invert_permutation(to_center[0])
    perms = [compose(p, back) for p in to_center]
    soft = permute_matrix(a0, back)
    center = CenterEstimate(soft, binarize(soft, cfg.threshold), cfg.threshold)
    return MultiAlignResult(perms, f, center, trace, converged, "fermat", transport=ps)


def multi_align(graph_set: GraphSet, cfg: MultiAlignConfig) -> MultiAlignResult:
    if cfg.method == "fermat":
        return fermat_align(graph_set, cfg)
    return galign(graph_set, cfg)
