"""Multi-graph alignment with convex relaxations, accelerated schemes and graph-set metrics."""

from importlib.metadata import PackageNotFoundError, version

from .accel import AccelConfig, accelerated_align, c_serial, cg_parallel, coarsen, d0_score, g_parallel
from .graph import GraphSet, LabeledGraph, gen_community, gen_ego_ba, gen_grid, pad_with_dummies, perturb
from .metrics import graph_stats, mmd2, s_mmd, s_mvr, wasserstein_1d
from .multi import MultiAlignConfig, center_graph, fermat_align, galign, multi_align
from .pairwise import PairAlignConfig, pairwise_distance, project_to_permutation

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.0.0"

__all__ = [
    "AccelConfig",
    "GraphSet",
    "LabeledGraph",
    "MultiAlignConfig",
    "PairAlignConfig",
    "accelerated_align",
    "c_serial",
    "center_graph",
    "cg_parallel",
    "coarsen",
    "d0_score",
    "fermat_align",
    "g_parallel",
    "galign",
    "gen_community",
    "gen_ego_ba",
    "gen_grid",
    "graph_stats",
    "mmd2",
    "multi_align",
    "pad_with_dummies",
    "pairwise_distance",
    "perturb",
    "project_to_permutation",
    "s_mmd",
    "s_mvr",
    "wasserstein_1d",
]
