"""Graph-set, alignment and center files.

Graph-set JSON::

    {"name": str,
     "graphs": [{"n": int, "edges": [[u, v, w], ...], "features": [[...], ...] | null}]}

Edges store ``u <= v`` once (``u == v`` only for diagonal weights); the
weight is omitted when it equals 1.0.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .graph import GraphSet, LabeledGraph, check_permutation


class GraphFormatError(ValueError):
    """Malformed graph-set or alignment file."""


def _num(x: float):
    x = float(x)
    return int(x) if x.is_integer() and abs(x) < 2**53 else x


def graph_to_dict(g: LabeledGraph) -> dict:
    edges = [[u, v] if w == 1.0 else [u, v, _num(w)] for u, v, w in g.edges()]
    feats = None if g.features is None else [[_num(x) for x in row] for row in g.features]
    return {"n": g.m, "edges": edges, "features": feats}


def graphset_to_dict(gs: GraphSet) -> dict:
    return {"name": gs.name, "graphs": [graph_to_dict(g) for g in gs]}


def dump_json(obj, path) -> None:
    text = json.dumps(obj, separators=(",", ":"), sort_keys=False)
    Path(path).write_text(text + "\n")


def write_graphset(gs: GraphSet, path) -> None:
    dump_json(graphset_to_dict(gs), path)


def _load(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise GraphFormatError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc


def graph_from_dict(obj, where: str = "graph") -> LabeledGraph:
    if not isinstance(obj, dict):
        raise GraphFormatError(f"{where}: expected an object")
    n = obj.get("n")
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise GraphFormatError(f"{where}.n: expected a positive integer, got {n!r}")
    edges = obj.get("edges", [])
    if not isinstance(edges, list):
        raise GraphFormatError(f"{where}.edges: expected a list")
    adj = np.zeros((n, n))
    seen = {}
    for k, e in enumerate(edges):
        loc = f"{where}.edges[{k}]"
        if not isinstance(e, list) or len(e) not in (2, 3):
            raise GraphFormatError(f"{loc}: expected [u, v] or [u, v, w]")
        u, v = e[0], e[1]
        if not all(isinstance(x, int) and not isinstance(x, bool) for x in (u, v)):
            raise GraphFormatError(f"{loc}: node ids must be integers")
        if not (0 <= u < n and 0 <= v < n):
            raise GraphFormatError(f"{loc}: node id out of range [0, {n})")
        w = e[2] if len(e) == 3 else 1.0
        if not isinstance(w, (int, float)) or isinstance(w, bool) or not np.isfinite(w):
            raise GraphFormatError(f"{loc}: weight must be a finite number")
        if not 0.0 <= w <= 1.0:
            raise GraphFormatError(f"{loc}: weight {w} outside [0, 1]")
        key = (min(u, v), max(u, v))
        if key in seen:
            if seen[key] != float(w):
                raise GraphFormatError(
                    f"{loc}: asymmetric adjacency, pair {key} has weights {seen[key]} and {w}"
                )
            raise GraphFormatError(f"{loc}: duplicate edge {key}")
        seen[key] = float(w)
        adj[u, v] = adj[v, u] = w
    feats = obj.get("features")
    if feats is not None:
        try:
            feats = np.asarray(feats, dtype=float)
        except (TypeError, ValueError) as exc:
            raise GraphFormatError(f"{where}.features: not a numeric matrix") from exc
        if feats.ndim != 2 or feats.shape[0] != n:
            raise GraphFormatError(f"{where}.features: expected {n} rows of equal length")
    try:
        return LabeledGraph(adj, feats)
    except ValueError as exc:
        raise GraphFormatError(f"{where}: {exc}") from exc


def graphset_from_dict(obj, source: str = "<data>") -> GraphSet:
    if not isinstance(obj, dict) or not isinstance(obj.get("graphs"), list):
        raise GraphFormatError(f"{source}: expected an object with a 'graphs' list")
    name = obj.get("name", "")
    if not isinstance(name, str):
        raise GraphFormatError(f"{source}.name: expected a string")
    graphs = [graph_from_dict(g, f"{source}: graphs[{i}]") for i, g in enumerate(obj["graphs"])]
    return GraphSet(graphs, name)


def read_graphset(path) -> GraphSet:
    return graphset_from_dict(_load(path), str(path))


# -- alignment and center files ---------------------------------------------


def write_alignment(perms, objective: float, method: str, path) -> None:
    dump_json(
        {
            "frame": 0,
            "permutations": [[int(x) for x in p] for p in perms],
            "objective": float(objective),
            "method": method,
        },
        path,
    )


def read_alignment(path) -> dict:
    obj = _load(path)
    if not isinstance(obj, dict) or not isinstance(obj.get("permutations"), list):
        raise GraphFormatError(f"{path}: expected an object with a 'permutations' list")
    perms = []
    for i, p in enumerate(obj["permutations"]):
        try:
            perms.append(check_permutation(np.asarray(p, dtype=np.int64)))
        except (ValueError, TypeError) as exc:
            raise GraphFormatError(f"{path}: permutations[{i}]: {exc}") from exc
    obj["permutations"] = perms
    return obj


def write_center(center: LabeledGraph, soft: np.ndarray, threshold: float, path, name="center"):
    obj = graphset_to_dict(GraphSet([center], name))
    obj["soft"] = [[float(x) for x in row] for row in np.asarray(soft)]
    obj["threshold"] = float(threshold)
    dump_json(obj, path)


def read_center(path) -> tuple[LabeledGraph, np.ndarray, float]:
    obj = _load(path)
    gs = graphset_from_dict(obj, str(path))
    if len(gs) != 1:
        raise GraphFormatError(f"{path}: center file must hold exactly one graph")
    soft = np.asarray(obj.get("soft", gs[0].adj), dtype=float)
    return gs[0], soft, float(obj.get("threshold", 0.5))
