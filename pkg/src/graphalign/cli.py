"""Command-line interface.

Subcommands::

    gen            synthetic graph sets (permuted, perturbed copies of a base graph)
    align          direct or accelerated multi-graph alignment
    eval           s_mmd / s_mvr between two sets, plus d0 for an alignment
    stats          per-graph statistics as CSV with a JSON sidecar
    perturb-sweep  regenerate, align and score a set for several noise levels

Exit status: 0 on success, 1 when a solver did not converge (outputs are
still written) or failed, 2 on bad input or arguments.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .accel import SCHEMES, AccelConfig, accelerated_align, d0_score
from .graph import (
    GraphSet,
    gen_community,
    gen_ego_ba,
    gen_grid,
    pad_with_dummies,
    permute_graph,
    perturb,
    random_permutation,
)
from .io import GraphFormatError, dump_json, read_alignment, read_center, read_graphset, write_alignment, write_center, write_graphset
from .metrics import STATS, graph_stats, score, write_stats
from .multi import AlignmentError, CenterEstimate, MultiAlignConfig, multi_align
from .pairwise import PairAlignConfig

log = logging.getLogger("graphalign")

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_INPUT = 0, 1, 2
FAMILIES = ("community", "grid", "ego-ba")


class InputError(Exception):
    """Bad input file or argument combination (exit status 2)."""


# -- argument helpers --------------------------------------------------------


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return vals


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _fraction(text: str) -> float:
    val = float(text)
    if not 0.0 <= val <= 1.0:
        raise argparse.ArgumentTypeError(f"{val} is not in [0, 1]")
    return val


def _positive_int(text: str) -> int:
    val = int(text)
    if val < 1:
        raise argparse.ArgumentTypeError(f"{val} is not a positive integer")
    return val


def _add_family_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("family", choices=FAMILIES)
    p.add_argument("--sizes", type=_int_list, default=[13, 15, 17], help="community sizes, e.g. 13,15,17")
    p.add_argument("--p", type=_fraction, default=0.7, help="intra-community edge probability")
    p.add_argument("--inter-frac", type=float, default=0.05, help="inter-community edges per node")
    p.add_argument("--rows", type=_positive_int, default=6)
    p.add_argument("--cols", type=_positive_int, default=6)
    p.add_argument("--total-nodes", type=_positive_int, default=950)
    p.add_argument("--attach", type=_positive_int, default=5)
    p.add_argument("--hops", type=int, default=1)
    p.add_argument("--count", type=_positive_int, default=12)
    p.add_argument("--seed", type=int, required=True)


def _add_align_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=("galign", "fermat"), default="galign")
    p.add_argument("--accel", choices=("none",) + SCHEMES, default="none")
    p.add_argument("--K", type=int, default=4, help="group size for the grouped schemes")
    p.add_argument("--c", type=int, default=2, help="cluster count for the coarsened schemes")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--outer-iters", type=_positive_int, default=1000)
    p.add_argument("--inner-iters", type=_positive_int, default=500)
    p.add_argument("--dykstra-iters", type=_positive_int, default=50)
    p.add_argument("--pair-iters", type=_positive_int, default=1000, help="Frank-Wolfe budget for pairwise solves")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--threshold", type=float, default=0.5)


# -- shared pipeline ---------------------------------------------------------


def _child_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


def base_graph(args, seed: int):
    if args.family == "community":
        return gen_community(args.sizes, args.p, args.inter_frac, seed)
    if args.family == "grid":
        return gen_grid(args.rows, args.cols)
    return gen_ego_ba(args.total_nodes, args.attach, args.hops, seed)


def build_set(args, rho: float, seed: int, count: int) -> GraphSet:
    """Graph 0 keeps the base node order; every other copy is randomly relabelled.

    All copies are perturbed. Ego graphs are drawn independently per copy.
    """
    root, *children = np.random.SeedSequence(seed).spawn(count + 1)
    base = base_graph(args, _child_seed(root)) if args.family != "ego-ba" else None
    graphs = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        if base is None:
            g = gen_ego_ba(args.total_nodes, args.attach, args.hops, int(rng.integers(2**63)))
        else:
            g = base
            if i > 0:
                g = permute_graph(g, random_permutation(g.m, rng))
        graphs.append(perturb(g, rho, int(rng.integers(2**63))))
    return GraphSet(graphs, f"{args.family}-rho{rho:g}")


def reference_set(args, seed: int, count: int) -> GraphSet:
    """Unperturbed base graphs drawn with an independent seed stream."""
    seeds = np.random.SeedSequence([seed, 1]).spawn(count)
    return GraphSet([base_graph(args, _child_seed(s)) for s in seeds], f"{args.family}-reference")


@dataclass
class AlignOutcome:
    permutations: list
    center: CenterEstimate
    objective: float
    converged: bool
    stages: list = field(default_factory=list)  # (label, group sizes, seconds, hard centers)

    @property
    def t_a(self) -> float:
        return float(sum(s[2] for s in self.stages))


def run_alignment(gs: GraphSet, args) -> AlignOutcome:
    inner = MultiAlignConfig(
        method=args.method,
        outer_iters=args.outer_iters,
        inner_iters=args.inner_iters,
        dykstra_iters=args.dykstra_iters,
        tol=args.tol,
        threshold=args.threshold,
        seed=args.seed,
    )
    if args.accel == "none":
        t0 = time.perf_counter()
        res = multi_align(gs, inner)
        dt = time.perf_counter() - t0
        return AlignOutcome(
            res.permutations, res.center, res.relaxed_objective, res.converged,
            [("align", [len(gs)], dt, [res.center.hard])],
        )
    cfg = AccelConfig(
        group_size=args.K,
        clusters=args.c,
        workers=args.workers,
        inner=inner,
        pair=PairAlignConfig(max_iters=args.pair_iters),
        seed=args.seed,
    )
    res = accelerated_align(gs, args.accel, cfg)
    stages = [
        (f"stage {s.stage}", s.group_sizes, s.duration, [c.hard for c in s.centers])
        for s in res.stages
    ]
    stages[-1] = ("align to center",) + stages[-1][1:]
    return AlignOutcome(res.permutations, res.center, res.objective, res.converged, stages)


def _equalize(gs: GraphSet) -> GraphSet:
    if len(set(gs.sizes)) > 1:
        log.warning("graphs have %d distinct sizes; padding with dummy nodes", len(set(gs.sizes)))
        return pad_with_dummies(gs)
    return gs


def manifest(args, argv, phases: dict, stages=(), **extra) -> dict:
    out = {
        "command": args.command,
        "argv": list(argv),
        "seed": getattr(args, "seed", None),
        "workers": getattr(args, "workers", 1),
        "version": __version__,
        "phases": {k: float(v) for k, v in phases.items()},
        "stages": [{"label": s[0], "groups": list(s[1]), "seconds": float(s[2])} for s in stages],
        "t_a": float(sum(s[2] for s in stages)),
    }
    out.update(extra)
    return out


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _write_csv(path: Path, header, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    return repr(float(x))


# -- subcommands -------------------------------------------------------------


def cmd_gen(args, argv) -> int:
    t0 = time.perf_counter()
    try:
        gs = build_set(args, args.perturb, args.seed, args.count)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out = Path(args.out)
    write_graphset(gs, out)
    dump_json(manifest(args, argv, {"generate": time.perf_counter() - t0}), _manifest_path(out))
    return EXIT_OK


def cmd_align(args, argv) -> int:
    phases = {}
    t0 = time.perf_counter()
    gs = read_graphset(args.input)
    if len(gs) < 1:
        raise InputError(f"{args.input}: no graphs")
    padded = _equalize(gs)
    m = padded[0].m
    if args.accel in ("c-serial", "cg-parallel") and not 1 <= args.c <= m:
        raise InputError(f"--c must lie in [1, {m}]")
    if args.accel in ("g-parallel", "cg-parallel") and args.K < 2:
        raise InputError("--K must be at least 2")
    if args.accel == "none" and len(padded) < 2:
        raise InputError("direct alignment needs at least two graphs")
    if not 0.0 < args.threshold < 1.0:
        raise InputError("--threshold must lie in (0, 1)")
    phases["load"] = time.perf_counter() - t0
    outcome = run_alignment(padded, args)
    phases["align"] = outcome.t_a
    t1 = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    label = args.method if args.accel == "none" else f"{args.accel}/{args.method}"
    write_alignment(outcome.permutations, outcome.objective, label, out / "alignment.json")
    c = outcome.center
    write_center(c.hard, c.soft, c.threshold, out / "center.json")
    if args.dump_stages:
        for k, (name, _, _, centers) in enumerate(outcome.stages):
            if centers:
                write_graphset(GraphSet(centers, name), out / f"stage_{k + 1}.json")
    phases["write"] = time.perf_counter() - t1
    info = manifest(
        args, argv, phases, outcome.stages,
        converged=bool(outcome.converged),
        padded_to=m if len(set(gs.sizes)) > 1 else None,
    )
    dump_json(info, out / "manifest.json")
    if not outcome.converged:
        print("warning: solver did not converge within its iteration budget", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _load_profiles(gs: GraphSet, path):
    try:
        return [graph_stats(g) for g in gs]
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def cmd_eval(args, argv) -> int:
    t0 = time.perf_counter()
    gen = read_graphset(args.generated)
    ref = read_graphset(args.reference)
    n = min(len(gen), len(ref))
    if len(gen) != len(ref):
        print(f"warning: set sizes differ ({len(gen)} vs {len(ref)}); using the first {n} of each", file=sys.stderr)
    if n < 2:
        raise InputError("MMD needs at least two graphs in each set")
    gp = _load_profiles(GraphSet(gen.graphs[:n]), args.generated)
    rp = _load_profiles(GraphSet(ref.graphs[:n]), args.reference)
    rep = score(gp, rp, args.sigma)
    rows = [("s_mmd", _fmt(rep.s_mmd)), ("s_mvr", _fmt(rep.s_mvr)), ("sigma", _fmt(args.sigma))]
    rows += [(f"mmd2_{s}", _fmt(rep.mmd[s])) for s in STATS]
    rows += [(f"mvr_{s}", _fmt(rep.mvr[s])) for s in STATS]
    if args.alignment:
        adir = Path(args.alignment)
        perms = read_alignment(adir / "alignment.json")["permutations"]
        center, _, _ = read_center(adir / "center.json")
        aligned = _equalize(gen)
        try:
            rows.append(("d0", _fmt(d0_score(aligned, perms, center))))
        except ValueError as exc:
            raise InputError(f"d0: {exc}") from exc
    out = Path(args.out)
    _write_csv(out, ("metric", "value"), rows)
    dump_json(manifest(args, argv, {"eval": time.perf_counter() - t0}), _manifest_path(out))
    return EXIT_OK


def cmd_stats(args, argv) -> int:
    t0 = time.perf_counter()
    gs = read_graphset(args.input)
    profiles = _load_profiles(gs, args.input)
    out = Path(args.out)
    write_stats(profiles, out)
    dump_json(manifest(args, argv, {"stats": time.perf_counter() - t0}), _manifest_path(out))
    return EXIT_OK


def cmd_perturb_sweep(args, argv) -> int:
    if not args.rhos:
        raise InputError("--rhos must list at least one value")
    if any(not 0.0 <= r <= 1.0 for r in args.rhos):
        raise InputError("every rho must lie in [0, 1]")
    if args.count < 2:
        raise InputError("--count must be at least 2")
    t0 = time.perf_counter()
    try:
        ref = reference_set(args, args.seed, args.count)
        rp = [graph_stats(g) for g in ref]
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    rows, stages, ok = [], [], True
    for rho in args.rhos:
        try:
            gs = build_set(args, rho, args.seed, args.count)
        except ValueError as exc:
            raise InputError(f"rho={rho:g}: {exc}") from exc
        padded = _equalize(gs)
        outcome = run_alignment(padded, args)
        ok = ok and outcome.converged
        rep = score([graph_stats(g) for g in gs], rp, args.sigma)
        d0 = d0_score(padded, outcome.permutations, outcome.center.hard)
        rows.append((repr(float(rho)), _fmt(rep.s_mmd), _fmt(rep.s_mvr), _fmt(d0), _fmt(outcome.t_a)))
        stages += [(f"rho={rho:g} {s[0]}",) + tuple(s[1:]) for s in outcome.stages]
    out = Path(args.out)
    _write_csv(out, ("rho", "s_mmd", "s_mvr", "d0", "t_a"), rows)
    info = manifest(args, argv, {"sweep": time.perf_counter() - t0}, stages, converged=bool(ok))
    dump_json(info, _manifest_path(out))
    if not ok:
        print("warning: a solver did not converge within its iteration budget", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphalign", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a graph set")
    _add_family_args(p)
    p.add_argument("--perturb", type=_fraction, default=0.0, help="fraction of edges to rewire")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("align", help="align a graph set and estimate its center")
    p.add_argument("--input", required=True)
    _add_align_args(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--dump-stages", action="store_true", help="write intermediate stage centers")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("eval", help="compare two graph sets")
    p.add_argument("--generated", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--alignment", help="directory written by `align`, enables d0")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="per-graph statistics")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("perturb-sweep", help="align and score a set across noise levels")
    _add_family_args(p)
    p.add_argument("--rhos", type=_float_list, default=[0.1, 0.2, 0.5, 1.0])
    _add_align_args(p)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_perturb_sweep)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if getattr(args, "sigma", 1.0) <= 0:
        print("error: --sigma must be positive", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args, argv)
    except (InputError, GraphFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AlignmentError as exc:
        print(f"error: solver failed at {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
