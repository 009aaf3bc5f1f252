import csv
import json
import subprocess
import sys

import numpy as np
import pytest
from scipy.stats import spearmanr

from conftest import isomorphic
from graphalign.accel import d0_score
from graphalign.cli import main
from graphalign.graph import GraphSet, gen_grid, permute_graph
from graphalign.io import read_alignment, read_center, read_graphset, write_graphset

SMALL_COMMUNITY = ["community", "--sizes", "4,5,6", "--p", "0.8", "--inter-frac", "0.1"]


def read_metrics(path):
    with open(path) as fh:
        return {row["metric"]: float(row["value"]) for row in csv.DictReader(fh)}


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# -- gen ----------------------------------------------------------------------


def test_gen_grid_counts(tmp_path):
    out = tmp_path / "grid.json"
    code = main(["gen", "grid", "--rows", "6", "--cols", "6", "--count", "12", "--perturb", "0.1",
                 "--seed", "7", "--out", str(out)])
    assert code == 0
    gs = read_graphset(out)
    assert len(gs) == 12
    assert all(g.m == 36 and g.n_edges == 60 for g in gs)
    info = json.loads((tmp_path / "grid.json.manifest.json").read_text())
    assert info["command"] == "gen" and info["seed"] == 7
    assert "generate" in info["phases"]


def test_gen_single_unperturbed_copy_is_base(tmp_path):
    out = tmp_path / "g.json"
    assert main(["gen", "grid", "--rows", "3", "--cols", "4", "--count", "1", "--perturb", "0",
                 "--seed", "1", "--out", str(out)]) == 0
    assert read_graphset(out)[0] == gen_grid(3, 4)


def test_gen_community_and_ego(tmp_path):
    out = tmp_path / "c.json"
    assert main(["gen", *SMALL_COMMUNITY, "--count", "3", "--seed", "2", "--out", str(out)]) == 0
    assert read_graphset(out).sizes == [15, 15, 15]
    out = tmp_path / "e.json"
    assert main(["gen", "ego-ba", "--total-nodes", "60", "--attach", "2", "--count", "3",
                 "--seed", "2", "--out", str(out)]) == 0
    assert len(read_graphset(out)) == 3


def test_gen_is_deterministic(tmp_path):
    args = ["gen", *SMALL_COMMUNITY, "--count", "4", "--perturb", "0.2", "--seed", "9"]
    main(args + ["--out", str(tmp_path / "a.json")])
    main(args + ["--out", str(tmp_path / "b.json")])
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


@pytest.mark.parametrize(
    "extra",
    [["--perturb", "1.5"], ["--count", "0"], ["--p", "2"]],
)
def test_gen_bad_arguments(tmp_path, extra):
    assert main(["gen", *SMALL_COMMUNITY, "--seed", "1", "--out", str(tmp_path / "x.json"), *extra]) == 2


def test_seed_is_required(tmp_path):
    assert main(["gen", "grid", "--out", str(tmp_path / "x.json")]) == 2


# -- align --------------------------------------------------------------------


@pytest.mark.parametrize(
    "flags",
    [
        ["--method", "fermat"],
        ["--method", "galign"],
        ["--method", "fermat", "--accel", "g-parallel", "--K", "2"],
        ["--method", "fermat", "--accel", "c-serial", "--c", "2"],
        ["--method", "fermat", "--accel", "cg-parallel", "--K", "2", "--c", "2"],
    ],
)
def test_align_identical_copies(tmp_path, flags):
    src = gen_grid(2, 3)
    inp = tmp_path / "in.json"
    write_graphset(GraphSet([src, permute_graph(src, [1, 2, 0, 4, 5, 3]), src]), inp)
    out = tmp_path / "run"
    assert main(["align", "--input", str(inp), *flags, "--seed", "0", "--out", str(out)]) == 0
    center, _, _ = read_center(out / "center.json")
    assert isomorphic(center.adj, src.adj)
    perms = read_alignment(out / "alignment.json")["permutations"]
    gs = read_graphset(inp)
    for g, p in zip(gs, perms):
        assert np.array_equal(permute_graph(g, p).adj, center.adj)
    info = json.loads((out / "manifest.json").read_text())
    assert info["converged"] is True
    assert info["t_a"] == pytest.approx(sum(s["seconds"] for s in info["stages"]), rel=0.01)


def test_align_dump_stages(tmp_path):
    inp = tmp_path / "in.json"
    main(["gen", *SMALL_COMMUNITY, "--count", "4", "--perturb", "0.1", "--seed", "3", "--out", str(inp)])
    out = tmp_path / "run"
    main(["align", "--input", str(inp), "--method", "fermat", "--accel", "g-parallel", "--K", "2",
          "--seed", "0", "--dump-stages", "--out", str(out)])
    assert len(read_graphset(out / "stage_1.json")) == 2
    assert len(read_graphset(out / "stage_2.json")) == 1


def test_align_beats_identity(tmp_path):
    inp = tmp_path / "in.json"
    main(["gen", *SMALL_COMMUNITY, "--count", "12", "--perturb", "0.1", "--seed", "4", "--out", str(inp)])
    out = tmp_path / "run"
    code = main(["align", "--input", str(inp), "--method", "fermat", "--accel", "g-parallel", "--K", "4",
                 "--seed", "0", "--out", str(out)])
    assert code in (0, 1)
    gs = read_graphset(inp)
    perms = read_alignment(out / "alignment.json")["permutations"]
    center, _, _ = read_center(out / "center.json")
    ident = [np.arange(15)] * 12
    assert d0_score(gs, perms, center) < d0_score(gs, ident, center)


def test_align_missing_input(tmp_path):
    assert main(["align", "--input", str(tmp_path / "nope.json"), "--seed", "0", "--out", str(tmp_path)]) == 2


def test_align_bad_cluster_count(tmp_path):
    inp = tmp_path / "in.json"
    write_graphset(GraphSet([gen_grid(2, 2)] * 2), inp)
    code = main(["align", "--input", str(inp), "--accel", "c-serial", "--c", "9", "--seed", "0",
                 "--out", str(tmp_path / "o")])
    assert code == 2


def test_align_non_convergence_exit_code(tmp_path):
    inp = tmp_path / "in.json"
    main(["gen", *SMALL_COMMUNITY, "--count", "3", "--perturb", "0.3", "--seed", "5", "--out", str(inp)])
    out = tmp_path / "run"
    code = main(["align", "--input", str(inp), "--outer-iters", "1", "--seed", "0", "--out", str(out)])
    assert code == 1
    assert json.loads((out / "manifest.json").read_text())["converged"] is False
    assert (out / "alignment.json").exists()


# -- eval and stats -------------------------------------------------------------


def test_eval_identical_sets(tmp_path):
    inp = tmp_path / "in.json"
    main(["gen", *SMALL_COMMUNITY, "--count", "5", "--perturb", "0.1", "--seed", "6", "--out", str(inp)])
    out = tmp_path / "eval.csv"
    assert main(["eval", "--generated", str(inp), "--reference", str(inp), "--out", str(out)]) == 0
    m = read_metrics(out)
    assert m["s_mmd"] == 0.0 and m["s_mvr"] == 0.0
    assert (tmp_path / "eval.csv.manifest.json").exists()


def test_eval_grid_vs_community_and_d0(tmp_path):
    grid, comm = tmp_path / "grid.json", tmp_path / "comm.json"
    main(["gen", "grid", "--rows", "3", "--cols", "5", "--count", "5", "--seed", "1", "--out", str(grid)])
    main(["gen", *SMALL_COMMUNITY, "--count", "5", "--perturb", "0.1", "--seed", "1", "--out", str(comm)])
    run = tmp_path / "run"
    main(["align", "--input", str(comm), "--method", "fermat", "--seed", "0", "--out", str(run)])
    out = tmp_path / "eval.csv"
    assert main(["eval", "--generated", str(comm), "--reference", str(grid), "--alignment", str(run),
                 "--out", str(out)]) == 0
    m = read_metrics(out)
    assert m["s_mmd"] > 0 and m["s_mvr"] > 0
    assert m["d0"] >= 0
    assert {f"mmd2_{s}" for s in ("degree", "claws")} <= set(m)


def test_eval_size_mismatch_truncates(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["gen", "grid", "--rows", "2", "--cols", "3", "--count", "4", "--seed", "1", "--out", str(a)])
    main(["gen", "grid", "--rows", "2", "--cols", "3", "--count", "3", "--seed", "1", "--out", str(b)])
    assert main(["eval", "--generated", str(a), "--reference", str(b), "--out", str(tmp_path / "e.csv")]) == 0
    assert "warning" in capsys.readouterr().err


def test_eval_single_graph_rejected(tmp_path):
    a = tmp_path / "a.json"
    main(["gen", "grid", "--rows", "2", "--cols", "3", "--count", "1", "--seed", "1", "--out", str(a)])
    assert main(["eval", "--generated", str(a), "--reference", str(a), "--out", str(tmp_path / "e.csv")]) == 2


def test_stats_command(tmp_path):
    a = tmp_path / "a.json"
    main(["gen", "grid", "--rows", "2", "--cols", "3", "--count", "2", "--seed", "1", "--out", str(a)])
    out = tmp_path / "s.csv"
    assert main(["stats", "--input", str(a), "--out", str(out)]) == 0
    rows = read_rows(out)
    assert len(rows) == 2 and rows[0]["wedges"] == "10"
    assert (tmp_path / "s.json").exists()


# -- perturb-sweep ----------------------------------------------------------------

SWEEP = ["community", "--sizes", "3,4,5", "--p", "0.8", "--inter-frac", "0.1", "--count", "5",
         "--method", "fermat", "--outer-iters", "30", "--inner-iters", "200"]


def test_sweep_zero_noise_row(tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["perturb-sweep", *SWEEP, "--rhos", "0,0.2", "--seed", "1", "--out", str(out)]) in (0, 1)
    rows = read_rows(out)
    assert [float(r["rho"]) for r in rows] == [0.0, 0.2]
    assert float(rows[0]["d0"]) == pytest.approx(0.0, abs=1e-9)
    assert set(rows[0]) == {"rho", "s_mmd", "s_mvr", "d0", "t_a"}


def test_sweep_empty_rho_list(tmp_path):
    assert main(["perturb-sweep", *SWEEP, "--rhos", "", "--seed", "1", "--out", str(tmp_path / "s.csv")]) == 2


def test_sweep_d0_increases_with_noise(tmp_path):
    rhos = [0.0, 0.1, 0.2, 0.5, 1.0]
    corr = []
    for seed in range(5):
        out = tmp_path / f"sweep{seed}.csv"
        code = main(["perturb-sweep", *SWEEP, "--rhos", ",".join(map(str, rhos)), "--seed", str(seed),
                     "--out", str(out)])
        assert code in (0, 1)  # small budgets may stop before the tolerance is met
        d0 = [float(r["d0"]) for r in read_rows(out)]
        corr.append(spearmanr(rhos, d0).statistic)
    assert np.mean(corr) >= 0.8


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "graphalign", "--version"], capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.startswith("graphalign ")
