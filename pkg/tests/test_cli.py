import os

import numpy as np
import pytest

from lrmc.cli import main
from lrmc.graph import read_edge_list
from lrmc.solver import read_trace_csv


@pytest.fixture(autouse=True)
def in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


class TestGenGraph:
    def test_regular_graph_file(self, in_tmp, capsys):
        assert main(["gen-graph", "--n", "50", "--degree", "3", "--seed", "1",
                     "--out", "g.txt"]) == 0
        out = capsys.readouterr().out
        assert "edges=150" in out and "max_degree=3" in out
        g = read_edge_list("g.txt")
        assert g.n_edges == 150
        assert np.all(g.row_degrees == 3)

    def test_k22(self, in_tmp):
        assert main(["gen-graph", "--n", "2", "--degree", "2", "--out",
                     "k22.txt"]) == 0
        g = read_edge_list("k22.txt")
        assert g.edge_set == {(0, 0), (0, 1), (1, 0), (1, 1)}

    def test_er_union_grows_and_reproduces(self, in_tmp):
        assert main(["gen-graph", "--n", "50", "--degree", "3", "--er-c", "2",
                     "--seed", "1", "--out", "a.txt"]) == 0
        assert main(["gen-graph", "--n", "50", "--degree", "3", "--er-c", "2",
                     "--seed", "1", "--out", "b.txt"]) == 0
        a = read_edge_list("a.txt")
        assert a.n_edges >= 150
        assert a == read_edge_list("b.txt")

    def test_missing_n_is_usage_error(self, in_tmp, capsys):
        assert main(["gen-graph", "--degree", "3"]) == 1
        assert "error:" in capsys.readouterr().err

    def test_impossible_degree_reported(self, in_tmp, capsys):
        assert main(["gen-graph", "--n", "4", "--degree", "9"]) == 1


class TestRun:
    def test_ground_truth_converges_at_zero(self, in_tmp, capsys):
        code = main(["run", "--alg", "vls", "--n", "20", "--degree", "3",
                     "--init", "ground-truth", "--seed", "2", "--out", "t.csv"])
        assert code == 0
        trace = read_trace_csv("t.csv")
        assert trace.status == "converged"
        assert trace.records[0] == (0, 0.0, 0.0)

    def test_reference_run_converges(self, in_tmp):
        code = main(["run", "--alg", "vls", "--n", "100", "--degree", "3",
                     "--rank", "1", "--seed", "7", "--out", "t.csv"])
        assert code == 0
        assert read_trace_csv("t.csv").final_rms < 1e-3

    def test_els_on_degree_one_graph_is_structural_error(self, in_tmp, capsys):
        with open("path.txt", "w") as fh:
            fh.write("2 2 3\n0 0\n1 0\n1 1\n")
        code = main(["run", "--alg", "els", "--graph", "path.txt",
                     "--seed", "1"])
        assert code == 1
        assert "degree" in capsys.readouterr().err

    def test_iteration_cap_exit_code(self, in_tmp):
        code = main(["run", "--alg", "vls", "--n", "50", "--degree", "3",
                     "--seed", "3", "--max-iters", "2", "--tol", "1e-12",
                     "--out", "t.csv"])
        assert code == 3

    def test_plot_written(self, in_tmp):
        assert main(["run", "--alg", "vls", "--n", "20", "--degree", "3",
                     "--seed", "2", "--out", "t.csv", "--plot", "t.svg"]) == 0
        assert os.path.exists("t.svg")

    def test_adversarial_split_run(self, in_tmp):
        code = main(["run", "--alg", "vls", "--n", "40", "--degree", "3",
                     "--init", "adversarial-split", "--init-b", "0.1",
                     "--seed", "4", "--tol", "1e-6", "--max-iters", "5000",
                     "--out", "t.csv"])
        assert code == 0


class TestCompare:
    def test_csv_and_svg_deterministic(self, in_tmp):
        args = ["compare", "--n", "60", "--degree", "3", "--seed", "5",
                "--out", "c1.csv"]
        assert main(args) == 0
        assert main(["compare", "--n", "60", "--degree", "3", "--seed", "5",
                     "--out", "c2.csv"]) == 0
        with open("c1.csv", "rb") as fh:
            first = fh.read()
        with open("c2.csv", "rb") as fh:
            assert fh.read() == first
        with open("c1.svg", "rb") as fh:
            svg1 = fh.read()
        with open("c2.svg", "rb") as fh:
            assert fh.read() == svg1

    def test_replot_from_csv_identical_svg(self, in_tmp):
        from lrmc import plots
        from lrmc.experiments import read_compare_csv
        assert main(["compare", "--n", "60", "--degree", "3", "--seed", "5",
                     "--out", "c.csv"]) == 0
        rows = read_compare_csv("c.csv")
        plots.plot_compare(rows, "replot.svg")
        with open("c.svg", "rb") as fh:
            original = fh.read()
        with open("replot.svg", "rb") as fh:
            assert fh.read() == original

    def test_header_and_normalization(self, in_tmp):
        assert main(["compare", "--n", "60", "--degree", "3", "--seed", "5",
                     "--out", "c.csv"]) == 0
        with open("c.csv") as fh:
            assert fh.readline().strip() == "algorithm,iteration,normalized_index,rms"


class TestSweep:
    ARGS = ["sweep", "--rank", "2", "--n", "24", "--c-grid", "0,4",
            "--trials", "4", "--cap", "40", "--seed", "9"]

    def test_csv_schema_and_figure(self, in_tmp):
        assert main(self.ARGS + ["--out", "s.csv"]) == 0
        with open("s.csv") as fh:
            header = fh.readline().strip()
            assert header == ("algorithm,r,n,c,trials,failures,diverged,"
                              "failure_fraction,mean_success_iters")
            assert len(fh.readlines()) == 4
        assert os.path.exists("s.svg")

    def test_worker_count_does_not_change_bytes(self, in_tmp):
        assert main(self.ARGS + ["--workers", "1", "--out", "w1.csv"]) == 0
        assert main(self.ARGS + ["--workers", "3", "--out", "w3.csv"]) == 0
        with open("w1.csv", "rb") as fh:
            first = fh.read()
        with open("w3.csv", "rb") as fh:
            assert fh.read() == first

    def test_c_grid_range_syntax(self, in_tmp):
        assert main(["sweep", "--rank", "1", "--n", "16", "--planted-degree",
                     "3", "--c-grid", "0:4:2", "--trials", "2", "--cap", "30",
                     "--seed", "1", "--out", "r.csv"]) == 0
        with open("r.csv") as fh:
            fh.readline()
            cs = sorted({float(line.split(",")[3]) for line in fh})
        assert cs == [0.0, 2.0, 4.0]


class TestEstimateThreshold:
    def test_interpolated_crossing(self, in_tmp, capsys):
        with open("s.csv", "w") as fh:
            fh.write("algorithm,r,n,c,trials,failures,diverged,"
                     "failure_fraction,mean_success_iters\n")
            fh.write("els,2,100,2.0,10,10,0,1.0,nan\n")
            fh.write("els,2,100,4.0,10,0,0,0.0,12.0\n")
        assert main(["estimate-threshold", "--in", "s.csv", "--resamples",
                     "50", "--seed", "0"]) == 0
        out = capsys.readouterr().out
        assert "els: c* = 3.0" in out

    def test_no_crossing_reported(self, in_tmp, capsys):
        with open("s.csv", "w") as fh:
            fh.write("algorithm,r,n,c,trials,failures,diverged,"
                     "failure_fraction,mean_success_iters\n")
            fh.write("vls,2,100,2.0,10,0,0,0.0,5.0\n")
            fh.write("vls,2,100,4.0,10,0,0,0.0,5.0\n")
        assert main(["estimate-threshold", "--in", "s.csv"]) == 0
        assert "no crossing" in capsys.readouterr().out

    def test_missing_input_flag(self, in_tmp, capsys):
        assert main(["estimate-threshold"]) == 1


class TestDiagnose:
    def test_csv_schema_and_clean_report(self, in_tmp, capsys):
        code = main(["diagnose", "--n", "20", "--degree", "3", "--seed", "3",
                     "--max-iters", "40", "--tol", "1e-8", "--out", "d.csv"])
        assert code == 0
        out = capsys.readouterr().out
        assert "violations=0" in out
        with open("d.csv") as fh:
            assert fh.readline().strip() == \
                "t,spread_u,max_u,min_u,min_nonzero_P,row_sum_err"

    def test_ground_truth_spread_zero(self, in_tmp):
        assert main(["diagnose", "--n", "12", "--degree", "3", "--seed", "3",
                     "--init", "ground-truth", "--max-iters", "5",
                     "--out", "d.csv"]) == 0
        with open("d.csv") as fh:
            fh.readline()
            spreads = [float(line.split(",")[1]) for line in fh]
        assert all(s == 0.0 for s in spreads)

    def test_rank2_rejected(self, in_tmp, capsys):
        assert main(["diagnose", "--n", "12", "--degree", "3", "--rank", "2",
                     "--seed", "1"]) == 1
        assert "rank-1" in capsys.readouterr().err

    def test_adversarial_split_converges_despite_distance(self, in_tmp):
        # misaligned start: subspace distance above one half, still converges
        code = main(["diagnose", "--n", "40", "--degree", "3",
                     "--init", "adversarial-split", "--init-b", "0.1",
                     "--seed", "4", "--tol", "1e-6", "--max-iters", "3000",
                     "--out", "d.csv"])
        assert code == 0


class TestConfigFile:
    def test_config_supplies_flags(self, in_tmp):
        with open("run.cfg", "w") as fh:
            fh.write("# reference run\nalg=vls\nn=30\ndegree=3\nseed=2\n"
                     "out=from_cfg.csv\n")
        assert main(["run", "--config", "run.cfg"]) == 0
        assert os.path.exists("from_cfg.csv")

    def test_flags_override_config(self, in_tmp):
        with open("run.cfg", "w") as fh:
            fh.write("alg=vls\nn=30\ndegree=3\nseed=2\nout=cfg.csv\n")
        assert main(["run", "--config", "run.cfg", "--out", "flag.csv"]) == 0
        assert os.path.exists("flag.csv") and not os.path.exists("cfg.csv")

    def test_malformed_config_rejected(self, in_tmp, capsys):
        with open("bad.cfg", "w") as fh:
            fh.write("this is not a key value pair\n")
        assert main(["run", "--config", "bad.cfg"]) == 1


class TestMiscellaneous:
    def test_gen_graph_reports_disconnected(self, in_tmp, capsys):
        # empty-ish ER graph: isolated vertices, no diameter
        assert main(["gen-graph", "--n", "6", "--degree", "1", "--seed", "1",
                     "--out", "g.txt"]) == 0
        out = capsys.readouterr().out
        assert "connected=False" in out  # 1-regular: disjoint edges
        assert main(["gen-graph", "--n", "40", "--er-c", "0.2", "--seed", "1",
                     "--out", "h.txt"]) == 0
        out = capsys.readouterr().out
        assert "connected=False" in out
        assert "n/a (disconnected)" in out

    def test_bad_c_grid_is_usage_error(self, in_tmp, capsys):
        assert main(["sweep", "--c-grid", "0:10:0", "--trials", "1"]) == 1
        assert "error:" in capsys.readouterr().err

    def test_run_from_graph_file(self, in_tmp):
        assert main(["gen-graph", "--n", "30", "--degree", "3", "--seed", "2",
                     "--out", "g.txt"]) == 0
        assert main(["run", "--alg", "els", "--graph", "g.txt", "--seed", "3",
                     "--tol", "1e-5", "--max-iters", "500",
                     "--out", "t.csv"]) == 0
