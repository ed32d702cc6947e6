import time
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from efa_gn.cli import main
from efa_gn.io import read_matrix, read_summary, read_trace_csv, write_matrix
from efa_gn.model import check_hermitian


@pytest.fixture
def rhat(tmp_path):
    path = tmp_path / "rhat.mat"
    assert main(["simulate", "--p", "10", "--q", "2", "--n", "1000", "--seed", "7", "--out", str(path)]) == 0
    return path


def test_simulate_header_and_determinism(tmp_path, rhat, capsys):
    assert rhat.read_text().splitlines()[0] == "# complex 10 10 10"
    again = tmp_path / "again.mat"
    main(["simulate", "--p", "10", "--q", "2", "--n", "1000", "--seed", "7", "--out", str(again)])
    assert again.read_bytes() == rhat.read_bytes()
    assert "seed 7" in capsys.readouterr().out
    X, _ = read_matrix(rhat)
    check_hermitian(X, tol=0)


def test_simulate_samples_and_noise_seed(tmp_path):
    a, b = tmp_path / "a.mat", tmp_path / "b.mat"
    main(["simulate", "--p", "6", "--q", "1", "--n", "20", "--seed", "1", "--samples", "--out", str(a)])
    main(["simulate", "--p", "6", "--q", "1", "--n", "20", "--seed", "1", "--noise-seed", "99",
          "--samples", "--out", str(b)])
    Ya, P = read_matrix(a)
    assert Ya.shape == (20, 6) and P == 6
    assert a.read_bytes() != b.read_bytes()


def test_simulate_unidentifiable_warns(tmp_path, capsys):
    code = main(["simulate", "--p", "100", "--q", "95", "--n", "0", "--out", str(tmp_path / "r.mat")])
    assert code == 0
    assert "unidentifiable" in capsys.readouterr().err


@pytest.mark.parametrize("solver", ["reduced", "altls"])
def test_fit_outputs(tmp_path, rhat, solver):
    out = tmp_path / solver
    code = main(["fit", str(rhat), "--q", "2", "--solver", solver, "--out", str(out), "--plot"])
    assert code in (0, 2)
    if solver == "reduced":
        assert code == 0
    A, P = read_matrix(out / "A.mat")
    Psi, _ = read_matrix(out / "Psi.mat")
    assert A.shape == (10, 2) and Psi.shape == (10, 10)
    rows = read_trace_csv(out / "trace.csv")
    assert 1 <= len(rows) <= 501
    ET.parse(out / "convergence.svg")


def test_fit_from_samples(tmp_path):
    path = tmp_path / "y.mat"
    main(["simulate", "--p", "8", "--q", "1", "--n", "500", "--seed", "2", "--samples", "--out", str(path)])
    assert main(["fit", str(path), "--q", "1", "--out", str(tmp_path / "o")]) == 0


def test_fit_not_converged_exit_code(tmp_path, rhat):
    code = main(["fit", str(rhat), "--q", "2", "--solver", "altls", "--max-iters", "1",
                 "--out", str(tmp_path / "o")])
    assert code == 2


def test_fit_fixed_step(tmp_path, rhat):
    main(["fit", str(rhat), "--q", "2", "--step", "fixed:0.5", "--max-iters", "3", "--out", str(tmp_path / "o")])
    rows = read_trace_csv(tmp_path / "o" / "trace.csv")
    assert all(r["mu"] == 0.5 for r in rows[1:])


def test_fit_non_hermitian_input(tmp_path, capsys):
    X = np.eye(3, dtype=complex)
    X[2, 0] = 0.5
    write_matrix(tmp_path / "bad.mat", X)
    assert main(["fit", str(tmp_path / "bad.mat"), "--q", "1", "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "(2, 0)" in err or "(0, 2)" in err


def test_fit_malformed_file(tmp_path, capsys):
    (tmp_path / "bad.mat").write_text("# complex 2 2 2\n1,0,0,0\n0,0,x,0\n")
    assert main(["fit", str(tmp_path / "bad.mat"), "--q", "1", "--out", str(tmp_path / "o")]) == 1
    assert ":3:3" in capsys.readouterr().err


def test_unknown_flag_is_error(rhat):
    with pytest.raises(SystemExit) as exc:
        main(["fit", str(rhat), "--q", "2", "--out", "x", "--bogus"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        main(["fit", str(rhat), "--q", "2", "--out", "x", "--step", "linear"])


def test_verify_default_passes(capsys):
    t0 = time.perf_counter()
    assert main(["verify"]) == 0
    assert time.perf_counter() - t0 < 30
    out = capsys.readouterr().out
    assert "FAIL" not in out


def test_verify_sizes_and_fault(capsys):
    assert main(["verify", "--sweep-sizes", "3..5"]) == 0
    out = capsys.readouterr().out
    assert {line.split()[1] for line in out.splitlines()[1:-1]} == {"3", "4", "5"}
    assert main(["verify", "--sweep-sizes", "4..5", "--inject-fault", "1e-3"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_bench_outputs(tmp_path):
    out = tmp_path / "bench"
    code = main(["bench", "--p", "12", "--q", "2,4", "--n", "500", "--seeds", "2", "--out", str(out)])
    assert code == 0
    svgs = sorted(p.name for p in out.glob("*.svg"))
    assert svgs == ["conv_P12_Q2_N500.svg", "conv_P12_Q4_N500.svg"]
    root = ET.parse(out / "conv_P12_Q4_N500.svg").getroot()
    assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 4
    summary = read_summary(out / "summary.json")
    assert [c["Q"] for c in summary["cells"]] == [2, 4]
    assert set(summary["cells"][0]["solvers"]) == {"reduced", "altls"}


def test_bench_zero_seeds(tmp_path):
    out = tmp_path / "bench"
    assert main(["bench", "--p", "10", "--q", "2", "--n", "100", "--seeds", "0", "--out", str(out)]) == 0
    assert read_summary(out / "summary.json") == {"cells": []}
    assert not list(out.glob("*.svg"))


@pytest.mark.slow
def test_bench_high_rank_ordering(tmp_path):
    out = tmp_path / "bench"
    main(["bench", "--p", "30", "--q", "5,15", "--n", "1000", "--seeds", "10", "--jobs", "4",
          "--out", str(out)])
    assert len(list(out.glob("*.svg"))) == 2
    cell = next(c for c in read_summary(out / "summary.json")["cells"] if c["Q"] == 15)
    assert cell["reduced_below_altls_at_final"] >= 7
