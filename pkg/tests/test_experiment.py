import json

import pytest

from conftest import ring_graph, symmetric_graph
from experiment import EXIT_EXHAUSTED, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, exit_code_for, main, parse_stat
from models.graph import DegreeSequenceError, NotStronglyConnectedError
from models.spectral import SpectralError
from utils.graph_io import TrajectoryFile, read_csv, write_graph


@pytest.mark.parametrize("stat, expected", [
    ("assort:out-in", {"statistic": "assortativity", "p": "out", "q": "in", "sign": 1}),
    ("assort:in-in:-1", {"statistic": "assortativity", "p": "in", "q": "in", "sign": -1}),
    ("community", {"statistic": "community"}),
    ("cp", {"statistic": "core_periphery"}),
    ("triangle", {"statistic": "triangle"}),
    ("cycle:4", {"statistic": "k_cycle", "k": 4}),
    ("grow:5", {"statistic": "cycle_grow", "k": 5}),
    ("cp-fractal:2", {"statistic": "core_periphery", "levels": 2}),
])
def test_parse_stat(stat, expected):
    assert parse_stat(stat) == expected


@pytest.mark.parametrize("stat", ["cycle", "cycle:x", "cp-fractal:0", "modularity"])
def test_parse_stat_rejects(stat):
    with pytest.raises(ValueError):
        parse_stat(stat)


def test_exit_codes():
    assert exit_code_for(ValueError()) == EXIT_VALIDATION
    assert exit_code_for(FileNotFoundError()) == EXIT_VALIDATION
    assert exit_code_for(DegreeSequenceError()) == EXIT_EXHAUSTED
    assert exit_code_for(NotStronglyConnectedError()) == EXIT_EXHAUSTED
    assert exit_code_for(SpectralError()) == EXIT_NUMERICAL
    assert exit_code_for(RuntimeError()) == 1


def test_generate_is_reproducible(tmp_path):
    first, second = tmp_path / "a.txt", tmp_path / "b.txt"
    for out in (first, second):
        assert main(["generate", "--n", "3", "--degrees", "regular:1", "--seed", "1", "--out", str(out)]) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()
    meta = json.loads((tmp_path / "a.txt.meta.json").read_text())
    assert (meta["n"], meta["m"]) == (3, 3)
    assert meta["alpha_hill"] is None
    assert meta["theta0"] == pytest.approx(0.0, abs=1e-9)


def test_generate_rejects_bad_alpha(tmp_path):
    code = main(["generate", "--n", "10", "--degrees", "powerlaw", "--alpha", "0.5", "--d-max-cap", "5",
                 "--out", str(tmp_path / "g.txt")])
    assert code == EXIT_VALIDATION


def test_generate_infeasible_regular(tmp_path):
    code = main(["generate", "--n", "3", "--degrees", "regular:3", "--out", str(tmp_path / "g.txt")])
    assert code == EXIT_EXHAUSTED


@pytest.fixture
def graph_file(tmp_path):
    path = tmp_path / "graph.txt"
    write_graph(path, ring_graph(30, extra=45, seed=1))
    return path


def _rewire(graph, out, *extra):
    return main(["rewire", "--graph", str(graph), "--out", str(out), *extra])


def test_rewire_zero_accepted(graph_file, tmp_path):
    out = tmp_path / "traj.jsonl"
    assert _rewire(graph_file, out, "--max-accepted", "0") == EXIT_OK
    traj = TrajectoryFile.read(out)
    assert traj.records == []
    assert traj.footer["accepted"] == 0
    assert traj.footer["stop_reason"] == "max_accepted"


def test_rewire_is_byte_deterministic(graph_file, tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for out in (a, b):
        assert _rewire(graph_file, out, "--max-accepted", "6", "--stride", "2", "--seed", "3") == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert TrajectoryFile.read(a).header["r_total"] == 3


def test_rewire_core_periphery_on_star(star5, tmp_path):
    graph, out = tmp_path / "star.txt", tmp_path / "traj.jsonl"
    write_graph(graph, star5)
    assert _rewire(graph, out, "--stat", "cp", "--r", "2") == EXIT_OK
    assert TrajectoryFile.read(out).footer["accepted"] == 0


def test_rewire_missing_graph(tmp_path):
    assert _rewire(tmp_path / "missing.txt", tmp_path / "traj.jsonl") == EXIT_VALIDATION


def test_analyze_symmetric_baseline(tmp_path):
    graph, traj = tmp_path / "sym.txt", tmp_path / "traj.jsonl"
    write_graph(graph, symmetric_graph(40, 0.4, seed=9))
    assert _rewire(graph, traj, "--r", "1", "--max-accepted", "8", "--stride", "1") == EXIT_OK
    assert main(["analyze", "--trajectory", str(traj), "--graph", str(graph)]) == EXIT_OK
    frame, meta = read_csv(f"{traj}.bounds.csv")
    assert list(frame.columns) == ["trajectory", "t", "phi", "theta", "omega_norm", "omega_cap", "ss_bound",
                                   "condition", "slack"]
    assert meta["schema_version"] == "1"
    summary = json.loads((tmp_path / "traj.jsonl.bounds.json").read_text())
    assert summary["violations"] == 0
    assert summary["trajectories"] == 1


def test_analyze_rejects_foreign_graph(graph_file, tmp_path):
    traj, other = tmp_path / "traj.jsonl", tmp_path / "other.txt"
    assert _rewire(graph_file, traj, "--max-accepted", "2") == EXIT_OK
    write_graph(other, ring_graph(30, extra=45, seed=2))
    assert main(["analyze", "--trajectory", str(traj), "--graph", str(other)]) == EXIT_VALIDATION


def test_analyze_rejects_mixed_configs(graph_file, tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert _rewire(graph_file, a, "--max-accepted", "2", "--seed", "1") == EXIT_OK
    assert _rewire(graph_file, b, "--max-accepted", "2", "--seed", "2") == EXIT_OK
    assert main(["analyze", "--trajectory", str(a), str(b)]) == EXIT_VALIDATION


def _config(tmp_path, graph_file):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({
        "graph": str(graph_file), "ensemble_size": 3, "stride": 2, "master_seed": 11,
        "policy": {"statistic": "assortativity", "r_budget": 3, "max_accepted": 6},
    }))
    return path


@pytest.mark.parametrize("workers", [2, pytest.param(8, marks=pytest.mark.slow)])
def test_ensemble_independent_of_worker_count(graph_file, tmp_path, workers):
    config = _config(tmp_path, graph_file)
    serial, parallel = tmp_path / "serial", tmp_path / "parallel"
    assert main(["ensemble", "--config", str(config), "--workers", "1", "--out-dir", str(serial)]) == EXIT_OK
    code = main(["ensemble", "--config", str(config), "--workers", str(workers), "--out-dir", str(parallel)])
    assert code == EXIT_OK
    names = sorted(p.name for p in serial.iterdir())
    assert names == sorted(p.name for p in parallel.iterdir())
    assert "traj_0002.jsonl" in names and "moments.csv" in names
    for name in names:
        assert (serial / name).read_bytes() == (parallel / name).read_bytes()


def test_report(graph_file, tmp_path):
    config = _config(tmp_path, graph_file)
    runs = tmp_path / "runs"
    assert main(["ensemble", "--config", str(config), "--workers", "1", "--out-dir", str(runs)]) == EXIT_OK
    assert main(["report", "--ensemble-dir", str(runs)]) == EXIT_OK
    frame, meta = read_csv(runs / "report_moments.csv")
    assert int(meta["ensemble_size"]) == 3
    assert frame["t"].iloc[0] == 0
    envelope, _ = read_csv(runs / "envelope.csv")
    assert "M_hat" in envelope["quantity"].tolist()


def test_report_on_empty_directory(tmp_path):
    assert main(["report", "--ensemble-dir", str(tmp_path)]) == EXIT_VALIDATION
