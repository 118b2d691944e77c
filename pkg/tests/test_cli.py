import json

import numpy as np
import pytest

from huda import cli
from huda.cli import analyze_report, dump_matrix_grayscale, main, read_pgm


def test_pgm_identity(tmp_path):
    scale = dump_matrix_grayscale(np.eye(4), tmp_path / "w.pgm")
    assert scale == 1.0
    assert np.array_equal(read_pgm(tmp_path / "w.pgm"), 255 * np.eye(4, dtype=np.uint8))
    assert (tmp_path / "w.txt").read_text().strip() == "scale 1.0"


def test_pgm_zero_block(tmp_path):
    assert dump_matrix_grayscale(np.zeros((2, 3)), tmp_path / "z.pgm") == 1.0
    img = read_pgm(tmp_path / "z.pgm")
    assert img.shape == (2, 3) and not img.any()


def test_pgm_contrast_scale(tmp_path):
    w = np.array([[0.5, -0.25], [0.0, 0.1]])
    assert dump_matrix_grayscale(w, tmp_path / "h.pgm") == 2.0
    assert np.array_equal(read_pgm(tmp_path / "h.pgm"), [[255, 128], [0, 51]])


def test_pgm_empty_block_rejected(tmp_path):
    with pytest.raises(ValueError):
        dump_matrix_grayscale(np.zeros((0, 3)), tmp_path / "e.pgm")


def test_analyze_reports():
    text, _ = analyze_report("PSDa")
    assert "loop-free; order: c_a, s_a, c_b, s_b, c_z" in text
    text, _ = analyze_report("PSDb")
    assert "order: c_b, s_b, c_a, s_a, c_z" in text
    text, (_, res) = analyze_report("generic")
    assert "algebraic loop" in text
    assert set(res.loops[0]) == {"s_a", "s_b", "c_a", "c_b"}


def test_analyze_command_writes_bitmap(tmp_path, capsys):
    assert main(["analyze", "--topology", "PSDa", "--out", str(tmp_path)]) == 0
    assert "loop-free" in capsys.readouterr().out
    assert (tmp_path / "incidence_PSDa.pgm").exists()


@pytest.mark.parametrize("topo", ["D", "Da", "none", "generic", "X"])
def test_experiment1_rejects_unsuitable_topologies(tmp_path, topo, capsys):
    assert main(["experiment1", "--topology", topo, "--steps", "1", "--out", str(tmp_path)]) == 1
    assert "error:" in capsys.readouterr().err


def test_d_rejection_message(tmp_path, capsys):
    main(["experiment1", "--topology", "D", "--out", str(tmp_path)])
    assert "cannot express the bouncing ball" in capsys.readouterr().err


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("HUDA_OUT", str(tmp_path / "env"))
    ns = cli.build_parser().parse_args(["analyze"])
    assert ns.out == str(tmp_path / "env")
    assert cli.config_from_args(cli.build_parser().parse_args(["experiment1", "--full-paper-budget"])).steps == 20_000


def _tree(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_experiment1_artifacts_are_deterministic(tmp_path):
    args = ["experiment1", "--topology", "PS", "--steps", "3", "--seed", "2"]
    assert main(args + ["--out", str(tmp_path / "r1")]) == 0
    assert main(args + ["--out", str(tmp_path / "r2")]) == 0
    t1, t2 = _tree(tmp_path / "r1"), _tree(tmp_path / "r2")
    assert t1.keys() == t2.keys()
    for name in t1:
        if name != "summary.json":
            assert t1[name] == t2[name], name
    s1, s2 = json.loads(t1["summary.json"]), json.loads(t2["summary.json"])
    s1.pop("runtime_s"), s2.pop("runtime_s")
    assert s1 == s2
    for name in ["loss_history.csv", "checkpoint.json", "connections.json", "summary.json", "traj_s5.csv", "W_az.pgm", "W_init_az.pgm"]:
        assert name in t1
    summary = json.loads(t1["summary.json"])
    assert summary["steps"] == 3 and summary["test_mae"] > 0


def test_experiment2_single_kind(tmp_path):
    assert main(["experiment2", "--kind", "continuous", "--steps", "2", "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "summary.json").read_text())
    assert res["continuous"]["events"] == 0
    # a continuous model has no event rows
    assert (tmp_path / "traj_continuous_events.csv").read_text().count("\n") == 1
