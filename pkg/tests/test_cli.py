import json

import numpy as np
import pytest

from chainroa.cli import main
from chainroa.conic import import_problem
from chainroa.poly import Polynomial
from chainroa.roa import load_certificate, save_certificate
from chainroa.system import Block, Box, ChainSystem, save_config
from chainroa.validate import load_grid


def _zero_config(path, dim=2, target_half=0.5):
    v = tuple(f"x{i+1}" for i in range(dim))
    blocks = [Block(f"block{i+1}", (v[i],), Box([-1.0], [1.0]),
                    Box([-target_half], [target_half])) for i in range(dim)]
    zero = Polynomial.zero(v)
    save_config(ChainSystem(blocks, [(zero,)] * dim, 1.0), str(path))


@pytest.fixture(scope="module")
def solved_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "sys.json"
    _zero_config(cfg)
    out = root / "run"
    code = main(["solve", "--config", str(cfg), "--mode", "dense",
                 "--degree", "2", "--out", str(out)])
    assert code == 0
    return root


def test_demo_list(capsys):
    assert main(["demo-list"]) == 0
    out = capsys.readouterr().out
    assert "bicylinder" in out and "vdp" in out


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--demo", "bicylinder", "--degree", "7"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--degree", "2"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["certify", "/does/not/exist.txt"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_solve_writes_artifacts(solved_dir):
    out = solved_dir / "run"
    for name in ("certificate.txt", "problem.json", "solution.json",
                 "timings.log"):
        assert (out / name).exists()
    doc = json.loads((out / "solution.json").read_text())
    assert doc["format"] == "chainroa-solution/1"
    assert doc["status"] in ("optimal", "near_optimal")
    assert set(doc["timings"]) == {"build", "compile", "solve"}
    log = (out / "timings.log").read_text().split()
    assert log[0] == "build"


def test_certify_passes_and_writes_report(solved_dir, capsys):
    cert = solved_dir / "run" / "certificate.txt"
    out = solved_dir / "certify"
    code = main(["certify", str(cert), "--samples", "150", "--seed", "3",
                 "--out", str(out)])
    assert code == 0
    assert "PASS" in capsys.readouterr().out
    rep = json.loads((out / "report.json").read_text())
    assert rep["format"] == "chainroa-report/1"
    assert rep["violations"] == 0
    assert rep["passed"] is True
    assert rep["volume"] > 0


def test_certify_flags_corrupted_certificate(solved_dir, capsys):
    cert = load_certificate(str(solved_dir / "run" / "certificate.txt"))
    bad = dict(cert.polys)
    bad["v"] = bad["v"] - Polynomial.constant(bad["v"].vars, 10.0)
    cert.polys = bad
    bad_path = solved_dir / "bad_cert.txt"
    save_certificate(cert, str(bad_path))
    out = solved_dir / "certify_bad"
    code = main(["certify", str(bad_path), "--samples", "150", "--seed", "3",
                 "--out", str(out)])
    assert code == 1
    captured = capsys.readouterr()
    assert "FAIL" in captured.out
    assert "violation at" in captured.err
    rep = json.loads((out / "report.json").read_text())
    assert rep["violations"] > 0
    assert rep["witness_points"]


def test_certify_rejects_mismatched_system(solved_dir, tmp_path, capsys):
    other = tmp_path / "other.json"
    _zero_config(other, target_half=0.25)
    cert = solved_dir / "run" / "certificate.txt"
    code = main(["certify", str(cert), "--config", str(other),
                 "--out", str(tmp_path / "c")])
    assert code == 2
    assert "different system" in capsys.readouterr().err


def test_trajectories_per_row_entries(solved_dir, tmp_path, capsys):
    cfg = solved_dir / "sys.json"
    pts = tmp_path / "pts.txt"
    pts.write_text("# comment\n0.1 0.1\n2.0 0.0\n0.9\n")
    out = tmp_path / "trj"
    code = main(["trajectories", str(pts), "--config", str(cfg),
                 "--out", str(out)])
    assert code == 0
    manifest = (out / "trajectories.txt").read_text().splitlines()
    assert manifest[0] == "0 reached_target traj_000.txt"
    assert "outside the state box" in manifest[1]
    assert "wrong dimension" in manifest[2]
    assert (out / "traj_000.txt").exists()
    assert not (out / "traj_001.txt").exists()


def test_trajectories_empty_file(solved_dir, tmp_path):
    pts = tmp_path / "empty.txt"
    pts.write_text("")
    out = tmp_path / "trj"
    code = main(["trajectories", str(pts), "--config",
                 str(solved_dir / "sys.json"), "--out", str(out)])
    assert code == 0
    assert (out / "trajectories.txt").read_text() == ""


def test_trajectories_demo_defaults(tmp_path):
    out = tmp_path / "demo_trj"
    code = main(["trajectories", "--demo", "bicylinder", "--out", str(out)])
    assert code == 0
    manifest = (out / "trajectories.txt").read_text().splitlines()
    assert len(manifest) == 3
    assert manifest[0].split()[1] == "reached_target"
    for line in manifest[1:]:
        assert line.split()[1] in ("left_state_box", "blowup")


def test_trajectories_require_points_without_demo(solved_dir):
    with pytest.raises(SystemExit) as exc:
        main(["trajectories", "--config", str(solved_dir / "sys.json")])
    assert exc.value.code == 2


def test_grid_command(solved_dir, tmp_path):
    cert = solved_dir / "run" / "certificate.txt"
    out = tmp_path / "g.txt"
    code = main(["grid", str(cert), "--axes", "x1,x2", "--res", "4",
                 "--out", str(out)])
    assert code == 0
    grid = load_grid(str(out))
    assert grid["axes"] == ["x1", "x2"]
    assert grid["data"].shape == (16, 3)
    assert np.isfinite(grid["data"]).all()
    with pytest.raises(SystemExit) as exc:
        main(["grid", str(cert), "--axes", "bogus", "--out", str(out)])
    assert exc.value.code == 2


def test_export_sdp_round_trip(solved_dir, tmp_path):
    out = tmp_path / "p.sdpa"
    code = main(["export-sdp", "--config", str(solved_dir / "sys.json"),
                 "--mode", "sparse", "--degree", "2", "--out", str(out)])
    assert code == 0
    data = out.read_bytes()
    assert b"chainroa-sdpa/1" in data.splitlines()[0]
    problem = import_problem(data, "sdpa-sparse")
    assert problem.n_free > 0 and len(problem.psd_dims) > 0
