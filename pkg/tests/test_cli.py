import json

import numpy as np
import pytest

from manyscat.cli import main
from manyscat.ensemble import Box
from manyscat.gridio import read_grid, write_grid

SCENE = {
    "k": 1.0,
    "direction": [0, 0, 1],
    "polarization": [1, "0.5j", 0],
    "shape": {"kind": "sphere", "a": 0.02},
    "density": 0.001,
    "single_body": {"level": 1, "ka": [0.1, 0.05]},
    "reduce": {"per_side": 2},
    "continuum": {"dims": [8, 8, 8]},
    "convergence": {"suite": "gauss", "levels": [1, 2]},
}


def write_scene(tmp_path, **patch):
    d = dict(SCENE)
    d.update(patch)
    p = tmp_path / "scene.json"
    p.write_text(json.dumps(d))
    return p


def run(tmp_path, cmd, *extra, **patch):
    p = write_scene(tmp_path, **patch)
    out = tmp_path / f"out-{cmd}"
    code = main([cmd, "--scene", str(p), "--out", str(out), *extra])
    report = json.loads((out / "report.json").read_text())
    return code, out, report


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])


def test_single_body(tmp_path):
    code, out, rep = run(tmp_path, "single-body")
    assert code == 0 and rep["status"] == "ok"
    header, rows = read_csv(out / "single_body.csv")
    assert header == ["ka", "abs_Q_bie", "abs_Q_asym", "rel_err", "cond_estimate"]
    assert rows.shape == (2, 5)
    header, rows = read_csv(out / "amplitude.csv")
    assert header[:3] == ["beta_x", "beta_y", "beta_z"] and len(header) == 9
    assert rep["input"]["scene"]["k"] == 1.0
    assert "scene_text" in rep["input"]


def test_many_body_outputs(tmp_path):
    code, out, rep = run(tmp_path, "many-body")
    assert code == 0
    assert rep["regime"]["passed"] and rep["results"]["M"] == 125
    header, rows = read_csv(out / "particles.csv")
    assert rows.shape == (125, 16)
    header, rows = read_csv(out / "field.csv")
    assert header == ["x", "y", "z", "re_Ex", "im_Ex", "re_Ey", "im_Ey", "re_Ez", "im_Ez"]
    assert rep["results"]["radiation"]["monotone"]
    assert set(rep["outputs"]) == {"particles.csv", "field.csv", "amplitude.csv"}


def test_outputs_are_bit_identical(tmp_path):
    _, out1, _ = run(tmp_path, "many-body", "--threads", "1")
    p = write_scene(tmp_path)
    out2 = tmp_path / "again"
    assert main(["many-body", "--scene", str(p), "--out", str(out2)]) == 0
    for name in ("particles.csv", "field.csv", "amplitude.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_reduce_compares_with_full(tmp_path):
    code, out, rep = run(tmp_path, "reduce")
    assert code == 0
    assert rep["results"]["P"] == 8
    assert rep["results"]["scattered_rel_l2"] < 0.1
    assert (out / "reduced.csv").exists() and (out / "comparison.json").exists()


def test_continuum(tmp_path):
    code, out, rep = run(tmp_path, "continuum")
    assert code == 0
    res = json.loads((out / "continuum_report.json").read_text())
    assert res["schrodinger_residual"] < 5e-2
    header, rows = read_csv(out / "E_grid.csv")
    assert rows.shape == (512, 9)


def test_convergence(tmp_path):
    code, out, rep = run(tmp_path, "convergence")
    assert code == 0
    header, rows = read_csv(out / "convergence.csv")
    assert header == ["level", "error"] and rows[1, 1] < rows[0, 1]


def test_design_feasible_and_infeasible(tmp_path):
    write_grid(tmp_path / "ok.json", Box.cube(), np.full((2, 2, 2), 0.5))
    bad = np.full((2, 2, 2), 0.5)
    bad[0, 1, 0] = 1.5
    write_grid(tmp_path / "bad.json", Box.cube(), bad)
    code, out, rep = run(tmp_path, "design", design={"target": "ok.json"})
    assert code == 0
    _, N = read_grid(out / "density.json")
    np.testing.assert_allclose(N, 3 / (4 * np.pi))
    code, out, rep = run(tmp_path, "design", design={"target": "bad.json"})
    assert code == 4
    feas = json.loads((out / "feasibility.json").read_text())
    assert not feas["feasible"] and feas["offending"][0]["index"] == [0, 1, 0]
    assert rep["status"] == "infeasible"


def test_validation_failures_exit_2(tmp_path):
    code, _, rep = run(tmp_path, "many-body", polarization=[0, 0, 1])
    assert code == 2 and "transversality" in rep["error"]["message"]
    assert rep["error"]["field"] == "polarization"
    code, _, rep = run(tmp_path, "many-body", k=3.0, shape={"kind": "sphere", "a": 0.05})
    assert code == 2 and "regime" in rep["error"]["message"]
    code, _, rep = run(tmp_path, "many-body", "--override-regime", k=3.0, shape={"kind": "sphere", "a": 0.05})
    assert code == 0 and any("regime" in w for w in rep["warnings"])


def test_unreadable_scene_still_reports(tmp_path):
    out = tmp_path / "o"
    code = main(["many-body", "--scene", str(tmp_path / "none.json"), "--out", str(out)])
    assert code == 2
    rep = json.loads((out / "report.json").read_text())
    assert rep["status"] == "invalid"
    bad = tmp_path / "bad.json"
    bad.write_text('{"k": 1,\n "polarization" [1,0,0]}')
    code = main(["many-body", "--scene", str(bad), "--out", str(out)])
    rep = json.loads((out / "report.json").read_text())
    assert code == 2 and "line 2" in rep["error"]["message"]


def test_numerical_failure_exit_3(tmp_path, monkeypatch):
    from manyscat import cli
    from manyscat.errors import NumericalError

    def boom(*a, **k):
        raise NumericalError("did not converge", [1.0, 0.9])

    monkeypatch.setattr(cli, "solve", boom)
    code, _, rep = run(tmp_path, "many-body")
    assert code == 3 and rep["error"]["history"] == [1.0, 0.9]


def test_argument_errors():
    with pytest.raises(SystemExit):
        main(["many-body"])
    with pytest.raises(SystemExit):
        main(["bogus", "--scene", "x"])
