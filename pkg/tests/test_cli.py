import json
import os
import subprocess
import sys

import numpy as np
import pytest

from maxpatch import cli
from maxpatch.cli import ConfigError, compare_curves, load_config, parse_config
from maxpatch.meshgen import write_mesh
from maxpatch.transient import write_series_csv

BASE = """
[case]
kind = sphere_pec_harmonic
domain = symmetric_half
[geometry]
a = 1
R_inf = 3
[mesh]
divisions = 2 3 2
{extra}
"""


def cfg_text(extra="", **repl):
    text = BASE.format(extra=extra)
    for k, v in repl.items():
        text = text.replace(k, v)
    return text


@pytest.mark.parametrize("name", cli.bundled_configs())
def test_bundled_configs_parse(name):
    cfg = load_config(name)
    assert cfg.name == name[:-4]
    assert cfg.divisions and len(cfg.probes) >= 1


def test_config_validation():
    parse_config(cfg_text())
    with pytest.raises(ConfigError, match="patch_thickness"):
        parse_config(cfg_text("patch_thickness = 0"))
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(cfg_text("colour = blue"))
    with pytest.raises(ConfigError, match="amplitude"):
        parse_config(cfg_text(**{"sphere_pec_harmonic": "sphere_dielectric_harmonic"}).replace(
            "[case]", "[case]\nformulation = amplitude"))
    with pytest.raises(ConfigError, match="quarter"):
        parse_config(cfg_text(**{"symmetric_half": "symmetric_quarter"}))
    with pytest.raises(ConfigError, match="R_inf"):
        parse_config(cfg_text(**{"R_inf = 3": "R_inf = 0.5"}))
    with pytest.raises(ConfigError):
        parse_config(cfg_text("[probes]\nx = point 1 2 3 E"))        # harmonic needs sweeps
    with pytest.raises(ConfigError):
        load_config("no_such_case")


def test_compare_curves():
    x = np.linspace(0, 1, 11)
    y = np.stack([x, x**2, 0 * x], axis=1)
    m = compare_curves(x, y, x, y)
    assert m["linf"] == 0.0 and m["l2"] == 0.0
    m = compare_curves(x, 1.1 * y, x, y)
    assert m["linf"] == pytest.approx(0.1 / np.sqrt(2))        # normalised by the vector peak |(1, 1, 0)|
    with pytest.raises(ValueError):
        compare_curves(x + 5, y, x, y)


def test_main_exit_codes(tmp_path, capsys):
    t = np.linspace(0, 1, 5)
    write_series_csv(tmp_path / "a.csv", t, t)
    write_series_csv(tmp_path / "b.csv", t, 1.5 * t)
    write_series_csv(tmp_path / "c.csv", t + 10, t)
    assert cli.main(["compare", str(tmp_path / "a.csv"), str(tmp_path / "a.csv"), "--tol", "0"]) == 0
    assert cli.main(["compare", str(tmp_path / "a.csv"), str(tmp_path / "b.csv"), "--tol", "0.1"]) == 1
    assert cli.main(["compare", str(tmp_path / "a.csv"), str(tmp_path / "c.csv")]) == 2
    (tmp_path / "empty.mesh").write_text("")
    assert cli.main(["inspect", str(tmp_path / "empty.mesh")]) == 2
    assert cli.main(["solve", str(tmp_path / "missing.cfg")]) == 2
    assert cli.main(["frobnicate"]) == 2
    capsys.readouterr()


def test_mesh_and_inspect(tmp_path, capsys):
    assert cli.main(["mesh", "cavity_quarter", "-o", str(tmp_path / "q.mesh")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["element_count"] == 36 and summary["valid"]
    cfg = parse_config(cfg_text())
    write_mesh(cli.build_mesh(cfg), tmp_path / "h.mesh")
    assert cli.main(["inspect", str(tmp_path / "h.mesh")]) == 0
    tags = json.loads(capsys.readouterr().out)["tags"]
    assert {"PEC", "ABC"} <= set(tags) and "SYM_PATCH_OUTER:y" in tags


def test_solve_cavity_quarter(tmp_path, capsys):
    assert cli.main(["solve", "cavity_quarter", "-o", str(tmp_path / "r1")]) == 0
    rep = json.loads((tmp_path / "r1" / "report.json").read_text())
    mesh = cli.build_mesh(load_config("cavity_quarter"))
    from maxpatch.harmonic import build_constraints
    assert rep["equation_count"] == build_constraints(mesh, load_config("cavity_quarter").planes(),
                                                      "PEC", homogeneous=True).free_count
    assert rep["residuals"]["linear_relative"] <= 1e-8
    assert sorted(os.path.basename(p) for p in rep["outputs"]) == ["p_x.csv", "p_y.csv", "p_z.csv"]
    assert cli.main(["oracle", "cavity_quarter", "-o", str(tmp_path / "r1")]) == 0
    # a repeat run is bitwise identical
    assert cli.main(["solve", "cavity_quarter", "-o", str(tmp_path / "r2")]) == 0
    for c in "xyz":
        assert (tmp_path / "r1" / f"p_{c}.csv").read_bytes() == (tmp_path / "r2" / f"p_{c}.csv").read_bytes()
    capsys.readouterr()


def test_thread_variable_validated():
    env = dict(os.environ, MAXPATCH_THREADS="zero")
    r = subprocess.run([sys.executable, "-m", "maxpatch", "configs"], env=env, capture_output=True)
    assert r.returncode == 2
    env["MAXPATCH_THREADS"] = "1"
    r = subprocess.run([sys.executable, "-m", "maxpatch", "configs"], env=env, capture_output=True, text=True)
    assert r.returncode == 0 and "cavity_quarter.cfg" in r.stdout
