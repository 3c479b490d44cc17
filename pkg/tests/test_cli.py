import dataclasses
import json
import subprocess
import sys

import pytest

from lapbel import cli
from lapbel.analysis import CSV_HEADER
from lapbel.experiments import REGISTRY, Outcome


def _write(tmp_path, body, name="exp.ini"):
    path = tmp_path / name
    path.write_text(body.replace("OUT", str(tmp_path / "out")))
    return path


SMOOTH = """
[experiment]
name = GreenSmooth
levels = 2-4
output = OUT
[data]
f = z + 0.5
spectral_degree = 1
"""


def test_list_shows_every_experiment(capsys):
    assert cli.main(["list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 1 + 7
    assert {l.split()[0] for l in lines[1:]} == set(REGISTRY)


def test_console_script_is_installed():
    out = subprocess.run([sys.executable, "-m", "lapbel.cli", "list"], capture_output=True,
                         text=True, check=True)
    assert "GreenDirac" in out.stdout


@pytest.mark.parametrize("body", [
    "[experiment]\nname = NoSuchThing\n",
    "[experiment]\nname = GreenSmooth\nlevels = 2-3\n",
    "[experiment]\nname = GreenSmooth\nlevels = 4, 3, 5\n",
    "[experiment]\nname = GreenSmooth\n[solver]\nspeed = fast\n",
    "[experiment]\nname = GreenSmooth\n[reference]\noffset = 1\n",
    "[experiment\nname = GreenSmooth\n",
    "[surface]\nname = sphere\n",
], ids=["unknown", "two-levels", "unsorted", "unknown-key", "offset", "syntax", "no-experiment"])
def test_bad_configs_exit_with_1(tmp_path, body, capsys):
    assert cli.main(["run", str(_write(tmp_path, body))]) == 1
    assert "configuration error" in capsys.readouterr().err


def test_missing_config_file_exits_with_1(tmp_path):
    assert cli.main(["run", str(tmp_path / "nope.ini")]) == 1


def test_mesh_info(capsys, tmp_path):
    assert cli.main(["mesh", "info", "--surface", "sphere", "--level", "3",
                     "--off", str(tmp_path / "m.off")]) == 0
    out = dict(line.split(None, 1) for line in capsys.readouterr().out.strip().splitlines())
    assert out["vertices"] == "642" and out["triangles"] == "1280"
    assert out["euler_characteristic"] == "2"
    assert (tmp_path / "m.off").read_text().startswith("OFF\n642 1280 1920\n")
    assert cli.main(["mesh", "info", "--surface", "torus", "--level", "0", "--R", "3",
                     "--r", "1"]) == 0
    assert "torus(R=3" in capsys.readouterr().out
    assert cli.main(["mesh", "info", "--surface", "torus", "--level", "0", "--R", "1",
                     "--r", "2"]) == 1
    assert cli.main(["mesh", "info", "--level", "9"]) == 2


def test_run_writes_artifacts(tmp_path, capsys):
    assert cli.main(["run", str(_write(tmp_path, SMOOTH))]) == 0
    assert capsys.readouterr().out.startswith("PASS GreenSmooth")
    out = tmp_path / "out"
    csv_lines = (out / "GreenSmooth.csv").read_text().splitlines()
    assert csv_lines[0] == ",".join(CSV_HEADER)
    assert len(csv_lines) == 4
    assert (out / "GreenSmooth.svg").read_text().startswith("<svg")
    summary = json.loads((out / "GreenSmooth.json").read_text())
    assert summary["pass"] is True and summary["levels"] == [2, 3, 4]
    assert summary["measured_min_eoc"] == min(summary["eoc"]) >= summary["threshold"]


def test_rerun_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, SMOOTH)
    cli.main(["run", str(cfg)])
    first = {p.name: p.read_bytes() for p in (tmp_path / "out").iterdir()}
    cli.main(["run", str(cfg)])
    second = {p.name: p.read_bytes() for p in (tmp_path / "out").iterdir()}
    assert first == second


def test_solver_failure_exits_with_2(tmp_path, capsys):
    body = """
[experiment]
name = ControlActive
levels = 2-4
output = OUT
[pdas]
max_iterations = 1
"""
    assert cli.main(["run", str(_write(tmp_path, body))]) == 2
    assert "PdasNoConvergence" in capsys.readouterr().err


def test_missed_threshold_exits_with_3(tmp_path, monkeypatch):
    exp = REGISTRY["GreenSmooth"]

    def strict(cfg):
        o = exp.runner(cfg)
        return Outcome(o.records, o.orders, 10.0, o.norm, o.extra, o.guides, o.series)

    monkeypatch.setitem(REGISTRY, "GreenSmooth", dataclasses.replace(exp, runner=strict))
    assert cli.main(["run", str(_write(tmp_path, SMOOTH))]) == 3
    assert json.loads((tmp_path / "out" / "GreenSmooth.json").read_text())["pass"] is False
