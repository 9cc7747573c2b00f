import csv
import json
import logging

import pytest

from wavewell import config as cfgmod
from wavewell.cli import main, write_csv
from wavewell.errors import InputError

SMALL = """
[grid]
n = 60

[integrator]
t_end = 2.0

[search]
budget = 4
descent_starts = 2
curve_points = 8
curve_budget = 4
"""


@pytest.fixture(autouse=True)
def _quiet_logs():
    yield
    logging.getLogger().handlers.clear()


def write_cfg(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def only_dir(base):
    (d,) = [p for p in base.iterdir() if p.is_dir()]
    return d


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# wavewell 0.1.0 ")
    return list(csv.DictReader(lines[1:]))


def test_check_defaults(tmp_path):
    assert main(["check", "--out", str(tmp_path), "--quiet"]) == 0
    d = only_dir(tmp_path)
    res = json.loads((d / "check.json").read_text())
    assert res["condition"]["worst_slack_1"] == 0.0
    assert res["condition"]["passed_1"]
    cfg = json.loads((d / "config.json").read_text())
    assert cfg["condition"]["alpha"] == 4.0 and cfg["grid"]["n"] == 200


def test_unknown_key_exit_one(tmp_path, capsys):
    p = write_cfg(tmp_path, "[integrator]\ntimestep = 0.1\n")
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "timestep" in err and "[integrator]" in err
    assert not (tmp_path / "o").exists()


def test_bad_values_exit_one(tmp_path):
    p = write_cfg(tmp_path, "[condition]\nalpha = 1.5\n")
    assert main(["check", "--config", str(p), "--out", str(tmp_path), "--quiet"]) == 1
    assert main(["check", "--out", str(tmp_path), "--jobs", "0", "--quiet"]) == 1


def test_json_config_equivalent():
    a = cfgmod.resolve({"grid": {"n": 60}})
    assert a["grid"]["n"] == 60 and a["grid"]["L"] == cfgmod.DEFAULTS["grid"]["L"]
    with pytest.raises(InputError, match="section"):
        cfgmod.resolve({"gird": {}})


def test_simulate_linear_control(tmp_path):
    # at n = 200 the default dt gives a drift of about 1.7e-6
    p = write_cfg(tmp_path, "[grid]\nn = 400\n[nonlinearity]\nfamily = 'zero'\n[integrator]\nt_end = 10.0\n")
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path), "--quiet"]) == 0
    d = only_dir(tmp_path)
    verdict = json.loads((d / "verdict.json").read_text())
    assert verdict["status"] == "global" and verdict["max_drift"] < 1e-6
    rows = read_csv(d / "diagnostics.csv")
    assert list(rows[0]) == ["t", "E", "M", "M_prime", "I", "J", "grad_norm_sq", "tag"]
    assert float(rows[-1]["t"]) >= 10.0


def test_classify_rerun_is_byte_identical(tmp_path):
    p = write_cfg(tmp_path, SMALL + "[initial]\nu0_kind = 'random'\nu0_amplitude = 0.3\n")
    bodies = []
    for k in range(2):
        base = tmp_path / f"o{k}"
        assert main(["classify", "--config", str(p), "--out", str(base), "--seed", "9", "--quiet"]) == 0
        d = only_dir(base)
        bodies.append((d / "diagnostics.csv").read_text().split("\n", 1)[1])
        rec = json.loads((d / "record.json").read_text())
        assert rec["seeds"]["seed"] == 9
        assert rec["outcome"] == "confirmed"
    assert bodies[0] == bodies[1]


def test_csv_float_round_trip(tmp_path):
    vals = [0.1, 1 / 3, 2.0**-40, 123456789.123]
    write_csv(tmp_path / "x.csv", "test", ["v"], [{"v": v} for v in vals])
    rows = read_csv(tmp_path / "x.csv")
    assert [float(r["v"]) for r in rows] == vals


def test_fiber_and_eig(tmp_path):
    p = write_cfg(tmp_path, SMALL + "[output]\nrefinements = [30, 60]\n")
    assert main(["fiber", "--config", str(p), "--out", str(tmp_path / "f"), "--quiet"]) == 0
    fib = json.loads((only_dir(tmp_path / "f") / "fiber.json").read_text())
    assert fib["consistent"]
    assert main(["eig", "--config", str(p), "--out", str(tmp_path / "e"), "--quiet"]) == 0
    rows = read_csv(only_dir(tmp_path / "e") / "eig.csv")
    assert [int(r["n"]) for r in rows] == [30, 60]


def test_depth_command(tmp_path):
    p = write_cfg(tmp_path, SMALL.replace("[search]\n", "[search]\ndeltas = [0.5, 1.0, 1.5, 2.0]\n"))
    assert main(["depth", "--config", str(p), "--out", str(tmp_path), "--quiet"]) == 0
    d = only_dir(tmp_path)
    rows = read_csv(d / "depth.csv")
    assert [float(r["delta"]) for r in rows] == [0.5, 1.0, 1.5, 2.0]
    seed = json.loads((d / "depth_seed.json").read_text())
    assert seed["budget"] == 4


SWEEP = "[sweep]\nparameter = 'initial.u0_amplitude'\nvalues = [0.2, 8.0]\n"


def test_sweep(tmp_path):
    sweep = SWEEP
    p = write_cfg(tmp_path, SMALL + sweep)
    assert main(["sweep", "--config", str(p), "--out", str(tmp_path / "s"), "--quiet"]) == 0
    d = only_dir(tmp_path / "s")
    rows = read_csv(d / "summary.csv")
    assert [r["regime"] for r in rows] == ["global", "negative-energy-blowup"]
    assert len(list((d / "runs").iterdir())) == 2
    assert all(r["outcome"] == "confirmed" for r in rows)


def test_sweep_rejects_bad_parameter(tmp_path):
    p = write_cfg(tmp_path, SMALL + "[sweep]\nparameter = 'initial.speed'\nvalues = [1.0]\n")
    assert main(["sweep", "--config", str(p), "--out", str(tmp_path), "--quiet"]) == 1


def test_sweep_reports_late_blowup_as_violation(tmp_path):
    # with u1 = u0 the detected blow-up time overshoots the closed-form bound of 1/6
    p = write_cfg(tmp_path, SMALL + SWEEP + "[initial]\nu1_kind = 'u0'\n")
    assert main(["sweep", "--config", str(p), "--out", str(tmp_path), "--quiet"]) == 2
    rows = read_csv(only_dir(tmp_path) / "summary.csv")
    assert [r["outcome"] for r in rows] == ["confirmed", "violation"]
    assert float(rows[1]["t_detect"]) > float(rows[1]["bound_T"]) == pytest.approx(1 / 6)
