import json
import math

import numpy as np
import pytest
import yaml

from bnls.diagnostics import DiagnosticsRecord
from bnls.evolution import StepControl
from bnls.harness.cli import main
from bnls.harness.config import (
    OUTPUT_ROOT_ENV,
    ConfigError,
    InitialKind,
    config_from_dict,
    config_to_dict,
    dump_config,
    load_config,
    load_configs,
)
from bnls.harness.io import SchemaError, dumps_json, read_records, write_records
from bnls.harness.pipeline import run_config, verdict_row, write_run

SMALL = {
    "params": {"d": 3, "sigma": 1.0, "mu": 0.5},
    "grid": {"rmax": 30.0, "n": 192},
    "initial": {"kind": "gaussian", "amplitude": 0.8, "width": 1.0, "chirp": 0.1},
    "cutoff": {"R": 3.0},
    "horizon": 0.05,
    "record_every": 0.01,
    "name": "small",
}


def test_config_defaults_written_out():
    config = config_from_dict({"params": {"d": 3, "sigma": 2.0}})
    data = config_to_dict(config)
    assert data["grid"] == {"rmax": 40.0, "n": 1024}
    assert data["control"]["error_tol"] == StepControl().error_tol
    assert data["initial"]["kind"] == "gaussian"
    assert config_from_dict(yaml.safe_load(dump_config(config))) == config


@pytest.mark.parametrize(
    "patch, path",
    [
        ({"params": {"d": 3}}, "params.sigma"),
        ({"params": {"d": 3, "sigma": "two"}}, "params.sigma"),
        ({"params": {"d": 3.5, "sigma": 1.0}}, "params.d"),
        ({"params": {"d": 3, "sigma": 1.0}, "grid": {"points": 10}}, "grid.points"),
        ({"params": {"d": 3, "sigma": 1.0}, "cutoff": {"kind": "box"}}, "cutoff.kind"),
        ({"params": {"d": 3, "sigma": 1.0}, "horizon": -1}, "horizon"),
        ({"params": {"d": 3, "sigma": 1.0}, "initial": {"kind": "from_file"}}, "initial.path"),
        ({"params": {"d": 3, "sigma": 1.0}, "control": {"error_tol": True}}, "control.error_tol"),
        ({}, "params"),
    ],
)
def test_config_errors_name_the_field(patch, path):
    with pytest.raises(ConfigError) as info:
        config_from_dict(patch)
    assert str(info.value).startswith(path)


def test_load_configs_reports_run_index(tmp_path):
    path = tmp_path / "sweep.yaml"
    path.write_text(yaml.safe_dump({"runs": [SMALL, {"params": {"d": 3}}]}))
    with pytest.raises(ConfigError, match=r"^runs\[1\]\.params\.sigma"):
        load_configs(path)
    path.write_text(yaml.safe_dump([SMALL, SMALL]))
    assert len(load_configs(path)) == 2


def test_output_root_env(monkeypatch):
    config = config_from_dict(SMALL)
    monkeypatch.setenv(OUTPUT_ROOT_ENV, "/tmp/elsewhere")
    assert str(config.output_root()) == "/tmp/elsewhere"


def _records():
    return [
        DiagnosticsRecord(0.0, 1.0, -0.1, 2.0, 3.0, 0.1, 4.0, math.nan, 0.0),
        DiagnosticsRecord(0.1, 1.0 + 1e-15, 1 / 3, 2.5, 3.5, -0.2, 4.5, 0.0, 1e-3),
    ]


def test_records_round_trip_exact(tmp_path):
    path = write_records(tmp_path / "r.csv", _records())
    back = read_records(path)
    for a, b in zip(_records(), back):
        np.testing.assert_array_equal(np.array(a.as_row()), np.array(b.as_row()))
    empty = read_records(write_records(tmp_path / "e.csv", []))
    assert empty == []


@pytest.mark.parametrize(
    "header, row, message",
    [
        ("t,mass,energy,grad_l2,lap_l2,m_r,v_r,n_r,dt,extra", None, "unexpected column 'extra'"),
        ("t,mass,energy,grad_l2,lap_l2,m_r,v_r,n_r", None, "missing column 'dt'"),
        ("t,mass,energy,grad_l2,lap_l2,m_r,v_r,n_r,dt", "0,1,2", "truncated"),
        ("t,mass,energy,grad_l2,lap_l2,m_r,v_r,dt,n_r", None, "out of order"),
    ],
)
def test_schema_errors(tmp_path, header, row, message):
    path = tmp_path / "bad.csv"
    path.write_text(header + "\n" + (row + "\n" if row else ""))
    with pytest.raises(SchemaError, match=message):
        read_records(path)


def test_json_is_deterministic_and_standard():
    data = {"b": [1.0, math.inf], "a": {"z": math.nan, "y": 0.1}}
    text = dumps_json(data)
    assert text == dumps_json(dict(reversed(list(data.items()))))
    parsed = json.loads(text)
    assert parsed["b"][1] == "inf" and parsed["a"]["z"] == "nan"
    assert text.index('"a"') < text.index('"b"')


def test_pipeline_run_and_atomic_write(tmp_path):
    config = config_from_dict(SMALL)
    summary = run_config(config)
    assert summary.error is None
    assert summary.criterion["error"].startswith("no criterion")
    assert summary.evolution["outcome"] == "bounded_on_horizon"
    assert summary.tunables["step_control"]["drift_tol"] == 1e-9
    directory = write_run(summary, tmp_path / "runs" / "small")
    assert sorted(p.name for p in directory.iterdir()) == ["records.csv", "summary.json", "timing.json"]
    assert len(read_records(directory / "records.csv")) == len(summary.records)
    again = write_run(run_config(config), tmp_path / "runs" / "small")
    assert (again / "summary.json").read_text() == (directory / "summary.json").read_text()
    assert not [p for p in (tmp_path / "runs").iterdir() if p.name.startswith(".")]


def test_pipeline_isolates_failures(tmp_path):
    config = config_from_dict(dict(SMALL, initial={"kind": "from_file", "path": str(tmp_path / "missing.csv")}))
    summary = run_config(config)
    assert summary.error and "missing.csv" in summary.error
    row = verdict_row(0, summary)
    assert row["outcome"] == "error"


def test_from_file_initial_data(tmp_path):
    r = np.linspace(0, 30, 3001)
    path = tmp_path / "profile.csv"
    np.savetxt(path, np.column_stack((r, np.exp(-(r**2)), 0 * r)), delimiter=",", header="r,real,imag", comments="")
    config = config_from_dict(dict(SMALL, initial={"kind": "from_file", "path": str(path)}))
    assert config.initial.kind is InitialKind.FROM_FILE
    summary = run_config(config)
    assert summary.error is None
    assert summary.records[0].mass == pytest.approx((math.pi / 2) ** 1.5, rel=1e-6)


def test_cli_groundstate(tmp_path, capsys):
    assert main(["groundstate", "--d", "3", "--sigma", "2", "--rmax", "40", "--n", "384", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "Q_d3_sigma2.csv").exists()
    assert main(["groundstate", "--d", "6", "--sigma", "2", "--rmax", "100", "--n", "1024", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "W_d6.json").exists()
    assert "W(0)" in capsys.readouterr().out


def test_cli_evolve_and_config_error(tmp_path, capsys):
    good = tmp_path / "run.yaml"
    good.write_text(yaml.safe_dump(SMALL))
    assert main(["evolve", str(good), "--out", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "small" / "summary.json").exists()
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"params": {"d": 3, "sigma": -1.0}}))
    assert main(["evolve", str(bad)]) == 2
    assert "params.sigma" in capsys.readouterr().err


def test_cli_sweep_table(tmp_path, monkeypatch):
    path = tmp_path / "sweep.yaml"
    path.write_text(yaml.safe_dump({"runs": [SMALL, dict(SMALL, name="second", params={"d": 3, "sigma": 1.0, "mu": -0.5})]}))
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "env"))
    assert main(["sweep", str(path), "--workers", "1"]) == 0
    table = (tmp_path / "env" / "verdicts.csv").read_text().splitlines()
    assert table[0] == "config_id,theorem,branch,satisfied,outcome,T_estimate,beta_measured,alpha"
    assert len(table) == 3
    assert (tmp_path / "env" / "001-second" / "records.csv").exists()


@pytest.mark.slow
def test_lambda_sweep_verdicts(tmp_path):
    from pathlib import Path

    from bnls.experiments import sweep, verdict_table

    configs = load_configs(Path(__file__).parent.parent / "configs" / "lambda_sweep.yaml")
    rows = verdict_table(sweep(configs, workers=1))
    assert [r["outcome"] for r in rows] == ["bounded_on_horizon", "bounded_on_horizon", "blowup_detected"]
    assert [r["branch"] for r in rows] == ["ii_threshold", "ii_boundary", "ii_negative_energy"]
    assert rows[2]["beta_measured"] is not None and rows[2]["alpha"] == pytest.approx(0.5)
