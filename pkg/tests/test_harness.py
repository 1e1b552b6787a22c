import json
import re

import pytest

from riccati_mor.cli import main as cli_main
from riccati_mor.errors import ConfigError
from riccati_mor.harness import (
    CSV_HEADER,
    ExperimentConfig,
    parse_config,
    run_experiment,
    scaling_sweep,
)
from riccati_mor.problems import PdeConfig, Rect

SMALL_INI = """
[problem]
epsilon = 1.0
gamma = {gamma}
domain = 0.0 1.0 0.0 1.0
omega_b = {omega_b}
omega_c = {omega_c}
dx = 0.2

[snapshots]
horizon = 1.0
steps = 60

[run]
methods = {methods}
tol = 1e-8
r_max = 30
sweep = 1:31:1
out = {out}
seed = 0
"""


def write_config(tmp_path, name="exp.ini", methods="pod, bt, gark, pgark",
                 gamma=0.0, omega_b="0.2 0.8 0.2 0.8", omega_c="0.1 0.9 0.1 0.9",
                 out=None):
    out = out or str(tmp_path / "results")
    path = tmp_path / name
    path.write_text(
        SMALL_INI.format(methods=methods, gamma=gamma, omega_b=omega_b,
                         omega_c=omega_c, out=out)
    )
    return path


def small_problem():
    return PdeConfig(
        epsilon=1.0, gamma=0.0,
        domain=Rect(0, 1, 0, 1),
        omega_b=Rect(0.2, 0.8, 0.2, 0.8),
        omega_c=Rect(0.1, 0.9, 0.1, 0.9),
        dx=0.2,
    )


def test_parse_config_and_overrides(tmp_path):
    path = write_config(tmp_path)
    cfg = parse_config(path)
    assert cfg.methods == ("pod", "bt", "gark", "pgark")
    assert cfg.problem.dx == 0.2
    assert cfg.sweep[:3] == (1, 2, 3)
    cfg2 = parse_config(path, methods=["gark"], tol=1e-6, out_dir="elsewhere", seed=7)
    assert cfg2.methods == ("gark",)
    assert cfg2.tol == 1e-6
    assert cfg2.out_dir == "elsewhere"
    assert cfg2.seed == 7


def test_config_validation_errors(tmp_path):
    with pytest.raises(ConfigError, match="nonempty"):
        ExperimentConfig(problem=small_problem(), methods=()).validate()
    with pytest.raises(ConfigError, match="unknown methods"):
        ExperimentConfig(problem=small_problem(), methods=("magic",)).validate()
    with pytest.raises(ConfigError, match="tol"):
        ExperimentConfig(problem=small_problem(), tol=0.0).validate()
    with pytest.raises(ConfigError, match="strictly increasing"):
        ExperimentConfig(problem=small_problem(), sweep=(4, 2)).validate()
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "missing.ini")
    bad = tmp_path / "bad.ini"
    bad.write_text("[problem]\nepsilon = 1.0\n")
    with pytest.raises(ConfigError, match="invalid config"):
        parse_config(bad)


def test_run_experiment_end_to_end(tmp_path):
    cfg = parse_config(write_config(tmp_path))
    outcome = run_experiment(cfg)
    assert outcome.exit_code == 0
    assert set(outcome.outcomes) == {"pod", "bt", "gark", "pgark"}
    for method, m_out in outcome.outcomes.items():
        assert m_out.converged, method
        csv = (outcome.out_dir / "{}.csv".format(method)).read_text().splitlines()
        assert csv[0] == CSV_HEADER
        orders = [int(line.split(",")[0]) for line in csv[1:]]
        assert all(b > a for a, b in zip(orders, orders[1:]))
        # scientific notation with >= 9 significant digits, '.' decimal
        for line in csv[1:]:
            for cell in line.split(",")[1:4]:
                if cell:
                    assert re.fullmatch(r"-?\d\.\d{9,}e[+-]\d+", cell), cell
        final = m_out.history.final
        assert final.residual <= cfg.tol
        assert final.gain_error is not None and final.gain_error <= 1e-6
    manifest = json.loads((outcome.out_dir / "manifest.json").read_text())
    assert manifest["system"] == {"n": 36, "m": 1, "p": 1}
    assert manifest["reference"]["computed"] is True
    assert manifest["exit_code"] == 0
    assert manifest["versions"]["kernel_backend"] in ("compiled", "python")


def test_rerun_byte_reproduces_csvs(tmp_path):
    path = write_config(tmp_path)
    cfg_a = parse_config(path, out_dir=str(tmp_path / "a"))
    cfg_b = parse_config(path, out_dir=str(tmp_path / "b"))
    out_a = run_experiment(cfg_a)
    out_b = run_experiment(cfg_b)
    for method in cfg_a.methods:
        bytes_a = (out_a.out_dir / "{}.csv".format(method)).read_bytes()
        bytes_b = (out_b.out_dir / "{}.csv".format(method)).read_bytes()
        assert bytes_a == bytes_b, method


def test_csv_timings_flag_populates_elapsed(tmp_path):
    path = write_config(tmp_path)
    text = path.read_text().replace("seed = 0", "seed = 0\ncsv_timings = true")
    path.write_text(text)
    cfg = parse_config(path, methods=["gark"])
    outcome = run_experiment(cfg)
    lines = (outcome.out_dir / "gark.csv").read_text().splitlines()
    assert all(line.split(",")[4] != "" for line in lines[1:])


def test_breakdown_recorded_with_partial_outputs(tmp_path):
    # single-node actuator and sensor in disjoint corners: C B = 0
    path = write_config(
        tmp_path, methods="pgark",
        omega_b="0.2 0.2 0.2 0.2", omega_c="0.8 0.8 0.8 0.8",
    )
    cfg = parse_config(path)
    outcome = run_experiment(cfg)
    assert outcome.exit_code == 3
    assert outcome.outcomes["pgark"].status == "failed"
    assert any("breakdown" in e for e in outcome.outcomes["pgark"].events)
    assert (outcome.out_dir / "pgark.csv").exists()
    manifest = json.loads((outcome.out_dir / "manifest.json").read_text())
    assert manifest["exit_code"] == 3


def test_scaling_sweep_writes_rows(tmp_path):
    cfg = ExperimentConfig(
        problem=small_problem(), methods=("gark",), out_dir=str(tmp_path / "sweep"),
        sweep=(2, 3, 4), r_max=30,
    )
    path, rows = scaling_sweep(cfg, [0.5, 0.25])
    assert path.exists()
    ns = [row[2] for row in rows]
    assert ns == [9, 25]
    assert all(row[-1] == "converged" for row in rows)
    text = path.read_text().splitlines()
    assert text[0] == "method,dx,n,r,iterations,R_P,elapsed_s,status"


def test_cli_run_and_exit_codes(tmp_path, capsys):
    path = write_config(tmp_path, methods="gark", out=str(tmp_path / "cli_out"))
    code = cli_main(["run", str(path)])
    assert code == 0
    assert "gark" in capsys.readouterr().out
    # config error path
    missing = cli_main(["run", str(tmp_path / "nope.ini")])
    assert missing == 2
    # empty method list is a config error
    empty = cli_main(["run", str(path), "--methods", " "])
    assert empty == 2


def test_cli_sweep(tmp_path, capsys):
    path = write_config(tmp_path, methods="gark", out=str(tmp_path / "cli_sweep"))
    code = cli_main(["sweep", str(path), "--dx", "0.5,0.25"])
    assert code == 0
    out = capsys.readouterr().out
    assert "scaling.csv" in out
