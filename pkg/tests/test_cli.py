import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from gaugephase.cli import main
from gaugephase.results import ResultTable


def run(tmp_path, command, cfg=None, *extra):
    args = [command, "--out", str(tmp_path)]
    if cfg is not None:
        tmp_path.mkdir(parents=True, exist_ok=True)
        p = tmp_path / "in.yaml"
        p.write_text(yaml.safe_dump(cfg))
        args += ["--config", str(p)]
    return main(args + list(extra))


def load(path):
    return ResultTable.read_csv(path)


def test_master_preset(tmp_path):
    assert run(tmp_path, "master", None, "--preset", "paper-dephasing") == 0
    t = load(tmp_path / "master.csv")
    assert t.column("abs_deviation").max() <= 1e-8
    assert len(t) == 2001
    assert {"t", "re_rho_01", "im_rho_01", "exact_re_rho_01"} <= set(t.columns)
    assert any("radians" in c for c in t.comments)
    echo = yaml.safe_load((tmp_path / "config.yaml").read_text())
    assert echo["output"]["directory"] == str(tmp_path) and echo["sde"]["dt"] == 1e-3


def test_master_unitary_and_zero_horizon(tmp_path):
    run(tmp_path, "master", {"model": {"lambda": 0.0}, "sde": {"dt": 0.01}})
    r = load(tmp_path / "master.csv").column("abs_rho_01")
    assert np.ptp(r) <= 1e-9
    run(tmp_path, "master", {"sde": {"t_final": 0.0}})
    t = load(tmp_path / "master.csv")
    assert len(t) == 1
    assert t.column("re_rho_00")[0] == pytest.approx(np.cos(np.pi / 6) ** 2, abs=1e-15)


def test_json_mirror(tmp_path):
    run(tmp_path, "master", {"sde": {"dt": 0.1, "t_final": 1.0}, "output": {"formats": ["csv", "json"]}})
    a, b = load(tmp_path / "master.csv"), ResultTable.read_json(tmp_path / "master.json")
    assert a.columns == b.columns and a.rows == b.rows


SMALL = {"sde": {"dt": 0.01, "t_final": 2.0, "record_stride": 20}, "ensemble": {"n_traj": 3000}}


def test_trajectories(tmp_path):
    cfg = SMALL | {"model": {"lambda": 1.0}, "gauges": [0.0, 1.5707963267948966],
                   "trajectories": {"dump": 2, "dump_stride": 50}}
    assert run(tmp_path, "trajectories", cfg) == 0
    quad = load(tmp_path / "trajectories_phi=1.570796.csv")
    sz2 = quad.column("mean_sz2")
    assert np.all(np.abs(sz2 - sz2[0]) <= 3 * quad.column("stderr_sz2") + 1e-9)
    zero = load(tmp_path / "trajectories_phi=0.000000.csv")
    sz2 = zero.column("mean_sz2")
    assert np.all(np.diff(sz2) > 0) and sz2[-1] > 0.8
    for t in (quad, zero):
        assert np.all(np.abs(t.column("mean_sz") - 0.5) <= 3 * t.column("stderr_sz") + 1e-9)
    dump = load(tmp_path / "paths_phi=0.000000.csv")
    assert set(dump.column("trajectory")) == {0, 1}
    xyz = np.column_stack([dump.column(c) for c in ("bloch_x", "bloch_y", "bloch_z")])
    np.testing.assert_allclose(np.linalg.norm(xyz, axis=1), 1, atol=1e-8)


def test_phase_scan(tmp_path):
    cfg = SMALL | {"gauges": [0.0, 0.7853981633974483, 1.5707963267948966]}
    assert run(tmp_path, "phase-scan", cfg) == 0
    t = load(tmp_path / "phase_scan.csv")
    assert len(t) == 3
    tot, se = t.column("total_phase"), t.column("stderr_total_phase")
    assert np.all(np.abs(tot - tot[-1]) <= 3 * np.hypot(se, se[-1]) + 1e-9)
    row0 = dict(zip(t.columns, t.rows[0]))
    expected = row0["total_phase"] - 2.0 * np.cos(np.pi / 3)
    assert abs(row0["geo_phase_average"] - expected) <= 3 * row0["stderr_geo_phase_average"] + 1e-9
    assert run(tmp_path, "phase-scan", SMALL | {"gauges": [0.0]}) == 2


def test_interference_pi_pulse(tmp_path):
    cfg = {"ensemble": {"n_traj": 500}, "gauges": [0.0, 0.5], "interference": {"chi_points": 37}}
    assert run(tmp_path, "interference", cfg, "--preset", "paper-pi-pulse") == 0
    fits = load(tmp_path / "interference_fit.csv")
    for row in fits.rows:
        r = dict(zip(fits.columns, row))
        assert abs(np.angle(np.exp(1j * (r["fitted_total_phase"] - np.pi)))) <= 1e-9
        assert r["fitted_visibility"] == pytest.approx(1, abs=1e-9)
        assert r["fit_consistent"] is True
    assert len(load(tmp_path / "interference.csv")) == 2 * 37


def test_interference_flat_curve(tmp_path):
    cfg = {"model": {"lambda": 0.0, "theta": 1.5707963267948966}, "gauges": [0.0],
           "sde": {"t_final": 1.5707963267948966}, "ensemble": {"n_traj": 4}}
    run(tmp_path, "interference", cfg)
    np.testing.assert_allclose(load(tmp_path / "interference.csv").column("intensity"), 0.5, atol=1e-9)


def test_interference_lambda_scan(tmp_path):
    cfg = SMALL | {"gauges": [0.0], "interference": {"chi_points": 13, "lambdas": [0.25, 1.0]}}
    run(tmp_path, "interference", cfg)
    fits = load(tmp_path / "interference_fit.csv")
    nu, gamma = fits.column("fitted_visibility"), fits.column("fitted_total_phase")
    se_nu, se_g = fits.column("stderr_visibility"), fits.column("stderr_total_phase")
    assert abs(nu[0] - nu[1]) <= 3 * np.hypot(*se_nu)
    assert abs(gamma[0] - gamma[1]) <= 3 * np.hypot(*se_g)
    assert all(fits.column("fit_consistent"))


def test_verify_underpowered_is_inconclusive(tmp_path, capsys):
    code = run(tmp_path, "verify", {"ensemble": {"n_traj": 10}, "verify": {"n_paths": 4}})
    assert code != 0
    report = json.loads((tmp_path / "verify.json").read_text())
    status = {c["number"]: c["status"] for c in report["criteria"]}
    assert len(status) == 11
    assert {status[n] for n in (2, 4, 5, 6, 7, 8, 9)} == {"inconclusive"}
    assert status[1] == status[10] == status[11] == "pass"
    assert "INCONCLUSIVE" in capsys.readouterr().out


def test_verify_unitary_subset(tmp_path):
    cfg = {"model": {"lambda": 0.0}, "ensemble": {"n_traj": 1000}}
    assert run(tmp_path, "verify", cfg) == 0
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report["passed"] and [c["number"] for c in report["criteria"]] == [1, 2, 6, 10, 11]


def test_config_errors(tmp_path, capsys):
    assert run(tmp_path, "master", {"model": {"lamda": 1}}) == 2
    assert "model.lamda" in capsys.readouterr().err
    assert main(["master", "--out", str(tmp_path), "--seed", "-1"]) == 2


def test_seed_and_threads_flags(tmp_path):
    cfg = {"sde": {"dt": 0.05, "t_final": 1.0}, "ensemble": {"n_traj": 200}, "gauges": [0.3]}
    run(tmp_path / "a", "trajectories", cfg, "--seed", "7", "--threads", "1")
    run(tmp_path / "b", "trajectories", cfg, "--seed", "7", "--threads", "3")
    run(tmp_path / "c", "trajectories", cfg, "--seed", "8")
    name = "trajectories_phi=0.300000.csv"
    a, b, c = (load(tmp_path / d / name) for d in "abc")
    assert a.rows == b.rows and a.rows != c.rows
    assert yaml.safe_load((tmp_path / "a" / "config.yaml").read_text())["ensemble"]["master_seed"] == 7


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "gaugephase.cli", "master", "--out", str(tmp_path),
                          "--config", "/nonexistent.yaml"], capture_output=True, text=True)
    assert out.returncode == 2
