"""Command line driver: artifacts, exit codes, determinism, sweep output."""

import dataclasses
import json
import os

import numpy as np
import pytest

import pfsmc.cli as cli
from pfsmc.dynamics import Trajectory

BASE = """
[mesh]
lengths = [1.0]
counts = [33]

[problem]
variant = "B"
rho = 6.0
pilot_rho = 1.0

[data]
theta0 = "cos(pi*x)"
phi0 = "0.5*cos(pi*x)"

[time]
T = 0.3
dt = 1e-3
sample_every = 10
snapshot_every = 50

[output]
name = "t"
"""


def write_cfg(tmp_path, text=BASE, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def only_run_dir(root):
    entries = sorted(os.listdir(root))
    assert len(entries) == 1, entries
    return os.path.join(root, entries[0])


@pytest.fixture
def out(tmp_path, monkeypatch):
    root = tmp_path / "out"
    monkeypatch.setenv("PFSMC_OUT", str(root))
    return str(root)


def test_verify_pipeline_artifacts_and_pass(tmp_path, out, capsys):
    cfg = write_cfg(tmp_path)
    rc = cli.main(["verify", cfg])
    assert rc == 0
    run_dir = only_run_dir(out)
    base = os.path.basename(run_dir)
    assert base.startswith("t-") and len(base.split("-")[-1]) == 8

    for fname in ("config.resolved.toml", "pilot.csv", "trajectory.csv",
                  "bounds.json", "verdict.json"):
        assert os.path.exists(os.path.join(run_dir, fname)), fname
    snaps = os.path.join(run_dir, "snapshots")
    assert os.path.exists(os.path.join(snaps, "index.csv"))
    assert os.path.exists(os.path.join(snaps, "theta_000000.pff"))
    assert os.path.exists(os.path.join(snaps, "phi_000000.pff"))

    with open(os.path.join(run_dir, "bounds.json")) as fh:
        bounds = json.load(fh)
    assert bounds["schema_version"] == 1
    assert bounds["run_id"] == base
    assert bounds["variant"] == "B"
    assert bounds["formula_id"] == "reach-phase-nonlocal"
    assert bounds["c_str"] == 10.0
    assert bounds["constants"]["C_B"]["provenance"] == "empirical"
    assert bounds["applicable"] is True
    assert 0.0 < bounds["rho_star"] < 6.0

    with open(os.path.join(run_dir, "verdict.json")) as fh:
        verdict = json.load(fh)
    assert verdict["passed"] is True
    assert verdict["label"] == "exact"
    assert verdict["run_id"] == base
    assert verdict["formula_id"] == "reach-phase-nonlocal"
    assert verdict["t_star_emp"] <= verdict["t_star_pred"]

    stdout = capsys.readouterr().out
    assert "verdict: PASS (exact)" in stdout
    assert "run dir:" in stdout


def test_verify_rerun_is_byte_identical(tmp_path, out):
    cfg = write_cfg(tmp_path)
    assert cli.main(["verify", cfg]) == 0
    run_dir = only_run_dir(out)
    files = ("trajectory.csv", "pilot.csv", "bounds.json",
             "verdict.json", "config.resolved.toml")
    first = {f: open(os.path.join(run_dir, f), "rb").read() for f in files}

    assert cli.main(["verify", cfg]) == 0
    assert only_run_dir(out) == run_dir  # same hash, same directory
    for f in files:
        assert open(os.path.join(run_dir, f), "rb").read() == first[f], f


def test_simulate_artifacts_and_roundtrip(tmp_path, out, capsys):
    cfg = write_cfg(tmp_path)
    assert cli.main(["simulate", cfg]) == 0
    run_dir = only_run_dir(out)
    traj = Trajectory.from_csv(os.path.join(run_dir, "trajectory.csv"))
    assert traj.times[0] == 0.0
    assert traj.times[-1] == pytest.approx(0.3)
    assert np.all(np.isfinite(traj.psi))
    assert "final distance:" in capsys.readouterr().out
    # snapshots on by default
    assert os.path.isdir(os.path.join(run_dir, "snapshots"))


def test_simulate_snapshots_off(tmp_path, out):
    cfg = write_cfg(tmp_path, BASE + "snapshots = false\n")
    assert cli.main(["simulate", cfg]) == 0
    run_dir = only_run_dir(out)
    assert not os.path.exists(os.path.join(run_dir, "snapshots"))


def test_bounds_command(tmp_path, out, capsys):
    cfg = write_cfg(tmp_path)
    assert cli.main(["bounds", cfg]) == 0
    run_dir = only_run_dir(out)
    assert os.path.exists(os.path.join(run_dir, "pilot.csv"))
    with open(os.path.join(run_dir, "bounds.json")) as fh:
        bounds = json.load(fh)
    assert set(bounds["constants"]) == {"C_B"}
    stdout = capsys.readouterr().out
    assert "C_B = " in stdout and "rho_star = " in stdout


def test_verify_inapplicable_low_gain(tmp_path, out, capsys):
    cfg = write_cfg(tmp_path, BASE.replace("rho = 6.0", "rho = 0.05"))
    rc = cli.main(["verify", cfg])
    assert rc == 0
    assert "INAPPLICABLE" in capsys.readouterr().out
    with open(os.path.join(only_run_dir(out), "verdict.json")) as fh:
        assert json.load(fh)["passed"] is None


def test_verify_fail_exits_2(tmp_path, out, capsys, monkeypatch):
    cfg = write_cfg(tmp_path)
    real_pipeline = cli._pipeline

    def failing(cfg_):
        pilot, traj, report, verdict = real_pipeline(cfg_)
        broken = dataclasses.replace(verdict, passed=False, time_bound_ok=False)
        return pilot, traj, report, broken

    monkeypatch.setattr(cli, "_pipeline", failing)
    rc = cli.main(["verify", cfg])
    assert rc == 2
    assert "verdict: FAIL" in capsys.readouterr().out


def test_blowup_exits_1(tmp_path, out, capsys):
    text = BASE.replace('rho = 6.0', 'rho = 0.0\neps = 1e-6\nmode = "regularized"')
    text = text.replace('counts = [33]', 'counts = [9]')
    text = text.replace('phi0 = "0.5*cos(pi*x)"', 'phi0 = "3.0"')
    text = text.replace("T = 0.3", "T = 60.0").replace("dt = 1e-3", "dt = 0.5")
    cfg = write_cfg(tmp_path, text)
    rc = cli.main(["simulate", cfg])
    assert rc == 1
    err = capsys.readouterr().err
    assert "blow-up detected at t =" in err
    assert "non-finite" in err


def test_bad_config_exits_1(tmp_path, out, capsys):
    cfg = write_cfg(tmp_path, BASE.replace("rho = 6.0", ""))
    rc = cli.main(["verify", cfg])
    assert rc == 1
    assert "config error:" in capsys.readouterr().err


def test_sweep_over_gains(tmp_path, out):
    cfg = write_cfg(tmp_path, BASE + "\n[sweep]\nrhos = [6.0, 12.0]\n")
    assert cli.main(["sweep", cfg, "--jobs", "1"]) == 0
    run_dir = only_run_dir(out)
    assert os.path.basename(run_dir).startswith("t-sweep-")

    with open(os.path.join(run_dir, "summary.csv")) as fh:
        lines = fh.read().splitlines()
    assert lines[0].startswith("# fitted_exponent=")
    assert lines[1].split(",")[0] == "axis"
    assert len(lines) == 4  # comment, header, two points

    with open(os.path.join(run_dir, "sweep.json")) as fh:
        sweep = json.load(fh)
    assert sweep["axis"] == "rho"
    assert len(sweep["rows"]) == 2
    assert all(r["passed"] is True for r in sweep["rows"])
    # stronger gain reaches earlier
    t6, t12 = (r["t_star_emp"] for r in sweep["rows"])
    assert t12 <= t6


def test_sweep_without_section_exits_1(tmp_path, out, capsys):
    cfg = write_cfg(tmp_path)
    assert cli.main(["sweep", cfg]) == 1
    assert "config error:" in capsys.readouterr().err


def test_out_precedence(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path)
    env_root = tmp_path / "env_root"
    flag_root = tmp_path / "flag_root"
    monkeypatch.setenv("PFSMC_OUT", str(env_root))
    assert cli.main(["simulate", cfg, "--out", str(flag_root)]) == 0
    assert os.path.isdir(flag_root) and not env_root.exists()
    assert cli.main(["simulate", cfg]) == 0
    assert env_root.exists()


def test_config_dir_output_fallback(tmp_path, monkeypatch):
    monkeypatch.delenv("PFSMC_OUT", raising=False)
    cfg = write_cfg(tmp_path, BASE + 'dir = "artifacts"\n')
    assert cli.main(["simulate", cfg]) == 0
    root = tmp_path / "artifacts"
    assert root.is_dir()
    only_run_dir(str(root))


def test_seed_flag_recorded_and_changes_hash(tmp_path, out):
    cfg = write_cfg(tmp_path)
    assert cli.main(["bounds", cfg]) == 0
    default_dir = only_run_dir(out)
    assert cli.main(["bounds", cfg, "--seed", "7"]) == 0
    dirs = sorted(os.listdir(out))
    assert len(dirs) == 2
    seeded = [d for d in dirs if os.path.join(out, d) != default_dir][0]
    text = open(os.path.join(out, seeded, "config.resolved.toml")).read()
    assert "seed = 7" in text
