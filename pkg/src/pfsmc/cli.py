"""Command line driver: simulate, bounds, verify, sweep.

Every command takes one TOML config.  Artifacts land in a run directory
named <name>-<hash8> under the output root (--out, then PFSMC_OUT, then
[output].dir, then ./runs); the hash covers the resolved config bytes, so
identical configs map to the same directory and reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .bounds import build_report
from .config import ConfigError, RunConfig, parse_config, parse_config_dict
from .dynamics import BlowUpError, init_state, simulate
from .extinction import verify_sliding
from .grid import write_field_binary


def _out_root(cfg: RunConfig, args) -> str:
    if getattr(args, "out", None):
        return args.out
    env = os.environ.get("PFSMC_OUT")
    if env:
        return env
    if cfg.out_dir:
        return cfg.out_dir if os.path.isabs(cfg.out_dir) else os.path.join(cfg.base_dir, cfg.out_dir)
    return "runs"


def _make_run_dir(cfg: RunConfig, root: str, suffix: str = "") -> str:
    text = cfg.resolved_toml()
    h = hashlib.sha256(text.encode()).hexdigest()[:8]
    path = os.path.join(root, f"{cfg.name}{suffix}-{h}")
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "config.resolved.toml"), "w") as fh:
        fh.write(text)
    return path


def _run_id(run_dir: str) -> str:
    return os.path.basename(run_dir)


def _write_snapshots(run_dir: str, traj) -> None:
    d = os.path.join(run_dir, "snapshots")
    os.makedirs(d, exist_ok=True)
    rows = ["index,t,theta_file,phi_file"]
    for i, s in enumerate(traj.snapshots):
        tf, pf = f"theta_{i:06d}.pff", f"phi_{i:06d}.pff"
        write_field_binary(s.theta, os.path.join(d, tf))
        write_field_binary(s.phi, os.path.join(d, pf))
        rows.append(f"{i},{s.t!r},{tf},{pf}")
    with open(os.path.join(d, "index.csv"), "w") as fh:
        fh.write("\n".join(rows) + "\n")


def _simulate(cfg: RunConfig, rho: float, snapshots: bool):
    spec = cfg.spec(rho)
    theta0, phi0 = cfg.initial_fields()
    state = init_state(spec, cfg.mesh, theta0, phi0)
    traj = simulate(spec, cfg.mesh, state, T=cfg.T, dt=cfg.dt,
                    sample_every=cfg.sample_every, snapshots=snapshots,
                    snapshot_every=cfg.snapshot_every or None)
    return spec, traj


def _pipeline(cfg: RunConfig):
    """Pilot at pilot_rho, main run at rho, bounds report, verdict."""
    _, pilot = _simulate(cfg, cfg.pilot_rho, snapshots=True)
    spec, traj = _simulate(cfg, cfg.rho, snapshots=True)
    report = build_report(spec, cfg.mesh, pilot, T=cfg.T,
                          c_omega=cfg.c_omega_override,
                          embedding_samples=cfg.embedding_samples,
                          seed=cfg.seed, pilot_rho=cfg.pilot_rho)
    verdict = verify_sliding(traj, spec, report, tol=cfg.sliding_tol,
                             comparison_tol=cfg.comparison_tol,
                             check_decreasing_sq=cfg.check_decreasing_sq)
    return pilot, traj, report, verdict


def _apply_seed(cfg: RunConfig, args) -> None:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.resolved["bounds"]["seed"] = args.seed


def cmd_simulate(args) -> int:
    cfg = parse_config(args.config)
    _apply_seed(cfg, args)
    run_dir = _make_run_dir(cfg, _out_root(cfg, args))
    _, traj = _simulate(cfg, cfg.rho, snapshots=cfg.want_snapshots)
    traj.to_csv(os.path.join(run_dir, "trajectory.csv"))
    if cfg.want_snapshots:
        _write_snapshots(run_dir, traj)
    print(f"run dir: {run_dir}")
    print(f"samples: {len(traj.times)}  final distance: {traj.psi[-1]:.6g}")
    return 0


def cmd_bounds(args) -> int:
    cfg = parse_config(args.config)
    _apply_seed(cfg, args)
    run_dir = _make_run_dir(cfg, _out_root(cfg, args))
    _, pilot = _simulate(cfg, cfg.pilot_rho, snapshots=True)
    spec = cfg.spec()
    report = build_report(spec, cfg.mesh, pilot, T=cfg.T,
                          c_omega=cfg.c_omega_override,
                          embedding_samples=cfg.embedding_samples,
                          seed=cfg.seed, pilot_rho=cfg.pilot_rho)
    pilot.to_csv(os.path.join(run_dir, "pilot.csv"))
    report.write_json(os.path.join(run_dir, "bounds.json"), run_id=_run_id(run_dir))
    print(f"run dir: {run_dir}")
    for cname, c in report.constants.items():
        print(f"{cname} = {c['value']:.6g} ({c['provenance']})")
    print(f"rho_star = {report.rho_star:.6g}  t_star = {report.t_star_pred:.6g} "
          f"at rho = {report.rho:.6g}  applicable = {report.applicable}")
    return 0


def cmd_verify(args) -> int:
    cfg = parse_config(args.config)
    _apply_seed(cfg, args)
    run_dir = _make_run_dir(cfg, _out_root(cfg, args))
    pilot, traj, report, verdict = _pipeline(cfg)
    pilot.to_csv(os.path.join(run_dir, "pilot.csv"))
    traj.to_csv(os.path.join(run_dir, "trajectory.csv"))
    report.write_json(os.path.join(run_dir, "bounds.json"), run_id=_run_id(run_dir))
    verdict.write_json(os.path.join(run_dir, "verdict.json"),
                       run_id=_run_id(run_dir), formula_id=report.formula_id)
    if cfg.want_snapshots:
        _write_snapshots(run_dir, traj)
    print(f"run dir: {run_dir}")
    print(f"rho = {report.rho:.6g}  rho_star = {report.rho_star:.6g}  "
          f"t_star = {report.t_star_pred:.6g}")
    if verdict.passed is None:
        print(f"verdict: INAPPLICABLE ({verdict.label}); gain below threshold "
              f"or smallness fails")
        return 0
    word = "PASS" if verdict.passed else "FAIL"
    emp = "none" if verdict.t_star_emp is None else f"{verdict.t_star_emp:.6g}"
    print(f"verdict: {word} ({verdict.label})  reached at t = {emp}  "
          f"predicted {verdict.t_star_pred:.6g}")
    return 0 if verdict.passed else 2


def _sweep_point(payload):
    doc, base_dir, axis, value = payload
    doc = copy.deepcopy(doc)
    if axis in ("rho", "rho_factor"):
        doc["problem"]["rho"] = float(value)
    elif axis == "eps":
        doc["problem"]["eps"] = float(value)
    elif axis == "counts":
        doc["mesh"]["counts"] = [int(c) for c in value]
    cfg = parse_config_dict(doc, base_dir)
    _, traj, report, verdict = _pipeline(cfg)
    n_tail = max(1, len(traj.psi) // 4)
    return {
        "axis": axis,
        "value": value if axis != "counts" else "x".join(str(c) for c in value),
        "rho": report.rho,
        "rho_star": report.rho_star,
        "t_star_pred": report.t_star_pred,
        "t_star_emp": verdict.t_star_emp,
        "applicable": report.applicable,
        "passed": verdict.passed,
        "tail_psi": float(np.max(traj.psi[-n_tail:])),
    }


def _fit_exponent(rows, axis):
    """Least-squares slope of the relevant log-log law; nan when underdetermined."""
    xs, ys = [], []
    for r in rows:
        if axis in ("rho", "rho_factor"):
            if r["applicable"] and r["t_star_emp"] and r["rho"] > r["rho_star"]:
                xs.append(r["rho"] - r["rho_star"])
                ys.append(r["t_star_emp"])
        elif axis == "eps":
            if r["tail_psi"] > 0:
                xs.append(r["value"])
                ys.append(r["tail_psi"])
    if len(xs) < 2:
        return float("nan"), "n/a"
    slope = float(np.polyfit(np.log(xs), np.log(ys), 1)[0])
    law = ("t_star_emp ~ (rho - rho_star)^p" if axis in ("rho", "rho_factor")
           else "tail_psi ~ eps^p")
    return slope, law


def cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    _apply_seed(cfg, args)
    sweep = cfg.sweep or {}
    axes = [a for a in ("rhos", "rho_factors", "eps", "counts") if a in sweep]
    if len(axes) != 1:
        raise ConfigError("[sweep] needs exactly one of: rhos, rho_factors, eps, counts")
    key = axes[0]
    values = sweep[key]
    if not isinstance(values, list) or not values:
        raise ConfigError(f"[sweep].{key} must be a nonempty list")
    jobs = args.jobs or int(sweep.get("jobs", 1))

    if key == "rho_factors":
        # one pilot fixes the threshold; gains are multiples of it
        _, pilot = _simulate(cfg, cfg.pilot_rho, snapshots=True)
        report = build_report(cfg.spec(), cfg.mesh, pilot, T=cfg.T,
                              c_omega=cfg.c_omega_override,
                              embedding_samples=cfg.embedding_samples,
                              seed=cfg.seed, pilot_rho=cfg.pilot_rho)
        if not math.isfinite(report.rho_star) or report.rho_star <= 0:
            raise ConfigError("rho_factors sweep needs a finite positive rho_star")
        axis = "rho_factor"
        points = [float(f) * report.rho_star for f in values]
    else:
        axis = {"rhos": "rho", "eps": "eps", "counts": "counts"}[key]
        points = values

    payloads = [(cfg.resolved, cfg.base_dir, axis, v) for v in points]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_sweep_point, payloads))
    else:
        rows = [_sweep_point(p) for p in payloads]

    run_dir = _make_run_dir(cfg, _out_root(cfg, args), suffix="-sweep")
    exponent, law = _fit_exponent(rows, axis)
    cols = ["axis", "value", "rho", "rho_star", "t_star_pred", "t_star_emp",
            "applicable", "passed", "tail_psi"]
    lines = [f"# fitted_exponent={exponent!r} law={law!r} points={len(rows)}",
             ",".join(cols)]
    for r in rows:
        lines.append(",".join(_csv_cell(r[c]) for c in cols))
    with open(os.path.join(run_dir, "summary.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(os.path.join(run_dir, "sweep.json"), "w") as fh:
        json.dump({"axis": axis, "fitted_exponent": exponent, "law": law,
                   "rows": rows}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"run dir: {run_dir}")
    print(f"fitted exponent: {exponent:.4g} ({law})")
    for r in rows:
        print(f"  {axis}={r['value']}  rho={r['rho']:.6g}  "
              f"t_emp={r['t_star_emp']}  passed={r['passed']}")
    return 0


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pfsmc",
        description="Phase-field sliding-mode control laboratory: run the "
                    "coupled temperature/phase system under finite-time "
                    "feedback and check reaching times against gain bounds.")
    sub = parser.add_subparsers(dest="cmd", required=True)
    specs = {
        "simulate": "run the controlled system and store the trajectory",
        "bounds": "run the pilot and compute gain thresholds",
        "verify": "full pipeline: pilot, bounds, run, verdict (exit 2 on fail)",
        "sweep": "repeat verify along one parameter axis",
    }
    for name, help_text in specs.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("config", help="path to a TOML run config")
        sp.add_argument("--out", help="output root (overrides PFSMC_OUT and config)")
        sp.add_argument("--seed", type=int, help="override [bounds].seed")
        if name == "sweep":
            sp.add_argument("--jobs", type=int, default=0,
                            help="worker processes (default [sweep].jobs or 1)")
    args = parser.parse_args(argv)
    handlers = {"simulate": cmd_simulate, "bounds": cmd_bounds,
                "verify": cmd_verify, "sweep": cmd_sweep}
    try:
        return handlers[args.cmd](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except BlowUpError as exc:
        print(f"blow-up detected at t = {exc.t:.6g}; the simulation produced "
              f"non-finite values (reduce dt or the gain)", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
