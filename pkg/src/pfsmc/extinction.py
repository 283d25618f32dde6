"""Finite-time vanishing: the scalar decay lemma, empirical detection of the
vanishing time on a sampled series, and the verdict combining both.

The scalar lemma: if a nonnegative absolutely continuous psi satisfies
    psi' + rho <= a0 * sqrt(rho) + b0     wherever psi > 0,
with rho > a0^2 + 2*b0 + 2*psi(0)/T, then psi reaches zero by
    2*psi(0) / (rho - a0^2 - 2*b0)  < T
and stays zero.  The guaranteed decay rate is s0 = rho/2 - a0^2/2 - b0,
obtained from rho - a0*sqrt(rho) - b0 >= s0 (complete the square in sqrt(rho)).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from .dynamics import ProblemSpec, Trajectory


class HypothesisViolation(ValueError):
    """The lemma's gain hypothesis fails for these inputs."""


def extinction_bound(a0: float, b0: float, psi0: float, rho: float, T: float):
    """Guaranteed decay rate and vanishing-time bound for the scalar lemma.

    Returns (s0, t_bound) with s0 = rho/2 - a0^2/2 - b0 and
    t_bound = 2*psi0 / (rho - a0^2 - 2*b0) = psi0/s0.  Raises
    HypothesisViolation unless rho > a0^2 + 2*b0 + 2*psi0/T.
    """
    if a0 < 0.0 or b0 < 0.0 or psi0 < 0.0 or T <= 0.0:
        raise ValueError("need a0, b0, psi0 >= 0 and T > 0")
    threshold = a0 * a0 + 2.0 * b0 + 2.0 * psi0 / T
    if not rho > threshold:
        raise HypothesisViolation(
            f"gain {rho:.6g} not above a0^2 + 2*b0 + 2*psi0/T = {threshold:.6g}")
    s0 = 0.5 * rho - 0.5 * a0 * a0 - b0
    t_bound = 2.0 * psi0 / (rho - a0 * a0 - 2.0 * b0)
    return s0, t_bound


@dataclass(frozen=True)
class ExtinctionMeasurement:
    t_touch: Optional[float]      # first sample with psi <= tol
    t_star_emp: Optional[float]   # first sample after which psi stays <= tol
    decreasing_ok: bool           # every sampled step up to settling drops by > tol
    stays_zero_ok: bool           # no sample above tol after t_touch


def measure_extinction(times, psi, tol: float) -> ExtinctionMeasurement:
    """Locate the vanishing time on a sampled series.

    t_touch is the first sample at or below tol; t_star_emp the first sample
    from which the series never again exceeds tol.  decreasing_ok asks that
    every consecutive pair up to the settling sample drops by more than tol;
    a series starting at or below tol counts as trivially decreasing.
    """
    times = np.asarray(times, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if times.shape != psi.shape or times.ndim != 1 or times.size == 0:
        raise ValueError("times and psi must be matching nonempty 1d arrays")
    below = psi <= tol
    if not below.any():
        return ExtinctionMeasurement(None, None, False, False)
    i_touch = int(np.argmax(below))
    t_touch = float(times[i_touch])
    above_after = ~below[i_touch:]
    stays = not above_after.any()
    if stays:
        i_star = i_touch
        t_star = t_touch
    else:
        # last excursion above tol after touching; settle after it, if ever
        i_last = i_touch + int(np.nonzero(above_after)[0][-1]) + 1
        i_star = i_last if i_last < times.size else None
        t_star = float(times[i_last]) if i_last < times.size else None
    i_end = i_touch if i_star is None else i_star
    if i_end == 0:
        decreasing = True
    else:
        decreasing = bool(np.all(-np.diff(psi[: i_end + 1]) > tol))
    return ExtinctionMeasurement(t_touch, t_star, decreasing, stays)


def check_slope(times, psi, s0: float, tol: float) -> bool:
    """Every sampled decrement while the series is positive respects the
    guaranteed rate: (psi[i+1]-psi[i])/dt <= -s0 + tol on intervals whose
    endpoints both exceed tol."""
    times = np.asarray(times, dtype=float)
    psi = np.asarray(psi, dtype=float)
    live = (psi[:-1] > tol) & (psi[1:] > tol)
    if not live.any():
        return True
    dt = np.diff(times)[live]
    dpsi = np.diff(psi)[live]
    return bool(np.all(dpsi / dt <= -s0 + tol))


def comparison_barrier(m0: float, rho: float, a_rho: float, t):
    """Scalar barrier w(t) = max(0, m0 - (rho - a_rho) * t) dominating the
    sup-norm phase deviation under pointwise control.  Requires rho > a_rho."""
    if m0 < 0.0:
        raise ValueError("m0 must be nonnegative")
    if not rho > a_rho:
        raise HypothesisViolation(f"gain {rho:.6g} not above a_rho = {a_rho:.6g}")
    return np.maximum(0.0, m0 - (rho - a_rho) * np.asarray(t, dtype=float))


@dataclass
class ExtinctionVerdict:
    variant: str
    label: str                    # "exact" or "eps-sliding"
    applicable: bool
    t_star_pred: float
    t_touch: Optional[float]
    t_star_emp: Optional[float]
    time_bound_ok: bool
    decreasing_ok: bool
    stays_zero_ok: bool
    slope_bound_ok: Optional[bool]
    comparison_ok: Optional[bool]
    monotone_sq_ok: Optional[bool]
    tol: float
    passed: Optional[bool]        # None when the bound is inapplicable

    def to_json_dict(self, run_id: str = "", formula_id: str = "") -> dict:
        d = asdict(self)
        d["run_id"] = run_id
        d["formula_id"] = formula_id
        return d

    def write_json(self, path, run_id: str = "", formula_id: str = "") -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(run_id, formula_id), fh, indent=2, sort_keys=True)
            fh.write("\n")


def verify_sliding(traj: Trajectory, spec: ProblemSpec, report, tol: float = 1e-9,
                   comparison_tol: float = 1e-6,
                   check_decreasing_sq: bool = False) -> ExtinctionVerdict:
    """Check a finished run against its bounds report.

    Gates (when the report is applicable): the sampled manifold distance
    vanishes no later than the predicted time plus one sampling interval,
    decreases on the way down, and never rebounds.  Under pointwise control
    the sup-norm deviation must additionally sit below the comparison barrier
    at every stored snapshot.  In regularized mode exact vanishing is relaxed
    to the boundary-layer width: tol becomes max(tol, eps) and the verdict is
    labeled "eps-sliding".
    """
    if spec.mode == "regularized":
        tol_eff = max(tol, spec.eps)
        label = "eps-sliding"
    else:
        tol_eff = tol
        label = "exact"
    meas = measure_extinction(traj.times, traj.psi, tol_eff)
    t_pred = report.t_star_pred
    applicable = bool(report.applicable)
    time_ok = (meas.t_star_emp is not None
               and meas.t_star_emp <= t_pred + traj.sample_interval + 1e-12)

    variant = spec.variant
    slope_ok: Optional[bool] = None
    comp_ok: Optional[bool] = None
    if variant in ("A", "B") and applicable:
        if variant == "A":
            c = report.constants["C_A"]["value"]
            s0 = 0.5 * spec.rho - 0.5 * c * c - c
        else:
            c = report.constants["C_B"]["value"]
            s0 = 0.5 * spec.rho - c
        if s0 > 0.0:
            slope_ok = check_slope(traj.times, traj.psi, s0, 0.1 * s0 + tol_eff)
    if variant == "C" and applicable:
        m0 = report.aux["m0"]
        a_rho = report.aux["a_rho"]
        target = spec.control.target.values
        checked = False
        comp_ok = True
        for snap in traj.snapshots:
            w = float(comparison_barrier(m0, spec.rho, a_rho, snap.t))
            dev = float(np.max(np.abs(snap.phi.values - target)))
            checked = True
            if dev > w + comparison_tol:
                comp_ok = False
                break
        if not checked:
            # no snapshots stored: fall back to the integrated distance,
            # dominated by the barrier times the domain volume factor
            w = comparison_barrier(m0, spec.rho, a_rho, traj.times)
            comp_ok = bool(np.all(traj.psi <= w * math.sqrt(report.omega_measure)
                                  + comparison_tol))

    monotone_sq: Optional[bool] = None
    if check_decreasing_sq and variant == "C" and report.aux.get("reinforced_ok"):
        live = traj.psi > tol_eff
        d = np.diff(traj.psi ** 2)
        idx = live[:-1] & live[1:]
        monotone_sq = bool(np.all(d[idx] < 0.0)) if idx.any() else True

    if not applicable:
        passed: Optional[bool] = None
    else:
        passed = time_ok and meas.decreasing_ok and meas.stays_zero_ok
        if variant == "C":
            passed = passed and bool(comp_ok)

    return ExtinctionVerdict(
        variant=variant, label=label, applicable=applicable, t_star_pred=t_pred,
        t_touch=meas.t_touch, t_star_emp=meas.t_star_emp, time_bound_ok=time_ok,
        decreasing_ok=meas.decreasing_ok, stays_zero_ok=meas.stays_zero_ok,
        slope_bound_ok=slope_ok, comparison_ok=comp_ok, monotone_sq_ok=monotone_sq,
        tol=tol_eff, passed=passed,
    )
