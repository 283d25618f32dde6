"""Gain thresholds and predicted reaching times.

Wires together the structural constant of the coupled system, an empirical
sup-norm embedding constant, and constants measured on a pilot simulation to
produce, per control variant, the minimal guaranteed gain rho_star and the
predicted reaching time t_star at a given gain.  All estimated inputs are
labeled with their provenance in the report; bounds consuming the empirical
embedding constant are flagged heuristic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import operators as ops
from .dynamics import EnergyControl, PhaseControl, ProblemSpec, Trajectory
from .grid import Field, Mesh, estimate_embedding_constant, laplacian_neumann

SCHEMA_VERSION = 1

FORMULA_IDS = {
    "A": "reach-energy-combined",
    "B": "reach-phase-nonlocal",
    "C": "comparison-phase-nodewise",
}


class BoundInapplicable(ValueError):
    """The bound's structural hypotheses fail for these inputs."""


def structural_constant(params) -> float:
    """Growth constant of the coupled system: 2*max(sqrt(6)/nu,
    ell/sqrt(kappa*nu) + 4*ell/kappa)."""
    a = math.sqrt(6.0) / params.nu
    b = params.ell / math.sqrt(params.kappa * params.nu) + 4.0 * params.ell / params.kappa
    return 2.0 * max(a, b)


def smallness_margin(params, c_omega: float, measure: float) -> float:
    """1 - gamma * structural_constant * c_omega * measure^(7/6).

    Positive margin is the structural smallness condition behind the
    pointwise-control bounds; callers should require > 0.
    """
    if c_omega <= 0.0 or measure <= 0.0:
        raise ValueError("c_omega and measure must be positive")
    return 1.0 - params.gamma * structural_constant(params) * c_omega * measure ** (7.0 / 6.0)


def estimate_constant(traj: Trajectory, spec: ProblemSpec, mesh: Mesh, which: str,
                      embedding_coeff: float | None = None,
                      rho: float | None = None) -> float:
    """Empirical constant from a completed pilot run.

    which = "C_A": sup over snapshots (t>0) of
        ||f - (ell-alpha)*dphi - kappa*alpha*lap(phi) - kappa*lap(target)||_L2
        divided by (sqrt(rho)+1), rho being the pilot gain.
    which = "C_B": sup over snapshots of
        ||gamma*theta + nu*lap(target) - graph_section(target)||_L2.
    which = "C7": sup over samples of ||theta||_inf minus rho*embedding_coeff,
        clamped at zero (embedding_coeff = c_str * c_omega * measure^(7/6)).
    which = "C6": same with ||phi - target||_inf from snapshots.

    Values are empirical: honest for the pilot trajectory, heuristic as
    uniform constants.
    """
    rho = spec.rho if rho is None else rho
    pr = spec.params
    if which == "C_A":
        ctrl = spec.control
        if not isinstance(ctrl, EnergyControl):
            raise ValueError("C_A needs an energy-balance control variant")
        if not traj.snapshots:
            raise ValueError("C_A estimation needs pilot snapshots")
        lap_target = laplacian_neumann(mesh, ctrl.target.values)
        best = 0.0
        for snap in traj.snapshots:
            if snap.dphi is None:
                continue
            g = (-(pr.ell - ctrl.alpha) * snap.dphi.values
                 - pr.kappa * ctrl.alpha * laplacian_neumann(mesh, snap.phi.values)
                 - pr.kappa * lap_target)
            if spec.source is not None:
                g = g + spec.source(snap.t)
            best = max(best, mesh.norm_l2(g))
        return best / (math.sqrt(rho) + 1.0)
    if which == "C_B":
        ctrl = spec.control
        if not isinstance(ctrl, PhaseControl):
            raise ValueError("C_B needs a phase-equation control variant")
        if not traj.snapshots:
            raise ValueError("C_B estimation needs pilot snapshots")
        lap_target = laplacian_neumann(mesh, ctrl.target.values)
        sect = ops.minimal_section(spec.potential, ctrl.target.values)
        best = 0.0
        for snap in traj.snapshots:
            g = pr.gamma * snap.theta.values + pr.nu * lap_target - sect
            best = max(best, mesh.norm_l2(g))
        return best
    if which == "C7":
        if embedding_coeff is None:
            raise ValueError("C7 needs embedding_coeff")
        return max(0.0, float(np.max(traj.theta_linf)) - rho * embedding_coeff)
    if which == "C6":
        if embedding_coeff is None:
            raise ValueError("C6 needs embedding_coeff")
        if not isinstance(spec.control, PhaseControl):
            raise ValueError("C6 needs a phase-equation control variant")
        if not traj.snapshots:
            raise ValueError("C6 estimation needs pilot snapshots")
        tv = spec.control.target.values
        sup = max(float(np.max(np.abs(s.phi.values - tv))) for s in traj.snapshots)
        return max(0.0, sup - rho * embedding_coeff)
    raise ValueError(f"unknown constant {which!r}; expected C_A, C_B, C6 or C7")


def rho_t_star_a(c_a: float, dist0: float, T: float, rho: float):
    """Variant-A threshold and reaching time.

    rho_star = c_a^2 + 2 c_a + 2 dist0/T; for rho > rho_star the distance is
    predicted to vanish by t_star = 2 dist0 / (rho - c_a^2 - 2 c_a) < T.
    Returns (rho_star, t_star), t_star = inf when the gain is too small.
    """
    if c_a < 0.0 or dist0 < 0.0 or T <= 0.0:
        raise ValueError("need c_a >= 0, dist0 >= 0, T > 0")
    rho_star = c_a * c_a + 2.0 * c_a + 2.0 * dist0 / T
    denom = rho - c_a * c_a - 2.0 * c_a
    t_star = 2.0 * dist0 / denom if denom > 0.0 else math.inf
    if rho > rho_star:
        assert t_star < T + 1e-12
    return rho_star, t_star


def rho_t_star_b(c_b: float, dist0: float, T: float, rho: float):
    """Variant-B threshold and reaching time: rho_star = 2 c_b + 2 dist0/T,
    t_star = 2 dist0 / (rho - 2 c_b)."""
    if c_b < 0.0 or dist0 < 0.0 or T <= 0.0:
        raise ValueError("need c_b >= 0, dist0 >= 0, T > 0")
    rho_star = 2.0 * c_b + 2.0 * dist0 / T
    denom = rho - 2.0 * c_b
    t_star = 2.0 * dist0 / denom if denom > 0.0 else math.inf
    if rho > rho_star:
        assert t_star < T + 1e-12
    return rho_star, t_star


@dataclass(frozen=True)
class VariantCBounds:
    rho_star: float
    t_star: float
    m0: float
    m_pi_star: float
    a_rho: float
    embedding_coeff: float


def rho_t_star_c(params, pot: ops.Potential, c7: float, mesh: Mesh,
                 target: Field, phi0: Field, T: float, rho: float,
                 c_str: float, c_omega: float) -> VariantCBounds:
    """Pointwise-control threshold, reaching time, and comparison data.

    With k = c_str * c_omega * measure^(7/6) (requires gamma*k < 1):
        m_pi_star = L*(m0 + ||target||_inf) + |pi(0)|
        rho_star  = (gamma*c7 + nu*||lap target||_inf + ||section||_inf
                     + m_pi_star + m0/T) / (1 - gamma*k)
        a_rho     = gamma*(k*rho + c7) + nu*||lap target||_inf
                     + ||section||_inf + m_pi_star
        t_star    = m0 / (rho - a_rho)   (inf when rho <= a_rho)
    """
    if c7 < 0.0 or T <= 0.0:
        raise ValueError("need c7 >= 0 and T > 0")
    k = c_str * c_omega * mesh.measure ** (7.0 / 6.0)
    if params.gamma * k >= 1.0:
        raise BoundInapplicable(
            f"smallness fails: gamma*c_str*c_omega*measure^(7/6) = {params.gamma * k:.6g} >= 1")
    lap_inf = float(np.max(np.abs(laplacian_neumann(mesh, target.values))))
    sect_inf = float(np.max(np.abs(ops.minimal_section(pot, target.values))))
    m0 = float(np.max(np.abs(phi0.values - target.values)))
    target_inf = float(np.max(np.abs(target.values)))
    pi0 = abs(ops.smooth_reaction(pot, 0.0)[0])
    m_pi_star = pot.lipschitz * (m0 + target_inf) + pi0
    base = params.gamma * c7 + params.nu * lap_inf + sect_inf + m_pi_star
    rho_star = (base + m0 / T) / (1.0 - params.gamma * k)
    a_rho = params.gamma * (k * rho + c7) + params.nu * lap_inf + sect_inf + m_pi_star
    t_star = m0 / (rho - a_rho) if rho > a_rho else math.inf
    if rho > rho_star:
        assert t_star < T + 1e-12
    return VariantCBounds(rho_star=rho_star, t_star=t_star, m0=m0,
                          m_pi_star=m_pi_star, a_rho=a_rho, embedding_coeff=k)


@dataclass
class BoundsReport:
    variant: str
    formula_id: str
    c_str: float
    c_omega: float
    omega_measure: float
    smallness: float
    constants: dict
    rho: float
    rho_star: float
    t_star_pred: float
    applicable: bool
    heuristic: bool
    aux: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_json_dict(self, run_id: str = "") -> dict:
        d = asdict(self)
        d["run_id"] = run_id
        return d

    def write_json(self, path, run_id: str = "") -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(run_id), fh, indent=2, sort_keys=True)
            fh.write("\n")


def build_report(spec: ProblemSpec, mesh: Mesh, pilot: Trajectory, T: float,
                 c_omega: float | None = None, embedding_samples: int = 200,
                 seed: int = 0, pilot_rho: float | None = None) -> BoundsReport:
    """Assemble the full bounds report for spec.rho from a pilot trajectory.

    The pilot must share mesh, data and variant with the target run; only its
    gain may differ (pass it as pilot_rho, default spec.rho).
    """
    pr = spec.params
    pilot_rho = spec.rho if pilot_rho is None else pilot_rho
    c_str = structural_constant(pr)
    if c_omega is None:
        c_omega = estimate_embedding_constant(mesh, samples=embedding_samples, seed=seed)
    margin = smallness_margin(pr, c_omega, mesh.measure)
    k = c_str * c_omega * mesh.measure ** (7.0 / 6.0)
    dist0 = float(pilot.psi[0])
    constants: dict = {}
    aux: dict = {"embedding_coeff": k, "dist0": dist0,
                 "c_omega_provenance": "empirical-lower-estimate"}
    heuristic = False
    variant = spec.variant

    if variant == "A":
        c_a = estimate_constant(pilot, spec, mesh, "C_A", rho=pilot_rho)
        constants["C_A"] = {"value": c_a, "provenance": "empirical"}
        rho_star, t_star = rho_t_star_a(c_a, dist0, T, spec.rho)
        applicable = spec.rho > rho_star
    elif variant == "B":
        c_b = estimate_constant(pilot, spec, mesh, "C_B", rho=pilot_rho)
        constants["C_B"] = {"value": c_b, "provenance": "empirical"}
        rho_star, t_star = rho_t_star_b(c_b, dist0, T, spec.rho)
        applicable = spec.rho > rho_star
    else:
        heuristic = True  # consumes the empirical embedding constant
        c7 = estimate_constant(pilot, spec, mesh, "C7", embedding_coeff=k, rho=pilot_rho)
        c6 = estimate_constant(pilot, spec, mesh, "C6", embedding_coeff=k, rho=pilot_rho)
        constants["C7"] = {"value": c7, "provenance": "empirical"}
        constants["C6"] = {"value": c6, "provenance": "empirical"}
        ctrl = spec.control
        if margin <= 0.0:
            rho_star, t_star = math.inf, math.inf
            applicable = False
            aux["inapplicable_reason"] = "smallness margin not positive"
        else:
            vb = rho_t_star_c(pr, spec.potential, c7, mesh, ctrl.target,
                              pilot_snapshot_phi0(pilot, mesh), T, spec.rho,
                              c_str, c_omega)
            rho_star, t_star = vb.rho_star, vb.t_star
            applicable = spec.rho > rho_star
            aux.update(m0=vb.m0, m_pi_star=vb.m_pi_star, a_rho=vb.a_rho)
            # reinforced-decrease condition for the squared distance diagnostic
            lip = spec.potential.lipschitz
            lap_inf = float(np.max(np.abs(laplacian_neumann(mesh, ctrl.target.values))))
            sect_inf = float(np.max(np.abs(ops.minimal_section(spec.potential,
                                                               ctrl.target.values))))
            pi0 = abs(ops.smooth_reaction(spec.potential, 0.0)[0])
            coef = (pr.gamma + lip) * k
            c_tilde = (pr.gamma * c7 + lip * c6 + pr.nu * lap_inf + sect_inf
                       + lip * float(np.max(np.abs(ctrl.target.values))) + pi0)
            aux.update(reinforced_coef=coef, reinforced_c=c_tilde,
                       reinforced_ok=bool(coef < 1.0 and spec.rho > c_tilde / (1.0 - coef)))

    return BoundsReport(
        variant=variant, formula_id=FORMULA_IDS[variant], c_str=c_str,
        c_omega=c_omega, omega_measure=mesh.measure, smallness=margin,
        constants=constants, rho=spec.rho, rho_star=rho_star,
        t_star_pred=t_star, applicable=applicable, heuristic=heuristic, aux=aux,
    )


def pilot_snapshot_phi0(pilot: Trajectory, mesh: Mesh) -> Field:
    """Initial phase field recovered from the pilot's first snapshot."""
    if not pilot.snapshots or pilot.snapshots[0].t != pilot.times[0]:
        raise ValueError("pilot trajectory has no initial snapshot; run it with snapshots")
    return pilot.snapshots[0].phi
