"""Time integration of the controlled two-field phase system.

The model couples an energy balance for the temperature theta with a phase
equation for the order parameter phi on a Neumann box:

    d/dt (theta + ell*phi) - kappa*Lap(theta) = f  [- rho*sigma, variant A]
    d/dt phi - nu*Lap(phi) + xi + pi(phi) = gamma*theta  [- rho*sigma, B/C]

with xi a selection of the monotone graph of the double-well convex part.
The feedback sigma is a (possibly regularized) sign of the distance to the
target manifold; three variants are supported:

* ``A`` (EnergyControl): sigma = Sign(theta + alpha*phi - target), acting in
  the energy balance.  For alpha != ell the underlying system may be
  non-unique; the splitting scheme computes one selection.
* ``B`` (PhaseControl, nodewise=False): sigma = Sign(phi - target) with the
  whole-field L2 sign, acting in the phase equation.
* ``C`` (PhaseControl, nodewise=True): sigma = sign(phi - target) pointwise.

Stepping is a first-order splitting: explicit smooth reaction and coupling,
backward-Euler diffusion solved by CG, and either an explicit Yosida term
(``regularized`` mode) or exact proximal maps (``prox`` mode) for the
monotone graph and the feedback.  In prox mode reaching is exact: the
distance hits floating-point zero in finite time.  In regularized mode it
enters an O(eps) neighborhood instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

import numpy as np

from . import operators as ops
from .grid import Field, Mesh, laplacian_neumann, solve_helmholtz

MODES = ("prox", "regularized")


class InitError(ValueError):
    """Initial data or targets incompatible with mesh or potential domain."""


class BlowUpError(RuntimeError):
    """A state went non-finite; the time step is too large for the data."""

    def __init__(self, t: float):
        super().__init__(f"state became non-finite at t={t:.6g}; reduce dt")
        self.t = t


@dataclass(frozen=True)
class PhysParams:
    ell: float
    kappa: float
    nu: float
    gamma: float

    def __post_init__(self):
        for name in ("ell", "kappa", "nu", "gamma"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"physical parameter {name} must be positive")


@dataclass(frozen=True)
class EnergyControl:
    """Feedback in the energy balance, driving theta + alpha*phi to a target."""

    alpha: float
    target: Field

    tag = "A"


@dataclass(frozen=True)
class PhaseControl:
    """Feedback in the phase equation, driving phi to a target profile.

    nodewise=False uses the whole-field L2 sign (variant tag B); True uses
    the pointwise sign (tag C).
    """

    target: Field
    nodewise: bool = False

    @property
    def tag(self) -> str:
        return "C" if self.nodewise else "B"


Control = Union[EnergyControl, PhaseControl]


@dataclass
class ProblemSpec:
    params: PhysParams
    potential: ops.Potential
    control: Control
    rho: float
    eps: float
    mode: str = "prox"
    source: Optional[Callable[[float], np.ndarray]] = None

    def __post_init__(self):
        if self.rho < 0.0:
            raise ValueError(f"control gain rho must be nonnegative, got {self.rho}")
        if not self.eps > 0.0:
            raise ValueError(f"regularization eps must be positive, got {self.eps}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def variant(self) -> str:
        return self.control.tag


@dataclass
class State:
    t: float
    theta: Field
    phi: Field
    last_xi: Field
    last_sigma: Field


def default_timestep(mesh: Mesh, params: PhysParams, eps: float, rho: float) -> float:
    """Step suggestion for regularized mode.

    Diffusion is implicit so the parabolic bound is not a hard limit, but the
    explicit regularized terms want dt <= eps/(rho+1).
    """
    h2 = min(h * h for h in mesh.spacings)
    parabolic = h2 / (2.0 * mesh.dim * max(params.kappa, params.nu))
    return min(parabolic, eps / (rho + 1.0))


def _require_mesh(name: str, f: Field, mesh: Mesh):
    if f.mesh != mesh:
        raise InitError(f"{name} lives on a different mesh than the simulation")
    if not np.all(np.isfinite(f.values)):
        raise InitError(f"{name} contains non-finite values")


def init_state(spec: ProblemSpec, mesh: Mesh, theta0, phi0) -> State:
    """Validate data against the mesh and potential domain; zero diagnostics."""
    th = theta0 if isinstance(theta0, Field) else Field(mesh, np.asarray(theta0, float))
    ph = phi0 if isinstance(phi0, Field) else Field(mesh, np.asarray(phi0, float))
    _require_mesh("theta0", th, mesh)
    _require_mesh("phi0", ph, mesh)
    kind = spec.potential.kind
    if kind in ("logarithmic", "obstacle") and float(np.max(np.abs(ph.values))) > 1.0:
        raise InitError(f"phi0 must lie in [-1, 1] for the {kind} potential")
    ctrl = spec.control
    _require_mesh("control target", ctrl.target, mesh)
    if isinstance(ctrl, PhaseControl):
        tv = ctrl.target.values
        if kind == "logarithmic" and float(np.max(np.abs(tv))) >= 1.0:
            raise InitError("phase target must lie strictly inside (-1, 1) for the "
                            "logarithmic potential (its graph section must be finite)")
        if kind == "obstacle" and float(np.max(np.abs(tv))) > 1.0:
            raise InitError("phase target must lie in [-1, 1] for the obstacle potential")
    zero = Field(mesh, mesh.zeros())
    return State(t=0.0, theta=th, phi=ph, last_xi=zero, last_sigma=zero)


def control_term(state: State, spec: ProblemSpec, mesh: Mesh) -> Field:
    """Feedback selection sigma at the given state (eps-regularized sign)."""
    ctrl = spec.control
    if isinstance(ctrl, EnergyControl):
        eta = state.theta.values + ctrl.alpha * state.phi.values - ctrl.target.values
        return Field(mesh, ops.sign_eps_field(eta, mesh.norm_l2(eta), spec.eps))
    chi = state.phi.values - ctrl.target.values
    if ctrl.nodewise:
        return Field(mesh, ops.sign_eps_scalar(spec.eps, chi))
    return Field(mesh, ops.sign_eps_field(chi, mesh.norm_l2(chi), spec.eps))


def manifold_distance(state: State, spec: ProblemSpec, mesh: Mesh) -> float:
    """L2 distance to the sliding manifold (psi in the trajectory)."""
    ctrl = spec.control
    if isinstance(ctrl, EnergyControl):
        v = state.theta.values + ctrl.alpha * state.phi.values - ctrl.target.values
    else:
        v = state.phi.values - ctrl.target.values
    return mesh.norm_l2(v)


def _check_finite(arr: np.ndarray, t: float):
    if not np.all(np.isfinite(arr)):
        raise BlowUpError(t)


def _shrink_l2(v: np.ndarray, norm: float, amount: float):
    """Prox of amount*||.||_L2: pull the whole field toward 0, exactly 0 inside."""
    if norm <= amount:
        return np.zeros_like(v)
    return (1.0 - amount / norm) * v


def step(state: State, spec: ProblemSpec, mesh: Mesh, dt: float, mode: str | None = None) -> State:
    """Advance one time step; returns a new State at t + dt.

    Phase equation first, then the energy balance with the fresh phase rate.
    The implicit heat solve is mean-corrected to the exact discrete
    conservation identity (CG leaves O(tol) noise otherwise).
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    mode = spec.mode if mode is None else mode
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    pr, pot, ctrl = spec.params, spec.potential, spec.control
    th, ph = state.theta.values, state.phi.values
    t_new = state.t + dt
    f_n = spec.source(state.t) if spec.source is not None else None

    with np.errstate(over="ignore", invalid="ignore"):
        pi_val, _ = ops.smooth_reaction(pot, ph)

        # --- phase step -----------------------------------------------------
        if isinstance(ctrl, PhaseControl):
            target = ctrl.target.values
            if mode == "regularized":
                sig = control_term(state, spec, mesh).values
                xi = ops.yosida(pot, spec.eps, ph)
                rhs = ph + dt * (pr.gamma * th - xi - pi_val - spec.rho * sig)
                _check_finite(rhs, t_new)
                ph1 = solve_helmholtz(mesh, pr.nu * dt, rhs, x0=ph)
            else:
                z = ph + dt * (pr.gamma * th - pi_val)
                _check_finite(z, t_new)
                z = solve_helmholtz(mesh, pr.nu * dt, z, x0=ph)
                zr = ops.resolvent(pot, dt, z)
                xi = (z - zr) / dt
                chi = zr - target
                if spec.rho > 0.0:
                    thr = spec.rho * dt
                    if ctrl.nodewise:
                        chi1 = np.sign(chi) * np.maximum(np.abs(chi) - thr, 0.0)
                    else:
                        chi1 = _shrink_l2(chi, mesh.norm_l2(chi), thr)
                    sig = (chi - chi1) / thr
                else:
                    chi1, sig = chi, mesh.zeros()
                ph1 = target + chi1
        else:
            # variant A: phase equation is uncontrolled
            if mode == "regularized":
                xi = ops.yosida(pot, spec.eps, ph)
                rhs = ph + dt * (pr.gamma * th - xi - pi_val)
                _check_finite(rhs, t_new)
                ph1 = solve_helmholtz(mesh, pr.nu * dt, rhs, x0=ph)
            else:
                z = ph + dt * (pr.gamma * th - pi_val)
                _check_finite(z, t_new)
                z = solve_helmholtz(mesh, pr.nu * dt, z, x0=ph)
                ph1 = ops.resolvent(pot, dt, z)
                xi = (z - ph1) / dt
        _check_finite(ph1, t_new)
        dphi = (ph1 - ph) / dt

        # --- energy-balance step ---------------------------------------------
        b = th - dt * pr.ell * dphi
        if f_n is not None:
            b = b + dt * f_n
        if isinstance(ctrl, EnergyControl) and mode == "regularized":
            sig = control_term(state, spec, mesh).values
            b = b - dt * spec.rho * sig
        _check_finite(b, t_new)
        th1 = solve_helmholtz(mesh, pr.kappa * dt, b, x0=th)
        th1 = th1 + (mesh.integrate(b) - mesh.integrate(th1)) / mesh.measure
        if isinstance(ctrl, EnergyControl) and mode == "prox":
            target, alpha = ctrl.target.values, ctrl.alpha
            if spec.rho > 0.0:
                eta = th1 + alpha * ph1 - target
                thr = spec.rho * dt
                eta1 = _shrink_l2(eta, mesh.norm_l2(eta), thr)
                sig = (eta - eta1) / thr
                th1 = eta1 - alpha * ph1 + target
            else:
                sig = mesh.zeros()
        _check_finite(th1, t_new)

    return State(
        t=t_new,
        theta=Field(mesh, th1),
        phi=Field(mesh, ph1),
        last_xi=Field(mesh, np.asarray(xi, float)),
        last_sigma=Field(mesh, np.asarray(sig, float)),
    )


def free_energy(state: State, spec: ProblemSpec, c0_heat: float = 1.0) -> float:
    """Lyapunov-type functional: -c0/2 theta^2 - gamma theta phi + F(phi)
    + nu/2 |grad phi|^2, integrated.  Returns +inf when phi leaves the well's
    effective domain (obstacle or logarithmic).  c0_heat is a diagnostic
    coefficient, default 1.
    """
    mesh = state.theta.mesh
    th, ph = state.theta.values, state.phi.values
    with np.errstate(over="ignore", invalid="ignore"):
        fwell = ops.well_energy(spec.potential, ph)
        if np.any(np.isinf(fwell)):
            return math.inf
        grad_sq = np.zeros_like(ph)
        for ax in range(mesh.dim):
            g = np.gradient(ph, mesh.coords[ax], axis=ax)
            grad_sq = grad_sq + g * g
        integrand = (-0.5 * c0_heat * th * th - spec.params.gamma * th * ph
                     + fwell + 0.5 * spec.params.nu * grad_sq)
        return mesh.integrate(integrand)


@dataclass
class Snapshot:
    t: float
    theta: Field
    phi: Field
    sigma: Field
    xi: Field
    dphi: Optional[Field]  # backward difference ending at t; None at t=0


@dataclass
class Trajectory:
    times: np.ndarray
    psi: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    balance_residual: np.ndarray
    theta_linf: np.ndarray
    phi_linf: np.ndarray
    snapshots: list
    dt: float
    sample_interval: float
    sup_theta_l2: float
    sup_dtheta_l2: float
    sup_dphi_l2: float
    l2t_dtheta: float
    l2t_dphi: float

    COLUMNS = ("t", "psi", "mass", "energy", "balance_residual", "theta_linf", "phi_linf")

    def to_csv(self, path) -> None:
        rows = [",".join(self.COLUMNS)]
        cols = [self.times, self.psi, self.mass, self.energy,
                self.balance_residual, self.theta_linf, self.phi_linf]
        for vals in zip(*cols):
            rows.append(",".join(repr(float(x)) for x in vals))
        with open(path, "w") as fh:
            fh.write("\n".join(rows) + "\n")

    @classmethod
    def from_csv(cls, path, dt: float = math.nan, sample_interval: float = math.nan):
        data = np.genfromtxt(path, delimiter=",", names=True)
        data = np.atleast_1d(data)
        get = lambda name: np.asarray(data[name], float)
        times = get("t")
        if math.isnan(sample_interval):
            sample_interval = float(np.max(np.diff(times))) if times.size > 1 else 0.0
        return cls(times=times, psi=get("psi"), mass=get("mass"), energy=get("energy"),
                   balance_residual=get("balance_residual"), theta_linf=get("theta_linf"),
                   phi_linf=get("phi_linf"), snapshots=[], dt=dt,
                   sample_interval=sample_interval, sup_theta_l2=math.nan,
                   sup_dtheta_l2=math.nan, sup_dphi_l2=math.nan,
                   l2t_dtheta=math.nan, l2t_dphi=math.nan)


def simulate(spec: ProblemSpec, mesh: Mesh, state0: State, T: float, dt: float,
             sample_every: int = 10, snapshots: bool = False,
             snapshot_every: int | None = None) -> Trajectory:
    """Run ceil(T/dt) steps, sampling diagnostics at t=0, every sample_every
    steps, and at the final time.  Deterministic: same inputs, same bytes.
    """
    if not T > 0.0:
        raise ValueError(f"horizon T must be positive, got {T}")
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if sample_every < 1:
        raise ValueError(f"sample_every must be >= 1, got {sample_every}")
    if snapshot_every is None:
        snapshot_every = sample_every
    nsteps = max(1, math.ceil(T / dt - 1e-9))
    pr = spec.params

    times, psi, mass, energy, resid = [], [], [], [], []
    th_linf, ph_linf = [], []
    snaps: list[Snapshot] = []

    f_int = 0.0   # integral of f over time and space, accumulated per step
    s_int = 0.0   # integral of rho*sigma (variant A balance only)
    balance_has_control = isinstance(spec.control, EnergyControl)
    prev_sample = None  # (t, mass, f_int, s_int)

    sup_theta = sup_dth = sup_dph = 0.0
    l2_dth = l2_dph = 0.0

    state = state0

    def record(state: State, k: int, dphi_field: Optional[Field]):
        nonlocal prev_sample
        t = state.t
        m = mesh.integrate(state.theta.values + pr.ell * state.phi.values)
        if prev_sample is None:
            r = 0.0
        else:
            t0, m0, f0, s0 = prev_sample
            span = t - t0
            r = abs((m - m0) - (f_int - f0) + (s_int - s0)) / (span * mesh.measure)
        prev_sample = (t, m, f_int, s_int)
        times.append(t)
        psi.append(manifold_distance(state, spec, mesh))
        mass.append(m)
        energy.append(free_energy(state, spec))
        resid.append(r)
        th_linf.append(float(np.max(np.abs(state.theta.values))))
        ph_linf.append(float(np.max(np.abs(state.phi.values))))
        if snapshots and (k % snapshot_every == 0 or k == nsteps):
            snaps.append(Snapshot(t=t, theta=state.theta, phi=state.phi,
                                  sigma=state.last_sigma, xi=state.last_xi,
                                  dphi=dphi_field))

    with np.errstate(over="ignore", invalid="ignore"):
        record(state, 0, None)
        for k in range(1, nsteps + 1):
            new = step(state, spec, mesh, dt)
            if spec.source is not None:
                f_int += dt * mesh.integrate(spec.source(state.t))
            if balance_has_control:
                s_int += spec.rho * dt * mesh.integrate(new.last_sigma.values)
            dth = (new.theta.values - state.theta.values) / dt
            dph = (new.phi.values - state.phi.values) / dt
            ndth, ndph = mesh.norm_l2(dth), mesh.norm_l2(dph)
            sup_theta = max(sup_theta, mesh.norm_l2(new.theta.values))
            sup_dth = max(sup_dth, ndth)
            sup_dph = max(sup_dph, ndph)
            l2_dth += dt * ndth * ndth
            l2_dph += dt * ndph * ndph
            state = new
            if k % sample_every == 0 or k == nsteps:
                record(state, k, Field(mesh, dph))

    return Trajectory(
        times=np.asarray(times), psi=np.asarray(psi), mass=np.asarray(mass),
        energy=np.asarray(energy), balance_residual=np.asarray(resid),
        theta_linf=np.asarray(th_linf), phi_linf=np.asarray(ph_linf),
        snapshots=snaps, dt=dt, sample_interval=dt * sample_every,
        sup_theta_l2=max(sup_theta, mesh.norm_l2(state0.theta.values)),
        sup_dtheta_l2=sup_dth, sup_dphi_l2=sup_dph,
        l2t_dtheta=math.sqrt(l2_dth), l2t_dphi=math.sqrt(l2_dph),
    )


def balance_residual(traj: Trajectory) -> float:
    """Worst sample-interval violation of the integrated balance law,
    normalized by the domain measure (already folded in per sample)."""
    if traj.balance_residual.size <= 1:
        return 0.0
    return float(np.max(traj.balance_residual[1:]))
