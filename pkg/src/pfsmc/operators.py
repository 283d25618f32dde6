"""Double-well potentials and the monotone-operator toolbox.

The phase equation carries a derivative of a double-well potential split as
F = convex part + smooth perturbation.  Three classical choices are supported:

* ``regular``      : F(r) = (r^2 - 1)^2 / 4, convex part r^4/4
* ``logarithmic``  : F(r) = (1+r)log(1+r) + (1-r)log(1-r) - c0 r^2 on (-1, 1)
* ``obstacle``     : F(r) = indicator of [-1, 1] - c0 r^2

The convex part defines a maximal monotone graph (its subdifferential).  This
module provides the graph's minimal section, resolvent and Yosida
approximation, the regularized sign operators (scalar and whole-field), and
the Moreau envelope of the L2 norm.  Everything is vectorized over numpy
arrays; scalar inputs give scalar outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINDS = ("regular", "logarithmic", "obstacle")

# guard for evaluating logs near the +-1 endpoints
LOG_GUARD = 1e-14

ROOT_ATOL = 1e-12
ROOT_MAXITER = 200


class DomainError(ValueError):
    """Argument outside the effective domain of the requested graph."""


@dataclass(frozen=True)
class Potential:
    """Double-well choice plus its quadratic-perturbation coefficient c0.

    c0 is ignored for the regular well.  Defaults: 2.0 (logarithmic, must
    exceed 1) and 1.0 (obstacle, must be positive).
    """

    kind: str
    c0: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}, expected one of {KINDS}")
        if self.c0 is None:
            default = {"regular": 0.0, "logarithmic": 2.0, "obstacle": 1.0}[self.kind]
            object.__setattr__(self, "c0", default)
        if self.kind == "logarithmic" and not self.c0 > 1.0:
            raise ValueError(f"logarithmic well needs c0 > 1, got {self.c0}")
        if self.kind == "obstacle" and not self.c0 > 0.0:
            raise ValueError(f"obstacle well needs c0 > 0, got {self.c0}")

    @property
    def lipschitz(self) -> float:
        """Lipschitz constant of the smooth reaction term."""
        if self.kind == "regular":
            return 1.0
        return 2.0 * self.c0


def _as_array(r):
    a = np.asarray(r, dtype=float)
    return a, (a.ndim == 0)


def _ret(a, scalar):
    return float(a) if scalar else a


def convex_energy(pot: Potential, r):
    """Convex part of the well; +inf outside its effective domain."""
    a, scalar = _as_array(r)
    if pot.kind == "regular":
        out = a**4 / 4.0
    elif pot.kind == "logarithmic":
        out = np.full_like(a, np.inf)
        inside = np.abs(a) <= 1.0
        ai = np.clip(a, -1.0, 1.0)
        # (1+r)log(1+r) extends continuously by 0 at r = -1, likewise at +1
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where(1.0 + ai > 0.0, (1.0 + ai) * np.log(np.maximum(1.0 + ai, LOG_GUARD)), 0.0)
            m = np.where(1.0 - ai > 0.0, (1.0 - ai) * np.log(np.maximum(1.0 - ai, LOG_GUARD)), 0.0)
        out = np.where(inside, p + m, out)
    else:  # obstacle
        out = np.where(np.abs(a) <= 1.0, 0.0, np.inf)
    return _ret(out, scalar)


def smooth_energy(pot: Potential, r):
    """Smooth perturbation part of the well (the concave piece)."""
    a, scalar = _as_array(r)
    if pot.kind == "regular":
        out = -a**2 / 2.0 + 0.25  # constant keeps F(+-1) = 0
    else:
        out = -pot.c0 * a**2
    return _ret(out, scalar)


def well_energy(pot: Potential, r):
    """Full double-well value F(r) = convex part + smooth part."""
    a, scalar = _as_array(r)
    return _ret(convex_energy(pot, a) + smooth_energy(pot, a), scalar)


def smooth_reaction(pot: Potential, r):
    """Derivative of the smooth part and its own derivative: (pi(r), pi'(r))."""
    a, scalar = _as_array(r)
    if pot.kind == "regular":
        val, der = -a, np.full_like(a, -1.0)
    else:
        val, der = -2.0 * pot.c0 * a, np.full_like(a, -2.0 * pot.c0)
    return _ret(val, scalar), _ret(der, scalar)


def minimal_section(pot: Potential, r):
    """Element of least modulus of the monotone graph at r.

    Domain errors: |r| >= 1 for the logarithmic graph (subdifferential empty
    at the endpoints), |r| > 1 for the obstacle graph.
    """
    a, scalar = _as_array(r)
    if pot.kind == "regular":
        return _ret(a**3, scalar)
    if pot.kind == "logarithmic":
        if np.any(np.abs(a) >= 1.0):
            raise DomainError("logarithmic graph has empty subdifferential for |r| >= 1")
        return _ret(np.log1p(a) - np.log1p(-a), scalar)
    if np.any(np.abs(a) > 1.0):
        raise DomainError("obstacle graph is empty for |r| > 1")
    # inside [-1,1] the least-modulus element is 0 (at the endpoints 0 is admissible)
    return _ret(np.zeros_like(a), scalar)


def _newton_bisect(f, fprime, lo, hi, x0):
    """Vectorized safeguarded Newton on a monotone function with bracket [lo, hi].

    Newton steps that leave the bracket fall back to bisection.  Stops when
    |f(x)| <= ROOT_ATOL everywhere or the iteration budget runs out.
    """
    x = np.array(x0, dtype=float)
    lo = np.array(np.broadcast_to(lo, x.shape), dtype=float)
    hi = np.array(np.broadcast_to(hi, x.shape), dtype=float)
    for _ in range(ROOT_MAXITER):
        fx = f(x)
        if np.all(np.abs(fx) <= ROOT_ATOL):
            break
        # maintain bracket: f is increasing
        lo = np.where(fx < 0.0, x, lo)
        hi = np.where(fx > 0.0, x, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - fx / fprime(x)
        bad = ~np.isfinite(xn) | (xn <= lo) | (xn >= hi)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        x = np.where(np.abs(fx) > ROOT_ATOL, xn, x)
    return x


def resolvent(pot: Potential, eps: float, r):
    """Solve x + eps*beta(x) contains r; single-valued for maximal monotone beta."""
    if not eps > 0.0:
        raise ValueError(f"resolvent needs eps > 0, got {eps}")
    a, scalar = _as_array(r)
    if pot.kind == "obstacle":
        return _ret(np.clip(a, -1.0, 1.0), scalar)
    if pot.kind == "regular":
        x = _newton_bisect(
            lambda x: x + eps * x**3 - a,
            lambda x: 1.0 + 3.0 * eps * x**2,
            np.minimum(a, 0.0) - 1.0,
            np.maximum(a, 0.0) + 1.0,
            a / (1.0 + eps * np.maximum(a * a, 1.0)),
        )
        return _ret(x, scalar)
    # logarithmic: root lies strictly inside (-1, 1) for every real r
    b = 1.0 - LOG_GUARD

    def f(x):
        return x + eps * (np.log1p(x) - np.log1p(-x)) - a

    def fp(x):
        return 1.0 + eps * (1.0 / (1.0 + x) + 1.0 / (1.0 - x))

    x = _newton_bisect(f, fp, -b, b, np.clip(a, -0.5, 0.5))
    return _ret(x, scalar)


def yosida(pot: Potential, eps: float, r):
    """Yosida approximation of the graph: (r - resolvent(r)) / eps."""
    a, scalar = _as_array(r)
    return _ret((a - resolvent(pot, eps, a)) / eps, scalar)


def sign_eps_scalar(eps: float, r):
    """Pointwise regularized sign: r/|r| outside the eps-ball, r/eps inside."""
    if not eps > 0.0:
        raise ValueError(f"sign_eps_scalar needs eps > 0, got {eps}")
    a, scalar = _as_array(r)
    return _ret(np.clip(a / eps, -1.0, 1.0), scalar)


def sign_eps_field(v: np.ndarray, v_norm: float, eps: float) -> np.ndarray:
    """Field-level regularized sign: v / max(eps, ||v||).

    ``v_norm`` must be the L2(domain) norm of ``v`` under the caller's
    quadrature; keeping the norm an input keeps this module mesh-free.
    """
    if not eps > 0.0:
        raise ValueError(f"sign_eps_field needs eps > 0, got {eps}")
    return np.asarray(v, dtype=float) / max(eps, float(v_norm))


def moreau_norm(v_norm: float, eps: float) -> float:
    """Moreau envelope of the L2 norm evaluated at a field of norm v_norm.

    Equals v^2/(2 eps) for v <= eps and v - eps/2 beyond; its gradient is the
    field-level regularized sign.
    """
    if not eps > 0.0:
        raise ValueError(f"moreau_norm needs eps > 0, got {eps}")
    v = float(v_norm)
    if v < 0.0:
        raise ValueError("v_norm is a norm, cannot be negative")
    if v <= eps:
        return v * v / (2.0 * eps)
    return v - eps / 2.0
