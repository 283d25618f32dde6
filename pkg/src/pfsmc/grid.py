"""Uniform box meshes, Neumann Laplacian, norms, and field IO.

Meshes are axis-aligned boxes [0,L1]x...x[0,Ld] (d = 1,2,3) with nodes on a
uniform grid including the boundary, at least 3 nodes per axis.  Integrals
use trapezoidal quadrature (half weights on boundary nodes), which makes the
reflected-ghost Laplacian below exactly self-adjoint and exactly mean-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .operators import sign_eps_field


class SolverError(RuntimeError):
    """Linear solver failed to reach tolerance within its iteration budget."""


@dataclass(eq=True)
class Mesh:
    lengths: tuple
    counts: tuple
    # derived, filled in __post_init__
    dim: int = dc_field(init=False, compare=False, repr=False, default=0)
    spacings: tuple = dc_field(init=False, compare=False, repr=False, default=())
    measure: float = dc_field(init=False, compare=False, repr=False, default=0.0)
    coords: tuple = dc_field(init=False, compare=False, repr=False, default=())
    weights: np.ndarray = dc_field(init=False, compare=False, repr=False, default=None)

    def __post_init__(self):
        self.lengths = tuple(float(L) for L in self.lengths)
        self.counts = tuple(int(n) for n in self.counts)
        self.dim = len(self.counts)
        if not 1 <= self.dim <= 3:
            raise ValueError(f"mesh dimension must be 1, 2 or 3, got {self.dim}")
        if len(self.lengths) != self.dim:
            raise ValueError("lengths and counts must have the same number of axes")
        if any(L <= 0 for L in self.lengths):
            raise ValueError(f"box lengths must be positive, got {self.lengths}")
        if any(n < 3 for n in self.counts):
            raise ValueError(f"need at least 3 nodes per axis, got {self.counts}")
        self.spacings = tuple(L / (n - 1) for L, n in zip(self.lengths, self.counts))
        self.measure = math.prod(self.lengths)
        self.coords = tuple(np.linspace(0.0, L, n) for L, n in zip(self.lengths, self.counts))
        weights = 1.0
        for ax in range(self.dim):
            w_ax = np.full(self.counts[ax], self.spacings[ax])
            w_ax[0] *= 0.5
            w_ax[-1] *= 0.5
            shape = [1] * self.dim
            shape[ax] = self.counts[ax]
            weights = weights * w_ax.reshape(shape)
        self.weights = weights

    def meshgrid(self):
        """Coordinate arrays broadcast to the full node shape."""
        return np.meshgrid(*self.coords, indexing="ij")

    def zeros(self) -> np.ndarray:
        return np.zeros(self.counts)

    def integrate(self, v) -> float:
        return float((np.asarray(v) * self.weights).sum())

    def inner(self, u, v) -> float:
        return float((np.asarray(u) * np.asarray(v) * self.weights).sum())

    def norm_l2(self, v) -> float:
        return math.sqrt(max(self.inner(v, v), 0.0))


@dataclass
class Field:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != tuple(self.mesh.counts):
            raise ValueError(
                f"field shape {self.values.shape} does not match mesh counts {self.mesh.counts}"
            )

    @property
    def v(self) -> np.ndarray:
        return self.values


def const_field(mesh: Mesh, value: float) -> Field:
    return Field(mesh, np.full(mesh.counts, float(value)))


def laplacian_neumann(mesh: Mesh, v: np.ndarray) -> np.ndarray:
    """Second-order Laplacian with homogeneous Neumann walls (reflected ghosts).

    Self-adjoint in the trapezoid inner product and exactly mean-free:
    integrate(laplacian(v)) == 0 for every v.
    """
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    for ax in range(mesh.dim):
        h2 = mesh.spacings[ax] ** 2
        vm = np.moveaxis(v, ax, 0)
        om = np.moveaxis(out, ax, 0)
        om[1:-1] += (vm[2:] - 2.0 * vm[1:-1] + vm[:-2]) / h2
        om[0] += 2.0 * (vm[1] - vm[0]) / h2
        om[-1] += 2.0 * (vm[-2] - vm[-1]) / h2
    return out


@dataclass(frozen=True)
class Norms:
    l2: float
    linf: float
    h1: float
    wnorm: float


def field_norms(mesh: Mesh, v: np.ndarray) -> Norms:
    """L2, sup, first-order, and curvature-weighted norms of a nodal field.

    wnorm^2 = l2^2 + |domain|^(4/3) * ||laplacian||_L2^2, the norm controlling
    the sup-norm embedding used by the gain bounds.
    """
    v = np.asarray(v, dtype=float)
    l2 = mesh.norm_l2(v)
    linf = float(np.max(np.abs(v))) if v.size else 0.0
    grad_sq = 0.0
    for ax in range(mesh.dim):
        g = np.gradient(v, mesh.coords[ax], axis=ax)
        grad_sq += mesh.inner(g, g)
    h1 = math.sqrt(l2 * l2 + grad_sq)
    lap = laplacian_neumann(mesh, v)
    wnorm = math.sqrt(l2 * l2 + mesh.measure ** (4.0 / 3.0) * mesh.inner(lap, lap))
    return Norms(l2=l2, linf=linf, h1=h1, wnorm=wnorm)


def solve_helmholtz(mesh: Mesh, c: float, b: np.ndarray, x0=None,
                    tol: float = 1e-10, maxiter: int | None = None) -> np.ndarray:
    """Conjugate gradients for (I - c*laplacian) x = b, c >= 0.

    The operator is symmetric positive definite in the trapezoid inner
    product, so CG runs in that inner product.  Converges when the residual
    norm drops below tol * max(||b||, 1e-300); raises SolverError otherwise.
    """
    if c < 0.0:
        raise ValueError(f"diffusion scale must be nonnegative, got {c}")
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise SolverError("right-hand side contains non-finite values")
    w = mesh.weights

    def dot(u, q):
        return float((u * q * w).sum())

    def apply(x):
        return x - c * laplacian_neumann(mesh, x)

    scale = float(np.max(np.abs(b)))
    if scale > 1e100:
        # keep inner products away from overflow; solutions scale linearly
        x0 = None if x0 is None else np.asarray(x0, dtype=float) / scale
        return scale * solve_helmholtz(mesh, c, b / scale, x0=x0,
                                       tol=tol, maxiter=maxiter)

    x = mesh.zeros() if x0 is None else np.array(x0, dtype=float)
    r = b - apply(x)
    target = tol * max(math.sqrt(dot(b, b)), 1e-300)
    rs = dot(r, r)
    if math.sqrt(rs) <= target:
        return x
    p = r.copy()
    n = b.size
    if maxiter is None:
        maxiter = 50 * n + 100
    for _ in range(maxiter):
        ap = apply(p)
        alpha = rs / dot(p, ap)
        x = x + alpha * p
        r = r - alpha * ap
        rs_new = dot(r, r)
        if math.sqrt(rs_new) <= target:
            return x
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise SolverError(f"CG did not reach tol={tol} in {maxiter} iterations")


def sign_eps(mesh: Mesh, v: np.ndarray, eps: float) -> np.ndarray:
    """Field-level regularized sign under the mesh's L2 norm."""
    return sign_eps_field(v, mesh.norm_l2(v), eps)


def _band_modes(mesh: Mesh, kmax: int):
    """Tensor cosine modes with per-axis frequency 0..kmax (Neumann-compatible)."""
    grids = mesh.meshgrid()
    axis_modes = []
    for ax in range(mesh.dim):
        L = mesh.lengths[ax]
        axis_modes.append([np.cos(k * np.pi * grids[ax] / L) for k in range(kmax + 1)])
    modes = []
    ks = np.ndindex(*([kmax + 1] * mesh.dim))
    for kt in ks:
        m = 1.0
        for ax, k in enumerate(kt):
            m = m * axis_modes[ax][k]
        modes.append(np.asarray(m))
    return modes


def estimate_embedding_constant(mesh: Mesh, samples: int = 200, seed: int = 0,
                                kmax: int = 5) -> float:
    """Empirical lower estimate of sup ||v||_inf / ||v||_wnorm over smooth fields.

    Maximizes the ratio over random band-limited fields (tensor cosine modes,
    frequencies <= kmax per axis) followed by coordinate hill-climbing on the
    best candidate.  Deterministic for a given seed.  The true constant of the
    continuous embedding can only be larger on smooth fields, so treat the
    output as a reproducible lower estimate, not a certified constant.  The
    constant-field ratio |domain|^(-1/2) is always included as a candidate.
    """
    rng = np.random.default_rng(seed)
    modes = _band_modes(mesh, kmax)
    nm = len(modes)
    decay = np.array([1.0 / (1.0 + float(i)) for i in range(nm)])

    def ratio(coeffs):
        vfield = np.zeros(mesh.counts)
        for ci, m in zip(coeffs, modes):
            if ci != 0.0:
                vfield = vfield + ci * m
        nrm = field_norms(mesh, vfield)
        if nrm.wnorm == 0.0:
            return 0.0, vfield
        return nrm.linf / nrm.wnorm, vfield

    best_c = np.zeros(nm)
    best_c[0] = 1.0  # constant candidate, ratio = measure^(-1/2)
    best_r, _ = ratio(best_c)
    for _ in range(max(samples, 1)):
        c = rng.standard_normal(nm) * decay
        r, _ = ratio(c)
        if r > best_r:
            best_r, best_c = r, c
    # greedy coordinate refinement
    step = 0.25 * float(np.max(np.abs(best_c)) or 1.0)
    c = best_c.copy()
    for it in range(60 * nm):
        j = int(rng.integers(nm))
        delta = step * float(rng.standard_normal())
        cand = c.copy()
        cand[j] += delta
        r, _ = ratio(cand)
        if r > best_r:
            best_r, c = r, cand
        if (it + 1) % (10 * nm) == 0:
            step *= 0.5
    return best_r


# ---------------------------------------------------------------------------
# field serialization

_CSV_COORD_NAMES = ("x", "y", "z")


def write_field_csv(f: Field, path) -> None:
    """One row per node: coordinates then value, row-major node order."""
    mesh = f.mesh
    grids = mesh.meshgrid()
    cols = [g.ravel(order="C") for g in grids] + [f.values.ravel(order="C")]
    header = ",".join(_CSV_COORD_NAMES[: mesh.dim] + ("value",))
    lines = [header]
    for row in zip(*cols):
        lines.append(",".join(repr(float(c)) for c in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field_csv(path) -> Field:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        dim = len(header) - 1
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != dim + 1:
        raise ValueError(f"{path}: expected {dim + 1} columns, got {data.shape[1]}")
    axes = [np.unique(data[:, ax]) for ax in range(dim)]
    counts = tuple(len(a) for a in axes)
    if math.prod(counts) != data.shape[0]:
        raise ValueError(f"{path}: rows do not form a full tensor grid")
    lengths = tuple(float(a[-1]) for a in axes)
    mesh = Mesh(lengths, counts)
    values = data[:, -1].reshape(counts, order="C")
    return Field(mesh, values)


_BIN_MAGIC = b"PFF1"


def write_field_binary(f: Field, path) -> None:
    """Header: magic, int32 dim, int32 counts, float64 spacings; then
    little-endian float64 payload in row-major node order."""
    mesh = f.mesh
    with open(path, "wb") as fh:
        fh.write(_BIN_MAGIC)
        fh.write(np.asarray([mesh.dim], dtype="<i4").tobytes())
        fh.write(np.asarray(mesh.counts, dtype="<i4").tobytes())
        fh.write(np.asarray(mesh.spacings, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_field_binary(path) -> Field:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _BIN_MAGIC:
            raise ValueError(f"{path}: not a field binary (bad magic {magic!r})")
        dim = int(np.frombuffer(fh.read(4), dtype="<i4")[0])
        if not 1 <= dim <= 3:
            raise ValueError(f"{path}: bad dimension {dim}")
        counts = tuple(int(n) for n in np.frombuffer(fh.read(4 * dim), dtype="<i4"))
        spacings = np.frombuffer(fh.read(8 * dim), dtype="<f8")
        payload = np.frombuffer(fh.read(), dtype="<f8")
    if payload.size != math.prod(counts):
        raise ValueError(f"{path}: payload size {payload.size} does not match counts {counts}")
    lengths = tuple(float(h * (n - 1)) for h, n in zip(spacings, counts))
    mesh = Mesh(lengths, counts)
    return Field(mesh, payload.reshape(counts, order="C").copy())
