"""Run configuration: TOML schema, field expressions, resolved-config output.

A run is described by one TOML file.  Initial data, targets and the source
term are given either as expressions in the coordinates (and t for the
source) or as "@path" references to field CSV files relative to the config.
Parsing applies defaults and validates every entry, naming the offending
key; the fully resolved dictionary is kept so runs can write back a
config.resolved.toml whose bytes identify the run.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

try:
    import tomllib  # py311+
except ModuleNotFoundError:
    import tomli as tomllib

from .dynamics import EnergyControl, PhaseControl, PhysParams, ProblemSpec, MODES
from .grid import Field, Mesh, read_field_csv
from .operators import KINDS, Potential


class ConfigError(ValueError):
    """A config entry is missing, malformed, or out of range."""


_EXPR_NAMES = {
    "pi": np.pi, "e": np.e,
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "tanh": np.tanh,
    "sinh": np.sinh, "cosh": np.cosh, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "sign": np.sign,
    "minimum": np.minimum, "maximum": np.maximum, "where": np.where,
    "clip": np.clip,
}


def _compile_expr(expr: str, where: str):
    if "__" in expr:
        raise ConfigError(f"{where}: double underscores are not allowed in expressions")
    try:
        return compile(expr, f"<{where}>", "eval")
    except SyntaxError as exc:
        raise ConfigError(f"{where}: {exc.msg}") from None


def evaluate_field(expr: str, mesh: Mesh, where: str, base_dir: str = ".") -> np.ndarray:
    """Expression in x[, y, z] -> array on the mesh; "@path" loads a CSV field."""
    if expr.startswith("@"):
        path = os.path.join(base_dir, expr[1:])
        try:
            f = read_field_csv(path)
        except OSError as exc:
            raise ConfigError(f"{where}: cannot read {path}: {exc}") from None
        if f.mesh != mesh:
            raise ConfigError(f"{where}: field in {path} lives on a different mesh")
        return f.values
    code = _compile_expr(expr, where)
    ns = dict(_EXPR_NAMES)
    for axis, arr in zip("xyz", mesh.meshgrid()):
        ns[axis] = arr
    try:
        out = eval(code, {"__builtins__": {}}, ns)
    except Exception as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return np.broadcast_to(np.asarray(out, dtype=float), mesh.counts).copy()


def compile_source(expr: str, mesh: Mesh, where: str) -> Callable[[float], np.ndarray]:
    """Expression in t and x[, y, z] -> callable t -> array on the mesh."""
    code = _compile_expr(expr, where)
    base = dict(_EXPR_NAMES)
    for axis, arr in zip("xyz", mesh.meshgrid()):
        base[axis] = arr

    def source(t: float) -> np.ndarray:
        ns = dict(base)
        ns["t"] = t
        try:
            out = eval(code, {"__builtins__": {}}, ns)
        except Exception as exc:
            raise ConfigError(f"{where}: {exc} (at t={t})") from None
        return np.broadcast_to(np.asarray(out, dtype=float), mesh.counts).copy()

    return source


def _section(doc: dict, name: str) -> dict:
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return dict(sec)


_REQUIRED = object()


def _take(sec: dict, section: str, key: str, types, default=_REQUIRED):
    if key in sec:
        v = sec.pop(key)
    elif default is not _REQUIRED:
        v = default
    else:
        raise ConfigError(f"[{section}].{key} is required")
    if v is not None and not isinstance(v, types):
        want = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
        raise ConfigError(f"[{section}].{key} must be {want}, got {type(v).__name__}")
    return v


def _no_extras(sec: dict, section: str):
    if sec:
        raise ConfigError(f"[{section}] has unknown keys: {', '.join(sorted(sec))}")


def _positive(v, section, key):
    if not v > 0:
        raise ConfigError(f"[{section}].{key} must be positive, got {v}")
    return v


@dataclass
class RunConfig:
    name: str
    mesh: Mesh
    params: PhysParams
    potential: Potential
    variant: str
    rho: float
    eps: float
    mode: str
    alpha: Optional[float]
    pilot_rho: float
    theta0_expr: str
    phi0_expr: str
    target_expr: str
    source_expr: Optional[str]
    T: float
    dt: float
    sample_every: int
    snapshot_every: int
    want_snapshots: bool
    sliding_tol: float
    comparison_tol: float
    check_decreasing_sq: bool
    embedding_samples: int
    seed: int
    c_omega_override: Optional[float]
    out_dir: Optional[str]
    sweep: Optional[dict]
    resolved: dict
    base_dir: str

    def control(self):
        tv = evaluate_field(self.target_expr, self.mesh, "[data].target", self.base_dir)
        target = Field(self.mesh, tv)
        if self.variant == "A":
            return EnergyControl(alpha=self.alpha, target=target)
        return PhaseControl(target=target, nodewise=(self.variant == "C"))

    def spec(self, rho: Optional[float] = None) -> ProblemSpec:
        source = None
        if self.source_expr is not None:
            source = compile_source(self.source_expr, self.mesh, "[data].source")
        return ProblemSpec(params=self.params, potential=self.potential,
                           control=self.control(), rho=self.rho if rho is None else rho,
                           eps=self.eps, mode=self.mode, source=source)

    def initial_fields(self):
        th = evaluate_field(self.theta0_expr, self.mesh, "[data].theta0", self.base_dir)
        ph = evaluate_field(self.phi0_expr, self.mesh, "[data].phi0", self.base_dir)
        return Field(self.mesh, th), Field(self.mesh, ph)

    def resolved_toml(self) -> str:
        return emit_toml(self.resolved)


def parse_config_dict(doc: dict, base_dir: str = ".") -> RunConfig:
    doc = {k: v for k, v in doc.items()}

    sec = _section(doc, "mesh")
    lengths = _take(sec, "mesh", "lengths", list)
    counts = _take(sec, "mesh", "counts", list)
    _no_extras(sec, "mesh")
    try:
        mesh = Mesh(lengths=tuple(lengths), counts=tuple(counts))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[mesh]: {exc}") from None

    sec = _section(doc, "physics")
    vals = {}
    for key in ("ell", "kappa", "nu", "gamma"):
        vals[key] = _positive(float(_take(sec, "physics", key, (int, float), 1.0)),
                              "physics", key)
    _no_extras(sec, "physics")
    params = PhysParams(**vals)

    sec = _section(doc, "potential")
    kind = _take(sec, "potential", "kind", str, "regular")
    if kind not in KINDS:
        raise ConfigError(f"[potential].kind must be one of {KINDS}, got {kind!r}")
    c0 = _take(sec, "potential", "c0", (int, float), None)
    _no_extras(sec, "potential")
    try:
        potential = Potential(kind, None if c0 is None else float(c0))
    except ValueError as exc:
        raise ConfigError(f"[potential]: {exc}") from None

    sec = _section(doc, "problem")
    variant = _take(sec, "problem", "variant", str)
    if variant not in ("A", "B", "C"):
        raise ConfigError(f"[problem].variant must be A, B or C, got {variant!r}")
    rho = float(_take(sec, "problem", "rho", (int, float)))
    if rho < 0:
        raise ConfigError(f"[problem].rho must be nonnegative, got {rho}")
    eps = _positive(float(_take(sec, "problem", "eps", (int, float), 1e-8)),
                    "problem", "eps")
    mode = _take(sec, "problem", "mode", str, "prox")
    if mode not in MODES:
        raise ConfigError(f"[problem].mode must be one of {MODES}, got {mode!r}")
    alpha = _take(sec, "problem", "alpha", (int, float), None)
    if variant == "A":
        if alpha is None:
            raise ConfigError("[problem].alpha is required for variant A")
        alpha = _positive(float(alpha), "problem", "alpha")
    elif alpha is not None:
        raise ConfigError("[problem].alpha only applies to variant A")
    pilot_rho = _positive(float(_take(sec, "problem", "pilot_rho", (int, float), 1.0)),
                          "problem", "pilot_rho")
    _no_extras(sec, "problem")

    sec = _section(doc, "data")
    theta0 = _take(sec, "data", "theta0", str)
    phi0 = _take(sec, "data", "phi0", str)
    target = _take(sec, "data", "target", str, "0.0")
    source = _take(sec, "data", "source", str, None)
    _no_extras(sec, "data")

    sec = _section(doc, "time")
    T = _positive(float(_take(sec, "time", "T", (int, float))), "time", "T")
    dt = _positive(float(_take(sec, "time", "dt", (int, float))), "time", "dt")
    if dt > T:
        raise ConfigError(f"[time].dt must not exceed T, got dt={dt} > T={T}")
    sample_every = int(_take(sec, "time", "sample_every", int, 10))
    _positive(sample_every, "time", "sample_every")
    snapshot_every = int(_take(sec, "time", "snapshot_every", int, 0))
    if snapshot_every < 0:
        raise ConfigError("[time].snapshot_every must be nonnegative")
    _no_extras(sec, "time")

    sec = _section(doc, "output")
    name = _take(sec, "output", "name", str, "run")
    if not name or any(c in name for c in "/\\"):
        raise ConfigError(f"[output].name must be a plain directory name, got {name!r}")
    out_dir = _take(sec, "output", "dir", str, None)
    want_snapshots = bool(_take(sec, "output", "snapshots", bool, True))
    _no_extras(sec, "output")

    sec = _section(doc, "tolerances")
    sliding_tol = _positive(float(_take(sec, "tolerances", "sliding_tol",
                                        (int, float), 1e-9)), "tolerances", "sliding_tol")
    comparison_tol = _positive(float(_take(sec, "tolerances", "comparison_tol",
                                           (int, float), 1e-6)), "tolerances", "comparison_tol")
    check_sq = bool(_take(sec, "tolerances", "check_decreasing_sq", bool, False))
    _no_extras(sec, "tolerances")

    sec = _section(doc, "bounds")
    embedding_samples = int(_take(sec, "bounds", "embedding_samples", int, 200))
    _positive(embedding_samples, "bounds", "embedding_samples")
    seed = int(_take(sec, "bounds", "seed", int, 0))
    c_omega = _take(sec, "bounds", "c_omega", (int, float), None)
    if c_omega is not None:
        c_omega = _positive(float(c_omega), "bounds", "c_omega")
    _no_extras(sec, "bounds")

    sweep = doc.pop("sweep", None)
    if sweep is not None and not isinstance(sweep, dict):
        raise ConfigError("[sweep] must be a table")

    known = {"mesh", "physics", "potential", "problem", "data", "time",
             "output", "tolerances", "bounds", "sweep"}
    extras = set(doc) - known
    if extras:
        raise ConfigError(f"unknown sections: {', '.join(sorted(extras))}")

    resolved = {
        "mesh": {"lengths": list(mesh.lengths), "counts": list(mesh.counts)},
        "physics": {"ell": params.ell, "kappa": params.kappa,
                    "nu": params.nu, "gamma": params.gamma},
        "potential": {"kind": potential.kind, "c0": potential.c0},
        "problem": {"variant": variant, "rho": rho, "eps": eps, "mode": mode,
                    "pilot_rho": pilot_rho,
                    **({"alpha": alpha} if alpha is not None else {})},
        "data": {"theta0": theta0, "phi0": phi0, "target": target,
                 **({"source": source} if source is not None else {})},
        "time": {"T": T, "dt": dt, "sample_every": sample_every,
                 "snapshot_every": snapshot_every},
        "output": {"name": name, "snapshots": want_snapshots,
                   **({"dir": out_dir} if out_dir is not None else {})},
        "tolerances": {"sliding_tol": sliding_tol, "comparison_tol": comparison_tol,
                       "check_decreasing_sq": check_sq},
        "bounds": {"embedding_samples": embedding_samples, "seed": seed,
                   **({"c_omega": c_omega} if c_omega is not None else {})},
        **({"sweep": sweep} if sweep is not None else {}),
    }

    cfg = RunConfig(
        name=name, mesh=mesh, params=params, potential=potential,
        variant=variant, rho=rho, eps=eps, mode=mode, alpha=alpha,
        pilot_rho=pilot_rho, theta0_expr=theta0, phi0_expr=phi0,
        target_expr=target, source_expr=source, T=T, dt=dt,
        sample_every=sample_every, snapshot_every=snapshot_every,
        want_snapshots=want_snapshots, sliding_tol=sliding_tol,
        comparison_tol=comparison_tol, check_decreasing_sq=check_sq,
        embedding_samples=embedding_samples, seed=seed,
        c_omega_override=c_omega, out_dir=out_dir, sweep=sweep,
        resolved=resolved, base_dir=base_dir,
    )
    # fail fast on bad expressions and domain violations
    cfg.initial_fields()
    cfg.spec()
    return cfg


def parse_config(path: str) -> RunConfig:
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    with fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return parse_config_dict(doc, base_dir=os.path.dirname(os.path.abspath(path)))


def _toml_scalar(v, where: str) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(x, where) for x in v) + "]"
    raise ConfigError(f"{where}: cannot serialize {type(v).__name__}")


def emit_toml(doc: dict) -> str:
    """Serialize a two-level dict of plain scalars/lists; sections and keys
    sorted so equal configs yield identical bytes."""
    lines = []
    for section in sorted(doc):
        body = doc[section]
        if body is None:
            continue
        lines.append(f"[{section}]")
        for key in sorted(body):
            if body[key] is None:
                continue
            lines.append(f"{key} = {_toml_scalar(body[key], f'[{section}].{key}')}")
        lines.append("")
    return "\n".join(lines)
