"""Phase-field sliding-mode control laboratory.

Simulates a two-field solidification model (temperature coupled to a phase
variable with a double-well or constrained potential) under three feedback
laws that force the state onto a chosen manifold in finite time, and checks
the observed reaching times against explicit gain thresholds.
"""

from .operators import (
    Potential,
    DomainError,
    convex_energy,
    smooth_energy,
    well_energy,
    smooth_reaction,
    minimal_section,
    resolvent,
    yosida,
    sign_eps_scalar,
    sign_eps_field,
    moreau_norm,
)
from .grid import (
    Mesh,
    Field,
    Norms,
    SolverError,
    const_field,
    laplacian_neumann,
    field_norms,
    solve_helmholtz,
    sign_eps,
    estimate_embedding_constant,
    write_field_csv,
    read_field_csv,
    write_field_binary,
    read_field_binary,
)
from .dynamics import (
    PhysParams,
    EnergyControl,
    PhaseControl,
    ProblemSpec,
    State,
    Snapshot,
    Trajectory,
    InitError,
    BlowUpError,
    default_timestep,
    init_state,
    control_term,
    manifold_distance,
    step,
    simulate,
    free_energy,
    balance_residual,
)
from .bounds import (
    BoundsReport,
    BoundInapplicable,
    VariantCBounds,
    structural_constant,
    smallness_margin,
    estimate_constant,
    rho_t_star_a,
    rho_t_star_b,
    rho_t_star_c,
    build_report,
)
from .extinction import (
    HypothesisViolation,
    ExtinctionMeasurement,
    ExtinctionVerdict,
    extinction_bound,
    measure_extinction,
    check_slope,
    comparison_barrier,
    verify_sliding,
)

__version__ = "0.1.0"

__all__ = [
    "Potential", "DomainError", "convex_energy", "smooth_energy", "well_energy",
    "smooth_reaction", "minimal_section", "resolvent", "yosida",
    "sign_eps_scalar", "sign_eps_field", "moreau_norm",
    "Mesh", "Field", "Norms", "SolverError", "const_field", "laplacian_neumann",
    "field_norms", "solve_helmholtz", "sign_eps", "estimate_embedding_constant",
    "write_field_csv", "read_field_csv", "write_field_binary", "read_field_binary",
    "PhysParams", "EnergyControl", "PhaseControl", "ProblemSpec", "State",
    "Snapshot", "Trajectory", "InitError", "BlowUpError", "default_timestep",
    "init_state", "control_term", "manifold_distance", "step", "simulate",
    "free_energy", "balance_residual",
    "BoundsReport", "BoundInapplicable", "VariantCBounds", "structural_constant",
    "smallness_margin", "estimate_constant", "rho_t_star_a", "rho_t_star_b",
    "rho_t_star_c", "build_report",
    "HypothesisViolation", "ExtinctionMeasurement", "ExtinctionVerdict",
    "extinction_bound", "measure_extinction", "check_slope",
    "comparison_barrier", "verify_sliding",
    "__version__",
]
