"""Two-phase conductivity-jump solver and free-boundary audit toolkit.

Solves div(A(x,u) grad u) = 0 where the conductivity switches between
a_-(x) and a_+(x) across the level set {u = 0}, via ramp regularization,
Picard iteration, and continuation in the ramp width.  The companion
audit modules measure, at desk scale, the analytical machinery attached
to such problems: weighted-energy monotonicity, spherical-cap constants,
free-boundary flux balance, the interface measure, blowup rescalings,
two-plane fitting, the flatness-improvement cascade, and the matrix
conductivity extension.
"""

from condjump.acf import (
    cap_characteristic,
    friedland_hayman_check,
    monotonicity_audit,
    weighted_energy,
)
from condjump.blowup import (
    TwoPlane,
    fit_two_plane,
    flatness_cascade,
    graph_envelope_check,
    harmonic_replacement,
    rescale,
)
from condjump.config import ExperimentConfig, load_config
from condjump.field import (
    CoefficientModel,
    Grid,
    ModulusOfContinuity,
    ScalarField,
    build_grid,
    dump_field,
    gradient_field,
    l2_ball_norm,
    load_field,
    sample_coefficient,
    sample_field,
)
from condjump.freeboundary import (
    BumpTest,
    classify_point,
    extract_level_set,
    flux_balance,
    lipschitz_audit,
    mu_audit,
    perimeter_diagnostic,
)
from condjump.matrixext import MatrixModel, acf_matrix_audit, kappa_check, matrix_problem
from condjump.report import AuditResult, RunReport, emit_report, load_report
from condjump.solver import (
    Solution,
    TwoPhaseProblem,
    continuation_solve,
    picard_solve,
)

__version__ = "0.1.0"

__all__ = [
    "AuditResult",
    "BumpTest",
    "CoefficientModel",
    "ExperimentConfig",
    "Grid",
    "MatrixModel",
    "ModulusOfContinuity",
    "RunReport",
    "ScalarField",
    "Solution",
    "TwoPhaseProblem",
    "TwoPlane",
    "acf_matrix_audit",
    "build_grid",
    "cap_characteristic",
    "classify_point",
    "continuation_solve",
    "dump_field",
    "emit_report",
    "extract_level_set",
    "fit_two_plane",
    "flatness_cascade",
    "flux_balance",
    "friedland_hayman_check",
    "graph_envelope_check",
    "gradient_field",
    "harmonic_replacement",
    "kappa_check",
    "l2_ball_norm",
    "lipschitz_audit",
    "load_config",
    "load_field",
    "load_report",
    "matrix_problem",
    "monotonicity_audit",
    "mu_audit",
    "perimeter_diagnostic",
    "picard_solve",
    "rescale",
    "sample_coefficient",
    "sample_field",
    "weighted_energy",
    "__version__",
]
