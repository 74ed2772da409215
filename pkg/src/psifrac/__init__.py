"""Numerical psi-fractional calculus: operators on psi-uniform meshes, a
fixed-point solver for the nonlocal fractional Langevin boundary problem and
its existence, uniqueness and Ulam-Hyers certificates."""

from __future__ import annotations

from psifrac.certify import (
    Assumptions,
    ExistenceCertificate,
    StabilityReport,
    UniquenessCertificate,
    Variant,
    existence_certificate,
    gronwall_bound,
    uh_bound,
    uhr_bound,
    uniqueness_certificate,
)
from psifrac.langevin import (
    BoundaryMode,
    LangevinProblem,
    SolutionBundle,
    SolverConfig,
    apply_Psi,
    manufactured_problem,
    residual,
    solve_linear,
    solve_picard,
    structural_constants,
)
from psifrac.ops import (
    GridFunction,
    caputo_left,
    continuity_bound_check,
    frac_integral_left,
    frac_integral_right,
    ibp_residual,
    inversion_residual,
)
from psifrac.psi import Domain, Mesh, PsiFunction, PsiKind, build_mesh, make_psi, validate_psi
from psifrac.specfn import MLParams, erf, gamma, mittag_leffler

__all__ = [
    "Assumptions", "BoundaryMode", "Domain", "ExistenceCertificate", "GridFunction",
    "LangevinProblem", "MLParams", "Mesh", "PsiFunction", "PsiKind", "SolutionBundle",
    "SolverConfig", "StabilityReport", "UniquenessCertificate", "Variant", "apply_Psi",
    "build_mesh", "caputo_left", "continuity_bound_check", "erf", "existence_certificate",
    "frac_integral_left", "frac_integral_right", "gamma", "gronwall_bound", "ibp_residual",
    "inversion_residual", "make_psi", "manufactured_problem", "mittag_leffler", "residual",
    "solve_linear", "solve_picard", "structural_constants", "uh_bound", "uhr_bound",
    "uniqueness_certificate", "validate_psi",
]
