"""Galerkin eigenpairs for nonlocal quasilinear operators in
Orlicz-Sobolev discretizations."""

from .errors import (
    AssemblyError,
    ConfigError,
    NonconvergenceError,
    OrliczEigError,
    UnboundedConjugateError,
)
from .young import (
    YoungFunction,
    check_delta2,
    exp_young,
    plog_young,
    power_young,
    tabulated_young,
    tabulated_young_from_csv,
    young_from_spec,
    young_gap,
)
from .orlicz import (
    DiscreteMeasureSpace,
    HolderBound,
    holder_pairing_bound,
    luxemburg_norm,
    modular,
)
from .fracgrid import (
    GalerkinBasis,
    PairQuadrature,
    QuadConfig,
    analytic_nu_mass,
    build_basis,
    build_pair_quadrature,
    holder_quotient,
    region_nu_mass,
    tail_energy_bound,
)
from .kernels import (
    Kernel,
    Source,
    ValidationReport,
    catalog_kernel,
    catalog_source,
    compile_expression,
    expression_kernel,
    symmetrize,
    validate_conditions,
)
from .energy import (
    EnergyContext,
    build_context,
    coercivity_modular,
    energy_A,
    energy_G,
    grad_A,
    grad_G,
    hess_A,
    hess_G,
    mass_matrix,
    monotone_pairing,
    normalize,
    source_pairing,
    stiffness_matrix,
)
from .solver import (
    ConvergenceReport,
    EigenpairResult,
    SolverConfig,
    k_study,
    linear_oracle,
    solve_first,
    solve_sequence,
)

__version__ = "0.1.0"

__all__ = [
    "AssemblyError",
    "ConfigError",
    "ConvergenceReport",
    "DiscreteMeasureSpace",
    "EigenpairResult",
    "EnergyContext",
    "GalerkinBasis",
    "HolderBound",
    "Kernel",
    "NonconvergenceError",
    "OrliczEigError",
    "PairQuadrature",
    "QuadConfig",
    "SolverConfig",
    "Source",
    "UnboundedConjugateError",
    "ValidationReport",
    "YoungFunction",
    "analytic_nu_mass",
    "build_basis",
    "build_context",
    "build_pair_quadrature",
    "catalog_kernel",
    "catalog_source",
    "check_delta2",
    "coercivity_modular",
    "compile_expression",
    "energy_A",
    "energy_G",
    "exp_young",
    "expression_kernel",
    "grad_A",
    "grad_G",
    "hess_A",
    "hess_G",
    "holder_pairing_bound",
    "holder_quotient",
    "k_study",
    "linear_oracle",
    "luxemburg_norm",
    "mass_matrix",
    "modular",
    "monotone_pairing",
    "normalize",
    "plog_young",
    "power_young",
    "region_nu_mass",
    "solve_first",
    "solve_sequence",
    "source_pairing",
    "stiffness_matrix",
    "symmetrize",
    "tabulated_young",
    "tabulated_young_from_csv",
    "tail_energy_bound",
    "validate_conditions",
    "young_from_spec",
    "young_gap",
]
