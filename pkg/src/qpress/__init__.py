"""Quadratic pressure on full shifts and limits of Curie-Weiss type Gibbs measures."""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    FlatMaximumError,
    FormatError,
    LengthError,
    NumericError,
    QPressError,
    RangeError,
    ResolutionError,
    UsageError,
)
from .kernels import BACKEND
from .measures import MarkovMeasure, MixtureMeasure, ProductMeasure, SpectralMeasure, variational_value
from .models import (
    cw_solution,
    cw_pressure_closed,
    cwp_beta_c,
    cwp_critical_points,
    cwp_hessian_eigs,
    cwp_limit_cylinder,
    cwp_s,
    cwp_solution,
)
from .oracle import (
    PgmQuery,
    convergence_report,
    evaluate,
    pgm_cw_collapse,
    pgm_cwp_collapse,
    pgm_exact,
    pgm_quadrature,
)
from .quadratic import (
    QuadraticSolution,
    find_maxima,
    laplace_order,
    legendre_hbar,
    limit_measure,
    phi_os,
    solve_quadratic,
)
from .symbolic import (
    CW_ALPHABET,
    Alphabet,
    LocallyConstantPotential,
    birkhoff_sum,
    cw_potential,
    hamiltonian,
    potts_indicator,
    random_potential,
)
from .transfer import SpectralData, build_transfer, gibbs_constant, pressure, spectral
