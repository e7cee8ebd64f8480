"""Projective splitting for monotone inclusions ``0 in T_1 z + ... + T_n z``.

Modules
-------
space      product space with the gamma-weighted metric
operators  backward (prox) and forward (Lipschitz) operators, error injection
solver     the projective-splitting iteration and n=1 reference recursions
rates      rate constants and per-run certificates
problems   seeded instances with independent oracles
cli        ``projsplit`` command-line driver
"""
from .errors import (
    ActivationError,
    ConfigurationError,
    DimensionError,
    MetadataError,
    NonFiniteError,
    ProjSplitError,
    StepsizeError,
)
from .operators import (
    BackwardOperator,
    ErrorInjector,
    ForwardOperator,
    OperatorSlot,
    backward_activate,
    check_error_conditions,
    forward_activate,
    make_affine,
    make_box_indicator,
    make_quadratic_gradient,
    make_scaled_identity,
    make_soft_threshold,
)
from .rates import Certificate, ProblemMeta, RateConstants, certify, compute_constants
from .solver import IterationRecord, ProjectiveSplitting, SolveOutcome, SolverConfig, SolveStatus, solve
from .space import ProductPoint, axpy, gamma_inner, gamma_norm, gamma_norm_sq, wn_of, zero_point

__version__ = "0.1.0"
