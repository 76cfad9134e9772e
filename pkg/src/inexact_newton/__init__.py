"""Inexact Newton iteration with a relative residual tolerance, certified by majorant functions."""

from .majorant import (
    Certificate,
    CertificateError,
    DomainError,
    MajorantError,
    MajorantFunction,
    derive_certificate,
    make_canonical,
    quadratic,
    self_concordant,
    shift_majorant,
    smale,
    validate_majorant,
)
from .norms import NormSpec
from .problems import ProblemSpec, builtin_corpus, load_problem
from .scalar import MajorantState, majorant_sequence, n_theta_step, omega_contains
from .solver import (
    EnvelopeViolation,
    IterationTrace,
    OperatorProblem,
    SolveConfig,
    StepFailure,
    adaptive_theta_solve,
    inexact_newton_solve,
    residual_controlled_step,
)
from .verifier import ProbeReport, check_trace, probe_banach_bound, probe_linearization_bounds, probe_residual_envelope

__all__ = [name for name in dir() if not name.startswith("_")]
