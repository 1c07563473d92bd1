"""Sinkhorn-Knopp matrix scaling, entropic OT and the tools around them."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    Marginals, ScalingInstance, SkResult, SkState, SkTrace, TraceRecord, TRACE_HEADER,
    accuracy_alpha, iterate_states, marginal_error_l1, nu, sk_run, sk_step,
)
from .diagnostics import best_rho, density, diagnose, scalability_check, well_bounded  # noqa: E402
from .eot import (  # noqa: E402
    EotProblem, build_kernel, logsumexp_normalize, prescale, sk_run_log, solve_eot, solve_scaling,
)
from .permanent import permanent, permanent_trace  # noqa: E402
from .reduction import discretize, expand, recover_dense, verify_equivalence  # noqa: E402

__all__ = [
    "Marginals", "ScalingInstance", "SkResult", "SkState", "SkTrace", "TraceRecord", "TRACE_HEADER",
    "accuracy_alpha", "iterate_states", "marginal_error_l1", "nu", "sk_run", "sk_step",
    "best_rho", "density", "diagnose", "scalability_check", "well_bounded",
    "EotProblem", "build_kernel", "logsumexp_normalize", "prescale", "sk_run_log", "solve_eot",
    "solve_scaling", "permanent", "permanent_trace", "discretize", "expand", "recover_dense",
    "verify_equivalence",
]
